#include "oodrecon/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "oodrecon/error.hpp"
#include "oodrecon/parallel.hpp"
#include "oodrecon/projection.hpp"
#include "oodrecon/rng.hpp"

namespace oodrecon::generator {

namespace {

void renormalize(LatentCode& z) {
  double norm2 = 0.0;
  for (float v : z) norm2 += static_cast<double>(v) * v;
  if (norm2 == 0.0) {
    z[0] = 1.0f;
    norm2 = 1.0;
  }
  const double scale = std::sqrt(static_cast<double>(z.size()) / norm2);
  for (auto& v : z) v = static_cast<float>(v * scale);
}

std::vector<float> flip_horizontal(const std::vector<float>& img, int w, int h) {
  std::vector<float> out(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<std::size_t>(y) * w + x] =
          img[static_cast<std::size_t>(y) * w + (w - 1 - x)];
  return out;
}

}  // namespace

TrainState train_glo(const std::vector<ImageGrid>& corpus,
                     const GeneratorConfig& config, const TrainHyper& hyper) {
  config.validate();
  if (corpus.empty()) fail(ErrorKind::invalid_input, "empty training corpus");
  const int res = config.output_resolution;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].width != res || corpus[i].height != res)
      fail(ErrorKind::invalid_input,
           "corpus image " + std::to_string(i) + " is " +
               std::to_string(corpus[i].width) + "x" + std::to_string(corpus[i].height) +
               ", expected " + std::to_string(res) + "x" + std::to_string(res));
  }
  if (hyper.epochs < 0) fail(ErrorKind::invalid_input, "negative epoch count");
  if (hyper.batch_size < 1) fail(ErrorKind::invalid_input, "batch_size must be >= 1");
  if (!(hyper.val_fraction >= 0.0 && hyper.val_fraction < 1.0))
    fail(ErrorKind::invalid_input, "val_fraction must lie in [0, 1)");

  const std::size_t n = corpus.size();
  const int d = config.latent_dim;

  TrainState state;
  state.seed = hyper.seed;
  state.params = init_params(config, derive_seed(hyper.seed, "glo.params"));
  state.latents.resize(n);
  state.latent_opt.assign(n, AdamState(static_cast<std::size_t>(d)));
  for (std::size_t i = 0; i < n; ++i) {
    state.latents[i] =
        projection::sample_prior_latent(d, derive_seed(hyper.seed, i));
  }
  state.params_opt = AdamState(state.params.data.size());
  state.best_val_loss = std::numeric_limits<double>::infinity();

  // Deterministic held-out split.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  {
    Rng split_rng(derive_seed(hyper.seed, "glo.split"));
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[split_rng.bounded(i)]);
  }
  const std::size_t n_val = static_cast<std::size_t>(hyper.val_fraction * n);
  state.val_indices.assign(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(state.val_indices.begin(), state.val_indices.end());
  if (train_idx.empty())
    fail(ErrorKind::invalid_input, "val_fraction leaves no training images");

  struct PerImage {
    double loss = 0.0;
    std::vector<float> latent_grad;
    std::vector<float> param_grad;
  };

  const int w = res, h = res;
  auto eval_image = [&](std::size_t img_idx, const std::vector<float>& target,
                        PerImage& out, bool want_params) {
    ForwardState fwd_state;
    const ImageGrid gen = forward(state.params, state.latents[img_idx], fwd_state);
    std::vector<float> grad_img(gen.pixel_count());
    out.loss = projection::recon_loss_grad(gen.values, target, nullptr, false, w, h,
                                           hyper.pyramid_levels, hyper.pyramid_weight,
                                           grad_img);
    auto grads = backward(state.params, state.latents[img_idx], fwd_state, grad_img,
                          want_params);
    out.latent_grad = std::move(grads.z);
    if (want_params) out.param_grad = std::move(grads.params);
  };

  // Mean training loss with the current parameters and latents.
  auto measure_train_loss = [&] {
    std::vector<double> losses(train_idx.size());
    parallel_for(train_idx.size(), hyper.jobs, [&](std::size_t k) {
      const std::size_t idx = train_idx[k];
      const ImageGrid gen = forward(state.params, state.latents[idx]);
      std::vector<float> grad_img(gen.pixel_count());
      losses[k] = projection::recon_loss_grad(gen.values, corpus[idx].values, nullptr,
                                              false, w, h, hyper.pyramid_levels,
                                              hyper.pyramid_weight, grad_img);
    });
    double sum = 0.0;
    for (double l : losses) sum += l;
    return sum / static_cast<double>(losses.size());
  };

  state.train_loss_history.push_back(measure_train_loss());

  Rng order_rng(derive_seed(hyper.seed, "glo.order"));
  Rng mirror_rng(derive_seed(hyper.seed, "glo.mirror"));
  std::vector<PerImage> batch_results(hyper.batch_size);
  std::vector<float> param_grad_acc(state.params.data.size());

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::vector<std::size_t> epoch_order = train_idx;
    for (std::size_t i = epoch_order.size(); i > 1; --i)
      std::swap(epoch_order[i - 1], epoch_order[order_rng.bounded(i)]);

    double epoch_loss_sum = 0.0;
    std::size_t epoch_loss_n = 0;

    for (std::size_t start = 0; start < epoch_order.size();
         start += hyper.batch_size) {
      const std::size_t count =
          std::min<std::size_t>(hyper.batch_size, epoch_order.size() - start);

      // Per-visit mirror decision, drawn on the main thread for determinism.
      std::vector<const std::vector<float>*> targets(count);
      std::vector<std::vector<float>> flipped(count);
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t idx = epoch_order[start + k];
        if (hyper.mirror_augment && mirror_rng.uniform() < 0.5) {
          flipped[k] = flip_horizontal(corpus[idx].values, w, h);
          targets[k] = &flipped[k];
        } else {
          targets[k] = &corpus[idx].values;
        }
      }

      parallel_for(count, hyper.jobs, [&](std::size_t k) {
        eval_image(epoch_order[start + k], *targets[k], batch_results[k], true);
      });

      // Ordered reduction keeps results independent of the job count.
      std::fill(param_grad_acc.begin(), param_grad_acc.end(), 0.0f);
      for (std::size_t k = 0; k < count; ++k) {
        const auto& r = batch_results[k];
        epoch_loss_sum += r.loss;
        ++epoch_loss_n;
        for (std::size_t i = 0; i < param_grad_acc.size(); ++i)
          param_grad_acc[i] += r.param_grad[i];
      }
      const float inv = 1.0f / static_cast<float>(count);
      for (auto& g : param_grad_acc) g *= inv;
      adam_step(state.params.data, param_grad_acc, state.params_opt, hyper.lr_params);

      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t idx = epoch_order[start + k];
        adam_step(state.latents[idx], batch_results[k].latent_grad,
                  state.latent_opt[idx], hyper.lr_latents);
        renormalize(state.latents[idx]);
      }
    }

    state.epoch = epoch;
    state.train_loss_history.push_back(epoch_loss_sum /
                                       static_cast<double>(epoch_loss_n));

    // Validation: measure with the current latents, then give the held-out
    // latents their own latent-only step so they keep tracking the decoder.
    double val_loss;
    if (!state.val_indices.empty()) {
      std::vector<PerImage> val_results(state.val_indices.size());
      parallel_for(state.val_indices.size(), hyper.jobs, [&](std::size_t k) {
        const std::size_t idx = state.val_indices[k];
        eval_image(idx, corpus[idx].values, val_results[k], false);
      });
      double sum = 0.0;
      for (std::size_t k = 0; k < state.val_indices.size(); ++k) {
        const std::size_t idx = state.val_indices[k];
        sum += val_results[k].loss;
        adam_step(state.latents[idx], val_results[k].latent_grad,
                  state.latent_opt[idx], hyper.lr_latents);
        renormalize(state.latents[idx]);
      }
      val_loss = sum / static_cast<double>(state.val_indices.size());
    } else {
      val_loss = state.train_loss_history.back();
    }
    state.val_loss_history.push_back(val_loss);
    if (val_loss < state.best_val_loss) {
      state.best_val_loss = val_loss;
      state.best_epoch = epoch;
      state.best_params = state.params;
    }
  }

  if (state.best_epoch < 0) {
    state.best_params = state.params;
    state.best_val_loss = state.train_loss_history.back();
    state.best_epoch = state.epoch;
  }
  return state;
}

}  // namespace oodrecon::generator
