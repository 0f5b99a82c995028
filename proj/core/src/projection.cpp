#include "oodrecon/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "oodrecon/error.hpp"
#include "oodrecon/optimizer.hpp"
#include "oodrecon/rng.hpp"

namespace oodrecon::projection {

namespace {

void validate_config(const ProjectionConfig& cfg) {
  auto bad = [](const std::string& msg) { fail(ErrorKind::config, msg); };
  if (cfg.num_steps < 1) bad("num_steps must be at least 1");
  if (!(cfg.initial_lr > 0.0)) bad("initial_lr must be positive");
  auto frac = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) bad(std::string(name) + " must lie in [0, 1]");
  };
  frac(cfg.lr_rampup_fraction, "lr_rampup_fraction");
  frac(cfg.lr_rampdown_fraction, "lr_rampdown_fraction");
  frac(cfg.noise_ramp_fraction, "noise_ramp_fraction");
  if (cfg.init_noise_factor < 0.0) bad("init_noise_factor must be non-negative");
  if (cfg.latent_mean_samples < 1) bad("latent_mean_samples must be at least 1");
  if (cfg.pyramid_levels < 1) bad("pyramid_levels must be at least 1");
  if (cfg.pyramid_weight < 0.0) bad("pyramid_weight must be non-negative");
}

template <class T>
void fill_prior_draw(Rng& rng, int dim, T* out) {
  double norm2 = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double v = rng.normal();
    out[i] = static_cast<T>(v);
    norm2 += v * v;
  }
  if (norm2 == 0.0) {
    out[0] = T(1);
    norm2 = 1.0;
  }
  const double scale = std::sqrt(static_cast<double>(dim) / norm2);
  for (int i = 0; i < dim; ++i) out[i] = static_cast<T>(out[i] * scale);
}

constexpr double kRangeSq = 255.0 * 255.0;

// Shared float/double implementation of the pixel + pyramid loss.
template <class T>
double loss_grad_impl(std::span<const T> gen, std::span<const T> target,
                      const std::uint8_t* mask_flags, bool use_mask, int width,
                      int height, int levels, double pyramid_weight,
                      std::span<T> grad) {
  const std::size_t n = gen.size();
  if (target.size() != n || grad.size() != n ||
      static_cast<std::size_t>(width) * height != n)
    fail(ErrorKind::shape_mismatch, "loss buffers disagree in size");
  if (levels < 1) fail(ErrorKind::config, "pyramid_levels must be at least 1");
  const int div = 1 << (levels - 1);
  if (pyramid_weight > 0.0 && (width % div != 0 || height % div != 0))
    fail(ErrorKind::shape_mismatch,
         "image dimensions must be divisible by 2^(levels-1)");

  std::fill(grad.begin(), grad.end(), T(0));

  // Pixel term: mean squared error over the selected pixels, /255^2.
  const bool masked = use_mask && mask_flags != nullptr;
  std::size_t n_sel = 0;
  double pixel_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (masked && !mask_flags[i]) continue;
    const double d = static_cast<double>(gen[i]) - static_cast<double>(target[i]);
    pixel_sum += d * d;
    ++n_sel;
  }
  if (n_sel == 0) fail(ErrorKind::invalid_input, "empty mask");
  const double pixel_loss = pixel_sum / (static_cast<double>(n_sel) * kRangeSq);
  const double pixel_gscale = 2.0 / (static_cast<double>(n_sel) * kRangeSq);
  for (std::size_t i = 0; i < n; ++i) {
    if (masked && !mask_flags[i]) continue;
    const double d = static_cast<double>(gen[i]) - static_cast<double>(target[i]);
    grad[i] = static_cast<T>(pixel_gscale * d);
  }

  double total = pixel_loss;
  if (pyramid_weight > 0.0) {
    // Build both pyramids, accumulate the per-level gradients coarsest-first,
    // then push them back down through the pooling adjoints.
    std::vector<std::vector<T>> pyr_g(levels), pyr_t(levels);
    std::vector<std::pair<int, int>> dims(levels);
    pyr_g[0].assign(gen.begin(), gen.end());
    pyr_t[0].assign(target.begin(), target.end());
    dims[0] = {width, height};
    for (int l = 1; l < levels; ++l) {
      const int pw = dims[l - 1].first, ph = dims[l - 1].second;
      const int cw = pw / 2, ch = ph / 2;
      dims[l] = {cw, ch};
      pyr_g[l].resize(static_cast<std::size_t>(cw) * ch);
      pyr_t[l].resize(static_cast<std::size_t>(cw) * ch);
      for (int y = 0; y < ch; ++y) {
        for (int x = 0; x < cw; ++x) {
          const std::size_t o = static_cast<std::size_t>(2 * y) * pw + 2 * x;
          pyr_g[l][static_cast<std::size_t>(y) * cw + x] =
              (pyr_g[l - 1][o] + pyr_g[l - 1][o + 1] + pyr_g[l - 1][o + pw] +
               pyr_g[l - 1][o + pw + 1]) /
              T(4);
          pyr_t[l][static_cast<std::size_t>(y) * cw + x] =
              (pyr_t[l - 1][o] + pyr_t[l - 1][o + 1] + pyr_t[l - 1][o + pw] +
               pyr_t[l - 1][o + pw + 1]) /
              T(4);
        }
      }
    }

    std::vector<std::vector<T>> level_grad(levels);
    for (int l = 0; l < levels; ++l) {
      const std::size_t ln = pyr_g[l].size();
      level_grad[l].assign(ln, T(0));
      double sum = 0.0;
      const double gscale = pyramid_weight * 2.0 / (static_cast<double>(ln) * kRangeSq);
      for (std::size_t i = 0; i < ln; ++i) {
        const double d =
            static_cast<double>(pyr_g[l][i]) - static_cast<double>(pyr_t[l][i]);
        sum += d * d;
        level_grad[l][i] = static_cast<T>(gscale * d);
      }
      total += pyramid_weight * sum / (static_cast<double>(ln) * kRangeSq);
    }

    // Pooling adjoint: each coarse gradient spreads to its 2x2 children / 4.
    for (int l = levels - 1; l >= 1; --l) {
      const int cw = dims[l].first, ch = dims[l].second;
      const int pw = dims[l - 1].first;
      for (int y = 0; y < ch; ++y) {
        for (int x = 0; x < cw; ++x) {
          const T g = level_grad[l][static_cast<std::size_t>(y) * cw + x] / T(4);
          const std::size_t o = static_cast<std::size_t>(2 * y) * pw + 2 * x;
          level_grad[l - 1][o] += g;
          level_grad[l - 1][o + 1] += g;
          level_grad[l - 1][o + pw] += g;
          level_grad[l - 1][o + pw + 1] += g;
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) grad[i] += level_grad[0][i];
  }
  return total;
}

}  // namespace

LatentCode sample_prior_latent(int latent_dim, std::uint64_t seed) {
  Rng rng(seed);
  LatentCode z(latent_dim);
  fill_prior_draw(rng, latent_dim, z.data());
  return z;
}

LatentCode latent_mean(const GeneratorParams& params, int n_samples,
                       std::uint64_t seed) {
  if (n_samples < 1) fail(ErrorKind::invalid_input, "n_samples must be at least 1");
  const int d = params.config.latent_dim;
  Rng rng(seed);
  std::vector<double> acc(d, 0.0);
  std::vector<double> draw(d);
  for (int s = 0; s < n_samples; ++s) {
    fill_prior_draw(rng, d, draw.data());
    for (int i = 0; i < d; ++i) acc[i] += draw[i];
  }
  LatentCode mean(d);
  for (int i = 0; i < d; ++i)
    mean[i] = static_cast<float>(acc[i] / static_cast<double>(n_samples));
  return mean;
}

double lr_schedule(int step, const ProjectionConfig& cfg) {
  validate_config(cfg);
  if (step < 0 || step >= cfg.num_steps)
    fail(ErrorKind::contract,
         "step " + std::to_string(step) + " outside [0, " +
             std::to_string(cfg.num_steps) + ")");
  const double t = static_cast<double>(step) / static_cast<double>(cfg.num_steps);
  const double rampup =
      cfg.lr_rampup_fraction > 0.0 ? std::min(1.0, t / cfg.lr_rampup_fraction) : 1.0;
  double rampdown = 1.0;
  if (cfg.lr_rampdown_fraction > 0.0) {
    const double arg = std::clamp(
        (t - (1.0 - cfg.lr_rampdown_fraction)) / cfg.lr_rampdown_fraction, 0.0, 1.0);
    rampdown = 0.5 * (1.0 + std::cos(std::numbers::pi * arg));
  }
  return cfg.initial_lr * rampup * rampdown;
}

double pyramid_loss(const ImageGrid& a, const ImageGrid& b, int levels) {
  if (!a.same_shape(b)) fail(ErrorKind::shape_mismatch, "pyramid inputs disagree");
  if (levels < 1) fail(ErrorKind::config, "pyramid_levels must be at least 1");
  const int div = 1 << (levels - 1);
  if (a.width % div != 0 || a.height % div != 0)
    fail(ErrorKind::shape_mismatch,
         "image dimensions must be divisible by 2^(levels-1)");

  std::vector<double> pa(a.values.begin(), a.values.end());
  std::vector<double> pb(b.values.begin(), b.values.end());
  int w = a.width, h = a.height;
  double total = 0.0;
  for (int l = 0; l < levels; ++l) {
    double sum = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      const double d = pa[i] - pb[i];
      sum += d * d;
    }
    total += sum / (static_cast<double>(pa.size()) * kRangeSq);
    if (l + 1 == levels) break;
    const int cw = w / 2, ch = h / 2;
    std::vector<double> na(static_cast<std::size_t>(cw) * ch);
    std::vector<double> nb(na.size());
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) {
        const std::size_t o = static_cast<std::size_t>(2 * y) * w + 2 * x;
        na[static_cast<std::size_t>(y) * cw + x] =
            (pa[o] + pa[o + 1] + pa[o + w] + pa[o + w + 1]) / 4.0;
        nb[static_cast<std::size_t>(y) * cw + x] =
            (pb[o] + pb[o + 1] + pb[o + w] + pb[o + w + 1]) / 4.0;
      }
    }
    pa = std::move(na);
    pb = std::move(nb);
    w = cw;
    h = ch;
  }
  return total;
}

double recon_loss_grad(std::span<const float> gen, std::span<const float> target,
                       const std::uint8_t* mask_flags, bool use_mask, int width,
                       int height, int pyramid_levels, double pyramid_weight,
                       std::span<float> grad) {
  return loss_grad_impl<float>(gen, target, mask_flags, use_mask, width, height,
                               pyramid_levels, pyramid_weight, grad);
}

double recon_loss_grad_double(std::span<const double> gen,
                              std::span<const double> target,
                              const std::uint8_t* mask_flags, bool use_mask,
                              int width, int height, int pyramid_levels,
                              double pyramid_weight, std::span<double> grad) {
  return loss_grad_impl<double>(gen, target, mask_flags, use_mask, width, height,
                                pyramid_levels, pyramid_weight, grad);
}

ProjectionResult project(const GeneratorParams& params, const ImageGrid& target,
                         const BodyMask& mask, const ProjectionConfig& cfg) {
  validate_config(cfg);
  params.config.validate();
  const int res = params.config.output_resolution;
  if (target.width != res || target.height != res)
    fail(ErrorKind::shape_mismatch,
         "target resolution " + std::to_string(target.width) + "x" +
             std::to_string(target.height) + " does not match generator output " +
             std::to_string(res));
  if (!mask.matches(target.width, target.height))
    fail(ErrorKind::shape_mismatch, "mask does not match the target");
  if (cfg.mask_pixel_loss && mask.count() == 0)
    fail(ErrorKind::invalid_input, "empty mask");

  const int d = params.config.latent_dim;
  const double sqrt_d = std::sqrt(static_cast<double>(d));

  LatentCode z_opt = latent_mean(params, cfg.latent_mean_samples,
                                 derive_seed(cfg.seed, "projection.mean"));
  Rng noise_rng(derive_seed(cfg.seed, "projection.noise"));

  AdamState adam(static_cast<std::size_t>(d));
  LatentCode z_eval(d), noise(d);
  std::vector<float> grad_img(target.pixel_count());

  ProjectionResult result;
  result.seed = cfg.seed;
  result.loss_trace.reserve(cfg.num_steps);
  result.best_loss = std::numeric_limits<double>::infinity();

  generator::ForwardState fwd_state;
  for (int step = 0; step < cfg.num_steps; ++step) {
    const double t = static_cast<double>(step) / cfg.num_steps;
    const double ramp = cfg.noise_ramp_fraction > 0.0
                            ? std::max(0.0, 1.0 - t / cfg.noise_ramp_fraction)
                            : 0.0;
    const double noise_scale = cfg.init_noise_factor * sqrt_d * ramp * ramp;
    for (int i = 0; i < d; ++i) noise[i] = static_cast<float>(noise_rng.normal());
    for (int i = 0; i < d; ++i)
      z_eval[i] = z_opt[i] + static_cast<float>(noise_scale) * noise[i];

    const ImageGrid gen = generator::forward(params, z_eval, fwd_state);
    const double loss = recon_loss_grad(
        gen.values, target.values, mask.flags.data(), cfg.mask_pixel_loss,
        target.width, target.height, cfg.pyramid_levels, cfg.pyramid_weight, grad_img);
    if (!std::isfinite(loss))
      fail(ErrorKind::divergence,
           "non-finite loss at step " + std::to_string(step));
    result.loss_trace.push_back(loss);
    if (loss < result.best_loss) {
      result.best_loss = loss;
      result.best_step = step;
      result.latent = z_eval;
    }

    const auto grads = generator::backward(params, z_eval, fwd_state, grad_img, false);
    adam_step(z_opt, grads.z, adam, lr_schedule(step, cfg));
  }

  result.steps = cfg.num_steps;
  result.reconstruction = generator::forward(params, result.latent);
  return result;
}

}  // namespace oodrecon::projection
