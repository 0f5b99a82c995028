#include "oodrecon/generator.hpp"

#include <cmath>
#include <string>

#include "oodrecon/error.hpp"
#include "oodrecon/rng.hpp"

namespace oodrecon::generator {

int GeneratorConfig::num_stages() const {
  int k = 0;
  int r = base_resolution;
  while (r < output_resolution) {
    r *= 2;
    ++k;
  }
  return k;
}

void GeneratorConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::config, msg); };
  if (latent_dim < 1) bad("latent_dim must be at least 1");
  if (base_resolution < 1) bad("base_resolution must be at least 1");
  int r = base_resolution;
  int k = 0;
  while (r < output_resolution) {
    r *= 2;
    ++k;
  }
  if (r != output_resolution || k < 1)
    bad("output_resolution must be base_resolution * 2^k with k >= 1");
  if (channels.size() != static_cast<std::size_t>(k) + 1)
    bad("channels must list one count per stage plus the base stage");
  for (int c : channels)
    if (c < 1) bad("channel counts must be at least 1");
  if (!(activation_slope >= 0.0f) || !std::isfinite(activation_slope))
    bad("activation_slope must be finite and non-negative");
}

std::vector<TensorSpec> param_layout(const GeneratorConfig& cfg) {
  cfg.validate();
  std::vector<TensorSpec> layout;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<int> dims) {
    TensorSpec t;
    t.name = std::move(name);
    t.dims = std::move(dims);
    t.offset = offset;
    t.count = 1;
    for (int d : t.dims) t.count *= static_cast<std::size_t>(d);
    offset += t.count;
    layout.push_back(std::move(t));
  };
  const int b = cfg.base_resolution;
  const int c0 = cfg.channels[0];
  add("input.weight", {c0 * b * b, cfg.latent_dim});
  add("input.bias", {c0 * b * b});
  const int k = cfg.num_stages();
  for (int i = 1; i <= k; ++i) {
    add("stage" + std::to_string(i) + ".weight",
        {cfg.channels[i], cfg.channels[i - 1], 3, 3});
    add("stage" + std::to_string(i) + ".bias", {cfg.channels[i]});
  }
  add("output.weight", {1, cfg.channels[k], 1, 1});
  add("output.bias", {1});
  return layout;
}

std::size_t param_count(const GeneratorConfig& cfg) {
  const auto layout = param_layout(cfg);
  return layout.back().offset + layout.back().count;
}

GeneratorParams init_params(const GeneratorConfig& cfg, std::uint64_t seed) {
  const auto layout = param_layout(cfg);
  GeneratorParams p;
  p.config = cfg;
  p.data.assign(layout.back().offset + layout.back().count, 0.0f);
  Rng rng(seed);
  for (const auto& t : layout) {
    if (t.name.ends_with(".bias")) continue;  // biases stay zero
    // fan_in: latent_dim for the dense projection, C_in*kh*kw for convs.
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < t.dims.size(); ++d)
      fan_in *= static_cast<std::size_t>(t.dims[d]);
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.count; ++i)
      p.data[t.offset + i] = static_cast<float>(rng.normal() * std_dev);
  }
  return p;
}

namespace {

// ---- templated network core (float = production, double = checks) ----

template <class T>
void dense_forward(const T* w, const T* b, const T* z, int out_n, int in_n, T* out) {
  for (int r = 0; r < out_n; ++r) {
    T acc = b[r];
    const T* wr = w + static_cast<std::size_t>(r) * in_n;
    for (int c = 0; c < in_n; ++c) acc += wr[c] * z[c];
    out[r] = acc;
  }
}

template <class T>
void upsample2(const T* in, int c, int h, int w, T* out) {
  const int ow = w * 2;
  for (int ch = 0; ch < c; ++ch) {
    const T* src = in + static_cast<std::size_t>(ch) * h * w;
    T* dst = out + static_cast<std::size_t>(ch) * h * w * 4;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const T v = src[y * w + x];
        const std::size_t o = static_cast<std::size_t>(2 * y) * ow + 2 * x;
        dst[o] = v;
        dst[o + 1] = v;
        dst[o + ow] = v;
        dst[o + ow + 1] = v;
      }
    }
  }
}

template <class T>
void upsample2_backward(const T* g_up, int c, int h, int w, T* g_in) {
  const int ow = w * 2;
  for (int ch = 0; ch < c; ++ch) {
    const T* src = g_up + static_cast<std::size_t>(ch) * h * w * 4;
    T* dst = g_in + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t o = static_cast<std::size_t>(2 * y) * ow + 2 * x;
        dst[y * w + x] = src[o] + src[o + 1] + src[o + ow] + src[o + ow + 1];
      }
    }
  }
}

// 3x3 convolution, zero padding, same spatial size. Tap-by-tap shifted row
// accumulation keeps the inner loop contiguous.
template <class T>
void conv3_forward(const T* in, int c_in, int h, int w, const T* kernel,
                   const T* bias, int c_out, T* out) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int co = 0; co < c_out; ++co) {
    T* op = out + co * plane;
    const T bv = bias[co];
    for (std::size_t i = 0; i < plane; ++i) op[i] = bv;
    for (int ci = 0; ci < c_in; ++ci) {
      const T* ip = in + ci * plane;
      const T* kp = kernel + (static_cast<std::size_t>(co) * c_in + ci) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const T kv = kp[(dy + 1) * 3 + (dx + 1)];
          const int y0 = dy < 0 ? 1 : 0;
          const int y1 = dy > 0 ? h - 1 : h;
          const int x0 = dx < 0 ? 1 : 0;
          const int x1 = dx > 0 ? w - 1 : w;
          for (int y = y0; y < y1; ++y) {
            T* orow = op + static_cast<std::size_t>(y) * w;
            const T* irow = ip + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) orow[x] += kv * irow[x];
          }
        }
      }
    }
  }
}

// Gradient w.r.t. the conv input: correlate upstream with the flipped kernel.
template <class T>
void conv3_input_grad(const T* g_out, int c_out, int h, int w, const T* kernel,
                      int c_in, T* g_in) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < plane * c_in; ++i) g_in[i] = T(0);
  for (int co = 0; co < c_out; ++co) {
    const T* gp = g_out + co * plane;
    for (int ci = 0; ci < c_in; ++ci) {
      T* ip = g_in + ci * plane;
      const T* kp = kernel + (static_cast<std::size_t>(co) * c_in + ci) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const T kv = kp[(dy + 1) * 3 + (dx + 1)];
          const int y0 = dy < 0 ? 1 : 0;
          const int y1 = dy > 0 ? h - 1 : h;
          const int x0 = dx < 0 ? 1 : 0;
          const int x1 = dx > 0 ? w - 1 : w;
          for (int y = y0; y < y1; ++y) {
            const T* grow = gp + static_cast<std::size_t>(y) * w;
            T* irow = ip + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) irow[x] += kv * grow[x];
          }
        }
      }
    }
  }
}

template <class T>
void conv3_param_grad(const T* g_out, int c_out, const T* in, int c_in, int h, int w,
                      T* g_kernel, T* g_bias) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int co = 0; co < c_out; ++co) {
    const T* gp = g_out + co * plane;
    T bacc = T(0);
    for (std::size_t i = 0; i < plane; ++i) bacc += gp[i];
    g_bias[co] += bacc;
    for (int ci = 0; ci < c_in; ++ci) {
      const T* ip = in + ci * plane;
      T* kp = g_kernel + (static_cast<std::size_t>(co) * c_in + ci) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int y0 = dy < 0 ? 1 : 0;
          const int y1 = dy > 0 ? h - 1 : h;
          const int x0 = dx < 0 ? 1 : 0;
          const int x1 = dx > 0 ? w - 1 : w;
          T acc = T(0);
          for (int y = y0; y < y1; ++y) {
            const T* grow = gp + static_cast<std::size_t>(y) * w;
            const T* irow = ip + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x];
          }
          kp[(dy + 1) * 3 + (dx + 1)] += acc;
        }
      }
    }
  }
}

template <class T>
struct Offsets {
  std::size_t input_w, input_b;
  std::vector<std::size_t> stage_w, stage_b;
  std::size_t out_w, out_b;
};

template <class T>
Offsets<T> make_offsets(const GeneratorConfig& cfg) {
  const auto layout = param_layout(cfg);
  Offsets<T> o{};
  const int k = cfg.num_stages();
  o.stage_w.resize(k + 1);
  o.stage_b.resize(k + 1);
  for (const auto& t : layout) {
    if (t.name == "input.weight") o.input_w = t.offset;
    else if (t.name == "input.bias") o.input_b = t.offset;
    else if (t.name == "output.weight") o.out_w = t.offset;
    else if (t.name == "output.bias") o.out_b = t.offset;
    else {
      for (int i = 1; i <= k; ++i) {
        if (t.name == "stage" + std::to_string(i) + ".weight") o.stage_w[i] = t.offset;
        if (t.name == "stage" + std::to_string(i) + ".bias") o.stage_b[i] = t.offset;
      }
    }
  }
  return o;
}

/// Intermediate activations of one forward pass; kept for backprop.
template <class T>
struct Activations {
  std::vector<std::vector<T>> stage_out;  // s_0 .. s_k (post-activation)
  std::vector<std::vector<T>> upsampled;  // u_1 .. u_k (index 0 unused)
  std::vector<std::vector<T>> preact;     // a_1 .. a_k (index 0 unused)
  std::vector<T> head;                    // pre-sigmoid 1xRxR
  std::vector<T> output;                  // 255 * sigmoid(head)
};

template <class T>
void run_forward(const GeneratorConfig& cfg, const T* data, const T* z,
                 Activations<T>& acts) {
  const auto off = make_offsets<T>(cfg);
  const int k = cfg.num_stages();
  const int b = cfg.base_resolution;
  const T slope = static_cast<T>(cfg.activation_slope);

  acts.stage_out.resize(k + 1);
  acts.upsampled.resize(k + 1);
  acts.preact.resize(k + 1);

  const int c0 = cfg.channels[0];
  acts.stage_out[0].resize(static_cast<std::size_t>(c0) * b * b);
  dense_forward(data + off.input_w, data + off.input_b, z, c0 * b * b,
                cfg.latent_dim, acts.stage_out[0].data());

  int res = b;
  for (int i = 1; i <= k; ++i) {
    const int ci = cfg.channels[i - 1];
    const int co = cfg.channels[i];
    const int up = res * 2;
    acts.upsampled[i].resize(static_cast<std::size_t>(ci) * up * up);
    upsample2(acts.stage_out[i - 1].data(), ci, res, res, acts.upsampled[i].data());
    acts.preact[i].resize(static_cast<std::size_t>(co) * up * up);
    conv3_forward(acts.upsampled[i].data(), ci, up, up, data + off.stage_w[i],
                  data + off.stage_b[i], co, acts.preact[i].data());
    auto& out = acts.stage_out[i];
    out.resize(acts.preact[i].size());
    for (std::size_t j = 0; j < out.size(); ++j) {
      const T a = acts.preact[i][j];
      out[j] = a > T(0) ? a : slope * a;
    }
    res = up;
  }

  const int ck = cfg.channels[k];
  const std::size_t plane = static_cast<std::size_t>(res) * res;
  acts.head.assign(plane, data[off.out_b]);
  const T* wk = data + off.out_w;
  const auto& last = acts.stage_out[k];
  for (int c = 0; c < ck; ++c) {
    const T wv = wk[c];
    const T* src = last.data() + c * plane;
    for (std::size_t j = 0; j < plane; ++j) acts.head[j] += wv * src[j];
  }
  acts.output.resize(plane);
  for (std::size_t j = 0; j < plane; ++j) {
    const T s = T(1) / (T(1) + std::exp(-acts.head[j]));
    acts.output[j] = T(255) * s;
  }
}

template <class T>
void run_backward(const GeneratorConfig& cfg, const T* data, const T* z,
                  const Activations<T>& acts, const T* upstream, T* g_z,
                  T* g_params /* may be null */) {
  const auto off = make_offsets<T>(cfg);
  const int k = cfg.num_stages();
  const int b = cfg.base_resolution;
  const T slope = static_cast<T>(cfg.activation_slope);
  const int res = cfg.output_resolution;
  const std::size_t plane = static_cast<std::size_t>(res) * res;

  // d/dhead of 255*sigmoid(head) = output * (1 - output/255)
  std::vector<T> g_head(plane);
  for (std::size_t j = 0; j < plane; ++j) {
    const T s = acts.output[j] / T(255);
    g_head[j] = upstream[j] * T(255) * s * (T(1) - s);
  }

  const int ck = cfg.channels[k];
  std::vector<T> g_stage(static_cast<std::size_t>(ck) * plane);
  const T* wk = data + off.out_w;
  const auto& last = acts.stage_out[k];
  for (int c = 0; c < ck; ++c) {
    const T wv = wk[c];
    T* dst = g_stage.data() + c * plane;
    const T* src = last.data() + c * plane;
    T wacc = T(0);
    for (std::size_t j = 0; j < plane; ++j) {
      dst[j] = wv * g_head[j];
      wacc += src[j] * g_head[j];
    }
    if (g_params) g_params[off.out_w + c] += wacc;
  }
  if (g_params) {
    T bacc = T(0);
    for (std::size_t j = 0; j < plane; ++j) bacc += g_head[j];
    g_params[off.out_b] += bacc;
  }

  int cur_res = res;
  std::vector<T> g_pre, g_up, g_prev;
  for (int i = k; i >= 1; --i) {
    const int ci = cfg.channels[i - 1];
    const int co = cfg.channels[i];
    const std::size_t cur_plane = static_cast<std::size_t>(cur_res) * cur_res;

    g_pre.resize(static_cast<std::size_t>(co) * cur_plane);
    for (std::size_t j = 0; j < g_pre.size(); ++j)
      g_pre[j] = acts.preact[i][j] > T(0) ? g_stage[j] : slope * g_stage[j];

    if (g_params)
      conv3_param_grad(g_pre.data(), co, acts.upsampled[i].data(), ci, cur_res,
                       cur_res, g_params + off.stage_w[i], g_params + off.stage_b[i]);

    g_up.resize(static_cast<std::size_t>(ci) * cur_plane);
    conv3_input_grad(g_pre.data(), co, cur_res, cur_res, data + off.stage_w[i], ci,
                     g_up.data());

    const int prev_res = cur_res / 2;
    g_prev.resize(static_cast<std::size_t>(ci) * prev_res * prev_res);
    upsample2_backward(g_up.data(), ci, prev_res, prev_res, g_prev.data());
    g_stage = g_prev;
    cur_res = prev_res;
  }

  // dense projection backward
  const int c0 = cfg.channels[0];
  const int out_n = c0 * b * b;
  const int in_n = cfg.latent_dim;
  const T* w_in = data + off.input_w;
  for (int c = 0; c < in_n; ++c) g_z[c] = T(0);
  for (int r = 0; r < out_n; ++r) {
    const T g = g_stage[r];
    const T* wr = w_in + static_cast<std::size_t>(r) * in_n;
    for (int c = 0; c < in_n; ++c) g_z[c] += wr[c] * g;
    if (g_params) {
      T* gw = g_params + off.input_w + static_cast<std::size_t>(r) * in_n;
      for (int c = 0; c < in_n; ++c) gw[c] += g * z[c];
      g_params[off.input_b + r] += g;
    }
  }
}

template <class T>
void check_latent(const GeneratorConfig& cfg, std::span<const T> z) {
  if (z.size() != static_cast<std::size_t>(cfg.latent_dim))
    fail(ErrorKind::shape_mismatch,
         "latent length " + std::to_string(z.size()) + " does not match latent_dim " +
             std::to_string(cfg.latent_dim));
}

}  // namespace

struct ForwardState::Impl {
  Activations<float> acts;
};

ForwardState::ForwardState() : impl_(std::make_unique<Impl>()) {}
ForwardState::~ForwardState() = default;
ForwardState::ForwardState(ForwardState&&) noexcept = default;
ForwardState& ForwardState::operator=(ForwardState&&) noexcept = default;

ImageGrid forward(const GeneratorParams& params, std::span<const float> z) {
  ForwardState state;
  return forward(params, z, state);
}

ImageGrid forward(const GeneratorParams& params, std::span<const float> z,
                  ForwardState& state) {
  check_latent<float>(params.config, z);
  run_forward(params.config, params.data.data(), z.data(), state.impl_->acts);
  const int r = params.config.output_resolution;
  ImageGrid out(r, r);
  out.values = state.impl_->acts.output;
  return out;
}

Gradients backward(const GeneratorParams& params, std::span<const float> z,
                   const ForwardState& state, std::span<const float> upstream,
                   bool want_param_grads) {
  check_latent<float>(params.config, z);
  const int r = params.config.output_resolution;
  if (upstream.size() != static_cast<std::size_t>(r) * r)
    fail(ErrorKind::shape_mismatch, "upstream gradient does not match output size");
  Gradients g;
  g.z.assign(params.config.latent_dim, 0.0f);
  if (want_param_grads) g.params.assign(params.data.size(), 0.0f);
  run_backward(params.config, params.data.data(), z.data(), state.impl_->acts,
               upstream.data(), g.z.data(),
               want_param_grads ? g.params.data() : nullptr);
  return g;
}

Gradients backward(const GeneratorParams& params, std::span<const float> z,
                   std::span<const float> upstream, bool want_param_grads) {
  ForwardState state;
  forward(params, z, state);
  return backward(params, z, state, upstream, want_param_grads);
}

GeneratorParamsD to_double(const GeneratorParams& params) {
  GeneratorParamsD d;
  d.config = params.config;
  d.data.assign(params.data.begin(), params.data.end());
  return d;
}

std::vector<double> forward_double(const GeneratorParamsD& params,
                                   std::span<const double> z) {
  check_latent<double>(params.config, z);
  Activations<double> acts;
  run_forward(params.config, params.data.data(), z.data(), acts);
  return std::move(acts.output);
}

GradientsD backward_double(const GeneratorParamsD& params, std::span<const double> z,
                           std::span<const double> upstream, bool want_param_grads) {
  check_latent<double>(params.config, z);
  const int r = params.config.output_resolution;
  if (upstream.size() != static_cast<std::size_t>(r) * r)
    fail(ErrorKind::shape_mismatch, "upstream gradient does not match output size");
  Activations<double> acts;
  run_forward(params.config, params.data.data(), z.data(), acts);
  GradientsD g;
  g.z.assign(params.config.latent_dim, 0.0);
  if (want_param_grads) g.params.assign(params.data.size(), 0.0);
  run_backward(params.config, params.data.data(), z.data(), acts, upstream.data(),
               g.z.data(), want_param_grads ? g.params.data() : nullptr);
  return g;
}

}  // namespace oodrecon::generator
