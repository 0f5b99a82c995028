#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "oodrecon/image.hpp"

namespace oodrecon::generator {

using imaging::ImageGrid;

/// Latent codes live on the hypersphere of radius sqrt(latent_dim); a plain
/// vector keeps the optimizer plumbing simple.
using LatentCode = std::vector<float>;

/// Decoder shape: a dense projection to a base_resolution^2 x channels[0]
/// tensor, then one (nearest-neighbour x2 upsample, 3x3 conv, leaky
/// rectifier) stage per doubling, then a 1x1 conv squashed onto [0, 255].
struct GeneratorConfig {
  int latent_dim = 64;
  int base_resolution = 4;
  int output_resolution = 64;
  std::vector<int> channels = {48, 32, 16, 8, 4};  // length num_stages()+1
  float activation_slope = 0.2f;

  int num_stages() const;    // doublings from base to output
  void validate() const;     // throws config error
};

struct TensorSpec {
  std::string name;
  std::vector<int> dims;
  std::size_t offset = 0;
  std::size_t count = 0;
};

/// Flat parameter layout in declaration order: input projection
/// weight/bias, per-stage conv kernel/bias, output head kernel/bias.
std::vector<TensorSpec> param_layout(const GeneratorConfig& config);
std::size_t param_count(const GeneratorConfig& config);

struct GeneratorParams {
  GeneratorConfig config;
  std::vector<float> data;  // flat, layout per param_layout(config)
};

/// Kaiming-style init: zero-mean Gaussians with variance 2/fan_in for
/// kernels, zeros for biases. Deterministic per seed.
GeneratorParams init_params(const GeneratorConfig& config, std::uint64_t seed);

/// Decodes a latent into an image; every output value lies in [0, 255].
ImageGrid forward(const GeneratorParams& params, std::span<const float> z);

struct Gradients {
  std::vector<float> z;
  std::vector<float> params;  // empty unless requested
};

/// Exact analytic gradients of the forward map contracted with `upstream`
/// (dL/dpixel, row-major, output_resolution^2 entries).
Gradients backward(const GeneratorParams& params, std::span<const float> z,
                   std::span<const float> upstream, bool want_param_grads);

/// Cached activations of one forward pass, reusable by backward() so hot
/// loops (training, projection) run the network once per step instead of
/// twice. Valid only for the exact (params, z) pair that filled it.
class ForwardState {
public:
  ForwardState();
  ~ForwardState();
  ForwardState(ForwardState&&) noexcept;
  ForwardState& operator=(ForwardState&&) noexcept;

private:
  friend ImageGrid forward(const GeneratorParams&, std::span<const float>,
                           ForwardState&);
  friend Gradients backward(const GeneratorParams&, std::span<const float>,
                            const ForwardState&, std::span<const float>, bool);
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ImageGrid forward(const GeneratorParams& params, std::span<const float> z,
                  ForwardState& state);
Gradients backward(const GeneratorParams& params, std::span<const float> z,
                   const ForwardState& state, std::span<const float> upstream,
                   bool want_param_grads);

// ---- double-precision evaluation mode (gradient checks only) ----

struct GeneratorParamsD {
  GeneratorConfig config;
  std::vector<double> data;
};

GeneratorParamsD to_double(const GeneratorParams& params);

std::vector<double> forward_double(const GeneratorParamsD& params,
                                   std::span<const double> z);

struct GradientsD {
  std::vector<double> z;
  std::vector<double> params;
};

GradientsD backward_double(const GeneratorParamsD& params, std::span<const double> z,
                           std::span<const double> upstream, bool want_param_grads);

// ---- weight file io ----
//
// Format: magic "RGEN", u16 format version, u32 JSON header length, JSON
// header (config, tensor shapes, seed, training metadata), then the raw
// float32 little-endian parameter tensors in declaration order.

struct WeightMetadata {
  std::uint64_t seed = 0;
  int epochs = 0;
  double best_val_loss = 0.0;
  std::string note;
};

void save_weights(const GeneratorParams& params, const std::filesystem::path& path,
                  const WeightMetadata& meta = {});

struct LoadedWeights {
  GeneratorParams params;
  WeightMetadata meta;
};

LoadedWeights load_weights(const std::filesystem::path& path);

}  // namespace oodrecon::generator
