#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oodrecon/generator.hpp"
#include "oodrecon/image.hpp"

namespace oodrecon::projection {

using generator::GeneratorParams;
using generator::LatentCode;
using imaging::BodyMask;
using imaging::ImageGrid;

/// Projection hyperparameters. The schedule mirrors the usual projector
/// shape: linear learning-rate ramp-up, cosine ramp-down to zero, and
/// Gaussian latent noise that decays to zero over the first
/// noise_ramp_fraction of the steps.
struct ProjectionConfig {
  int num_steps = 500;
  double initial_lr = 0.1;
  double lr_rampup_fraction = 0.05;
  double lr_rampdown_fraction = 0.25;
  double init_noise_factor = 0.05;
  double noise_ramp_fraction = 0.75;
  int latent_mean_samples = 1024;
  int pyramid_levels = 3;
  double pyramid_weight = 1.0;
  bool mask_pixel_loss = true;  // restrict the pixel MSE term to the body mask
  std::uint64_t seed = 0;
};

struct ProjectionResult {
  LatentCode latent;           // best-so-far latent by loss
  ImageGrid reconstruction;    // forward(params, latent)
  std::vector<double> loss_trace;  // raw loss per step
  int steps = 0;
  std::uint64_t seed = 0;
  double best_loss = 0.0;
  int best_step = 0;
};

/// Mean of n_samples draws from the training prior (uniform on the
/// hypersphere of radius sqrt(latent_dim)). Deterministic per seed.
LatentCode latent_mean(const GeneratorParams& params, int n_samples,
                       std::uint64_t seed);

/// One prior draw: Gaussian direction normalized to radius sqrt(latent_dim).
LatentCode sample_prior_latent(int latent_dim, std::uint64_t seed);

/// lr(step) = initial_lr * rampup * rampdown; throws contract error when the
/// step index is outside [0, num_steps).
double lr_schedule(int step, const ProjectionConfig& config);

/// Sum over pyramid levels of the MSE between 2x-average-pooled copies of a
/// and b, each level normalized by 255^2. Level 0 is the full image.
/// Dimensions must be divisible by 2^(levels-1).
double pyramid_loss(const ImageGrid& a, const ImageGrid& b, int levels);

/// Reconstruction loss used by projection and training:
///   masked pixel MSE / 255^2 + pyramid_weight * pyramid_loss.
/// Writes dL/dpixel into grad (same size as gen). mask may be null or
/// use_mask false for the unmasked variant. Returns the loss.
double recon_loss_grad(std::span<const float> gen, std::span<const float> target,
                       const std::uint8_t* mask_flags, bool use_mask, int width,
                       int height, int pyramid_levels, double pyramid_weight,
                       std::span<float> grad);

/// Double-precision twin of recon_loss_grad; exists for gradient checks.
double recon_loss_grad_double(std::span<const double> gen,
                              std::span<const double> target,
                              const std::uint8_t* mask_flags, bool use_mask,
                              int width, int height, int pyramid_levels,
                              double pyramid_weight, std::span<double> grad);

/// Optimizes a latent code so the decoded image matches the target, by
/// adaptive-moment gradient descent under lr_schedule, starting from the
/// prior mean plus decaying Gaussian noise. Returns the best-so-far latent,
/// its reconstruction, and the full loss trace. Deterministic per seed.
ProjectionResult project(const GeneratorParams& params, const ImageGrid& target,
                         const BodyMask& mask, const ProjectionConfig& config);

}  // namespace oodrecon::projection
