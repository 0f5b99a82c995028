#pragma once

#include <cstdint>
#include <vector>

#include "oodrecon/generator.hpp"
#include "oodrecon/image.hpp"
#include "oodrecon/optimizer.hpp"

namespace oodrecon::generator {

/// Generative-latent-optimization hyperparameters: the decoder weights and
/// one free latent per training image descend jointly on the reconstruction
/// loss; no discriminator anywhere.
struct TrainHyper {
  int epochs = 120;
  double lr_params = 1e-2;
  double lr_latents = 1e-1;
  int batch_size = 16;
  double val_fraction = 0.1;
  int pyramid_levels = 3;
  double pyramid_weight = 1.0;
  bool mirror_augment = false;  // horizontal-flip augmentation
  std::uint64_t seed = 0;
  int jobs = 0;  // 0 = hardware concurrency
};

struct TrainState {
  GeneratorParams params;       // after the last epoch
  GeneratorParams best_params;  // checkpoint with the lowest validation loss
  std::vector<LatentCode> latents;  // one per corpus image, corpus order
  AdamState params_opt;
  std::vector<AdamState> latent_opt;
  int epoch = 0;
  std::uint64_t seed = 0;
  double best_val_loss = 0.0;
  int best_epoch = -1;
  std::vector<std::size_t> val_indices;    // held-out corpus indices
  std::vector<double> train_loss_history;  // [0] = loss at initialization
  std::vector<double> val_loss_history;    // one entry per epoch
};

/// Trains the decoder on the corpus. Latents are re-normalized to the
/// sqrt(latent_dim) hypersphere after every update. A held-out split
/// (val_fraction) tracks generalization: validation latents receive
/// latent-only updates, so the validation loss measures how well the current
/// decoder can reconstruct images its weights never fitted. The best
/// validation loss selects the checkpoint kept in best_params.
/// Deterministic per seed, including under parallel gradient evaluation.
TrainState train_glo(const std::vector<ImageGrid>& corpus,
                     const GeneratorConfig& config, const TrainHyper& hyper);

}  // namespace oodrecon::generator
