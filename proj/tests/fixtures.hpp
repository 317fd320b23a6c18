#pragma once

#include "dlgan/config.hpp"
#include "dlgan/data.hpp"
#include "dlgan/rng.hpp"

namespace fixture {

// Small geometry for gradient checks and fast property tests.
inline dlgan::TrainingConfig tiny(long m = 2) {
  dlgan::TrainingConfig c;
  c.window = 4;
  c.patch_len = 2;
  c.patch_embed = 4;
  c.heads = 2;
  c.latent_dim = 3;
  c.feature_dim = 3;
  c.noise_len = 4;
  c.noise_dim = 4;
  c.trend_window = 3;
  c.ae_layers = 2;
  c.summary_layers = 1;
  c.generator_layers = 1;
  c.disc_layers = 1;
  c.batch_size = 4;
  c.epochs_ae = 1;
  c.epochs_latent = 1;
  c.epochs_joint = 1;
  c.seed = 3;
  c.resolve(m);
  return c;
}

// Medium geometry with the default ratios, still quick to run.
inline dlgan::TrainingConfig small(long m = 3) {
  dlgan::TrainingConfig c;
  c.window = 8;
  c.patch_len = 2;
  c.patch_embed = 8;
  c.batch_size = 16;
  c.epochs_ae = 1;
  c.epochs_latent = 1;
  c.epochs_joint = 1;
  c.resolve(m);
  return c;
}

inline dlgan::Matrix uniform_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  dlgan::Rng rng(seed);
  return rng.uniform_matrix(rows, cols, 0.0, 1.0);
}

inline dlgan::Dataset sine(Eigen::Index length, Eigen::Index features, Eigen::Index window, std::uint64_t seed = 1) {
  return dlgan::prepare_dataset(dlgan::make_sine(length, features, seed), window, 1);
}

}  // namespace fixture
