#pragma once

#include "dlgan/autoencoder.hpp"
#include "dlgan/config.hpp"
#include "dlgan/extractor.hpp"
#include "dlgan/latent_gan.hpp"
#include "dlgan/reconstructor.hpp"
#include "dlgan/rng.hpp"

namespace dlgan {

// All trainable components. Construction order fixes the initialization
// stream, so a resolved config fully determines the initial weights.
class DlganModel {
 public:
  explicit DlganModel(const TrainingConfig& resolved);

  DlganModel(const DlganModel&) = delete;
  DlganModel& operator=(const DlganModel&) = delete;

  const TrainingConfig& config() const { return config_; }

  ParamList autoencoder_params() { return autoencoder.params(); }
  ParamList generator_params();      // Generator1 + Generator2 + extractor
  ParamList discriminator_params();  // Discriminator1 + Discriminator2
  ParamList all_params();            // fixed checkpoint order

  // Per-step/vector features -> reconstructed hidden sequence, for the
  // synthetic path (autoregressive) and the real path (teacher forced).
  Var reconstruct_fake(Tape& tape, const FeatureOutput& fake, Eigen::Index batch);
  Var reconstruct_real(Tape& tape, const FeatureOutput& real, const Var& h_real, Eigen::Index batch);

 private:
  TrainingConfig config_;
  Rng init_rng_;

 public:
  SequenceAutoencoder autoencoder;
  TemporalFeatureExtractor extractor;
  Generator1 generator1;
  Discriminator1 discriminator1;
  Generator2 generator2;
  Discriminator2 discriminator2;
};

}  // namespace dlgan
