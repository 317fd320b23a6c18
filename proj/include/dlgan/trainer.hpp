#pragma once

// Three-phase training:
//   1. autoencoder pretraining on L_R^AE = mse(X, X^)
//   2. extractor + Generator2 pretraining on L_R^H = mse(H, H^real)
//      with the encoder frozen
//   3. joint steps, each made of
//        (a) Generator1 + Generator2 + extractor on
//            L_G = gan(y1) + gan(y2) + mse(H, H^real)
//        (b) encoder + decoder on L_R^AE + L_R^H
//        (c) both discriminators on L_D = gan(y1) + gan(y2)

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlgan/checkpoint.hpp"
#include "dlgan/data.hpp"
#include "dlgan/model.hpp"
#include "dlgan/optim.hpp"

namespace dlgan {

enum class GanSide { Generator, Discriminator };

// Discriminator side: 0.5 * (BCE(real, 1) + BCE(fake, 0)).
// Generator side (non-saturating): BCE(fake, 1); real logits are unused.
Var gan_loss(const Var& real_logits, const Var& fake_logits, GanSide side);
Var generator_gan_loss(const Var& fake_logits);
double gan_loss(const Matrix& real_logits, const Matrix& fake_logits, GanSide side);

// Loss graphs recorded on `tape`. x: time-major (T*B) x M windows,
// z: group-major noise for B samples.
Var autoencoder_loss(DlganModel& model, Tape& tape, const Matrix& x, Eigen::Index batch);  // L_R^AE
Var latent_loss(DlganModel& model, Tape& tape, const Matrix& x, Eigen::Index batch);       // L_R^H

struct GeneratorLoss {
  Var gan1, gan2, mse, total;  // L_G = gan1 + gan2 + mse
};
GeneratorLoss generator_loss(DlganModel& model, Tape& tape, const Matrix& x, const Matrix& z, Eigen::Index batch);

struct FinetuneLoss {
  Var ae, h, total;  // L_R^AE + L_R^H
};
FinetuneLoss finetune_loss(DlganModel& model, Tape& tape, const Matrix& x, Eigen::Index batch);

struct DiscriminatorLoss {
  Var gan1, gan2, total;  // L_D = gan1 + gan2
};
DiscriminatorLoss discriminator_loss(DlganModel& model, Tape& tape, const Matrix& x, const Matrix& z,
                                     Eigen::Index batch);

enum class Substep { Generators, Autoencoder, Discriminators };

struct LossRecord {
  int phase = 0;
  long epoch = 0;
  long step = 0;
  double ae = 0;  // L_R^AE
  double h = 0;   // L_R^H
  double g = 0;   // L_G
  double d = 0;   // L_D
  double g_gan1 = 0, g_gan2 = 0, g_mse = 0;
  double d_gan1 = 0, d_gan2 = 0;

  nlohmann::json to_json() const;
  bool finite() const;
};

class Trainer {
 public:
  using LossSink = std::function<void(const LossRecord&)>;

  // `windows` are normalized training windows; `config` is resolved against
  // their feature count.
  Trainer(TrainingConfig config, std::vector<TimeSeriesWindow> windows, NormStats stats,
          std::vector<std::string> feature_names);
  // Rebuilds a model from a checkpoint (synthesis only unless windows given).
  explicit Trainer(const Checkpoint& checkpoint, std::vector<TimeSeriesWindow> windows = {});

  std::vector<LossRecord> pretrain_autoencoder(const LossSink& sink = {});
  std::vector<LossRecord> pretrain_latent_path(const LossSink& sink = {});
  std::vector<LossRecord> train_joint(const LossSink& sink = {});
  void train(const LossSink& sink = {});

  // One joint iteration on the given window indices with a fresh noise batch.
  LossRecord joint_step(const std::vector<std::size_t>& batch);
  LossRecord joint_step(const std::vector<std::size_t>& batch, std::uint64_t noise_seed);
  // A single sub-step of a joint iteration; only its loss fields are set.
  LossRecord joint_substep(Substep which, const std::vector<std::size_t>& batch, std::uint64_t noise_seed);

  // Generator-side terms on a batch without updating anything.
  LossRecord evaluate_losses(const std::vector<std::size_t>& batch, std::uint64_t noise_seed);

  // Synthetic windows in (0, 1) (normalized) or in original units.
  std::vector<Matrix> synthesize(std::size_t n, std::uint64_t seed, bool denormalized = true);

  Checkpoint checkpoint();

  DlganModel& model() { return *model_; }
  const TrainingConfig& config() const { return config_; }
  const NormStats& stats() const { return stats_; }
  const std::vector<TimeSeriesWindow>& windows() const { return windows_; }
  int phase_completed() const { return phase_; }

  // Losses on held-out windows, for reporting.
  double autoencoder_loss(const std::vector<std::size_t>& batch);
  double latent_loss(const std::vector<std::size_t>& batch);

 private:
  LossRecord run_epoch_phase(int phase, long epoch, Adam& opt, const LossSink& sink);
  void require_windows() const;
  void make_joint_optimizers();
  void substep(Substep which, const Matrix& x, const Matrix& z, Eigen::Index batch, LossRecord& rec);

  TrainingConfig config_;
  std::vector<TimeSeriesWindow> windows_;
  NormStats stats_;
  std::vector<std::string> feature_names_;
  std::unique_ptr<DlganModel> model_;
  Rng rng_;
  int phase_ = 0;
  long epoch_ = 0;
  std::unique_ptr<Adam> gen_opt_, ae_opt_, disc_opt_;
};

// Z -> Generator1 -> Generator2 -> decoder, in (0, 1).
std::vector<Matrix> synthesize_normalized(DlganModel& model, std::size_t n, std::uint64_t seed);

// Checkpoint-level entry point; throws UntrainedCheckpoint unless all three
// phases completed.
std::vector<Matrix> synthesize(const Checkpoint& checkpoint, std::size_t n, std::uint64_t seed,
                               bool denormalized = true);

}  // namespace dlgan
