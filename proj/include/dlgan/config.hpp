#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace dlgan {

enum class Ablation { None, NoExtractor, NoReconstructor, All };

Ablation parse_ablation(const std::string& s);
std::string to_string(Ablation a);

// Every model and training hyperparameter. Zero-valued dimensions are
// derived from the data by resolve().
struct TrainingConfig {
  // data
  long window = 24;  // T
  long stride = 1;

  // geometry
  long latent_dim = 0;   // N; 0 -> min(4*M, 24)
  long feature_dim = 0;  // F; 0 -> N
  long patch_len = 4;    // p
  long patch_embed = 16; // e
  long heads = 4;
  long trend_window = 5; // w
  long noise_len = 0;    // L_z; 0 -> T
  long noise_dim = 0;    // D_z; 0 -> N

  // depths
  long ae_layers = 3;
  long summary_layers = 2;
  long generator_layers = 2;
  long disc_layers = 2;
  long ff_mult = 2;

  // optimization
  double lr_pretrain = 1e-3;
  double lr_joint = 2e-4;
  double lr_disc = 0;    // discriminator rate in phase 3; 0 -> lr_joint
  long batch_size = 128;
  long epochs_ae = 50;
  long epochs_latent = 50;
  long epochs_joint = 25;
  long disc_steps = 1;   // discriminator updates per joint step
  std::uint64_t seed = 7;

  // ablations and loss variants
  bool no_extractor = false;
  bool no_reconstructor = false;
  bool ca_scaled = false;              // scale generator cross-attention logits
  bool extractor_scaled = true;        // scale extractor attention logits
  bool d2_real_recon_as_fake = true;   // Discriminator2 labels teacher-forced reconstructions fake
  bool joint_extractor = true;         // joint sub-step (a) also updates the extractor

  long features = 0;  // M, filled from the data

  // Fills derived dimensions for M features; throws ConfigInvalid.
  void resolve(long m);
  // Throws Error(ConfigInvalid) naming the failing field.
  void validate() const;

  Ablation ablation() const;
  void set_ablation(Ablation a);

  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);

  // Flat "key = value" text, '#' comments.
  std::string to_text() const;
  static TrainingConfig parse_text(const std::string& text);
  static TrainingConfig load(const std::string& path);
};

}  // namespace dlgan
