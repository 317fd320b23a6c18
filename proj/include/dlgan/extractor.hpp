#pragma once

// Temporal feature extractor: hidden sequence -> fixed-length feature vector.
//
//   patch each channel -> embed + positional table -> self-attention over
//   patches (per channel) -> self-attention over channels (per patch
//   position) -> concatenate channels per position -> deep GRU -> last state
//
// Both attention stages add their input back (x + MSA(x)).
//
// With the extractor ablated only the GRU summarizer over H remains.

#include "dlgan/config.hpp"
#include "dlgan/layers.hpp"

namespace dlgan {

// Fixed-length summary plus the per-step summarizer outputs it came from.
struct FeatureOutput {
  Var embedding;  // B x F
  Var steps;      // time-major (S*B) x F
  Eigen::Index step_count = 0;
};

// Splits a length-T channel into T/p contiguous patches (one per row).
Matrix patch(const Eigen::Ref<const Eigen::VectorXd>& channel, Eigen::Index patch_len);

// Sinusoidal table: pe(k, 2i) = sin(k / 10000^(2i/e)), pe(k, 2i+1) = cos(...).
Matrix positional_encoding(Eigen::Index positions, Eigen::Index width);

class TemporalFeatureExtractor {
 public:
  TemporalFeatureExtractor(const TrainingConfig& config, Rng& rng);

  // hidden: time-major (T*B) x N.
  FeatureOutput extract(Tape& tape, const Var& hidden, SeqShape shape);
  Matrix extract(const Matrix& hidden, SeqShape shape);

  // Stages, exposed for inspection. Token rows are ordered (b, d, k) for
  // the temporal stage and (b, k, d) for the channel stage.
  Var patch_tokens(Tape& tape, const Var& hidden, SeqShape shape);  // (B*N*P) x p
  Var embed(Tape& tape, const Var& tokens);                          // + positional table
  Var temporal_attention(Tape& tape, const Var& embedded, Eigen::Index groups);
  Var channel_attention(Tape& tape, const Var& tokens, Eigen::Index groups);

  ParamList params();
  bool ablated() const { return ablated_; }
  Eigen::Index patch_count() const { return patches_; }
  MultiHeadAttention& temporal_msa() { return temporal_msa_; }
  MultiHeadAttention& channel_msa() { return channel_msa_; }

 private:
  bool ablated_;
  Eigen::Index window_, latent_, patch_len_, patches_, embed_width_;
  Linear embed_;
  MultiHeadAttention temporal_msa_;
  MultiHeadAttention channel_msa_;
  GruStack summarizer_;
  Matrix pos_table_;
};

// Repeats each of `steps` rows-blocks (B rows each) `factor` times,
// mapping an (S*B) x C time-major matrix to (S*factor*B) x C.
Var expand_steps(const Var& steps, Eigen::Index step_count, Eigen::Index batch, Eigen::Index factor);

}  // namespace dlgan
