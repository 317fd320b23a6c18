#pragma once

#include "dlgan/config.hpp"
#include "dlgan/layers.hpp"

namespace dlgan {

enum class ReconstructMode { Autoregressive, TeacherForced };

// Generator2 rebuilds a T x N hidden sequence from a feature vector. The GRU
// state starts from a learned projection of H_emb, the first input is zero,
// and each later input is either the previous output (autoregressive) or the
// previous target step (teacher forced). Outputs pass a sigmoid.
//
// With the reconstructor ablated, the generator instead reads a per-step
// feature sequence (T steps of width F) and has no feedback path.
class Generator2 {
 public:
  Generator2(const TrainingConfig& config, Rng& rng);

  // h_emb: B x F. target: time-major (T*B) x N, required iff teacher forced.
  Var reconstruct(Tape& tape, const Var& h_emb, ReconstructMode mode, const Var* target = nullptr);
  Matrix reconstruct(const Matrix& h_emb, ReconstructMode mode, const Matrix* target = nullptr);

  // Ablation path. steps: time-major (T*B) x F.
  Var from_sequence(Tape& tape, const Var& steps, Eigen::Index batch);

  ParamList params();
  bool sequence_input() const { return sequence_input_; }
  Eigen::Index steps() const { return window_; }

 private:
  bool sequence_input_;
  Eigen::Index window_, latent_, feature_;
  Linear init_;
  GruLayer cell_;
  Linear out_;
};

// Recurrent classifier over hidden sequences: deep GRU, last state, linear.
class Discriminator2 {
 public:
  Discriminator2(const TrainingConfig& config, Rng& rng);

  // seq: time-major (T*B) x N -> B x 1 logits
  Var logits(Tape& tape, const Var& seq, SeqShape shape);
  Matrix logits(const Matrix& seq, SeqShape shape);

  ParamList params();
  Linear& head() { return out_; }

 private:
  Eigen::Index latent_;
  GruStack rnn_;
  Linear out_;
};

}  // namespace dlgan
