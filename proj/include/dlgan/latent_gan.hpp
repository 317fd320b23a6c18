#pragma once

// Generator1 maps noise Z to a synthetic feature vector:
//   trend  = TF(moving_average(Z))      (query)
//   detail = TF(Z)                      (key and value)
//   H_emb  = GRU(CA(trend, detail, detail))
// Discriminator1 scores feature vectors with a small feed-forward net.

#include <cstdint>

#include "dlgan/config.hpp"
#include "dlgan/extractor.hpp"
#include "dlgan/layers.hpp"

namespace dlgan {

// B noise sequences stacked group-major: (B*L) x D, row b*L + t. Sample i
// is drawn from Rng::stream(seed, first_index + i) so any sample can be
// regenerated on its own.
Matrix sample_noise(Eigen::Index batch, Eigen::Index length, Eigen::Index dim, std::uint64_t seed,
                    std::uint64_t first_index = 0);

// Centered moving average along rows (time) of one L x D sequence with
// edge-replication padding; odd window, stride 1, length preserved.
Matrix moving_average(const Matrix& z, Eigen::Index window);
// Same, applied to each of the `groups` group-major blocks of L rows.
Matrix moving_average(const Matrix& z, Eigen::Index length, Eigen::Index window);

// CA(Q, K, V) = softmax(Q K^T) V per group, single head, optionally scaled
// by 1/sqrt(width).
Var cross_attention(const Var& q, const Var& k, const Var& v, Eigen::Index groups, bool scaled);
Matrix cross_attention(const Matrix& q, const Matrix& k, const Matrix& v, bool scaled = false);

class Generator1 {
 public:
  Generator1(const TrainingConfig& config, Rng& rng);

  // z: group-major (B*L) x D noise.
  FeatureOutput generate(Tape& tape, const Matrix& z, Eigen::Index batch);
  Matrix generate(const Matrix& z, Eigen::Index batch);

  ParamList params();
  Eigen::Index noise_len() const { return len_; }
  Eigen::Index noise_dim() const { return dim_; }

 private:
  Eigen::Index len_, dim_, trend_window_;
  bool ca_scaled_;
  TransformerBlock trend_tf_;
  TransformerBlock detail_tf_;
  Linear ca_q_, ca_k_, ca_v_;
  GruStack rnn_;
};

class Discriminator1 {
 public:
  Discriminator1(const TrainingConfig& config, Rng& rng);

  // h: B x F -> B x 1 logits
  Var logits(Tape& tape, const Var& h);
  Matrix logits(const Matrix& h);

  ParamList params();
  Linear& head() { return out_; }

 private:
  Eigen::Index width_;
  Linear fc1_, fc2_, out_;
};

}  // namespace dlgan
