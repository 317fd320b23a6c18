#pragma once

// Trainable building blocks shared by every model component.

#include <memory>
#include <string>
#include <vector>

#include "dlgan/autodiff.hpp"
#include "dlgan/rng.hpp"

namespace dlgan {

using ad::Tape;
using ad::Var;

// Batch and step counts of a time-major sequence matrix (steps*batch rows).
struct SeqShape {
  Eigen::Index steps = 0;
  Eigen::Index batch = 0;
  Eigen::Index rows() const { return steps * batch; }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, the usual default.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);

  Var operator()(Tape& tape, const Var& x);
  void collect(ParamList& out);

  Parameter& weight() { return *weight_; }
  Parameter& bias() { return *bias_; }
  Eigen::Index in_features() const { return weight_->value.rows(); }
  Eigen::Index out_features() const { return weight_->value.cols(); }

 private:
  std::unique_ptr<Parameter> weight_;
  std::unique_ptr<Parameter> bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index width);

  Var operator()(Tape& tape, const Var& x);
  void collect(ParamList& out);

 private:
  std::unique_ptr<Parameter> gamma_;
  std::unique_ptr<Parameter> beta_;
};

struct GruOutput {
  Var sequence;  // time-major (steps*batch) x hidden
  Var last;      // batch x hidden
};

class GruLayer {
 public:
  GruLayer() = default;
  GruLayer(const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng);

  // x: time-major (steps*batch) x in. h0 defaults to zeros.
  GruOutput forward(Tape& tape, const Var& x, SeqShape shape, const Var* h0 = nullptr);

  // Single-step access for autoregressive decoding.
  Var input_gates(Tape& tape, const Var& x);
  Var step(Tape& tape, const Var& gates_in, const Var& h);

  void collect(ParamList& out);
  Eigen::Index hidden() const { return w_h_->value.rows(); }
  Eigen::Index input() const { return w_i_->value.rows(); }

 private:
  std::unique_ptr<Parameter> w_i_, b_i_, w_h_, b_h_;
};

class GruStack {
 public:
  GruStack() = default;
  GruStack(const std::string& name, Eigen::Index in, Eigen::Index hidden, int depth, Rng& rng);

  GruOutput forward(Tape& tape, const Var& x, SeqShape shape);
  void collect(ParamList& out);
  Eigen::Index hidden() const { return layers_.back().hidden(); }

 private:
  std::vector<GruLayer> layers_;
};

// Multi-head attention with learned Q/K/V projections and an optional output
// projection. `scaled` selects the 1/sqrt(head width) logit scale.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, Eigen::Index width, Eigen::Index heads, bool scaled,
                     bool output_projection, Rng& rng);

  // query: (groups*query_len) x width, context: (groups*key_len) x width.
  Var operator()(Tape& tape, const Var& query, const Var& context, Eigen::Index groups,
                 Eigen::Index query_len, Eigen::Index key_len);
  void collect(ParamList& out);

  ad::AttentionShape shape(Eigen::Index groups, Eigen::Index query_len, Eigen::Index key_len) const;
  Linear& query_proj() { return q_; }
  Linear& key_proj() { return k_; }

 private:
  Linear q_, k_, v_, o_;
  Eigen::Index width_ = 0;
  Eigen::Index heads_ = 1;
  bool scaled_ = true;
  bool output_projection_ = true;
};

// Post-norm transformer encoder block: LN(x + MHA(x)), then LN(y + FF(y)).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const std::string& name, Eigen::Index width, Eigen::Index heads,
                   Eigen::Index ff_width, Rng& rng);

  // x: group-major (groups*len) x width.
  Var operator()(Tape& tape, const Var& x, Eigen::Index groups, Eigen::Index len);
  void collect(ParamList& out);

 private:
  MultiHeadAttention attn_;
  LayerNorm norm1_, norm2_;
  Linear ff1_, ff2_;
};

// Row permutations between time-major (t*B + b) and group-major (b*T + t).
std::vector<Eigen::Index> time_to_group_major(Eigen::Index steps, Eigen::Index batch);
std::vector<Eigen::Index> group_to_time_major(Eigen::Index steps, Eigen::Index batch);

}  // namespace dlgan
