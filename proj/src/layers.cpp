#include "dlgan/layers.hpp"

#include <cmath>

#include "dlgan/errors.hpp"

namespace dlgan {

using Eigen::Index;

namespace {

std::unique_ptr<Parameter> uniform_param(const std::string& name, Index rows, Index cols, double bound,
                                         Rng& rng) {
  return std::make_unique<Parameter>(name, rng.uniform_matrix(rows, cols, -bound, bound));
}

}  // namespace

Linear::Linear(const std::string& name, Index in, Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = uniform_param(name + ".weight", in, out, bound, rng);
  bias_ = uniform_param(name + ".bias", 1, out, bound, rng);
}

Var Linear::operator()(Tape& tape, const Var& x) {
  return ad::add_row(ad::matmul(x, tape.param(*weight_)), tape.param(*bias_));
}

void Linear::collect(ParamList& out) {
  out.push_back(weight_.get());
  out.push_back(bias_.get());
}

LayerNorm::LayerNorm(const std::string& name, Index width)
    : gamma_(std::make_unique<Parameter>(name + ".gamma", Matrix::Ones(1, width))),
      beta_(std::make_unique<Parameter>(name + ".beta", Matrix::Zero(1, width))) {}

Var LayerNorm::operator()(Tape& tape, const Var& x) {
  return ad::add_row(ad::mul_row(ad::layer_norm(x), tape.param(*gamma_)), tape.param(*beta_));
}

void LayerNorm::collect(ParamList& out) {
  out.push_back(gamma_.get());
  out.push_back(beta_.get());
}

GruLayer::GruLayer(const std::string& name, Index in, Index hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  const double glorot = std::sqrt(6.0 / static_cast<double>(in + 3 * hidden));
  w_i_ = uniform_param(name + ".w_i", in, 3 * hidden, glorot, rng);
  b_i_ = uniform_param(name + ".b_i", 1, 3 * hidden, bound, rng);
  w_h_ = uniform_param(name + ".w_h", hidden, 3 * hidden, bound, rng);
  b_h_ = uniform_param(name + ".b_h", 1, 3 * hidden, bound, rng);
}

Var GruLayer::input_gates(Tape& tape, const Var& x) {
  return ad::add_row(ad::matmul(x, tape.param(*w_i_)), tape.param(*b_i_));
}

Var GruLayer::step(Tape& tape, const Var& gates_in, const Var& h) {
  return ad::gru_cell(gates_in, h, tape.param(*w_h_), tape.param(*b_h_));
}

GruOutput GruLayer::forward(Tape& tape, const Var& x, SeqShape shape, const Var* h0) {
  if (x.rows() != shape.rows() || x.cols() != input()) {
    throw Error(ErrorKind::ShapeMismatch, "GRU input shape");
  }
  Var gates = input_gates(tape, x);
  Var h = h0 != nullptr ? *h0 : tape.constant(Matrix::Zero(shape.batch, hidden()));
  std::vector<Var> states;
  states.reserve(static_cast<std::size_t>(shape.steps));
  for (Index t = 0; t < shape.steps; ++t) {
    h = step(tape, ad::slice_rows(gates, t * shape.batch, shape.batch), h);
    states.push_back(h);
  }
  return {ad::concat_rows(states), h};
}

void GruLayer::collect(ParamList& out) {
  out.push_back(w_i_.get());
  out.push_back(b_i_.get());
  out.push_back(w_h_.get());
  out.push_back(b_h_.get());
}

GruStack::GruStack(const std::string& name, Index in, Index hidden, int depth, Rng& rng) {
  if (depth < 1) throw Error(ErrorKind::ConfigInvalid, name + ": recurrent depth must be >= 1");
  for (int l = 0; l < depth; ++l) {
    layers_.emplace_back(name + ".layer" + std::to_string(l), l == 0 ? in : hidden, hidden, rng);
  }
}

GruOutput GruStack::forward(Tape& tape, const Var& x, SeqShape shape) {
  GruOutput out{x, Var{}};
  for (GruLayer& layer : layers_) out = layer.forward(tape, out.sequence, shape);
  return out;
}

void GruStack::collect(ParamList& out) {
  for (GruLayer& layer : layers_) layer.collect(out);
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, Index width, Index heads, bool scaled,
                                       bool output_projection, Rng& rng)
    : q_(name + ".q", width, width, rng),
      k_(name + ".k", width, width, rng),
      v_(name + ".v", width, width, rng),
      width_(width),
      heads_(heads),
      scaled_(scaled),
      output_projection_(output_projection) {
  if (heads < 1 || width % heads != 0) {
    throw Error(ErrorKind::HeadDivisibility,
                name + ": width " + std::to_string(width) + " not divisible by " + std::to_string(heads));
  }
  if (output_projection_) o_ = Linear(name + ".o", width, width, rng);
}

ad::AttentionShape MultiHeadAttention::shape(Index groups, Index query_len, Index key_len) const {
  ad::AttentionShape s;
  s.groups = groups;
  s.query_len = query_len;
  s.key_len = key_len;
  s.heads = heads_;
  s.scale = scaled_ ? 1.0 / std::sqrt(static_cast<double>(width_ / heads_)) : 1.0;
  return s;
}

Var MultiHeadAttention::operator()(Tape& tape, const Var& query, const Var& context, Index groups,
                                   Index query_len, Index key_len) {
  Var out = ad::attention(q_(tape, query), k_(tape, context), v_(tape, context),
                          shape(groups, query_len, key_len));
  return output_projection_ ? o_(tape, out) : out;
}

void MultiHeadAttention::collect(ParamList& out) {
  q_.collect(out);
  k_.collect(out);
  v_.collect(out);
  if (output_projection_) o_.collect(out);
}

TransformerBlock::TransformerBlock(const std::string& name, Index width, Index heads, Index ff_width,
                                   Rng& rng)
    : attn_(name + ".attn", width, heads, true, true, rng),
      norm1_(name + ".norm1", width),
      norm2_(name + ".norm2", width),
      ff1_(name + ".ff1", width, ff_width, rng),
      ff2_(name + ".ff2", ff_width, width, rng) {}

Var TransformerBlock::operator()(Tape& tape, const Var& x, Index groups, Index len) {
  Var y = norm1_(tape, ad::add(x, attn_(tape, x, x, groups, len, len)));
  Var ff = ff2_(tape, ad::relu(ff1_(tape, y)));
  return norm2_(tape, ad::add(y, ff));
}

void TransformerBlock::collect(ParamList& out) {
  attn_.collect(out);
  norm1_.collect(out);
  norm2_.collect(out);
  ff1_.collect(out);
  ff2_.collect(out);
}

std::vector<Index> time_to_group_major(Index steps, Index batch) {
  // output row b*steps + t reads time-major row t*batch + b
  std::vector<Index> idx(static_cast<std::size_t>(steps * batch));
  for (Index b = 0; b < batch; ++b) {
    for (Index t = 0; t < steps; ++t) idx[static_cast<std::size_t>(b * steps + t)] = t * batch + b;
  }
  return idx;
}

std::vector<Index> group_to_time_major(Index steps, Index batch) {
  std::vector<Index> idx(static_cast<std::size_t>(steps * batch));
  for (Index t = 0; t < steps; ++t) {
    for (Index b = 0; b < batch; ++b) idx[static_cast<std::size_t>(t * batch + b)] = b * steps + t;
  }
  return idx;
}

}  // namespace dlgan
