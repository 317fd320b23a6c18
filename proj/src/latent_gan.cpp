#include "dlgan/latent_gan.hpp"

#include <algorithm>
#include <cmath>

#include "dlgan/errors.hpp"
#include "dlgan/rng.hpp"

namespace dlgan {

using Eigen::Index;

Matrix sample_noise(Index batch, Index length, Index dim, std::uint64_t seed, std::uint64_t first_index) {
  Matrix z(batch * length, dim);
  for (Index b = 0; b < batch; ++b) {
    Rng rng = Rng::stream(seed, first_index + static_cast<std::uint64_t>(b));
    z.middleRows(b * length, length) = rng.normal_matrix(length, dim);
  }
  return z;
}

Matrix moving_average(const Matrix& z, Index window) { return moving_average(z, z.rows(), window); }

Matrix moving_average(const Matrix& z, Index length, Index window) {
  if (window < 1 || window % 2 == 0 || window > length) {
    throw Error(ErrorKind::BadWindow, "window " + std::to_string(window) + " for length " + std::to_string(length));
  }
  if (length < 1 || z.rows() % length != 0) throw Error(ErrorKind::ShapeMismatch, "moving_average length");
  const Index half = window / 2;
  Matrix out(z.rows(), z.cols());
  for (Index g = 0; g < z.rows() / length; ++g) {
    const auto block = z.middleRows(g * length, length);
    for (Index t = 0; t < length; ++t) {
      RowVector acc = RowVector::Zero(z.cols());
      for (Index o = -half; o <= half; ++o) acc += block.row(std::clamp<Index>(t + o, 0, length - 1));
      out.row(g * length + t) = acc / static_cast<double>(window);
    }
  }
  return out;
}

Var cross_attention(const Var& q, const Var& k, const Var& v, Index groups, bool scaled) {
  ad::AttentionShape s;
  s.groups = groups;
  s.query_len = q.rows() / groups;
  s.key_len = k.rows() / groups;
  s.heads = 1;
  s.scale = scaled ? 1.0 / std::sqrt(static_cast<double>(q.cols())) : 1.0;
  return ad::attention(q, k, v, s);
}

Matrix cross_attention(const Matrix& q, const Matrix& k, const Matrix& v, bool scaled) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || v.cols() != q.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "cross_attention operand shapes");
  }
  Tape tape = Tape::inference();
  return cross_attention(tape.constant(q), tape.constant(k), tape.constant(v), 1, scaled).value();
}

Generator1::Generator1(const TrainingConfig& c, Rng& rng)
    : len_(c.noise_len),
      dim_(c.noise_dim),
      trend_window_(c.trend_window),
      ca_scaled_(c.ca_scaled),
      trend_tf_("generator1.trend_tf", c.noise_dim, c.heads, c.ff_mult * c.noise_dim, rng),
      detail_tf_("generator1.detail_tf", c.noise_dim, c.heads, c.ff_mult * c.noise_dim, rng),
      ca_q_("generator1.ca_q", c.noise_dim, c.noise_dim, rng),
      ca_k_("generator1.ca_k", c.noise_dim, c.noise_dim, rng),
      ca_v_("generator1.ca_v", c.noise_dim, c.noise_dim, rng),
      rnn_("generator1.rnn", c.noise_dim, c.feature_dim, static_cast<int>(c.generator_layers), rng) {}

FeatureOutput Generator1::generate(Tape& tape, const Matrix& z, Index batch) {
  if (z.rows() != batch * len_ || z.cols() != dim_) {
    throw Error(ErrorKind::ShapeMismatch, "noise must be (B*L_z) x D_z");
  }
  Var trend = trend_tf_(tape, tape.constant(moving_average(z, len_, trend_window_)), batch, len_);
  Var detail = detail_tf_(tape, tape.constant(z), batch, len_);
  Var mixed = cross_attention(ca_q_(tape, trend), ca_k_(tape, detail), ca_v_(tape, detail), batch, ca_scaled_);
  Var seq = ad::gather_rows(mixed, group_to_time_major(len_, batch));
  GruOutput out = rnn_.forward(tape, seq, SeqShape{len_, batch});
  return {out.last, out.sequence, len_};
}

Matrix Generator1::generate(const Matrix& z, Index batch) {
  Tape tape = Tape::inference();
  return generate(tape, z, batch).embedding.value();
}

ParamList Generator1::params() {
  ParamList out;
  trend_tf_.collect(out);
  detail_tf_.collect(out);
  ca_q_.collect(out);
  ca_k_.collect(out);
  ca_v_.collect(out);
  rnn_.collect(out);
  return out;
}

Discriminator1::Discriminator1(const TrainingConfig& c, Rng& rng)
    : width_(c.feature_dim),
      fc1_("discriminator1.fc1", c.feature_dim, 2 * c.feature_dim, rng),
      fc2_("discriminator1.fc2", 2 * c.feature_dim, c.feature_dim, rng),
      out_("discriminator1.out", c.feature_dim, 1, rng) {}

Var Discriminator1::logits(Tape& tape, const Var& h) {
  if (h.cols() != width_) throw Error(ErrorKind::ShapeMismatch, "Discriminator1 expects width F");
  Var x = ad::leaky_relu(fc1_(tape, h), 0.2);
  x = ad::leaky_relu(fc2_(tape, x), 0.2);
  return out_(tape, x);
}

Matrix Discriminator1::logits(const Matrix& h) {
  Tape tape = Tape::inference();
  return logits(tape, tape.constant(h)).value();
}

ParamList Discriminator1::params() {
  ParamList out;
  fc1_.collect(out);
  fc2_.collect(out);
  out_.collect(out);
  return out;
}

}  // namespace dlgan
