#include "dlgan/reconstructor.hpp"

#include "dlgan/errors.hpp"

namespace dlgan {

using Eigen::Index;

Generator2::Generator2(const TrainingConfig& c, Rng& rng)
    : sequence_input_(c.no_reconstructor),
      window_(c.window),
      latent_(c.latent_dim),
      feature_(c.feature_dim) {
  if (!sequence_input_) init_ = Linear("generator2.init", c.feature_dim, c.feature_dim, rng);
  cell_ = GruLayer("generator2.cell", sequence_input_ ? c.feature_dim : c.latent_dim, c.feature_dim, rng);
  out_ = Linear("generator2.out", c.feature_dim, c.latent_dim, rng);
}

Var Generator2::reconstruct(Tape& tape, const Var& h_emb, ReconstructMode mode, const Var* target) {
  if (sequence_input_) {
    throw Error(ErrorKind::ShapeMismatch, "reconstructor is ablated; use from_sequence");
  }
  if (h_emb.cols() != feature_) throw Error(ErrorKind::ShapeMismatch, "h_emb must have width F");
  const Index batch = h_emb.rows();
  if (mode == ReconstructMode::TeacherForced && target == nullptr) {
    throw Error(ErrorKind::MissingTarget, "teacher forcing needs a target sequence");
  }
  if (mode == ReconstructMode::Autoregressive && target != nullptr) {
    throw Error(ErrorKind::UnexpectedTarget, "autoregressive reconstruction takes no target");
  }
  Var h = init_(tape, h_emb);
  Var zero = tape.constant(Matrix::Zero(batch, latent_));

  if (mode == ReconstructMode::TeacherForced) {
    if (target->rows() != window_ * batch || target->cols() != latent_) {
      throw Error(ErrorKind::ShapeMismatch, "target must be (T*B) x N");
    }
    // Inputs: zero, then target steps 0..T-2.
    Var inputs = ad::concat_rows({zero, ad::slice_rows(*target, 0, (window_ - 1) * batch)});
    GruOutput states = cell_.forward(tape, inputs, SeqShape{window_, batch}, &h);
    return ad::sigmoid(out_(tape, states.sequence));
  }

  std::vector<Var> outputs;
  outputs.reserve(static_cast<std::size_t>(window_));
  Var x = zero;
  for (Index t = 0; t < window_; ++t) {
    h = cell_.step(tape, cell_.input_gates(tape, x), h);
    x = ad::sigmoid(out_(tape, h));
    outputs.push_back(x);
  }
  return ad::concat_rows(outputs);
}

Matrix Generator2::reconstruct(const Matrix& h_emb, ReconstructMode mode, const Matrix* target) {
  Tape tape = Tape::inference();
  Var tv;
  if (target != nullptr) tv = tape.constant(*target);
  return reconstruct(tape, tape.constant(h_emb), mode, target != nullptr ? &tv : nullptr).value();
}

Var Generator2::from_sequence(Tape& tape, const Var& steps, Index batch) {
  if (!sequence_input_) throw Error(ErrorKind::ShapeMismatch, "reconstructor is not ablated");
  if (steps.rows() != window_ * batch || steps.cols() != feature_) {
    throw Error(ErrorKind::ShapeMismatch, "step sequence must be (T*B) x F");
  }
  GruOutput states = cell_.forward(tape, steps, SeqShape{window_, batch});
  return ad::sigmoid(out_(tape, states.sequence));
}

ParamList Generator2::params() {
  ParamList out;
  if (!sequence_input_) init_.collect(out);
  cell_.collect(out);
  out_.collect(out);
  return out;
}

Discriminator2::Discriminator2(const TrainingConfig& c, Rng& rng)
    : latent_(c.latent_dim),
      rnn_("discriminator2.rnn", c.latent_dim, c.feature_dim, static_cast<int>(c.disc_layers), rng),
      out_("discriminator2.out", c.feature_dim, 1, rng) {}

Var Discriminator2::logits(Tape& tape, const Var& seq, SeqShape shape) {
  if (seq.cols() != latent_ || seq.rows() != shape.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "Discriminator2 expects (T*B) x N");
  }
  return out_(tape, rnn_.forward(tape, seq, shape).last);
}

Matrix Discriminator2::logits(const Matrix& seq, SeqShape shape) {
  Tape tape = Tape::inference();
  return logits(tape, tape.constant(seq), shape).value();
}

ParamList Discriminator2::params() {
  ParamList out;
  rnn_.collect(out);
  out_.collect(out);
  return out;
}

}  // namespace dlgan
