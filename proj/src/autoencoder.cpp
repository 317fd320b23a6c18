#include "dlgan/autoencoder.hpp"

#include "dlgan/errors.hpp"

namespace dlgan {

namespace {

void require_finite(const Var& v, const char* where) {
  if (!v.value().allFinite()) throw Error(ErrorKind::NonFiniteActivation, where);
}

}  // namespace

SequenceAutoencoder::SequenceAutoencoder(const TrainingConfig& c, Rng& rng)
    : features_(c.features),
      latent_(c.latent_dim),
      enc_rnn_("encoder.rnn", c.features, c.latent_dim, static_cast<int>(c.ae_layers), rng),
      enc_out_("encoder.out", c.latent_dim, c.latent_dim, rng),
      dec_rnn_("decoder.rnn", c.latent_dim, c.latent_dim, static_cast<int>(c.ae_layers), rng),
      dec_out_("decoder.out", c.latent_dim, c.features, rng) {}

Var SequenceAutoencoder::encode(Tape& tape, const Var& x, SeqShape shape) {
  if (x.cols() != features_ || x.rows() != shape.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "encode expects (T*B) x " + std::to_string(features_));
  }
  Var h = ad::sigmoid(enc_out_(tape, enc_rnn_.forward(tape, x, shape).sequence));
  require_finite(h, "encoder output");
  return h;
}

Var SequenceAutoencoder::decode(Tape& tape, const Var& h, SeqShape shape) {
  if (h.cols() != latent_ || h.rows() != shape.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "decode expects (T*B) x " + std::to_string(latent_));
  }
  Var x = ad::sigmoid(dec_out_(tape, dec_rnn_.forward(tape, h, shape).sequence));
  require_finite(x, "decoder output");
  return x;
}

Matrix SequenceAutoencoder::encode(const Matrix& x, SeqShape shape) {
  Tape tape = Tape::inference();
  return encode(tape, tape.constant(x), shape).value();
}

Matrix SequenceAutoencoder::decode(const Matrix& h, SeqShape shape) {
  Tape tape = Tape::inference();
  return decode(tape, tape.constant(h), shape).value();
}

ParamList SequenceAutoencoder::encoder_params() {
  ParamList out;
  enc_rnn_.collect(out);
  enc_out_.collect(out);
  return out;
}

ParamList SequenceAutoencoder::decoder_params() {
  ParamList out;
  dec_rnn_.collect(out);
  dec_out_.collect(out);
  return out;
}

ParamList SequenceAutoencoder::params() {
  ParamList out = encoder_params();
  ParamList dec = decoder_params();
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

Var reconstruction_loss(const Var& x, const Var& x_hat) { return ad::mse(x, x_hat); }

double reconstruction_loss(const Matrix& x, const Matrix& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "reconstruction_loss operand shapes");
  }
  return (x - x_hat).squaredNorm() / static_cast<double>(x.size());
}

}  // namespace dlgan
