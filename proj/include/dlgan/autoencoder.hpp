#pragma once

#include "dlgan/config.hpp"
#include "dlgan/layers.hpp"

namespace dlgan {

// Deep GRU encoder X -> H and decoder H -> X^, both ending in a sigmoid
// projection so hidden sequences and reconstructions lie in (0, 1).
class SequenceAutoencoder {
 public:
  SequenceAutoencoder(const TrainingConfig& config, Rng& rng);

  // x: time-major (T*B) x M  ->  (T*B) x N
  Var encode(Tape& tape, const Var& x, SeqShape shape);
  // h: time-major (T*B) x N  ->  (T*B) x M
  Var decode(Tape& tape, const Var& h, SeqShape shape);

  Matrix encode(const Matrix& x, SeqShape shape);
  Matrix decode(const Matrix& h, SeqShape shape);

  ParamList params();
  ParamList encoder_params();
  ParamList decoder_params();

  Eigen::Index features() const { return features_; }
  Eigen::Index latent() const { return latent_; }

 private:
  Eigen::Index features_;
  Eigen::Index latent_;
  GruStack enc_rnn_;
  Linear enc_out_;
  GruStack dec_rnn_;
  Linear dec_out_;
};

// Mean over batch, time and features of squared differences.
Var reconstruction_loss(const Var& x, const Var& x_hat);
double reconstruction_loss(const Matrix& x, const Matrix& x_hat);

}  // namespace dlgan
