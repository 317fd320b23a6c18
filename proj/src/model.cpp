#include "dlgan/model.hpp"

namespace dlgan {

namespace {

void append(ParamList& out, const ParamList& more) { out.insert(out.end(), more.begin(), more.end()); }

TrainingConfig checked(const TrainingConfig& c) {
  c.validate();
  return c;
}

}  // namespace

DlganModel::DlganModel(const TrainingConfig& resolved)
    : config_(checked(resolved)),
      init_rng_(splitmix64(resolved.seed)),
      autoencoder(config_, init_rng_),
      extractor(config_, init_rng_),
      generator1(config_, init_rng_),
      discriminator1(config_, init_rng_),
      generator2(config_, init_rng_),
      discriminator2(config_, init_rng_) {}

ParamList DlganModel::generator_params() {
  ParamList out = generator1.params();
  append(out, generator2.params());
  if (config_.joint_extractor) append(out, extractor.params());
  return out;
}

ParamList DlganModel::discriminator_params() {
  ParamList out = discriminator1.params();
  append(out, discriminator2.params());
  return out;
}

ParamList DlganModel::all_params() {
  ParamList out = autoencoder.params();
  append(out, extractor.params());
  append(out, generator1.params());
  append(out, discriminator1.params());
  append(out, generator2.params());
  append(out, discriminator2.params());
  return out;
}

Var DlganModel::reconstruct_fake(Tape& tape, const FeatureOutput& fake, Eigen::Index batch) {
  if (generator2.sequence_input()) return generator2.from_sequence(tape, fake.steps, batch);
  return generator2.reconstruct(tape, fake.embedding, ReconstructMode::Autoregressive);
}

Var DlganModel::reconstruct_real(Tape& tape, const FeatureOutput& real, const Var& h_real, Eigen::Index batch) {
  if (generator2.sequence_input()) {
    const Eigen::Index factor = config_.window / real.step_count;
    return generator2.from_sequence(tape, expand_steps(real.steps, real.step_count, batch, factor), batch);
  }
  return generator2.reconstruct(tape, real.embedding, ReconstructMode::TeacherForced, &h_real);
}

}  // namespace dlgan
