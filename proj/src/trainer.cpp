#include "dlgan/trainer.hpp"

#include <cmath>

#include "dlgan/errors.hpp"

namespace dlgan {

using Eigen::Index;

Var generator_gan_loss(const Var& fake_logits) { return ad::bce_with_logits(fake_logits, 1.0); }

Var gan_loss(const Var& real_logits, const Var& fake_logits, GanSide side) {
  if (side == GanSide::Generator) return generator_gan_loss(fake_logits);
  return ad::scale(ad::add(ad::bce_with_logits(real_logits, 1.0), ad::bce_with_logits(fake_logits, 0.0)), 0.5);
}

double gan_loss(const Matrix& real_logits, const Matrix& fake_logits, GanSide side) {
  Tape tape = Tape::inference();
  return gan_loss(tape.constant(real_logits), tape.constant(fake_logits), side).scalar();
}

nlohmann::json LossRecord::to_json() const {
  return {{"phase", phase},   {"epoch", epoch},   {"step", step},     {"L_R_AE", ae},
          {"L_R_H", h},       {"L_G", g},         {"L_D", d},         {"L_G_gan1", g_gan1},
          {"L_G_gan2", g_gan2}, {"L_G_mse", g_mse}, {"L_D_gan1", d_gan1}, {"L_D_gan2", d_gan2}};
}

bool LossRecord::finite() const {
  for (double v : {ae, h, g, d, g_gan1, g_gan2, g_mse, d_gan1, d_gan2}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {

enum Needs : unsigned {
  kDecode = 1,       // X^ from the decoder
  kFake = 2,         // Generator1 and the synthetic reconstruction
  kFakeLogits = 4,   // discriminator scores of synthetic/reconstructed data
  kRealLogits = 8,   // discriminator scores of real data
};

std::uint64_t phase_seed(std::uint64_t seed, int phase) { return splitmix64(seed ^ (0x100ULL * phase)); }

std::vector<Matrix> snapshot(DlganModel& model) {
  std::vector<Matrix> out;
  for (Parameter* p : model.all_params()) out.push_back(p->value);
  return out;
}

void restore(DlganModel& model, const std::vector<Matrix>& values) {
  std::size_t i = 0;
  for (Parameter* p : model.all_params()) p->value = values[i++];
}

[[noreturn]] void diverged(const std::string& what) {
  throw Error(ErrorKind::DivergenceDetected, what + " is not finite; parameters restored to the last good epoch");
}

}  // namespace

Trainer::Trainer(TrainingConfig config, std::vector<TimeSeriesWindow> windows, NormStats stats,
                 std::vector<std::string> feature_names)
    : config_(std::move(config)),
      windows_(std::move(windows)),
      stats_(std::move(stats)),
      feature_names_(std::move(feature_names)),
      rng_(phase_seed(config_.seed, 99)) {
  config_.resolve(stats_.features());
  for (const auto& w : windows_) {
    if (w.values.rows() != config_.window || w.values.cols() != config_.features) {
      throw Error(ErrorKind::ShapeMismatch, "training window shape differs from (T, M)");
    }
  }
  model_ = std::make_unique<DlganModel>(config_);
}

Trainer::Trainer(const Checkpoint& checkpoint, std::vector<TimeSeriesWindow> windows)
    : config_(checkpoint.config),
      windows_(std::move(windows)),
      stats_(checkpoint.stats),
      feature_names_(checkpoint.feature_names),
      phase_(checkpoint.phase),
      epoch_(checkpoint.epoch) {
  config_.resolve(stats_.features());
  model_ = std::make_unique<DlganModel>(config_);
  checkpoint.restore(*model_);
  if (!checkpoint.rng_state.empty()) rng_.set_state(checkpoint.rng_state);
}

void Trainer::require_windows() const {
  if (windows_.empty()) throw Error(ErrorKind::InsufficientData, "trainer has no training windows");
}

namespace {

struct ForwardPass {
  Var x, h_real, x_hat;
  FeatureOutput real, fake;
  Var rec_real, rec_fake;
  Var y1_real, y1_fake, y2_real, y2_fake, y2_rec;
};

ForwardPass run_forward(DlganModel& m, Tape& tape, const Matrix& x, const Matrix* z, Index batch, unsigned needs) {
  const TrainingConfig& c = m.config();
  const SeqShape shape{c.window, batch};
  ForwardPass f;
  f.x = tape.constant(x);
  f.h_real = m.autoencoder.encode(tape, f.x, shape);
  if (needs & kDecode) f.x_hat = m.autoencoder.decode(tape, f.h_real, shape);
  f.real = m.extractor.extract(tape, f.h_real, shape);
  f.rec_real = m.reconstruct_real(tape, f.real, f.h_real, batch);
  if (needs & kFake) {
    f.fake = m.generator1.generate(tape, *z, batch);
    f.rec_fake = m.reconstruct_fake(tape, f.fake, batch);
  }
  if (needs & kFakeLogits) {
    f.y1_fake = m.discriminator1.logits(tape, f.fake.embedding);
    f.y2_fake = m.discriminator2.logits(tape, f.rec_fake, shape);
    f.y2_rec = m.discriminator2.logits(tape, f.rec_real, shape);
  }
  if (needs & kRealLogits) {
    f.y1_real = m.discriminator1.logits(tape, f.real.embedding);
    f.y2_real = m.discriminator2.logits(tape, f.h_real, shape);
  }
  return f;
}

GeneratorLoss generator_terms(const ForwardPass& f) {
  GeneratorLoss t;
  t.gan1 = generator_gan_loss(f.y1_fake);
  // Both reconstructions should pass as real.
  t.gan2 = generator_gan_loss(ad::concat_rows({f.y2_fake, f.y2_rec}));
  t.mse = ad::mse(f.h_real, f.rec_real);
  t.total = ad::add(ad::add(t.gan1, t.gan2), t.mse);
  return t;
}

DiscriminatorLoss discriminator_terms(const ForwardPass& f, bool rec_real_is_fake) {
  DiscriminatorLoss t;
  t.gan1 = gan_loss(f.y1_real, f.y1_fake, GanSide::Discriminator);
  if (rec_real_is_fake) {
    t.gan2 = gan_loss(f.y2_real, ad::concat_rows({f.y2_fake, f.y2_rec}), GanSide::Discriminator);
  } else {
    t.gan2 = gan_loss(ad::concat_rows({f.y2_real, f.y2_rec}), f.y2_fake, GanSide::Discriminator);
  }
  t.total = ad::add(t.gan1, t.gan2);
  return t;
}

}  // namespace

Var autoencoder_loss(DlganModel& model, Tape& tape, const Matrix& x, Index batch) {
  const SeqShape shape{model.config().window, batch};
  Var xv = tape.constant(x);
  return reconstruction_loss(xv, model.autoencoder.decode(tape, model.autoencoder.encode(tape, xv, shape), shape));
}

Var latent_loss(DlganModel& model, Tape& tape, const Matrix& x, Index batch) {
  ForwardPass f = run_forward(model, tape, x, nullptr, batch, 0);
  return ad::mse(f.h_real, f.rec_real);
}

GeneratorLoss generator_loss(DlganModel& model, Tape& tape, const Matrix& x, const Matrix& z, Index batch) {
  return generator_terms(run_forward(model, tape, x, &z, batch, kFake | kFakeLogits));
}

FinetuneLoss finetune_loss(DlganModel& model, Tape& tape, const Matrix& x, Index batch) {
  ForwardPass f = run_forward(model, tape, x, nullptr, batch, kDecode);
  FinetuneLoss t;
  t.ae = reconstruction_loss(f.x, f.x_hat);
  t.h = ad::mse(f.h_real, f.rec_real);
  t.total = ad::add(t.ae, t.h);
  return t;
}

DiscriminatorLoss discriminator_loss(DlganModel& model, Tape& tape, const Matrix& x, const Matrix& z, Index batch) {
  ForwardPass f = run_forward(model, tape, x, &z, batch, kFake | kFakeLogits | kRealLogits);
  return discriminator_terms(f, model.config().d2_real_recon_as_fake);
}

LossRecord Trainer::run_epoch_phase(int phase, long epoch, Adam& opt, const LossSink& sink) {
  BatchIterator it(windows_.size(), static_cast<std::size_t>(config_.batch_size), phase_seed(config_.seed, phase));
  it.start_epoch(static_cast<std::uint64_t>(epoch));
  const std::vector<Matrix> good = snapshot(*model_);
  LossRecord rec;
  rec.phase = phase;
  rec.epoch = epoch;
  std::vector<std::size_t> batch;
  double total = 0;
  double weight = 0;
  while (it.next(batch)) {
    const Index b = static_cast<Index>(batch.size());
    const Matrix x = to_time_major(windows_, batch);
    Tape tape(opt.params());
    opt.zero_grad();
    Var loss = phase == 1 ? dlgan::autoencoder_loss(*model_, tape, x, b) : dlgan::latent_loss(*model_, tape, x, b);
    if (!std::isfinite(loss.scalar())) {
      restore(*model_, good);
      diverged(phase == 1 ? "L_R^AE" : "L_R^H");
    }
    tape.backward(loss);
    opt.step();
    total += loss.scalar() * static_cast<double>(b);
    weight += static_cast<double>(b);
    ++rec.step;
  }
  (phase == 1 ? rec.ae : rec.h) = total / weight;
  for (Parameter* p : opt.params()) {
    if (!p->finite()) {
      restore(*model_, good);
      diverged(p->name);
    }
  }
  if (sink) sink(rec);
  return rec;
}

std::vector<LossRecord> Trainer::pretrain_autoencoder(const LossSink& sink) {
  require_windows();
  Adam opt(model_->autoencoder_params(), {.lr = config_.lr_pretrain});
  std::vector<LossRecord> out;
  for (long e = 0; e < config_.epochs_ae; ++e) out.push_back(run_epoch_phase(1, e, opt, sink));
  phase_ = 1;
  epoch_ = config_.epochs_ae;
  return out;
}

std::vector<LossRecord> Trainer::pretrain_latent_path(const LossSink& sink) {
  require_windows();
  ParamList params = model_->extractor.params();
  ParamList g2 = model_->generator2.params();
  params.insert(params.end(), g2.begin(), g2.end());
  Adam opt(params, {.lr = config_.lr_pretrain});
  std::vector<LossRecord> out;
  for (long e = 0; e < config_.epochs_latent; ++e) out.push_back(run_epoch_phase(2, e, opt, sink));
  phase_ = 2;
  epoch_ = config_.epochs_latent;
  return out;
}

void Trainer::make_joint_optimizers() {
  if (gen_opt_) return;
  gen_opt_ = std::make_unique<Adam>(model_->generator_params(), Adam::Options{.lr = config_.lr_joint});
  ae_opt_ = std::make_unique<Adam>(model_->autoencoder_params(), Adam::Options{.lr = config_.lr_joint});
  const double lr_disc = config_.lr_disc > 0 ? config_.lr_disc : config_.lr_joint;
  disc_opt_ = std::make_unique<Adam>(model_->discriminator_params(), Adam::Options{.lr = lr_disc});
}

void Trainer::substep(Substep which, const Matrix& x, const Matrix& z, Index b, LossRecord& rec) {
  make_joint_optimizers();
  switch (which) {
    case Substep::Generators: {
      Tape tape(gen_opt_->params());
      gen_opt_->zero_grad();
      GeneratorLoss t = dlgan::generator_loss(*model_, tape, x, z, b);
      rec.g = t.total.scalar();
      rec.g_gan1 = t.gan1.scalar();
      rec.g_gan2 = t.gan2.scalar();
      rec.g_mse = t.mse.scalar();
      if (!std::isfinite(rec.g)) diverged("L_G");
      tape.backward(t.total);
      gen_opt_->step();
      break;
    }
    case Substep::Autoencoder: {
      Tape tape(ae_opt_->params());
      ae_opt_->zero_grad();
      FinetuneLoss t = finetune_loss(*model_, tape, x, b);
      rec.ae = t.ae.scalar();
      rec.h = t.h.scalar();
      if (!std::isfinite(t.total.scalar())) diverged("L_R^AE + L_R^H");
      tape.backward(t.total);
      ae_opt_->step();
      break;
    }
    case Substep::Discriminators: {
      Tape tape(disc_opt_->params());
      disc_opt_->zero_grad();
      DiscriminatorLoss t = dlgan::discriminator_loss(*model_, tape, x, z, b);
      rec.d = t.total.scalar();
      rec.d_gan1 = t.gan1.scalar();
      rec.d_gan2 = t.gan2.scalar();
      if (!std::isfinite(rec.d)) diverged("L_D");
      tape.backward(t.total);
      disc_opt_->step();
      break;
    }
  }
}

LossRecord Trainer::joint_step(const std::vector<std::size_t>& batch) { return joint_step(batch, rng_.next_u64()); }

LossRecord Trainer::joint_step(const std::vector<std::size_t>& batch, std::uint64_t noise_seed) {
  require_windows();
  const Index b = static_cast<Index>(batch.size());
  const Matrix x = to_time_major(windows_, batch);
  const Matrix z = sample_noise(b, config_.noise_len, config_.noise_dim, noise_seed);
  LossRecord rec;
  rec.phase = 3;
  substep(Substep::Generators, x, z, b, rec);
  substep(Substep::Autoencoder, x, z, b, rec);
  for (long k = 0; k < config_.disc_steps; ++k) substep(Substep::Discriminators, x, z, b, rec);
  return rec;
}

LossRecord Trainer::joint_substep(Substep which, const std::vector<std::size_t>& batch, std::uint64_t noise_seed) {
  require_windows();
  const Index b = static_cast<Index>(batch.size());
  const Matrix x = to_time_major(windows_, batch);
  const Matrix z = sample_noise(b, config_.noise_len, config_.noise_dim, noise_seed);
  LossRecord rec;
  rec.phase = 3;
  substep(which, x, z, b, rec);
  return rec;
}

LossRecord Trainer::evaluate_losses(const std::vector<std::size_t>& batch, std::uint64_t noise_seed) {
  require_windows();
  const Index b = static_cast<Index>(batch.size());
  const Matrix x = to_time_major(windows_, batch);
  const Matrix z = sample_noise(b, config_.noise_len, config_.noise_dim, noise_seed);
  Tape tape = Tape::inference();
  ForwardPass f = run_forward(*model_, tape, x, &z, b, kDecode | kFake | kFakeLogits | kRealLogits);
  GeneratorLoss g = generator_terms(f);
  DiscriminatorLoss d = discriminator_terms(f, config_.d2_real_recon_as_fake);
  LossRecord rec;
  rec.phase = phase_;
  rec.ae = reconstruction_loss(f.x, f.x_hat).scalar();
  rec.h = g.mse.scalar();
  rec.g = g.total.scalar();
  rec.g_gan1 = g.gan1.scalar();
  rec.g_gan2 = g.gan2.scalar();
  rec.g_mse = g.mse.scalar();
  rec.d = d.total.scalar();
  rec.d_gan1 = d.gan1.scalar();
  rec.d_gan2 = d.gan2.scalar();
  return rec;
}

std::vector<LossRecord> Trainer::train_joint(const LossSink& sink) {
  require_windows();
  std::vector<LossRecord> out;
  BatchIterator it(windows_.size(), static_cast<std::size_t>(config_.batch_size), phase_seed(config_.seed, 3));
  std::vector<std::size_t> batch;
  for (long e = 0; e < config_.epochs_joint; ++e) {
    const std::vector<Matrix> good = snapshot(*model_);
    it.start_epoch(static_cast<std::uint64_t>(e));
    LossRecord avg;
    avg.phase = 3;
    avg.epoch = e;
    double weight = 0;
    while (it.next(batch)) {
      LossRecord r;
      try {
        r = joint_step(batch);
      } catch (const Error& err) {
        if (err.kind() == ErrorKind::DivergenceDetected) restore(*model_, good);
        throw;
      }
      const double w = static_cast<double>(batch.size());
      avg.ae += w * r.ae;
      avg.h += w * r.h;
      avg.g += w * r.g;
      avg.d += w * r.d;
      avg.g_gan1 += w * r.g_gan1;
      avg.g_gan2 += w * r.g_gan2;
      avg.g_mse += w * r.g_mse;
      avg.d_gan1 += w * r.d_gan1;
      avg.d_gan2 += w * r.d_gan2;
      weight += w;
      ++avg.step;
    }
    for (double* v : {&avg.ae, &avg.h, &avg.g, &avg.d, &avg.g_gan1, &avg.g_gan2, &avg.g_mse, &avg.d_gan1, &avg.d_gan2}) {
      *v /= weight;
    }
    for (Parameter* p : model_->all_params()) {
      if (!p->finite()) {
        restore(*model_, good);
        diverged(p->name);
      }
    }
    if (sink) sink(avg);
    out.push_back(avg);
  }
  phase_ = 3;
  epoch_ = config_.epochs_joint;
  return out;
}

void Trainer::train(const LossSink& sink) {
  pretrain_autoencoder(sink);
  pretrain_latent_path(sink);
  train_joint(sink);
}

double Trainer::autoencoder_loss(const std::vector<std::size_t>& batch) {
  Tape tape = Tape::inference();
  return dlgan::autoencoder_loss(*model_, tape, to_time_major(windows_, batch), static_cast<Index>(batch.size()))
      .scalar();
}

double Trainer::latent_loss(const std::vector<std::size_t>& batch) {
  Tape tape = Tape::inference();
  return dlgan::latent_loss(*model_, tape, to_time_major(windows_, batch), static_cast<Index>(batch.size())).scalar();
}

std::vector<Matrix> Trainer::synthesize(std::size_t n, std::uint64_t seed, bool denormalized) {
  std::vector<Matrix> out = synthesize_normalized(*model_, n, seed);
  if (denormalized) {
    for (Matrix& w : out) w = denormalize(w, stats_);
  }
  return out;
}

Checkpoint Trainer::checkpoint() {
  return Checkpoint::capture(*model_, stats_, feature_names_, rng_.state(), phase_, epoch_);
}

std::vector<Matrix> synthesize_normalized(DlganModel& model, std::size_t n, std::uint64_t seed) {
  const TrainingConfig& c = model.config();
  constexpr std::size_t kChunk = 256;
  std::vector<Matrix> out;
  out.reserve(n);
  for (std::size_t first = 0; first < n; first += kChunk) {
    const Index b = static_cast<Index>(std::min(kChunk, n - first));
    Tape tape = Tape::inference();
    const Matrix z = sample_noise(b, c.noise_len, c.noise_dim, seed, first);
    FeatureOutput fake = model.generator1.generate(tape, z, b);
    Var h = model.reconstruct_fake(tape, fake, b);
    Var x = model.autoencoder.decode(tape, h, SeqShape{c.window, b});
    for (Matrix& w : from_time_major(x.value(), c.window, b)) out.push_back(std::move(w));
  }
  return out;
}

std::vector<Matrix> synthesize(const Checkpoint& checkpoint, std::size_t n, std::uint64_t seed, bool denormalized) {
  if (checkpoint.phase < 3) {
    throw Error(ErrorKind::UntrainedCheckpoint,
                "checkpoint finished phase " + std::to_string(checkpoint.phase) + " of 3");
  }
  Trainer trainer(checkpoint);
  return trainer.synthesize(n, seed, denormalized);
}

}  // namespace dlgan
