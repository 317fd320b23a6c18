#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "dlgan/checkpoint.hpp"
#include "dlgan/errors.hpp"
#include "dlgan/trainer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dlgan;
using Eigen::Index;
namespace fs = std::filesystem;

namespace {

const double kLn2 = std::numbers::ln2;

std::vector<std::size_t> first(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::vector<Matrix> values(const ParamList& ps) {
  std::vector<Matrix> out;
  for (Parameter* p : ps) out.push_back(p->value);
  return out;
}

struct Changes {
  std::set<std::string> changed;
  std::set<std::string> unchanged;
};

Changes diff(const ParamList& ps, const std::vector<Matrix>& before) {
  Changes c;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    // Bitwise comparison of the stored values.
    const bool same = ps[i]->value.size() == before[i].size() &&
                      std::memcmp(ps[i]->value.data(), before[i].data(), sizeof(double) * before[i].size()) == 0;
    (same ? c.unchanged : c.changed).insert(ps[i]->name);
  }
  return c;
}

std::set<std::string> names(const ParamList& ps) {
  std::set<std::string> s;
  for (Parameter* p : ps) s.insert(p->name);
  return s;
}

// Attention key biases shift every logit of a query equally, so softmax
// gives them an exactly zero gradient and Adam leaves them in place.
std::set<std::string> movable(const ParamList& ps) {
  std::set<std::string> s;
  for (Parameter* p : ps) {
    if (!p->name.ends_with("k.bias")) s.insert(p->name);
  }
  return s;
}

void check_updates(const Changes& c, const ParamList& group) {
  const std::set<std::string> allowed = names(group);
  for (const auto& n : c.changed) {
    INFO(n);
    CHECK(allowed.count(n) == 1);
  }
  for (const auto& n : movable(group)) {
    INFO(n);
    CHECK(c.changed.count(n) == 1);
  }
}

Trainer tiny_trainer(TrainingConfig c = fixture::tiny(), std::uint64_t data_seed = 1) {
  Dataset d = fixture::sine(40, c.features, c.window, data_seed);
  return Trainer(c, d.windows, d.stats, d.raw.feature_names);
}

double grad_check(DlganModel& m, const ParamList& wrt, const std::function<Var(ad::Tape&)>& loss) {
  for (Parameter* p : m.all_params()) p->zero_grad();
  {
    ad::Tape tape(wrt);
    tape.backward(loss(tape));
  }
  auto r = oracle::finite_difference(wrt, [&] {
    ad::Tape tape = ad::Tape::inference();
    return loss(tape).scalar();
  });
  CHECK(r.max_abs_grad > 0);
  return r.max_rel_error;
}

}  // namespace

TEST_CASE("gan loss closed forms and loop oracle") {
  Matrix zeros = Matrix::Zero(5, 1);
  CHECK(gan_loss(zeros, zeros, GanSide::Discriminator) == doctest::Approx(kLn2).epsilon(1e-12));
  CHECK(gan_loss(zeros, zeros, GanSide::Generator) == doctest::Approx(kLn2).epsilon(1e-12));
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix r = rng.uniform_matrix(1 + static_cast<Index>(rng.below(8)), 1, -6, 6);
    Matrix f = rng.uniform_matrix(1 + static_cast<Index>(rng.below(8)), 1, -6, 6);
    std::vector<double> rv(r.data(), r.data() + r.size()), fv(f.data(), f.data() + f.size());
    CHECK(std::abs(gan_loss(r, f, GanSide::Discriminator) - 0.5 * (oracle::bce(rv, 1) + oracle::bce(fv, 0))) < 1e-7);
    CHECK(std::abs(gan_loss(r, f, GanSide::Generator) - oracle::bce(fv, 1)) < 1e-7);
  }
}

TEST_CASE("analytic gradients of every training loss match finite differences") {
  for (Ablation a : {Ablation::None, Ablation::All}) {
    TrainingConfig c = fixture::tiny();
    c.set_ablation(a);
    DlganModel m(c);
    const Index b = 2;
    Matrix x = fixture::uniform_batch(c.window * b, c.features, 4);
    Matrix z = sample_noise(b, c.noise_len, c.noise_dim, 5);

    ParamList latent = m.extractor.params();
    for (Parameter* p : m.generator2.params()) latent.push_back(p);

    CHECK(grad_check(m, m.autoencoder_params(), [&](ad::Tape& t) { return autoencoder_loss(m, t, x, b); }) < 1e-3);
    CHECK(grad_check(m, latent, [&](ad::Tape& t) { return latent_loss(m, t, x, b); }) < 1e-3);
    CHECK(grad_check(m, m.generator_params(), [&](ad::Tape& t) { return generator_loss(m, t, x, z, b).total; }) <
          1e-3);
    CHECK(grad_check(m, m.autoencoder_params(), [&](ad::Tape& t) { return finetune_loss(m, t, x, b).total; }) < 1e-3);
    CHECK(grad_check(m, m.discriminator_params(),
                     [&](ad::Tape& t) { return discriminator_loss(m, t, x, z, b).total; }) < 1e-3);
  }
}

TEST_CASE("discriminator loss with zero heads is two ln 2") {
  Trainer tr = tiny_trainer();
  DlganModel& m = tr.model();
  for (Linear* head : {&m.discriminator1.head(), &m.discriminator2.head()}) {
    head->weight().value.setZero();
    head->bias().value.setZero();
  }
  LossRecord r = tr.evaluate_losses(first(4), 9);
  CHECK(std::abs(r.d - 2 * kLn2) < 1e-6);
  CHECK(std::abs(r.d_gan1 - kLn2) < 1e-6);
  CHECK(std::abs(r.g_gan1 - kLn2) < 1e-6);
  CHECK(std::abs(r.g_gan2 - kLn2) < 1e-6);
}

TEST_CASE("logged joint losses decompose into their terms") {
  Trainer tr = tiny_trainer();
  tr.pretrain_autoencoder();
  tr.pretrain_latent_path();
  const auto batch = first(4);
  LossRecord before = tr.evaluate_losses(batch, 77);
  LossRecord step = tr.joint_step(batch, 77);
  CHECK(std::abs(step.g - (step.g_gan1 + step.g_gan2 + step.g_mse)) < 1e-6);
  CHECK(std::abs(step.d - (step.d_gan1 + step.d_gan2)) < 1e-6);
  // Sub-step (a) runs first, so its terms equal a side-effect-free evaluation.
  CHECK(std::abs(step.g - before.g) < 1e-12);
  CHECK(std::abs(step.g_gan1 - before.g_gan1) < 1e-12);
  CHECK(std::abs(step.g_gan2 - before.g_gan2) < 1e-12);
  CHECK(std::abs(step.g_mse - before.g_mse) < 1e-12);
  CHECK(step.finite());
}

TEST_CASE("each phase and sub-step updates exactly its parameters") {
  Trainer tr = tiny_trainer();
  DlganModel& m = tr.model();
  const ParamList all = m.all_params();
  ParamList latent = m.extractor.params();
  for (Parameter* p : m.generator2.params()) latent.push_back(p);

  auto before = values(all);
  tr.pretrain_autoencoder();
  Changes c = diff(all, before);
  check_updates(c, m.autoencoder_params());

  before = values(all);
  tr.pretrain_latent_path();
  c = diff(all, before);
  check_updates(c, latent);

  const auto batch = first(4);
  before = values(all);
  tr.joint_substep(Substep::Generators, batch, 1);
  check_updates(diff(all, before), m.generator_params());

  before = values(all);
  tr.joint_substep(Substep::Autoencoder, batch, 1);
  check_updates(diff(all, before), m.autoencoder_params());

  before = values(all);
  tr.joint_substep(Substep::Discriminators, batch, 1);
  check_updates(diff(all, before), m.discriminator_params());
}

TEST_CASE("frozen extractor and extra discriminator steps") {
  TrainingConfig c = fixture::tiny();
  c.joint_extractor = false;
  c.disc_steps = 3;
  c.lr_disc = 5e-3;
  Trainer tr = tiny_trainer(c);
  DlganModel& m = tr.model();
  tr.pretrain_autoencoder();
  tr.pretrain_latent_path();
  const ParamList all = m.all_params();
  ParamList gens = m.generator1.params();
  for (Parameter* p : m.generator2.params()) gens.push_back(p);
  CHECK(names(m.generator_params()) == names(gens));

  auto before = values(all);
  tr.joint_substep(Substep::Generators, first(4), 1);
  check_updates(diff(all, before), gens);

  // Three discriminator updates move the heads further than one.
  TrainingConfig c1 = c;
  c1.disc_steps = 1;
  Trainer single = tiny_trainer(c1);
  single.pretrain_autoencoder();
  single.pretrain_latent_path();
  single.joint_substep(Substep::Generators, first(4), 1);
  const Matrix d_before = single.model().discriminator1.head().weight().value;
  const Matrix t_before = tr.model().discriminator1.head().weight().value;
  single.joint_step(first(4), 2);
  tr.joint_step(first(4), 2);
  const double moved_one = (single.model().discriminator1.head().weight().value - d_before).norm();
  const double moved_three = (tr.model().discriminator1.head().weight().value - t_before).norm();
  CHECK(moved_three > moved_one);
}

TEST_CASE("training is deterministic") {
  auto run = [] {
    Trainer tr = tiny_trainer();
    std::vector<std::string> log;
    tr.train([&](const LossRecord& r) { log.push_back(r.to_json().dump()); });
    return std::pair{log, tr.checkpoint().serialize()};
  };
  auto a = run();
  auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.first.size() == 3);
  CHECK(a.second == b.second);
}

TEST_CASE("every logged loss is finite and autoencoder pretraining improves") {
  TrainingConfig c = fixture::small(2);
  c.epochs_ae = 10;
  Dataset d = fixture::sine(300, 2, c.window);
  Trainer tr(c, d.windows, d.stats, d.raw.feature_names);
  auto log = tr.pretrain_autoencoder();
  REQUIRE(log.size() == 10);
  for (const auto& r : log) CHECK(r.finite());
  CHECK(log.back().ae < log.front().ae);
}

TEST_CASE("non-finite data aborts training and keeps the last good parameters") {
  TrainingConfig c = fixture::tiny();
  Dataset d = fixture::sine(40, c.features, c.window);
  for (auto& w : d.windows) w.values(0, 0) = std::nan("");
  Trainer tr(c, d.windows, d.stats, d.raw.feature_names);
  const auto before = values(tr.model().all_params());
  try {
    tr.pretrain_autoencoder();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK((e.kind() == ErrorKind::DivergenceDetected || e.kind() == ErrorKind::NonFiniteActivation));
  }
  CHECK(diff(tr.model().all_params(), before).changed.empty());
}

TEST_CASE("synthesis shape, range and seeding") {
  TrainingConfig c = fixture::tiny();
  Trainer tr = tiny_trainer(c);
  tr.train();
  auto norm = tr.synthesize(7, 3, false);
  REQUIRE(norm.size() == 7);
  for (const Matrix& w : norm) {
    CHECK(w.rows() == c.window);
    CHECK(w.cols() == c.features);
    CHECK(w.minCoeff() > 0);
    CHECK(w.maxCoeff() < 1);
  }
  CHECK(tr.synthesize(7, 3, false) == norm);
  CHECK(tr.synthesize(7, 4, false) != norm);
  // Sample i does not depend on how many are drawn.
  CHECK(tr.synthesize(3, 3, false)[2] == norm[2]);
  auto raw = tr.synthesize(7, 3, true);
  for (std::size_t i = 0; i < 7; ++i) CHECK((raw[i] - denormalize(norm[i], tr.stats())).cwiseAbs().maxCoeff() == 0);
  CHECK(tr.synthesize(0, 3).empty());
}

TEST_CASE("checkpoint round trip") {
  Trainer tr = tiny_trainer();
  tr.train();
  Checkpoint ck = tr.checkpoint();
  const std::string bytes = ck.serialize();
  Checkpoint back = Checkpoint::deserialize(bytes);
  CHECK(back.serialize() == bytes);
  REQUIRE(back.params.size() == ck.params.size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    CHECK(back.params[i].first == ck.params[i].first);
    CHECK(back.params[i].second == ck.params[i].second);
  }
  CHECK(back.phase == 3);
  CHECK(back.config.to_json() == ck.config.to_json());
  CHECK(back.stats.min == ck.stats.min);

  const auto path = fs::temp_directory_path() / "dlgan_tests" / "model.dlgan";
  ck.save(path.string());
  Checkpoint loaded = Checkpoint::load(path.string());
  CHECK(synthesize(loaded, 5, 11) == tr.synthesize(5, 11));
}

TEST_CASE("damaged checkpoints are rejected") {
  Trainer tr = tiny_trainer();
  const std::string bytes = tr.checkpoint().serialize();
  auto kind = [](const std::string& b) {
    try {
      Checkpoint::deserialize(b);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  CHECK(kind(bytes.substr(0, bytes.size() - 3)) == ErrorKind::CorruptFile);
  CHECK(kind(bytes.substr(0, 10)) == ErrorKind::CorruptFile);
  std::string flipped = bytes;
  flipped[flipped.size() - 5] ^= 0x10;
  CHECK(kind(flipped) == ErrorKind::CorruptFile);
  CHECK(kind("not a checkpoint at all") == ErrorKind::CorruptFile);

  // Rewrite the manifest with another version and a valid checksum.
  const std::size_t header = 8 + 8 + 4;
  std::uint64_t len;
  std::memcpy(&len, bytes.data() + 8, 8);
  auto manifest = nlohmann::json::parse(bytes.substr(header, len));
  manifest["format_version"] = Checkpoint::kFormatVersion + 1;
  const std::string text = manifest.dump();
  std::string out = bytes.substr(0, 8);
  const std::uint64_t new_len = text.size();
  const std::uint32_t crc = crc32_of(text.data(), text.size());
  out.append(reinterpret_cast<const char*>(&new_len), 8);
  out.append(reinterpret_cast<const char*>(&crc), 4);
  out += text + bytes.substr(header + len);
  CHECK(kind(out) == ErrorKind::VersionMismatch);

  CHECK_THROWS_AS(Checkpoint::load("/nonexistent/model.dlgan"), Error);
}

TEST_CASE("synthesis requires a fully trained checkpoint") {
  Trainer tr = tiny_trainer();
  tr.pretrain_autoencoder();
  try {
    synthesize(tr.checkpoint(), 3, 1);
    FAIL("expected UntrainedCheckpoint");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UntrainedCheckpoint);
  }
}

TEST_CASE("config text round trip and validation") {
  TrainingConfig c;
  c.batch_size = 32;
  c.lr_joint = 3.5e-4;
  c.set_ablation(Ablation::NoReconstructor);
  TrainingConfig back = TrainingConfig::parse_text(c.to_text());
  CHECK(back.to_json() == c.to_json());
  CHECK(TrainingConfig::parse_text("# comment\nablation = all\n").ablation() == Ablation::All);

  TrainingConfig bad;
  bad.patch_len = 5;
  try {
    bad.resolve(6);
    FAIL("expected ConfigInvalid");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigInvalid);
    CHECK(std::string(e.what()).find("T not divisible by p") != std::string::npos);
  }
  CHECK_THROWS_AS(TrainingConfig::parse_text("nonsense_key = 1\n"), Error);
  CHECK_THROWS_AS(TrainingConfig::parse_text("window = abc\n"), Error);
  TrainingConfig fixed;
  fixed.features = 4;
  CHECK_THROWS_AS(fixed.resolve(6), Error);
}
