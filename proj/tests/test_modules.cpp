#include <doctest.h>

#include <cmath>
#include <set>

#include "dlgan/autoencoder.hpp"
#include "dlgan/errors.hpp"
#include "dlgan/extractor.hpp"
#include "dlgan/latent_gan.hpp"
#include "dlgan/model.hpp"
#include "dlgan/reconstructor.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dlgan;
using Eigen::Index;

namespace {

bool strictly_inside_unit(const Matrix& m) { return m.minCoeff() > 0.0 && m.maxCoeff() < 1.0; }

// Time-major rows of steps [0, t) for a batch of size b.
Matrix prefix(const Matrix& m, Index t, Index b) { return m.topRows(t * b); }

}  // namespace

TEST_CASE("autoencoder shapes, range and determinism") {
  TrainingConfig c;
  c.resolve(6);
  REQUIRE(c.latent_dim == 24);
  Rng rng(1);
  SequenceAutoencoder ae(c, rng);
  const SeqShape shape{24, 8};
  Matrix x = fixture::uniform_batch(shape.rows(), 6, 2);
  Matrix h = ae.encode(x, shape);
  CHECK(h.rows() == 24 * 8);
  CHECK(h.cols() == 24);
  CHECK(strictly_inside_unit(h));
  Matrix xh = ae.decode(h, shape);
  CHECK(xh.rows() == x.rows());
  CHECK(xh.cols() == 6);
  CHECK(strictly_inside_unit(xh));
  CHECK(ae.decode(h, shape) == xh);
  CHECK_THROWS_AS(ae.encode(Matrix::Zero(10, 6), shape), Error);
}

TEST_CASE("encoder is causal in time") {
  TrainingConfig c = fixture::small();
  Rng rng(1);
  SequenceAutoencoder ae(c, rng);
  const SeqShape shape{c.window, 5};
  Matrix a = fixture::uniform_batch(shape.rows(), c.features, 3);
  for (Index t = 1; t < c.window; ++t) {
    Matrix b = a;
    b.bottomRows((c.window - t) * shape.batch) = fixture::uniform_batch((c.window - t) * shape.batch, c.features, 100 + t);
    CHECK(prefix(ae.encode(a, shape), t, shape.batch) == prefix(ae.encode(b, shape), t, shape.batch));
  }
}

TEST_CASE("reconstruction loss examples") {
  Matrix x = Matrix::Zero(6, 2);
  CHECK(reconstruction_loss(x, x) == 0);
  CHECK(reconstruction_loss(x, Matrix::Constant(6, 2, 0.5)) == doctest::Approx(0.25).epsilon(1e-15));
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    Matrix a = rng.uniform_matrix(1 + static_cast<Index>(rng.below(10)), 3, 0, 1);
    Matrix b = rng.uniform_matrix(a.rows(), 3, 0, 1);
    CHECK(std::abs(reconstruction_loss(a, b) - oracle::mse(oracle::to_grid(a), oracle::to_grid(b))) < 1e-7);
  }
}

TEST_CASE("patch partition is lossless") {
  Eigen::VectorXd v(24);
  for (Index i = 0; i < 24; ++i) v(i) = static_cast<double>(i);
  Matrix p = patch(v, 4);
  CHECK(p.rows() == 6);
  CHECK(p(2, 0) == 8);
  CHECK(p(2, 3) == 11);
  CHECK(patch(v, 24).rows() == 1);
  CHECK_THROWS_AS(patch(v, 5), Error);

  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pl = static_cast<Index>(1 + rng.below(5));
    const auto pc = static_cast<Index>(1 + rng.below(6));
    Eigen::VectorXd s = rng.uniform_matrix(pl * pc, 1, -1, 1);
    Matrix got = patch(s, pl);
    auto ref = oracle::patches(std::vector<double>(s.data(), s.data() + s.size()), static_cast<std::size_t>(pl));
    CHECK(oracle::max_abs_diff(ref, got) == 0);
    CHECK(got.rows() * got.cols() == s.size());
  }
}

TEST_CASE("positional table is fixed") {
  Matrix a = positional_encoding(6, 16);
  CHECK(a == positional_encoding(6, 16));
  CHECK(a(0, 0) == 0);
  CHECK(a(0, 1) == 1);
  CHECK(a(1, 0) == doctest::Approx(std::sin(1.0)));
}

TEST_CASE("extractor stage shapes and attention rows") {
  TrainingConfig c;
  c.resolve(6);
  Rng rng(4);
  TemporalFeatureExtractor ex(c, rng);
  const SeqShape shape{24, 2};
  ad::Tape tape = ad::Tape::inference();
  Var h = tape.constant(fixture::uniform_batch(shape.rows(), 24, 5));
  Var tokens = ex.patch_tokens(tape, h, shape);
  CHECK(tokens.rows() == 2 * 24 * 6);
  CHECK(tokens.cols() == 4);
  Var emb = ex.embed(tape, tokens);
  Var ht = ex.temporal_attention(tape, emb, 2 * 24);
  CHECK(ht.rows() == 2 * 24 * 6);
  CHECK(ht.cols() == 16);
  FeatureOutput f = ex.extract(tape, h, shape);
  CHECK(f.embedding.rows() == 2);
  CHECK(f.embedding.cols() == 24);
  CHECK(f.embedding.value().allFinite());
  CHECK(ex.extract(h.value(), shape) == f.embedding.value());

  // Softmax rows of each stage sum to one.
  auto& msa = ex.temporal_msa();
  Matrix q = msa.query_proj()(tape, emb).value();
  Matrix k = msa.key_proj()(tape, emb).value();
  auto s = msa.shape(2 * 24, 6, 6);
  for (Index g : {0, 7, 47}) {
    for (Index head = 0; head < s.heads; ++head) {
      Matrix w = ad::attention_weights(q, k, s, g, head);
      CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("patch tokens follow (batch, channel, patch) order") {
  TrainingConfig c = fixture::small();
  Rng rng(6);
  TemporalFeatureExtractor ex(c, rng);
  const SeqShape shape{c.window, 3};
  Matrix h = fixture::uniform_batch(shape.rows(), c.latent_dim, 7);
  ad::Tape tape = ad::Tape::inference();
  Matrix tok = ex.patch_tokens(tape, tape.constant(h), shape).value();
  const Index pc = c.window / c.patch_len;
  for (Index b = 0; b < 3; ++b) {
    for (Index d = 0; d < c.latent_dim; ++d) {
      Eigen::VectorXd channel(c.window);
      for (Index t = 0; t < c.window; ++t) channel(t) = h(t * 3 + b, d);
      CHECK(tok.middleRows((b * c.latent_dim + d) * pc, pc) == patch(channel, c.patch_len));
    }
  }
}

TEST_CASE("channel attention is equivariant to channel order, temporal attention is position aware") {
  TrainingConfig c = fixture::small();
  Rng rng(8);
  TemporalFeatureExtractor ex(c, rng);
  const Index n = c.latent_dim, groups = 5, e = c.patch_embed;
  ad::Tape tape = ad::Tape::inference();
  Matrix x = Rng(9).uniform_matrix(groups * n, e, -1, 1);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[i] = (i * 5 + 3) % n;
  Matrix px(x.rows(), x.cols());
  for (Index g = 0; g < groups; ++g)
    for (Index i = 0; i < n; ++i) px.row(g * n + i) = x.row(g * n + perm[i]);
  Matrix out = ex.channel_attention(tape, tape.constant(x), groups).value();
  Matrix pout = ex.channel_attention(tape, tape.constant(px), groups).value();
  double worst = 0;
  for (Index g = 0; g < groups; ++g)
    for (Index i = 0; i < n; ++i) worst = std::max(worst, (pout.row(g * n + i) - out.row(g * n + perm[i])).cwiseAbs().maxCoeff());
  CHECK(worst < 1e-12);

  // Reversing patch order before the positional table changes the result
  // by more than a reordering.
  const Index pc = c.window / c.patch_len;
  Matrix tokens = Rng(10).uniform_matrix(groups * pc, c.patch_len, 0, 1);
  Matrix rev(tokens.rows(), tokens.cols());
  for (Index g = 0; g < groups; ++g)
    for (Index k = 0; k < pc; ++k) rev.row(g * pc + k) = tokens.row(g * pc + pc - 1 - k);
  Matrix t_out = ex.temporal_attention(tape, ex.embed(tape, tape.constant(tokens)), groups).value();
  Matrix r_out = ex.temporal_attention(tape, ex.embed(tape, tape.constant(rev)), groups).value();
  double diff = 0;
  for (Index g = 0; g < groups; ++g)
    for (Index k = 0; k < pc; ++k)
      diff = std::max(diff, (r_out.row(g * pc + k) - t_out.row(g * pc + pc - 1 - k)).cwiseAbs().maxCoeff());
  CHECK(diff > 1e-6);
}

TEST_CASE("ablated extractor is a recurrent summary of H") {
  TrainingConfig c = fixture::small();
  c.no_extractor = true;
  Rng rng(11);
  TemporalFeatureExtractor ex(c, rng);
  CHECK(ex.ablated());
  const SeqShape shape{c.window, 4};
  Matrix h = fixture::uniform_batch(shape.rows(), c.latent_dim, 12);
  ad::Tape tape = ad::Tape::inference();
  FeatureOutput f = ex.extract(tape, tape.constant(h), shape);
  CHECK(f.embedding.rows() == 4);
  CHECK(f.step_count == c.window);
  for (Parameter* p : ex.params()) CHECK(p->name.rfind("extractor.rnn", 0) == 0);
}

TEST_CASE("noise is seeded, indexed and standard normal") {
  Matrix a = sample_noise(8, 24, 24, 5);
  CHECK(a.rows() == 8 * 24);
  CHECK(a.cols() == 24);
  CHECK(a == sample_noise(8, 24, 24, 5));
  CHECK(a != sample_noise(8, 24, 24, 6));
  // Sample 3 on its own equals row block 3 of the batch.
  CHECK(sample_noise(1, 24, 24, 5, 3) == a.middleRows(3 * 24, 24));
  Matrix big = sample_noise(1000, 10, 10, 7);
  const double mean = big.mean();
  const double var = (big.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("moving average examples and oracle") {
  Matrix col(4, 1);
  col << 1, 2, 3, 4;
  Matrix m = moving_average(col, 3);
  CHECK(m(0, 0) == doctest::Approx(4.0 / 3));
  CHECK(m(1, 0) == doctest::Approx(2));
  CHECK(m(2, 0) == doctest::Approx(3));
  CHECK(m(3, 0) == doctest::Approx(11.0 / 3));
  CHECK(moving_average(col, 1) == col);
  CHECK(moving_average(Matrix::Constant(5, 2, 0.7), 5).isApproxToConstant(0.7, 1e-15));
  CHECK_THROWS_AS(moving_average(col, 2), Error);

  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto len = static_cast<Index>(1 + rng.below(12));
    const auto w = static_cast<int>(2 * rng.below(4) + 1);
    Matrix z = rng.uniform_matrix(len, 3, -2, 2);
    if (w > len) continue;
    CHECK(oracle::max_abs_diff(oracle::moving_average(oracle::to_grid(z), w), moving_average(z, w)) < 1e-12);
  }
}

TEST_CASE("moving average is linear and shift equivariant in the interior") {
  Rng rng(14);
  Matrix a = rng.uniform_matrix(20, 2, -1, 1), b = rng.uniform_matrix(20, 2, -1, 1);
  CHECK((moving_average(2.0 * a + b, 5) - (2.0 * moving_average(a, 5) + moving_average(b, 5))).cwiseAbs().maxCoeff() <
        1e-12);
  Matrix shifted = Matrix::Zero(20, 2);
  shifted.bottomRows(19) = a.topRows(19);
  Matrix ma = moving_average(a, 5), ms = moving_average(shifted, 5);
  for (Index t = 3; t < 17; ++t) CHECK((ms.row(t + 1) - ma.row(t)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross attention examples and oracle") {
  Rng rng(15);
  Matrix q = rng.uniform_matrix(3, 4, -1, 1);
  Matrix k = Matrix::Ones(5, 4);
  Matrix v = rng.uniform_matrix(5, 4, -1, 1);
  Matrix out = cross_attention(q, k, v);
  for (Index i = 0; i < 3; ++i) CHECK((out.row(i) - v.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
  Matrix v1 = rng.uniform_matrix(1, 4, -1, 1);
  Matrix one = cross_attention(q, rng.uniform_matrix(1, 4, -1, 1), v1);
  for (Index i = 0; i < 3; ++i) CHECK((one.row(i) - v1).cwiseAbs().maxCoeff() < 1e-12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto lq = static_cast<Index>(1 + rng.below(4)), lk = static_cast<Index>(1 + rng.below(4));
    Matrix a = rng.uniform_matrix(lq, 4, -2, 2), b = rng.uniform_matrix(lk, 4, -2, 2), c = rng.uniform_matrix(lk, 4, -2, 2);
    for (bool scaled : {false, true}) {
      auto ref = oracle::attention(oracle::to_grid(a), oracle::to_grid(b), oracle::to_grid(c), scaled ? 0.5 : 1.0);
      CHECK(oracle::max_abs_diff(ref, cross_attention(a, b, c, scaled)) < 1e-9);
    }
  }
}

TEST_CASE("generator1 output shape, determinism and diversity") {
  TrainingConfig c;
  c.resolve(6);
  Rng rng(16);
  Generator1 g(c, rng);
  Matrix z = sample_noise(32, c.noise_len, c.noise_dim, 17);
  Matrix h = g.generate(z, 32);
  CHECK(h.rows() == 32);
  CHECK(h.cols() == 24);
  CHECK(h.allFinite());
  CHECK(g.generate(z, 32) == h);
  double closest = INFINITY;
  for (Index i = 0; i < 32; ++i)
    for (Index j = i + 1; j < 32; ++j) closest = std::min(closest, (h.row(i) - h.row(j)).norm());
  CHECK(closest > 0);
  CHECK_THROWS_AS(g.generate(Matrix::Zero(5, c.noise_dim), 32), Error);
}

TEST_CASE("discriminator heads at zero give probability one half") {
  TrainingConfig c = fixture::small();
  Rng rng(18);
  Discriminator1 d1(c, rng);
  Discriminator2 d2(c, rng);
  d1.head().weight().value.setZero();
  d1.head().bias().value.setZero();
  d2.head().weight().value.setZero();
  d2.head().bias().value.setZero();
  CHECK(d1.logits(Rng(1).uniform_matrix(5, c.feature_dim, -10, 10)).cwiseAbs().maxCoeff() == 0);
  CHECK(d2.logits(fixture::uniform_batch(c.window * 5, c.latent_dim, 2), {c.window, 5}).cwiseAbs().maxCoeff() == 0);
  Discriminator1 fresh(c, rng);
  CHECK(fresh.logits(Rng(1).uniform_matrix(5, c.feature_dim, -10, 10)).allFinite());
}

TEST_CASE("generator2 modes: shape, range, determinism, causality") {
  TrainingConfig c;
  c.resolve(6);
  Rng rng(19);
  Generator2 g(c, rng);
  const Index b = 3;
  Matrix emb = Rng(20).uniform_matrix(b, c.feature_dim, -1, 1);
  Matrix ar = g.reconstruct(emb, ReconstructMode::Autoregressive);
  CHECK(ar.rows() == c.window * b);
  CHECK(ar.cols() == c.latent_dim);
  CHECK(strictly_inside_unit(ar));
  CHECK(g.reconstruct(emb, ReconstructMode::Autoregressive) == ar);

  Matrix target = Matrix::Constant(c.window * b, c.latent_dim, 0.3);
  Matrix tf = g.reconstruct(emb, ReconstructMode::TeacherForced, &target);
  CHECK(strictly_inside_unit(tf));
  for (Index t : {0, 5, 23}) {
    Matrix poked = target;
    poked.middleRows(t * b, b).setConstant(0.9);
    Matrix out = g.reconstruct(emb, ReconstructMode::TeacherForced, &poked);
    CHECK(prefix(out, t + 1, b) == prefix(tf, t + 1, b));
    if (t + 1 < c.window) CHECK(out.middleRows((t + 1) * b, b) != tf.middleRows((t + 1) * b, b));
  }
  CHECK_THROWS_AS(g.reconstruct(emb, ReconstructMode::TeacherForced), Error);
  CHECK_THROWS_AS(g.reconstruct(emb, ReconstructMode::Autoregressive, &target), Error);
}

TEST_CASE("discriminator2 logits are finite") {
  TrainingConfig c = fixture::small();
  Rng rng(21);
  Discriminator2 d(c, rng);
  Matrix logits = d.logits(fixture::uniform_batch(c.window * 4, c.latent_dim, 3), {c.window, 4});
  CHECK(logits.rows() == 4);
  CHECK(logits.cols() == 1);
  CHECK(logits.allFinite());
}

TEST_CASE("every ablation builds a consistent model") {
  for (Ablation a : {Ablation::None, Ablation::NoExtractor, Ablation::NoReconstructor, Ablation::All}) {
    TrainingConfig c;
    c.window = 8;
    c.patch_len = 2;
    c.set_ablation(a);
    c.resolve(3);
    DlganModel m(c);
    const Index b = 4;
    ad::Tape tape = ad::Tape::inference();
    Var h = tape.constant(fixture::uniform_batch(c.window * b, c.latent_dim, 1));
    FeatureOutput real = m.extractor.extract(tape, h, {c.window, b});
    Var rr = m.reconstruct_real(tape, real, h, b);
    FeatureOutput fake = m.generator1.generate(tape, sample_noise(b, c.noise_len, c.noise_dim, 2), b);
    Var rf = m.reconstruct_fake(tape, fake, b);
    CHECK(rr.rows() == c.window * b);
    CHECK(rf.rows() == c.window * b);
    CHECK(rr.cols() == c.latent_dim);
    CHECK(strictly_inside_unit(rf.value()));
  }
}

TEST_CASE("parameter names are unique") {
  TrainingConfig c = fixture::small();
  DlganModel m(c);
  std::set<std::string> names;
  for (Parameter* p : m.all_params()) CHECK(names.insert(p->name).second);
}
