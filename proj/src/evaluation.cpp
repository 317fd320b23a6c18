#include "dlgan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dlgan/data.hpp"
#include "dlgan/errors.hpp"
#include "dlgan/layers.hpp"
#include "dlgan/optim.hpp"

namespace dlgan {

using Eigen::Index;

namespace {

enum Stream : std::uint64_t { kSubsample = 1, kSplit, kInit, kBatches, kRealSplit };

void check_windows(const std::vector<Matrix>& a, const std::vector<Matrix>& b, std::size_t min_count) {
  if (a.size() < min_count || b.size() < min_count) {
    throw Error(ErrorKind::InsufficientData, "need at least " + std::to_string(min_count) + " windows per side, got " +
                                                 std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  const Index t = a.front().rows();
  const Index m = a.front().cols();
  for (const auto* set : {&a, &b}) {
    for (const Matrix& w : *set) {
      if (w.rows() != t || w.cols() != m) throw Error(ErrorKind::FeatureCountMismatch, "window shapes differ");
    }
  }
}

Index hidden_width(const PosthocOptions& opt, Index m) { return opt.hidden > 0 ? opt.hidden : std::max<Index>(8, 2 * m); }

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng::stream(seed, stream);
  rng.shuffle(idx.begin(), idx.end());
  return idx;
}

std::vector<Matrix> pick(const std::vector<Matrix>& all, const std::vector<std::size_t>& idx, std::size_t from,
                         std::size_t to) {
  std::vector<Matrix> out;
  out.reserve(to - from);
  for (std::size_t i = from; i < to; ++i) out.push_back(all[idx[i]]);
  return out;
}

std::size_t train_count(std::size_t n, double fraction) {
  auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

// Endless shuffled mini-batches; a new permutation starts each pass.
long step_count(std::size_t n_train, const PosthocOptions& opt) {
  if (opt.iterations > 0) return opt.iterations;
  const long batch = std::max<long>(1, opt.batch_size);
  return opt.epochs * ((static_cast<long>(n_train) + batch - 1) / batch);
}

class BatchStream {
 public:
  BatchStream(std::size_t count, long batch, std::uint64_t seed)
      : it_(count, static_cast<std::size_t>(std::max<long>(1, batch)), Rng::stream(seed, kBatches).next_u64()) {
    it_.start_epoch(0);
  }

  void next(std::vector<std::size_t>& batch) {
    while (!it_.next(batch)) it_.start_epoch(++epoch_);
  }

 private:
  BatchIterator it_;
  std::uint64_t epoch_ = 0;
};

struct Labeled {
  const Matrix* window;
  bool real;
};

class Classifier {
 public:
  Classifier(Index m, const PosthocOptions& opt, std::uint64_t seed) {
    Rng init = Rng::stream(seed, kInit);
    rnn_ = GruStack("classifier.rnn", m, hidden_width(opt, m), opt.layers, init);
    out_ = Linear("classifier.out", hidden_width(opt, m), 1, init);
  }

  // Real windows first, then synthetic ones.
  Var logits(Tape& tape, const std::vector<Matrix>& windows) {
    const Index b = static_cast<Index>(windows.size());
    GruOutput h = rnn_.forward(tape, tape.constant(to_time_major(windows)), {windows.front().rows(), b});
    return out_(tape, h.last);
  }

  ParamList params() {
    ParamList out;
    rnn_.collect(out);
    out_.collect(out);
    return out;
  }

 private:
  GruStack rnn_;
  Linear out_;
};

class Predictor {
 public:
  Predictor(Index m, const PosthocOptions& opt, std::uint64_t seed) {
    Rng init = Rng::stream(seed, kInit);
    rnn_ = GruStack("predictor.rnn", m, hidden_width(opt, m), opt.layers, init);
    out_ = Linear("predictor.out", hidden_width(opt, m), m, init);
  }

  // Predictions for steps 1..T-1 and matching targets, time-major.
  std::pair<Var, Var> forward(Tape& tape, const std::vector<Matrix>& windows) {
    const Index b = static_cast<Index>(windows.size());
    const Index t = windows.front().rows();
    const Matrix x = to_time_major(windows);
    Var inputs = tape.constant(x.topRows((t - 1) * b));
    Var targets = tape.constant(x.bottomRows((t - 1) * b));
    GruOutput h = rnn_.forward(tape, inputs, {t - 1, b});
    return {ad::sigmoid(out_(tape, h.sequence)), targets};
  }

  ParamList params() {
    ParamList out;
    rnn_.collect(out);
    out_.collect(out);
    return out;
  }

 private:
  GruStack rnn_;
  Linear out_;
};

}  // namespace

double discriminative_accuracy(const std::vector<Matrix>& real, const std::vector<Matrix>& synth,
                               std::uint64_t seed, const PosthocOptions& opt) {
  check_windows(real, synth, opt.min_windows);
  const std::size_t n = std::min(real.size(), synth.size());
  const auto real_idx = permutation(real.size(), seed, kSubsample);
  const auto synth_idx = permutation(synth.size(), splitmix64(seed), kSubsample);

  std::vector<Labeled> items;
  items.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    items.push_back({&real[real_idx[i]], true});
    items.push_back({&synth[synth_idx[i]], false});
  }
  const auto order = permutation(items.size(), seed, kSplit);
  const std::size_t n_train = train_count(items.size(), opt.train_fraction);

  Classifier model(real.front().cols(), opt, seed);
  Adam adam(model.params(), {.lr = opt.lr});

  auto split = [&](const std::vector<std::size_t>& rows, std::vector<Matrix>& pos, std::vector<Matrix>& neg) {
    pos.clear();
    neg.clear();
    for (std::size_t r : rows) (items[r].real ? pos : neg).push_back(*items[r].window);
  };

  BatchStream it(n_train, opt.batch_size, seed);
  std::vector<std::size_t> batch;
  std::vector<Matrix> pos, neg;
  const long steps = step_count(n_train, opt);
  for (long step = 0; step < steps; ++step) {
    it.next(batch);
    {
      std::vector<std::size_t> rows;
      for (std::size_t k : batch) rows.push_back(order[k]);
      split(rows, pos, neg);
      std::vector<Matrix> all = pos;
      all.insert(all.end(), neg.begin(), neg.end());
      Tape tape(adam.params());
      adam.zero_grad();
      Var logits = model.logits(tape, all);
      const double total = static_cast<double>(all.size());
      std::vector<Var> terms;
      if (!pos.empty()) {
        Var l = ad::bce_with_logits(ad::slice_rows(logits, 0, static_cast<Index>(pos.size())), 1.0);
        terms.push_back(ad::scale(l, static_cast<double>(pos.size()) / total));
      }
      if (!neg.empty()) {
        Var l = ad::bce_with_logits(
            ad::slice_rows(logits, static_cast<Index>(pos.size()), static_cast<Index>(neg.size())), 0.0);
        terms.push_back(ad::scale(l, static_cast<double>(neg.size()) / total));
      }
      Var loss = terms.size() == 2 ? ad::add(terms[0], terms[1]) : terms[0];
      tape.backward(loss);
      adam.step();
    }
  }

  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  split(test, pos, neg);
  std::size_t correct = 0;
  for (const auto* set : {&pos, &neg}) {
    if (set->empty()) continue;
    const bool label = set == &pos;
    for (std::size_t start = 0; start < set->size(); start += 512) {
      const std::size_t stop = std::min(set->size(), start + 512);
      std::vector<Matrix> chunk(set->begin() + static_cast<std::ptrdiff_t>(start),
                                set->begin() + static_cast<std::ptrdiff_t>(stop));
      Tape tape = Tape::inference();
      const Matrix logits = model.logits(tape, chunk).value();
      for (Index i = 0; i < logits.rows(); ++i) correct += ((logits(i, 0) > 0) == label) ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double discriminative_score(const std::vector<Matrix>& real, const std::vector<Matrix>& synth, std::uint64_t seed,
                            const PosthocOptions& opt) {
  return std::abs(discriminative_accuracy(real, synth, seed, opt) - 0.5);
}

double one_step_mae(const std::vector<Matrix>& train, const std::vector<Matrix>& test, std::uint64_t seed,
                    const PosthocOptions& opt) {
  check_windows(train, test, 1);
  if (train.front().rows() < 2) throw Error(ErrorKind::InsufficientData, "one-step prediction needs T >= 2");
  Predictor model(train.front().cols(), opt, seed);
  Adam adam(model.params(), {.lr = opt.lr});
  BatchStream it(train.size(), opt.batch_size, seed);
  std::vector<std::size_t> batch;
  const long steps = step_count(train.size(), opt);
  for (long step = 0; step < steps; ++step) {
    it.next(batch);
    {
      std::vector<Matrix> windows;
      for (std::size_t k : batch) windows.push_back(train[k]);
      Tape tape(adam.params());
      adam.zero_grad();
      auto [pred, target] = model.forward(tape, windows);
      tape.backward(ad::mae(pred, target));
      adam.step();
    }
  }
  double abs_sum = 0;
  double count = 0;
  for (std::size_t start = 0; start < test.size(); start += 512) {
    const std::size_t stop = std::min(test.size(), start + 512);
    std::vector<Matrix> chunk(test.begin() + static_cast<std::ptrdiff_t>(start),
                              test.begin() + static_cast<std::ptrdiff_t>(stop));
    Tape tape = Tape::inference();
    auto [pred, target] = model.forward(tape, chunk);
    abs_sum += (pred.value() - target.value()).cwiseAbs().sum();
    count += static_cast<double>(pred.value().size());
  }
  return abs_sum / count;
}

namespace {

std::pair<std::vector<Matrix>, std::vector<Matrix>> real_split(const std::vector<Matrix>& real, std::uint64_t seed,
                                                              double fraction) {
  const auto idx = permutation(real.size(), seed, kRealSplit);
  const std::size_t k = train_count(real.size(), fraction);
  return {pick(real, idx, 0, k), pick(real, idx, k, real.size())};
}

}  // namespace

double predictive_score(const std::vector<Matrix>& real, const std::vector<Matrix>& synth, std::uint64_t seed,
                        const PosthocOptions& opt) {
  check_windows(real, synth, opt.min_windows);
  auto [train, test] = real_split(real, seed, opt.train_fraction);
  return one_step_mae(synth, test, seed, opt);
}

PredictiveResult predictive_scores(const std::vector<Matrix>& real, const std::vector<Matrix>& synth,
                                   std::uint64_t seed, const PosthocOptions& opt) {
  check_windows(real, synth, opt.min_windows);
  auto [train, test] = real_split(real, seed, opt.train_fraction);
  return {one_step_mae(synth, test, seed, opt), one_step_mae(train, test, seed, opt)};
}

ScoreSummary ScoreSummary::of(std::vector<double> values) {
  ScoreSummary s;
  s.values = std::move(values);
  if (s.values.empty()) return s;
  const double n = static_cast<double>(s.values.size());
  s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
  double var = 0;
  for (double v : s.values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / n);
  return s;
}

nlohmann::json ScoreSummary::to_json() const { return {{"mean", mean}, {"std", std}, {"values", values}}; }

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j = {{"dataset", dataset},
                      {"ablation", ablation},
                      {"seed", seed},
                      {"real_windows", real_windows},
                      {"synth_windows", synth_windows},
                      {"predictive_error_unit", error_unit},
                      {"tsne_path", tsne_path}};
  if (!discriminative.values.empty()) {
    j["discriminative_score"] = discriminative.mean;
    j["discriminative"] = discriminative.to_json();
  }
  if (!predictive.values.empty()) {
    j["predictive_score"] = predictive.mean;
    j["predictive"] = predictive.to_json();
    j["trtr"] = trtr.to_json();
  }
  return j;
}

void MetricsReport::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path);
  os << to_json().dump(2) << '\n';
}

MetricsReport evaluate(const std::vector<Matrix>& real, const std::vector<Matrix>& synth, std::uint64_t seed,
                       const EvaluateOptions& opt) {
  check_windows(real, synth, opt.posthoc.min_windows);
  MetricsReport report;
  report.seed = seed;
  report.real_windows = real.size();
  report.synth_windows = synth.size();
  std::vector<double> disc, tstr, trtr;
  for (int s = 0; s < opt.metric_seeds; ++s) {
    const std::uint64_t metric_seed = Rng::stream(seed, 1000 + static_cast<std::uint64_t>(s)).next_u64();
    if (opt.discriminative) disc.push_back(discriminative_score(real, synth, metric_seed, opt.posthoc));
    if (opt.predictive) {
      PredictiveResult p = predictive_scores(real, synth, metric_seed, opt.posthoc);
      tstr.push_back(p.tstr);
      trtr.push_back(p.trtr);
    }
  }
  report.discriminative = ScoreSummary::of(std::move(disc));
  report.predictive = ScoreSummary::of(std::move(tstr));
  report.trtr = ScoreSummary::of(std::move(trtr));
  return report;
}

}  // namespace dlgan
