// dlgan command-line tool.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dlgan/checkpoint.hpp"
#include "dlgan/errors.hpp"
#include "dlgan/evaluation.hpp"
#include "dlgan/trainer.hpp"
#include "dlgan/tsne.hpp"

#ifndef DLGAN_VERSION
#define DLGAN_VERSION "dev"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dlgan;

namespace {

enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kConfigInvalid = 2,
  kDataError = 3,
  kDivergence = 4,
  kCheckpointError = 5,
  kUsage = 64,
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigInvalid:
    case ErrorKind::HeadDivisibility:
    case ErrorKind::BadWindow:
    case ErrorKind::IndivisibleLength:
      return kConfigInvalid;
    case ErrorKind::FileNotFound:
    case ErrorKind::NoNumericColumns:
    case ErrorKind::EmptyAfterCleaning:
    case ErrorKind::FeatureCountMismatch:
    case ErrorKind::SeriesTooShort:
    case ErrorKind::InsufficientData:
      return kDataError;
    case ErrorKind::DivergenceDetected:
    case ErrorKind::NonFiniteActivation:
    case ErrorKind::NonFiniteLogit:
      return kDivergence;
    case ErrorKind::UntrainedCheckpoint:
    case ErrorKind::VersionMismatch:
    case ErrorKind::CorruptFile:
      return kCheckpointError;
    default:
      return kFailure;
  }
}

struct Options {
  std::string config_path;
  std::string data_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<long> n;
  std::string ablation;
  bool print_config = false;

  std::string checkpoint;
  std::string synth;
  long features = 5;
  double noise = 0.0;
  int metric_seeds = 5;
  bool svg = false;
  bool no_tsne = false;
  std::vector<std::string> argv;
};

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("DLGAN_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::ConfigInvalid, std::string("DLGAN_SEED: not an unsigned integer: ") + s);
  }
}

// --seed, then DLGAN_SEED, then `fallback`.
std::uint64_t pick_seed(const Options& o, std::uint64_t fallback) {
  if (o.seed) return *o.seed;
  if (auto s = env_seed()) return *s;
  return fallback;
}

TrainingConfig load_config(const Options& o) {
  TrainingConfig c;
  if (!o.config_path.empty()) {
    try {
      c = TrainingConfig::load(o.config_path);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::FileNotFound) throw Error(ErrorKind::ConfigInvalid, "config file not found: " + o.config_path);
      throw;
    }
  }
  if (!o.ablation.empty()) c.set_ablation(parse_ablation(o.ablation));
  c.seed = pick_seed(o, c.seed);
  return c;
}

std::string require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::ValidationError(flag, "is required for this command");
  return value;
}

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::uint32_t file_crc32(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::FileNotFound, path);
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string bytes = ss.str();
  return crc32_of(bytes.data(), bytes.size());
}

std::string joined(const std::vector<std::string>& argv) {
  std::string s;
  for (const auto& a : argv) s += (s.empty() ? "" : " ") + a;
  return s;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path);
  os << j.dump(2) << '\n';
}

void save_atomic(const Checkpoint& c, const std::string& path) {
  const std::string tmp = path + ".tmp";
  c.save(tmp);
  fs::rename(tmp, path);
}

int cmd_print_config(const Options& o) {
  TrainingConfig c = load_config(o);
  if (!o.data_path.empty()) c.resolve(load_csv(o.data_path).features());
  std::cout << c.to_text();
  return kOk;
}

int cmd_train(const Options& o) {
  TrainingConfig config = load_config(o);
  const std::string out = require(o.out, "--out");
  RawSeries raw = load_csv(require(o.data_path, "--data"));
  config.resolve(raw.features());
  Dataset data = prepare_dataset(std::move(raw), config.window, config.stride);

  fs::create_directories(out);
  const std::string manifest_path = (fs::path(out) / "manifest.json").string();
  const std::string ckpt_path = (fs::path(out) / "checkpoint.dlgan").string();
  json manifest = {{"tool", "dlgan"},
                   {"version", DLGAN_VERSION},
                   {"command", joined(o.argv)},
                   {"config", config.to_json()},
                   {"dataset",
                    {{"path", fs::absolute(o.data_path).string()},
                     {"crc32", file_crc32(o.data_path)},
                     {"rows", data.raw.length()},
                     {"features", data.raw.features()},
                     {"feature_names", data.raw.feature_names},
                     {"windows", data.windows.size()}}},
                   {"started_at", iso_now()},
                   {"status", "running"}};
  write_json(manifest_path, manifest);

  std::ofstream log((fs::path(out) / "losses.ndjson").string());
  if (!log) throw Error(ErrorKind::Io, "cannot write loss log in " + out);
  auto sink = [&](const LossRecord& r) {
    log << r.to_json().dump() << '\n';
    log.flush();
    std::cerr << "phase " << r.phase << " epoch " << r.epoch << " L_R^AE=" << r.ae << " L_R^H=" << r.h
              << " L_G=" << r.g << " L_D=" << r.d << '\n';
  };

  Trainer trainer(config, std::move(data.windows), data.stats, data.raw.feature_names);
  try {
    trainer.pretrain_autoencoder(sink);
    save_atomic(trainer.checkpoint(), ckpt_path);
    trainer.pretrain_latent_path(sink);
    save_atomic(trainer.checkpoint(), ckpt_path);
    trainer.train_joint(sink);
    save_atomic(trainer.checkpoint(), ckpt_path);
  } catch (const Error& e) {
    manifest["status"] = std::string("failed: ") + e.what();
    manifest["finished_at"] = iso_now();
    write_json(manifest_path, manifest);
    throw;
  }
  manifest["status"] = "complete";
  manifest["finished_at"] = iso_now();
  manifest["checkpoint"] = ckpt_path;
  write_json(manifest_path, manifest);
  std::cerr << "checkpoint written to " << ckpt_path << '\n';
  return kOk;
}

std::string checkpoint_path(const std::string& s) {
  if (fs::is_directory(s)) return (fs::path(s) / "checkpoint.dlgan").string();
  return s;
}

int cmd_synthesize(const Options& o) {
  const Checkpoint ckpt = Checkpoint::load(checkpoint_path(require(o.checkpoint, "--checkpoint")));
  const long n = o.n.value_or(100);
  if (n < 0) throw CLI::ValidationError("--n", "must be non-negative");
  const auto windows = synthesize(ckpt, static_cast<std::size_t>(n), pick_seed(o, ckpt.config.seed));
  write_windows_csv(require(o.out, "--out"), windows, ckpt.feature_names);
  return kOk;
}

// Real and synthetic windows in normalized units, plus report metadata.
struct EvalInputs {
  std::vector<Matrix> real;
  std::vector<Matrix> synth;
  std::string ablation = "none";
};

EvalInputs eval_inputs(const Options& o, std::uint64_t seed) {
  if (o.checkpoint.empty() == o.synth.empty()) {
    throw CLI::ValidationError("--checkpoint/--synth", "give exactly one synthetic source");
  }
  RawSeries raw = load_csv(require(o.data_path, "--data"));
  EvalInputs in;
  if (!o.checkpoint.empty()) {
    const Checkpoint ckpt = Checkpoint::load(checkpoint_path(o.checkpoint));
    if (raw.features() != ckpt.stats.features()) {
      throw Error(ErrorKind::FeatureCountMismatch, "data has " + std::to_string(raw.features()) +
                                                       " features, checkpoint expects " +
                                                       std::to_string(ckpt.stats.features()));
    }
    Dataset d = prepare_dataset(std::move(raw), ckpt.stats, ckpt.config.window, ckpt.config.stride);
    in.real = window_values(d.windows);
    const std::size_t n = o.n ? static_cast<std::size_t>(*o.n) : in.real.size();
    in.synth = synthesize(ckpt, n, seed, false);
    in.ablation = to_string(ckpt.config.ablation());
  } else {
    std::vector<std::string> names;
    std::vector<Matrix> synth = read_windows_csv(o.synth, &names);
    if (synth.empty()) throw Error(ErrorKind::InsufficientData, "no windows in " + o.synth);
    if (synth.front().cols() != raw.features()) {
      throw Error(ErrorKind::FeatureCountMismatch, "synthetic windows have " + std::to_string(synth.front().cols()) +
                                                       " features, data has " + std::to_string(raw.features()));
    }
    Dataset d = prepare_dataset(std::move(raw), synth.front().rows(), 1);
    in.real = window_values(d.windows);
    for (Matrix& w : synth) w = normalize(w, d.stats);
    if (o.n && static_cast<std::size_t>(*o.n) < synth.size()) synth.resize(static_cast<std::size_t>(*o.n));
    in.synth = std::move(synth);
  }
  return in;
}

int cmd_evaluate(const Options& o) {
  const std::uint64_t seed = pick_seed(o, 0);
  const std::string out = require(o.out, "--out");
  EvalInputs in = eval_inputs(o, seed);
  EvaluateOptions opt;
  opt.metric_seeds = o.metric_seeds;
  MetricsReport report = evaluate(in.real, in.synth, seed, opt);
  report.dataset = o.data_path;
  report.ablation = in.ablation;
  fs::create_directories(out);
  if (!o.no_tsne) {
    report.tsne_path = tsne_export(in.real, in.synth, (fs::path(out) / "tsne.csv").string(), seed, o.svg);
  }
  report.save((fs::path(out) / "metrics.json").string());
  std::cout << report.to_json().dump(2) << '\n';
  return kOk;
}

int cmd_visualize(const Options& o) {
  const std::uint64_t seed = pick_seed(o, 0);
  EvalInputs in = eval_inputs(o, seed);
  std::string out = require(o.out, "--out");
  if (fs::is_directory(out) || fs::path(out).extension() != ".csv") out = (fs::path(out) / "tsne.csv").string();
  std::cout << tsne_export(in.real, in.synth, out, seed, o.svg) << '\n';
  return kOk;
}

int cmd_make_sine(const Options& o) {
  const long n = o.n.value_or(1024);
  if (n < 1) throw CLI::ValidationError("--n", "must be positive");
  if (o.features < 1) throw CLI::ValidationError("--features", "must be positive");
  RawSeries s = make_sine(n, o.features, pick_seed(o, 0), o.noise);
  const std::string out = require(o.out, "--out");
  const auto parent = fs::path(out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_series_csv(out, s);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  o.argv.assign(argv, argv + argc);

  CLI::App app{"Dual-layer GAN time-series synthesis"};
  app.set_version_flag("--version", DLGAN_VERSION);
  app.require_subcommand(0, 1);
  app.fallthrough();

  app.add_option("--config", o.config_path, "Config file (key = value lines)");
  app.add_option("--data", o.data_path, "Input CSV");
  app.add_option("--out", o.out, "Output file or directory");
  app.add_option("--seed", o.seed, "Seed (falls back to DLGAN_SEED, then the config)");
  app.add_option("--n", o.n, "Count: windows to synthesize, or rows for make-sine");
  app.add_option("--ablation", o.ablation, "Ablation")
      ->check(CLI::IsMember({"none", "no_extractor", "no_reconstructor", "all"}));
  app.add_flag("--print-config", o.print_config, "Print the effective config and exit");

  auto* train = app.add_subcommand("train", "Run all three training phases");
  auto* synth = app.add_subcommand("synthesize", "Write synthetic windows from a checkpoint");
  synth->add_option("--checkpoint", o.checkpoint, "Checkpoint file or training output directory");
  auto* eval = app.add_subcommand("evaluate", "Discriminative and predictive scores plus t-SNE export");
  auto* vis = app.add_subcommand("visualize", "t-SNE export only");
  for (auto* sub : {eval, vis}) {
    sub->add_option("--checkpoint", o.checkpoint, "Checkpoint file or training output directory");
    sub->add_option("--synth", o.synth, "Synthetic windows CSV (window_id column)");
    sub->add_flag("--svg", o.svg, "Also write a scatter plot next to the CSV");
  }
  eval->add_option("--metric-seeds", o.metric_seeds, "Number of metric seeds")->check(CLI::PositiveNumber);
  eval->add_flag("--no-tsne", o.no_tsne, "Skip the t-SNE export");
  auto* sine = app.add_subcommand("make-sine", "Write the multivariate sine fixture");
  sine->add_option("--features", o.features, "Number of features");
  sine->add_option("--noise", o.noise, "Gaussian noise standard deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (o.print_config) return cmd_print_config(o);
    if (train->parsed()) return cmd_train(o);
    if (synth->parsed()) return cmd_synthesize(o);
    if (eval->parsed()) return cmd_evaluate(o);
    if (vis->parsed()) return cmd_visualize(o);
    if (sine->parsed()) return cmd_make_sine(o);
    std::cerr << app.help();
    return kUsage;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
