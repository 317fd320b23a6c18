// Python bindings for the dlgan core.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dlgan/checkpoint.hpp"
#include "dlgan/errors.hpp"
#include "dlgan/evaluation.hpp"
#include "dlgan/trainer.hpp"
#include "dlgan/tsne.hpp"

namespace py = pybind11;
using namespace dlgan;
using Eigen::Index;

namespace {

using Array3 = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (n, T, M) array <-> list of T x M windows.
std::vector<Matrix> to_windows(const Array3& a) {
  if (a.ndim() != 3) throw py::value_error("expected an array shaped (n, T, M)");
  const Index n = a.shape(0), t = a.shape(1), m = a.shape(2);
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(n));
  const double* p = a.data();
  for (Index i = 0; i < n; ++i) out.push_back(Eigen::Map<const Matrix>(p + i * t * m, t, m));
  return out;
}

Array3 from_windows(const std::vector<Matrix>& ws) {
  const Index t = ws.empty() ? 0 : ws.front().rows(), m = ws.empty() ? 0 : ws.front().cols();
  Array3 a({static_cast<Index>(ws.size()), t, m});
  double* p = a.mutable_data();
  for (std::size_t i = 0; i < ws.size(); ++i) Eigen::Map<Matrix>(p + static_cast<Index>(i) * t * m, t, m) = ws[i];
  return a;
}

RawSeries series(const Matrix& values, std::vector<std::string> names) {
  RawSeries s;
  s.values = values;
  if (names.empty()) {
    for (Index j = 0; j < values.cols(); ++j) names.push_back("f" + std::to_string(j));
  }
  if (static_cast<Index>(names.size()) != values.cols()) throw py::value_error("one name per column is required");
  s.feature_names = std::move(names);
  return s;
}

// Owns the dataset a Trainer was built from.
struct Session {
  Session(const Matrix& values, std::vector<std::string> names, TrainingConfig config)
      : data(prepare_dataset(series(values, std::move(names)), config.window, config.stride)),
        trainer(config, data.windows, data.stats, data.raw.feature_names) {}

  Dataset data;
  Trainer trainer;
};

}  // namespace

PYBIND11_MODULE(_dlgan, m) {
  m.doc() = "Dual-layer GAN for multivariate time-series synthesis";

  py::register_exception<Error>(m, "DlganError");

  py::enum_<Ablation>(m, "Ablation")
      .value("none", Ablation::None)
      .value("no_extractor", Ablation::NoExtractor)
      .value("no_reconstructor", Ablation::NoReconstructor)
      .value("all", Ablation::All);

  py::class_<TrainingConfig>(m, "TrainingConfig")
      .def(py::init<>())
      .def_static("load", &TrainingConfig::load, py::arg("path"))
      .def_static("parse", &TrainingConfig::parse_text, py::arg("text"))
      .def("to_text", &TrainingConfig::to_text)
      .def("resolve", &TrainingConfig::resolve, py::arg("features"))
      .def("validate", &TrainingConfig::validate)
      .def_property("ablation", &TrainingConfig::ablation, &TrainingConfig::set_ablation)
      .def_readwrite("window", &TrainingConfig::window)
      .def_readwrite("stride", &TrainingConfig::stride)
      .def_readwrite("latent_dim", &TrainingConfig::latent_dim)
      .def_readwrite("feature_dim", &TrainingConfig::feature_dim)
      .def_readwrite("patch_len", &TrainingConfig::patch_len)
      .def_readwrite("patch_embed", &TrainingConfig::patch_embed)
      .def_readwrite("heads", &TrainingConfig::heads)
      .def_readwrite("trend_window", &TrainingConfig::trend_window)
      .def_readwrite("noise_len", &TrainingConfig::noise_len)
      .def_readwrite("noise_dim", &TrainingConfig::noise_dim)
      .def_readwrite("ae_layers", &TrainingConfig::ae_layers)
      .def_readwrite("summary_layers", &TrainingConfig::summary_layers)
      .def_readwrite("generator_layers", &TrainingConfig::generator_layers)
      .def_readwrite("disc_layers", &TrainingConfig::disc_layers)
      .def_readwrite("lr_pretrain", &TrainingConfig::lr_pretrain)
      .def_readwrite("lr_joint", &TrainingConfig::lr_joint)
      .def_readwrite("lr_disc", &TrainingConfig::lr_disc)
      .def_readwrite("disc_steps", &TrainingConfig::disc_steps)
      .def_readwrite("joint_extractor", &TrainingConfig::joint_extractor)
      .def_readwrite("batch_size", &TrainingConfig::batch_size)
      .def_readwrite("epochs_ae", &TrainingConfig::epochs_ae)
      .def_readwrite("epochs_latent", &TrainingConfig::epochs_latent)
      .def_readwrite("epochs_joint", &TrainingConfig::epochs_joint)
      .def_readwrite("seed", &TrainingConfig::seed)
      .def("__repr__", [](const TrainingConfig& c) { return "TrainingConfig(\n" + c.to_text() + ")"; });

  py::class_<LossRecord>(m, "LossRecord")
      .def_readonly("phase", &LossRecord::phase)
      .def_readonly("epoch", &LossRecord::epoch)
      .def_readonly("ae", &LossRecord::ae)
      .def_readonly("h", &LossRecord::h)
      .def_readonly("g", &LossRecord::g)
      .def_readonly("d", &LossRecord::d)
      .def("to_json", [](const LossRecord& r) { return r.to_json().dump(); });

  m.def(
      "make_sine",
      [](Index length, Index features, std::uint64_t seed, double noise) {
        return make_sine(length, features, seed, noise).values;
      },
      py::arg("length"), py::arg("features") = 5, py::arg("seed") = 0, py::arg("noise") = 0.0,
      "Multivariate sine fixture as a (length, features) array.");

  m.def(
      "load_csv",
      [](const std::string& path) {
        RawSeries s = load_csv(path);
        return py::make_tuple(s.values, s.feature_names);
      },
      py::arg("path"), "Numeric columns of a CSV as (values, names).");

  py::class_<Session>(m, "Trainer")
      .def(py::init<const Matrix&, std::vector<std::string>, TrainingConfig>(), py::arg("values"),
           py::arg("names") = std::vector<std::string>{}, py::arg("config") = TrainingConfig{})
      .def(
          "train",
          [](Session& s, const std::function<void(const LossRecord&)>& callback) {
            py::gil_scoped_release release;
            return s.trainer.train([&](const LossRecord& r) {
              if (!callback) return;
              py::gil_scoped_acquire acquire;
              callback(r);
            });
          },
          py::arg("callback") = nullptr)
      .def("pretrain_autoencoder", [](Session& s) { return s.trainer.pretrain_autoencoder(); })
      .def("pretrain_latent_path", [](Session& s) { return s.trainer.pretrain_latent_path(); })
      .def("train_joint", [](Session& s) { return s.trainer.train_joint(); })
      .def(
          "synthesize",
          [](Session& s, std::size_t n, std::uint64_t seed, bool denormalized) {
            return from_windows(s.trainer.synthesize(n, seed, denormalized));
          },
          py::arg("n"), py::arg("seed") = 0, py::arg("denormalized") = true)
      .def("real_windows", [](const Session& s) { return from_windows(window_values(s.data.windows)); },
           "Normalized training windows, shaped (n, T, M).")
      .def("save", [](Session& s, const std::string& path) { s.trainer.checkpoint().save(path); }, py::arg("path"))
      .def_property_readonly("config", [](Session& s) { return s.trainer.config(); });

  m.def(
      "synthesize_from_checkpoint",
      [](const std::string& path, std::size_t n, std::uint64_t seed, bool denormalized) {
        return from_windows(synthesize(Checkpoint::load(path), n, seed, denormalized));
      },
      py::arg("path"), py::arg("n"), py::arg("seed") = 0, py::arg("denormalized") = true);

  m.def(
      "discriminative_score",
      [](const Array3& real, const Array3& synth, std::uint64_t seed, long iterations) {
        PosthocOptions opt;
        opt.iterations = iterations;
        return discriminative_score(to_windows(real), to_windows(synth), seed, opt);
      },
      py::arg("real"), py::arg("synth"), py::arg("seed") = 0, py::arg("iterations") = 0);

  m.def(
      "predictive_scores",
      [](const Array3& real, const Array3& synth, std::uint64_t seed, long iterations) {
        PosthocOptions opt;
        opt.iterations = iterations;
        PredictiveResult r = predictive_scores(to_windows(real), to_windows(synth), seed, opt);
        return py::dict(py::arg("tstr") = r.tstr, py::arg("trtr") = r.trtr);
      },
      py::arg("real"), py::arg("synth"), py::arg("seed") = 0, py::arg("iterations") = 0);

  m.def(
      "tsne",
      [](const Array3& real, const Array3& synth, std::uint64_t seed) {
        TsneEmbedding e = tsne_embed(to_windows(real), to_windows(synth), seed);
        return py::make_tuple(e.coords, std::vector<bool>(e.real.begin(), e.real.end()));
      },
      py::arg("real"), py::arg("synth"), py::arg("seed") = 0,
      "Joint 2-D embedding; returns (coords, is_real).");
}
