#include "dlgan/tsne.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "dlgan/errors.hpp"
#include "dlgan/rng.hpp"

namespace dlgan {

using Eigen::Index;
using Array = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

Array squared_distances(const Matrix& x) {
  const Eigen::VectorXd norms = x.rowwise().squaredNorm();
  Array d = (-2.0 * (x * x.transpose())).array();
  d.colwise() += norms.array();
  d.rowwise() += norms.transpose().array();
  return d.max(0.0);
}

// Row-conditional affinities with the entropy of each row matched to log(perplexity).
Array conditional_affinities(const Array& d, double perplexity) {
  const Index n = d.rows();
  const double target = std::log(perplexity);
  Array p(n, n);
  for (Index i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = -INFINITY;
    double hi = INFINITY;
    Eigen::ArrayXd row(n);
    for (int iter = 0; iter < 100; ++iter) {
      double sum = 0;
      double weighted = 0;
      for (Index j = 0; j < n; ++j) {
        row(j) = j == i ? 0.0 : std::exp(-beta * d(i, j));
        sum += row(j);
        weighted += row(j) * d(i, j);
      }
      if (sum <= 0) sum = 1e-300;
      const double entropy = std::log(sum) + beta * weighted / sum;
      row /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2 : (beta + hi) / 2;
      } else {
        hi = beta;
        beta = std::isinf(lo) ? beta / 2 : (beta + lo) / 2;
      }
    }
    p.row(i) = row.transpose();
  }
  return p;
}

std::string format(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

Matrix tsne(const Matrix& x, std::uint64_t seed, const TsneOptions& opt) {
  const Index n = x.rows();
  if (n < 4) throw Error(ErrorKind::InsufficientData, "t-SNE needs at least 4 points");
  const double perplexity = std::min(opt.perplexity, static_cast<double>(n - 1) / 3.0);

  Array p = conditional_affinities(squared_distances(x), perplexity);
  p = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  p = p.max(1e-12);

  Rng rng(seed);
  Matrix y = rng.normal_matrix(n, 2) * 1e-4;
  Matrix update = Matrix::Zero(n, 2);
  Array gains = Array::Ones(n, 2);

  for (int iter = 0; iter < opt.iterations; ++iter) {
    const bool early = iter < opt.exaggeration_iterations;
    const double exaggeration = early ? opt.early_exaggeration : 1.0;
    const double momentum = early ? 0.5 : 0.8;

    Array num = 1.0 / (1.0 + squared_distances(y));
    num.matrix().diagonal().setZero();
    const double z = num.sum();
    Array q = (num / z).max(1e-12);
    // grad_i = 4 * sum_j (p_ij - q_ij) num_ij (y_i - y_j)
    const Matrix w = ((exaggeration * p - q) * num).matrix();
    const Eigen::VectorXd w_sum = w.rowwise().sum();
    Matrix grad = 4.0 * (w_sum.asDiagonal() * y - w * y);

    Array same = ((grad.array() > 0) == (update.array() > 0)).cast<double>();
    gains = (same * (gains * 0.8) + (1.0 - same) * (gains + 0.2)).max(0.01);
    update = momentum * update - opt.learning_rate * (gains * grad.array()).matrix();
    y += update;
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

TsneEmbedding tsne_embed(const std::vector<Matrix>& real, const std::vector<Matrix>& synth, std::uint64_t seed,
                         const TsneOptions& opt) {
  if (real.size() < opt.min_per_side || synth.size() < opt.min_per_side) {
    throw Error(ErrorKind::InsufficientData,
                "t-SNE export needs at least " + std::to_string(opt.min_per_side) + " windows per side");
  }
  const Index width = real.front().size();
  auto take = [&](const std::vector<Matrix>& set, std::uint64_t stream) {
    std::vector<std::size_t> idx(set.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (set.size() > opt.max_per_side) {
      Rng rng = Rng::stream(seed, stream);
      rng.shuffle(idx.begin(), idx.end());
      idx.resize(opt.max_per_side);
      std::sort(idx.begin(), idx.end());
    }
    return idx;
  };
  const auto ri = take(real, 1);
  const auto si = take(synth, 2);
  Matrix x(static_cast<Index>(ri.size() + si.size()), width);
  TsneEmbedding e;
  Index row = 0;
  for (const auto& [set, idx, label] : {std::tuple{&real, &ri, true}, std::tuple{&synth, &si, false}}) {
    for (std::size_t k : *idx) {
      const Matrix& w = (*set)[k];
      if (w.size() != width) throw Error(ErrorKind::FeatureCountMismatch, "window shapes differ");
      x.row(row++) = Eigen::Map<const RowVector>(w.data(), width);
      e.real.push_back(label);
    }
  }
  e.coords = tsne(x, seed, opt);
  return e;
}

void write_tsne_csv(const TsneEmbedding& e, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path);
  os << "x,y,label\n";
  for (Index i = 0; i < e.coords.rows(); ++i) {
    os << format(e.coords(i, 0)) << ',' << format(e.coords(i, 1)) << ',' << (e.real[i] ? "real" : "synth") << '\n';
  }
}

void write_tsne_svg(const TsneEmbedding& e, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path);
  constexpr double size = 600;
  constexpr double margin = 20;
  const RowVector lo = e.coords.colwise().minCoeff();
  const RowVector hi = e.coords.colwise().maxCoeff();
  const RowVector span = (hi - lo).cwiseMax(1e-12);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (Index i = 0; i < e.coords.rows(); ++i) {
    const double px = margin + (e.coords(i, 0) - lo(0)) / span(0) * (size - 2 * margin);
    const double py = size - margin - (e.coords(i, 1) - lo(1)) / span(1) * (size - 2 * margin);
    os << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"2\" fill=\"" << (e.real[i] ? "red" : "blue")
       << "\" fill-opacity=\"0.5\"/>\n";
  }
  os << "</svg>\n";
}

std::string tsne_export(const std::vector<Matrix>& real, const std::vector<Matrix>& synth,
                        const std::string& out_path, std::uint64_t seed, bool svg, const TsneOptions& opt) {
  TsneEmbedding e = tsne_embed(real, synth, seed, opt);
  const auto parent = std::filesystem::path(out_path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  write_tsne_csv(e, out_path);
  if (svg) write_tsne_svg(e, std::filesystem::path(out_path).replace_extension(".svg").string());
  return out_path;
}

}  // namespace dlgan
