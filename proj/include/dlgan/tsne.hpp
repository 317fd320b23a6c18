#pragma once

// Exact t-distributed stochastic neighbor embedding into two dimensions.

#include <cstdint>
#include <string>
#include <vector>

#include "dlgan/autodiff.hpp"

namespace dlgan {

struct TsneOptions {
  double perplexity = 40;
  int iterations = 1000;
  double learning_rate = 200;
  double early_exaggeration = 12;
  int exaggeration_iterations = 250;
  std::size_t max_per_side = 1000;
  std::size_t min_per_side = 50;
};

// Rows of `x` -> n x 2 coordinates. Perplexity is capped at (n - 1) / 3.
Matrix tsne(const Matrix& x, std::uint64_t seed, const TsneOptions& opt = {});

struct TsneEmbedding {
  Matrix coords;            // n x 2
  std::vector<bool> real;   // label per row
};

// Flattens each window, subsamples each side, embeds both sets jointly.
TsneEmbedding tsne_embed(const std::vector<Matrix>& real, const std::vector<Matrix>& synth, std::uint64_t seed,
                         const TsneOptions& opt = {});

// CSV with header x,y,label and label in {real, synth}.
void write_tsne_csv(const TsneEmbedding& e, const std::string& path);
// Scatter plot: real in red, synthetic in blue.
void write_tsne_svg(const TsneEmbedding& e, const std::string& path);

// Embeds and writes the CSV (plus an SVG next to it when `svg`); returns the CSV path.
std::string tsne_export(const std::vector<Matrix>& real, const std::vector<Matrix>& synth,
                        const std::string& out_path, std::uint64_t seed, bool svg = false,
                        const TsneOptions& opt = {});

}  // namespace dlgan
