#include "dlgan/extractor.hpp"

#include <cmath>

#include "dlgan/errors.hpp"

namespace dlgan {

using Eigen::Index;

Matrix patch(const Eigen::Ref<const Eigen::VectorXd>& channel, Index patch_len) {
  const Index len = channel.size();
  if (patch_len < 1 || len % patch_len != 0) {
    throw Error(ErrorKind::IndivisibleLength,
                "length " + std::to_string(len) + " not divisible by patch " + std::to_string(patch_len));
  }
  const Index count = len / patch_len;
  Matrix out(count, patch_len);
  for (Index k = 0; k < count; ++k) out.row(k) = channel.segment(k * patch_len, patch_len).transpose();
  return out;
}

Matrix positional_encoding(Index positions, Index width) {
  Matrix pe(positions, width);
  for (Index k = 0; k < positions; ++k) {
    for (Index i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(width));
      pe(k, i) = (i % 2 == 0) ? std::sin(static_cast<double>(k) * freq) : std::cos(static_cast<double>(k) * freq);
    }
  }
  return pe;
}

TemporalFeatureExtractor::TemporalFeatureExtractor(const TrainingConfig& c, Rng& rng)
    : ablated_(c.no_extractor),
      window_(c.window),
      latent_(c.latent_dim),
      patch_len_(c.patch_len),
      patches_(c.window / c.patch_len),
      embed_width_(c.patch_embed) {
  if (c.window % c.patch_len != 0) {
    throw Error(ErrorKind::IndivisibleLength, "T not divisible by p");
  }
  if (ablated_) {
    summarizer_ = GruStack("extractor.rnn", c.latent_dim, c.feature_dim, static_cast<int>(c.summary_layers), rng);
    return;
  }
  embed_ = Linear("extractor.embed", c.patch_len, c.patch_embed, rng);
  temporal_msa_ = MultiHeadAttention("extractor.temporal", c.patch_embed, c.heads, c.extractor_scaled, true, rng);
  channel_msa_ = MultiHeadAttention("extractor.channel", c.patch_embed, c.heads, c.extractor_scaled, true, rng);
  summarizer_ = GruStack("extractor.rnn", c.latent_dim * c.patch_embed, c.feature_dim,
                         static_cast<int>(c.summary_layers), rng);
  pos_table_ = positional_encoding(patches_, embed_width_);
}

Var TemporalFeatureExtractor::patch_tokens(Tape&, const Var& hidden, SeqShape shape) {
  const Index b_count = shape.batch, n = latent_, p = patch_len_, pc = patches_;
  std::vector<Index> idx(static_cast<std::size_t>(b_count * n * pc * p));
  std::size_t i = 0;
  for (Index b = 0; b < b_count; ++b) {
    for (Index d = 0; d < n; ++d) {
      for (Index k = 0; k < pc; ++k) {
        for (Index j = 0; j < p; ++j) idx[i++] = ((k * p + j) * b_count + b) * n + d;
      }
    }
  }
  return ad::gather(hidden, b_count * n * pc, p, std::move(idx));
}

Var TemporalFeatureExtractor::embed(Tape& tape, const Var& tokens) {
  const Index groups = tokens.rows() / patches_;
  Matrix tiled = pos_table_.replicate(groups, 1);
  return ad::add(embed_(tape, tokens), tape.constant(std::move(tiled)));
}

Var TemporalFeatureExtractor::temporal_attention(Tape& tape, const Var& embedded, Index groups) {
  return ad::add(embedded, temporal_msa_(tape, embedded, embedded, groups, patches_, patches_));
}

Var TemporalFeatureExtractor::channel_attention(Tape& tape, const Var& tokens, Index groups) {
  const Index channels = tokens.rows() / groups;
  return ad::add(tokens, channel_msa_(tape, tokens, tokens, groups, channels, channels));
}

FeatureOutput TemporalFeatureExtractor::extract(Tape& tape, const Var& hidden, SeqShape shape) {
  if (hidden.rows() != shape.rows() || hidden.cols() != latent_ || shape.steps != window_) {
    throw Error(ErrorKind::ShapeMismatch, "extract expects a (T*B) x N hidden sequence");
  }
  if (ablated_) {
    GruOutput out = summarizer_.forward(tape, hidden, shape);
    return {out.last, out.sequence, shape.steps};
  }
  const Index b_count = shape.batch, n = latent_, pc = patches_, e = embed_width_;
  Var time = temporal_attention(tape, embed(tape, patch_tokens(tape, hidden, shape)), b_count * n);

  // (b, d, k) -> (b, k, d)
  std::vector<Index> to_channel(static_cast<std::size_t>(b_count * pc * n));
  for (Index b = 0; b < b_count; ++b) {
    for (Index k = 0; k < pc; ++k) {
      for (Index d = 0; d < n; ++d) {
        to_channel[static_cast<std::size_t>((b * pc + k) * n + d)] = (b * n + d) * pc + k;
      }
    }
  }
  Var dim = channel_attention(tape, ad::gather_rows(time, std::move(to_channel)), b_count * pc);

  // One row per (b, k) holding all channels, then time-major over k.
  Var flat = ad::reshape(dim, b_count * pc, n * e);
  Var seq = ad::gather_rows(flat, group_to_time_major(pc, b_count));
  GruOutput out = summarizer_.forward(tape, seq, SeqShape{pc, b_count});
  return {out.last, out.sequence, pc};
}

Matrix TemporalFeatureExtractor::extract(const Matrix& hidden, SeqShape shape) {
  Tape tape = Tape::inference();
  return extract(tape, tape.constant(hidden), shape).embedding.value();
}

ParamList TemporalFeatureExtractor::params() {
  ParamList out;
  if (!ablated_) {
    embed_.collect(out);
    temporal_msa_.collect(out);
    channel_msa_.collect(out);
  }
  summarizer_.collect(out);
  return out;
}

Var expand_steps(const Var& steps, Index step_count, Index batch, Index factor) {
  std::vector<Index> idx(static_cast<std::size_t>(step_count * factor * batch));
  for (Index t = 0; t < step_count * factor; ++t) {
    for (Index b = 0; b < batch; ++b) idx[static_cast<std::size_t>(t * batch + b)] = (t / factor) * batch + b;
  }
  return ad::gather_rows(steps, std::move(idx));
}

}  // namespace dlgan
