#pragma once

#include <algorithm>
#include <array>
#include <concepts>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "groundvlp/bundle.hpp"
#include "groundvlp/error.hpp"
#include "groundvlp/matrix.hpp"

namespace groundvlp {

/// Head-averaged GradCAM map G, s x q.
struct RawGradcamMap {
  Matrix<double> values;
};

/// Influence of each image token on each text token, T x I.
struct CrossModalMap {
  Matrix<double> values;
};

/// Per-image-token attribution for one expression, length I.
struct TokenAttribution {
  std::vector<double> values;
  std::vector<std::size_t> source_tokens;
};

/// POS tags considered visually groundable.
struct PosWhitelist {
  std::set<std::string> tags{"NOUN", "ADJ", "VERB", "PROPN", "NUM"};

  bool contains(const std::string& tag) const { return tags.count(tag) != 0; }
};

/// G[i,j] = mean over heads of max(0, dA[h,i,j]) * A[h,i,j], accumulated in
/// f64. The per-head terms are summed in ascending order, so the result does
/// not depend on head order.
template <std::floating_point T>
RawGradcamMap compute_gradcam_map(const Tensor3<T>& attention, const Tensor3<T>& gradient) {
  if (attention.shape() != gradient.shape())
    throw Error(Errc::kShapeMismatch, "gradient", "attention and gradient shapes differ");
  const std::size_t heads = attention.heads();
  if (heads == 0) throw Error(Errc::kShapeMismatch, "attention", "needs at least one head");

  const std::size_t rows = attention.rows();
  const std::size_t cols = attention.cols();
  const std::size_t plane = rows * cols;
  const auto a = attention.data();
  const auto g = gradient.data();

  RawGradcamMap out{Matrix<double>(rows, cols)};
  auto dst = out.values.data();
  std::vector<double> terms(heads);
  for (std::size_t e = 0; e < plane; ++e) {
    for (std::size_t h = 0; h < heads; ++h) {
      const double grad = static_cast<double>(g[h * plane + e]);
      terms[h] = grad > 0.0 ? grad * static_cast<double>(a[h * plane + e]) : 0.0;
    }
    std::sort(terms.begin(), terms.end());
    double sum = 0.0;
    for (double t : terms) sum += t;
    dst[e] = sum / static_cast<double>(heads);
  }
  return out;
}

/// Slices G down to the T x I text-by-image block. One-stream sequences put
/// text tokens ([CLS] first) before image tokens.
inline CrossModalMap crop_to_text_image(const RawGradcamMap& raw, Architecture arch,
                                        std::size_t text_tokens, std::size_t image_tokens) {
  const auto& g = raw.values;
  if (arch == Architecture::kTwoStream) {
    if (g.rows() != text_tokens || g.cols() != image_tokens)
      throw Error(Errc::kShapeMismatch, "gradcam", "two-stream map must be T x I");
    return {g};
  }
  const std::size_t joint = text_tokens + image_tokens;
  if (g.rows() != joint || g.cols() != joint)
    throw Error(Errc::kShapeMismatch, "gradcam", "one-stream map must be (T+I) x (T+I)");
  CrossModalMap out{Matrix<double>(text_tokens, image_tokens)};
  for (std::size_t r = 0; r < text_tokens; ++r) {
    const auto src = g.row(r).subspan(text_tokens, image_tokens);
    std::copy(src.begin(), src.end(), out.values.row(r).begin());
  }
  return out;
}

/// Token set W' for one expression. Returned indices are sorted.
inline std::vector<std::size_t> select_visual_tokens(const std::vector<TokenMeta>& tokens,
                                                     const ExpressionSpan& span, TaskKind kind,
                                                     const PosWhitelist& whitelist = {}) {
  std::vector<std::size_t> selected;
  for (std::size_t t : span.token_indices)
    if (!tokens[t].is_special && whitelist.contains(tokens[t].pos_tag)) selected.push_back(t);

  if (selected.empty())
    for (std::size_t t : span.token_indices)
      if (!tokens[t].is_special) selected.push_back(t);

  if (kind == TaskKind::kRec) {
    for (const auto& t : tokens)
      if (t.is_cls) selected.push_back(t.index);
  }
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());
  return selected;
}

/// Column-wise mean of the selected rows of G'.
inline TokenAttribution aggregate_visual_words(const CrossModalMap& cross,
                                               const std::vector<std::size_t>& selected) {
  if (selected.empty())
    throw Error(Errc::kEmptySelection, "tokens", "no text token selected for aggregation");
  const auto& g = cross.values;
  for (std::size_t t : selected)
    if (t >= g.rows()) throw Error(Errc::kEmptySelection, "tokens", "token index out of range");

  const std::size_t cols = g.cols();
  std::vector<double> sum(cols, 0.0);
  std::vector<double> lo(cols, std::numeric_limits<double>::infinity());
  std::vector<double> hi(cols, -std::numeric_limits<double>::infinity());
  for (std::size_t t : selected) {
    const auto row = g.row(t);
    for (std::size_t j = 0; j < cols; ++j) {
      sum[j] += row[j];
      lo[j] = std::min(lo[j], row[j]);
      hi[j] = std::max(hi[j], row[j]);
    }
  }
  const double n = static_cast<double>(selected.size());
  TokenAttribution out{std::vector<double>(cols), selected};
  // Rounding can push a mean of near-equal rows one ulp outside their range.
  for (std::size_t j = 0; j < cols; ++j) out.values[j] = std::clamp(sum[j] / n, lo[j], hi[j]);
  return out;
}

}  // namespace groundvlp
