#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "groundvlp/bundle.hpp"
#include "groundvlp/category.hpp"
#include "groundvlp/error.hpp"
#include "groundvlp/fixture_io.hpp"
#include "groundvlp/gradcam.hpp"
#include "groundvlp/heatmap.hpp"
#include "groundvlp/parse_tree.hpp"

namespace groundvlp {

/// Where the detector category comes from: the annotated category of the
/// expression, or the one predicted from its parse.
enum class CategoryMode { kGroundTruth, kPredicted };

struct FusionConfig {
  double alpha = 0.5;          // area penalty exponent
  double theta = 0.15;         // detector score threshold
  std::size_t top_m = 7;       // region tokens painted (region-based layouts)
  double area_epsilon = 1e-6;  // floor for degenerate box areas
  CategoryMode mode = CategoryMode::kGroundTruth;
};

/// Tuned defaults: REC uses alpha 0.5 with theta 0.15 for annotated
/// categories and 0.3 for predicted ones; phrase grounding uses alpha 0.25,
/// theta 0.15.
inline FusionConfig default_config(TaskKind task, CategoryMode mode) {
  FusionConfig c;
  c.mode = mode;
  if (task == TaskKind::kPhraseGrounding) {
    c.alpha = 0.25;
    c.theta = 0.15;
  } else {
    c.alpha = 0.5;
    c.theta = mode == CategoryMode::kGroundTruth ? 0.15 : 0.3;
  }
  return c;
}

struct Candidate {
  Proposal proposal;
  double r = 0.0;      // heat mass inside the box
  double grade = 0.0;  // s * r / max(area, eps)^alpha
  double area = 0.0;
};

struct Prediction {
  std::string task_id;
  std::size_t expression_index = 0;
  Box box;
  double grade = 0.0;
  std::vector<Candidate> candidates;  // best first
  bool used_fallback = false;
  CategorySet categories;
};

struct FilteredProposals {
  std::vector<Proposal> proposals;
  bool used_fallback = false;
};

/// Keeps detections of the requested categories scoring above theta; when
/// none survive, every proposal in the fallback pool becomes a candidate.
inline FilteredProposals filter_proposals(const std::vector<Proposal>& proposals,
                                          const std::vector<Proposal>& all_proposals,
                                          const CategorySet& categories, double theta) {
  if (proposals.empty() && all_proposals.empty())
    throw Error(Errc::kNoProposalsAtAll, "proposals", "no detector proposals and no fallback pool");
  FilteredProposals out;
  for (const auto& p : proposals)
    if (p.score > theta && categories.contains(p.category)) out.proposals.push_back(p);
  if (out.proposals.empty()) {
    if (all_proposals.empty())
      throw Error(Errc::kNoProposalsAtAll, "all_proposals",
                  "no proposal matches the category and the fallback pool is empty");
    out.proposals = all_proposals;
    out.used_fallback = true;
  }
  return out;
}

inline double grade_formula(double score, double r, double area, double alpha, double epsilon) {
  return score * r / std::pow(std::max(area, epsilon), alpha);
}

inline Candidate weighted_grade(const Proposal& proposal, const IntegralMap& integral,
                                double alpha, double area_epsilon) {
  Candidate c;
  c.proposal = proposal;
  c.area = proposal.box.area();
  c.r = box_sum(integral, proposal.box);
  c.grade = grade_formula(proposal.score, c.r, c.area, alpha, area_epsilon);
  return c;
}

/// Orders candidates by grade, then detector score, then input position, and
/// returns the best one with the full ranking attached.
inline Prediction select_box(std::vector<Candidate> candidates) {
  if (candidates.empty()) throw Error(Errc::kEmptyCandidates, "candidates", "nothing to select");
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.grade != b.grade) return a.grade > b.grade;
    return a.proposal.score > b.proposal.score;
  });
  Prediction p;
  p.box = candidates.front().proposal.box;
  p.grade = candidates.front().grade;
  p.candidates = std::move(candidates);
  return p;
}

inline const ExpressionSpan& require_expression(const FixtureBundle& bundle,
                                                std::size_t expression_index) {
  const auto* e = bundle.find_expression(expression_index);
  if (e == nullptr)
    throw Error(Errc::kUnknownExpression, bundle.task_id,
                "no expression " + std::to_string(expression_index));
  return *e;
}

/// G~ for one expression: GradCAM, crop, visual-word aggregation.
inline TokenAttribution compute_attribution(const FixtureBundle& bundle,
                                            const ExpressionSpan& expression,
                                            const PosWhitelist& whitelist = {}) {
  const auto raw = compute_gradcam_map(bundle.attention, bundle.gradient);
  const auto cross =
      crop_to_text_image(raw, bundle.architecture, bundle.text_tokens(), bundle.image_tokens());
  const auto selected =
      select_visual_tokens(bundle.tokens, expression, bundle.task_kind, whitelist);
  return aggregate_visual_words(cross, selected);
}

inline HeatMap compute_heatmap(const FixtureBundle& bundle, const TokenAttribution& attr,
                               std::size_t top_m) {
  if (bundle.visual_layout.kind == LayoutKind::kRegionBased)
    return build_region_heatmap(attr, bundle.visual_layout.regions, top_m, bundle.image_height,
                                bundle.image_width);
  return build_patch_heatmap(attr, bundle.visual_layout, bundle.image_height, bundle.image_width);
}

/// Noun guess for expressions shipped without a parse: rightmost NOUN/PROPN
/// in the span, else its last non-special token.
inline std::string target_unit_from_tokens(const std::vector<TokenMeta>& tokens,
                                           const ExpressionSpan& expression) {
  const auto& idx = expression.token_indices;
  for (auto it = idx.rbegin(); it != idx.rend(); ++it)
    if (!tokens[*it].is_special && (tokens[*it].pos_tag == "NOUN" || tokens[*it].pos_tag == "PROPN"))
      return tokens[*it].surface;
  for (auto it = idx.rbegin(); it != idx.rend(); ++it)
    if (!tokens[*it].is_special) return tokens[*it].surface;
  return tokens[idx.back()].surface;
}

inline CategorySet resolve_categories(const FixtureBundle& bundle, const ExpressionSpan& expression,
                                      CategoryMode mode) {
  if (mode == CategoryMode::kGroundTruth && expression.category_override) {
    CategorySet set;
    set.add(*expression.category_override);
    return set;
  }
  const std::string unit = expression.parse_tree
                               ? extract_target_unit(ParseTree::from_bracketed(*expression.parse_tree))
                               : target_unit_from_tokens(bundle.tokens, expression);
  const EmbeddingTable* table = expression.embeddings   ? &*expression.embeddings
                                : bundle.embeddings ? &*bundle.embeddings
                                                    : nullptr;
  if (table == nullptr) {
    CategorySet set;
    set.add(unit);
    return set;
  }
  const std::string category =
      table->classes.empty() ? unit : map_to_vocabulary(*table, unit).mapped;
  return build_category_set(*table, category);
}

/// Full pipeline for one expression of a bundle.
inline Prediction ground(const FixtureBundle& bundle, std::size_t expression_index,
                         const FusionConfig& config) {
  const auto& expression = require_expression(bundle, expression_index);
  const auto attr = compute_attribution(bundle, expression);
  const auto integral = integral_image(compute_heatmap(bundle, attr, config.top_m));
  const auto categories = resolve_categories(bundle, expression, config.mode);
  const auto filtered =
      filter_proposals(bundle.proposals, bundle.all_proposals, categories, config.theta);

  std::vector<Candidate> candidates;
  candidates.reserve(filtered.proposals.size());
  for (const auto& p : filtered.proposals)
    candidates.push_back(weighted_grade(p, integral, config.alpha, config.area_epsilon));

  Prediction out = select_box(std::move(candidates));
  out.task_id = bundle.task_id;
  out.expression_index = expression_index;
  out.used_fallback = filtered.used_fallback;
  out.categories = categories;
  return out;
}

inline constexpr std::size_t kSerializedCandidates = 5;

/// One JSON-lines record: the selected box plus the top-5 ranking.
inline nlohmann::json prediction_to_json(const Prediction& p) {
  using nlohmann::json;
  json top = json::array();
  const std::size_t n = std::min(kSerializedCandidates, p.candidates.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = p.candidates[i];
    top.push_back({{"box", detail::box_to_json(c.proposal.box)},
                   {"grade", c.grade},
                   {"score", c.proposal.score},
                   {"category", c.proposal.category}});
  }
  return {{"task_id", p.task_id},
          {"expression_index", p.expression_index},
          {"box", detail::box_to_json(p.box)},
          {"grade", p.grade},
          {"used_fallback", p.used_fallback},
          {"categories", p.categories.names},
          {"top5", top}};
}

}  // namespace groundvlp
