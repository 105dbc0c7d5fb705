#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "groundvlp/bundle.hpp"
#include "groundvlp/error.hpp"
#include "groundvlp/parse_tree.hpp"

namespace groundvlp {

inline constexpr double kPersonCosineThreshold = 0.9;
inline constexpr const char* kPersonCategory = "person";

struct CategoryMapping {
  std::string predicted;
  std::string mapped;
  std::vector<std::pair<std::string, double>> similarities;  // vocabulary order
};

/// Ordered, duplicate-free category names handed to the detector filter.
struct CategorySet {
  std::vector<std::string> names;

  bool contains(const std::string& name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
  }
  void add(const std::string& name) {
    if (!contains(name)) names.push_back(name);
  }
};

namespace detail {

inline bool is_np(const std::string& label) {
  return label == "NP" || label.rfind("NP-", 0) == 0;
}
inline bool is_nn(const std::string& label) { return label.rfind("NN", 0) == 0; }

inline bool is_special_leaf(const ParseNode& n) {
  static const std::set<std::string> punct{".",     ",",     ":",    "``",  "''", "-LRB-",
                                           "-RRB-", "HYPH",  "NFP",  "$",   "#",  "PUNCT",
                                           "SYM",   "-NONE-"};
  if (punct.count(n.label)) return true;
  return n.word.size() >= 2 && n.word.front() == '[' && n.word.back() == ']';
}

// Last word under node i.
inline const std::string& last_word(const ParseTree& tree, std::size_t i) {
  while (!tree.node(i).is_preterminal()) i = tree.node(i).children.back();
  return tree.node(i).word;
}

}  // namespace detail

/// The target noun of an expression: the rightmost NN* child of the
/// bottom-left NP. Falls back to the rightmost NN* leaf anywhere, then to
/// the last non-punctuation word.
inline std::string extract_target_unit(const ParseTree& tree) {
  if (tree.empty()) throw Error(Errc::kEmptyTree, "tree", "tree has no nodes");
  const auto& nodes = tree.nodes();

  // Nodes are in preorder, so the first NP is the top-left one.
  auto first_np = std::find_if(nodes.begin(), nodes.end(),
                               [](const ParseNode& n) { return detail::is_np(n.label); });
  if (first_np != nodes.end()) {
    std::size_t np = static_cast<std::size_t>(first_np - nodes.begin());
    for (;;) {
      const auto& kids = tree.node(np).children;
      auto child = std::find_if(kids.begin(), kids.end(), [&](std::size_t c) {
        return detail::is_np(tree.node(c).label);
      });
      if (child == kids.end()) break;
      np = *child;
    }
    const auto& kids = tree.node(np).children;
    for (auto it = kids.rbegin(); it != kids.rend(); ++it)
      if (detail::is_nn(tree.node(*it).label)) return detail::last_word(tree, *it);
  }

  const auto leaves = tree.leaves();
  for (auto it = leaves.rbegin(); it != leaves.rend(); ++it)
    if (detail::is_nn(tree.node(*it).label)) return tree.node(*it).word;
  for (auto it = leaves.rbegin(); it != leaves.rend(); ++it)
    if (!detail::is_special_leaf(tree.node(*it))) return tree.node(*it).word;
  return tree.node(leaves.back()).word;
}

namespace detail {

inline double dot(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

}  // namespace detail

/// Softmax over vocabulary dot products with the predicted embedding.
inline CategoryMapping map_to_vocabulary(const EmbeddingTable& table, std::string predicted = {}) {
  if (table.classes.empty())
    throw Error(Errc::kEmptyVocabulary, "embeddings.classes", "vocabulary is empty");

  std::vector<double> logits;
  logits.reserve(table.classes.size());
  for (const auto& c : table.classes) logits.push_back(detail::dot(c.vector, table.predicted));
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - peak);
    total += l;
  }

  CategoryMapping out;
  out.predicted = std::move(predicted);
  std::size_t best = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double sim = logits[i] / total;
    out.similarities.emplace_back(table.classes[i].name, sim);
    if (sim > out.similarities[best].second) best = i;
  }
  out.mapped = table.classes[best].name;
  return out;
}

inline double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
  const double na = std::sqrt(detail::dot(a, a));
  const double nb = std::sqrt(detail::dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return detail::dot(a, b) / (na * nb);
}

/// {category} plus "person" when the predicted embedding is close enough to
/// the person prompt embedding (strictly greater than the threshold).
inline CategorySet build_category_set(const EmbeddingTable& table, const std::string& category,
                                      double person_threshold = kPersonCosineThreshold) {
  CategorySet out;
  out.add(category);
  if (table.person && cosine_similarity(table.predicted, *table.person) > person_threshold)
    out.add(kPersonCategory);
  return out;
}

}  // namespace groundvlp
