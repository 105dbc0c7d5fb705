#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "groundvlp/geometry.hpp"
#include "groundvlp/matrix.hpp"

namespace groundvlp {

enum class TaskKind { kRec, kPhraseGrounding };
enum class Architecture { kOneStream, kTwoStream };
enum class LayoutKind { kRegionBased, kPatchGrid };

struct TokenMeta {
  std::size_t index = 0;
  std::string surface;
  std::string pos_tag;  // UPOS
  bool is_cls = false;
  bool is_special = false;

  friend bool operator==(const TokenMeta&, const TokenMeta&) = default;
};

/// How the I image tokens map onto the picture.
struct VisualLayout {
  LayoutKind kind = LayoutKind::kPatchGrid;
  std::size_t num_image_tokens = 0;  // I
  std::vector<Box> regions;          // RegionBased: one per image token
  std::size_t grid_h = 0;            // PatchGrid
  std::size_t grid_w = 0;
  std::size_t non_grid_prefix = 0;

  friend bool operator==(const VisualLayout&, const VisualLayout&) = default;
};

/// Detector output: confidence `score` that `box` holds `category`.
struct Proposal {
  Box box;
  double score = 0.0;
  std::string category;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

struct ClassEmbedding {
  std::string name;
  std::vector<float> vector;

  friend bool operator==(const ClassEmbedding&, const ClassEmbedding&) = default;
};

/// Text embeddings of the predicted category, the detector vocabulary and
/// the person prompt. Stored L2-normalised by the exporter.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<float> predicted;
  std::vector<ClassEmbedding> classes;
  std::optional<std::vector<float>> person;

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

struct ExpressionSpan {
  std::size_t expression_index = 0;
  std::vector<std::size_t> token_indices;  // strictly increasing
  std::optional<std::string> category_override;
  std::optional<std::string> parse_tree;  // Penn-bracketed constituency parse
  std::optional<EmbeddingTable> embeddings;  // overrides the bundle table

  friend bool operator==(const ExpressionSpan&, const ExpressionSpan&) = default;
};

struct GroundTruth {
  std::size_t expression_index = 0;
  std::vector<Box> boxes;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// One grounding task's serialized model outputs plus image geometry.
struct FixtureBundle {
  std::string task_id;
  TaskKind task_kind = TaskKind::kRec;
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  Architecture architecture = Architecture::kTwoStream;
  Tensor3<float> attention;
  Tensor3<float> gradient;  // unclipped dL_itm/dA
  std::vector<TokenMeta> tokens;
  VisualLayout visual_layout;
  std::vector<Proposal> proposals;
  std::vector<Proposal> all_proposals;
  std::vector<ExpressionSpan> expressions;
  std::optional<EmbeddingTable> embeddings;
  std::vector<GroundTruth> ground_truth;

  std::size_t text_tokens() const { return tokens.size(); }
  std::size_t image_tokens() const { return visual_layout.num_image_tokens; }

  const ExpressionSpan* find_expression(std::size_t expression_index) const {
    for (const auto& e : expressions)
      if (e.expression_index == expression_index) return &e;
    return nullptr;
  }

  friend bool operator==(const FixtureBundle&, const FixtureBundle&) = default;
};

}  // namespace groundvlp
