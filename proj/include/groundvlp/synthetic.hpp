#pragma once

// Generated bundles with a planted answer: each expression's visual words
// attend to exactly one "hot" target while equally-scored, equally-sized
// distractor proposals of the same category sit on cold image areas.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "groundvlp/bundle.hpp"
#include "groundvlp/fixture_io.hpp"

namespace groundvlp::synthetic {

enum class Flavor {
  kPatchGrid,    // two-stream, end-to-end (ALBEF-like)
  kRegionBased,  // one-stream, region features (VinVL-like)
};

struct SceneOptions {
  std::uint64_t seed = 0;
  Flavor flavor = Flavor::kPatchGrid;
  TaskKind task = TaskKind::kRec;
  bool no_matching_category = false;  // detector finds only other classes
};

struct Scene {
  FixtureBundle bundle;
  std::vector<Box> answers;  // per expression, in bundle.expressions order
};

/// Portable uniform draws on top of mt19937_64 (whose output sequence is
/// fixed by the standard, unlike the std distributions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * n) % n; }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

inline const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> v{"cat",   "dog",  "car",   "bus",  "horse",
                                          "chair", "bird", "truck", "sheep"};
  return v;
}

namespace detail {

inline const std::vector<std::string>& adjectives() {
  static const std::vector<std::string> v{"black", "white", "red", "small", "large", "striped"};
  return v;
}

inline std::vector<float> unit_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.uniform(-1.0, 1.0);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

// Gram-Schmidt against `against`, then normalise.
inline std::vector<float> orthogonal_unit(Rng& rng, const std::vector<float>& against) {
  auto v = unit_vector(rng, against.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) d += static_cast<double>(v[i]) * against[i];
  std::vector<double> w(v.size());
  double norm = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    w[i] = v[i] - d * against[i];
    norm += w[i] * w[i];
  }
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(w[i] / norm);
  return v;
}

struct CellBox {
  std::size_t r0, c0, r1, c1;  // half-open cell ranges
};

inline bool far_apart(const CellBox& a, const CellBox& b, std::size_t gap) {
  return a.r1 + gap <= b.r0 || b.r1 + gap <= a.r0 || a.c1 + gap <= b.c0 || b.c1 + gap <= a.c0;
}

inline bool overlaps(const Box& a, const Box& b) {
  return a.x1 < b.x2 && b.x1 < a.x2 && a.y1 < b.y2 && b.y1 < a.y2;
}

struct Target {
  std::string category;
  std::string adjective;
  Box box;
  std::vector<Box> distractors;
  std::vector<std::size_t> hot_columns;  // image-token indices (0-based within I)
};

}  // namespace detail

inline Scene make_scene(const SceneOptions& opt) {
  using detail::Target;
  Rng rng(opt.seed);
  const std::size_t n_targets = opt.task == TaskKind::kRec ? 1 : 2;
  const std::size_t heads = 1 + rng.below(4);

  FixtureBundle b;
  b.task_id = std::string(opt.flavor == Flavor::kPatchGrid ? "synth-patch-" : "synth-region-") +
              (opt.task == TaskKind::kRec ? "rec-" : "pg-") + std::to_string(opt.seed) +
              (opt.no_matching_category ? "-nomatch" : "");
  b.task_kind = opt.task;

  // Distinct categories per target.
  std::vector<Target> targets(n_targets);
  {
    std::vector<std::string> pool = vocabulary();
    for (auto& t : targets) {
      const std::size_t k = rng.below(pool.size());
      t.category = pool[k];
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
      t.adjective = detail::adjectives()[rng.below(detail::adjectives().size())];
    }
  }

  std::vector<Box> extra_regions;
  if (opt.flavor == Flavor::kPatchGrid) {
    b.architecture = Architecture::kTwoStream;
    const std::size_t grid = 12;
    const std::size_t cell_w = 16 + rng.below(17);
    const std::size_t cell_h = 16 + rng.below(17);
    b.image_width = grid * cell_w;
    b.image_height = grid * cell_h;
    auto& vl = b.visual_layout;
    vl.kind = LayoutKind::kPatchGrid;
    vl.grid_h = grid;
    vl.grid_w = grid;
    vl.non_grid_prefix = 1;
    vl.num_image_tokens = 1 + grid * grid;

    // Boxes in cell units, at least two empty cells apart so cubic support
    // from one box never reaches another.
    std::vector<detail::CellBox> placed;
    auto place = [&](std::size_t bh, std::size_t bw, detail::CellBox& out) {
      for (int attempt = 0; attempt < 500; ++attempt) {
        detail::CellBox c;
        c.r0 = rng.below(grid - bh + 1);
        c.c0 = rng.below(grid - bw + 1);
        c.r1 = c.r0 + bh;
        c.c1 = c.c0 + bw;
        bool ok = true;
        for (const auto& p : placed) ok = ok && detail::far_apart(c, p, 2);
        if (ok) {
          placed.push_back(c);
          out = c;
          return true;
        }
      }
      return false;
    };
    auto place_target = [&](std::size_t bh, std::size_t bw, detail::CellBox& out) {
      if (place(bh, bw, out)) return;
      for (std::size_t r0 = 0; r0 + bh <= grid; ++r0)
        for (std::size_t c0 = 0; c0 + bw <= grid; ++c0) {
          const detail::CellBox c{r0, c0, r0 + bh, c0 + bw};
          bool ok = true;
          for (const auto& p : placed) ok = ok && detail::far_apart(c, p, 2);
          if (ok) {
            placed.push_back(c);
            out = c;
            return;
          }
        }
      throw Error(Errc::kInvariantViolation, "synthetic", "no room for a target box");
    };
    auto to_pixels = [&](const detail::CellBox& c) {
      return Box{static_cast<double>(c.c0 * cell_w), static_cast<double>(c.r0 * cell_h),
                 static_cast<double>(c.c1 * cell_w), static_cast<double>(c.r1 * cell_h)};
    };
    // Targets claim space before any distractor does.
    std::vector<detail::CellBox> cells(targets.size());
    for (std::size_t k = 0; k < targets.size(); ++k) {
      auto& t = targets[k];
      auto& c = cells[k];
      place_target(2 + rng.below(2), 2 + rng.below(2), c);
      t.box = to_pixels(c);
      for (std::size_t r = c.r0; r < c.r1; ++r)
        for (std::size_t col = c.c0; col < c.c1; ++col)
          t.hot_columns.push_back(vl.non_grid_prefix + r * grid + col);
    }
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const auto& c = cells[k];
      const std::size_t n_distract = 1 + rng.below(3);
      for (std::size_t d = 0; d < n_distract; ++d) {
        detail::CellBox dc{};
        if (place(c.r1 - c.r0, c.c1 - c.c0, dc)) targets[k].distractors.push_back(to_pixels(dc));
      }
    }
  } else {
    b.architecture = Architecture::kOneStream;
    b.image_width = 240 + rng.below(241);
    b.image_height = 180 + rng.below(181);
    const double W = static_cast<double>(b.image_width);
    const double H = static_cast<double>(b.image_height);
    std::vector<Box> placed;
    auto place = [&](double bw, double bh, Box& out) {
      for (int attempt = 0; attempt < 500; ++attempt) {
        const double x = std::floor(rng.uniform(0.0, W - bw));
        const double y = std::floor(rng.uniform(0.0, H - bh));
        Box c{x, y, x + bw, y + bh};
        bool ok = true;
        for (const auto& p : placed) ok = ok && !detail::overlaps(c, p);
        if (ok) {
          placed.push_back(c);
          out = c;
          return true;
        }
      }
      return false;
    };
    // Targets cover at most 1/25 of the image each, so random placement
    // before any distractor exists practically always finds room.
    for (auto& t : targets) {
      const double bw = std::floor(rng.uniform(W / 8.0, W / 5.0));
      const double bh = std::floor(rng.uniform(H / 8.0, H / 5.0));
      if (!place(bw, bh, t.box))
        throw Error(Errc::kInvariantViolation, "synthetic", "no room for a target box");
    }
    for (auto& t : targets) {
      const std::size_t n_distract = 1 + rng.below(3);
      for (std::size_t d = 0; d < n_distract; ++d) {
        Box dc;
        if (place(t.box.width(), t.box.height(), dc)) t.distractors.push_back(dc);
      }
    }
    // Background regions: arbitrary boxes, may overlap anything.
    const std::size_t n_extra = 8 + rng.below(10);
    for (std::size_t i = 0; i < n_extra; ++i) {
      const double x1 = std::floor(rng.uniform(0.0, W - 8.0));
      const double y1 = std::floor(rng.uniform(0.0, H - 8.0));
      const double x2 = std::min(W, x1 + 4.0 + std::floor(rng.uniform(0.0, W / 3.0)));
      const double y2 = std::min(H, y1 + 4.0 + std::floor(rng.uniform(0.0, H / 3.0)));
      extra_regions.push_back({x1, y1, x2, y2});
    }
    // Region tokens: targets first at random positions among the extras.
    std::vector<Box> regions = extra_regions;
    for (auto& t : targets) {
      const std::size_t at = rng.below(regions.size() + 1);
      regions.insert(regions.begin() + static_cast<std::ptrdiff_t>(at), t.box);
    }
    for (auto& t : targets)
      for (std::size_t i = 0; i < regions.size(); ++i)
        if (regions[i] == t.box) t.hot_columns = {i};
    b.visual_layout.kind = LayoutKind::kRegionBased;
    b.visual_layout.regions = regions;
    b.visual_layout.num_image_tokens = regions.size();
  }

  // Tokens: [CLS] there is a <adj> <noun> [and a <adj> <noun>] . [SEP]
  auto add_token = [&](std::string surface, std::string pos, bool cls, bool special) {
    b.tokens.push_back({b.tokens.size(), std::move(surface), std::move(pos), cls, special});
    return b.tokens.size() - 1;
  };
  add_token("[CLS]", "X", true, true);
  add_token("there", "PRON", false, false);
  add_token("is", "AUX", false, false);
  std::vector<std::vector<std::size_t>> expression_rows(n_targets);
  for (std::size_t e = 0; e < n_targets; ++e) {
    if (e > 0) add_token("and", "CCONJ", false, false);
    const std::size_t det = add_token("a", "DET", false, false);
    const std::size_t adj = add_token(targets[e].adjective, "ADJ", false, false);
    const std::size_t noun = add_token(targets[e].category, "NOUN", false, false);
    ExpressionSpan span;
    span.expression_index = e;
    span.token_indices = {det, adj, noun};
    span.category_override = targets[e].category;
    span.parse_tree = "(NP (DT a) (JJ " + targets[e].adjective + ") (NN " + targets[e].category + "))";
    b.expressions.push_back(std::move(span));
    expression_rows[e] = {adj, noun};
  }
  add_token(".", "PUNCT", false, false);
  add_token("[SEP]", "X", false, true);

  // Tensors.
  const std::size_t T = b.tokens.size();
  const std::size_t I = b.visual_layout.num_image_tokens;
  const bool one_stream = b.architecture == Architecture::kOneStream;
  const std::size_t s = one_stream ? T + I : T;
  const std::size_t q = one_stream ? T + I : I;
  const std::size_t col_offset = one_stream ? T : 0;
  b.attention = Tensor3<float>({heads, s, q});
  b.gradient = Tensor3<float>({heads, s, q});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t r = 0; r < s; ++r)
      for (std::size_t c = 0; c < q; ++c) {
        b.attention(h, r, c) = static_cast<float>(rng.uniform(0.0, 0.02));
        b.gradient(h, r, c) = static_cast<float>(rng.uniform(-1.0, 1.0));
      }
  for (std::size_t e = 0; e < n_targets; ++e) {
    std::vector<std::size_t> rows = expression_rows[e];
    if (opt.task == TaskKind::kRec) rows.push_back(0);  // [CLS]
    for (std::size_t r : rows)
      for (std::size_t col : targets[e].hot_columns)
        for (std::size_t h = 0; h < heads; ++h) {
          b.attention(h, r, col_offset + col) = 1.0f;
          b.gradient(h, r, col_offset + col) = static_cast<float>(rng.uniform(0.5, 1.0));
        }
  }

  // Detector output.
  const double theta_gap = 0.35;  // clears both default thresholds
  std::vector<std::string> other;
  for (const auto& c : vocabulary()) {
    bool used = false;
    for (const auto& t : targets) used = used || t.category == c;
    if (!used) other.push_back(c);
  }
  auto random_box = [&]() {
    const double W = static_cast<double>(b.image_width);
    const double H = static_cast<double>(b.image_height);
    const double x1 = std::floor(rng.uniform(0.0, W - 10.0));
    const double y1 = std::floor(rng.uniform(0.0, H - 10.0));
    return Box{x1, y1, std::min(W, x1 + 8.0 + std::floor(rng.uniform(0.0, W / 2.0))),
               std::min(H, y1 + 8.0 + std::floor(rng.uniform(0.0, H / 2.0)))};
  };
  std::vector<Proposal> planted;
  for (const auto& t : targets) {
    const double score = rng.uniform(theta_gap, 0.95);
    std::vector<Proposal> group{{t.box, score, t.category}};
    for (const auto& d : t.distractors) group.push_back({d, score, t.category});
    // Shuffle so the answer is not always first.
    for (std::size_t i = group.size(); i > 1; --i) std::swap(group[i - 1], group[rng.below(i)]);
    planted.insert(planted.end(), group.begin(), group.end());
    // Same class below every default threshold: filtered out.
    planted.push_back({random_box(), rng.uniform(0.01, 0.14), t.category});
  }
  std::vector<Proposal> noise;
  for (std::size_t i = 0, n = 2 + rng.below(3); i < n; ++i)
    noise.push_back({random_box(), rng.uniform(0.5, 1.0), other[rng.below(other.size())]});

  if (opt.no_matching_category) {
    b.proposals = noise;
    for (const auto& p : planted)
      if (p.score > 0.15) b.all_proposals.push_back(p);
  } else {
    b.proposals = planted;
    b.proposals.insert(b.proposals.end(), noise.begin(), noise.end());
    b.all_proposals = b.proposals;
  }

  // Embeddings: vocabulary of random unit vectors, predicted = the first
  // target's class, person orthogonal to it.
  {
    Rng erng(rng.next());
    const std::size_t dim = 16;
    EmbeddingTable table;
    table.dim = dim;
    for (const auto& c : vocabulary()) table.classes.push_back({c, detail::unit_vector(erng, dim)});
    for (std::size_t e = 0; e < n_targets; ++e) {
      EmbeddingTable per = table;
      for (const auto& c : table.classes)
        if (c.name == targets[e].category) per.predicted = c.vector;
      per.person = detail::orthogonal_unit(erng, per.predicted);
      if (e == 0) b.embeddings = per;
      if (n_targets > 1) b.expressions[e].embeddings = per;
    }
  }

  Scene scene;
  for (std::size_t e = 0; e < n_targets; ++e) {
    b.ground_truth.push_back({e, {targets[e].box}});
    scene.answers.push_back(targets[e].box);
  }
  scene.bundle = std::move(b);
  return scene;
}

/// Options for the i-th scene of a mixed suite: alternating flavours, every
/// third scene phrase grounding.
inline SceneOptions suite_options(std::uint64_t seed, std::size_t i) {
  SceneOptions o;
  o.seed = seed * 1000003u + i;
  o.flavor = i % 2 == 0 ? Flavor::kPatchGrid : Flavor::kRegionBased;
  o.task = i % 3 == 2 ? TaskKind::kPhraseGrounding : TaskKind::kRec;
  return o;
}

/// Writes `count` scenes as bundle directories under `dir`, plus a
/// ground-truth JSON-lines file per task kind. Returns the bundle paths.
inline std::vector<std::filesystem::path> write_suite(const std::filesystem::path& dir,
                                                      std::size_t count, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::ofstream rec_gt(dir / "ground_truth_rec.jsonl", std::ios::trunc);
  std::ofstream pg_gt(dir / "ground_truth_pg.jsonl", std::ios::trunc);
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < count; ++i) {
    const auto scene = make_scene(suite_options(seed, i));
    const auto& b = scene.bundle;
    const auto path = dir / b.task_id;
    save_bundle(b, path);
    paths.push_back(path);
    auto& gt = b.task_kind == TaskKind::kRec ? rec_gt : pg_gt;
    for (const auto& g : b.ground_truth) {
      nlohmann::json boxes = nlohmann::json::array();
      for (const auto& box : g.boxes) boxes.push_back(groundvlp::detail::box_to_json(box));
      gt << nlohmann::json{{"task_id", b.task_id},
                           {"expression_index", g.expression_index},
                           {"boxes", boxes},
                           {"image", {{"width", b.image_width}, {"height", b.image_height}}}}
                .dump()
         << '\n';
    }
  }
  return paths;
}

}  // namespace groundvlp::synthetic
