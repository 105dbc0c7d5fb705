#pragma once

// On-disk bundle format: a directory holding manifest.json plus one raw
// little-endian f32 blob per tensor. Field names are fixed in FORMAT.md.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "groundvlp/bundle.hpp"
#include "groundvlp/error.hpp"

namespace groundvlp {

inline constexpr std::string_view kBundleVersion = "gvlp-bundle/1";
inline constexpr std::string_view kManifestName = "manifest.json";
inline constexpr std::string_view kAttentionBlob = "attention.f32";
inline constexpr std::string_view kGradientBlob = "gradient.f32";
inline constexpr double kEmbeddingNormTolerance = 1e-4;

/// One broken invariant: `field` is a manifest path such as
/// "proposals[2].box", `rule` a stable rule name.
struct Violation {
  std::string field;
  std::string rule;
  std::string detail;

  friend bool operator==(const Violation&, const Violation&) = default;
};

namespace rules {
inline constexpr const char* kShape = "ShapeRuleViolation";
inline constexpr const char* kBox = "BoxRuleViolation";
inline constexpr const char* kToken = "TokenRuleViolation";
inline constexpr const char* kSpan = "SpanRuleViolation";
inline constexpr const char* kLayout = "LayoutRuleViolation";
inline constexpr const char* kScore = "ScoreRuleViolation";
inline constexpr const char* kEmbedding = "EmbeddingRuleViolation";
inline constexpr const char* kImage = "ImageRuleViolation";
inline constexpr const char* kExpression = "ExpressionRuleViolation";
inline constexpr const char* kGroundTruth = "GroundTruthRuleViolation";
}  // namespace rules

inline std::string_view to_string(TaskKind k) {
  return k == TaskKind::kRec ? "REC" : "PhraseGrounding";
}
inline std::string_view to_string(Architecture a) {
  return a == Architecture::kOneStream ? "OneStream" : "TwoStream";
}
inline std::string_view to_string(LayoutKind k) {
  return k == LayoutKind::kRegionBased ? "RegionBased" : "PatchGrid";
}

namespace detail {

using nlohmann::json;

inline std::string indexed(std::string_view base, std::size_t i) {
  return std::string(base) + "[" + std::to_string(i) + "]";
}

inline std::string join(const std::string& path, const char* key) {
  return path.empty() ? std::string(key) : path + "." + key;
}

inline const json& require(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw Error(Errc::kSchema, path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw Error(Errc::kSchema, join(path, key), "missing field");
  return *it;
}

template <typename T>
T as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, path, e.what());
  }
}

template <typename T>
T field(const json& j, const char* key, const std::string& path) {
  return as<T>(require(j, key, path), join(path, key));
}

inline json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

inline Box box_from_json(const json& j, const std::string& path) {
  auto v = as<std::vector<double>>(j, path);
  if (v.size() != 4) throw Error(Errc::kSchema, path, "box must have 4 coordinates");
  return {v[0], v[1], v[2], v[3]};
}

inline json proposals_to_json(const std::vector<Proposal>& ps) {
  json out = json::array();
  for (const auto& p : ps)
    out.push_back({{"box", box_to_json(p.box)}, {"score", p.score}, {"category", p.category}});
  return out;
}

inline std::vector<Proposal> proposals_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw Error(Errc::kSchema, path, "expected an array");
  std::vector<Proposal> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto p = indexed(path, i);
    out.push_back({box_from_json(require(j[i], "box", p), p + ".box"),
                   field<double>(j[i], "score", p), field<std::string>(j[i], "category", p)});
  }
  return out;
}

template <typename E>
E enum_from(const json& j, const std::string& path,
            std::initializer_list<std::pair<std::string_view, E>> names) {
  auto s = as<std::string>(j, path);
  for (const auto& [name, value] : names)
    if (s == name) return value;
  throw Error(Errc::kSchema, path, "unknown value '" + s + "'");
}

inline void check_version(const std::string& version) {
  constexpr std::string_view prefix = "gvlp-bundle/";
  if (version.rfind(prefix, 0) != 0)
    throw Error(Errc::kUnsupportedVersion, "version", "unrecognised version '" + version + "'");
  const std::string rest = version.substr(prefix.size());
  const std::string major = rest.substr(0, rest.find('.'));
  if (major != "1")
    throw Error(Errc::kUnsupportedVersion, "version", "unsupported major version '" + version + "'");
}

inline std::vector<float> read_f32_blob(const std::filesystem::path& file,
                                        std::size_t expected_elements,
                                        const std::string& field_name) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(file, ec))
    throw Error(Errc::kMissingFile, field_name, "blob not found: " + file.string());
  const auto bytes = std::filesystem::file_size(file, ec);
  if (ec) throw Error(Errc::kIoFailure, field_name, ec.message());
  if (bytes != expected_elements * sizeof(float))
    throw Error(Errc::kShapeMismatch, field_name,
                "declared shape needs " + std::to_string(expected_elements * sizeof(float)) +
                    " bytes, blob has " + std::to_string(bytes));
  std::ifstream in(file, std::ios::binary);
  std::vector<float> values(expected_elements);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw Error(Errc::kIoFailure, field_name, "short read from " + file.string());
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      bits = __builtin_bswap32(bits);
      v = std::bit_cast<float>(bits);
    }
  }
  return values;
}

inline void write_f32_blob(const std::filesystem::path& file, std::span<const float> values) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoFailure, file.string(), "cannot open for writing");
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) {
      auto bits = __builtin_bswap32(std::bit_cast<std::uint32_t>(v));
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
  if (!out) throw Error(Errc::kIoFailure, file.string(), "write failed");
}

inline Tensor3<float>::Shape shape_from_json(const json& j, const std::string& path) {
  auto dims = as<std::vector<std::size_t>>(j, path);
  if (dims.size() != 3) throw Error(Errc::kSchema, path, "tensor shape must have rank 3");
  return {dims[0], dims[1], dims[2]};
}

}  // namespace detail

inline nlohmann::json embeddings_to_json(const EmbeddingTable& t) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : t.classes) classes.push_back({{"name", c.name}, {"vector", c.vector}});
  nlohmann::json j = {{"dim", t.dim}, {"predicted", t.predicted}, {"classes", classes}};
  if (t.person) j["person"] = *t.person;
  return j;
}

inline EmbeddingTable embeddings_from_json(const nlohmann::json& j, const std::string& path) {
  using detail::field;
  EmbeddingTable t;
  t.dim = field<std::size_t>(j, "dim", path);
  t.predicted = field<std::vector<float>>(j, "predicted", path);
  const auto& classes = detail::require(j, "classes", path);
  if (!classes.is_array()) throw Error(Errc::kSchema, path + ".classes", "expected an array");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto p = detail::indexed(path + ".classes", i);
    t.classes.push_back({field<std::string>(classes[i], "name", p),
                         field<std::vector<float>>(classes[i], "vector", p)});
  }
  if (j.contains("person")) t.person = field<std::vector<float>>(j, "person", path);
  return t;
}

inline nlohmann::json manifest_to_json(const FixtureBundle& b) {
  using nlohmann::json;
  json tokens = json::array();
  for (const auto& t : b.tokens)
    tokens.push_back({{"index", t.index},
                      {"surface", t.surface},
                      {"pos", t.pos_tag},
                      {"is_cls", t.is_cls},
                      {"is_special", t.is_special}});

  json layout = {{"kind", to_string(b.visual_layout.kind)},
                 {"num_image_tokens", b.visual_layout.num_image_tokens}};
  if (b.visual_layout.kind == LayoutKind::kRegionBased) {
    json regions = json::array();
    for (const auto& r : b.visual_layout.regions) regions.push_back(detail::box_to_json(r));
    layout["regions"] = regions;
  } else {
    layout["grid_h"] = b.visual_layout.grid_h;
    layout["grid_w"] = b.visual_layout.grid_w;
    layout["non_grid_prefix"] = b.visual_layout.non_grid_prefix;
  }

  json expressions = json::array();
  for (const auto& e : b.expressions) {
    json je = {{"expression_index", e.expression_index}, {"token_indices", e.token_indices}};
    if (e.category_override) je["category_override"] = *e.category_override;
    if (e.parse_tree) je["parse_tree"] = *e.parse_tree;
    if (e.embeddings) je["embeddings"] = embeddings_to_json(*e.embeddings);
    expressions.push_back(std::move(je));
  }

  auto tensor_ref = [](std::string_view file, const Tensor3<float>& t) {
    return json{{"file", file},
                {"dtype", "f32le"},
                {"shape", json::array({t.heads(), t.rows(), t.cols()})}};
  };

  json j = {{"version", kBundleVersion},
            {"task_id", b.task_id},
            {"task_kind", to_string(b.task_kind)},
            {"image", {{"width", b.image_width}, {"height", b.image_height}}},
            {"architecture", to_string(b.architecture)},
            {"tensors",
             {{"attention", tensor_ref(kAttentionBlob, b.attention)},
              {"gradient", tensor_ref(kGradientBlob, b.gradient)}}},
            {"tokens", tokens},
            {"visual_layout", layout},
            {"proposals", detail::proposals_to_json(b.proposals)},
            {"all_proposals", detail::proposals_to_json(b.all_proposals)},
            {"expressions", expressions}};
  if (b.embeddings) j["embeddings"] = embeddings_to_json(*b.embeddings);
  if (!b.ground_truth.empty()) {
    json gt = json::array();
    for (const auto& g : b.ground_truth) {
      json boxes = json::array();
      for (const auto& box : g.boxes) boxes.push_back(detail::box_to_json(box));
      gt.push_back({{"expression_index", g.expression_index}, {"boxes", boxes}});
    }
    j["ground_truth"] = gt;
  }
  return j;
}

/// Decodes a bundle directory without checking semantic invariants. Throws
/// MissingFile, ShapeMismatch, UnsupportedVersion or SchemaError.
inline FixtureBundle read_bundle(const std::filesystem::path& dir) {
  using detail::field;
  using detail::require;
  using nlohmann::json;

  const auto manifest_path = dir / kManifestName;
  std::error_code ec;
  if (!std::filesystem::is_regular_file(manifest_path, ec))
    throw Error(Errc::kMissingFile, manifest_path.string(), "manifest not found");

  json j;
  {
    std::ifstream in(manifest_path);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw Error(Errc::kSchema, manifest_path.string(), e.what());
    }
  }

  detail::check_version(field<std::string>(j, "version", ""));

  FixtureBundle b;
  b.task_id = field<std::string>(j, "task_id", "");
  b.task_kind = detail::enum_from<TaskKind>(require(j, "task_kind", ""), "task_kind",
                                            {{"REC", TaskKind::kRec},
                                             {"PhraseGrounding", TaskKind::kPhraseGrounding}});
  const auto& image = require(j, "image", "");
  b.image_width = field<std::size_t>(image, "width", "image");
  b.image_height = field<std::size_t>(image, "height", "image");
  b.architecture = detail::enum_from<Architecture>(
      require(j, "architecture", ""), "architecture",
      {{"OneStream", Architecture::kOneStream}, {"TwoStream", Architecture::kTwoStream}});

  const auto& tokens = require(j, "tokens", "");
  if (!tokens.is_array()) throw Error(Errc::kSchema, "tokens", "expected an array");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto p = detail::indexed("tokens", i);
    b.tokens.push_back({field<std::size_t>(tokens[i], "index", p),
                        field<std::string>(tokens[i], "surface", p),
                        field<std::string>(tokens[i], "pos", p),
                        field<bool>(tokens[i], "is_cls", p),
                        field<bool>(tokens[i], "is_special", p)});
  }

  const auto& layout = require(j, "visual_layout", "");
  auto& vl = b.visual_layout;
  vl.kind = detail::enum_from<LayoutKind>(
      require(layout, "kind", "visual_layout"), "visual_layout.kind",
      {{"RegionBased", LayoutKind::kRegionBased}, {"PatchGrid", LayoutKind::kPatchGrid}});
  vl.num_image_tokens = field<std::size_t>(layout, "num_image_tokens", "visual_layout");
  if (vl.kind == LayoutKind::kRegionBased) {
    const auto& regions = require(layout, "regions", "visual_layout");
    if (!regions.is_array())
      throw Error(Errc::kSchema, "visual_layout.regions", "expected an array");
    for (std::size_t i = 0; i < regions.size(); ++i)
      vl.regions.push_back(
          detail::box_from_json(regions[i], detail::indexed("visual_layout.regions", i)));
  } else {
    vl.grid_h = field<std::size_t>(layout, "grid_h", "visual_layout");
    vl.grid_w = field<std::size_t>(layout, "grid_w", "visual_layout");
    vl.non_grid_prefix = field<std::size_t>(layout, "non_grid_prefix", "visual_layout");
  }

  b.proposals = detail::proposals_from_json(require(j, "proposals", ""), "proposals");
  b.all_proposals = detail::proposals_from_json(require(j, "all_proposals", ""), "all_proposals");

  const auto& expressions = require(j, "expressions", "");
  if (!expressions.is_array()) throw Error(Errc::kSchema, "expressions", "expected an array");
  for (std::size_t i = 0; i < expressions.size(); ++i) {
    const auto p = detail::indexed("expressions", i);
    const auto& je = expressions[i];
    ExpressionSpan e;
    e.expression_index = field<std::size_t>(je, "expression_index", p);
    e.token_indices = field<std::vector<std::size_t>>(je, "token_indices", p);
    if (je.contains("category_override"))
      e.category_override = field<std::string>(je, "category_override", p);
    if (je.contains("parse_tree")) e.parse_tree = field<std::string>(je, "parse_tree", p);
    if (je.contains("embeddings"))
      e.embeddings = embeddings_from_json(je["embeddings"], p + ".embeddings");
    b.expressions.push_back(std::move(e));
  }

  if (j.contains("embeddings")) b.embeddings = embeddings_from_json(j["embeddings"], "embeddings");

  if (j.contains("ground_truth")) {
    const auto& gt = j["ground_truth"];
    if (!gt.is_array()) throw Error(Errc::kSchema, "ground_truth", "expected an array");
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const auto p = detail::indexed("ground_truth", i);
      GroundTruth g;
      g.expression_index = field<std::size_t>(gt[i], "expression_index", p);
      const auto& boxes = require(gt[i], "boxes", p);
      if (!boxes.is_array()) throw Error(Errc::kSchema, p + ".boxes", "expected an array");
      for (std::size_t k = 0; k < boxes.size(); ++k)
        g.boxes.push_back(detail::box_from_json(boxes[k], detail::indexed(p + ".boxes", k)));
      b.ground_truth.push_back(std::move(g));
    }
  }

  const auto& tensors = require(j, "tensors", "");
  auto load_tensor = [&](const char* name) {
    const std::string path = std::string("tensors.") + name;
    const auto& ref = require(tensors, name, "tensors");
    const auto dtype = field<std::string>(ref, "dtype", path);
    if (dtype != "f32le") throw Error(Errc::kSchema, path + ".dtype", "expected f32le");
    const auto shape = detail::shape_from_json(require(ref, "shape", path), path + ".shape");
    const auto file = field<std::string>(ref, "file", path);
    return Tensor3<float>(shape, detail::read_f32_blob(dir / file,
                                                       Tensor3<float>::element_count(shape), name));
  };
  b.attention = load_tensor("attention");
  b.gradient = load_tensor("gradient");
  return b;
}

namespace detail {

inline void check_box(std::vector<Violation>& out, const Box& box, const FixtureBundle& b,
                      const std::string& path) {
  if (!is_well_formed(box, static_cast<double>(b.image_width), static_cast<double>(b.image_height)))
    out.push_back({path, rules::kBox, "requires 0 <= x1 < x2 <= width and 0 <= y1 < y2 <= height"});
}

inline void check_embeddings(std::vector<Violation>& out, const EmbeddingTable& t,
                             const std::string& path) {
  auto check_vector = [&](const std::vector<float>& v, const std::string& p) {
    if (v.size() != t.dim) {
      out.push_back({p, rules::kEmbedding, "length differs from dim"});
      return;
    }
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * x;
    if (std::abs(std::sqrt(sq) - 1.0) > kEmbeddingNormTolerance)
      out.push_back({p, rules::kEmbedding, "vector is not L2-normalised"});
  };
  if (t.dim == 0) out.push_back({path + ".dim", rules::kEmbedding, "dim must be positive"});
  check_vector(t.predicted, path + ".predicted");
  for (std::size_t i = 0; i < t.classes.size(); ++i)
    check_vector(t.classes[i].vector, indexed(path + ".classes", i) + ".vector");
  if (t.person) check_vector(*t.person, path + ".person");
}

}  // namespace detail

/// Lists every broken invariant; empty iff the bundle is valid.
inline std::vector<Violation> validate_bundle(const FixtureBundle& b) {
  using detail::indexed;
  std::vector<Violation> out;

  if (b.image_width == 0 || b.image_height == 0)
    out.push_back({"image", rules::kImage, "width and height must be positive"});

  const std::size_t text = b.text_tokens();
  const std::size_t image = b.image_tokens();

  // Tensors.
  const auto& a = b.attention;
  if (a.data().size() != Tensor3<float>::element_count(a.shape()))
    out.push_back({"attention", rules::kShape, "element count differs from shape"});
  if (b.gradient.data().size() != Tensor3<float>::element_count(b.gradient.shape()))
    out.push_back({"gradient", rules::kShape, "element count differs from shape"});
  if (a.heads() == 0) out.push_back({"attention", rules::kShape, "needs at least one head"});
  if (b.gradient.shape() != a.shape())
    out.push_back({"gradient", rules::kShape, "shape differs from attention"});
  const auto [s, q] = b.architecture == Architecture::kOneStream
                          ? std::pair{text + image, text + image}
                          : std::pair{text, image};
  if (a.rows() != s || a.cols() != q)
    out.push_back({"attention", rules::kShape,
                   std::string(to_string(b.architecture)) + " requires s=" + std::to_string(s) +
                       ", q=" + std::to_string(q)});

  // Tokens.
  std::size_t cls_count = 0;
  for (std::size_t i = 0; i < b.tokens.size(); ++i) {
    const auto& t = b.tokens[i];
    if (t.index != i)
      out.push_back({indexed("tokens", i) + ".index", rules::kToken, "index must equal position"});
    if (t.is_cls) {
      ++cls_count;
      if (!t.is_special)
        out.push_back({indexed("tokens", i), rules::kToken, "[CLS] token must be special"});
    }
  }
  if (cls_count != 1) out.push_back({"tokens", rules::kToken, "exactly one [CLS] token required"});

  // Layout.
  const auto& vl = b.visual_layout;
  if (vl.kind == LayoutKind::kRegionBased) {
    if (vl.regions.size() != image)
      out.push_back({"visual_layout.regions", rules::kLayout, "one region per image token"});
    for (std::size_t i = 0; i < vl.regions.size(); ++i)
      detail::check_box(out, vl.regions[i], b, indexed("visual_layout.regions", i));
  } else if (vl.grid_h == 0 || vl.grid_w == 0 ||
             vl.non_grid_prefix + vl.grid_h * vl.grid_w != image) {
    out.push_back({"visual_layout", rules::kLayout,
                   "non_grid_prefix + grid_h*grid_w must equal num_image_tokens"});
  }

  // Proposals.
  auto check_proposals = [&](const std::vector<Proposal>& ps, std::string_view name) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto p = indexed(name, i);
      if (!(ps[i].score >= 0.0 && ps[i].score <= 1.0))
        out.push_back({p + ".score", rules::kScore, "score must lie in [0,1]"});
      detail::check_box(out, ps[i].box, b, p + ".box");
    }
  };
  check_proposals(b.proposals, "proposals");
  check_proposals(b.all_proposals, "all_proposals");

  // Expressions.
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < b.expressions.size(); ++i) {
    const auto& e = b.expressions[i];
    const auto p = indexed("expressions", i);
    if (!seen.insert(e.expression_index).second)
      out.push_back({p + ".expression_index", rules::kExpression, "duplicate expression_index"});
    const auto& idx = e.token_indices;
    if (idx.empty()) {
      out.push_back({p + ".token_indices", rules::kSpan, "span must be non-empty"});
    } else {
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] >= text) {
          out.push_back({p + ".token_indices", rules::kSpan, "token index out of range"});
          break;
        }
        if (k > 0 && idx[k] <= idx[k - 1]) {
          out.push_back({p + ".token_indices", rules::kSpan, "indices must strictly increase"});
          break;
        }
      }
    }
    if (e.embeddings) detail::check_embeddings(out, *e.embeddings, p + ".embeddings");
  }
  if (b.expressions.empty())
    out.push_back({"expressions", rules::kExpression, "at least one expression required"});
  else if (b.task_kind == TaskKind::kRec && b.expressions.size() != 1)
    out.push_back({"expressions", rules::kExpression, "REC bundles carry exactly one expression"});

  if (b.embeddings) detail::check_embeddings(out, *b.embeddings, "embeddings");

  for (std::size_t i = 0; i < b.ground_truth.size(); ++i) {
    const auto& g = b.ground_truth[i];
    const auto p = indexed("ground_truth", i);
    if (b.find_expression(g.expression_index) == nullptr)
      out.push_back({p + ".expression_index", rules::kGroundTruth, "no such expression"});
    if (g.boxes.empty()) out.push_back({p + ".boxes", rules::kGroundTruth, "needs a box"});
    for (std::size_t k = 0; k < g.boxes.size(); ++k)
      detail::check_box(out, g.boxes[k], b, indexed(p + ".boxes", k));
  }
  return out;
}

/// Reads and validates; the first broken invariant is raised as
/// InvariantViolation.
inline FixtureBundle load_bundle(const std::filesystem::path& dir) {
  FixtureBundle b = read_bundle(dir);
  const auto violations = validate_bundle(b);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw Error(Errc::kInvariantViolation, v.field,
                v.rule + " (" + v.detail + ") in " + dir.string());
  }
  return b;
}

inline void save_bundle(const FixtureBundle& b, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw Error(Errc::kIoFailure, dir.string(), "cannot create bundle directory");
  {
    std::ofstream out(dir / kManifestName, std::ios::trunc);
    if (!out) throw Error(Errc::kIoFailure, (dir / kManifestName).string(), "cannot open");
    out << manifest_to_json(b).dump(2) << '\n';
    if (!out) throw Error(Errc::kIoFailure, (dir / kManifestName).string(), "write failed");
  }
  detail::write_f32_blob(dir / kAttentionBlob, b.attention.data());
  detail::write_f32_blob(dir / kGradientBlob, b.gradient.data());
}

}  // namespace groundvlp
