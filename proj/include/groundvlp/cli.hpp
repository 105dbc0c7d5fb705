#pragma once

// Command implementations behind tools/groundvlp. Each returns the process
// exit code: 0 success, 1 data failure, 2 usage or schema failure.

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "groundvlp/category.hpp"
#include "groundvlp/error.hpp"
#include "groundvlp/eval.hpp"
#include "groundvlp/fixture_io.hpp"
#include "groundvlp/fusion.hpp"
#include "groundvlp/heatmap.hpp"
#include "groundvlp/parse_tree.hpp"

namespace groundvlp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;
inline constexpr const char* kJobsEnv = "GVLP_JOBS";

inline bool is_usage_error(Errc c) {
  return c == Errc::kSchema || c == Errc::kParse || c == Errc::kUnsupportedVersion;
}

/// Expands shell-style patterns. Literal paths are kept even when missing so
/// the caller can report them; wildcard patterns without matches vanish.
inline std::vector<std::filesystem::path> expand_paths(const std::vector<std::string>& patterns) {
  std::vector<std::filesystem::path> out;
  for (const auto& pattern : patterns) {
    if (pattern.find_first_of("*?[") == std::string::npos) {
      out.emplace_back(pattern);
      continue;
    }
    glob_t g{};
    if (::glob(pattern.c_str(), 0, nullptr, &g) == 0)
      for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    ::globfree(&g);
  }
  return out;
}

inline std::size_t default_parallelism() {
  if (const char* env = std::getenv(kJobsEnv)) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------

inline int cmd_validate(const std::vector<std::string>& patterns, std::ostream& out,
                        std::ostream& err) {
  const auto paths = expand_paths(patterns);
  if (paths.empty()) {
    err << "validate: no bundle paths given or matched\n";
    return kExitUsage;
  }
  bool all_valid = true;
  for (const auto& path : paths) {
    try {
      for (const auto& v : validate_bundle(read_bundle(path))) {
        out << path.string() << '\t' << v.field << '\t' << v.rule << '\n';
        all_valid = false;
      }
    } catch (const Error& e) {
      out << path.string() << '\t' << e.field() << '\t' << to_string(e.code()) << '\n';
      all_valid = false;
    }
  }
  return all_valid ? kExitOk : kExitData;
}

// ---------------------------------------------------------------------------

struct RunManifest {
  std::vector<std::string> bundles;  // directories or glob patterns
  CategoryMode mode = CategoryMode::kGroundTruth;
  std::optional<double> alpha;  // unset: task/mode default
  std::optional<double> theta;
  std::optional<std::size_t> top_m;
  std::filesystem::path output = "predictions.jsonl";
  std::size_t parallelism = 1;
};

inline CategoryMode parse_mode(const std::string& s) {
  if (s == "ground-truth" || s == "gt") return CategoryMode::kGroundTruth;
  if (s == "predicted" || s == "pred") return CategoryMode::kPredicted;
  throw Error(Errc::kSchema, "mode", "expected 'ground-truth' or 'predicted', got '" + s + "'");
}

/// Reads a run manifest; relative paths resolve against its directory.
inline RunManifest read_run_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kMissingFile, path.string(), "cannot open run manifest");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::kSchema, path.string(), e.what());
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() || base.empty() ? fp : base / fp;
  };
  RunManifest m;
  for (const auto& b : detail::field<std::vector<std::string>>(j, "bundles", ""))
    m.bundles.push_back(resolve(b).string());
  if (j.contains("mode")) m.mode = parse_mode(detail::field<std::string>(j, "mode", ""));
  if (j.contains("alpha")) m.alpha = detail::field<double>(j, "alpha", "");
  if (j.contains("theta")) m.theta = detail::field<double>(j, "theta", "");
  if (j.contains("top_m")) m.top_m = detail::field<std::size_t>(j, "top_m", "");
  if (j.contains("output")) m.output = resolve(detail::field<std::string>(j, "output", ""));
  m.parallelism = j.contains("parallelism") ? detail::field<std::size_t>(j, "parallelism", "")
                                            : default_parallelism();
  return m;
}

inline FusionConfig resolve_config(const RunManifest& m, TaskKind task) {
  FusionConfig c = default_config(task, m.mode);
  if (m.alpha) c.alpha = *m.alpha;
  if (m.theta) c.theta = *m.theta;
  if (m.top_m) c.top_m = *m.top_m;
  return c;
}

namespace detail {

struct GroundedLine {
  std::string task_id;
  std::size_t expression_index;
  std::string json;
};

struct BundleOutcome {
  std::vector<GroundedLine> lines;
  std::vector<std::string> log;
};

inline BundleOutcome ground_one(const std::filesystem::path& path, const RunManifest& m) {
  BundleOutcome out;
  FixtureBundle bundle;
  try {
    bundle = load_bundle(path);
  } catch (const Error& e) {
    out.log.push_back("skip " + path.string() + ": " + e.what());
    return out;
  }
  const FusionConfig config = resolve_config(m, bundle.task_kind);
  for (const auto& e : bundle.expressions) {
    try {
      const auto p = ground(bundle, e.expression_index, config);
      out.lines.push_back({p.task_id, p.expression_index, prediction_to_json(p).dump()});
    } catch (const Error& err) {
      out.log.push_back("skip " + path.string() + " expression " +
                        std::to_string(e.expression_index) + ": " + err.what());
    }
  }
  return out;
}

}  // namespace detail

/// Grounds every expression of every bundle with a worker pool. Output lines
/// are sorted by (task_id, expression_index), independent of parallelism.
inline int cmd_ground(const RunManifest& m, std::ostream& err) {
  const auto paths = expand_paths(m.bundles);
  if (paths.empty()) {
    err << "ground: no bundle paths given or matched\n";
    return kExitUsage;
  }

  std::vector<detail::BundleOutcome> outcomes(paths.size());
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::clamp<std::size_t>(m.parallelism, 1, paths.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < paths.size(); i = next++)
          outcomes[i] = detail::ground_one(paths[i], m);
      });
  }

  std::vector<detail::GroundedLine> lines;
  std::size_t failed = 0;
  for (auto& o : outcomes) {
    for (const auto& l : o.log) err << l << '\n';
    if (o.lines.empty()) ++failed;
    for (auto& l : o.lines) lines.push_back(std::move(l));
  }
  std::sort(lines.begin(), lines.end(), [](const auto& a, const auto& b) {
    return std::tie(a.task_id, a.expression_index) < std::tie(b.task_id, b.expression_index);
  });

  std::ofstream out(m.output, std::ios::trunc);
  if (!out) {
    err << "ground: cannot write " << m.output.string() << '\n';
    return kExitData;
  }
  for (const auto& l : lines) out << l.json << '\n';
  err << "ground: " << lines.size() << " predictions from " << paths.size() - failed << "/"
      << paths.size() << " bundles\n";
  return failed == paths.size() ? kExitData : kExitOk;
}

// ---------------------------------------------------------------------------

inline TaskKind parse_task(const std::string& s) {
  if (s == "rec" || s == "REC") return TaskKind::kRec;
  if (s == "pg" || s == "phrase" || s == "PhraseGrounding") return TaskKind::kPhraseGrounding;
  throw Error(Errc::kSchema, "task", "expected 'rec' or 'pg', got '" + s + "'");
}

inline int cmd_eval(const std::filesystem::path& pred_path, const std::filesystem::path& gt_path,
                    TaskKind task, const std::filesystem::path& report_path, std::ostream& out,
                    std::ostream& err) {
  try {
    std::ifstream pred_in(pred_path);
    if (!pred_in) throw Error(Errc::kMissingFile, pred_path.string(), "cannot open");
    std::ifstream gt_in(gt_path);
    if (!gt_in) throw Error(Errc::kMissingFile, gt_path.string(), "cannot open");
    const auto predictions = read_predictions(pred_in, pred_path.string());
    const auto records = join_predictions(read_ground_truth(gt_in, gt_path.string()), predictions);
    const auto report = evaluate(records, task);
    out << format_report_table(report);
    std::ofstream rep(report_path, std::ios::trunc);
    if (!rep) throw Error(Errc::kIoFailure, report_path.string(), "cannot write report");
    rep << report_to_json(report).dump(2) << '\n';
    return kExitOk;
  } catch (const Error& e) {
    err << "eval: " << e.what() << '\n';
    return is_usage_error(e.code()) ? kExitUsage : kExitData;
  }
}

// ---------------------------------------------------------------------------

inline int cmd_heatmap_dump(const std::filesystem::path& bundle_path, std::size_t expression_index,
                            const std::filesystem::path& pgm_path,
                            const std::optional<std::filesystem::path>& raw_path,
                            std::size_t top_m, std::ostream& err) {
  try {
    const auto bundle = load_bundle(bundle_path);
    const auto& expression = require_expression(bundle, expression_index);
    const auto heat = compute_heatmap(bundle, compute_attribution(bundle, expression), top_m);
    write_pgm(pgm_path, heat);
    if (raw_path) write_raw_f64(*raw_path, heat);
    return kExitOk;
  } catch (const Error& e) {
    err << "heatmap-dump: " << e.what() << '\n';
    return is_usage_error(e.code()) ? kExitUsage : kExitData;
  }
}

// ---------------------------------------------------------------------------

inline ParseTree parse_tree_text(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return ParseTree::from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::kParse, "tree", e.what());
    }
  }
  return ParseTree::from_bracketed(text);
}

inline int cmd_map_category(const std::string& tree_text,
                            const std::optional<std::filesystem::path>& embeddings_path,
                            std::ostream& out, std::ostream& err) {
  try {
    const std::string unit = extract_target_unit(parse_tree_text(tree_text));
    out << "predicted: " << unit << '\n';
    if (!embeddings_path) return kExitOk;

    std::ifstream in(*embeddings_path);
    if (!in) throw Error(Errc::kMissingFile, embeddings_path->string(), "cannot open");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::kSchema, embeddings_path->string(), e.what());
    }
    const auto table = embeddings_from_json(j, "embeddings");
    std::string category = unit;
    std::optional<CategoryMapping> mapping;
    if (!table.classes.empty()) {
      mapping = map_to_vocabulary(table, unit);
      category = mapping->mapped;
    }
    out << "mapped: " << category << '\n';
    const auto set = build_category_set(table, category);
    out << "categories:";
    for (const auto& n : set.names) out << ' ' << n;
    out << '\n';
    if (mapping) {
      auto sims = mapping->similarities;
      std::stable_sort(sims.begin(), sims.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; });
      sims.resize(std::min<std::size_t>(5, sims.size()));
      std::size_t width = 0;
      for (const auto& [name, _] : sims) width = std::max(width, name.size());
      out << "top-" << sims.size() << ":\n";
      for (const auto& [name, sim] : sims)
        out << "  " << name << std::string(width - name.size() + 2, ' ') << std::fixed
            << std::setprecision(6) << sim << '\n';
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "map-category: " << e.what() << '\n';
    return is_usage_error(e.code()) || e.code() == Errc::kEmptyTree ? kExitUsage : kExitData;
  }
}

}  // namespace groundvlp::cli
