#pragma once

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "groundvlp/bundle.hpp"
#include "groundvlp/error.hpp"
#include "groundvlp/fixture_io.hpp"
#include "groundvlp/geometry.hpp"

namespace groundvlp {

inline constexpr double kIouThreshold = 0.5;
inline constexpr double kSmallTargetRatio = 0.1;
inline constexpr double kLargeTargetRatio = 0.4;

inline double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

struct EvalRecord {
  std::string task_id;
  std::size_t expression_index = 0;
  std::vector<Box> predicted;  // ranked, best first; empty = no prediction
  std::vector<Box> ground_truth;
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  double area_ratio = 0.0;  // target area / image area
};

struct SplitMetric {
  std::size_t count = 0;
  std::optional<double> value;  // unset when the split is empty
};

struct MetricsReport {
  TaskKind task = TaskKind::kRec;
  std::size_t count = 0;
  std::optional<double> accuracy;     // REC, IoU >= 0.5 at top-1
  std::optional<double> recall_at_1;  // phrase grounding, ANY-BOX
  std::optional<double> recall_at_5;
  SplitMetric small;
  SplitMetric large;
  std::vector<bool> hits;  // top-1 hit per record, input order
};

/// ANY-BOX hit: some of the top-k predictions overlaps some ground-truth box
/// with IoU >= threshold. Records without predictions are misses.
inline bool hit_at_k(const EvalRecord& r, std::size_t k, double threshold = kIouThreshold) {
  const std::size_t n = std::min(k, r.predicted.size());
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& gt : r.ground_truth)
      if (iou(r.predicted[i], gt) >= threshold) return true;
  return false;
}

inline double recall_at_k(const std::vector<EvalRecord>& records, std::size_t k,
                          double threshold = kIouThreshold) {
  if (records.empty()) throw Error(Errc::kEmptyRecords, "records", "no records to score");
  std::size_t hits = 0;
  for (const auto& r : records) hits += hit_at_k(r, k, threshold) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

/// Small targets cover < 10% of the image, large ones > 40%; the rest belong
/// to neither split.
inline std::pair<std::vector<EvalRecord>, std::vector<EvalRecord>> size_split(
    const std::vector<EvalRecord>& records) {
  std::pair<std::vector<EvalRecord>, std::vector<EvalRecord>> out;
  for (const auto& r : records) {
    if (r.area_ratio < kSmallTargetRatio)
      out.first.push_back(r);
    else if (r.area_ratio > kLargeTargetRatio)
      out.second.push_back(r);
  }
  return out;
}

namespace detail {

inline SplitMetric split_metric(const std::vector<EvalRecord>& records) {
  SplitMetric m;
  m.count = records.size();
  if (!records.empty()) m.value = recall_at_k(records, 1);
  return m;
}

}  // namespace detail

inline MetricsReport rec_accuracy(const std::vector<EvalRecord>& records,
                                  double iou_threshold = kIouThreshold) {
  if (records.empty()) throw Error(Errc::kEmptyRecords, "records", "no records to score");
  MetricsReport report;
  report.task = TaskKind::kRec;
  report.count = records.size();
  std::size_t hits = 0;
  for (const auto& r : records) {
    if (r.ground_truth.size() != 1)
      throw Error(Errc::kInvalidRecord, r.task_id,
                  "REC records carry exactly one ground-truth box");
    const bool hit = hit_at_k(r, 1, iou_threshold);
    report.hits.push_back(hit);
    hits += hit ? 1 : 0;
  }
  report.accuracy = static_cast<double>(hits) / static_cast<double>(records.size());
  const auto [small, large] = size_split(records);
  report.small = detail::split_metric(small);
  report.large = detail::split_metric(large);
  return report;
}

inline MetricsReport phrase_grounding_recall(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw Error(Errc::kEmptyRecords, "records", "no records to score");
  MetricsReport report;
  report.task = TaskKind::kPhraseGrounding;
  report.count = records.size();
  for (const auto& r : records) report.hits.push_back(hit_at_k(r, 1));
  report.recall_at_1 = recall_at_k(records, 1);
  report.recall_at_5 = recall_at_k(records, 5);
  const auto [small, large] = size_split(records);
  report.small = detail::split_metric(small);
  report.large = detail::split_metric(large);
  return report;
}

inline MetricsReport evaluate(const std::vector<EvalRecord>& records, TaskKind task) {
  return task == TaskKind::kRec ? rec_accuracy(records) : phrase_grounding_recall(records);
}

// ---------------------------------------------------------------------------
// JSON-lines ingestion

using PredictionKey = std::pair<std::string, std::size_t>;

namespace detail {

template <typename Fn>
void for_each_json_line(std::istream& in, const std::string& source, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::kSchema, where, e.what());
    }
    fn(j, where);
  }
}

}  // namespace detail

/// Ranked boxes per (task_id, expression_index) from the grounding output.
inline std::map<PredictionKey, std::vector<Box>> read_predictions(std::istream& in,
                                                                  const std::string& source) {
  std::map<PredictionKey, std::vector<Box>> out;
  detail::for_each_json_line(in, source, [&](const nlohmann::json& j, const std::string& where) {
    using detail::field;
    PredictionKey key{field<std::string>(j, "task_id", where),
                      field<std::size_t>(j, "expression_index", where)};
    std::vector<Box> ranked{detail::box_from_json(detail::require(j, "box", where), where + ".box")};
    if (j.contains("top5")) {
      const auto& top = j["top5"];
      for (std::size_t i = 0; i < top.size(); ++i) {
        const auto p = detail::indexed(where + ".top5", i);
        const Box b = detail::box_from_json(detail::require(top[i], "box", p), p + ".box");
        if (i == 0 && b == ranked.front()) continue;
        ranked.push_back(b);
      }
    }
    out[key] = std::move(ranked);
  });
  return out;
}

/// Ground-truth lines: {"task_id", "expression_index", "boxes", "image":
/// {"width", "height"}, optional "area_ratio"}. Without an explicit ratio the
/// largest ground-truth box is used.
inline std::vector<EvalRecord> read_ground_truth(std::istream& in, const std::string& source) {
  std::vector<EvalRecord> out;
  detail::for_each_json_line(in, source, [&](const nlohmann::json& j, const std::string& where) {
    using detail::field;
    EvalRecord r;
    r.task_id = field<std::string>(j, "task_id", where);
    r.expression_index = field<std::size_t>(j, "expression_index", where);
    const auto& image = detail::require(j, "image", where);
    r.image_width = field<std::size_t>(image, "width", where + ".image");
    r.image_height = field<std::size_t>(image, "height", where + ".image");
    const auto& boxes = detail::require(j, "boxes", where);
    if (!boxes.is_array() || boxes.empty())
      throw Error(Errc::kSchema, where + ".boxes", "expected a non-empty array of boxes");
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const auto p = detail::indexed(where + ".boxes", i);
      r.ground_truth.push_back(detail::box_from_json(boxes[i], p));
      if (!is_well_formed(r.ground_truth.back(), static_cast<double>(r.image_width),
                          static_cast<double>(r.image_height)))
        throw Error(Errc::kSchema, p, "box outside the image or degenerate");
    }
    if (j.contains("area_ratio")) {
      r.area_ratio = field<double>(j, "area_ratio", where);
    } else {
      double largest = 0.0;
      for (const auto& b : r.ground_truth) largest = std::max(largest, b.area());
      r.area_ratio = largest / static_cast<double>(r.image_width * r.image_height);
    }
    if (!(r.area_ratio > 0.0 && r.area_ratio <= 1.0))
      throw Error(Errc::kSchema, where + ".area_ratio", "ratio must lie in (0, 1]");
    out.push_back(std::move(r));
  });
  return out;
}

/// Attaches predictions to ground-truth records; records without a matching
/// prediction stay empty and count as misses.
inline std::vector<EvalRecord> join_predictions(
    std::vector<EvalRecord> records, const std::map<PredictionKey, std::vector<Box>>& predictions) {
  for (auto& r : records) {
    auto it = predictions.find({r.task_id, r.expression_index});
    if (it != predictions.end()) r.predicted = it->second;
  }
  return records;
}

inline nlohmann::json report_to_json(const MetricsReport& m) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  auto split = [&](const SplitMetric& s) {
    return nlohmann::json{{"count", s.count}, {"value", opt(s.value)}};
  };
  return {{"task_kind", to_string(m.task)},
          {"count", m.count},
          {"accuracy@0.5", opt(m.accuracy)},
          {"recall@1", opt(m.recall_at_1)},
          {"recall@5", opt(m.recall_at_5)},
          {"small", split(m.small)},
          {"large", split(m.large)},
          {"hits", m.hits}};
}

/// Aligned two-column text table; percentages with two decimals.
inline std::string format_report_table(const MetricsReport& m) {
  std::vector<std::pair<std::string, std::string>> rows;
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
    return std::string(buf);
  };
  rows.emplace_back("task", std::string(to_string(m.task)));
  rows.emplace_back("records", std::to_string(m.count));
  if (m.task == TaskKind::kRec) {
    rows.emplace_back("Acc@0.5 (%)", pct(m.accuracy));
  } else {
    rows.emplace_back("R@1 (%)", pct(m.recall_at_1));
    rows.emplace_back("R@5 (%)", pct(m.recall_at_5));
  }
  rows.emplace_back("small (<0.1) n=" + std::to_string(m.small.count), pct(m.small.value));
  rows.emplace_back("large (>0.4) n=" + std::to_string(m.large.count), pct(m.large.value));

  std::size_t width = 0;
  for (const auto& [k, v] : rows) width = std::max(width, k.size());
  std::ostringstream out;
  for (const auto& [k, v] : rows) out << k << std::string(width - k.size() + 2, ' ') << v << '\n';
  return out.str();
}

}  // namespace groundvlp
