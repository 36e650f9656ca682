#pragma once

// Binary classification metrics and the evaluation report file.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace tempnet {

/// Derived metrics for a confusion matrix. Ratios whose denominator is zero
/// are left empty.
struct Metrics {
  std::size_t n = 0, tp = 0, tn = 0, fp = 0, fn = 0;
  std::optional<double> accuracy, precision, recall, f1;
};

Metrics metric_math(std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn);

struct ClipRecord {
  std::string id;
  int label = 0;
  double probability = 0.0;
};

struct EvalReport {
  Metrics metrics;
  double bce = 0.0;
  double threshold = 0.5;
  std::vector<ClipRecord> records;
};

/// Thresholds each probability (p >= threshold is positive) and averages
/// the clamped BCE. Throws ValueError on an empty record list.
EvalReport make_report(std::vector<ClipRecord> records, double threshold = 0.5);

/// key=value header (n, tp, tn, fp, fn, accuracy, precision, recall, f1, bce,
/// threshold; empty metrics print as "nan"), a blank line, then one
/// "id TAB label TAB probability" line per clip.
std::string format_report(const EvalReport& report);
EvalReport parse_report(const std::string& text);

/// Table columns, in display order.
enum class Column { Accuracy, Precision, Bce, FalseNeg, FalsePos, F1 };
inline constexpr std::size_t kColumnCount = 6;

struct RankedRun {
  std::string name;
  EvalReport report;
  std::array<bool, kColumnCount> best{};
};

/// Rows ordered by accuracy (then lower BCE), with every entry that ties
/// for the best value of its column marked.
std::vector<RankedRun> compare_runs(const std::vector<std::pair<std::string, EvalReport>>& reports);
std::string format_comparison(const std::vector<RankedRun>& ranked);

}  // namespace tempnet
