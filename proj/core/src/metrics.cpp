#include "tempnet/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "tempnet/autodiff.hpp"
#include "tempnet/error.hpp"

namespace tempnet {

namespace {

std::optional<double> ratio(double num, double den) {
  if (den == 0) return std::nullopt;
  return num / den;
}

}  // namespace

Metrics metric_math(std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn) {
  Metrics m;
  m.tp = tp;
  m.tn = tn;
  m.fp = fp;
  m.fn = fn;
  m.n = tp + tn + fp + fn;
  m.accuracy = ratio(static_cast<double>(tp + tn), static_cast<double>(m.n));
  m.precision = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
  m.recall = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
  if (m.precision && m.recall) m.f1 = ratio(2 * *m.precision * *m.recall, *m.precision + *m.recall);
  return m;
}

EvalReport make_report(std::vector<ClipRecord> records, double threshold) {
  if (records.empty()) throw ValueError("evaluation needs at least one clip");
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double bce = 0;
  for (const auto& r : records) {
    const bool predicted = r.probability >= threshold;
    if (r.label == 1) {
      predicted ? ++tp : ++fn;
    } else {
      predicted ? ++fp : ++tn;
    }
    bce += bce_value(r.probability, r.label);
  }
  EvalReport out;
  out.metrics = metric_math(tp, tn, fp, fn);
  out.bce = bce / static_cast<double>(records.size());
  out.threshold = threshold;
  out.records = std::move(records);
  return out;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "nan"; }

double parse_num(const std::string& v) {
  if (v == "nan") return std::numeric_limits<double>::quiet_NaN();
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw FormatError("report: bad number '" + v + "'");
  return out;
}

}  // namespace

std::string format_report(const EvalReport& r) {
  const Metrics& m = r.metrics;
  std::ostringstream os;
  os << "n=" << m.n << '\n'
     << "tp=" << m.tp << '\n'
     << "tn=" << m.tn << '\n'
     << "fp=" << m.fp << '\n'
     << "fn=" << m.fn << '\n'
     << "accuracy=" << fmt(m.accuracy) << '\n'
     << "precision=" << fmt(m.precision) << '\n'
     << "recall=" << fmt(m.recall) << '\n'
     << "f1=" << fmt(m.f1) << '\n'
     << "bce=" << fmt(r.bce) << '\n'
     << "threshold=" << fmt(r.threshold) << '\n'
     << '\n';
  for (const auto& c : r.records) os << c.id << '\t' << c.label << '\t' << fmt(c.probability) << '\n';
  return os.str();
}

EvalReport parse_report(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::map<std::string, std::string> header;
  std::vector<ClipRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.find('\t') != std::string::npos) {
      std::istringstream fields(line);
      ClipRecord r;
      std::string label, prob;
      if (!std::getline(fields, r.id, '\t') || !std::getline(fields, label, '\t') || !std::getline(fields, prob)) {
        throw FormatError("report: malformed record '" + line + "'");
      }
      r.label = label == "1" ? 1 : 0;
      r.probability = parse_num(prob);
      records.push_back(r);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("report: malformed line '" + line + "'");
    header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"tp", "tn", "fp", "fn", "bce", "threshold"}) {
    if (!header.count(key)) throw FormatError(std::string("report: missing key ") + key);
  }
  auto count = [&](const char* k) { return static_cast<std::size_t>(parse_num(header[k])); };
  EvalReport out;
  out.metrics = metric_math(count("tp"), count("tn"), count("fp"), count("fn"));
  out.bce = parse_num(header["bce"]);
  out.threshold = parse_num(header["threshold"]);
  out.records = std::move(records);
  return out;
}

namespace {

// Larger is better for every column after negation of the "lower is better"
// ones; absent metrics rank last.
double column_score(const EvalReport& r, Column c) {
  const double worst = -std::numeric_limits<double>::infinity();
  switch (c) {
    case Column::Accuracy: return r.metrics.accuracy.value_or(worst);
    case Column::Precision: return r.metrics.precision.value_or(worst);
    case Column::Bce: return -r.bce;
    case Column::FalseNeg: return -static_cast<double>(r.metrics.fn);
    case Column::FalsePos: return -static_cast<double>(r.metrics.fp);
    case Column::F1: return r.metrics.f1.value_or(worst);
  }
  return worst;
}

}  // namespace

std::vector<RankedRun> compare_runs(const std::vector<std::pair<std::string, EvalReport>>& reports) {
  std::vector<RankedRun> out;
  for (const auto& [name, report] : reports) out.push_back(RankedRun{name, report, {}});
  for (std::size_t c = 0; c < kColumnCount; ++c) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& r : out) best = std::max(best, column_score(r.report, static_cast<Column>(c)));
    for (auto& r : out) r.best[c] = column_score(r.report, static_cast<Column>(c)) == best;
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedRun& a, const RankedRun& b) {
    const double aa = column_score(a.report, Column::Accuracy), ba = column_score(b.report, Column::Accuracy);
    if (aa != ba) return aa > ba;
    return a.report.bce < b.report.bce;
  });
  return out;
}

std::string format_comparison(const std::vector<RankedRun>& ranked) {
  std::ostringstream os;
  os << std::left << std::setw(32) << "run" << std::right << std::setw(11) << "Accuracy" << std::setw(11) << "Precision"
     << std::setw(9) << "BCE" << std::setw(11) << "FalseNeg" << std::setw(11) << "FalsePos" << std::setw(9) << "F1"
     << '\n';
  auto cell = [](const std::string& v, bool best) { return (best ? "*" : "") + v; };
  auto two = [](const std::optional<double>& v) {
    if (!v) return std::string("nan");
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << *v;
    return s.str();
  };
  for (const auto& r : ranked) {
    const Metrics& m = r.report.metrics;
    os << std::left << std::setw(32) << r.name << std::right << std::setw(11) << cell(two(m.accuracy), r.best[0])
       << std::setw(11) << cell(two(m.precision), r.best[1]) << std::setw(9) << cell(two(r.report.bce), r.best[2])
       << std::setw(11) << cell(std::to_string(m.fn), r.best[3]) << std::setw(11)
       << cell(std::to_string(m.fp), r.best[4]) << std::setw(9) << cell(two(m.f1), r.best[5]) << '\n';
  }
  return os.str();
}

}  // namespace tempnet
