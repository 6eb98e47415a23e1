#include "falter/growth_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "falter/errors.hpp"
#include "falter/report.hpp"

namespace falter {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(delim, pos);
    fields.push_back(trim(line.substr(pos, next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return fields;
}

[[noreturn]] void row_error(std::size_t line, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": " + what);
}

}  // namespace

AnalysisWindow::AnalysisWindow(double start, double end) : start(start), end(end) {
  if (!(start < end) || !std::isfinite(start) || !std::isfinite(end))
    throw ConfigError("analysis window requires start < end");
}

GrowthDataset::GrowthDataset(std::vector<ChildSeries> children, AnalysisWindow window,
                             double exclusion_bound)
    : children_(std::move(children)), window_(window), exclusion_bound_(exclusion_bound) {
  if (!(exclusion_bound_ > 0.0)) throw ConfigError("exclusion bound must be positive");
  std::sort(children_.begin(), children_.end(),
            [](const ChildSeries& a, const ChildSeries& b) { return a.child_id < b.child_id; });
  for (std::size_t i = 0; i < children_.size(); ++i) {
    const auto& child = children_[i];
    if (i > 0 && children_[i - 1].child_id == child.child_id)
      throw DataError("duplicate child id '" + child.child_id + "'");
    if (child.measurements.empty())
      throw DataError("child '" + child.child_id + "' has no measurements");
    for (std::size_t j = 0; j < child.measurements.size(); ++j) {
      const auto& m = child.measurements[j];
      if (!std::isfinite(m.zscore) || !std::isfinite(m.age) || m.age < 0.0)
        throw DataError("child '" + child.child_id + "': invalid measurement");
      if (!window_.contains(m.age) || std::abs(m.zscore) > exclusion_bound_)
        throw DataError("child '" + child.child_id + "': measurement outside window or bound");
      if (j > 0 && !(child.measurements[j - 1].age < m.age))
        throw DataError("child '" + child.child_id + "': ages not strictly ascending");
    }
  }
}

std::size_t GrowthDataset::total_measurements() const {
  std::size_t n = 0;
  for (const auto& c : children_) n += c.measurements.size();
  return n;
}

const ChildSeries* GrowthDataset::find(const std::string& child_id) const {
  const auto it = std::lower_bound(
      children_.begin(), children_.end(), child_id,
      [](const ChildSeries& c, const std::string& id) { return c.child_id < id; });
  if (it == children_.end() || it->child_id != child_id) return nullptr;
  return &*it;
}

void GrowthDataset::write_csv(std::ostream& os) const {
  os << "child_id,age,zscore\n";
  for (const auto& child : children_)
    for (const auto& m : child.measurements)
      os << child.child_id << ',' << format_double(m.age) << ',' << format_double(m.zscore)
         << '\n';
}

std::string IngestReport::to_json() const {
  nlohmann::json j;
  j["rows_read"] = rows_read;
  j["rows_retained"] = rows_retained;
  j["excluded"] = {{"out_of_window", excluded_out_of_window}, {"extreme_zscore", excluded_extreme}};
  j["children_dropped"] = children_dropped;
  j["children_dropped_count"] = children_dropped.size();
  return j.dump(2);
}

IngestResult ingest(std::istream& in, AgeUnit unit, const AnalysisWindow& window,
                    double exclusion_bound) {
  if (!(exclusion_bound > 0.0)) throw ConfigError("exclusion bound must be positive");

  std::string line;
  std::size_t line_no = 0;
  // header, skipping blank lines
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw DataError("empty input: missing header");
  const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
  const auto header = split(line, delim);
  if (header.size() != 3 || header[0] != "child_id" || header[1] != "age" ||
      header[2] != "zscore")
    row_error(line_no, "expected header child_id,age,zscore");

  IngestReport report;
  std::map<std::string, std::vector<Measurement>> kept;
  std::set<std::string> seen_children;
  std::set<std::pair<std::string, double>> seen_rows;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line, delim);
    if (fields.size() != 3) row_error(line_no, "expected 3 fields");
    if (fields[0].empty()) row_error(line_no, "empty child_id");
    double age = 0.0;
    double z = 0.0;
    if (!parse_double(fields[1], age) || !std::isfinite(age) || age < 0.0)
      row_error(line_no, "invalid age '" + std::string(fields[1]) + "'");
    if (!parse_double(fields[2], z) || !std::isfinite(z))
      row_error(line_no, "invalid zscore '" + std::string(fields[2]) + "'");
    if (unit == AgeUnit::Days) age /= kDaysPerYear;

    std::string id(fields[0]);
    ++report.rows_read;
    if (!seen_rows.emplace(id, age).second)
      row_error(line_no, "duplicate measurement for child '" + id + "' at the same age");
    seen_children.insert(id);

    if (!window.contains(age)) {
      ++report.excluded_out_of_window;
      continue;
    }
    if (std::abs(z) > exclusion_bound) {
      ++report.excluded_extreme;
      continue;
    }
    kept[id].push_back({age, z});
    ++report.rows_retained;
  }

  std::vector<ChildSeries> children;
  for (const auto& id : seen_children) {
    auto it = kept.find(id);
    if (it == kept.end()) {
      report.children_dropped.push_back(id);
      continue;
    }
    auto& ms = it->second;
    std::sort(ms.begin(), ms.end(),
              [](const Measurement& a, const Measurement& b) { return a.age < b.age; });
    children.push_back({id, std::move(ms)});
  }
  if (children.empty()) throw DataError("no measurements retained after exclusions");
  return {GrowthDataset(std::move(children), window, exclusion_bound), std::move(report)};
}

Measurement baseline(const ChildSeries& series, const AnalysisWindow& window) {
  for (const auto& m : series.measurements)
    if (window.contains(m.age)) return m;
  throw DataError("child '" + series.child_id + "' has no measurement in the window");
}

std::optional<Measurement> followup(const ChildSeries& series, const AnalysisWindow& window) {
  std::size_t count = 0;
  const Measurement* last = nullptr;
  for (const auto& m : series.measurements) {
    if (!window.contains(m.age)) continue;
    ++count;
    last = &m;
  }
  if (count < 2) return std::nullopt;
  return *last;
}

}  // namespace falter
