#include "falter/velocity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "falter/errors.hpp"
#include "falter/report.hpp"

namespace falter {

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::SDS: return "SDS";
    case Metric::cSDS: return "cSDS";
    case Metric::RS: return "RS";
    case Metric::cRS: return "cRS";
    case Metric::ARS: return "ARS";
    case Metric::cARS: return "cARS";
    case Metric::MRS: return "MRS";
    case Metric::cMRS: return "cMRS";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  };
  const auto wanted = lower(name);
  for (Metric m : kAllMetrics)
    if (lower(to_string(m)) == wanted) return m;
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

std::vector<double> VelocityTable::values() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& [id, v] : entries) out.push_back(v);
  return out;
}

void VelocityTable::write_csv(std::ostream& os) const {
  os << "child_id,metric,velocity,defined\n";
  std::vector<std::pair<std::string, std::optional<double>>> rows;
  for (const auto& [id, v] : entries) rows.emplace_back(id, v);
  for (const auto& id : undefined) rows.emplace_back(id, std::nullopt);
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [id, v] : rows)
    os << id << ',' << to_string(metric) << ',' << (v ? format_double(*v) : "") << ','
       << (v ? 1 : 0) << '\n';
}

VelocityTable VelocityTable::read_csv(std::istream& is) {
  VelocityTable table;
  std::string line;
  if (!std::getline(is, line) || line.rfind("child_id,metric,velocity,defined", 0) != 0)
    throw DataError("velocity table: expected header child_id,metric,velocity,defined");
  std::size_t line_no = 1;
  bool have_metric = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() == 3) f.emplace_back();  // trailing empty field
    if (f.size() != 4) throw DataError("velocity table line " + std::to_string(line_no) + ": expected 4 fields");
    const Metric m = parse_metric(f[1]);
    if (have_metric && m != table.metric)
      throw DataError("velocity table mixes metrics");
    table.metric = m;
    have_metric = true;
    if (f[3] == "1") {
      table.entries[f[0]] = parse_double_or_throw(f[2], "velocity table line " + std::to_string(line_no));
    } else {
      table.undefined.push_back(f[0]);
    }
  }
  return table;
}

VelocityTable sds(const GrowthDataset& dataset) {
  VelocityTable table{Metric::SDS, {}, {}};
  for (const auto& child : dataset.children()) {
    const auto last = followup(child, dataset.window());
    if (!last) {
      table.undefined.push_back(child.child_id);
      continue;
    }
    table.entries[child.child_id] = last->zscore - baseline(child, dataset.window()).zscore;
  }
  return table;
}

VelocityTable csds(const GrowthDataset& dataset) {
  std::vector<std::string> ids;
  std::vector<double> z0, z1;
  VelocityTable table{Metric::cSDS, {}, {}};
  for (const auto& child : dataset.children()) {
    const auto last = followup(child, dataset.window());
    if (!last) {
      table.undefined.push_back(child.child_id);
      continue;
    }
    ids.push_back(child.child_id);
    z0.push_back(baseline(child, dataset.window()).zscore);
    z1.push_back(last->zscore);
  }
  const std::size_t n = ids.size();
  if (n < 3) throw DataError("cSDS needs at least three children with baseline and followup");
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m0 += z0[i];
    m1 += z1[i];
  }
  m0 /= static_cast<double>(n);
  m1 /= static_cast<double>(n);
  double s00 = 0.0, s11 = 0.0, s01 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s00 += (z0[i] - m0) * (z0[i] - m0);
    s11 += (z1[i] - m1) * (z1[i] - m1);
    s01 += (z0[i] - m0) * (z1[i] - m1);
  }
  if (s00 <= 0.0 || s11 <= 0.0) throw DataError("cSDS: baseline or followup z-scores are constant");
  const double r = s01 / std::sqrt(s00 * s11);
  if (std::abs(std::abs(r) - 1.0) <= 1e-12)
    throw DataError("cSDS: baseline and followup are perfectly correlated");
  const double scale = std::sqrt(1.0 - r * r);
  for (std::size_t i = 0; i < n; ++i) table.entries[ids[i]] = (z1[i] - r * z0[i]) / scale;
  return table;
}

VelocityTable rs(const MixedModelFit& fit) {
  if (fit.spec.kind != ModelKind::RS) throw ConfigError("RS velocities need an RS fit");
  VelocityTable table{Metric::RS, {}, fit.excluded_children};
  for (std::size_t i = 0; i < fit.child_ids.size(); ++i)
    table.entries[fit.child_ids[i]] = fit.beta(1) + fit.blups[i](1);
  return table;
}

VelocityTable crs(const MixedModelFit& fit, const std::map<std::string, double>& baselines,
                  const AnalysisWindow& window) {
  if (fit.spec.kind != ModelKind::cRS) throw ConfigError("cRS velocities need a cRS fit");
  VelocityTable table{Metric::cRS, {}, fit.excluded_children};
  const std::array<double, 2> ends{window.start, window.end};
  for (const auto& id : fit.child_ids) {
    const auto it = baselines.find(id);
    if (it == baselines.end()) throw DataError("missing baseline for child '" + id + "'");
    const auto pred = predict(fit, id, ends, it->second);
    table.entries[id] = (pred[1] - pred[0]) / window.length();
  }
  return table;
}

SegmentSlopes segment_slopes(const MixedModelFit& fit,
                             const std::map<std::string, double>* baselines) {
  if (!fit.spec.is_broken_stick())
    throw ConfigError("segment slopes need a broken-stick fit");
  const auto& knots = *fit.spec.knots;
  const auto b = knots.breaks();
  SegmentSlopes out{knots, {}};
  for (std::size_t i = 0; i < fit.child_ids.size(); ++i) {
    const auto& id = fit.child_ids[i];
    std::optional<double> z0;
    if (fit.spec.conditional()) {
      z0 = fit.baselines[i];
      if (baselines) {
        const auto it = baselines->find(id);
        if (it == baselines->end()) throw DataError("missing baseline for child '" + id + "'");
        z0 = it->second;
      }
    }
    const auto pred = predict(fit, id, b, z0);
    std::vector<double> slopes(knots.segment_count());
    for (std::size_t k = 0; k < slopes.size(); ++k)
      slopes[k] = (pred[k + 1] - pred[k]) / (b[k + 1] - b[k]);
    out.slopes.emplace(id, std::move(slopes));
  }
  return out;
}

VelocityTable ars(const SegmentSlopes& slopes, const KnotVector& knots) {
  const auto b = knots.breaks();
  VelocityTable table{Metric::ARS, {}, {}};
  for (const auto& [id, s] : slopes.slopes) {
    if (s.size() != knots.segment_count()) throw ConfigError("segment count does not match knots");
    double acc = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) acc += s[k] * (b[k + 1] - b[k]);
    table.entries[id] = acc / (knots.right() - knots.left());
  }
  return table;
}

VelocityTable mrs(const SegmentSlopes& slopes) {
  VelocityTable table{Metric::MRS, {}, {}};
  for (const auto& [id, s] : slopes.slopes) {
    if (s.empty()) throw ConfigError("no segments");
    table.entries[id] = *std::min_element(s.begin(), s.end());
  }
  return table;
}

VelocityTable relabel(VelocityTable table, Metric metric) {
  table.metric = metric;
  return table;
}

VelocityEngine::VelocityEngine(const GrowthDataset& dataset, VelocityConfig config)
    : dataset_(&dataset), config_(std::move(config)) {}

const MixedModelFit& VelocityEngine::model(ModelKind kind) {
  auto it = fits_.find(kind);
  if (it != fits_.end()) return it->second;
  ModelSpec spec;
  switch (kind) {
    case ModelKind::RS: spec = ModelSpec::random_slopes(false); break;
    case ModelKind::cRS: spec = ModelSpec::random_slopes(true); break;
    case ModelKind::BrokenStick: spec = ModelSpec::broken_stick(config_.knots, false); break;
    case ModelKind::cBrokenStick: spec = ModelSpec::broken_stick(config_.knots, true); break;
  }
  return fits_.emplace(kind, fit_mixed_model(*dataset_, spec, config_.fit)).first->second;
}

std::map<std::string, double> VelocityEngine::baselines() const {
  std::map<std::string, double> out;
  for (const auto& child : dataset_->children())
    out[child.child_id] = baseline(child, dataset_->window()).zscore;
  return out;
}

VelocityTable VelocityEngine::table(Metric metric) {
  switch (metric) {
    case Metric::SDS: return sds(*dataset_);
    case Metric::cSDS: return csds(*dataset_);
    case Metric::RS: return rs(model(ModelKind::RS));
    case Metric::cRS: return crs(model(ModelKind::cRS), baselines(), config_.window);
    case Metric::ARS:
    case Metric::cARS:
    case Metric::MRS:
    case Metric::cMRS: {
      const bool conditional = metric == Metric::cARS || metric == Metric::cMRS;
      const auto& fit = model(conditional ? ModelKind::cBrokenStick : ModelKind::BrokenStick);
      const auto slopes = segment_slopes(fit);
      auto table = (metric == Metric::ARS || metric == Metric::cARS) ? ars(slopes, config_.knots)
                                                                     : mrs(slopes);
      table.undefined = fit.excluded_children;
      return relabel(std::move(table), metric);
    }
  }
  throw ConfigError("unknown metric");
}

VelocityTable compute(Metric metric, const GrowthDataset& dataset, const VelocityConfig& config) {
  VelocityEngine engine(dataset, config);
  return engine.table(metric);
}

}  // namespace falter
