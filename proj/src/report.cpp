#include "falter/report.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

#include "falter/errors.hpp"
#include "falter/rng.hpp"

namespace falter {

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return {buf, ptr};
}

bool parse_double(std::string_view text, double& out) {
  const std::string buf(text);
  if (buf.empty() || std::isspace(static_cast<unsigned char>(buf.front()))) return false;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size()) return false;
  if (errno == ERANGE && std::abs(v) > 1.0) return false;  // overflow
  out = v;
  return true;
}

double parse_double_or_throw(std::string_view text, const std::string& what) {
  double v = 0.0;
  if (!parse_double(text, v)) throw DataError(what + ": bad number '" + std::string(text) + "'");
  return v;
}

std::string format_fixed(double value, int decimals) {
  if (!std::isfinite(value)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string s(buf);
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

void write_histogram_csv(std::ostream& os, std::span<const double> values,
                         const MixtureFit& mixture, std::size_t bins) {
  if (values.empty() || bins == 0) throw ConfigError("histogram needs values and at least one bin");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  // shared edges so adjacent rows agree exactly and counts follow the printed edges
  auto edge = [&](std::size_t b) { return b == bins ? hi : lo + width * static_cast<double>(b); };
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    auto b = std::min(static_cast<std::size_t>((v - lo) / width), bins - 1);
    while (b > 0 && v < edge(b)) --b;
    while (b + 1 < bins && v >= edge(b + 1)) ++b;
    counts[b]++;
  }
  const double scale = static_cast<double>(values.size()) * width;
  auto comp = [&](int k, double x) {
    const double s = mixture.sds[k];
    const double d = (x - mixture.means[k]) / s;
    return mixture.weights[k] * std::exp(-0.5 * d * d) / (s * std::sqrt(2.0 * std::numbers::pi));
  };
  os << "bin_lower,bin_upper,count,faltering_density,nonfaltering_density,mixture_density\n";
  for (std::size_t b = 0; b < bins; ++b) {
    const double a = edge(b);
    const double c = a + 0.5 * width;
    os << format_double(a) << ',' << format_double(edge(b + 1)) << ',' << counts[b] << ','
       << format_double(scale * comp(0, c)) << ',' << format_double(scale * comp(1, c)) << ','
       << format_double(scale * mixture.density(c)) << '\n';
  }
}

void write_density_grid_csv(std::ostream& os, double lo, double hi, const MixtureFit& mixture,
                            std::size_t points) {
  if (points < 2 || !(lo < hi)) throw ConfigError("density grid needs lo < hi and two points");
  os << "x,faltering,nonfaltering,mixture\n";
  for (std::size_t i = 0; i < points; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    double comp[2];
    for (int k = 0; k < 2; ++k) {
      const double d = (x - mixture.means[k]) / mixture.sds[k];
      comp[k] = mixture.weights[k] * std::exp(-0.5 * d * d) / (mixture.sds[k] * std::sqrt(2.0 * std::numbers::pi));
    }
    os << format_double(x) << ',' << format_double(comp[0]) << ',' << format_double(comp[1]) << ','
       << format_double(comp[0] + comp[1]) << '\n';
  }
}

void write_trajectories_csv(std::ostream& os, const GrowthDataset& dataset,
                            const MixedModelFit& fit, const Classification& labels,
                            std::size_t per_label, std::uint64_t seed, std::size_t grid_points) {
  if (grid_points < 2) throw ConfigError("trajectory grid needs at least two points");
  std::array<std::vector<std::string>, 2> pools;
  for (const auto& [id, f] : labels.faltering)
    if (fit.index_of(id)) pools[f ? 0 : 1].push_back(id);
  CounterRng rng(seed);
  os << "child_id,label,series,age,zscore\n";
  const double lo = fit.spec.knots ? fit.spec.knots->left() : dataset.window().start;
  const double hi = fit.spec.knots ? fit.spec.knots->right() : dataset.window().end;
  std::vector<double> grid(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i)
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
  for (std::size_t l = 0; l < 2; ++l) {
    auto& pool = pools[l];
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min(pool.size(), per_label));
    std::sort(pool.begin(), pool.end());
    const char* label = l == 0 ? "faltering" : "non-faltering";
    for (const auto& id : pool) {
      const auto* child = dataset.find(id);
      if (!child) continue;
      for (const auto& m : child->measurements)
        os << id << ',' << label << ",observed," << format_double(m.age) << ','
           << format_double(m.zscore) << '\n';
      std::optional<double> z0;
      if (fit.spec.conditional()) z0 = fit.baselines[*fit.index_of(id)];
      const auto pred = predict(fit, id, grid, z0);
      for (std::size_t i = 0; i < grid.size(); ++i)
        os << id << ',' << label << ",predicted," << format_double(grid[i]) << ','
           << format_double(pred[i]) << '\n';
    }
  }
}

}  // namespace falter
