#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

#include "falter/classify.hpp"
#include "falter/growth_data.hpp"
#include "falter/mixed_model.hpp"

namespace falter {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

/// Whole-field decimal parse. Underflow to a subnormal or zero is accepted
/// (std::stod rejects it); overflow, junk and empty fields are not.
bool parse_double(std::string_view text, double& out);

/// Throws DataError naming `what` when the field does not parse.
double parse_double_or_throw(std::string_view text, const std::string& what);

/// Fixed decimals, for human-facing tables.
std::string format_fixed(double value, int decimals);

/// Equal-width histogram of `values` with the fitted mixture density scaled
/// to counts at each bin centre. Columns:
/// bin_lower,bin_upper,count,faltering_density,nonfaltering_density,mixture_density
void write_histogram_csv(std::ostream& os, std::span<const double> values,
                         const MixtureFit& mixture, std::size_t bins);

/// Component and mixture densities on an even grid spanning the data.
/// Columns: x,faltering,nonfaltering,mixture
void write_density_grid_csv(std::ostream& os, double lo, double hi, const MixtureFit& mixture,
                            std::size_t points);

/// Observed and predicted trajectories for up to `per_label` children of each
/// label, chosen by a seeded shuffle. Columns: child_id,label,series,age,zscore
void write_trajectories_csv(std::ostream& os, const GrowthDataset& dataset,
                            const MixedModelFit& fit, const Classification& labels,
                            std::size_t per_label, std::uint64_t seed,
                            std::size_t grid_points = 21);

}  // namespace falter
