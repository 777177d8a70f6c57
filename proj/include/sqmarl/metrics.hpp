#pragma once

// Quantitative measures reported by the experiment harness: normalized
// discounted reward, cooperation rates, coin-pick statistics and
// cross-seed aggregation.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sqmarl/errors.hpp"

namespace sqmarl {

// NDR = (1 - gamma) * sum_t gamma^t r_t. Normalizes the discounted return to
// the per-step reward scale, so a constant reward stream r has NDR -> r.
inline double ndr(std::span<const double> rewards, double gamma) {
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("ndr: gamma must be in [0,1)");
  double acc = 0.0;
  double g = 1.0;
  for (double r : rewards) {
    acc += g * r;
    g *= gamma;
  }
  return (1.0 - gamma) * acc;
}

// Fraction of Cooperate (action 0) entries in a binary action log.
inline double p_cooperation(std::span<const uint8_t> actions) {
  if (actions.empty()) throw ConfigError("p_cooperation: empty action log");
  size_t coop = 0;
  for (uint8_t a : actions)
    if (a == 0) ++coop;
  return static_cast<double>(coop) / static_cast<double>(actions.size());
}

enum class PickEvent : uint8_t { OwnCoin, OtherCoin };

// Own-color picks / total picks. Missing (nullopt) when the agent never picked.
inline std::optional<double> p_own_coin(std::span<const PickEvent> picks) {
  if (picks.empty()) return std::nullopt;
  size_t own = 0;
  for (PickEvent e : picks)
    if (e == PickEvent::OwnCoin) ++own;
  return static_cast<double>(own) / static_cast<double>(picks.size());
}

struct MetricSeries {
  std::string name;
  uint64_t seed = 0;
  int agent = 0;
  std::vector<int> epochs;
  std::vector<double> values;
};

struct AggregateBand {
  std::vector<int> epochs;
  std::vector<double> mean;
  std::vector<double> stddev;  // population standard deviation across seeds
};

// Per-epoch mean and population std across seeds. All series must share the
// same epoch grid.
inline AggregateBand aggregate(std::span<const MetricSeries> series) {
  if (series.empty()) throw ConfigError("aggregate: no series");
  const auto& grid = series[0].epochs;
  for (const auto& s : series) {
    if (s.epochs != grid) throw ConfigError("aggregate: ragged epoch grids for " + s.name);
    if (s.values.size() != grid.size())
      throw ConfigError("aggregate: series length mismatch for " + s.name);
  }
  AggregateBand band;
  band.epochs = grid;
  const size_t n = series.size();
  band.mean.resize(grid.size());
  band.stddev.resize(grid.size());
  for (size_t e = 0; e < grid.size(); ++e) {
    double m = 0.0;
    for (const auto& s : series) m += s.values[e];
    m /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& s : series) {
      const double d = s.values[e] - m;
      var += d * d;
    }
    band.mean[e] = m;
    band.stddev[e] = std::sqrt(var / static_cast<double>(n));
  }
  return band;
}

}  // namespace sqmarl
