#include "idspace/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "idspace/errors.hpp"

namespace idspace {

namespace {

double quantile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double silverman_bandwidth(std::span<const double> samples) {
  if (samples.empty()) throw DomainError("bandwidth of an empty sample");
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double sd = samples.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = (quantile(sorted, 0.75) - quantile(sorted, 0.25)) / 1.34;
  double spread = std::min(sd, iqr);
  if (!(spread > 0.0)) spread = std::max(sd, iqr);
  return std::max(kMinBandwidth, 0.9 * spread * std::pow(n, -0.2));
}

double kde_at(std::span<const double> samples, double bandwidth, double x) {
  const double norm = 1.0 / (static_cast<double>(samples.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  double sum = 0.0;
  for (double s : samples) {
    const double u = (x - s) / bandwidth;
    sum += std::exp(-0.5 * u * u);
  }
  return sum * norm;
}

Density1d estimate_density(std::span<const double> samples, double bandwidth, std::size_t points) {
  if (samples.empty()) throw DomainError("density of an empty sample");
  if (points < 2) throw ConfigError("density grid needs at least two points");
  for (double s : samples) {
    if (!std::isfinite(s)) throw DomainError("non-finite sample in density estimate");
  }
  Density1d d;
  d.bandwidth = bandwidth > 0.0 ? std::max(bandwidth, kMinBandwidth) : silverman_bandwidth(samples);
  d.samples = samples.size();
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *lo_it - 5.0 * d.bandwidth;
  const double hi = *hi_it + 5.0 * d.bandwidth;
  d.grid.resize(points);
  d.values.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    d.grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    d.values[i] = kde_at(samples, d.bandwidth, d.grid[i]);
  }
  return d;
}

double Density1d::operator()(double x) const {
  if (grid.empty() || !(x >= grid.front()) || !(x <= grid.back())) return 0.0;
  const double step = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
  const auto i = std::min(static_cast<std::size_t>((x - grid.front()) / step), grid.size() - 2);
  const double t = (x - grid[i]) / step;
  return values[i] + std::clamp(t, 0.0, 1.0) * (values[i + 1] - values[i]);
}

double Density1d::integral() const {
  double total = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) total += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
  return total;
}

double NormDensityPair::likelihood(double norm) const {
  const double g = positive(norm);
  const double h = negative(norm);
  if (g + h < 1e-12) return 0.5;
  return g / (g + h);
}

NormDensityPair estimate_norm_densities(std::span<const double> positive_norms, std::span<const double> negative_norms) {
  return {estimate_density(positive_norms), estimate_density(negative_norms)};
}

}  // namespace idspace
