#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace idspace {

inline constexpr double kMinBandwidth = 1e-3;
inline constexpr std::size_t kDensityGridPoints = 512;

/// 0.9 * min(sd, IQR / 1.34) * n^(-1/5), using whichever spread is positive
/// and never below kMinBandwidth.
double silverman_bandwidth(std::span<const double> samples);

/// One-dimensional Gaussian kernel density tabulated on a uniform grid.
struct Density1d {
  std::vector<double> grid;
  std::vector<double> values;
  double bandwidth = 0.0;
  std::size_t samples = 0;

  /// Linear interpolation on the grid, zero outside it.
  double operator()(double x) const;
  /// Trapezoid-rule integral over the grid.
  double integral() const;
};

/// KDE on `points` grid nodes covering [min - 5h, max + 5h]. A non-positive
/// bandwidth selects Silverman's rule. Throws DomainError on an empty sample.
Density1d estimate_density(std::span<const double> samples, double bandwidth = 0.0,
                           std::size_t points = kDensityGridPoints);

/// Exact kernel-sum density at x (no grid).
double kde_at(std::span<const double> samples, double bandwidth, double x);

/// Densities of descriptor norms: g for positives, h for negatives.
struct NormDensityPair {
  Density1d positive;
  Density1d negative;

  /// g / (g + h) at the given norm; 0.5 where both densities vanish.
  double likelihood(double norm) const;
};

NormDensityPair estimate_norm_densities(std::span<const double> positive_norms, std::span<const double> negative_norms);

}  // namespace idspace
