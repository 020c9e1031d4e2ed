#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "idspace/layers.hpp"

namespace idspace {

using Vector = std::vector<double>;

/// Columns of a (d x n) matrix as individual vectors.
std::vector<Vector> columns_of(const Matrix<float>& m);

/// Largest pairwise Euclidean distance (brute force). Throws DomainError on an empty set.
double diameter(std::span<const Vector> set);

/// Mean of per-type diameters over types 0..type_count-1. Every type must be
/// present; a missing type raises DomainError naming it.
double mean_diameter(std::span<const Vector> points, std::span<const int> labels, int type_count);

struct ClusterAssignment {
  std::vector<int> cluster;   // per input point, ids canonicalised by first occurrence
  std::vector<Vector> modes;  // one per cluster id
  std::size_t unconverged = 0;
  std::vector<std::string> warnings;

  std::size_t cluster_count() const { return modes.size(); }
};

struct MeanShiftOptions {
  double bandwidth = 1.0;
  double tolerance = 1e-7;
  int max_iterations = 500;
};

/// 0.5 x median pairwise distance; falls back to 1e-6 when all points coincide.
double default_bandwidth(std::span<const Vector> points);

/// Gaussian-kernel mean shift: each point climbs to a mode of the kernel
/// density of the (fixed) inputs, modes closer than bandwidth / 2 merge, and
/// each point joins the surviving mode nearest to where it converged.
ClusterAssignment mean_shift(std::span<const Vector> points, const MeanShiftOptions& options);

struct Purity {
  double macro = 0.0;  // mean over clusters of max-label share
  double micro = 0.0;  // sample-weighted: sum of cluster majorities / N
  std::size_t clusters = 0;
};

Purity purity(const ClusterAssignment& assignment, std::span<const int> labels);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

struct MannWhitney {
  double u = 0.0;          // U statistic of the first sample
  double z = 0.0;          // tie-corrected normal approximation
  double p_greater = 1.0;  // one-sided: first sample stochastically larger
  double p_two_sided = 1.0;
};

MannWhitney mann_whitney_u(std::span<const double> a, std::span<const double> b);

}  // namespace idspace
