#pragma once

// Independent reference implementations shared by unit and acceptance tests.
// Everything here is written with plain loops and does not call into the
// library code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <vector>

#include "idspace/network.hpp"

namespace oracle {

/// |a - b| / max(|a|, |b|), with the denominator floored at `floor` so that
/// two gradients that are both numerically zero compare as equal.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct FdResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// Central differences of `loss` over every parameter of `params`, compared
/// against `analytic` (same layout). `params` is restored afterwards. The
/// default step balances truncation error (it dominates above ~1e-4 on
/// sum-scaled costs) against cancellation (it dominates below ~1e-6).
inline FdResult central_differences(std::vector<double*> params, const std::vector<double>& analytic,
                                    const std::function<double()>& loss, double step = 1e-5) {
  FdResult r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + step;
    const double up = loss();
    *params[i] = saved - step;
    const double down = loss();
    *params[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    r.max_relative_error = std::max(r.max_relative_error, relative_error(analytic[i], numeric));
    ++r.checked;
  }
  return r;
}

/// Pointers to every weight and bias of a network, layer by layer.
inline std::vector<double*> parameter_pointers(idspace::Network<double>& net) {
  std::vector<double*> out;
  for (auto& layer : net.mutable_layers()) {
    for (std::size_t k = 0; k < layer.weights.size(); ++k) out.push_back(&layer.weights[k]);
    for (std::size_t k = 0; k < layer.bias.size(); ++k) out.push_back(&layer.bias[k]);
  }
  return out;
}

inline std::vector<double> flatten(const idspace::GradientTape<double>& tape) {
  std::vector<double> out;
  for (const auto& g : tape.layers) {
    for (std::size_t k = 0; k < g.weights.size(); ++k) out.push_back(g.weights[k]);
    for (std::size_t k = 0; k < g.bias.size(); ++k) out.push_back(g.bias[k]);
  }
  return out;
}

inline double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

/// Double loop over unordered pairs.
inline double diameter(const std::vector<std::vector<double>>& set) {
  double best = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t j = i + 1; j < set.size(); ++j) best = std::max(best, euclidean(set[i], set[j]));
  }
  return best;
}

inline double mean_diameter(const std::vector<std::vector<double>>& points, const std::vector<int>& labels,
                            int type_count) {
  double total = 0.0;
  for (int t = 0; t < type_count; ++t) {
    std::vector<std::vector<double>> group;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (labels[i] == t) group.push_back(points[i]);
    }
    total += diameter(group);
  }
  return total / type_count;
}

struct PurityFractions {
  double macro = 0.0;
  double micro = 0.0;
};

/// Counts labels per cluster with std::map, then takes majorities.
inline PurityFractions purity(const std::vector<int>& cluster, const std::vector<int>& labels) {
  std::map<int, std::map<int, int>> counts;
  for (std::size_t i = 0; i < cluster.size(); ++i) ++counts[cluster[i]][labels[i]];
  double macro = 0.0;
  int majority_total = 0;
  for (const auto& [c, by_label] : counts) {
    int size = 0;
    int best = 0;
    for (const auto& [label, n] : by_label) {
      size += n;
      best = std::max(best, n);
    }
    macro += static_cast<double>(best) / size;
    majority_total += best;
  }
  return {macro / static_cast<double>(counts.size()), static_cast<double>(majority_total) / cluster.size()};
}

/// Gaussian kernel sum at x, one term per sample.
inline double kernel_sum(const std::vector<double>& samples, double h, double x) {
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * 3.14159265358979323846));
  double s = 0.0;
  for (double v : samples) {
    const double u = (x - v) / h;
    s += std::exp(-0.5 * u * u);
  }
  return s * norm;
}

/// (sum |v|)^2 / sum v^2, written out with plain loops.
inline double l1_l2_ratio(const std::vector<double>& v) {
  double l1 = 0.0;
  double l2 = 0.0;
  for (double x : v) {
    l1 += std::abs(x);
    l2 += x * x;
  }
  return l1 * l1 / l2;
}

}  // namespace oracle
