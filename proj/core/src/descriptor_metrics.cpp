#include "idspace/descriptor_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "idspace/errors.hpp"

namespace idspace {

std::vector<Vector> columns_of(const Matrix<float>& m) {
  std::vector<Vector> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    out[static_cast<std::size_t>(c)].assign(m.col(c).data(), m.col(c).data() + m.rows());
  }
  return out;
}

namespace {

double squared_distance(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

void check_dims(std::span<const Vector> points) {
  for (const auto& p : points) {
    if (p.size() != points.front().size()) throw ConfigError("vectors of different dimension");
  }
}

}  // namespace

double diameter(std::span<const Vector> set) {
  if (set.empty()) throw DomainError("diameter of an empty set");
  check_dims(set);
  double best = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t j = i + 1; j < set.size(); ++j) best = std::max(best, std::sqrt(squared_distance(set[i], set[j])));
  }
  return best;
}

double mean_diameter(std::span<const Vector> points, std::span<const int> labels, int type_count) {
  if (points.size() != labels.size()) throw ConfigError("points and labels differ in length");
  if (type_count <= 0) throw DomainError("mean diameter needs at least one type");
  std::vector<std::vector<Vector>> groups(static_cast<std::size_t>(type_count));
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= type_count) throw DomainError("label " + std::to_string(labels[i]) + " out of range");
    groups[static_cast<std::size_t>(labels[i])].push_back(points[i]);
  }
  double sum = 0.0;
  for (int k = 0; k < type_count; ++k) {
    const auto& group = groups[static_cast<std::size_t>(k)];
    if (group.empty()) throw DomainError("interaction type " + std::to_string(k) + " has no descriptors");
    sum += diameter(group);
  }
  return sum / type_count;
}

double default_bandwidth(std::span<const Vector> points) {
  if (points.size() < 2) return 1e-6;
  check_dims(points);
  std::vector<double> d;
  d.reserve(points.size() * (points.size() - 1) / 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) d.push_back(std::sqrt(squared_distance(points[i], points[j])));
  }
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double median = *mid;
  if (d.size() % 2 == 0) median = 0.5 * (median + *std::max_element(d.begin(), mid));
  return median > 0.0 ? 0.5 * median : 1e-6;
}

ClusterAssignment mean_shift(std::span<const Vector> points, const MeanShiftOptions& options) {
  if (!(options.bandwidth > 0.0)) throw ConfigError("mean-shift bandwidth must be positive");
  ClusterAssignment result;
  if (points.empty()) return result;
  check_dims(points);
  const std::size_t n = points.size();
  const auto d = static_cast<Eigen::Index>(points.front().size());
  Matrix<double> data(d, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    data.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(points[i].data(), d);
  }
  const Eigen::RowVectorXd data_sq = data.colwise().squaredNorm();
  const double inv_two_h2 = 1.0 / (2.0 * options.bandwidth * options.bandwidth);

  Matrix<double> current = data;
  std::vector<bool> done(n, false);
  std::size_t active = n;
  for (int iter = 0; iter < options.max_iterations && active > 0; ++iter) {
    std::vector<Eigen::Index> idx;
    idx.reserve(active);
    for (std::size_t i = 0; i < n; ++i) {
      if (!done[i]) idx.push_back(static_cast<Eigen::Index>(i));
    }
    Matrix<double> x(d, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) x.col(static_cast<Eigen::Index>(k)) = current.col(idx[k]);
    // dist2(j, k) = |data_j - x_k|^2
    Matrix<double> dist2 = (-2.0 * data.transpose() * x).eval();
    dist2.colwise() += data_sq.transpose();
    dist2.rowwise() += x.colwise().squaredNorm();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto col = dist2.col(static_cast<Eigen::Index>(k));
      const double shift = std::max(0.0, col.minCoeff());
      col = (-(col.array() - shift).max(0.0) * inv_two_h2).exp().matrix();
      const double total = col.sum();
      const Eigen::VectorXd next = total > 0.0 ? Eigen::VectorXd(data * col / total)
                                               : Eigen::VectorXd(x.col(static_cast<Eigen::Index>(k)));
      const double step = (next - x.col(static_cast<Eigen::Index>(k))).norm();
      current.col(idx[k]) = next;
      if (step < options.tolerance) {
        done[static_cast<std::size_t>(idx[k])] = true;
        --active;
      }
    }
  }
  result.unconverged = active;
  if (active > 0) {
    result.warnings.push_back(std::to_string(active) + " point(s) did not converge within " +
                              std::to_string(options.max_iterations) + " iterations; last iterate used");
  }

  // Merge converged locations in lexicographic order so the outcome does not
  // depend on input order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto lex_less = [&](std::size_t a, std::size_t b) {
    for (Eigen::Index k = 0; k < d; ++k) {
      if (current(k, static_cast<Eigen::Index>(a)) != current(k, static_cast<Eigen::Index>(b))) {
        return current(k, static_cast<Eigen::Index>(a)) < current(k, static_cast<Eigen::Index>(b));
      }
    }
    return a < b;
  };
  std::sort(order.begin(), order.end(), lex_less);
  const double merge2 = 0.25 * options.bandwidth * options.bandwidth;
  std::vector<Eigen::VectorXd> survivors;
  for (std::size_t i : order) {
    const Eigen::VectorXd m = current.col(static_cast<Eigen::Index>(i));
    bool merged = false;
    for (const auto& s : survivors) {
      if ((s - m).squaredNorm() <= merge2) {
        merged = true;
        break;
      }
    }
    if (!merged) survivors.push_back(m);
  }

  std::vector<int> nearest(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd m = current.col(static_cast<Eigen::Index>(i));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < survivors.size(); ++s) {
      const double dd = (survivors[s] - m).squaredNorm();
      if (dd < best) {
        best = dd;
        nearest[i] = static_cast<int>(s);
      }
    }
  }
  std::map<int, int> canonical;
  result.cluster.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, inserted] = canonical.try_emplace(nearest[i], static_cast<int>(canonical.size()));
    if (inserted) {
      const auto& s = survivors[static_cast<std::size_t>(nearest[i])];
      result.modes.emplace_back(s.data(), s.data() + s.size());
    }
    result.cluster[i] = it->second;
  }
  return result;
}

Purity purity(const ClusterAssignment& assignment, std::span<const int> labels) {
  if (assignment.cluster.size() != labels.size()) throw ConfigError("labels do not match the cluster assignment");
  Purity out;
  if (labels.empty()) return out;
  std::map<int, std::map<int, std::size_t>> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) ++counts[assignment.cluster[i]][labels[i]];
  double macro = 0.0;
  std::size_t majority_total = 0;
  for (const auto& [cluster, by_label] : counts) {
    std::size_t n_c = 0;
    std::size_t best = 0;
    for (const auto& [label, n] : by_label) {
      n_c += n;
      best = std::max(best, n);
    }
    macro += static_cast<double>(best) / static_cast<double>(n_c);
    majority_total += best;
  }
  out.clusters = counts.size();
  out.macro = macro / static_cast<double>(counts.size());
  out.micro = static_cast<double>(majority_total) / static_cast<double>(labels.size());
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("spearman needs two equal-length samples of size >= 2");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

MannWhitney mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DomainError("Mann-Whitney U needs two non-empty samples");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::vector<double> ranks = average_ranks(pooled);
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) rank_sum += ranks[i];

  // Tie correction: sum over tie groups of (t^3 - t).
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double ties = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double n = n1 + n2;
  MannWhitney out;
  out.u = rank_sum - n1 * (n1 + 1.0) / 2.0;
  const double mean = n1 * n2 / 2.0;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  if (var <= 0.0) return out;
  out.z = (out.u - mean) / std::sqrt(var);
  out.p_greater = 0.5 * std::erfc(out.z / std::sqrt(2.0));
  out.p_two_sided = std::erfc(std::fabs(out.z) / std::sqrt(2.0));
  return out;
}

}  // namespace idspace
