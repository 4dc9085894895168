#pragma once

// Internal validation with the Modified Hubert statistic (Mahalanobis pair
// and centre distances), best-measure selection, and the external Rand Index
// and NMI scores.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hcaecs/distance.hpp"
#include "hcaecs/error.hpp"
#include "hcaecs/hier_cluster.hpp"

namespace hcaecs {

struct HubertScore {
  double t = 0.0;
  MeasureKind measure_evaluated = MeasureKind::chebyshev;
  std::string covariance_fingerprint;
};

struct ExternalScores {
  double rand_index = 0.0;
  double nmi = 0.0;
};

struct MeasureOutcome {
  FlatClustering clustering;
  HubertScore score;
  std::optional<ExternalScores> external;
};

struct SelectionReport {
  std::map<MeasureKind, MeasureOutcome> per_measure;
  std::vector<MeasureKind> best;
  std::string covariance_fingerprint;
};

// Cluster centres are member means. The sum runs over unordered pairs i < j
// with the 2 / (M (M - 1)) coefficient; same-cluster pairs contribute 0.
inline HubertScore hubert_statistic(const Matrix& rows, const FlatClustering& clustering, const CovarianceModel& cov) {
  const auto m = static_cast<std::size_t>(rows.rows());
  if (clustering.assignments.size() != m)
    throw ShapeError("clustering has " + std::to_string(clustering.assignments.size()) + " assignments for " +
                     std::to_string(m) + " rows");
  if (clustering.k == 0) throw ShapeError("clustering has no clusters");
  if (m < 2) throw ShapeError("Hubert statistic needs at least 2 rows");
  if (rows.cols() != cov.dim()) throw ShapeError("row width does not match covariance dimension");
  const auto k = static_cast<Eigen::Index>(clustering.k);

  Matrix centres = Matrix::Zero(k, rows.cols());
  Vector counts = Vector::Zero(k);
  for (std::size_t i = 0; i < m; ++i) {
    const int c = clustering.assignments[i];
    if (c < 0 || c >= k) throw ShapeError("cluster id out of range");
    centres.row(c) += rows.row(static_cast<Eigen::Index>(i));
    counts[c] += 1.0;
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    if (counts[c] == 0.0) throw ShapeError("cluster " + std::to_string(c) + " is empty");
    centres.row(c) /= counts[c];
  }

  const Matrix white_rows = rows * cov.whitening();
  const Matrix white_centres = centres * cov.whitening();
  Matrix centre_dist = Matrix::Zero(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = a + 1; b < k; ++b)
      centre_dist(a, b) = centre_dist(b, a) = (white_centres.row(a) - white_centres.row(b)).norm();

  const Matrix cols = white_rows.transpose();
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const int ci = clustering.assignments[i];
    for (std::size_t j = i + 1; j < m; ++j) {
      const int cj = clustering.assignments[j];
      if (ci == cj) continue;
      const double d = (cols.col(static_cast<Eigen::Index>(i)) - cols.col(static_cast<Eigen::Index>(j))).norm();
      sum += d * centre_dist(ci, cj);
    }
  }
  HubertScore out;
  out.t = 2.0 * sum / (static_cast<double>(m) * static_cast<double>(m - 1));
  out.measure_evaluated = clustering.measure;
  out.covariance_fingerprint = cov.fingerprint();
  if (!std::isfinite(out.t)) throw NumericError("Hubert statistic is not finite");
  return out;
}

// T values are compared after rounding to 12 significant digits.
inline double round_significant(double value, int digits = 12) {
  if (value == 0.0 || !std::isfinite(value)) return value;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*e", digits - 1, value);
  return std::strtod(buf, nullptr);
}

// Every measure attaining the maximal T is reported as best.
inline SelectionReport best_cluster(std::map<MeasureKind, MeasureOutcome> per_measure) {
  if (per_measure.empty()) throw ConfigError("no clusterings to select from");
  SelectionReport report;
  double best_t = -std::numeric_limits<double>::infinity();
  for (const auto& [kind, outcome] : per_measure) {
    const double t = round_significant(outcome.score.t);
    if (t > best_t) {
      best_t = t;
      report.best.assign(1, kind);
    } else if (t == best_t) {
      report.best.push_back(kind);
    }
  }
  report.per_measure = std::move(per_measure);
  if (!report.per_measure.empty()) report.covariance_fingerprint = report.per_measure.begin()->second.score.covariance_fingerprint;
  return report;
}

namespace detail {

struct Contingency {
  std::vector<std::vector<std::int64_t>> table;
  std::vector<std::int64_t> rows;
  std::vector<std::int64_t> cols;
  std::int64_t n = 0;
};

inline Contingency contingency(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size())
    throw ShapeError("label vectors differ in length: " + std::to_string(truth.size()) + " vs " +
                     std::to_string(pred.size()));
  std::map<int, std::size_t> t_ids;
  std::map<int, std::size_t> p_ids;
  for (int v : truth) t_ids.emplace(v, t_ids.size());
  for (int v : pred) p_ids.emplace(v, p_ids.size());
  Contingency c;
  c.n = static_cast<std::int64_t>(truth.size());
  c.table.assign(t_ids.size(), std::vector<std::int64_t>(p_ids.size(), 0));
  c.rows.assign(t_ids.size(), 0);
  c.cols.assign(p_ids.size(), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto a = t_ids[truth[i]];
    const auto b = p_ids[pred[i]];
    ++c.table[a][b];
    ++c.rows[a];
    ++c.cols[b];
  }
  return c;
}

inline std::int64_t pairs(std::int64_t n) { return n * (n - 1) / 2; }

}  // namespace detail

/// Fraction of unordered pairs on which the two partitions agree.
inline double rand_index(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size()) throw ShapeError("label vectors differ in length");
  if (truth.size() < 2) throw ShapeError("Rand index needs at least 2 items");
  const auto c = detail::contingency(truth, pred);
  std::int64_t same_both = 0;
  std::int64_t same_truth = 0;
  std::int64_t same_pred = 0;
  for (const auto& row : c.table)
    for (auto v : row) same_both += detail::pairs(v);
  for (auto v : c.rows) same_truth += detail::pairs(v);
  for (auto v : c.cols) same_pred += detail::pairs(v);
  const std::int64_t total = detail::pairs(c.n);
  const std::int64_t agree = total - same_truth - same_pred + 2 * same_both;
  return static_cast<double>(agree) / static_cast<double>(total);
}

/// Mutual information over the arithmetic mean of the two entropies; 0 when
/// either partition has zero entropy.
inline double nmi(std::span<const int> truth, std::span<const int> pred) {
  const auto c = detail::contingency(truth, pred);
  if (c.n == 0) return 0.0;
  const double n = static_cast<double>(c.n);
  auto entropy = [n](const std::vector<std::int64_t>& counts) {
    double h = 0.0;
    for (auto v : counts)
      if (v > 0) h -= (static_cast<double>(v) / n) * std::log(static_cast<double>(v) / n);
    return h;
  };
  const double hu = entropy(c.rows);
  const double hv = entropy(c.cols);
  if (hu <= 0.0 || hv <= 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t a = 0; a < c.rows.size(); ++a)
    for (std::size_t b = 0; b < c.cols.size(); ++b) {
      const auto v = c.table[a][b];
      if (v == 0) continue;
      const double p = static_cast<double>(v) / n;
      mi += p * std::log(n * static_cast<double>(v) / (static_cast<double>(c.rows[a]) * static_cast<double>(c.cols[b])));
    }
  return std::clamp(mi / (0.5 * (hu + hv)), 0.0, 1.0);
}

inline void attach_external_scores(SelectionReport& report, std::span<const int> truth) {
  for (auto& [kind, outcome] : report.per_measure)
    outcome.external = ExternalScores{rand_index(truth, outcome.clustering.assignments),
                                      nmi(truth, outcome.clustering.assignments)};
}

}  // namespace hcaecs
