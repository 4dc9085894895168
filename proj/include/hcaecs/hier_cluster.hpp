#pragma once

// Average-linkage agglomerative clustering over a precomputed distance
// matrix, and flat K-cluster cuts of the resulting dendrogram.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hcaecs/detail/text.hpp"
#include "hcaecs/distance.hpp"
#include "hcaecs/error.hpp"

namespace hcaecs {

// Cluster ids follow the usual convention: leaves are 0..M-1 and the cluster
// created by merge s gets id M + s.
struct Merge {
  std::size_t a = 0;
  std::size_t b = 0;
  double distance = 0.0;
  std::size_t id = 0;
  std::size_t size = 0;

  bool operator==(const Merge&) const = default;
};

struct Dendrogram {
  std::size_t leaf_count = 0;
  std::vector<Merge> merges;
};

struct FlatClustering {
  std::vector<int> assignments;
  std::size_t k = 0;
  MeasureKind measure = MeasureKind::chebyshev;
};

/// Mean of all cross-pair distances between two disjoint member sets.
inline double average_linkage(const Matrix& dist, std::span<const std::size_t> members_a,
                              std::span<const std::size_t> members_b) {
  if (members_a.empty() || members_b.empty()) throw LogicError("average linkage needs non-empty clusters");
  const auto m = static_cast<std::size_t>(dist.rows());
  for (auto i : members_a)
    if (i >= m) throw ShapeError("member index out of range");
  for (auto j : members_b) {
    if (j >= m) throw ShapeError("member index out of range");
    if (std::find(members_a.begin(), members_a.end(), j) != members_a.end())
      throw LogicError("clusters overlap at member " + std::to_string(j));
  }
  double sum = 0.0;
  for (auto i : members_a)
    for (auto j : members_b) sum += dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return sum / (static_cast<double>(members_a.size()) * static_cast<double>(members_b.size()));
}

inline void validate_distance_matrix(const Matrix& dist) {
  if (dist.rows() != dist.cols()) throw ValidationError("distance matrix must be square");
  if (dist.rows() < 2) throw ShapeError("clustering needs at least 2 items");
  const Eigen::Index m = dist.rows();
  constexpr Eigen::Index tile = 64;
  for (Eigen::Index jb = 0; jb < m; jb += tile)
    for (Eigen::Index ib = jb; ib < m; ib += tile)
      for (Eigen::Index j = jb; j < std::min(jb + tile, m); ++j)
        for (Eigen::Index i = std::max(ib, j); i < std::min(ib + tile, m); ++i) {
          if (i == j) {
            if (dist(j, j) != 0.0) throw ValidationError("distance matrix diagonal must be zero");
            continue;
          }
          if (!std::isfinite(dist(i, j))) throw ValidationError("distance matrix has non-finite entries");
          if (dist(i, j) != dist(j, i)) throw ValidationError("distance matrix is not symmetric");
        }
}

// Each active cluster lives in the slot of its smallest leaf. Instead of
// averages the working set holds cross-pair distance sums, which merge by
// plain addition (the Lance-Williams average-linkage recurrence scaled by
// |A||B|). Ties on the minimal linkage go to the lexicographically smallest
// (slot, slot) pair. A per-slot nearest-neighbour cache over higher slots
// keeps the typical cost near O(M^2).
inline Dendrogram agglomerate(const Matrix& dist) {
  validate_distance_matrix(dist);
  const auto m = static_cast<std::size_t>(dist.rows());

  // Symmetric; column i holds slot i's sums so the scans below stay contiguous.
  Matrix sums = dist;
  auto col = [&](std::size_t i) { return sums.data() + i * m; };

  std::vector<std::size_t> live(m);  // active slots, ascending
  std::iota(live.begin(), live.end(), 0);
  std::vector<std::size_t> cluster_id = live;
  std::vector<double> size(m, 1.0);
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> nn(m, m);
  std::vector<double> nn_dist(m, inf);

  // Nearest higher active slot of the slot at live[pos].
  auto refresh = [&](std::size_t pos) {
    const std::size_t i = live[pos];
    const double* c = col(i);
    std::size_t best_j = m;
    double best = inf;
    for (std::size_t q = pos + 1; q < live.size(); ++q) {
      const std::size_t j = live[q];
      const double d = c[j] / (size[i] * size[j]);
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    nn[i] = best_j;
    nn_dist[i] = best;
  };
  for (std::size_t pos = 0; pos < m; ++pos) refresh(pos);

  Dendrogram out;
  out.leaf_count = m;
  out.merges.reserve(m - 1);
  for (std::size_t step = 0; step + 1 < m; ++step) {
    std::size_t i = m;
    double best = inf;
    for (std::size_t k : live)
      if (nn_dist[k] < best) {
        best = nn_dist[k];
        i = k;
      }
    const std::size_t j = nn[i];

    const auto merged_size = static_cast<std::size_t>(size[i] + size[j]);
    out.merges.push_back({cluster_id[i], cluster_id[j], best, m + step, merged_size});

    double* ci = col(i);
    const double* cj = col(j);
    for (std::size_t k : live) {
      if (k == i || k == j) continue;
      ci[k] += cj[k];
      sums(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = ci[k];
    }
    size[i] += size[j];
    cluster_id[i] = m + step;
    live.erase(std::lower_bound(live.begin(), live.end(), j));

    const auto pos_i = static_cast<std::size_t>(std::lower_bound(live.begin(), live.end(), i) - live.begin());
    for (std::size_t pos = 0; pos < pos_i; ++pos) {
      const std::size_t k = live[pos];
      if (nn[k] == i || nn[k] == j) {
        refresh(pos);
      } else {
        const double d = ci[k] / (size[k] * size[i]);
        if (d < nn_dist[k] || (d == nn_dist[k] && i < nn[k])) {
          nn_dist[k] = d;
          nn[k] = i;
        }
      }
    }
    for (std::size_t pos = pos_i + 1; pos < live.size() && live[pos] < j; ++pos)
      if (nn[live[pos]] == j) refresh(pos);
    refresh(pos_i);
  }
  return out;
}

// Undo the last K-1 merges; cluster ids are numbered by smallest member.
inline FlatClustering cut(const Dendrogram& dg, std::size_t k, MeasureKind measure = MeasureKind::chebyshev) {
  const std::size_t m = dg.leaf_count;
  if (k < 1 || k > m)
    throw ConfigError("cluster count K=" + std::to_string(k) + " out of range [1, " + std::to_string(m) + "]");
  if (dg.merges.size() + 1 != m) throw ShapeError("dendrogram must contain M-1 merges");

  std::vector<std::size_t> parent(2 * m - 1);
  std::iota(parent.begin(), parent.end(), 0);
  for (std::size_t s = 0; s < m - k; ++s) {
    const auto& mg = dg.merges[s];
    if (mg.a >= mg.id || mg.b >= mg.id || mg.id >= parent.size()) throw ShapeError("malformed dendrogram merge");
    parent[mg.a] = mg.id;
    parent[mg.b] = mg.id;
  }
  auto root = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x];
    return x;
  };

  FlatClustering out;
  out.k = k;
  out.measure = measure;
  out.assignments.assign(m, -1);
  std::vector<int> label_of(2 * m - 1, -1);
  int next = 0;
  for (std::size_t leaf = 0; leaf < m; ++leaf) {
    const auto r = root(leaf);
    if (label_of[r] < 0) label_of[r] = next++;
    out.assignments[leaf] = label_of[r];
  }
  if (static_cast<std::size_t>(next) != k) throw ShapeError("dendrogram cut did not produce K clusters");
  return out;
}

inline Dendrogram cluster_average_linkage(const Matrix& rows, const DistanceMeasure& measure) {
  return agglomerate(distance_matrix(rows, measure));
}

// ---------------------------------------------------------------------------
// Text formats

inline void write_dendrogram(const Dendrogram& dg, std::ostream& out) {
  out << "merge_index,a,b,distance,size\n";
  for (std::size_t s = 0; s < dg.merges.size(); ++s) {
    const auto& mg = dg.merges[s];
    out << s << ',' << mg.a << ',' << mg.b << ',' << detail::format_double(mg.distance) << ',' << mg.size << '\n';
  }
}

inline Dendrogram read_dendrogram(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  Dendrogram dg;
  std::vector<std::size_t> sizes;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    if (line_no == 1) {
      if (detail::trim(line) != "merge_index,a,b,distance,size") throw ParseError("bad dendrogram header", line_no);
      continue;
    }
    auto cells = detail::split(line, ',');
    if (cells.size() != 5) throw ParseError("expected 5 columns", line_no);
    auto s = detail::parse_int(cells[0]);
    auto a = detail::parse_int(cells[1]);
    auto b = detail::parse_int(cells[2]);
    auto d = detail::parse_double(cells[3]);
    auto n = detail::parse_int(cells[4]);
    if (!s || !a || !b || !d || !n || *s < 0 || *a < 0 || *b < 0 || *n < 2)
      throw ParseError("malformed merge row", line_no);
    if (static_cast<std::size_t>(*s) != dg.merges.size()) throw ParseError("merge rows out of order", line_no);
    dg.merges.push_back({static_cast<std::size_t>(*a), static_cast<std::size_t>(*b), *d, 0,
                         static_cast<std::size_t>(*n)});
  }
  dg.leaf_count = dg.merges.size() + 1;
  if (dg.leaf_count < 2) throw ShapeError("dendrogram has no merges");
  for (std::size_t s = 0; s < dg.merges.size(); ++s) dg.merges[s].id = dg.leaf_count + s;
  return dg;
}

inline void write_flat_clustering(const FlatClustering& fc, std::ostream& out) {
  out << "series_id,cluster\n";
  for (std::size_t i = 0; i < fc.assignments.size(); ++i) out << i << ',' << fc.assignments[i] << '\n';
}

inline FlatClustering read_flat_clustering(std::istream& in, MeasureKind measure) {
  std::string line;
  std::size_t line_no = 0;
  FlatClustering fc;
  fc.measure = measure;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    if (line_no == 1) {
      if (detail::trim(line) != "series_id,cluster") throw ParseError("bad clustering header", line_no);
      continue;
    }
    auto cells = detail::split(line, ',');
    if (cells.size() != 2) throw ParseError("expected 2 columns", line_no);
    auto id = detail::parse_int(cells[0]);
    auto c = detail::parse_int(cells[1]);
    if (!id || !c || *c < 0 || static_cast<std::size_t>(*id) != fc.assignments.size())
      throw ParseError("malformed clustering row", line_no);
    fc.assignments.push_back(static_cast<int>(*c));
    max_label = std::max(max_label, static_cast<int>(*c));
  }
  fc.k = static_cast<std::size_t>(max_label + 1);
  std::vector<char> seen(fc.k, 0);
  for (int c : fc.assignments) seen[static_cast<std::size_t>(c)] = 1;
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw ShapeError("cluster ids must be contiguous");
  return fc;
}

}  // namespace hcaecs
