#pragma once

// Independent reference implementations used only by tests. Nothing here
// calls into the library code paths it is compared against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "hcaecs/autoencoder.hpp"
#include "hcaecs/hier_cluster.hpp"

namespace oracle {

// Naive agglomeration: recomputes the full average linkage from the member
// lists for every candidate pair at every step. O(M^3) pairs per step.
struct NaiveMerge {
  std::size_t a, b;
  double distance;
  std::size_t size;
};

inline std::vector<NaiveMerge> agglomerate(const Eigen::MatrixXd& dist) {
  const auto m = static_cast<std::size_t>(dist.rows());
  struct Cluster {
    std::size_t id;
    std::vector<std::size_t> members;  // sorted
  };
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < m; ++i) clusters.push_back({i, {i}});
  std::vector<NaiveMerge> out;
  std::size_t next_id = m;
  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    std::pair<std::size_t, std::size_t> best_key{m, m};
    for (std::size_t x = 0; x < clusters.size(); ++x)
      for (std::size_t y = x + 1; y < clusters.size(); ++y) {
        double sum = 0.0;
        for (auto i : clusters[x].members)
          for (auto j : clusters[y].members) sum += dist(i, j);
        const double avg = sum / static_cast<double>(clusters[x].members.size() * clusters[y].members.size());
        auto lo = std::min(clusters[x].members.front(), clusters[y].members.front());
        auto hi = std::max(clusters[x].members.front(), clusters[y].members.front());
        std::pair<std::size_t, std::size_t> key{lo, hi};
        if (avg < best || (avg == best && key < best_key)) {
          best = avg;
          best_key = key;
          ba = x;
          bb = y;
        }
      }
    auto& A = clusters[ba];
    auto& B = clusters[bb];
    const bool a_first = A.members.front() < B.members.front();
    const auto& first = a_first ? A : B;
    const auto& second = a_first ? B : A;
    out.push_back({first.id, second.id, best, A.members.size() + B.members.size()});
    std::vector<std::size_t> merged = A.members;
    merged.insert(merged.end(), B.members.begin(), B.members.end());
    std::sort(merged.begin(), merged.end());
    Cluster c{next_id++, merged};
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(ba));
    clusters.push_back(std::move(c));
  }
  return out;
}

// Pair-by-pair agreement count.
inline double rand_index(const std::vector<int>& truth, const std::vector<int>& pred) {
  std::int64_t agree = 0, total = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t j = i + 1; j < truth.size(); ++j) {
      ++total;
      if ((truth[i] == truth[j]) == (pred[i] == pred[j])) ++agree;
    }
  return static_cast<double>(agree) / static_cast<double>(total);
}

// NMI through H(U) + H(V) - H(U, V).
inline double nmi(const std::vector<int>& truth, const std::vector<int>& pred) {
  std::map<int, double> pu, pv;
  std::map<std::pair<int, int>, double> puv;
  const double n = static_cast<double>(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    pu[truth[i]] += 1.0 / n;
    pv[pred[i]] += 1.0 / n;
    puv[{truth[i], pred[i]}] += 1.0 / n;
  }
  auto h = [](const auto& probs) {
    double s = 0.0;
    for (const auto& [k, p] : probs) s -= p * std::log(p);
    return s;
  };
  const double hu = h(pu), hv = h(pv);
  if (pu.size() < 2 || pv.size() < 2) return 0.0;
  const double mi = hu + hv - h(puv);
  return std::clamp(mi / ((hu + hv) / 2.0), 0.0, 1.0);
}

// Scalar-loop forward pass of the whole autoencoder for one series, written
// directly from the LSTM cell equations. Returns reconstruction[t][k] and
// fills the latent vector.
struct ScalarLstm {
  const Eigen::VectorXd& p;
  hcaecs::LstmBlocks blocks;
  std::size_t in, h;

  double w(std::size_t r, std::size_t c) const { return p[blocks.w.offset + static_cast<Eigen::Index>(c * 4 * h + r)]; }
  double u(std::size_t r, std::size_t c) const { return p[blocks.u.offset + static_cast<Eigen::Index>(c * 4 * h + r)]; }
  double b(std::size_t r) const { return p[blocks.b.offset + static_cast<Eigen::Index>(r)]; }

  static double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

  void step(const std::vector<double>& x, std::vector<double>& hs, std::vector<double>& cs) const {
    std::vector<double> pre(4 * h);
    for (std::size_t r = 0; r < 4 * h; ++r) {
      double s = b(r);
      for (std::size_t c = 0; c < in; ++c) s += w(r, c) * x[c];
      for (std::size_t c = 0; c < h; ++c) s += u(r, c) * hs[c];
      pre[r] = s;
    }
    for (std::size_t k = 0; k < h; ++k) {
      const double ig = sig(pre[k]);
      const double fg = sig(pre[h + k]);
      const double gg = std::tanh(pre[2 * h + k]);
      const double og = sig(pre[3 * h + k]);
      cs[k] = fg * cs[k] + ig * gg;
      hs[k] = og * std::tanh(cs[k]);
    }
  }
};

struct ScalarResult {
  std::vector<std::vector<double>> reconstruction;
  std::vector<double> latent;
};

// `series[t][k]` holds the observed steps only; the decoder runs `n_max` steps.
inline ScalarResult scalar_forward(const hcaecs::AutoencoderModel& model, const std::vector<std::vector<double>>& series) {
  const auto& dims = model.dims();
  const auto& L = model.layout();
  const auto& p = model.parameters();
  const std::size_t d = dims.input, h1 = dims.hidden1, h2 = dims.hidden2;
  ScalarLstm e1{p, L.encoder1, d, h1}, e2{p, L.encoder2, h1, h2}, d1{p, L.decoder1, h2, h1}, d2{p, L.decoder2, h1, h2};

  std::vector<double> h1s(h1, 0.0), c1s(h1, 0.0), h2s(h2, 0.0), c2s(h2, 0.0);
  for (const auto& x : series) {
    e1.step(x, h1s, c1s);
    e2.step(h1s, h2s, c2s);
  }
  ScalarResult out;
  out.latent = h2s;

  std::vector<double> dh1(h1, 0.0), dc1(h1, 0.0), dh2(h2, 0.0), dc2(h2, 0.0);
  for (std::size_t r = 0; r < h1; ++r) {
    double s = p[L.bridge_b.offset + static_cast<Eigen::Index>(r)];
    for (std::size_t c = 0; c < h2; ++c) s += p[L.bridge_w.offset + static_cast<Eigen::Index>(c * h1 + r)] * out.latent[c];
    dh1[r] = s;
  }
  for (std::size_t t = 0; t < dims.max_length; ++t) {
    d1.step(out.latent, dh1, dc1);
    d2.step(dh1, dh2, dc2);
    std::vector<double> y(d);
    for (std::size_t k = 0; k < d; ++k) {
      double s = p[L.output_b.offset + static_cast<Eigen::Index>(k)];
      for (std::size_t c = 0; c < h2; ++c) s += p[L.output_w.offset + static_cast<Eigen::Index>(c * d + k)] * dh2[c];
      y[k] = s;
    }
    out.reconstruction.push_back(y);
  }
  return out;
}

// Masked MSE over a dataset computed from scalar_forward.
inline double scalar_loss(const hcaecs::AutoencoderModel& model, const hcaecs::TimeSeriesDataset& ds) {
  double sum = 0.0, count = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<std::vector<double>> series(ds.length(i), std::vector<double>(ds.dims()));
    for (std::size_t t = 0; t < ds.length(i); ++t)
      for (std::size_t k = 0; k < ds.dims(); ++k) series[t][k] = ds.value(i, t, k);
    auto r = scalar_forward(model, series);
    for (std::size_t t = 0; t < ds.length(i); ++t)
      for (std::size_t k = 0; k < ds.dims(); ++k) {
        const double e = r.reconstruction[t][k] - series[t][k];
        sum += e * e;
        count += 1.0;
      }
  }
  return sum / count;
}

// Central finite differences of scalar_loss with respect to every parameter.
inline Eigen::VectorXd finite_difference_gradient(hcaecs::AutoencoderModel model, const hcaecs::TimeSeriesDataset& ds,
                                                  double step = 1e-5) {
  Eigen::VectorXd g(model.parameters().size());
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    const double orig = model.parameters()[k];
    model.parameters()[k] = orig + step;
    const double up = scalar_loss(model, ds);
    model.parameters()[k] = orig - step;
    const double down = scalar_loss(model, ds);
    model.parameters()[k] = orig;
    g[k] = (up - down) / (2.0 * step);
  }
  return g;
}

// Symmetric matrix with zero diagonal and distinct random off-diagonals.
inline Eigen::MatrixXd random_distance_matrix(std::size_t m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 10.0);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = i + 1; j < d.cols(); ++j) d(i, j) = d(j, i) = u(rng);
  return d;
}

}  // namespace oracle
