#pragma once

// Chebyshev, Manhattan and Mahalanobis kernels over row vectors, the pooled
// covariance model the Mahalanobis kernel needs, and full distance matrices.

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hcaecs/detail/text.hpp"
#include "hcaecs/error.hpp"

namespace hcaecs {

enum class MeasureKind { chebyshev, manhattan, mahalanobis };

inline constexpr MeasureKind kAllMeasures[] = {MeasureKind::chebyshev, MeasureKind::manhattan,
                                                MeasureKind::mahalanobis};

inline std::string to_string(MeasureKind kind) {
  switch (kind) {
    case MeasureKind::chebyshev: return "CH";
    case MeasureKind::manhattan: return "MA";
    case MeasureKind::mahalanobis: return "ML";
  }
  return "?";
}

inline MeasureKind parse_measure(std::string_view name) {
  if (name == "CH" || name == "ch" || name == "chebyshev") return MeasureKind::chebyshev;
  if (name == "MA" || name == "ma" || name == "manhattan") return MeasureKind::manhattan;
  if (name == "ML" || name == "ml" || name == "mahalanobis") return MeasureKind::mahalanobis;
  throw ConfigError("unknown distance measure '" + std::string(name) + "'");
}

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline void check_same_length(Eigen::Index a, Eigen::Index b) {
  if (a != b) throw ShapeError("vector lengths differ: " + std::to_string(a) + " vs " + std::to_string(b));
}

inline double chebyshev(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
  check_same_length(x.size(), y.size());
  double best = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) best = std::max(best, std::abs(x[k] - y[k]));
  return best;
}

inline double manhattan(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
  check_same_length(x.size(), y.size());
  double sum = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) sum += std::abs(x[k] - y[k]);
  return sum;
}

// Covariance C (p x p) together with the (pseudo)inverse of C + ridge*I and a
// whitening factor W with W W^T = inverse, so that d_ML(x, y) = |W^T (x - y)|.
class CovarianceModel {
public:
  static constexpr double kConditionLimit = 1e12;

  // `ridge` is the absolute value added to the diagonal.
  static CovarianceModel from_matrix(Matrix covariance, double ridge = 0.0) {
    if (covariance.rows() != covariance.cols() || covariance.rows() == 0)
      throw ShapeError("covariance must be a non-empty square matrix");
    if (!covariance.allFinite()) throw NumericError("covariance has non-finite entries");
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, covariance.cwiseAbs().maxCoeff()))
      throw ValidationError("covariance is not symmetric");
    if (ridge < 0.0) throw ConfigError("ridge must be non-negative");

    CovarianceModel out;
    out.covariance_ = std::move(covariance);
    out.ridge_ = ridge;
    const auto p = out.covariance_.rows();
    Matrix regularized = out.covariance_ + ridge * Matrix::Identity(p, p);
    regularized = (0.5 * (regularized + regularized.transpose())).eval();

    Eigen::SelfAdjointEigenSolver<Matrix> eig(regularized);
    if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition of covariance failed");
    const Vector& ev = eig.eigenvalues();
    const double max_ev = ev.cwiseAbs().maxCoeff();
    const double min_ev = ev.minCoeff();
    out.pseudo_inverse_ = !(min_ev > 0.0) || max_ev / min_ev > kConditionLimit;

    Vector inv_ev(p);
    const double tol = static_cast<double>(p) * std::numeric_limits<double>::epsilon() * max_ev;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (out.pseudo_inverse_)
        inv_ev[k] = ev[k] > tol ? 1.0 / ev[k] : 0.0;
      else
        inv_ev[k] = 1.0 / ev[k];
    }
    const Matrix& v = eig.eigenvectors();
    out.inverse_ = v * inv_ev.asDiagonal() * v.transpose();
    out.inverse_ = (0.5 * (out.inverse_ + out.inverse_.transpose())).eval();
    out.whitening_ = v * inv_ev.cwiseSqrt().asDiagonal();

    detail::Fnv1a h;
    h.update_value(p);
    h.update(out.covariance_.data(), static_cast<std::size_t>(out.covariance_.size()) * sizeof(double));
    h.update_value(ridge);
    out.fingerprint_ = h.hex();
    return out;
  }

  Eigen::Index dim() const { return covariance_.rows(); }
  const Matrix& covariance() const { return covariance_; }
  const Matrix& inverse() const { return inverse_; }
  const Matrix& whitening() const { return whitening_; }
  double ridge() const { return ridge_; }
  bool used_pseudo_inverse() const { return pseudo_inverse_; }
  const std::string& fingerprint() const { return fingerprint_; }

private:
  Matrix covariance_;
  Matrix inverse_;
  Matrix whitening_;
  double ridge_ = 0.0;
  bool pseudo_inverse_ = false;
  std::string fingerprint_;
};

inline constexpr double kDefaultRidge = 1e-6;

// Pooled sample covariance over all rows (divide by M - 1). The ridge added to
// the diagonal is `relative_ridge` times the mean diagonal of C (or the bare
// value when that mean is 0).
inline CovarianceModel fit_covariance(const Matrix& rows, double relative_ridge = kDefaultRidge) {
  if (rows.rows() < 2) throw ShapeError("covariance needs at least 2 rows");
  if (rows.cols() < 1) throw ShapeError("covariance needs at least 1 column");
  if (relative_ridge < 0.0) throw ConfigError("ridge must be non-negative");
  const Vector mean = rows.colwise().mean();
  const Matrix centred = rows.rowwise() - mean.transpose();
  Matrix cov = (centred.transpose() * centred) / static_cast<double>(rows.rows() - 1);
  cov = (0.5 * (cov + cov.transpose())).eval();
  const double mean_diag = cov.diagonal().mean();
  const double ridge = relative_ridge * (mean_diag > 0.0 ? mean_diag : 1.0);
  return CovarianceModel::from_matrix(std::move(cov), ridge);
}

inline double mahalanobis(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                          const CovarianceModel& cov) {
  check_same_length(x.size(), y.size());
  if (x.size() != cov.dim())
    throw ShapeError("vector length " + std::to_string(x.size()) + " does not match covariance dimension " +
                     std::to_string(cov.dim()));
  const Vector diff = x - y;
  const double q = diff.dot(cov.inverse() * diff);
  return std::sqrt(std::max(q, 0.0));
}

struct DistanceMeasure {
  MeasureKind kind = MeasureKind::chebyshev;
  std::optional<CovarianceModel> covariance;

  static DistanceMeasure chebyshev() { return {MeasureKind::chebyshev, std::nullopt}; }
  static DistanceMeasure manhattan() { return {MeasureKind::manhattan, std::nullopt}; }
  static DistanceMeasure mahalanobis(CovarianceModel cov) { return {MeasureKind::mahalanobis, std::move(cov)}; }

  double operator()(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) const {
    switch (kind) {
      case MeasureKind::chebyshev: return hcaecs::chebyshev(x, y);
      case MeasureKind::manhattan: return hcaecs::manhattan(x, y);
      case MeasureKind::mahalanobis:
        if (!covariance) throw ConfigError("Mahalanobis measure requires a covariance model");
        return hcaecs::mahalanobis(x, y, *covariance);
    }
    return 0.0;
  }
};

namespace detail {

// Evaluates every pair i < j once over the contiguous per-item columns of
// `items` (p x M), in cache-sized tiles.
template <class Kernel>
Matrix pairwise(const Matrix& items, Kernel kernel) {
  const Eigen::Index m = items.cols();
  const Eigen::Index p = items.rows();
  constexpr Eigen::Index tile = 64;
  Matrix dist(m, m);
  for (Eigen::Index jb = 0; jb < m; jb += tile)
    for (Eigen::Index ib = jb; ib < m; ib += tile)
      for (Eigen::Index j = jb; j < std::min(jb + tile, m); ++j) {
        const double* y = items.data() + j * p;
        for (Eigen::Index i = std::max(ib, j + 1); i < std::min(ib + tile, m); ++i) {
          const double v = kernel(items.data() + i * p, y, static_cast<std::size_t>(p));
          dist(i, j) = v;
          dist(j, i) = v;
        }
      }
  dist.diagonal().setZero();
  return dist;
}

}  // namespace detail

// Symmetric M x M matrix with an exact zero diagonal. Mahalanobis distances
// go through the whitened rows, which is O(M^2 p) instead of O(M^2 p^2).
inline Matrix distance_matrix(const Matrix& rows, const DistanceMeasure& measure) {
  Matrix dist;
  switch (measure.kind) {
    case MeasureKind::chebyshev:
      dist = detail::pairwise(rows.transpose(), [](const double* x, const double* y, std::size_t p) {
        double best = 0.0;
        for (std::size_t k = 0; k < p; ++k) best = std::max(best, std::abs(x[k] - y[k]));
        return best;
      });
      break;
    case MeasureKind::manhattan:
      dist = detail::pairwise(rows.transpose(), [](const double* x, const double* y, std::size_t p) {
        double sum = 0.0;
        for (std::size_t k = 0; k < p; ++k) sum += std::abs(x[k] - y[k]);
        return sum;
      });
      break;
    case MeasureKind::mahalanobis:
      if (!measure.covariance) throw ConfigError("Mahalanobis measure requires a covariance model");
      if (rows.cols() != measure.covariance->dim())
        throw ShapeError("row width " + std::to_string(rows.cols()) + " does not match covariance dimension " +
                         std::to_string(measure.covariance->dim()));
      dist = detail::pairwise((rows * measure.covariance->whitening()).transpose(),
                              [](const double* x, const double* y, std::size_t p) {
                                double sum = 0.0;
                                for (std::size_t k = 0; k < p; ++k) sum += (x[k] - y[k]) * (x[k] - y[k]);
                                return std::sqrt(sum);
                              });
      break;
  }
  if (!dist.allFinite()) throw NumericError("distance matrix has non-finite entries");
  return dist;
}

// Row-major CSV with a `series_id,0,1,...` header.
inline void write_distance_csv(const Matrix& dist, std::ostream& out) {
  out << "series_id";
  for (Eigen::Index j = 0; j < dist.cols(); ++j) out << ',' << j;
  out << '\n';
  for (Eigen::Index i = 0; i < dist.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < dist.cols(); ++j) out << ',' << detail::format_double(dist(i, j));
    out << '\n';
  }
}

}  // namespace hcaecs
