#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "webtopic/error.hpp"
#include "webtopic/random.hpp"

namespace webtopic {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct PcaOptions {
  /// Largest min(n_samples, n_features) solved by a full eigen-decomposition;
  /// above it a seeded randomized subspace iteration is used.
  Eigen::Index exact_limit = 2000;
  Eigen::Index oversample = 10;
  int power_iterations = 7;
  std::uint64_t seed = 0;
};

/// Principal components ordered by descending explained variance.
struct PcaModel {
  Eigen::RowVectorXd mean;          // 1 x features
  Eigen::MatrixXd components;       // dim x features, orthonormal rows
  Eigen::VectorXd explained_variance;
  double total_variance = 0.0;

  Eigen::Index dim() const { return components.rows(); }

  Eigen::VectorXd explained_variance_ratio() const {
    if (total_variance <= 0.0) return Eigen::VectorXd::Zero(dim());
    return explained_variance / total_variance;
  }

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - mean) * components.transpose();
  }
  Eigen::MatrixXd transform(const SparseRowMatrix& x) const {
    Eigen::MatrixXd proj = x * components.transpose();
    const Eigen::RowVectorXd shift = mean * components.transpose();
    return proj.rowwise() - shift;
  }
  Eigen::MatrixXd inverse_transform(const Eigen::MatrixXd& z) const {
    return (z * components).rowwise() + mean;
  }
};

namespace detail {

// Flip signs so the largest-magnitude coordinate of each component is positive.
inline void canonicalize_signs(Eigen::MatrixXd& components) {
  for (Eigen::Index r = 0; r < components.rows(); ++r) {
    Eigen::Index arg = 0;
    components.row(r).cwiseAbs().maxCoeff(&arg);
    if (components(r, arg) < 0) components.row(r) *= -1.0;
  }
}

// Replaces rows of `basis` flagged invalid by vectors orthonormal to all others.
inline void complete_orthonormal(Eigen::MatrixXd& basis, const std::vector<bool>& valid) {
  const Eigen::Index d = basis.cols();
  Eigen::Index probe = 0;
  for (Eigen::Index r = 0; r < basis.rows(); ++r) {
    if (valid[static_cast<std::size_t>(r)]) continue;
    for (; probe < d; ++probe) {
      Eigen::RowVectorXd v = Eigen::RowVectorXd::Unit(d, probe);
      for (Eigen::Index q = 0; q < basis.rows(); ++q) {
        if (q == r || (!valid[static_cast<std::size_t>(q)] && q > r)) continue;
        v -= v.dot(basis.row(q)) * basis.row(q);
      }
      const double n = v.norm();
      if (n > 1e-8) {
        basis.row(r) = v / n;
        ++probe;
        break;
      }
    }
  }
}

// Exact solution from the (small) symmetric scatter matrix.
template <class Matrix>
PcaModel pca_exact(const Matrix& x, Eigen::Index dim, const Eigen::RowVectorXd& mean) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  PcaModel m;
  m.mean = mean;
  m.components.resize(dim, d);
  m.explained_variance.resize(dim);

  if (d <= n) {
    // covariance route: (X^T X - n mu^T mu) / (n - 1)
    Eigen::MatrixXd scatter = Eigen::MatrixXd(x.transpose() * x);
    scatter -= static_cast<double>(n) * mean.transpose() * mean;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scatter);
    if (es.info() != Eigen::Success) throw InvariantError("PCA eigen-decomposition failed");
    for (Eigen::Index i = 0; i < dim; ++i) {
      const Eigen::Index col = d - 1 - i;
      m.components.row(i) = es.eigenvectors().col(col).transpose();
      m.explained_variance(i) = std::max(0.0, es.eigenvalues()(col)) / denom;
    }
    m.total_variance = std::max(0.0, scatter.trace()) / denom;
  } else {
    // Gram route: eigenvectors u of A A^T map to axes A^T u / sqrt(lambda)
    Eigen::MatrixXd gram = Eigen::MatrixXd(x * x.transpose());
    const Eigen::VectorXd xm = x * mean.transpose();
    const double mm = mean.squaredNorm();
    gram.colwise() -= xm;
    gram.rowwise() -= xm.transpose();
    gram.array() += mm;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success) throw InvariantError("PCA eigen-decomposition failed");
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    std::vector<bool> valid(static_cast<std::size_t>(dim), true);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const Eigen::Index col = n - 1 - i;
      const double lambda = es.eigenvalues()(col);
      m.explained_variance(i) = std::max(0.0, lambda) / denom;
      if (lambda <= 1e-12 * scale) {
        valid[static_cast<std::size_t>(i)] = false;
        m.components.row(i).setZero();
        continue;
      }
      const Eigen::VectorXd u = es.eigenvectors().col(col);
      Eigen::RowVectorXd axis = (x.transpose() * u).transpose() - u.sum() * mean;
      m.components.row(i) = axis / std::sqrt(lambda);
    }
    complete_orthonormal(m.components, valid);
    m.total_variance = std::max(0.0, gram.trace()) / denom;
  }
  return m;
}

// Randomized subspace iteration on the implicitly centered matrix.
template <class Matrix>
PcaModel pca_randomized(const Matrix& x, Eigen::Index dim, const Eigen::RowVectorXd& mean,
                        const PcaOptions& opt) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Eigen::Index width = std::min<Eigen::Index>(dim + opt.oversample, std::min(n, d));
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);

  auto apply = [&](const Eigen::MatrixXd& v) -> Eigen::MatrixXd {  // A v, v: d x w
    Eigen::MatrixXd out = x * v;
    out -= ones * (mean * v);
    return out;
  };
  auto apply_t = [&](const Eigen::MatrixXd& u) -> Eigen::MatrixXd {  // A^T u, u: n x w
    Eigen::MatrixXd out = x.transpose() * u;
    out -= mean.transpose() * (ones.transpose() * u);
    return out;
  };
  auto orthonormalize = [](const Eigen::MatrixXd& m) -> Eigen::MatrixXd {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
  };

  Rng rng(opt.seed);
  Eigen::MatrixXd omega(d, width);
  for (Eigen::Index j = 0; j < width; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) omega(i, j) = rng.normal();
  }
  Eigen::MatrixXd q = orthonormalize(apply(omega));
  for (int it = 0; it < opt.power_iterations; ++it) {
    q = orthonormalize(apply(orthonormalize(apply_t(q))));
  }
  // B = Q^T A is width x d; its right singular vectors approximate the axes.
  const Eigen::MatrixXd bt = apply_t(q);  // d x width = B^T
  Eigen::MatrixXd small = bt.transpose() * bt;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(small);
  if (es.info() != Eigen::Success) throw InvariantError("PCA eigen-decomposition failed");

  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  PcaModel m;
  m.mean = mean;
  m.components.resize(dim, d);
  m.explained_variance.resize(dim);
  std::vector<bool> valid(static_cast<std::size_t>(dim), true);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const Eigen::Index col = width - 1 - i;
    const double lambda = es.eigenvalues()(col);
    m.explained_variance(i) = std::max(0.0, lambda) / denom;
    if (lambda <= 1e-12) {
      valid[static_cast<std::size_t>(i)] = false;
      m.components.row(i).setZero();
      continue;
    }
    m.components.row(i) = (bt * es.eigenvectors().col(col)).transpose() / std::sqrt(lambda);
  }
  complete_orthonormal(m.components, valid);

  double total = 0.0;
  if constexpr (std::is_base_of_v<Eigen::SparseMatrixBase<Matrix>, Matrix>) {
    total = x.squaredNorm() - static_cast<double>(n) * mean.squaredNorm();
  } else {
    total = (x.rowwise() - mean).squaredNorm();
  }
  m.total_variance = std::max(0.0, total) / denom;
  return m;
}

template <class Matrix>
Eigen::RowVectorXd column_mean(const Matrix& x) {
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
  if (x.rows() == 0) return mean;
  if constexpr (std::is_base_of_v<Eigen::SparseMatrixBase<Matrix>, Matrix>) {
    mean = Eigen::RowVectorXd(Eigen::VectorXd::Ones(x.rows()).transpose() * x);
  } else {
    mean = x.colwise().sum();
  }
  return mean / static_cast<double>(x.rows());
}

}  // namespace detail

/// Fits a PCA model with `dim` components. Requires 1 <= dim <= min(n, features).
template <class Matrix>
PcaModel pca_fit(const Matrix& x, Eigen::Index dim, const PcaOptions& opt = {}) {
  const Eigen::Index limit = std::min(x.rows(), x.cols());
  if (dim < 1 || dim > limit) {
    throw InputError("PCA dim " + std::to_string(dim) + " must be in [1, " +
                     std::to_string(limit) + "]");
  }
  const Eigen::RowVectorXd mean = detail::column_mean(x);
  PcaModel m = limit <= opt.exact_limit ? detail::pca_exact(x, dim, mean)
                                        : detail::pca_randomized(x, dim, mean, opt);
  detail::canonicalize_signs(m.components);
  return m;
}

/// Mean-centered projection onto the top `dim` principal components.
template <class Matrix>
Eigen::MatrixXd pca_reduce(const Matrix& x, Eigen::Index dim, const PcaOptions& opt = {}) {
  return pca_fit(x, dim, opt).transform(x);
}

}  // namespace webtopic
