#pragma once

// Top eigenpairs of symmetric linear operators given only matrix-vector
// products (Hessians via HVPs), the symmetrized preconditioned Hessian, and the
// decomposition of the semi-preconditioned gradient onto top eigenvectors.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "aeos/optimizers.hpp"

namespace aeos {

using LinearOperator = std::function<Vec(const Vec&)>;

struct EigenEstimate {
  std::vector<double> eigenvalues;  // descending
  std::vector<Vec> eigenvectors;    // orthonormal, same order
  std::vector<double> residuals;    // ||H v - lambda v|| / |lambda|
  std::size_t iterations_used = 0;  // operator applications inside the Krylov loop
  bool converged = false;
};

struct TopEigsOptions {
  double tol = 1e-6;
  std::size_t max_iter = 300;  // maximum Krylov dimension
  std::uint64_t seed = 0;
  bool check_symmetry = true;
  std::optional<Vec> start;    // warm start (e.g. the previous top eigenvector)
};

namespace detail {

inline Vec random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v.normalized();
}

inline void orthogonalize(Vec& w, const std::vector<Vec>& basis) {
  // Two passes of classical Gram-Schmidt.
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& q : basis) w -= q.dot(w) * q;
  }
}

inline double relative_residual(double lambda, const Vec& hv, const Vec& v) {
  const double r = (hv - lambda * v).norm();
  return lambda != 0.0 ? r / std::abs(lambda) : r;
}

}  // namespace detail

/// Verifies u^T (H v) == v^T (H u) on `pairs` random pairs; throws if not.
inline void check_operator_symmetry(const LinearOperator& op, std::size_t dim, std::uint64_t seed,
                                    int pairs = 3, double rel_tol = 1e-8) {
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  for (int i = 0; i < pairs; ++i) {
    const Vec u = detail::random_unit(dim, rng);
    const Vec v = detail::random_unit(dim, rng);
    const Vec hu = op(u), hv = op(v);
    const double lhs = u.dot(hv), rhs = v.dot(hu);
    const double scale = hu.norm() + hv.norm() + 1e-300;
    if (std::abs(lhs - rhs) > rel_tol * scale) {
      throw std::invalid_argument("operator is not symmetric");
    }
  }
}

/// Top-k algebraic eigenpairs by Lanczos with full reorthogonalization. When the
/// Krylov space becomes invariant before k pairs converge, the iteration
/// continues from a fresh random vector orthogonal to everything found so far,
/// which also picks up repeated eigenvalues. Ties keep the order in which the
/// tridiagonal solver reports them.
inline EigenEstimate top_eigs(const LinearOperator& op, std::size_t dim, std::size_t k,
                              const TopEigsOptions& opts = {}) {
  if (dim == 0) throw std::invalid_argument("top_eigs: dim must be positive");
  if (k == 0 || k > dim) throw std::invalid_argument("top_eigs: need 1 <= k <= dim");
  if (opts.check_symmetry) check_operator_symmetry(op, dim, opts.seed);

  std::mt19937_64 rng(opts.seed);
  const std::size_t max_dim = std::min(dim, std::max(opts.max_iter, k));

  std::vector<Vec> basis;
  std::vector<double> alpha, beta;  // beta[j] couples basis[j] and basis[j+1]
  basis.reserve(max_dim);

  Vec q;
  if (opts.start && opts.start->size() == static_cast<Eigen::Index>(dim) && opts.start->norm() > 0) {
    q = opts.start->normalized();
  } else {
    q = detail::random_unit(dim, rng);
  }

  EigenEstimate est;
  Eigen::VectorXd theta;
  Eigen::MatrixXd S;
  std::size_t next_explicit_check = 0;

  auto ritz = [&] {
    const auto m = static_cast<Eigen::Index>(alpha.size());
    Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd sub(std::max<Eigen::Index>(m - 1, 0));
    for (Eigen::Index i = 0; i + 1 < m; ++i) sub[i] = beta[static_cast<std::size_t>(i)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    // Ascending from Eigen; flip to descending with a stable order.
    theta = es.eigenvalues().reverse();
    S = es.eigenvectors().rowwise().reverse();
  };

  auto finalize = [&](std::size_t kk) {
    est.eigenvalues.clear();
    est.eigenvectors.clear();
    est.residuals.clear();
    Eigen::MatrixXd V(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(basis.size()));
    for (std::size_t j = 0; j < basis.size(); ++j) V.col(static_cast<Eigen::Index>(j)) = basis[j];
    for (std::size_t i = 0; i < kk; ++i) {
      Vec y = V * S.col(static_cast<Eigen::Index>(i)).head(static_cast<Eigen::Index>(basis.size()));
      y.normalize();
      const double lam = theta[static_cast<Eigen::Index>(i)];
      est.eigenvalues.push_back(lam);
      est.residuals.push_back(detail::relative_residual(lam, op(y), y));
      est.eigenvectors.push_back(std::move(y));
    }
  };

  while (basis.size() < max_dim) {
    basis.push_back(q);
    Vec w = op(q);
    ++est.iterations_used;
    const double a = q.dot(w);
    alpha.push_back(a);
    detail::orthogonalize(w, basis);
    const double b = w.norm();
    const std::size_t m = basis.size();

    ritz();
    const double scale = std::max(std::abs(theta[0]), std::abs(theta[theta.size() - 1]));
    const bool invariant = b <= 1e-12 * std::max(scale, 1e-300) || m == dim;

    if (m >= k) {
      bool all_small = true;
      for (std::size_t i = 0; i < k; ++i) {
        const double lam = theta[static_cast<Eigen::Index>(i)];
        const double r = std::abs(b * S(static_cast<Eigen::Index>(m - 1), static_cast<Eigen::Index>(i)));
        if (r > opts.tol * std::max(std::abs(lam), 1e-300)) all_small = false;
      }
      // An invariant subspace may hide further copies of a repeated
      // eigenvalue, so it never counts as convergence on its own.
      if ((all_small && !invariant && m >= next_explicit_check) || m == dim) {
        finalize(k);
        const bool verified = std::all_of(est.residuals.begin(), est.residuals.end(),
                                          [&](double r) { return r <= opts.tol; });
        if (verified || m == dim) break;
        next_explicit_check = m + std::max<std::size_t>(5, m / 10);
      }
    }
    if (basis.size() >= max_dim) break;

    if (invariant) {
      // The Krylov space is invariant: continue from a fresh direction.
      q = detail::random_unit(dim, rng);
      detail::orthogonalize(q, basis);
      const double qn = q.norm();
      if (qn < 1e-8) break;
      q /= qn;
      beta.push_back(0.0);
    } else {
      q = w / b;
      beta.push_back(b);
    }
  }

  if (est.eigenvalues.size() != k) {
    ritz();
    finalize(std::min(k, basis.size()));
  }
  est.converged = std::all_of(est.residuals.begin(), est.residuals.end(),
                              [&](double r) { return r <= opts.tol; }) &&
                  est.eigenvalues.size() == k;
  return est;
}

/// v -> P^{-1/2} H P^{-1/2} v. Symmetric, with the same eigenvalues as P^{-1} H.
inline LinearOperator preconditioned_operator(LinearOperator hvp, const Vec& P) {
  if ((P.array() <= 0.0).any()) {
    throw std::invalid_argument("preconditioner diagonal must be positive");
  }
  Vec s = P.array().rsqrt().matrix();
  return [hvp = std::move(hvp), s = std::move(s)](const Vec& v) -> Vec {
    if (v.size() != s.size()) throw std::invalid_argument("operator size mismatch");
    return s.cwiseProduct(hvp(s.cwiseProduct(v)));
  };
}

/// Dense symmetric matrix as an operator.
inline LinearOperator matrix_operator(Eigen::MatrixXd A) {
  return [A = std::move(A)](const Vec& v) -> Vec { return A * v; };
}

struct AlignmentReport {
  double total_energy = 0.0;      // ||P^{1/2} g||^2
  double top_k_energy = 0.0;      // part inside span(top-k eigenvectors)
  double remainder_energy = 0.0;  // part orthogonal to it
};

/// Splits the semi-preconditioned gradient s = P^{1/2} g into its projection on
/// the first k eigenvectors (as returned by top_eigs on the symmetrized
/// preconditioned operator) and the remainder.
inline AlignmentReport gradient_alignment(const Vec& gradient, const Vec& P,
                                          const std::vector<Vec>& eigenvectors,
                                          std::size_t k = 4) {
  if (gradient.size() != P.size()) throw std::invalid_argument("alignment: P shape mismatch");
  for (const auto& v : eigenvectors) {
    if (v.size() != gradient.size()) throw std::invalid_argument("alignment: eigenvector shape mismatch");
  }
  if ((P.array() < 0.0).any()) throw std::invalid_argument("alignment: P must be nonnegative");
  const Vec s = P.array().sqrt().matrix().cwiseProduct(gradient);
  AlignmentReport r;
  r.total_energy = s.squaredNorm();
  Vec rest = s;
  const std::size_t kk = std::min(k, eigenvectors.size());
  for (std::size_t i = 0; i < kk; ++i) {
    const double c = eigenvectors[i].dot(s);
    r.top_k_energy += c * c;
    rest -= c * eigenvectors[i];
  }
  r.remainder_energy = rest.squaredNorm();
  return r;
}

}  // namespace aeos
