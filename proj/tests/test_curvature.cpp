#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aeos/curvature.hpp"

using namespace aeos;

namespace {

Mat random_symmetric(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  const Mat G = Mat::NullaryExpr(n, n, [&] { return nd(rng); });
  return 0.5 * (G + G.transpose());
}

Mat random_spd(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  const Mat G = Mat::NullaryExpr(n, n, [&] { return nd(rng); });
  return G * G.transpose() / static_cast<double>(n) + 0.01 * Mat::Identity(n, n);
}

Vec random_positive(std::mt19937_64& rng, Eigen::Index n) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = std::pow(10.0, u(rng));
  return v;
}

}  // namespace

TEST(TopEigs, DiagonalOperator) {
  const auto est = top_eigs(matrix_operator(Vec{{3.0, 2.0, 1.0}}.asDiagonal().toDenseMatrix()), 3, 2);
  ASSERT_EQ(est.eigenvalues.size(), 2u);
  EXPECT_NEAR(est.eigenvalues[0], 3.0, 1e-12);
  EXPECT_NEAR(est.eigenvalues[1], 2.0, 1e-12);
  EXPECT_NEAR(std::abs(est.eigenvectors[0][0]), 1.0, 1e-10);
  EXPECT_NEAR(std::abs(est.eigenvectors[1][1]), 1.0, 1e-10);
  EXPECT_TRUE(est.converged);
}

TEST(TopEigs, MatchesDenseOnRandomSymmetric) {
  std::mt19937_64 rng(50);
  const Mat A = random_symmetric(rng, 50);
  Eigen::SelfAdjointEigenSolver<Mat> es(A);
  const auto est = top_eigs(matrix_operator(A), 50, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const double dense = es.eigenvalues()[49 - static_cast<Eigen::Index>(i)];
    EXPECT_NEAR(est.eigenvalues[i], dense, 1e-8 * std::abs(dense));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      EXPECT_LE(std::abs(est.eigenvectors[i].dot(est.eigenvectors[j])), 1e-8);
    }
    EXPECT_LE(est.residuals[i], 1e-6);
  }
  for (std::size_t i = 1; i < 4; ++i) EXPECT_GE(est.eigenvalues[i - 1], est.eigenvalues[i]);
}

TEST(TopEigs, LargeOperatorConvergesBeforeFullDimension) {
  std::mt19937_64 rng(51);
  // Well separated top of the spectrum.
  Vec d = Vec::LinSpaced(2000, 0.0, 1.0);
  d[0] = 5.0;
  d[1] = 3.0;
  auto op = [&](const Vec& v) -> Vec { return d.cwiseProduct(v); };
  const auto est = top_eigs(op, 2000, 2);
  EXPECT_TRUE(est.converged);
  EXPECT_LT(est.iterations_used, 200u);
  EXPECT_NEAR(est.eigenvalues[0], 5.0, 5e-6);
  EXPECT_NEAR(est.eigenvalues[1], 3.0, 3e-6);
}

TEST(TopEigs, RepeatedEigenvalueFoundTwice) {
  const Mat A = Vec{{3.0, 3.0, 1.0, 0.5}}.asDiagonal().toDenseMatrix();
  const auto est = top_eigs(matrix_operator(A), 4, 2);
  EXPECT_NEAR(est.eigenvalues[0], 3.0, 1e-12);
  EXPECT_NEAR(est.eigenvalues[1], 3.0, 1e-12);
}

TEST(TopEigs, SeedIndependence) {
  std::mt19937_64 rng(52);
  const Mat A = random_spd(rng, 300);
  TopEigsOptions a, b;
  a.seed = 1;
  b.seed = 2;
  const auto ea = top_eigs(matrix_operator(A), 300, 1, a);
  const auto eb = top_eigs(matrix_operator(A), 300, 1, b);
  EXPECT_NEAR(ea.eigenvalues[0], eb.eigenvalues[0], 10 * 1e-6 * ea.eigenvalues[0]);
}

TEST(TopEigs, DeterministicInSeed) {
  std::mt19937_64 rng(53);
  const Mat A = random_spd(rng, 100);
  const auto ea = top_eigs(matrix_operator(A), 100, 2);
  const auto eb = top_eigs(matrix_operator(A), 100, 2);
  EXPECT_EQ(ea.eigenvalues, eb.eigenvalues);
}

TEST(TopEigs, FlagsNonConvergence) {
  std::mt19937_64 rng(54);
  const Vec d = Vec::LinSpaced(5000, 0.0, 1.0);  // tiny gaps at the top
  auto op = [&](const Vec& v) -> Vec { return d.cwiseProduct(v); };
  TopEigsOptions opts;
  opts.max_iter = 10;
  const auto est = top_eigs(op, 5000, 1, opts);
  EXPECT_FALSE(est.converged);
  EXPECT_EQ(est.eigenvalues.size(), 1u);
  EXPECT_LE(est.eigenvalues[0], 1.0 + 1e-12);
}

TEST(TopEigs, RejectsAsymmetricOperator) {
  const Mat A{{1.0, 2.0}, {0.0, 1.0}};
  EXPECT_THROW(top_eigs(matrix_operator(A), 2, 1), std::invalid_argument);
  EXPECT_THROW(top_eigs(matrix_operator(Mat::Identity(2, 2)), 2, 3), std::invalid_argument);
}

TEST(Preconditioned, IdentityLeavesOperatorUnchanged) {
  std::mt19937_64 rng(60);
  const Mat A = random_symmetric(rng, 10);
  const auto op = preconditioned_operator(matrix_operator(A), Vec::Ones(10));
  const Vec v = Vec::Random(10);
  EXPECT_TRUE(op(v).isApprox(A * v, 1e-15));
}

TEST(Preconditioned, DiagonalAlgebra) {
  const Mat H = Vec{{8.0, 2.0}}.asDiagonal().toDenseMatrix();
  const auto est =
      top_eigs(preconditioned_operator(matrix_operator(H), Vec{{4.0, 1.0}}), 2, 2);
  EXPECT_NEAR(est.eigenvalues[0], 2.0, 1e-14);
  EXPECT_NEAR(est.eigenvalues[1], 2.0, 1e-14);
}

TEST(Preconditioned, RejectsNonPositive) {
  EXPECT_THROW(preconditioned_operator(matrix_operator(Mat::Identity(2, 2)), Vec{{1.0, 0.0}}),
               std::invalid_argument);
}

TEST(Preconditioned, SimilarToInverseTimesHessian) {
  std::mt19937_64 rng(61);
  for (Eigen::Index n : {5, 30, 50}) {
    const Mat H = random_symmetric(rng, n);
    const Vec P = random_positive(rng, n);
    // Dense oracle: eigenvalues of the nonsymmetric P^{-1} H.
    const Mat PinvH = P.cwiseInverse().asDiagonal() * H;
    Eigen::EigenSolver<Mat> dense(PinvH);
    std::vector<double> ref;
    for (Eigen::Index i = 0; i < n; ++i) ref.push_back(dense.eigenvalues()[i].real());
    std::sort(ref.rbegin(), ref.rend());

    const auto est = top_eigs(preconditioned_operator(matrix_operator(H), P),
                              static_cast<std::size_t>(n), 3);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(est.eigenvalues[i], ref[i], 1e-9 * std::abs(ref[i])) << "n=" << n << " i=" << i;
    }
  }
}

TEST(Alignment, ParallelAndOrthogonalGradients) {
  const Vec P{{4.0, 1.0, 9.0}};
  std::vector<Vec> eig{Vec{{1.0, 0.0, 0.0}}};
  // P^{1/2} g parallel to v1 when g = P^{-1/2} v1.
  const Vec g_par = P.cwiseSqrt().cwiseInverse().cwiseProduct(eig[0]);
  auto r = gradient_alignment(g_par, P, eig, 1);
  EXPECT_NEAR(r.total_energy, 1.0, 1e-15);
  EXPECT_NEAR(r.top_k_energy, 1.0, 1e-15);
  EXPECT_NEAR(r.remainder_energy, 0.0, 1e-15);

  r = gradient_alignment(Vec{{0.0, 1.0, 1.0}}, P, eig, 1);
  EXPECT_EQ(r.top_k_energy, 0.0);
  EXPECT_NEAR(r.remainder_energy, 10.0, 1e-14);
}

TEST(Alignment, MatchesDenseProjector) {
  std::mt19937_64 rng(62);
  const Eigen::Index n = 40;
  const Mat H = random_spd(rng, n);
  const Vec P = random_positive(rng, n);
  const auto est = top_eigs(preconditioned_operator(matrix_operator(H), P), 40, 4);
  const Vec g = Vec::Random(n);
  const auto r = gradient_alignment(g, P, est.eigenvectors, 4);

  Mat U(n, 4);
  for (Eigen::Index i = 0; i < 4; ++i) U.col(i) = est.eigenvectors[static_cast<std::size_t>(i)];
  const Mat proj = U * (U.transpose() * U).inverse() * U.transpose();
  const Vec s = P.cwiseSqrt().cwiseProduct(g);
  EXPECT_NEAR(r.total_energy, s.squaredNorm(), 1e-10 * s.squaredNorm());
  EXPECT_NEAR(r.top_k_energy, (proj * s).squaredNorm(), 1e-10 * s.squaredNorm());
  EXPECT_NEAR(r.remainder_energy, (s - proj * s).squaredNorm(), 1e-10 * s.squaredNorm());
  EXPECT_NEAR(r.top_k_energy + r.remainder_energy, r.total_energy, 1e-9 * r.total_energy);
}

TEST(Alignment, RejectsShapeMismatch) {
  EXPECT_THROW(gradient_alignment(Vec::Ones(3), Vec::Ones(2), {}, 4), std::invalid_argument);
  EXPECT_THROW(gradient_alignment(Vec::Ones(2), Vec::Ones(2), {Vec::Ones(3)}, 4),
               std::invalid_argument);
}
