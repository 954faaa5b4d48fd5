#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "cost.hpp"
#include "test_util.hpp"

using namespace sensdecay;

namespace {

// Direct evaluation of the chain functional as a sum, independent of the
// block-matrix assembly: sum y_i^2 + gamma v_i^2 + sum (y_{i+1}-y_i)^2 + delta |u|^2.
double chain_sum_form(int s, double gamma, double delta, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& u) {
  double acc = 0.0;
  for (int i = 0; i < s; ++i) acc += x[2 * i] * x[2 * i] + gamma * x[2 * i + 1] * x[2 * i + 1];
  for (int i = 0; i + 1 < s; ++i) {
    const double d = x[2 * (i + 1)] - x[2 * i];
    acc += d * d;
  }
  return acc + delta * u.squaredNorm();
}

}  // namespace

TEST_CASE("stage cost basics") {
  QuadraticCost cost({2}, {Eigen::MatrixXd::Identity(1, 1)});
  cost.set_state_block(1, 1, Eigen::MatrixXd::Identity(2, 2));

  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
  CHECK(cost.stage_cost(x, u) == 0.0);

  x << 1.0, 1.0;
  u << 2.0;
  CHECK(cost.stage_cost(x, u) == doctest::Approx(6.0));

  Eigen::VectorXd bad = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS((void)cost.stage_cost(bad, u), Error);
}

TEST_CASE("two-vehicle chain cost matches the hand-evaluated functional") {
  const auto cost = build_chain_cost(2, 0.1, 0.1);
  Eigen::VectorXd x(4), u(2);
  x << 1.0, 0.0, 1.0, 0.0;
  u.setZero();
  CHECK(cost.stage_cost(x, u) == doctest::Approx(2.0));

  const Eigen::MatrixXd q = cost.dense_state_matrix();
  CHECK(q(0, 0) == doctest::Approx(2.0));
  CHECK(q(2, 2) == doctest::Approx(2.0));
  CHECK(q(1, 1) == doctest::Approx(0.1));
  CHECK(q(3, 3) == doctest::Approx(0.1));
  CHECK(q(0, 2) == doctest::Approx(-1.0));
  CHECK(q(2, 0) == doctest::Approx(-1.0));
  CHECK(q(0, 1) == 0.0);
  CHECK(cost.dense_control_matrix().isApprox(0.1 * Eigen::MatrixXd::Identity(2, 2)));
}

TEST_CASE("chain cost equals the sum form on random samples") {
  std::mt19937 rng(7);
  for (int s : {2, 5, 25}) {
    const auto cost = build_chain_cost(s, 0.1, 0.1);
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd x = testutil::random_vector(rng, 2 * s, 2.0);
      const Eigen::VectorXd u = testutil::random_vector(rng, s, 2.0);
      const double block = cost.stage_cost(x, u);
      const double direct = chain_sum_form(s, 0.1, 0.1, x, u);
      CHECK(block == doctest::Approx(direct).epsilon(1e-12));
    }
  }
}

TEST_CASE("chain cost rejects degenerate parameters") {
  CHECK_THROWS_AS((void)build_chain_cost(1, 0.1, 0.1), Error);
  CHECK_THROWS_AS((void)build_chain_cost(3, 0.0, 0.1), Error);
  CHECK_THROWS_AS((void)build_chain_cost(3, 0.1, -1.0), Error);
}

TEST_CASE("control blocks must be symmetric positive definite") {
  Eigen::MatrixXd bad(1, 1);
  bad << 0.0;
  CHECK_THROWS_AS(QuadraticCost({1}, {bad}), Error);
  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS_AS(QuadraticCost({1}, {asym}), Error);
}

TEST_CASE("spectral bounds of a scaled identity") {
  QuadraticCost cost({2}, {Eigen::MatrixXd::Identity(1, 1)});
  cost.set_state_block(1, 1, 2.0 * Eigen::MatrixXd::Identity(2, 2));
  const auto sb = spectral_bounds(cost);
  CHECK(sb.q_min_eig == doctest::Approx(2.0));
  CHECK(sb.q_max_eig == doctest::Approx(2.0));
  CHECK(sb.r_max_eig == doctest::Approx(1.0));
}

TEST_CASE("two-vehicle chain: velocity weight is the smallest eigenvalue") {
  const auto sb = spectral_bounds(build_chain_cost(2, 0.1, 0.1));
  // dense oracle: position block {{2,-1},{-1,2}} has eigenvalues {1,3};
  // velocity entries decouple at 0.1 < 1
  CHECK(sb.q_min_eig == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(sb.q_max_eig == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(sb.r_max_eig == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("chain of 25 matches an independently assembled dense eigensolve") {
  const int s = 25;
  const auto cost = build_chain_cost(s, 0.1, 0.1);
  const auto sb = spectral_bounds(cost);

  // Assemble the matrix from the sum form instead of reusing the block path.
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2 * s, 2 * s);
  for (int i = 0; i < s; ++i) {
    q(2 * i, 2 * i) += 1.0;
    q(2 * i + 1, 2 * i + 1) += 0.1;
  }
  for (int i = 0; i + 1 < s; ++i) {
    q(2 * i, 2 * i) += 1.0;
    q(2 * (i + 1), 2 * (i + 1)) += 1.0;
    q(2 * i, 2 * (i + 1)) -= 1.0;
    q(2 * (i + 1), 2 * i) -= 1.0;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
  CHECK(sb.q_min_eig == doctest::Approx(es.eigenvalues().minCoeff()).epsilon(1e-8));
  CHECK(sb.q_max_eig == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-8));
}

TEST_CASE("power-iteration path agrees with the dense path") {
  const auto cost = build_chain_cost(10, 0.1, 0.1);
  const auto dense = spectral_bounds(cost);
  SpectralOptions iterative;
  iterative.dense_cutoff = 0;  // force the matrix-free path
  const auto cost2 = build_chain_cost(10, 0.1, 0.1);
  const auto pi = spectral_bounds(cost2, iterative);
  CHECK(pi.q_max_eig == doctest::Approx(dense.q_max_eig).epsilon(1e-6));
  CHECK(pi.q_min_eig == doctest::Approx(dense.q_min_eig).epsilon(1e-6));
}

TEST_CASE("indefinite state cost is refused") {
  QuadraticCost cost({2}, {Eigen::MatrixXd::Identity(1, 1)});
  Eigen::MatrixXd q(2, 2);
  q << 1.0, 0.0, 0.0, -0.5;
  cost.set_state_block(1, 1, q);
  CHECK_THROWS_AS((void)spectral_bounds(cost), Error);
}

TEST_CASE("eigenvalue sandwich and operator bounds on random samples") {
  std::mt19937 rng(11);
  const auto cost = build_chain_cost(5, 0.1, 0.1);
  const auto sb = spectral_bounds(cost);
  const Eigen::MatrixXd q = cost.dense_state_matrix();
  const Eigen::MatrixXd r = cost.dense_control_matrix();

  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::VectorXd x = testutil::random_vector(rng, 10, 3.0);
    const double quad = x.dot(q * x);
    CHECK(quad >= sb.q_min_eig * x.squaredNorm() - 1e-9);
    CHECK(quad <= sb.q_max_eig * x.squaredNorm() + 1e-9);
    CHECK((q * x).norm() <= sb.q_max_eig * x.norm() + 1e-9);
  }
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::VectorXd u = testutil::random_vector(rng, 5, 3.0);
    CHECK((r * u).norm() <= sb.r_max_eig * u.norm() + 1e-9);
  }
}

TEST_CASE("stage cost is positive away from the origin") {
  std::mt19937 rng(13);
  const auto cost = build_chain_cost(4, 0.1, 0.1);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd x = testutil::random_vector(rng, 8, 1.0);
    Eigen::VectorXd u = testutil::random_vector(rng, 4, 1.0);
    if (x.norm() + u.norm() == 0.0) continue;
    CHECK(cost.stage_cost(x, u) > 0.0);
  }
}

TEST_CASE("blockwise evaluation equals the dense matrices") {
  std::mt19937 rng(17);
  const auto cost = build_chain_cost(6, 0.3, 0.2);
  const Eigen::MatrixXd q = cost.dense_state_matrix();
  const Eigen::MatrixXd r = cost.dense_control_matrix();
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd x = testutil::random_vector(rng, 12, 2.0);
    const Eigen::VectorXd u = testutil::random_vector(rng, 6, 2.0);
    CHECK(cost.stage_cost(x, u) ==
          doctest::Approx(x.dot(q * x) + u.dot(r * u)).epsilon(1e-12));
    Eigen::VectorXd qx(12), ru(6);
    cost.apply_state_matrix(x, qx);
    cost.apply_control_matrix(u, ru);
    CHECK((qx - q * x).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK((ru - r * u).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}
