#include <doctest.h>

#include <cmath>
#include <random>

#include "solver.hpp"
#include "test_util.hpp"

using namespace sensdecay;

namespace {

OcpProblem vehicle_chain_problem(int s, double x0_pos, double x0_vel, int source, double h,
                                 int horizon) {
  std::vector<SubsystemDynamics> subs(s, vehicle_dynamics({5.0, 10.0}));
  OcpProblem p{AggregateDynamics(std::move(subs)),
               build_chain_cost(s, 0.1, 0.1),
               Eigen::VectorXd::Zero(2 * s),
               std::nullopt,
               h,
               horizon,
               10.0};
  p.initial_state[2 * (source - 1)] = x0_pos;
  p.initial_state[2 * (source - 1) + 1] = x0_vel;
  return p;
}

// Closed-form stabilizing solution of a p^2 b^2 / r - 2 a p - q = 0 for the
// scalar regulator xdot = a x + b u with stage cost q x^2 + r u^2.
double scalar_care(double a, double b, double q, double r) {
  return r * (a + std::sqrt(a * a + b * b * q / r)) / (b * b);
}

OcpProblem scalar_lq_problem(double x0, double h, int horizon) {
  QuadraticCost cost({1}, {Eigen::MatrixXd::Identity(1, 1)});
  cost.set_state_block(1, 1, Eigen::MatrixXd::Identity(1, 1));
  OcpProblem p{AggregateDynamics({testutil::scalar_integrator()}),
               std::move(cost),
               Eigen::VectorXd::Constant(1, x0),
               std::nullopt,
               h,
               horizon,
               10.0};
  return p;
}

}  // namespace

TEST_CASE("zero initial state: zero control is already optimal") {
  auto p = vehicle_chain_problem(2, 0.0, 0.0, 1, 0.05, 20);
  const auto sol = solve_finite_horizon(p, Eigen::MatrixXd::Zero(2, 20));
  CHECK(sol.converged);
  CHECK(sol.objective == 0.0);
  CHECK(sol.controls.cwiseAbs().maxCoeff() == 0.0);

  const auto report = solve_mpc(p, 1e-4, 100);
  CHECK(report.mpc_steps == 0);
  CHECK(report.converged);
  CHECK(report.trajectory.controls.size() == 0);
}

TEST_CASE("guess with the wrong shape is rejected") {
  auto p = vehicle_chain_problem(2, 1.0, 0.0, 1, 0.05, 20);
  CHECK_THROWS_AS((void)solve_finite_horizon(p, Eigen::MatrixXd::Zero(2, 19)), Error);
  CHECK_THROWS_AS((void)solve_finite_horizon(p, Eigen::MatrixXd::Zero(3, 20)), Error);
}

TEST_CASE("adjoint gradient matches central finite differences") {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int s = 1 + static_cast<int>(unit(rng) * 3.0) % 3;
    const int horizon = 5 + static_cast<int>(unit(rng) * 16.0) % 16;
    const double h = 0.02 + 0.08 * unit(rng);
    const VehicleDragParams params{0.5 + 5.5 * unit(rng), 10.0 * unit(rng)};
    std::vector<SubsystemDynamics> subs(s, vehicle_dynamics(params));
    AggregateDynamics dyn(std::move(subs));
    auto cost = build_chain_cost(std::max(2, s), 0.05 + unit(rng), 0.05 + unit(rng));
    // for s = 1 fall back to a single-node quadratic cost
    QuadraticCost single({2}, {0.3 * Eigen::MatrixXd::Identity(1, 1)});
    single.set_state_block(1, 1, Eigen::Matrix2d{{1.5, 0.0}, {0.0, 0.4}});
    const QuadraticCost& used = s == 1 ? single : cost;
    if (s != 1) REQUIRE(used.node_count() == s);

    const StageCostModel model = quadratic_stage_model(used, 5.0 * unit(rng));
    const Eigen::VectorXd x0 = testutil::random_vector(rng, 2 * s, 1.0);
    Eigen::MatrixXd u(s, horizon);
    for (int k = 0; k < horizon; ++k) u.col(k) = testutil::random_vector(rng, s, 1.0);

    const Eigen::MatrixXd g = transcription_gradient(dyn, model, x0, h, u);
    Eigen::MatrixXd g_fd(s, horizon);
    const double step = 1e-6;
    for (int k = 0; k < horizon; ++k) {
      for (int i = 0; i < s; ++i) {
        Eigen::MatrixXd up = u, um = u;
        up(i, k) += step;
        um(i, k) -= step;
        g_fd(i, k) = (transcription_objective(dyn, model, x0, h, up) -
                      transcription_objective(dyn, model, x0, h, um)) /
                     (2.0 * step);
      }
    }
    const double rel = (g - g_fd).norm() / std::max(1.0, g.norm());
    CHECK(rel <= 1e-5);
  }
}

TEST_CASE("objective is non-increasing across inner iterations") {
  auto p = vehicle_chain_problem(3, 1.0, 1.0, 2, 0.05, 30);
  InnerSolveOptions opts;
  opts.record_trace = true;
  const auto sol = solve_finite_horizon(p, Eigen::MatrixXd::Zero(3, 30), opts);
  REQUIRE(sol.objective_trace.size() >= 2);
  for (std::size_t i = 1; i < sol.objective_trace.size(); ++i) {
    CHECK(sol.objective_trace[i] <= sol.objective_trace[i - 1] + 1e-15);
  }
  CHECK(sol.converged);
}

TEST_CASE("scalar regulator reaches the closed-form optimum") {
  // xdot = u, cost x^2 + u^2: the algebraic solution gives value 1 for x0 = 1
  const double p_star = scalar_care(0.0, 1.0, 1.0, 1.0);
  REQUIRE(p_star == doctest::Approx(1.0));

  auto p = scalar_lq_problem(1.0, 0.01, 800);
  const auto sol = solve_finite_horizon(p, Eigen::MatrixXd::Zero(1, 800));
  CHECK(std::abs(sol.objective - p_star) / p_star <= 0.02);
  CHECK(sol.controls(0, 0) == doctest::Approx(-1.0).epsilon(0.05));  // u* = -P x
}

TEST_CASE("scalar regulator under receding horizon decays monotonically") {
  auto p = scalar_lq_problem(1.0, 0.01, 100);
  const auto report = solve_mpc(p, 1e-3, 2000);
  CHECK(report.converged);
  const auto& x = report.trajectory.states;
  for (int k = 0; k < report.mpc_steps; ++k) {
    CHECK(std::abs(x(0, k + 1)) < std::abs(x(0, k)));
  }
}

TEST_CASE("controlled vehicle beats the uncontrolled rollout") {
  QuadraticCost single({2}, {0.1 * Eigen::MatrixXd::Identity(1, 1)});
  single.set_state_block(1, 1, Eigen::Matrix2d{{1.0, 0.0}, {0.0, 0.1}});
  Eigen::VectorXd x0(2);
  x0 << 1.0, 1.0;
  OcpProblem p{AggregateDynamics({vehicle_dynamics({5.0, 10.0})}),
               std::move(single),
               x0,
               std::nullopt,
               0.05,
               60,
               10.0};

  const StageCostModel model = quadratic_stage_model(p.cost, p.terminal_weight);
  const double uncontrolled =
      transcription_objective(p.dynamics, model, p.initial_state, p.step,
                              Eigen::MatrixXd::Zero(1, 60));
  const auto sol = solve_finite_horizon(p, Eigen::MatrixXd::Zero(1, 60));
  CHECK(sol.objective < uncontrolled);
}

TEST_CASE("receding-horizon bookkeeping on a small chain") {
  auto p = vehicle_chain_problem(3, 1.0, 1.0, 2, 0.1, 20);
  const auto report = solve_mpc(p, 1e-3, 1000);
  REQUIRE(report.converged);
  CHECK(report.trajectory.states.col(report.mpc_steps).norm() <= 1e-3);
  REQUIRE(report.per_step_objectives.size() == static_cast<std::size_t>(report.mpc_steps));

  // each warm-started solve can only improve on its shifted guess
  for (int k = 0; k < report.mpc_steps; ++k) {
    CHECK(report.per_step_objectives[k] <= report.per_step_warm_objectives[k] + 1e-12);
  }

  // realized cost dominates mu times the squared trajectory norm
  const double mu = spectral_bounds(p.cost).q_min_eig;
  const double l2 = discrete_l2_all(report.trajectory);
  CHECK(report.objective_estimate >= mu * l2 * l2 - 1e-12);

  // states recorded are the plant rollout under the applied controls
  const auto replay = simulate(p.dynamics, p.initial_state, report.trajectory.controls, p.step);
  CHECK((replay.states - report.trajectory.states).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a guess whose rollout diverges is a solver error") {
  SubsystemDynamics growth;
  growth.state_dim = 1;
  growth.control_dim = 1;
  growth.label = "quadratic_growth";
  growth.field = [](ConstVecRef x, ConstVecRef u, VecRef out) { out[0] = x[0] * x[0] + u[0]; };
  growth.state_jacobian = [](ConstVecRef x, ConstVecRef, MatRef out) { out(0, 0) = 2.0 * x[0]; };
  growth.control_jacobian = [](ConstVecRef, ConstVecRef, MatRef out) { out(0, 0) = 1.0; };

  QuadraticCost cost({1}, {Eigen::MatrixXd::Identity(1, 1)});
  cost.set_state_block(1, 1, Eigen::MatrixXd::Identity(1, 1));
  OcpProblem p{AggregateDynamics({growth}), std::move(cost), Eigen::VectorXd::Constant(1, 3.0),
               std::nullopt, 0.5, 30, 1.0};
  try {
    (void)solve_finite_horizon(p, Eigen::MatrixXd::Zero(1, 30));
    FAIL("expected a solver error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Solver);
  }
}

TEST_CASE("box-constrained controls stay inside the box") {
  auto p = vehicle_chain_problem(2, 1.5, 1.0, 1, 0.05, 30);
  ControlBox box;
  box.lower = Eigen::VectorXd::Constant(2, -0.4);
  box.upper = Eigen::VectorXd::Constant(2, 0.4);
  p.control_box = box;
  const auto sol = solve_finite_horizon(p, Eigen::MatrixXd::Zero(2, 30));
  CHECK(sol.controls.maxCoeff() <= 0.4 + 1e-15);
  CHECK(sol.controls.minCoeff() >= -0.4 - 1e-15);

  // the constrained optimum cannot beat the unconstrained one
  p.control_box.reset();
  const auto free = solve_finite_horizon(p, Eigen::MatrixXd::Zero(2, 30));
  CHECK(free.objective <= sol.objective + 1e-10);
}
