#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "cost.hpp"
#include "model.hpp"

namespace sensdecay {

/// Box constraint on the aggregated control vector.
struct ControlBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Discretized infinite-horizon problem: decoupled dynamics, quadratic stage
/// cost, fixed step, finite prediction horizon with a terminal quadratic
/// surrogate for the tail.
struct OcpProblem {
  AggregateDynamics dynamics;
  QuadraticCost cost;
  Eigen::VectorXd initial_state;
  std::optional<ControlBox> control_box;
  double step = 0.05;
  int horizon = 40;
  double terminal_weight = 10.0;
};

void validate_problem(const OcpProblem& p);

struct InnerSolveOptions {
  double grad_tol = 1e-8;   // infinity norm of the objective gradient
  int max_iterations = 500;
  int lbfgs_memory = 10;
  int max_backtracks = 60;
  double armijo_c1 = 1e-4;
  double blowup = kDefaultBlowup;
  bool record_trace = false;
};

/// Stage cost hooks used by the transcription; `k` is the grid index within
/// the horizon so time-varying costs (the reduced problem) plug in directly.
struct StageCostModel {
  std::function<double(int k, ConstVecRef x, ConstVecRef u)> stage;
  std::function<void(int k, ConstVecRef x, ConstVecRef u, VecRef out)> stage_grad_state;
  std::function<void(int k, ConstVecRef x, ConstVecRef u, VecRef out)> stage_grad_control;
  std::function<double(ConstVecRef x)> terminal;
  std::function<void(ConstVecRef x, VecRef out)> terminal_grad;
};

struct FiniteHorizonSolution {
  Eigen::MatrixXd controls;          // control_dim x horizon
  Eigen::MatrixXd predicted_states;  // state_dim x (horizon+1)
  double objective = 0.0;
  double initial_objective = 0.0;    // objective at the supplied guess
  int iterations = 0;
  bool converged = false;            // gradient tolerance reached
  bool line_search_stalled = false;
  std::vector<double> objective_trace;  // filled when record_trace is set
};

/// Quasi-Newton (L-BFGS) descent with backtracking line search on the
/// direct-transcription objective  h * sum_k stage(k, x_k, u_k) + terminal(x_H),
/// gradients by the discrete adjoint recursion through the RK4 stages.
FiniteHorizonSolution solve_finite_horizon_general(
    const AggregateDynamics& dyn, const StageCostModel& model, ConstVecRef x0, double h, int horizon,
    const std::optional<ControlBox>& box, const Eigen::MatrixXd& u_init,
    const InnerSolveOptions& opts = {});

/// Discrete objective of a control sequence (rollout included).
double transcription_objective(const AggregateDynamics& dyn, const StageCostModel& model,
                               ConstVecRef x0, double h, const Eigen::MatrixXd& controls);

/// Exact gradient of transcription_objective via the discrete adjoint.
Eigen::MatrixXd transcription_gradient(const AggregateDynamics& dyn, const StageCostModel& model,
                                       ConstVecRef x0, double h, const Eigen::MatrixXd& controls);

/// Stationary quadratic specialization of the above.
FiniteHorizonSolution solve_finite_horizon(const OcpProblem& p, const Eigen::MatrixXd& u_init,
                                           const InnerSolveOptions& opts = {});

StageCostModel quadratic_stage_model(const QuadraticCost& cost, double terminal_weight);

struct SolveReport {
  TrajectoryBundle trajectory;
  int mpc_steps = 0;
  bool converged = false;
  double objective_estimate = 0.0;  // realized closed-loop discrete cost
  std::vector<int> per_step_inner_iterations;
  std::vector<double> per_step_objectives;       // inner objective after optimizing
  std::vector<double> per_step_warm_objectives;  // inner objective at the shifted guess
  bool any_inner_stall = false;
};

/// Receding-horizon approximation of the infinite-horizon optimum: repeated
/// finite-horizon solves warm-started by shift-and-hold, applying the first
/// control each step, until the plant state norm falls below eps.
SolveReport solve_mpc(const OcpProblem& p, double eps, int max_steps,
                      const InnerSolveOptions& opts = {});

}  // namespace sensdecay
