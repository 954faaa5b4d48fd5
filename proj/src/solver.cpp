#include "solver.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace sensdecay {

void validate_problem(const OcpProblem& p) {
  if (p.initial_state.size() != p.dynamics.state_dim()) {
    fail(ErrorCode::DimensionMismatch, "problem: initial state size does not match dynamics");
  }
  if (p.cost.state_dim() != p.dynamics.state_dim() || p.cost.control_dim() != p.dynamics.control_dim()) {
    fail(ErrorCode::DimensionMismatch, "problem: cost layout does not match dynamics layout");
  }
  if (p.step <= 0.0) fail(ErrorCode::InvalidArgument, "problem: step must be positive");
  if (p.horizon < 1) fail(ErrorCode::InvalidArgument, "problem: horizon must be at least 1");
  if (p.terminal_weight < 0.0) fail(ErrorCode::InvalidArgument, "problem: terminal weight must be >= 0");
  if (p.control_box) {
    if (p.control_box->lower.size() != p.dynamics.control_dim() ||
        p.control_box->upper.size() != p.dynamics.control_dim()) {
      fail(ErrorCode::DimensionMismatch, "problem: control box size mismatch");
    }
    if ((p.control_box->upper - p.control_box->lower).minCoeff() < 0.0) {
      fail(ErrorCode::InvalidArgument, "problem: control box is empty");
    }
  }
}

StageCostModel quadratic_stage_model(const QuadraticCost& cost, double terminal_weight) {
  StageCostModel m;
  m.stage = [&cost](int, ConstVecRef x, ConstVecRef u) { return cost.stage_cost(x, u); };
  m.stage_grad_state = [&cost](int, ConstVecRef x, ConstVecRef, VecRef out) {
    cost.apply_state_matrix(x, out);
    out *= 2.0;
  };
  m.stage_grad_control = [&cost](int, ConstVecRef, ConstVecRef u, VecRef out) {
    cost.apply_control_matrix(u, out);
    out *= 2.0;
  };
  m.terminal = [&cost, terminal_weight](ConstVecRef x) {
    Eigen::VectorXd qx(x.size());
    cost.apply_state_matrix(x, qx);
    return terminal_weight * x.dot(qx);
  };
  m.terminal_grad = [&cost, terminal_weight](ConstVecRef x, VecRef out) {
    cost.apply_state_matrix(x, out);
    out *= 2.0 * terminal_weight;
  };
  return m;
}

namespace {

struct Transcription {
  const AggregateDynamics& dyn;
  const StageCostModel& model;
  Eigen::VectorXd x0;
  double h;
  int horizon;
  double blowup;

  int n() const { return dyn.state_dim(); }
  int m() const { return dyn.control_dim(); }

  // Returns false when the rollout leaves the finite/blow-up region.
  bool rollout(const Eigen::MatrixXd& u, Eigen::MatrixXd& x_out) const {
    x_out.col(0) = x0;
    for (int k = 0; k < horizon; ++k) {
      try {
        x_out.col(k + 1) = rk4_step(dyn, x_out.col(k), u.col(k), h);
      } catch (const Error&) {
        return false;
      }
      if (!(x_out.col(k + 1).norm() <= blowup)) return false;
    }
    return true;
  }

  double objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& u) const {
    double acc = 0.0;
    for (int k = 0; k < horizon; ++k) acc += model.stage(k, x.col(k), u.col(k));
    return h * acc + model.terminal(x.col(horizon));
  }

  // Discrete adjoint through the RK4 steps; exact gradient of objective().
  void gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& u, Eigen::MatrixXd& grad) const {
    Eigen::VectorXd lambda(n()), bar_x(n()), gx(n());
    Eigen::VectorXd gu(m());
    model.terminal_grad(x.col(horizon), lambda);
    for (int k = horizon - 1; k >= 0; --k) {
      rk4_adjoint(dyn, x.col(k), u.col(k), h, lambda, bar_x, gu);
      model.stage_grad_control(k, x.col(k), u.col(k), grad.col(k));
      grad.col(k) = h * grad.col(k) + gu;
      model.stage_grad_state(k, x.col(k), u.col(k), gx);
      lambda = h * gx + bar_x;
    }
  }
};

void project_box(const std::optional<ControlBox>& box, Eigen::MatrixXd& u) {
  if (!box) return;
  for (int k = 0; k < u.cols(); ++k) {
    u.col(k) = u.col(k).cwiseMax(box->lower).cwiseMin(box->upper);
  }
}

}  // namespace

FiniteHorizonSolution solve_finite_horizon_general(
    const AggregateDynamics& dyn, const StageCostModel& model, ConstVecRef x0, double h, int horizon,
    const std::optional<ControlBox>& box, const Eigen::MatrixXd& u_init,
    const InnerSolveOptions& opts) {
  if (u_init.rows() != dyn.control_dim() || static_cast<int>(u_init.cols()) != horizon) {
    fail(ErrorCode::DimensionMismatch, "solve_finite_horizon: guess must be control_dim x horizon");
  }

  Transcription tr{dyn, model, x0, h, horizon, opts.blowup};
  const int n = tr.n();
  const int m = tr.m();

  Eigen::MatrixXd u = u_init;
  project_box(box, u);
  Eigen::MatrixXd x(n, horizon + 1);
  if (!tr.rollout(u, x)) {
    fail(ErrorCode::Solver, "solve_finite_horizon: rollout of the initial guess diverged");
  }
  double f = tr.objective(x, u);

  FiniteHorizonSolution sol;
  sol.initial_objective = f;
  if (opts.record_trace) sol.objective_trace.push_back(f);

  Eigen::MatrixXd grad(m, horizon), grad_new(m, horizon);
  tr.gradient(x, u, grad);

  // L-BFGS history (flattened control sequences).
  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  const int total = m * horizon;
  Eigen::MatrixXd x_trial(n, horizon + 1);

  auto flat = [total](const Eigen::MatrixXd& a) {
    return Eigen::Map<const Eigen::VectorXd>(a.data(), total);
  };

  for (int it = 0; it < opts.max_iterations; ++it) {
    if (grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      sol.converged = true;
      break;
    }

    // Two-loop recursion.
    Eigen::VectorXd q = flat(grad);
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::MatrixXd dir = -Eigen::Map<Eigen::MatrixXd>(q.data(), m, horizon);

    double dir_dot_grad = flat(dir).dot(flat(grad));
    if (!(dir_dot_grad < 0.0)) {
      dir = -grad;
      dir_dot_grad = -flat(grad).squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    // Backtracking line search (projected when a control box is present).
    double step = 1.0;
    bool accepted = false;
    Eigen::MatrixXd u_trial;
    double f_trial = 0.0;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      u_trial = u + step * dir;
      project_box(box, u_trial);
      const double pred = flat(grad).dot(flat(u_trial) - flat(u));
      if (pred < 0.0 && tr.rollout(u_trial, x_trial)) {
        f_trial = tr.objective(x_trial, u_trial);
        if (f_trial <= f + opts.armijo_c1 * pred) {
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    sol.iterations = it + 1;
    if (!accepted) {
      sol.line_search_stalled = true;
      break;
    }

    tr.gradient(x_trial, u_trial, grad_new);
    Eigen::VectorXd s_vec = flat(u_trial) - flat(u);
    Eigen::VectorXd y_vec = flat(grad_new) - flat(grad);
    const double sy = s_vec.dot(y_vec);
    if (sy > 1e-12 * s_vec.norm() * y_vec.norm()) {
      s_hist.push_back(std::move(s_vec));
      y_hist.push_back(std::move(y_vec));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.lbfgs_memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    u.swap(u_trial);
    x.swap(x_trial);
    grad.swap(grad_new);
    f = f_trial;
    if (opts.record_trace) sol.objective_trace.push_back(f);
  }

  if (!sol.converged && grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol) sol.converged = true;
  sol.controls = std::move(u);
  sol.predicted_states = std::move(x);
  sol.objective = f;
  return sol;
}

double transcription_objective(const AggregateDynamics& dyn, const StageCostModel& model,
                               ConstVecRef x0, double h, const Eigen::MatrixXd& controls) {
  Transcription tr{dyn, model, x0, h, static_cast<int>(controls.cols()), kDefaultBlowup};
  Eigen::MatrixXd x(dyn.state_dim(), controls.cols() + 1);
  if (!tr.rollout(controls, x)) {
    fail(ErrorCode::Divergence, "transcription_objective: rollout diverged");
  }
  return tr.objective(x, controls);
}

Eigen::MatrixXd transcription_gradient(const AggregateDynamics& dyn, const StageCostModel& model,
                                       ConstVecRef x0, double h, const Eigen::MatrixXd& controls) {
  Transcription tr{dyn, model, x0, h, static_cast<int>(controls.cols()), kDefaultBlowup};
  Eigen::MatrixXd x(dyn.state_dim(), controls.cols() + 1);
  if (!tr.rollout(controls, x)) {
    fail(ErrorCode::Divergence, "transcription_gradient: rollout diverged");
  }
  Eigen::MatrixXd grad(dyn.control_dim(), controls.cols());
  tr.gradient(x, controls, grad);
  return grad;
}

FiniteHorizonSolution solve_finite_horizon(const OcpProblem& p, const Eigen::MatrixXd& u_init,
                                           const InnerSolveOptions& opts) {
  validate_problem(p);
  const StageCostModel model = quadratic_stage_model(p.cost, p.terminal_weight);
  return solve_finite_horizon_general(p.dynamics, model, p.initial_state, p.step, p.horizon,
                                      p.control_box, u_init, opts);
}

SolveReport solve_mpc(const OcpProblem& p, double eps, int max_steps, const InnerSolveOptions& opts) {
  validate_problem(p);
  if (eps <= 0.0) fail(ErrorCode::InvalidArgument, "solve_mpc: eps must be positive");
  if (max_steps < 0) fail(ErrorCode::InvalidArgument, "solve_mpc: max_steps must be >= 0");

  const StageCostModel model = quadratic_stage_model(p.cost, p.terminal_weight);
  const int m = p.dynamics.control_dim();

  SolveReport report;
  std::vector<Eigen::VectorXd> states{p.initial_state};
  std::vector<Eigen::VectorXd> controls;

  Eigen::VectorXd x = p.initial_state;
  Eigen::MatrixXd warm = Eigen::MatrixXd::Zero(m, p.horizon);

  while (x.norm() > eps && report.mpc_steps < max_steps) {
    FiniteHorizonSolution inner = solve_finite_horizon_general(
        p.dynamics, model, x, p.step, p.horizon, p.control_box, warm, opts);
    report.per_step_inner_iterations.push_back(inner.iterations);
    report.per_step_objectives.push_back(inner.objective);
    report.per_step_warm_objectives.push_back(inner.initial_objective);
    if (inner.line_search_stalled) report.any_inner_stall = true;

    const Eigen::VectorXd u0 = inner.controls.col(0);
    x = rk4_step(p.dynamics, x, u0, p.step);
    if (x.norm() > opts.blowup) {
      fail(ErrorCode::Divergence, "solve_mpc: closed-loop state blew up at step " +
                                      std::to_string(report.mpc_steps + 1));
    }
    controls.push_back(u0);
    states.push_back(x);
    ++report.mpc_steps;

    // Shift-and-hold warm start for the next step.
    if (p.horizon > 1) {
      warm.leftCols(p.horizon - 1) = inner.controls.rightCols(p.horizon - 1);
    }
    warm.col(p.horizon - 1) = inner.controls.col(p.horizon - 1);
  }
  report.converged = (x.norm() <= eps);

  const int steps = static_cast<int>(controls.size());
  TrajectoryBundle b = make_bundle(p.dynamics, p.step, steps);
  for (int k = 0; k <= steps; ++k) b.states.col(k) = states[k];
  for (int k = 0; k < steps; ++k) b.controls.col(k) = controls[k];

  double realized = 0.0;
  for (int k = 0; k < steps; ++k) realized += p.cost.stage_cost(b.states.col(k), b.controls.col(k));
  report.objective_estimate = p.step * realized;
  report.trajectory = std::move(b);
  return report;
}

}  // namespace sensdecay
