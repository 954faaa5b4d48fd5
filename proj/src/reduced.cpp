#include "reduced.hpp"

#include <algorithm>
#include <cmath>

namespace sensdecay {

Eigen::VectorXd ReducedProblem::fixed_at(int t) const {
  if (t >= 0 && t < grid_length()) return fixed_series.col(t);
  return Eigen::VectorXd::Zero(fixed_series.rows());
}

ClosureCheck check_closure(const InterconnectionGraph& g, const IndexSet& inner,
                           const IndexSet& boundary) {
  for (int n : inner.members) g.require_valid_node(n);
  for (int n : boundary.members) g.require_valid_node(n);
  for (int n : inner.members) {
    if (boundary.contains(n)) {
      fail(ErrorCode::InvalidArgument, "check_closure: inner and boundary sets overlap at node " +
                                           std::to_string(n));
    }
  }
  for (int node = 1; node <= g.node_count; ++node) {
    if (inner.contains(node)) continue;
    bool adjacent = false;
    for (int nb : g.neighbors(node)) {
      if (inner.contains(nb)) {
        adjacent = true;
        break;
      }
    }
    if (adjacent && !boundary.contains(node)) return {false, node};
  }
  return {true, std::nullopt};
}

ReducedProblem make_reduced(const OcpProblem& base, const IndexSet& inner, const IndexSet& boundary,
                            Eigen::MatrixXd fixed_series) {
  validate_problem(base);
  if (inner.empty()) fail(ErrorCode::InvalidArgument, "make_reduced: inner set must be nonempty");
  const int s = base.cost.node_count();
  for (int n : inner.members) {
    if (n < 1 || n > s) fail(ErrorCode::InvalidArgument, "make_reduced: inner node out of range");
  }
  for (int n : boundary.members) {
    if (n < 1 || n > s) fail(ErrorCode::InvalidArgument, "make_reduced: boundary node out of range");
    if (inner.contains(n)) {
      fail(ErrorCode::InvalidArgument, "make_reduced: sets overlap at node " + std::to_string(n));
    }
  }

  int fixed_dim = 0;
  for (int j : boundary.members) fixed_dim += base.cost.state_dims()[j - 1];
  if (fixed_series.rows() != fixed_dim) {
    fail(ErrorCode::DimensionMismatch,
         "make_reduced: fixed series rows must equal the stacked boundary state dimension");
  }

  // Internal cost: principal submatrix of Q plus the control blocks of inner nodes.
  std::vector<int> inner_state_dims;
  std::vector<Eigen::MatrixXd> inner_r;
  for (int i : inner.members) {
    inner_state_dims.push_back(base.cost.state_dims()[i - 1]);
    inner_r.push_back(base.cost.control_block(i));
  }
  QuadraticCost internal(std::move(inner_state_dims), std::move(inner_r));
  for (std::size_t a = 0; a < inner.members.size(); ++a) {
    for (std::size_t b = 0; b < inner.members.size(); ++b) {
      const Eigen::MatrixXd* blk = base.cost.state_block(inner.members[a], inner.members[b]);
      if (blk) internal.set_state_block(static_cast<int>(a) + 1, static_cast<int>(b) + 1, *blk);
    }
  }

  ReducedProblem rp{inner,
                    boundary,
                    std::move(fixed_series),
                    base.dynamics.restricted(inner),
                    std::move(internal),
                    {},
                    Eigen::VectorXd(),
                    std::nullopt,
                    base.step,
                    base.horizon,
                    base.terminal_weight,
                    false};

  // Cross terms between inner and boundary nodes.
  std::vector<int> fixed_offsets(boundary.members.size());
  int off = 0;
  for (std::size_t b = 0; b < boundary.members.size(); ++b) {
    fixed_offsets[b] = off;
    off += base.cost.state_dims()[boundary.members[b] - 1];
  }
  for (std::size_t a = 0; a < inner.members.size(); ++a) {
    const int i = inner.members[a];
    for (std::size_t b = 0; b < boundary.members.size(); ++b) {
      const int j = boundary.members[b];
      const Eigen::MatrixXd* bij = base.cost.state_block(i, j);
      const Eigen::MatrixXd* bji = base.cost.state_block(j, i);
      if (!bij && !bji) continue;
      ReducedProblem::CrossTerm ct;
      ct.inner_offset = rp.internal_cost.state_offset(static_cast<int>(a) + 1);
      ct.inner_dim = base.cost.state_dims()[i - 1];
      ct.fixed_offset = fixed_offsets[b];
      ct.fixed_dim = base.cost.state_dims()[j - 1];
      ct.block = bij ? *bij : Eigen::MatrixXd::Zero(ct.inner_dim, ct.fixed_dim);
      ct.mirror = bji ? *bji : Eigen::MatrixXd::Zero(ct.fixed_dim, ct.inner_dim);
      rp.cross.push_back(std::move(ct));
    }
  }

  // Restricted initial state and control box.
  rp.initial_state.resize(rp.dynamics.state_dim());
  for (std::size_t a = 0; a < inner.members.size(); ++a) {
    const int i = inner.members[a];
    rp.initial_state.segment(rp.dynamics.state_offset(static_cast<int>(a) + 1),
                             base.cost.state_dims()[i - 1]) =
        base.initial_state.segment(base.cost.state_offset(i), base.cost.state_dims()[i - 1]);
  }
  if (base.control_box) {
    ControlBox box;
    box.lower.resize(rp.dynamics.control_dim());
    box.upper.resize(rp.dynamics.control_dim());
    for (std::size_t a = 0; a < inner.members.size(); ++a) {
      const int i = inner.members[a];
      const int dim = base.cost.control_dims()[i - 1];
      box.lower.segment(rp.dynamics.control_offset(static_cast<int>(a) + 1), dim) =
          base.control_box->lower.segment(base.cost.control_offset(i), dim);
      box.upper.segment(rp.dynamics.control_offset(static_cast<int>(a) + 1), dim) =
          base.control_box->upper.segment(base.cost.control_offset(i), dim);
    }
    rp.control_box = std::move(box);
  }

  rp.closure_ok = check_closure(build_graph(base.cost), inner, boundary).holds;
  return rp;
}

namespace {

double cross_cost(const ReducedProblem& rp, ConstVecRef x_inner, const Eigen::VectorXd& fixed) {
  double acc = 0.0;
  for (const auto& ct : rp.cross) {
    const auto xi = x_inner.segment(ct.inner_offset, ct.inner_dim);
    const auto xj = fixed.segment(ct.fixed_offset, ct.fixed_dim);
    acc += xi.dot(ct.block * xj) + xj.dot(ct.mirror * xi);
  }
  return acc;
}

void cross_grad(const ReducedProblem& rp, const Eigen::VectorXd& fixed, VecRef out) {
  for (const auto& ct : rp.cross) {
    const auto xj = fixed.segment(ct.fixed_offset, ct.fixed_dim);
    out.segment(ct.inner_offset, ct.inner_dim).noalias() += ct.block * xj;
    out.segment(ct.inner_offset, ct.inner_dim).noalias() += ct.mirror.transpose() * xj;
  }
}

StageCostModel reduced_stage_model(const ReducedProblem& rp, int grid_offset) {
  StageCostModel m;
  m.stage = [&rp, grid_offset](int k, ConstVecRef x, ConstVecRef u) {
    return rp.internal_cost.stage_cost(x, u) + cross_cost(rp, x, rp.fixed_at(grid_offset + k));
  };
  m.stage_grad_state = [&rp, grid_offset](int k, ConstVecRef x, ConstVecRef, VecRef out) {
    rp.internal_cost.apply_state_matrix(x, out);
    out *= 2.0;
    cross_grad(rp, rp.fixed_at(grid_offset + k), out);
  };
  m.stage_grad_control = [&rp](int, ConstVecRef, ConstVecRef u, VecRef out) {
    rp.internal_cost.apply_control_matrix(u, out);
    out *= 2.0;
  };
  // The terminal must be the inner restriction of the full problem's terminal,
  // cross terms against the frozen boundary included; dropping them biases the
  // receding-horizon steps relative to the full solve.
  m.terminal = [&rp, grid_offset](ConstVecRef x) {
    Eigen::VectorXd qx(x.size());
    rp.internal_cost.apply_state_matrix(x, qx);
    return rp.terminal_weight *
           (x.dot(qx) + cross_cost(rp, x, rp.fixed_at(grid_offset + rp.horizon)));
  };
  m.terminal_grad = [&rp, grid_offset](ConstVecRef x, VecRef out) {
    rp.internal_cost.apply_state_matrix(x, out);
    out *= 2.0;
    cross_grad(rp, rp.fixed_at(grid_offset + rp.horizon), out);
    out *= rp.terminal_weight;
  };
  return m;
}

}  // namespace

double reduced_stage_cost(const ReducedProblem& rp, ConstVecRef x_inner, ConstVecRef u_inner,
                          int t_index) {
  if (t_index < 0 || t_index >= rp.grid_length()) {
    fail(ErrorCode::InvalidArgument, "reduced_stage_cost: grid index " + std::to_string(t_index) +
                                         " outside the recorded grid");
  }
  return rp.internal_cost.stage_cost(x_inner, u_inner) +
         cross_cost(rp, x_inner, rp.fixed_series.col(t_index));
}

ReducedSolveReport solve_reduced(const ReducedProblem& rp, double eps, int max_steps,
                                 const InnerSolveOptions& opts) {
  if (eps <= 0.0) fail(ErrorCode::InvalidArgument, "solve_reduced: eps must be positive");

  ReducedSolveReport out;
  out.closure_ok = rp.closure_ok;

  const int m = rp.dynamics.control_dim();
  std::vector<Eigen::VectorXd> states{rp.initial_state};
  std::vector<Eigen::VectorXd> controls;
  Eigen::VectorXd x = rp.initial_state;
  Eigen::MatrixXd warm = Eigen::MatrixXd::Zero(m, rp.horizon);

  SolveReport& rep = out.report;

  // Remaining excitation: sup over the rest of the grid of the frozen norm
  // (zero beyond it). Termination on the current sample alone would stop a
  // solve whose forcing only builds up later.
  std::vector<double> tail_sup(static_cast<std::size_t>(rp.grid_length()) + 1, 0.0);
  for (int t = rp.grid_length() - 1; t >= 0; --t) {
    tail_sup[t] = std::max(rp.fixed_series.col(t).norm(), tail_sup[t + 1]);
  }
  auto excitation_gone = [&tail_sup, eps](int t) {
    return t >= static_cast<int>(tail_sup.size()) - 1 || tail_sup[t] <= eps;
  };

  while ((x.norm() > eps || !excitation_gone(rep.mpc_steps)) && rep.mpc_steps < max_steps) {
    const StageCostModel model = reduced_stage_model(rp, rep.mpc_steps);
    FiniteHorizonSolution inner = solve_finite_horizon_general(
        rp.dynamics, model, x, rp.step, rp.horizon, rp.control_box, warm, opts);
    rep.per_step_inner_iterations.push_back(inner.iterations);
    rep.per_step_objectives.push_back(inner.objective);
    rep.per_step_warm_objectives.push_back(inner.initial_objective);
    if (inner.line_search_stalled) rep.any_inner_stall = true;

    const Eigen::VectorXd u0 = inner.controls.col(0);
    x = rk4_step(rp.dynamics, x, u0, rp.step);
    controls.push_back(u0);
    states.push_back(x);
    ++rep.mpc_steps;

    if (rp.horizon > 1) warm.leftCols(rp.horizon - 1) = inner.controls.rightCols(rp.horizon - 1);
    warm.col(rp.horizon - 1) = inner.controls.col(rp.horizon - 1);
  }
  rep.converged = (x.norm() <= eps && excitation_gone(rep.mpc_steps));

  const int steps = static_cast<int>(controls.size());
  TrajectoryBundle b = make_bundle(rp.dynamics, rp.step, steps);
  for (int k = 0; k <= steps; ++k) b.states.col(k) = states[k];
  for (int k = 0; k < steps; ++k) b.controls.col(k) = controls[k];

  double realized = 0.0;
  for (int k = 0; k < steps; ++k) {
    realized += rp.internal_cost.stage_cost(b.states.col(k), b.controls.col(k)) +
                cross_cost(rp, b.states.col(k), rp.fixed_at(k));
  }
  out.reduced_objective = rp.step * realized;  // kept signed on purpose
  rep.objective_estimate = out.reduced_objective;

  // The prediction horizon looks past the recorded grid once the solve runs
  // long enough; those samples were taken as zero.
  out.fixed_extended = steps > 0 && (steps - 1 + rp.horizon - 1) >= rp.grid_length();
  rep.trajectory = std::move(b);
  return out;
}

}  // namespace sensdecay
