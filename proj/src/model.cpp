#include "model.hpp"

#include <cmath>

namespace sensdecay {

void validate_equilibrium(const SubsystemDynamics& dyn, double tol) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dyn.state_dim);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(dyn.control_dim);
  Eigen::VectorXd out(dyn.state_dim);
  dyn.field(x, u, out);
  if (static_cast<int>(out.size()) != dyn.state_dim) {
    fail(ErrorCode::DimensionMismatch, "dynamics output dimension differs from declared state_dim");
  }
  if (out.lpNorm<Eigen::Infinity>() > tol) {
    fail(ErrorCode::Validation, "dynamics '" + dyn.label + "' does not vanish at the origin");
  }
}

Eigen::Vector2d vehicle_field(const VehicleDragParams& p, const Eigen::Vector2d& state, double control) {
  if (!state.allFinite() || !std::isfinite(control)) {
    fail(ErrorCode::Numeric, "vehicle_field: non-finite input");
  }
  const double v = state[1];
  return {v, -p.viscous * v - p.quadratic * v * std::abs(v) + control};
}

SubsystemDynamics vehicle_dynamics(const VehicleDragParams& p) {
  if (p.viscous < 0.0 || p.quadratic < 0.0) {
    fail(ErrorCode::InvalidArgument, "vehicle drag coefficients must be nonnegative");
  }
  SubsystemDynamics dyn;
  dyn.state_dim = 2;
  dyn.control_dim = 1;
  dyn.label = "vehicle_drag";
  dyn.field = [p](ConstVecRef x, ConstVecRef u, VecRef out) {
    const double v = x[1];
    out[0] = v;
    out[1] = -p.viscous * v - p.quadratic * v * std::abs(v) + u[0];
  };
  dyn.state_jacobian = [p](ConstVecRef x, ConstVecRef, MatRef out) {
    out(0, 0) = 0.0;
    out(0, 1) = 1.0;
    out(1, 0) = 0.0;
    out(1, 1) = -p.viscous - 2.0 * p.quadratic * std::abs(x[1]);
  };
  dyn.control_jacobian = [](ConstVecRef, ConstVecRef, MatRef out) {
    out(0, 0) = 0.0;
    out(1, 0) = 1.0;
  };
  return dyn;
}

AggregateDynamics::AggregateDynamics(std::vector<SubsystemDynamics> subsystems)
    : subs_(std::move(subsystems)) {
  if (subs_.empty()) fail(ErrorCode::InvalidArgument, "aggregate dynamics needs at least one subsystem");
  for (const auto& sub : subs_) {
    if (sub.state_dim <= 0 || sub.control_dim < 0 || !sub.field) {
      fail(ErrorCode::InvalidArgument, "subsystem missing field or dimensions");
    }
    validate_equilibrium(sub);
    state_offsets_.push_back(state_dim_);
    control_offsets_.push_back(control_dim_);
    state_dim_ += sub.state_dim;
    control_dim_ += sub.control_dim;
  }
}

std::vector<int> AggregateDynamics::state_dims() const {
  std::vector<int> dims;
  dims.reserve(subs_.size());
  for (const auto& s : subs_) dims.push_back(s.state_dim);
  return dims;
}

std::vector<int> AggregateDynamics::control_dims() const {
  std::vector<int> dims;
  dims.reserve(subs_.size());
  for (const auto& s : subs_) dims.push_back(s.control_dim);
  return dims;
}

void AggregateDynamics::field(ConstVecRef x, ConstVecRef u, VecRef out) const {
  for (int i = 0; i < node_count(); ++i) {
    subs_[i].field(x.segment(state_offsets_[i], subs_[i].state_dim),
                   u.segment(control_offsets_[i], subs_[i].control_dim),
                   out.segment(state_offsets_[i], subs_[i].state_dim));
  }
}

AggregateDynamics AggregateDynamics::restricted(const IndexSet& nodes) const {
  if (nodes.empty()) fail(ErrorCode::InvalidArgument, "restriction to empty node set");
  std::vector<SubsystemDynamics> subset;
  subset.reserve(nodes.size());
  for (int n : nodes.members) {
    if (n < 1 || n > node_count()) fail(ErrorCode::InvalidArgument, "restriction node out of range");
    subset.push_back(subs_[n - 1]);
  }
  return AggregateDynamics(std::move(subset));
}

namespace {

void eval_field_checked(const AggregateDynamics& dyn, ConstVecRef x, ConstVecRef u, VecRef out,
                        int stage) {
  dyn.field(x, u, out);
  if (!out.allFinite()) {
    fail(ErrorCode::Numeric, "rk4_step: non-finite vector field at stage " + std::to_string(stage));
  }
}

}  // namespace

Eigen::VectorXd rk4_step(const AggregateDynamics& dyn, ConstVecRef x, ConstVecRef u, double h) {
  if (h <= 0.0) fail(ErrorCode::InvalidArgument, "rk4_step: step size must be positive");
  const int n = dyn.state_dim();
  Eigen::VectorXd k1(n), k2(n), k3(n), k4(n);
  eval_field_checked(dyn, x, u, k1, 1);
  eval_field_checked(dyn, x + 0.5 * h * k1, u, k2, 2);
  eval_field_checked(dyn, x + 0.5 * h * k2, u, k3, 3);
  eval_field_checked(dyn, x + h * k3, u, k4, 4);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void rk4_adjoint(const AggregateDynamics& dyn, ConstVecRef x, ConstVecRef u, double h,
                 ConstVecRef seed, VecRef grad_x, VecRef grad_u) {
  const int n = dyn.state_dim();
  Eigen::VectorXd k1(n), k2(n), k3(n);
  dyn.field(x, u, k1);
  const Eigen::VectorXd x2 = x + 0.5 * h * k1;
  dyn.field(x2, u, k2);
  const Eigen::VectorXd x3 = x + 0.5 * h * k2;
  dyn.field(x3, u, k3);
  const Eigen::VectorXd x4 = x + h * k3;

  Eigen::VectorXd bar_k1 = (h / 6.0) * seed;
  Eigen::VectorXd bar_k2 = (h / 3.0) * seed;
  Eigen::VectorXd bar_k3 = (h / 3.0) * seed;
  Eigen::VectorXd bar_k4 = (h / 6.0) * seed;
  grad_x = seed;
  grad_u.setZero();

  // Reverse through the stages; each stage point contributes J^T products
  // per node since the Jacobians are block diagonal.
  auto accumulate_stage = [&](const Eigen::VectorXd& stage_x, const Eigen::VectorXd& bar_k,
                              Eigen::VectorXd& bar_stage_x) {
    bar_stage_x.resize(n);
    for (int i = 1; i <= dyn.node_count(); ++i) {
      const auto& sub = dyn.subsystem(i);
      const int so = dyn.state_offset(i);
      const int co = dyn.control_offset(i);
      Eigen::MatrixXd jx(sub.state_dim, sub.state_dim);
      Eigen::MatrixXd ju(sub.state_dim, sub.control_dim);
      const auto xi = stage_x.segment(so, sub.state_dim);
      const auto ui = u.segment(co, sub.control_dim);
      sub.state_jacobian(xi, ui, jx);
      sub.control_jacobian(xi, ui, ju);
      const auto bar_ki = bar_k.segment(so, sub.state_dim);
      bar_stage_x.segment(so, sub.state_dim).noalias() = jx.transpose() * bar_ki;
      grad_u.segment(co, sub.control_dim).noalias() += ju.transpose() * bar_ki;
    }
  };

  Eigen::VectorXd bar_x4, bar_x3, bar_x2, bar_x1;
  accumulate_stage(x4, bar_k4, bar_x4);
  grad_x += bar_x4;
  bar_k3 += h * bar_x4;
  accumulate_stage(x3, bar_k3, bar_x3);
  grad_x += bar_x3;
  bar_k2 += 0.5 * h * bar_x3;
  accumulate_stage(x2, bar_k2, bar_x2);
  grad_x += bar_x2;
  bar_k1 += 0.5 * h * bar_x2;
  accumulate_stage(x, bar_k1, bar_x1);
  grad_x += bar_x1;
}

Eigen::VectorXd TrajectoryBundle::node_state(int node, int sample) const {
  return states.col(sample).segment(state_offsets[node - 1], state_dims[node - 1]);
}

double TrajectoryBundle::node_norm(int node, int sample) const {
  return states.col(sample).segment(state_offsets[node - 1], state_dims[node - 1]).norm();
}

TrajectoryBundle make_bundle(const AggregateDynamics& dyn, double h, int steps) {
  TrajectoryBundle b;
  b.time_step = h;
  b.states = Eigen::MatrixXd::Zero(dyn.state_dim(), steps + 1);
  b.controls = Eigen::MatrixXd::Zero(dyn.control_dim(), steps);
  b.state_dims = dyn.state_dims();
  b.control_dims = dyn.control_dims();
  b.state_offsets.resize(dyn.node_count());
  b.control_offsets.resize(dyn.node_count());
  for (int i = 1; i <= dyn.node_count(); ++i) {
    b.state_offsets[i - 1] = dyn.state_offset(i);
    b.control_offsets[i - 1] = dyn.control_offset(i);
  }
  return b;
}

TrajectoryBundle simulate(const AggregateDynamics& dyn, ConstVecRef x0,
                          const Eigen::MatrixXd& controls, double h, double blowup) {
  if (x0.size() != dyn.state_dim()) fail(ErrorCode::DimensionMismatch, "simulate: initial state size");
  if (controls.rows() != dyn.control_dim()) {
    fail(ErrorCode::DimensionMismatch, "simulate: control rows must equal aggregate control dim");
  }
  const int steps = static_cast<int>(controls.cols());
  TrajectoryBundle b = make_bundle(dyn, h, steps);
  b.controls = controls;
  b.states.col(0) = x0;
  for (int k = 0; k < steps; ++k) {
    b.states.col(k + 1) = rk4_step(dyn, b.states.col(k), controls.col(k), h);
    if (b.states.col(k + 1).norm() > blowup) {
      fail(ErrorCode::Divergence, "simulate: state norm exceeded blow-up threshold at step " +
                                      std::to_string(k + 1));
    }
  }
  return b;
}

TrajectoryBundle simulate_feedback(const AggregateDynamics& dyn, ConstVecRef x0,
                                   const std::function<void(ConstVecRef, VecRef)>& feedback,
                                   double h, int steps, double blowup) {
  if (x0.size() != dyn.state_dim()) fail(ErrorCode::DimensionMismatch, "simulate_feedback: x0 size");
  TrajectoryBundle b = make_bundle(dyn, h, steps);
  b.states.col(0) = x0;
  const int n = dyn.state_dim();
  Eigen::VectorXd u(dyn.control_dim());
  Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), stage_u(dyn.control_dim());

  auto closed_loop = [&](ConstVecRef x, VecRef out) {
    feedback(x, stage_u);
    dyn.field(x, stage_u, out);
    if (!out.allFinite()) fail(ErrorCode::Numeric, "simulate_feedback: non-finite closed-loop field");
  };

  for (int k = 0; k < steps; ++k) {
    const auto x = b.states.col(k);
    feedback(x, u);
    b.controls.col(k) = u;
    closed_loop(x, k1);
    closed_loop(x + 0.5 * h * k1, k2);
    closed_loop(x + 0.5 * h * k2, k3);
    closed_loop(x + h * k3, k4);
    b.states.col(k + 1) = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (b.states.col(k + 1).norm() > blowup) {
      fail(ErrorCode::Divergence, "simulate_feedback: blow-up at step " + std::to_string(k + 1));
    }
  }
  return b;
}

double discrete_l2(const TrajectoryBundle& traj, const IndexSet& target) {
  if (target.empty()) fail(ErrorCode::InvalidArgument, "discrete_l2: empty target set");
  const int s = static_cast<int>(traj.state_dims.size());
  for (int n : target.members) {
    if (n < 1 || n > s) fail(ErrorCode::InvalidArgument, "discrete_l2: node out of range");
  }
  double acc = 0.0;
  for (int k = 1; k < traj.sample_count(); ++k) {
    for (int n : target.members) {
      acc += traj.states.col(k).segment(traj.state_offsets[n - 1], traj.state_dims[n - 1]).squaredNorm();
    }
  }
  return std::sqrt(traj.time_step * acc);
}

double discrete_l2_all(const TrajectoryBundle& traj) {
  double acc = 0.0;
  for (int k = 1; k < traj.sample_count(); ++k) acc += traj.states.col(k).squaredNorm();
  return std::sqrt(traj.time_step * acc);
}

}  // namespace sensdecay
