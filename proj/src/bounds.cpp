#include "bounds.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>

namespace sensdecay {

ControllabilityCertificate vehicle_certificate(const VehicleDragParams& p, double omega_norm_bound,
                                               const CertificateOptions& opts) {
  if (p.viscous <= 0.0) {
    fail(ErrorCode::Unsupported,
         "vehicle certificate requires strictly positive viscous drag (closed loop not stable)");
  }
  if (omega_norm_bound < 0.0) fail(ErrorCode::InvalidArgument, "omega_norm_bound must be >= 0");
  if (opts.sample_step <= 0.0 || opts.sample_horizon <= 0.0) {
    fail(ErrorCode::InvalidArgument, "certificate sampling parameters must be positive");
  }

  // Closed loop of u = -y + quadratic * v|v|: xdot = [[0,1],[-1,-viscous]] x.
  const double beta = p.viscous;
  Eigen::Matrix2d a;
  a << 0.0, 1.0, -1.0, -beta;

  // Roots of z^2 + beta z + 1 = 0.
  const double disc = beta * beta - 4.0;
  const double max_real = disc >= 0.0 ? (-beta + std::sqrt(disc)) / 2.0 : -beta / 2.0;
  const double rate = opts.rate_safety * (-max_real);

  double sup = 0.0;
  const int samples = static_cast<int>(std::ceil(opts.sample_horizon / opts.sample_step));
  for (int k = 0; k <= samples; ++k) {
    const double t = k * opts.sample_step;
    const Eigen::Matrix2d e = (a * t).exp();
    const double norm = e.jacobiSvd().singularValues()(0);
    sup = std::max(sup, norm * std::exp(rate * t));
  }
  const double state_gain = opts.overshoot_safety * sup;

  // One constant must dominate the control channel as well:
  // |u| <= |y| + quadratic * |v|^2 <= (gain + quadratic * gain^2 * sup|x|) e^{-rate t} |x0|.
  ControllabilityCertificate cert;
  cert.rate = rate;
  cert.overshoot = state_gain + p.quadratic * state_gain * state_gain * omega_norm_bound;
  cert.omega_norm_bound = omega_norm_bound;
  cert.witness = "u_i = -y_i + quadratic*v_i|v_i| (linearizing position feedback)";
  return cert;
}

DecayCertificate derive_decay_constants(const ControllabilityCertificate& cert,
                                        const SpectralBounds& sb) {
  if (cert.overshoot < 1.0 || cert.rate <= 0.0) {
    fail(ErrorCode::InvalidArgument, "certificate constants out of range (overshoot >= 1, rate > 0)");
  }
  if (sb.q_min_eig <= 0.0) {
    fail(ErrorCode::NotPositiveDefinite,
         "decay constants require a positive smallest cost eigenvalue");
  }
  if (sb.q_max_eig <= 0.0 || sb.r_max_eig <= 0.0) {
    fail(ErrorCode::InvalidArgument, "spectral bounds must be positive");
  }

  DecayConstants c;
  c.init_gain = cert.overshoot * std::sqrt((sb.q_max_eig + sb.r_max_eig) / (2.0 * cert.rate * sb.q_min_eig));
  c.prop_gain = 2.0 * sb.q_max_eig / sb.q_min_eig;
  c.scale = 2.0 * std::max(c.init_gain, c.prop_gain);
  const double ceil_scale = std::ceil(c.scale);
  if (!(ceil_scale >= 1.0) || ceil_scale > 3.0e9) {
    fail(ErrorCode::Numeric, "decay scale out of representable range");
  }
  const auto ceil_u = static_cast<std::uint64_t>(ceil_scale);
  c.steps_per_halving = ceil_u * ceil_u;
  c.decay_factor = std::exp2(-1.0 / static_cast<double>(c.steps_per_halving));
  if (!(c.decay_factor > 0.0 && c.decay_factor < 1.0)) {
    fail(ErrorCode::Numeric, "decay factor left (0, 1)");
  }
  return DecayCertificate{cert, sb, c};
}

const char* to_string(BoundVerdict v) {
  switch (v) {
    case BoundVerdict::Satisfied: return "satisfied";
    case BoundVerdict::ViolatedWithinSolverTolerance: return "violated_within_solver_tolerance";
    case BoundVerdict::Violated: return "violated";
    case BoundVerdict::SkippedUnreachable: return "skipped_unreachable";
  }
  return "unknown";
}

namespace {

void require_single_node_support(const TrajectoryBundle& traj, int source_node) {
  const int s = static_cast<int>(traj.state_dims.size());
  if (source_node < 1 || source_node > s) {
    fail(ErrorCode::InvalidArgument, "bound check: source node out of range");
  }
  for (int i = 1; i <= s; ++i) {
    if (i == source_node) continue;
    if (traj.node_norm(i, 0) > 1e-12) {
      fail(ErrorCode::Precondition,
           "bound check: recorded initial state has support outside the perturbed node (node " +
               std::to_string(i) + ")");
    }
  }
}

}  // namespace

BoundVerdict classify_bound(double measured, double bound) {
  if (measured <= bound) return BoundVerdict::Satisfied;
  if (measured <= bound * (1.0 + kSolverSlack) + 1e-12) {
    return BoundVerdict::ViolatedWithinSolverTolerance;
  }
  return BoundVerdict::Violated;
}

std::vector<BoundRecord> check_decay_bound(const DecayCertificate& dc, const InterconnectionGraph& g,
                                           const TrajectoryBundle& traj, int source_node,
                                           double x0_norm) {
  if (static_cast<int>(traj.state_dims.size()) != g.node_count) {
    fail(ErrorCode::DimensionMismatch, "bound check: trajectory and graph disagree on node count");
  }
  if (x0_norm <= 0.0) fail(ErrorCode::InvalidArgument, "bound check: perturbation norm must be > 0");
  require_single_node_support(traj, source_node);

  const auto dist = distances_from(g, source_node);
  const auto& c = dc.constants;
  std::vector<BoundRecord> records;
  records.reserve(static_cast<std::size_t>(g.node_count) + 8);

  for (int node = 1; node <= g.node_count; ++node) {
    BoundRecord rec;
    rec.label = "node " + std::to_string(node);
    rec.target = IndexSet::of({node});
    rec.measured = discrete_l2(traj, rec.target);
    if (dist[node - 1]) {
      rec.distance = dist[node - 1];
      rec.bound = c.scale * std::pow(c.decay_factor, *rec.distance) * x0_norm;
      rec.verdict = classify_bound(rec.measured, rec.bound);
    } else {
      rec.verdict = BoundVerdict::SkippedUnreachable;
    }
    records.push_back(std::move(rec));
  }

  const auto shells = level_sets(g, source_node);
  for (std::size_t k = 0; k < shells.size(); ++k) {
    if (shells[k].empty()) continue;
    BoundRecord rec;
    rec.label = "shell " + std::to_string(k);
    rec.target = shells[k];
    rec.distance = static_cast<int>(k);
    rec.measured = discrete_l2(traj, rec.target);
    rec.bound = c.scale * std::pow(c.decay_factor, static_cast<double>(k)) * x0_norm;
    rec.verdict = classify_bound(rec.measured, rec.bound);
    records.push_back(std::move(rec));
  }
  return records;
}

BoundRecord check_init_bound(const DecayCertificate& dc, const TrajectoryBundle& traj,
                             double x0_norm) {
  if (x0_norm <= 0.0) fail(ErrorCode::InvalidArgument, "init bound: perturbation norm must be > 0");
  BoundRecord rec;
  rec.label = "whole trajectory";
  std::vector<int> all(traj.state_dims.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i) + 1;
  rec.target = IndexSet::of(std::move(all));
  rec.distance = 0;
  rec.measured = discrete_l2_all(traj);
  rec.bound = dc.constants.init_gain * x0_norm;
  rec.verdict = classify_bound(rec.measured, rec.bound);
  return rec;
}

CertificateValidation validate_vehicle_certificate(const ControllabilityCertificate& cert,
                                                   const VehicleDragParams& p, int vehicle_count,
                                                   double box_radius, int rollouts, double horizon,
                                                   double dt, unsigned seed) {
  if (vehicle_count < 1) fail(ErrorCode::InvalidArgument, "validation needs at least one vehicle");
  std::vector<SubsystemDynamics> subs(vehicle_count, vehicle_dynamics(p));
  AggregateDynamics dyn(std::move(subs));

  const double kappa = p.quadratic;
  auto feedback = [kappa, &dyn](ConstVecRef x, VecRef u) {
    for (int i = 1; i <= dyn.node_count(); ++i) {
      const double y = x[dyn.state_offset(i)];
      const double v = x[dyn.state_offset(i) + 1];
      u[dyn.control_offset(i)] = -y + kappa * v * std::abs(v);
    }
  };

  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> coord(-box_radius, box_radius);
  const int steps = static_cast<int>(std::ceil(horizon / dt));

  CertificateValidation out;
  out.ok = true;
  out.rollouts = rollouts;
  for (int r = 0; r < rollouts; ++r) {
    Eigen::VectorXd x0(dyn.state_dim());
    for (int i = 0; i < x0.size(); ++i) x0[i] = coord(rng);
    const double x0_norm = x0.norm();
    if (x0_norm == 0.0) continue;

    TrajectoryBundle traj = simulate_feedback(dyn, x0, feedback, dt, steps);
    for (int k = 0; k <= steps; ++k) {
      const double envelope = cert.overshoot * std::exp(-cert.rate * k * dt) * x0_norm;
      const double state_ratio = traj.states.col(k).norm() / envelope;
      out.worst_state_ratio = std::max(out.worst_state_ratio, state_ratio);
      if (k < steps) {
        const double control_ratio = traj.controls.col(k).norm() / envelope;
        out.worst_control_ratio = std::max(out.worst_control_ratio, control_ratio);
        if (control_ratio > 1.0) out.ok = false;
      }
      if (state_ratio > 1.0) out.ok = false;
    }
  }
  return out;
}

}  // namespace sensdecay
