#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "topology.hpp"

namespace sensdecay {

using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;
using VecRef = Eigen::Ref<Eigen::VectorXd>;
using MatRef = Eigen::Ref<Eigen::MatrixXd>;

/// One subsystem: vector field plus analytic Jacobians. The field must
/// vanish at (0, 0); this is validated whenever subsystems are aggregated.
struct SubsystemDynamics {
  int state_dim = 0;
  int control_dim = 0;
  std::function<void(ConstVecRef x, ConstVecRef u, VecRef out)> field;
  std::function<void(ConstVecRef x, ConstVecRef u, MatRef out)> state_jacobian;
  std::function<void(ConstVecRef x, ConstVecRef u, MatRef out)> control_jacobian;
  std::string label;
};

void validate_equilibrium(const SubsystemDynamics& dyn, double tol = 1e-14);

/// Double integrator with viscous and quadratic drag on the velocity.
struct VehicleDragParams {
  double viscous = 5.0;    // linear drag coefficient
  double quadratic = 10.0; // speed-proportional drag coefficient
};

/// (position', velocity') = (v, -viscous*v - quadratic*v|v| + u)
Eigen::Vector2d vehicle_field(const VehicleDragParams& p, const Eigen::Vector2d& state, double control);

SubsystemDynamics vehicle_dynamics(const VehicleDragParams& p);

/// Stacked decoupled subsystems sharing one aggregated state/control vector.
class AggregateDynamics {
public:
  explicit AggregateDynamics(std::vector<SubsystemDynamics> subsystems);

  int node_count() const { return static_cast<int>(subs_.size()); }
  int state_dim() const { return state_dim_; }
  int control_dim() const { return control_dim_; }
  int state_offset(int node) const { return state_offsets_[node - 1]; }
  int control_offset(int node) const { return control_offsets_[node - 1]; }
  const SubsystemDynamics& subsystem(int node) const { return subs_[node - 1]; }
  std::vector<int> state_dims() const;
  std::vector<int> control_dims() const;

  void field(ConstVecRef x, ConstVecRef u, VecRef out) const;

  /// Restriction to a subset of nodes (shares the subsystem definitions).
  AggregateDynamics restricted(const IndexSet& nodes) const;

private:
  std::vector<SubsystemDynamics> subs_;
  std::vector<int> state_offsets_;
  std::vector<int> control_offsets_;
  int state_dim_ = 0;
  int control_dim_ = 0;
};

/// Classical RK4 step with the control held constant over the step.
/// Throws Numeric naming the stage when an intermediate value is not finite.
Eigen::VectorXd rk4_step(const AggregateDynamics& dyn, ConstVecRef x, ConstVecRef u, double h);

/// Reverse-mode sweep of one RK4 step: given the gradient `seed` with respect
/// to the step output, accumulates the exact gradients with respect to the
/// step input and the held control.
void rk4_adjoint(const AggregateDynamics& dyn, ConstVecRef x, ConstVecRef u, double h,
                 ConstVecRef seed, VecRef grad_x, VecRef grad_u);

/// Time grid with per-subsystem state and control samples. states has one
/// more column than controls; column 0 is the initial condition.
struct TrajectoryBundle {
  double time_step = 0.0;
  Eigen::MatrixXd states;    // state_dim x (steps+1)
  Eigen::MatrixXd controls;  // control_dim x steps
  std::vector<int> state_dims;
  std::vector<int> control_dims;
  std::vector<int> state_offsets;
  std::vector<int> control_offsets;

  int steps() const { return static_cast<int>(controls.cols()); }
  int sample_count() const { return static_cast<int>(states.cols()); }
  Eigen::VectorXd node_state(int node, int sample) const;
  double node_norm(int node, int sample) const;
};

TrajectoryBundle make_bundle(const AggregateDynamics& dyn, double h, int steps);

inline constexpr double kDefaultBlowup = 1e8;

/// Rolls the aggregated system forward under a piecewise-constant control
/// sequence. Throws Divergence (naming the step) if the state norm passes
/// `blowup`.
TrajectoryBundle simulate(const AggregateDynamics& dyn, ConstVecRef x0,
                          const Eigen::MatrixXd& controls, double h,
                          double blowup = kDefaultBlowup);

/// Closed-loop rollout: the control is recomputed from the state at every
/// RK4 stage, so a state feedback is integrated without zero-order-hold error.
TrajectoryBundle simulate_feedback(const AggregateDynamics& dyn, ConstVecRef x0,
                                   const std::function<void(ConstVecRef, VecRef)>& feedback,
                                   double h, int steps, double blowup = kDefaultBlowup);

/// Discrete L2 norm over the nodes of `target`: sqrt(h * sum_{k=1..N} |x_target(k)|^2).
/// The k = 0 sample is excluded by convention.
double discrete_l2(const TrajectoryBundle& traj, const IndexSet& target);

/// Same quadrature over all nodes.
double discrete_l2_all(const TrajectoryBundle& traj);

}  // namespace sensdecay
