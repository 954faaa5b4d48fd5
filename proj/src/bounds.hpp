#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cost.hpp"
#include "model.hpp"
#include "topology.hpp"

namespace sensdecay {

/// Exponential null-controllability certificate: some admissible control
/// drives every initial state in the configured region to zero with
/// overshoot * exp(-rate * t) envelopes on both the state and the control.
struct ControllabilityCertificate {
  double overshoot = 1.0;      // >= 1
  double rate = 0.0;           // > 0, 1/time
  std::string witness;         // description of the feedback used
  double omega_norm_bound = 0.0;  // bound on |x| over the initial-value region
};

struct CertificateOptions {
  double sample_horizon = 30.0;
  double sample_step = 0.01;
  double rate_safety = 0.95;       // shrink applied to the sampled decay rate
  double overshoot_safety = 1.05;  // inflation applied to the sampled envelope
};

/// Certificate for the drag-vehicle family via the linearizing feedback
/// u = -position + quadratic * v|v|, whose closed loop is linear with system
/// matrix [[0, 1], [-1, -viscous]]. Requires viscous > 0.
ControllabilityCertificate vehicle_certificate(const VehicleDragParams& p, double omega_norm_bound,
                                               const CertificateOptions& opts = {});

/// Derived decay constants: the trajectory-norm gain for a unit perturbation,
/// the boundary-to-interior propagation gain, and the per-distance geometric
/// factor they induce.
struct DecayConstants {
  double init_gain = 0.0;               // overshoot * sqrt((M_Q + M_R) / (2 rate mu))
  double prop_gain = 0.0;               // 2 M_Q / mu
  double scale = 0.0;                   // 2 * max(init_gain, prop_gain)
  std::uint64_t steps_per_halving = 0;  // ceil(scale)^2 graph hops per factor-2 decay
  double decay_factor = 0.0;            // 2^(-1/steps_per_halving), strictly inside (0, 1)
};

struct DecayCertificate {
  ControllabilityCertificate cert;
  SpectralBounds spectral;
  DecayConstants constants;
};

DecayCertificate derive_decay_constants(const ControllabilityCertificate& cert,
                                        const SpectralBounds& sb);

enum class BoundVerdict {
  Satisfied,
  ViolatedWithinSolverTolerance,
  Violated,
  SkippedUnreachable,
};

const char* to_string(BoundVerdict v);

struct BoundRecord {
  std::string label;
  IndexSet target;
  std::optional<int> distance;  // empty marks an unreachable target (bound vacuous)
  double measured = 0.0;
  double bound = 0.0;
  BoundVerdict verdict = BoundVerdict::Satisfied;
};

/// Relative slack separating a hard bound violation from one attributable to
/// solver tolerance.
inline constexpr double kSolverSlack = 1e-6;

BoundVerdict classify_bound(double measured, double bound);

/// Checks measured <= scale * decay_factor^dist * x0_norm for every singleton
/// target and every distance shell around source_node. The trajectory must
/// come from an initial state supported on source_node only.
std::vector<BoundRecord> check_decay_bound(const DecayCertificate& dc,
                                           const InterconnectionGraph& g,
                                           const TrajectoryBundle& traj, int source_node,
                                           double x0_norm);

/// Whole-trajectory estimate: discrete L2 norm of all nodes against
/// init_gain * x0_norm.
BoundRecord check_init_bound(const DecayCertificate& dc, const TrajectoryBundle& traj,
                             double x0_norm);

struct CertificateValidation {
  bool ok = false;
  double worst_state_ratio = 0.0;    // max over samples of |x(t)| / envelope
  double worst_control_ratio = 0.0;  // max over samples of |u(t)| / envelope
  int rollouts = 0;
};

/// Monte-Carlo validation of the certificate: random initial states in the
/// box of radius box_radius, closed-loop rollouts under the witness feedback,
/// both envelope inequalities checked at every sample time.
CertificateValidation validate_vehicle_certificate(const ControllabilityCertificate& cert,
                                                   const VehicleDragParams& p, int vehicle_count,
                                                   double box_radius, int rollouts, double horizon,
                                                   double dt, unsigned seed);

}  // namespace sensdecay
