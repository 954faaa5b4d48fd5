#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "solver.hpp"
#include "topology.hpp"

namespace sensdecay {

/// Optimization restricted to an inner node set with the trajectories of a
/// disjoint boundary set frozen on the solver grid (zero-order hold). Built
/// from a full problem by make_reduced; self-contained afterwards.
struct ReducedProblem {
  IndexSet inner;
  IndexSet boundary;
  Eigen::MatrixXd fixed_series;  // stacked boundary states, (sum n_j) x (grid length)

  AggregateDynamics dynamics;    // restriction of the full dynamics to `inner`
  QuadraticCost internal_cost;   // internal coupling and control blocks of `inner`

  struct CrossTerm {
    int inner_offset = 0;  // into the reduced state vector
    int inner_dim = 0;
    int fixed_offset = 0;  // into a fixed_series column
    int fixed_dim = 0;
    Eigen::MatrixXd block;   // Q_{i j}
    Eigen::MatrixXd mirror;  // Q_{j i}
  };
  std::vector<CrossTerm> cross;

  Eigen::VectorXd initial_state;
  std::optional<ControlBox> control_box;
  double step = 0.05;
  int horizon = 40;
  double terminal_weight = 10.0;
  bool closure_ok = false;  // neighbor-closure condition at construction time

  int grid_length() const { return static_cast<int>(fixed_series.cols()); }
  /// Frozen boundary states at grid index t; zero beyond the recorded grid.
  Eigen::VectorXd fixed_at(int t) const;
};

struct ClosureCheck {
  bool holds = false;
  std::optional<int> violator;  // a node at distance 1 from `inner` missing from `boundary`
};

/// True iff every node at graph distance exactly 1 from `inner` is in `boundary`.
ClosureCheck check_closure(const InterconnectionGraph& g, const IndexSet& inner,
                           const IndexSet& boundary);

ReducedProblem make_reduced(const OcpProblem& base, const IndexSet& inner, const IndexSet& boundary,
                            Eigen::MatrixXd fixed_series);

/// Stage cost of the reduced problem at grid index t_index:
/// cross terms against the frozen boundary + internal quadratic + control
/// quadratic. The cross part can make the total negative.
double reduced_stage_cost(const ReducedProblem& rp, ConstVecRef x_inner, ConstVecRef u_inner,
                          int t_index);

struct ReducedSolveReport {
  SolveReport report;
  bool closure_ok = false;      // when false the result is not a consistency oracle
  bool fixed_extended = false;  // frozen trajectories were extended by zero
  double reduced_objective = 0.0;  // realized closed-loop reduced cost (may be negative)
};

/// Receding-horizon solve of the reduced problem. Terminates once both the
/// inner state norm and the remaining frozen excitation fall below eps.
ReducedSolveReport solve_reduced(const ReducedProblem& rp, double eps, int max_steps,
                                 const InnerSolveOptions& opts = {});

}  // namespace sensdecay
