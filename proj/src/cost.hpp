#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "errors.hpp"

namespace sensdecay {

using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;
using VecRef = Eigen::Ref<Eigen::VectorXd>;

/// Certified spectral constants of the stage cost: the smallest and largest
/// eigenvalue of the state matrix and the largest eigenvalue over the
/// control blocks.
struct SpectralBounds {
  double q_min_eig = 0.0;
  double q_max_eig = 0.0;
  double r_max_eig = 0.0;
};

struct SpectralOptions {
  int dense_cutoff = 2000;   // use a full symmetric eigendecomposition up to this dimension
  double tol = 1e-10;        // relative convergence tolerance of the power iteration
  int max_iterations = 10000;
};

/// Stage cost x'Qx + u'Ru with Q stored block-sparse over the subsystem
/// layout and R block diagonal. Blocks are set during construction; after
/// the spectral bounds have been cached the object is treated as immutable.
class QuadraticCost {
public:
  QuadraticCost(std::vector<int> state_dims, std::vector<Eigen::MatrixXd> control_blocks);

  int node_count() const { return static_cast<int>(state_dims_.size()); }
  int state_dim() const { return state_dim_; }
  int control_dim() const { return control_dim_; }
  const std::vector<int>& state_dims() const { return state_dims_; }
  const std::vector<int>& control_dims() const { return control_dims_; }
  int state_offset(int node) const { return state_offsets_[node - 1]; }
  int control_offset(int node) const { return control_offsets_[node - 1]; }

  /// Installs block (i, j), 1-based. Symmetry is the caller's contract and is
  /// validated where it matters (graph construction, spectral bounds).
  void set_state_block(int i, int j, Eigen::MatrixXd block);

  /// Returns the stored block or nullptr when it is identically zero.
  const Eigen::MatrixXd* state_block(int i, int j) const;
  const Eigen::MatrixXd& control_block(int node) const { return control_blocks_[node - 1]; }

  double stage_cost(ConstVecRef x, ConstVecRef u) const;
  void apply_state_matrix(ConstVecRef x, VecRef out) const;    // out = Qx
  void apply_control_matrix(ConstVecRef u, VecRef out) const;  // out = Ru

  Eigen::MatrixXd dense_state_matrix() const;
  Eigen::MatrixXd dense_control_matrix() const;

  double max_abs_entry() const;
  void validate_symmetric(double rel_tol = 1e-12) const;

  /// Certified (mu, M_Q, M_R); computed once and cached. Throws
  /// NotPositiveDefinite when the smallest eigenvalue is not safely positive.
  const SpectralBounds& spectral(const SpectralOptions& opts = {}) const;
  bool spectral_cached() const { return cached_bounds_.has_value(); }

private:
  struct BlockEntry {
    int col = 0;  // 1-based
    Eigen::MatrixXd block;
  };

  std::vector<int> state_dims_;
  std::vector<int> control_dims_;
  std::vector<int> state_offsets_;
  std::vector<int> control_offsets_;
  int state_dim_ = 0;
  int control_dim_ = 0;
  std::vector<std::vector<BlockEntry>> rows_;  // per-row, sorted by col
  std::vector<Eigen::MatrixXd> control_blocks_;
  mutable std::optional<SpectralBounds> cached_bounds_;
};

SpectralBounds spectral_bounds(const QuadraticCost& cost, const SpectralOptions& opts = {});

/// Cost for a chain of double-integrator vehicles: unit position weights with
/// nearest-neighbor position coupling -1 (interior position diagonal 3,
/// boundary 2), velocity weight `velocity_weight`, and R = control_weight * I.
QuadraticCost build_chain_cost(int vehicle_count, double velocity_weight, double control_weight);

}  // namespace sensdecay
