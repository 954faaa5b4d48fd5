#include "cost.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>

namespace sensdecay {

QuadraticCost::QuadraticCost(std::vector<int> state_dims, std::vector<Eigen::MatrixXd> control_blocks)
    : state_dims_(std::move(state_dims)), control_blocks_(std::move(control_blocks)) {
  if (state_dims_.empty() || state_dims_.size() != control_blocks_.size()) {
    fail(ErrorCode::DimensionMismatch, "cost: need one state dimension and one control block per node");
  }
  state_offsets_.reserve(state_dims_.size());
  control_offsets_.reserve(state_dims_.size());
  for (std::size_t k = 0; k < state_dims_.size(); ++k) {
    if (state_dims_[k] <= 0) fail(ErrorCode::InvalidArgument, "cost: state dimensions must be positive");
    const auto& r = control_blocks_[k];
    if (r.rows() != r.cols() || r.rows() <= 0) {
      fail(ErrorCode::DimensionMismatch, "cost: control block " + std::to_string(k + 1) + " must be square");
    }
    if (!r.isApprox(r.transpose(), 1e-12)) {
      fail(ErrorCode::Validation, "cost: control block " + std::to_string(k + 1) + " is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
    if (es.eigenvalues().minCoeff() <= 0.0) {
      fail(ErrorCode::NotPositiveDefinite,
           "cost: control block " + std::to_string(k + 1) + " is not positive definite");
    }
    state_offsets_.push_back(state_dim_);
    control_offsets_.push_back(control_dim_);
    control_dims_.push_back(static_cast<int>(r.rows()));
    state_dim_ += state_dims_[k];
    control_dim_ += static_cast<int>(r.rows());
  }
  rows_.assign(state_dims_.size(), {});
}

void QuadraticCost::set_state_block(int i, int j, Eigen::MatrixXd block) {
  const int s = node_count();
  if (i < 1 || i > s || j < 1 || j > s) fail(ErrorCode::InvalidArgument, "set_state_block: node out of range");
  if (block.rows() != state_dims_[i - 1] || block.cols() != state_dims_[j - 1]) {
    fail(ErrorCode::DimensionMismatch, "set_state_block: block shape does not match declared node dimensions");
  }
  cached_bounds_.reset();
  auto& row = rows_[i - 1];
  auto it = std::lower_bound(row.begin(), row.end(), j,
                             [](const BlockEntry& e, int col) { return e.col < col; });
  if (it != row.end() && it->col == j) {
    it->block = std::move(block);
  } else {
    row.insert(it, BlockEntry{j, std::move(block)});
  }
}

const Eigen::MatrixXd* QuadraticCost::state_block(int i, int j) const {
  if (i < 1 || i > node_count() || j < 1 || j > node_count()) {
    fail(ErrorCode::InvalidArgument, "state_block: node out of range");
  }
  const auto& row = rows_[i - 1];
  auto it = std::lower_bound(row.begin(), row.end(), j,
                             [](const BlockEntry& e, int col) { return e.col < col; });
  if (it != row.end() && it->col == j) return &it->block;
  return nullptr;
}

double QuadraticCost::stage_cost(ConstVecRef x, ConstVecRef u) const {
  if (x.size() != state_dim_ || u.size() != control_dim_) {
    fail(ErrorCode::DimensionMismatch, "stage_cost: state/control size mismatch");
  }
  double value = 0.0;
  for (int i = 1; i <= node_count(); ++i) {
    const auto xi = x.segment(state_offsets_[i - 1], state_dims_[i - 1]);
    for (const auto& entry : rows_[i - 1]) {
      const auto xj = x.segment(state_offsets_[entry.col - 1], state_dims_[entry.col - 1]);
      value += xi.dot(entry.block * xj);
    }
    const auto ui = u.segment(control_offsets_[i - 1], control_dims_[i - 1]);
    value += ui.dot(control_blocks_[i - 1] * ui);
  }
  return value;
}

void QuadraticCost::apply_state_matrix(ConstVecRef x, VecRef out) const {
  if (x.size() != state_dim_ || out.size() != state_dim_) {
    fail(ErrorCode::DimensionMismatch, "apply_state_matrix: size mismatch");
  }
  out.setZero();
  for (int i = 1; i <= node_count(); ++i) {
    auto oi = out.segment(state_offsets_[i - 1], state_dims_[i - 1]);
    for (const auto& entry : rows_[i - 1]) {
      const auto xj = x.segment(state_offsets_[entry.col - 1], state_dims_[entry.col - 1]);
      oi.noalias() += entry.block * xj;
    }
  }
}

void QuadraticCost::apply_control_matrix(ConstVecRef u, VecRef out) const {
  if (u.size() != control_dim_ || out.size() != control_dim_) {
    fail(ErrorCode::DimensionMismatch, "apply_control_matrix: size mismatch");
  }
  for (int k = 1; k <= node_count(); ++k) {
    out.segment(control_offsets_[k - 1], control_dims_[k - 1]).noalias() =
        control_blocks_[k - 1] * u.segment(control_offsets_[k - 1], control_dims_[k - 1]);
  }
}

Eigen::MatrixXd QuadraticCost::dense_state_matrix() const {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(state_dim_, state_dim_);
  for (int i = 1; i <= node_count(); ++i) {
    for (const auto& entry : rows_[i - 1]) {
      q.block(state_offsets_[i - 1], state_offsets_[entry.col - 1],
              state_dims_[i - 1], state_dims_[entry.col - 1]) = entry.block;
    }
  }
  return q;
}

Eigen::MatrixXd QuadraticCost::dense_control_matrix() const {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(control_dim_, control_dim_);
  for (int k = 1; k <= node_count(); ++k) {
    r.block(control_offsets_[k - 1], control_offsets_[k - 1],
            control_dims_[k - 1], control_dims_[k - 1]) = control_blocks_[k - 1];
  }
  return r;
}

double QuadraticCost::max_abs_entry() const {
  double m = 0.0;
  for (const auto& row : rows_) {
    for (const auto& entry : row) {
      if (entry.block.size() > 0) m = std::max(m, entry.block.cwiseAbs().maxCoeff());
    }
  }
  for (const auto& r : control_blocks_) m = std::max(m, r.cwiseAbs().maxCoeff());
  return m;
}

void QuadraticCost::validate_symmetric(double rel_tol) const {
  const double tol = rel_tol * std::max(1.0, max_abs_entry());
  for (int i = 1; i <= node_count(); ++i) {
    for (const auto& entry : rows_[i - 1]) {
      const int j = entry.col;
      const Eigen::MatrixXd* mirror = state_block(j, i);
      const double mismatch =
          mirror ? (entry.block - mirror->transpose()).cwiseAbs().maxCoeff()
                 : entry.block.cwiseAbs().maxCoeff();
      if (mismatch > tol) {
        fail(ErrorCode::Validation, "cost matrix asymmetric at block (" + std::to_string(i) + "," +
                                        std::to_string(j) + ")");
      }
    }
  }
}

namespace {

// Largest eigenvalue of the symmetric PSD operator `apply` by power iteration.
double power_iteration_max(int dim, const std::function<void(ConstVecRef, VecRef)>& apply,
                           const SpectralOptions& opts) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(dim);
  for (int k = 0; k < dim; ++k) v[k] += 0.5 / (k + 1.0);  // break symmetry deterministically
  v.normalize();
  Eigen::VectorXd w(dim);
  double lambda = 0.0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    apply(v, w);
    double next = v.dot(w);
    double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (std::abs(next - lambda) <= opts.tol * std::max(1.0, std::abs(next))) {
      return next;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace

const SpectralBounds& QuadraticCost::spectral(const SpectralOptions& opts) const {
  if (cached_bounds_) return *cached_bounds_;
  validate_symmetric();

  SpectralBounds sb;
  if (state_dim_ <= opts.dense_cutoff) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_state_matrix());
    sb.q_min_eig = es.eigenvalues().minCoeff();
    sb.q_max_eig = es.eigenvalues().maxCoeff();
  } else {
    auto apply_q = [this](ConstVecRef x, VecRef out) { apply_state_matrix(x, out); };
    const double q_max = power_iteration_max(state_dim_, apply_q, opts);
    // Smallest eigenvalue through the shifted operator q_max*I - Q.
    auto apply_shifted = [this, q_max](ConstVecRef x, VecRef out) {
      apply_state_matrix(x, out);
      out = q_max * x - out;
    };
    const double shifted_max = power_iteration_max(state_dim_, apply_shifted, opts);
    sb.q_max_eig = q_max;
    sb.q_min_eig = q_max - shifted_max;
  }

  sb.r_max_eig = 0.0;
  for (const auto& r : control_blocks_) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
    sb.r_max_eig = std::max(sb.r_max_eig, es.eigenvalues().maxCoeff());
  }

  if (sb.q_min_eig <= 1e-10 * std::max(1.0, sb.q_max_eig)) {
    fail(ErrorCode::NotPositiveDefinite,
         "state cost matrix is not safely positive definite (min eigenvalue " +
             std::to_string(sb.q_min_eig) + ")");
  }
  cached_bounds_ = sb;
  return *cached_bounds_;
}

SpectralBounds spectral_bounds(const QuadraticCost& cost, const SpectralOptions& opts) {
  return cost.spectral(opts);
}

QuadraticCost build_chain_cost(int vehicle_count, double velocity_weight, double control_weight) {
  if (vehicle_count < 2) fail(ErrorCode::InvalidArgument, "chain cost needs at least 2 vehicles");
  if (velocity_weight <= 0.0 || control_weight <= 0.0) {
    fail(ErrorCode::InvalidArgument, "chain cost weights must be positive");
  }
  std::vector<int> state_dims(vehicle_count, 2);
  std::vector<Eigen::MatrixXd> r_blocks(vehicle_count,
                                        control_weight * Eigen::MatrixXd::Identity(1, 1));
  QuadraticCost cost(std::move(state_dims), std::move(r_blocks));

  Eigen::Matrix2d coupling = Eigen::Matrix2d::Zero();
  coupling(0, 0) = -1.0;
  for (int i = 1; i <= vehicle_count; ++i) {
    const bool boundary = (i == 1 || i == vehicle_count);
    Eigen::Matrix2d diag = Eigen::Matrix2d::Zero();
    diag(0, 0) = boundary ? 2.0 : 3.0;
    diag(1, 1) = velocity_weight;
    cost.set_state_block(i, i, diag);
    if (i < vehicle_count) {
      cost.set_state_block(i, i + 1, coupling);
      cost.set_state_block(i + 1, i, coupling.transpose());
    }
  }
  return cost;
}

}  // namespace sensdecay
