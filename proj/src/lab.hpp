#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bounds.hpp"
#include "reduced.hpp"
#include "solver.hpp"

namespace sensdecay {

/// Full description of one chain experiment. Defaults reproduce the
/// benchmark scenario (25 vehicles, perturbation at node 12), so `run` with
/// no config file is already meaningful.
struct ExperimentConfig {
  // model
  int vehicle_count = 25;
  double drag_viscous = 5.0;
  double drag_quadratic = 10.0;
  double velocity_weight = 0.1;
  double control_weight = 0.1;
  // perturbation
  int source_node = 12;
  std::vector<double> perturbation = {1.0, 1.0};
  // solver
  double step = 0.05;
  int horizon = 40;
  double eps = 1e-4;
  double terminal_weight = 10.0;
  int max_steps = 2000;
  // certificate
  double omega_radius = 2.0;
  double rate_safety = 0.95;
  double overshoot_safety = 1.05;
  double cert_sample_horizon = 30.0;
  double cert_sample_step = 0.01;
  // sweep
  std::vector<int> sweep_sizes = {10, 25, 50};
  std::vector<std::string> sweep_sources = {"middle"};
  // output
  std::string out_dir = "out";
};

void validate_config(const ExperimentConfig& cfg);

/// Merges an INI-style file ([section] + key = value) into cfg.
void apply_config_file(ExperimentConfig& cfg, const std::string& path);

/// Sets one value by dotted key, e.g. "solver.h" or "model.s".
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);
std::vector<std::string> config_keys();

/// Resolves a sweep source token ("middle" or a literal node) for a chain size.
int resolve_source_token(const std::string& token, int vehicle_count);

/// Log-linear fit of per-node norms against graph distance. Points with norm
/// at or below the floor are excluded; everything else enters individually.
struct DecayFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double empirical_decay = 0.0;  // exp(slope)
  int points_used = 0;
};

inline constexpr double kFitNormFloor = 1e-14;

DecayFit fit_decay(const std::vector<double>& norms, const std::vector<int>& distances);

struct ExperimentResult {
  ExperimentConfig config;
  DecayCertificate certificate;
  SolveReport solve;
  std::vector<std::optional<int>> node_distances;  // index 0 = node 1
  std::vector<double> node_norms;
  std::vector<BoundRecord> bound_records;  // singleton targets first, then shells
  BoundRecord init_record;
  std::optional<DecayFit> fit;
  double x0_norm = 0.0;
  bool all_satisfied = false;
  std::string out_dir;  // empty when nothing was written
};

/// Builds the chain cost, graph and certificate, runs the receding-horizon
/// solve, evaluates every bound, fits the decay and (optionally) writes
/// per_node.csv, trajectory.csv and summary.json into cfg.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_outputs = true);

struct SweepCell {
  int size = 0;
  int source = 0;
  bool ok = false;
  std::string error;
  double empirical_decay = 0.0;
  double theoretical_decay = 0.0;
  double slope = 0.0;
  double r_squared = 0.0;
  int steps = 0;
  double wall_seconds = 0.0;
  bool all_satisfied = false;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::string csv_path;
  int failed_cells = 0;
  int violated_cells = 0;
};

/// One experiment per (size, source) combination; failures are recorded and
/// the sweep continues. Cells run in parallel when jobs > 1.
SweepResult run_sweep(const ExperimentConfig& cfg, int jobs = 1);

struct StoredNodeRecord {
  int node = 0;
  int dist = 0;
  double l2_norm = 0.0;
  double bound_value = 0.0;
  int satisfied = 0;
};

std::vector<StoredNodeRecord> read_per_node_csv(const std::string& path);

struct CheckResult {
  std::vector<BoundRecord> records;
  BoundRecord init_record;
  bool all_satisfied = false;
  int stored_flag_mismatches = 0;
};

/// Re-verifies a stored per-node table against constants recomputed from the
/// configuration; distances are recomputed and must match the stored ones.
CheckResult check_stored(const ExperimentConfig& cfg, const std::string& per_node_csv);

/// Scalar summary (the keys written to summary.json) for results and for
/// certificate-only queries.
std::map<std::string, double> summary_scalars(const ExperimentResult& result);
std::map<std::string, double> certificate_scalars(const DecayCertificate& dc);

/// Certificate and constants for a configuration, without running the solve.
DecayCertificate certify(const ExperimentConfig& cfg);

/// Shortest round-trip-exact decimal form used in all CSV output.
std::string format_double(double v);

void write_experiment_outputs(const ExperimentResult& result, const std::string& dir);

}  // namespace sensdecay
