#include "lab.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

namespace sensdecay {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

int parse_int(const std::string& s, const std::string& key) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    fail(ErrorCode::Config, "config: '" + s + "' is not an integer for " + key);
  }
  return value;
}

double parse_double(const std::string& s, const std::string& key) {
  char* end = nullptr;
  const double value = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty() || !std::isfinite(value)) {
    fail(ErrorCode::Config, "config: '" + s + "' is not a finite number for " + key);
  }
  return value;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ' ';
    out += parts[i];
  }
  return out;
}

}  // namespace

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.vehicle_count < 2) fail(ErrorCode::Config, "config: model.s must be at least 2");
  if (cfg.drag_viscous < 0.0 || cfg.drag_quadratic < 0.0) {
    fail(ErrorCode::Config, "config: drag coefficients must be nonnegative");
  }
  if (cfg.velocity_weight <= 0.0 || cfg.control_weight <= 0.0) {
    fail(ErrorCode::Config, "config: model.gamma and model.delta must be positive");
  }
  if (cfg.source_node < 1 || cfg.source_node > cfg.vehicle_count) {
    fail(ErrorCode::Config, "config: perturbation.i_star must lie in 1..model.s");
  }
  if (cfg.perturbation.size() != 2) {
    fail(ErrorCode::Config, "config: perturbation.x0 must have 2 entries (position, velocity)");
  }
  double norm2 = 0.0;
  for (double v : cfg.perturbation) norm2 += v * v;
  if (norm2 == 0.0) fail(ErrorCode::Config, "config: perturbation.x0 must be nonzero");
  if (cfg.step <= 0.0) fail(ErrorCode::Config, "config: solver.h must be positive");
  if (cfg.horizon < 1) fail(ErrorCode::Config, "config: solver.horizon must be at least 1");
  if (cfg.eps <= 0.0) fail(ErrorCode::Config, "config: solver.eps must be positive");
  if (cfg.terminal_weight < 0.0) fail(ErrorCode::Config, "config: solver.terminal_weight must be >= 0");
  if (cfg.max_steps < 0) fail(ErrorCode::Config, "config: solver.max_steps must be >= 0");
  if (cfg.omega_radius < 0.0) fail(ErrorCode::Config, "config: certificate.omega_radius must be >= 0");
  if (cfg.rate_safety <= 0.0 || cfg.rate_safety > 1.0) {
    fail(ErrorCode::Config, "config: certificate.rate_safety must lie in (0, 1]");
  }
  if (cfg.overshoot_safety < 1.0) {
    fail(ErrorCode::Config, "config: certificate.overshoot_safety must be >= 1");
  }
  if (cfg.cert_sample_horizon <= 0.0 || cfg.cert_sample_step <= 0.0) {
    fail(ErrorCode::Config, "config: certificate sampling parameters must be positive");
  }
  if (cfg.sweep_sizes.empty() || cfg.sweep_sources.empty()) {
    fail(ErrorCode::Config, "config: sweep lists must be nonempty");
  }
  for (int s : cfg.sweep_sizes) {
    if (s < 2) fail(ErrorCode::Config, "config: sweep.s_values entries must be at least 2");
  }
  for (const auto& tok : cfg.sweep_sources) {
    if (tok != "middle") {
      const int v = parse_int(tok, "sweep.i_star_values");
      if (v < 1) fail(ErrorCode::Config, "config: sweep.i_star_values entries must be >= 1");
    }
  }
}

int resolve_source_token(const std::string& token, int vehicle_count) {
  int node = token == "middle" ? std::max(1, vehicle_count / 2)
                               : parse_int(token, "sweep.i_star_values");
  if (node < 1 || node > vehicle_count) {
    fail(ErrorCode::Config, "sweep source " + token + " out of range for s=" +
                                std::to_string(vehicle_count));
  }
  return node;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "model.s") cfg.vehicle_count = parse_int(v, key);
  else if (key == "model.beta") cfg.drag_viscous = parse_double(v, key);
  else if (key == "model.kappa") cfg.drag_quadratic = parse_double(v, key);
  else if (key == "model.gamma") cfg.velocity_weight = parse_double(v, key);
  else if (key == "model.delta") cfg.control_weight = parse_double(v, key);
  else if (key == "perturbation.i_star") cfg.source_node = parse_int(v, key);
  else if (key == "perturbation.x0") {
    std::vector<double> values;
    for (const auto& tok : split_ws(v)) values.push_back(parse_double(tok, key));
    cfg.perturbation = std::move(values);
  } else if (key == "solver.h") cfg.step = parse_double(v, key);
  else if (key == "solver.horizon") cfg.horizon = parse_int(v, key);
  else if (key == "solver.eps") cfg.eps = parse_double(v, key);
  else if (key == "solver.terminal_weight") cfg.terminal_weight = parse_double(v, key);
  else if (key == "solver.max_steps") cfg.max_steps = parse_int(v, key);
  else if (key == "certificate.omega_radius") cfg.omega_radius = parse_double(v, key);
  else if (key == "certificate.rate_safety") cfg.rate_safety = parse_double(v, key);
  else if (key == "certificate.overshoot_safety") cfg.overshoot_safety = parse_double(v, key);
  else if (key == "certificate.sample_horizon") cfg.cert_sample_horizon = parse_double(v, key);
  else if (key == "certificate.sample_step") cfg.cert_sample_step = parse_double(v, key);
  else if (key == "sweep.s_values") {
    std::vector<int> sizes;
    for (const auto& tok : split_ws(v)) sizes.push_back(parse_int(tok, key));
    cfg.sweep_sizes = std::move(sizes);
  } else if (key == "sweep.i_star_values") cfg.sweep_sources = split_ws(v);
  else if (key == "output.out_dir") cfg.out_dir = v;
  else fail(ErrorCode::Config, "config: unknown key '" + key + "'");
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) {
  if (key == "model.s") return std::to_string(cfg.vehicle_count);
  if (key == "model.beta") return format_double(cfg.drag_viscous);
  if (key == "model.kappa") return format_double(cfg.drag_quadratic);
  if (key == "model.gamma") return format_double(cfg.velocity_weight);
  if (key == "model.delta") return format_double(cfg.control_weight);
  if (key == "perturbation.i_star") return std::to_string(cfg.source_node);
  if (key == "perturbation.x0") {
    std::vector<std::string> parts;
    for (double v : cfg.perturbation) parts.push_back(format_double(v));
    return join(parts);
  }
  if (key == "solver.h") return format_double(cfg.step);
  if (key == "solver.horizon") return std::to_string(cfg.horizon);
  if (key == "solver.eps") return format_double(cfg.eps);
  if (key == "solver.terminal_weight") return format_double(cfg.terminal_weight);
  if (key == "solver.max_steps") return std::to_string(cfg.max_steps);
  if (key == "certificate.omega_radius") return format_double(cfg.omega_radius);
  if (key == "certificate.rate_safety") return format_double(cfg.rate_safety);
  if (key == "certificate.overshoot_safety") return format_double(cfg.overshoot_safety);
  if (key == "certificate.sample_horizon") return format_double(cfg.cert_sample_horizon);
  if (key == "certificate.sample_step") return format_double(cfg.cert_sample_step);
  if (key == "sweep.s_values") {
    std::vector<std::string> parts;
    for (int s : cfg.sweep_sizes) parts.push_back(std::to_string(s));
    return join(parts);
  }
  if (key == "sweep.i_star_values") return join(cfg.sweep_sources);
  if (key == "output.out_dir") return cfg.out_dir;
  fail(ErrorCode::Config, "config: unknown key '" + key + "'");
}

std::vector<std::string> config_keys() {
  return {"model.s", "model.beta", "model.kappa", "model.gamma", "model.delta",
          "perturbation.i_star", "perturbation.x0",
          "solver.h", "solver.horizon", "solver.eps", "solver.terminal_weight", "solver.max_steps",
          "certificate.omega_radius", "certificate.rate_safety", "certificate.overshoot_safety",
          "certificate.sample_horizon", "certificate.sample_step",
          "sweep.s_values", "sweep.i_star_values", "output.out_dir"};
}

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config file " + path);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        fail(ErrorCode::Config, path + ":" + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::Config, path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string dotted = section.empty() ? key : section + "." + key;
    try {
      set_config_value(cfg, dotted, value);
    } catch (const Error& e) {
      fail(ErrorCode::Config, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

DecayFit fit_decay(const std::vector<double>& norms, const std::vector<int>& distances) {
  if (norms.size() != distances.size()) {
    fail(ErrorCode::DimensionMismatch, "fit_decay: norms/distances length mismatch");
  }
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (norms[i] > kFitNormFloor) {
      xs.push_back(static_cast<double>(distances[i]));
      ys.push_back(std::log(norms[i]));
    }
  }
  if (xs.size() < 3) {
    fail(ErrorCode::InvalidArgument, "fit_decay: fewer than 3 nodes above the norm floor");
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) fail(ErrorCode::InvalidArgument, "fit_decay: all points share one distance");

  DecayFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.points_used = static_cast<int>(xs.size());
  if (syy <= 1e-30) {
    fit.r_squared = 1.0;  // constant norms: the flat line is an exact fit
  } else {
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
      ss_res += r * r;
    }
    fit.r_squared = 1.0 - ss_res / syy;
  }
  fit.empirical_decay = std::exp(fit.slope);
  return fit;
}

namespace {

json bound_record_json(const BoundRecord& rec) {
  json j;
  j["label"] = rec.label;
  j["nodes"] = rec.target.members;
  if (rec.distance) j["dist"] = *rec.distance;
  j["measured"] = rec.measured;
  j["bound"] = rec.bound;
  j["verdict"] = to_string(rec.verdict);
  return j;
}

void write_failure_marker(const std::string& dir, const std::string& stage, const std::string& what) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) return;
  json j;
  j["failed_stage"] = stage;
  j["error"] = what;
  std::ofstream out(fs::path(dir) / "summary.json");
  out << j.dump(2) << '\n';
}

}  // namespace

DecayCertificate certify(const ExperimentConfig& cfg) {
  validate_config(cfg);
  QuadraticCost cost = build_chain_cost(cfg.vehicle_count, cfg.velocity_weight, cfg.control_weight);
  const SpectralBounds sb = spectral_bounds(cost);
  CertificateOptions copts;
  copts.sample_horizon = cfg.cert_sample_horizon;
  copts.sample_step = cfg.cert_sample_step;
  copts.rate_safety = cfg.rate_safety;
  copts.overshoot_safety = cfg.overshoot_safety;
  const double omega_norm = cfg.omega_radius * std::sqrt(2.0 * cfg.vehicle_count);
  VehicleDragParams params{cfg.drag_viscous, cfg.drag_quadratic};
  return derive_decay_constants(vehicle_certificate(params, omega_norm, copts), sb);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_outputs) {
  std::string stage = "validate";
  try {
    validate_config(cfg);
    if (write_outputs && cfg.out_dir.empty()) {
      fail(ErrorCode::Config, "output.out_dir must be set when outputs are written");
    }

    ExperimentResult result;
    result.config = cfg;

    stage = "build_cost";
    QuadraticCost cost = build_chain_cost(cfg.vehicle_count, cfg.velocity_weight, cfg.control_weight);
    stage = "spectral_bounds";
    const SpectralBounds sb = spectral_bounds(cost);
    stage = "build_graph";
    const InterconnectionGraph graph = build_graph(cost);
    stage = "certificate";
    CertificateOptions copts;
    copts.sample_horizon = cfg.cert_sample_horizon;
    copts.sample_step = cfg.cert_sample_step;
    copts.rate_safety = cfg.rate_safety;
    copts.overshoot_safety = cfg.overshoot_safety;
    const double omega_norm = cfg.omega_radius * std::sqrt(2.0 * cfg.vehicle_count);
    VehicleDragParams params{cfg.drag_viscous, cfg.drag_quadratic};
    const ControllabilityCertificate cert = vehicle_certificate(params, omega_norm, copts);
    stage = "constants";
    result.certificate = derive_decay_constants(cert, sb);

    stage = "solve";
    std::vector<SubsystemDynamics> subs(cfg.vehicle_count, vehicle_dynamics(params));
    OcpProblem problem{AggregateDynamics(std::move(subs)),
                       std::move(cost),
                       Eigen::VectorXd::Zero(2 * cfg.vehicle_count),
                       std::nullopt,
                       cfg.step,
                       cfg.horizon,
                       cfg.terminal_weight};
    for (std::size_t i = 0; i < cfg.perturbation.size(); ++i) {
      problem.initial_state[problem.cost.state_offset(cfg.source_node) + static_cast<int>(i)] =
          cfg.perturbation[i];
    }
    result.x0_norm = std::sqrt(
        std::inner_product(cfg.perturbation.begin(), cfg.perturbation.end(),
                           cfg.perturbation.begin(), 0.0));
    result.solve = solve_mpc(problem, cfg.eps, cfg.max_steps);

    stage = "bound_check";
    result.bound_records = check_decay_bound(result.certificate, graph, result.solve.trajectory,
                                             cfg.source_node, result.x0_norm);
    result.init_record = check_init_bound(result.certificate, result.solve.trajectory, result.x0_norm);

    stage = "norms";
    result.node_distances = distances_from(graph, cfg.source_node);
    result.node_norms.resize(cfg.vehicle_count);
    for (int node = 1; node <= cfg.vehicle_count; ++node) {
      result.node_norms[node - 1] = result.bound_records[node - 1].measured;
    }

    stage = "fit";
    std::vector<double> norms;
    std::vector<int> dists;
    for (int node = 1; node <= cfg.vehicle_count; ++node) {
      if (result.node_distances[node - 1] && result.node_norms[node - 1] > kFitNormFloor) {
        norms.push_back(result.node_norms[node - 1]);
        dists.push_back(*result.node_distances[node - 1]);
      }
    }
    if (norms.size() >= 3) result.fit = fit_decay(norms, dists);

    result.all_satisfied = result.init_record.verdict == BoundVerdict::Satisfied;
    for (const auto& rec : result.bound_records) {
      if (rec.verdict == BoundVerdict::SkippedUnreachable) continue;
      if (rec.verdict != BoundVerdict::Satisfied) result.all_satisfied = false;
    }

    if (write_outputs) {
      stage = "write";
      write_experiment_outputs(result, cfg.out_dir);
      result.out_dir = cfg.out_dir;
    }
    return result;
  } catch (const Error& e) {
    if (write_outputs) write_failure_marker(cfg.out_dir, stage, e.what());
    throw Error(e.code(), "experiment stage '" + stage + "': " + e.what());
  } catch (const std::exception& e) {
    if (write_outputs) write_failure_marker(cfg.out_dir, stage, e.what());
    fail(ErrorCode::Internal, "experiment stage '" + stage + "': " + e.what());
  }
}

std::map<std::string, double> summary_scalars(const ExperimentResult& result) {
  std::map<std::string, double> m = certificate_scalars(result.certificate);
  m["N"] = result.solve.mpc_steps;
  m["objective"] = result.solve.objective_estimate;
  m["x0_norm"] = result.x0_norm;
  m["eps"] = result.config.eps;
  m["h"] = result.config.step;
  m["horizon"] = result.config.horizon;
  m["s"] = result.config.vehicle_count;
  m["i_star"] = result.config.source_node;
  if (result.fit) {
    m["slope"] = result.fit->slope;
    m["r2"] = result.fit->r_squared;
    m["empirical_rho"] = result.fit->empirical_decay;
  }
  return m;
}

std::map<std::string, double> certificate_scalars(const DecayCertificate& dc) {
  return {{"C", dc.cert.overshoot},
          {"sigma", dc.cert.rate},
          {"mu", dc.spectral.q_min_eig},
          {"M_Q", dc.spectral.q_max_eig},
          {"M_R", dc.spectral.r_max_eig},
          {"C_init", dc.constants.init_gain},
          {"C_prop", dc.constants.prop_gain},
          {"S", dc.constants.scale},
          {"q", static_cast<double>(dc.constants.steps_per_halving)},
          {"rho", dc.constants.decay_factor}};
}

void write_experiment_outputs(const ExperimentResult& result, const std::string& dir) {
  fs::create_directories(dir);
  const int s = result.config.vehicle_count;

  {
    std::ofstream out(fs::path(dir) / "per_node.csv");
    if (!out) fail(ErrorCode::Io, "cannot write per_node.csv in " + dir);
    out << "node,dist,l2_norm,bound_value,satisfied\n";
    for (int node = 1; node <= s; ++node) {
      const BoundRecord& rec = result.bound_records[node - 1];
      if (!rec.distance) continue;  // unreachable: listed in the summary instead
      out << node << ',' << *rec.distance << ',' << format_double(rec.measured) << ','
          << format_double(rec.bound) << ',' << (rec.verdict == BoundVerdict::Satisfied ? 1 : 0)
          << '\n';
    }
  }

  {
    const TrajectoryBundle& traj = result.solve.trajectory;
    std::ofstream out(fs::path(dir) / "trajectory.csv");
    if (!out) fail(ErrorCode::Io, "cannot write trajectory.csv in " + dir);
    out << "step,time,state_norm,control_norm,objective\n";
    for (int k = 0; k < traj.sample_count(); ++k) {
      const bool has_step = k < traj.steps();
      out << k << ',' << format_double(k * traj.time_step) << ','
          << format_double(traj.states.col(k).norm()) << ','
          << format_double(has_step ? traj.controls.col(k).norm() : 0.0) << ','
          << format_double(has_step ? result.solve.per_step_objectives[k] : 0.0) << '\n';
    }
  }

  {
    json j;
    for (const auto& [key, value] : certificate_scalars(result.certificate)) {
      if (key == "q") {
        j[key] = result.certificate.constants.steps_per_halving;
      } else {
        j[key] = value;
      }
    }
    j["N"] = result.solve.mpc_steps;
    if (result.fit) {
      j["slope"] = result.fit->slope;
      j["r2"] = result.fit->r_squared;
      j["empirical_rho"] = result.fit->empirical_decay;
      j["fit_points"] = result.fit->points_used;
    } else {
      j["slope"] = nullptr;
      j["r2"] = nullptr;
      j["empirical_rho"] = nullptr;
    }
    j["s"] = result.config.vehicle_count;
    j["i_star"] = result.config.source_node;
    j["h"] = result.config.step;
    j["eps"] = result.config.eps;
    j["eps_norm"] = "euclidean_full_state";
    j["horizon"] = result.config.horizon;
    j["terminal_weight"] = result.config.terminal_weight;
    j["x0_norm"] = result.x0_norm;
    j["objective"] = result.solve.objective_estimate;
    j["converged"] = result.solve.converged;
    j["all_satisfied"] = result.all_satisfied;
    j["init_bound"] = bound_record_json(result.init_record);
    json shells = json::array();
    for (std::size_t i = static_cast<std::size_t>(s); i < result.bound_records.size(); ++i) {
      shells.push_back(bound_record_json(result.bound_records[i]));
    }
    j["shells"] = std::move(shells);
    json skipped = json::array();
    for (int node = 1; node <= s; ++node) {
      if (!result.bound_records[node - 1].distance) skipped.push_back(node);
    }
    j["skipped_nodes"] = std::move(skipped);

    std::ofstream out(fs::path(dir) / "summary.json");
    if (!out) fail(ErrorCode::Io, "cannot write summary.json in " + dir);
    out << j.dump(2) << '\n';
  }
}

std::vector<StoredNodeRecord> read_per_node_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "node,dist,l2_norm,bound_value,satisfied") {
    fail(ErrorCode::Validation, path + ": unexpected per-node CSV header");
  }
  std::vector<StoredNodeRecord> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5) {
      fail(ErrorCode::Validation, path + ":" + std::to_string(lineno) + ": expected 5 fields");
    }
    StoredNodeRecord rec;
    rec.node = parse_int(fields[0], "node");
    rec.dist = parse_int(fields[1], "dist");
    rec.l2_norm = parse_double(fields[2], "l2_norm");
    rec.bound_value = parse_double(fields[3], "bound_value");
    rec.satisfied = parse_int(fields[4], "satisfied");
    rows.push_back(rec);
  }
  return rows;
}

CheckResult check_stored(const ExperimentConfig& cfg, const std::string& per_node_csv) {
  const auto rows = read_per_node_csv(per_node_csv);
  const DecayCertificate dc = certify(cfg);
  const InterconnectionGraph graph =
      build_graph(build_chain_cost(cfg.vehicle_count, cfg.velocity_weight, cfg.control_weight));
  const auto dist = distances_from(graph, cfg.source_node);

  if (static_cast<int>(rows.size()) != cfg.vehicle_count) {
    fail(ErrorCode::Validation, "check: stored table has " + std::to_string(rows.size()) +
                                    " rows but the configuration declares s=" +
                                    std::to_string(cfg.vehicle_count));
  }
  double x0_norm2 = 0.0;
  for (double v : cfg.perturbation) x0_norm2 += v * v;
  const double x0_norm = std::sqrt(x0_norm2);
  const auto& c = dc.constants;

  CheckResult out;
  out.all_satisfied = true;
  std::vector<double> shell_acc;  // squared norms per distance
  for (const auto& row : rows) {
    if (row.node < 1 || row.node > cfg.vehicle_count) {
      fail(ErrorCode::Validation, "check: node index " + std::to_string(row.node) + " out of range");
    }
    if (!dist[row.node - 1] || *dist[row.node - 1] != row.dist) {
      fail(ErrorCode::Validation, "check: stored distance of node " + std::to_string(row.node) +
                                      " disagrees with the configured graph");
    }
    BoundRecord rec;
    rec.label = "node " + std::to_string(row.node);
    rec.target = IndexSet::of({row.node});
    rec.distance = row.dist;
    rec.measured = row.l2_norm;
    rec.bound = c.scale * std::pow(c.decay_factor, row.dist) * x0_norm;
    rec.verdict = classify_bound(rec.measured, rec.bound);
    if (rec.verdict != BoundVerdict::Satisfied) out.all_satisfied = false;
    if ((rec.verdict == BoundVerdict::Satisfied ? 1 : 0) != row.satisfied) {
      ++out.stored_flag_mismatches;
    }
    if (static_cast<std::size_t>(row.dist) >= shell_acc.size()) shell_acc.resize(row.dist + 1, 0.0);
    shell_acc[row.dist] += row.l2_norm * row.l2_norm;
    out.records.push_back(std::move(rec));
  }

  // Shell checks reassembled from the componentwise decomposition.
  for (std::size_t k = 0; k < shell_acc.size(); ++k) {
    BoundRecord rec;
    rec.label = "shell " + std::to_string(k);
    rec.distance = static_cast<int>(k);
    rec.measured = std::sqrt(shell_acc[k]);
    rec.bound = c.scale * std::pow(c.decay_factor, static_cast<double>(k)) * x0_norm;
    rec.verdict = classify_bound(rec.measured, rec.bound);
    if (rec.verdict != BoundVerdict::Satisfied) out.all_satisfied = false;
    out.records.push_back(std::move(rec));
  }

  double whole2 = 0.0;
  for (const auto& row : rows) whole2 += row.l2_norm * row.l2_norm;
  out.init_record.label = "whole trajectory";
  out.init_record.distance = 0;
  out.init_record.measured = std::sqrt(whole2);
  out.init_record.bound = c.init_gain * x0_norm;
  out.init_record.verdict = classify_bound(out.init_record.measured, out.init_record.bound);
  if (out.init_record.verdict != BoundVerdict::Satisfied) out.all_satisfied = false;
  return out;
}

SweepResult run_sweep(const ExperimentConfig& cfg, int jobs) {
  validate_config(cfg);
  if (cfg.out_dir.empty()) fail(ErrorCode::Config, "sweep: output.out_dir must be set");
  if (jobs < 1) jobs = 1;

  struct Task {
    int size;
    std::string token;
  };
  std::vector<Task> tasks;
  for (int size : cfg.sweep_sizes) {
    for (const auto& token : cfg.sweep_sources) tasks.push_back({size, token});
  }

  auto run_cell = [&cfg](const Task& task) -> SweepCell {
    SweepCell cell;
    cell.size = task.size;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cell.source = resolve_source_token(task.token, task.size);
      ExperimentConfig cell_cfg = cfg;
      cell_cfg.vehicle_count = task.size;
      cell_cfg.source_node = cell.source;
      cell_cfg.out_dir = (fs::path(cfg.out_dir) / "cells" /
                          ("s" + std::to_string(task.size) + "_i" + std::to_string(cell.source)))
                             .string();
      const ExperimentResult res = run_experiment(cell_cfg, true);
      cell.ok = true;
      cell.theoretical_decay = res.certificate.constants.decay_factor;
      cell.steps = res.solve.mpc_steps;
      cell.all_satisfied = res.all_satisfied;
      if (res.fit) {
        cell.empirical_decay = res.fit->empirical_decay;
        cell.slope = res.fit->slope;
        cell.r_squared = res.fit->r_squared;
      }
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.source = cell.source > 0 ? cell.source : -1;
      std::string msg = e.what();
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      cell.error = msg;
    }
    cell.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return cell;
  };

  SweepResult result;
  result.cells.resize(tasks.size());
  if (jobs == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) result.cells[i] = run_cell(tasks[i]);
  } else {
    std::size_t next = 0;
    while (next < tasks.size()) {
      const std::size_t batch = std::min<std::size_t>(jobs, tasks.size() - next);
      std::vector<std::future<SweepCell>> futures;
      futures.reserve(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        futures.push_back(std::async(std::launch::async, run_cell, tasks[next + b]));
      }
      for (std::size_t b = 0; b < batch; ++b) result.cells[next + b] = futures[b].get();
      next += batch;
    }
  }

  for (const auto& cell : result.cells) {
    if (!cell.ok) ++result.failed_cells;
    else if (!cell.all_satisfied) ++result.violated_cells;
  }

  fs::create_directories(cfg.out_dir);
  const fs::path csv_path = fs::path(cfg.out_dir) / "sweep.csv";
  std::ofstream out(csv_path);
  if (!out) fail(ErrorCode::Io, "cannot write sweep.csv in " + cfg.out_dir);
  out << "s,i_star,empirical_rho,theoretical_rho,slope,r2,N,wall_time_s,status\n";
  for (const auto& cell : result.cells) {
    out << cell.size << ',' << cell.source << ',' << format_double(cell.empirical_decay) << ','
        << format_double(cell.theoretical_decay) << ',' << format_double(cell.slope) << ','
        << format_double(cell.r_squared) << ',' << cell.steps << ','
        << format_double(cell.wall_seconds) << ','
        << (cell.ok ? std::string("ok") : "error: " + cell.error) << '\n';
  }
  result.csv_path = csv_path.string();
  return result;
}

}  // namespace sensdecay
