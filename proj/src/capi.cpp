#include "sensdecay.h"

#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "lab.hpp"

namespace {

thread_local std::string g_last_error;

sd_status map_code(sensdecay::ErrorCode code) {
  using sensdecay::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return SD_ERR_INVALID_ARGUMENT;
    case ErrorCode::DimensionMismatch: return SD_ERR_DIMENSION_MISMATCH;
    case ErrorCode::Validation: return SD_ERR_VALIDATION;
    case ErrorCode::NotPositiveDefinite: return SD_ERR_NOT_POSITIVE_DEFINITE;
    case ErrorCode::Numeric: return SD_ERR_NUMERIC;
    case ErrorCode::Divergence: return SD_ERR_DIVERGENCE;
    case ErrorCode::Solver: return SD_ERR_SOLVER;
    case ErrorCode::Precondition: return SD_ERR_PRECONDITION;
    case ErrorCode::Config: return SD_ERR_CONFIG;
    case ErrorCode::Io: return SD_ERR_IO;
    case ErrorCode::Unsupported: return SD_ERR_UNSUPPORTED;
    case ErrorCode::Internal: return SD_ERR_INTERNAL;
  }
  return SD_ERR_INTERNAL;
}

template <typename Fn>
sd_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return SD_OK;
  } catch (const sensdecay::Error& e) {
    g_last_error = e.what();
    return map_code(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SD_ERR_INTERNAL;
  }
}

sd_status invalid(const char* message) {
  g_last_error = message;
  return SD_ERR_INVALID_ARGUMENT;
}

struct NodeRow {
  int node = 0;
  int dist = -1;  // -1 marks unreachable
  double l2_norm = 0.0;
  double bound = 0.0;
  int satisfied = 0;
};

}  // namespace

struct sd_config {
  sensdecay::ExperimentConfig cfg;
};

struct sd_result {
  std::vector<NodeRow> nodes;
  std::map<std::string, double> scalars;
  int all_satisfied = 0;
  int mpc_steps = -1;
  int converged = -1;
};

namespace {

sd_result* from_experiment(const sensdecay::ExperimentResult& res) {
  auto* r = new sd_result;
  const int s = res.config.vehicle_count;
  r->nodes.reserve(s);
  for (int node = 1; node <= s; ++node) {
    const auto& rec = res.bound_records[node - 1];
    NodeRow row;
    row.node = node;
    row.dist = rec.distance ? *rec.distance : -1;
    row.l2_norm = rec.measured;
    row.bound = rec.distance ? rec.bound : 0.0;
    row.satisfied = rec.verdict == sensdecay::BoundVerdict::Satisfied ? 1 : 0;
    r->nodes.push_back(row);
  }
  r->scalars = sensdecay::summary_scalars(res);
  r->all_satisfied = res.all_satisfied ? 1 : 0;
  r->mpc_steps = res.solve.mpc_steps;
  r->converged = res.solve.converged ? 1 : 0;
  return r;
}

sd_result* from_check(const sensdecay::CheckResult& res, const sensdecay::DecayCertificate& dc) {
  auto* r = new sd_result;
  for (const auto& rec : res.records) {
    if (rec.target.size() != 1) continue;  // shells are folded into all_satisfied
    NodeRow row;
    row.node = rec.target.members.front();
    row.dist = rec.distance ? *rec.distance : -1;
    row.l2_norm = rec.measured;
    row.bound = rec.bound;
    row.satisfied = rec.verdict == sensdecay::BoundVerdict::Satisfied ? 1 : 0;
    r->nodes.push_back(row);
  }
  r->scalars = sensdecay::certificate_scalars(dc);
  r->scalars["stored_flag_mismatches"] = res.stored_flag_mismatches;
  r->all_satisfied = res.all_satisfied ? 1 : 0;
  return r;
}

}  // namespace

extern "C" {

const char* sd_version(void) { return "0.1.0"; }

const char* sd_last_error(void) { return g_last_error.c_str(); }

sd_config* sd_config_create(void) { return new sd_config; }

void sd_config_free(sd_config* cfg) { delete cfg; }

sd_status sd_config_load(sd_config* cfg, const char* path) {
  if (!cfg || !path) return invalid("sd_config_load: null argument");
  return guarded([&] { sensdecay::apply_config_file(cfg->cfg, path); });
}

sd_status sd_config_set(sd_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return invalid("sd_config_set: null argument");
  return guarded([&] { sensdecay::set_config_value(cfg->cfg, key, value); });
}

sd_status sd_config_get(const sd_config* cfg, const char* key, char* buffer, size_t buffer_size) {
  if (!cfg || !key || !buffer || buffer_size == 0) return invalid("sd_config_get: null argument");
  return guarded([&] {
    const std::string value = sensdecay::get_config_value(cfg->cfg, key);
    if (value.size() + 1 > buffer_size) {
      sensdecay::fail(sensdecay::ErrorCode::InvalidArgument, "sd_config_get: buffer too small");
    }
    std::memcpy(buffer, value.c_str(), value.size() + 1);
  });
}

sd_status sd_run(const sd_config* cfg, const char* out_dir, sd_result** out) {
  if (!cfg || !out) return invalid("sd_run: null argument");
  *out = nullptr;
  return guarded([&] {
    sensdecay::ExperimentConfig local = cfg->cfg;
    if (out_dir) local.out_dir = out_dir;
    const auto res = sensdecay::run_experiment(local, true);
    *out = from_experiment(res);
  });
}

sd_status sd_certify(const sd_config* cfg, sd_result** out) {
  if (!cfg || !out) return invalid("sd_certify: null argument");
  *out = nullptr;
  return guarded([&] {
    const auto dc = sensdecay::certify(cfg->cfg);
    auto* r = new sd_result;
    r->scalars = sensdecay::certificate_scalars(dc);
    r->all_satisfied = 1;  // nothing checked, nothing violated
    *out = r;
  });
}

sd_status sd_check(const sd_config* cfg, const char* per_node_csv, sd_result** out) {
  if (!cfg || !per_node_csv || !out) return invalid("sd_check: null argument");
  *out = nullptr;
  return guarded([&] {
    const auto res = sensdecay::check_stored(cfg->cfg, per_node_csv);
    const auto dc = sensdecay::certify(cfg->cfg);
    *out = from_check(res, dc);
  });
}

sd_status sd_sweep(const sd_config* cfg, const char* out_dir, int jobs, int* cells_failed,
                   int* cells_violated) {
  if (!cfg) return invalid("sd_sweep: null argument");
  return guarded([&] {
    sensdecay::ExperimentConfig local = cfg->cfg;
    if (out_dir) local.out_dir = out_dir;
    const auto res = sensdecay::run_sweep(local, jobs);
    if (cells_failed) *cells_failed = res.failed_cells;
    if (cells_violated) *cells_violated = res.violated_cells;
  });
}

void sd_result_free(sd_result* result) { delete result; }

int sd_result_node_count(const sd_result* result) {
  return result ? static_cast<int>(result->nodes.size()) : 0;
}

sd_status sd_result_node_record(const sd_result* result, int node, int* dist, double* l2_norm,
                                double* bound, int* satisfied) {
  if (!result) return invalid("sd_result_node_record: null result");
  if (node < 1 || node > static_cast<int>(result->nodes.size())) {
    return invalid("sd_result_node_record: node out of range");
  }
  const NodeRow& row = result->nodes[node - 1];
  if (dist) *dist = row.dist;
  if (l2_norm) *l2_norm = row.l2_norm;
  if (bound) *bound = row.bound;
  if (satisfied) *satisfied = row.satisfied;
  g_last_error.clear();
  return SD_OK;
}

sd_status sd_result_scalar(const sd_result* result, const char* key, double* out) {
  if (!result || !key || !out) return invalid("sd_result_scalar: null argument");
  const auto it = result->scalars.find(key);
  if (it == result->scalars.end()) {
    g_last_error = std::string("sd_result_scalar: key '") + key + "' not present";
    return SD_ERR_INVALID_ARGUMENT;
  }
  *out = it->second;
  g_last_error.clear();
  return SD_OK;
}

int sd_result_all_satisfied(const sd_result* result) {
  return result ? result->all_satisfied : 0;
}

int sd_result_mpc_steps(const sd_result* result) { return result ? result->mpc_steps : -1; }

int sd_result_converged(const sd_result* result) { return result ? result->converged : -1; }

}  // extern "C"
