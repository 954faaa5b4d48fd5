// Command-line front end over the sensdecay C API.
//
//   sensdecay run      solve the configured chain experiment, write CSV/JSON
//   sensdecay sweep    one experiment per (s, i_star) combination
//   sensdecay certify  certificate and decay constants only
//   sensdecay check    re-verify bounds on a stored per-node table
//
// Exit codes: 0 success with all bounds satisfied, 2 bound violation, 1 error.

#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "sensdecay.h"

namespace {

struct ConfigDeleter {
  void operator()(sd_config* cfg) const { sd_config_free(cfg); }
};
struct ResultDeleter {
  void operator()(sd_result* res) const { sd_result_free(res); }
};
using ConfigHandle = std::unique_ptr<sd_config, ConfigDeleter>;
using ResultHandle = std::unique_ptr<sd_result, ResultDeleter>;

struct CommonArgs {
  std::string config_file;
  std::string s, i_star, h, eps, horizon, out_dir;
  std::vector<std::string> sets;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
  cmd->set_help_flag("--help", "Print help");  // keep -h free for the step size
  cmd->add_option("--config", args.config_file, "Config file (INI sections + key = value)");
  cmd->add_option("--s", args.s, "Number of vehicles (model.s)");
  cmd->add_option("--i-star", args.i_star, "Perturbed node (perturbation.i_star)");
  cmd->add_option("--h", args.h, "Integration step (solver.h)");
  cmd->add_option("--eps", args.eps, "Termination threshold (solver.eps)");
  cmd->add_option("--horizon", args.horizon, "Prediction horizon in steps (solver.horizon)");
  cmd->add_option("--out-dir", args.out_dir, "Output directory (output.out_dir)");
  cmd->add_option("--set", args.sets, "Override any config key, e.g. --set solver.max_steps=5000")
      ->take_all();
}

int fail_with_last_error(const char* what) {
  std::fprintf(stderr, "error: %s: %s\n", what, sd_last_error());
  return 1;
}

// Builds the config from defaults, then file, then named flags, then --set pairs.
int build_config(const CommonArgs& args, ConfigHandle& out) {
  ConfigHandle cfg(sd_config_create());
  if (!cfg) {
    std::fprintf(stderr, "error: could not allocate config\n");
    return 1;
  }
  if (!args.config_file.empty() && sd_config_load(cfg.get(), args.config_file.c_str()) != SD_OK) {
    return fail_with_last_error("loading config");
  }
  const std::pair<const char*, const std::string*> named[] = {
      {"model.s", &args.s},
      {"perturbation.i_star", &args.i_star},
      {"solver.h", &args.h},
      {"solver.eps", &args.eps},
      {"solver.horizon", &args.horizon},
      {"output.out_dir", &args.out_dir},
  };
  for (const auto& [key, value] : named) {
    if (!value->empty() && sd_config_set(cfg.get(), key, value->c_str()) != SD_OK) {
      return fail_with_last_error(key);
    }
  }
  for (const auto& pair : args.sets) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", pair.c_str());
      return 1;
    }
    const std::string key = pair.substr(0, eq);
    const std::string value = pair.substr(eq + 1);
    if (sd_config_set(cfg.get(), key.c_str(), value.c_str()) != SD_OK) {
      return fail_with_last_error(key.c_str());
    }
  }
  out = std::move(cfg);
  return 0;
}

void print_scalar(const sd_result* res, const char* key) {
  double value = 0.0;
  if (sd_result_scalar(res, key, &value) == SD_OK) {
    std::printf("  %-14s %.10g\n", key, value);
  }
}

void print_constants(const sd_result* res) {
  for (const char* key : {"C", "sigma", "mu", "M_Q", "M_R", "C_init", "C_prop", "S", "q", "rho"}) {
    print_scalar(res, key);
  }
}

int cmd_run(const CommonArgs& args) {
  ConfigHandle cfg;
  if (int rc = build_config(args, cfg)) return rc;
  sd_result* raw = nullptr;
  if (sd_run(cfg.get(), nullptr, &raw) != SD_OK) return fail_with_last_error("run");
  ResultHandle res(raw);

  char out_dir[512] = "";
  sd_config_get(cfg.get(), "output.out_dir", out_dir, sizeof out_dir);
  std::printf("experiment finished: N = %d, converged = %s\n", sd_result_mpc_steps(res.get()),
              sd_result_converged(res.get()) == 1 ? "yes" : "no");
  print_constants(res.get());
  for (const char* key : {"objective", "slope", "r2", "empirical_rho"}) print_scalar(res.get(), key);

  const int satisfied = sd_result_all_satisfied(res.get());
  std::printf("bounds: %s\n", satisfied ? "all satisfied" : "VIOLATED");
  std::printf("outputs: %s/{per_node.csv,trajectory.csv,summary.json}\n", out_dir);
  return satisfied ? 0 : 2;
}

int cmd_sweep(const CommonArgs& args, int jobs) {
  ConfigHandle cfg;
  if (int rc = build_config(args, cfg)) return rc;
  int failed = 0, violated = 0;
  if (sd_sweep(cfg.get(), nullptr, jobs, &failed, &violated) != SD_OK) {
    return fail_with_last_error("sweep");
  }
  char out_dir[512] = "";
  sd_config_get(cfg.get(), "output.out_dir", out_dir, sizeof out_dir);
  std::printf("sweep finished: %d failed cell(s), %d cell(s) with bound violations\n", failed,
              violated);
  std::printf("table: %s/sweep.csv\n", out_dir);
  if (failed > 0) return 1;
  return violated > 0 ? 2 : 0;
}

int cmd_certify(const CommonArgs& args) {
  ConfigHandle cfg;
  if (int rc = build_config(args, cfg)) return rc;
  sd_result* raw = nullptr;
  if (sd_certify(cfg.get(), &raw) != SD_OK) return fail_with_last_error("certify");
  ResultHandle res(raw);
  std::printf("certificate constants:\n");
  print_constants(res.get());
  return 0;
}

int cmd_check(const CommonArgs& args, const std::string& csv_path) {
  ConfigHandle cfg;
  if (int rc = build_config(args, cfg)) return rc;
  sd_result* raw = nullptr;
  if (sd_check(cfg.get(), csv_path.c_str(), &raw) != SD_OK) return fail_with_last_error("check");
  ResultHandle res(raw);

  const int nodes = sd_result_node_count(res.get());
  int worst_node = 0;
  double worst_ratio = 0.0;
  for (int node = 1; node <= nodes; ++node) {
    int dist = 0, satisfied = 0;
    double measured = 0.0, bound = 0.0;
    sd_result_node_record(res.get(), node, &dist, &measured, &bound, &satisfied);
    if (bound > 0.0 && measured / bound > worst_ratio) {
      worst_ratio = measured / bound;
      worst_node = node;
    }
  }
  double mismatches = 0.0;
  sd_result_scalar(res.get(), "stored_flag_mismatches", &mismatches);
  const int satisfied = sd_result_all_satisfied(res.get());
  std::printf("re-verified %d node(s): %s\n", nodes, satisfied ? "all satisfied" : "VIOLATED");
  std::printf("  worst measured/bound ratio %.3e at node %d\n", worst_ratio, worst_node);
  if (mismatches > 0) {
    std::printf("  warning: %d stored satisfied flag(s) disagree with the recomputation\n",
                static_cast<int>(mismatches));
  }
  return satisfied ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-structured optimal control with certified sensitivity-decay bounds"};
  app.set_help_flag("--help", "Print help");
  app.set_version_flag("--version", sd_version());
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, certify_args, check_args;
  int jobs = 1;
  std::string check_csv;

  CLI::App* run = app.add_subcommand("run", "Run one experiment and write its outputs");
  add_common_flags(run, run_args);

  CLI::App* sweep = app.add_subcommand("sweep", "Run every configured (s, i_star) combination");
  add_common_flags(sweep, sweep_args);
  sweep->add_option("--jobs", jobs, "Cells to run in parallel")->check(CLI::PositiveNumber);

  CLI::App* certify = app.add_subcommand("certify", "Print certificate and decay constants");
  add_common_flags(certify, certify_args);

  CLI::App* check = app.add_subcommand("check", "Re-verify bounds on a stored per-node table");
  add_common_flags(check, check_args);
  check->add_option("csv", check_csv, "per_node.csv produced by `run`")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(run_args);
  if (sweep->parsed()) return cmd_sweep(sweep_args, jobs);
  if (certify->parsed()) return cmd_certify(certify_args);
  if (check->parsed()) return cmd_check(check_args, check_csv);
  return 1;
}
