// Command-line front end: run / validate / resume / sweep over scenario
// configurations or built-in presets. Exit codes: 0 converged, 2 validation
// failed, 3 blow-up, 4 no convergence within t_max, 5 infeasible constraint,
// 1 anything else.

#include <CLI11.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "qflow/runner.hpp"

namespace {

using namespace qflow;

ScenarioConfig load_config_arg(const std::string& config_path, const std::string& preset_name,
                               const std::string& out_dir) {
  ScenarioConfig c;
  if (!config_path.empty() && !preset_name.empty())
    throw CLI::ValidationError("pass either --config or --preset, not both");
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw std::runtime_error("cannot open config file " + config_path);
    std::ostringstream os;
    os << f.rdbuf();
    c = parse_config(os.str());
  } else if (!preset_name.empty()) {
    c = preset(preset_name);
  } else {
    throw CLI::ValidationError("one of --config or --preset is required");
  }
  if (!out_dir.empty()) c.output_dir = out_dir;
  return c;
}

int cmd_validate(const ScenarioConfig& c) {
  ValidationReport rep = validate_scenario(c);
  for (const auto& h : rep.hypotheses) {
    const char* tag = h.status == HypothesisStatus::kSatisfied  ? "satisfied    "
                      : h.status == HypothesisStatus::kViolated ? "VIOLATED     "
                                                                : "non-checkable";
    std::cout << tag << " | " << h.name;
    if (!h.detail.empty()) std::cout << "  [" << h.detail << "]";
    std::cout << "\n";
    if (h.status == HypothesisStatus::kViolated)
      std::cout << "warning: hypothesis violated; `run` will refuse without --force\n";
  }
  return rep.passed() ? kExitOk : kExitValidationFailed;
}

void print_outcome(const ScenarioOutcome& out) {
  std::printf("outputs: %s\n", out.out_dir.c_str());
  if (out.flow) {
    std::printf("lambda_inf = %.17g\n", out.flow->state.lambda);
    std::printf("sqrt(F2)   = %.17g\n", std::sqrt(out.flow->series.f2.back()));
    std::printf("t_final    = %.17g\n", out.flow->state.t);
  }
  if (out.gexu) {
    std::printf("gexu alpha = %.17g, beta = %.17g, residual = %.17g\n", out.gexu->alpha,
                out.gexu->beta, out.gexu->residual);
  }
  if (out.cross_check_l2)
    std::printf("flow-vs-minimizer L2 distance = %.17g\n", *out.cross_check_l2);
  if (!out.message.empty()) std::printf("note: %s\n", out.message.c_str());
  std::printf("exit code %d\n", out.exit_code);
}

int run_one(const ScenarioConfig& c, bool force, std::optional<unsigned long> seed,
            const std::string& resume_from) {
  ScenarioOutcome out = run_scenario(c, force, seed, resume_from);
  print_outcome(out);
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pseudospectral Q-curvature flow solver suite"};
  app.require_subcommand(1);

  std::string config_path, preset_name, out_dir, checkpoint_path, presets_arg;
  bool force = false;
  long seed = -1;
  double t_max_override = -1.0;
  int jobs = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "scenario configuration file");
    sub->add_option("--preset", preset_name, "built-in preset name");
    sub->add_option("--out", out_dir, "output directory (default $QFLOW_OUT_ROOT/<label>)");
    sub->add_option("--seed", seed, "seed for random initial-data generation");
  };

  CLI::App* run = app.add_subcommand("run", "validate then execute a scenario");
  add_common(run);
  run->add_flag("--force", force, "run even if validation reports violations");

  CLI::App* validate = app.add_subcommand("validate", "evaluate theorem hypotheses only");
  add_common(validate);

  CLI::App* resume = app.add_subcommand("resume", "continue a run from its checkpoint");
  add_common(resume);
  resume->add_option("--checkpoint", checkpoint_path,
                     "checkpoint file (default <out>/checkpoint.qck)");
  resume->add_option("--t-max", t_max_override, "extend the stopping time");
  resume->add_flag("--force", force, "run even if validation reports violations");

  CLI::App* sweep = app.add_subcommand("sweep", "run several presets");
  sweep->add_option("--presets", presets_arg, "comma-separated preset names, or 'all'")
      ->required();
  sweep->add_option("--out", out_dir, "output root for the sweep");
  sweep->add_option("--jobs", jobs, "parallel worker processes");
  sweep->add_option("--seed", seed, "seed for random initial-data generation");
  sweep->add_flag("--force", force, "run even if validation reports violations");

  CLI::App* list = app.add_subcommand("presets", "list built-in presets");

  CLI11_PARSE(app, argc, argv);

  std::optional<unsigned long> seed_opt;
  if (seed >= 0) seed_opt = static_cast<unsigned long>(seed);

  try {
    if (list->parsed()) {
      for (const auto& name : preset_names()) std::cout << name << "\n";
      return kExitOk;
    }
    if (validate->parsed()) {
      return cmd_validate(load_config_arg(config_path, preset_name, out_dir));
    }
    if (run->parsed()) {
      return run_one(load_config_arg(config_path, preset_name, out_dir), force, seed_opt,
                     "");
    }
    if (resume->parsed()) {
      ScenarioConfig c = load_config_arg(config_path, preset_name, out_dir);
      if (t_max_override > 0.0) c.flow.t_max = t_max_override;
      std::string ck = checkpoint_path;
      if (ck.empty()) {
        const char* root = std::getenv("QFLOW_OUT_ROOT");
        std::filesystem::path dir =
            c.output_dir.empty()
                ? std::filesystem::path(root != nullptr && *root ? root : "runs") / c.label
                : std::filesystem::path(c.output_dir);
        ck = (dir / "checkpoint.qck").string();
      }
      return run_one(c, force, seed_opt, ck);
    }
    if (sweep->parsed()) {
      std::vector<std::string> names;
      if (presets_arg == "all") {
        names = preset_names();
      } else {
        std::istringstream is(presets_arg);
        std::string tok;
        while (std::getline(is, tok, ',')) names.push_back(tok);
      }
      // independent scenarios in worker processes, no shared state
      std::vector<std::pair<pid_t, std::string>> running;
      int worst = kExitOk;
      auto reap_one = [&]() {
        int status = 0;
        const pid_t pid = waitpid(-1, &status, 0);
        for (auto& p : running)
          if (p.first == pid) {
            const int code = WIFEXITED(status) ? WEXITSTATUS(status) : kExitError;
            std::printf("[%s] exited with code %d\n", p.second.c_str(), code);
            worst = std::max(worst, code);
            p.first = -1;
          }
        running.erase(std::remove_if(running.begin(), running.end(),
                                     [](const auto& p) { return p.first == -1; }),
                      running.end());
      };
      for (const auto& name : names) {
        while (static_cast<int>(running.size()) >= std::max(1, jobs)) reap_one();
        ScenarioConfig c = preset(name);
        if (!out_dir.empty())
          c.output_dir = (std::filesystem::path(out_dir) / name).string();
        std::fflush(stdout);  // keep buffered output out of the child
        const pid_t pid = fork();
        if (pid == 0) {
          ScenarioOutcome out = run_scenario(c, force, seed_opt);
          std::fflush(stdout);
          _exit(out.exit_code);
        }
        running.emplace_back(pid, name);
      }
      while (!running.empty()) reap_one();
      return worst;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
