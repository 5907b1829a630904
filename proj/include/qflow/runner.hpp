#pragma once

#include <optional>
#include <string>

#include "qflow/diagnostics.hpp"
#include "qflow/scenario.hpp"
#include "qflow/solvers.hpp"

namespace qflow {

// Stable exit codes of the scenario runner (also the CLI process codes).
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;            // config/usage errors
inline constexpr int kExitValidationFailed = 2; // hypotheses violated, no --force
inline constexpr int kExitBlowUp = 3;
inline constexpr int kExitNoConvergence = 4;    // t_max reached first
inline constexpr int kExitInfeasible = 5;       // constraint set unreachable

struct ScenarioOutcome {
  int exit_code = kExitError;
  std::string message;
  std::string out_dir;
  std::optional<RunResult> flow;          // present when the pipeline ran the flow
  std::optional<RateFit> rate;
  std::optional<LojasiewiczEstimate> lojasiewicz;
  std::optional<MultiplierReport> gexu;   // present for gexu/both pipelines
  std::optional<double> cross_check_l2;   // flow-vs-minimizer distance (both)
  std::optional<CoercivityReport> coercivity_weighted;
  std::optional<CoercivityReport> coercivity_literal;
};

/// Executes the configured pipeline, writing into the output directory:
/// diagnostics.csv, summary.json, plot_energy.dat / plot_logf2.dat /
/// plot_lambda.dat, multipliers.csv, final_state.csv / final_state.json and
/// checkpoint.qck. `resume_from` continues a saved trajectory bit-exactly.
ScenarioOutcome run_scenario(const ScenarioConfig& config, bool force = false,
                             std::optional<unsigned long> seed_override = std::nullopt,
                             const std::string& resume_from = "");

/// Field serialization named by the external interfaces: CSV with node
/// coordinate columns plus the value, and spectral-coefficient JSON.
void write_field_csv(const GridField& f, const std::string& path);
void write_spectral_json(const SpectralField& f, const std::string& path);

}  // namespace qflow
