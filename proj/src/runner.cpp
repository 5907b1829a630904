#include "qflow/runner.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "qflow/checkpoint.hpp"
#include "qflow/kernels.hpp"

namespace qflow {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string status_name(RunStatus s) {
  switch (s) {
    case RunStatus::kConverged: return "converged";
    case RunStatus::kMaxTime: return "max-time";
    case RunStatus::kBlowUp: return "blow-up";
    case RunStatus::kNumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

std::string resolve_out_dir(const ScenarioConfig& c) {
  if (!c.output_dir.empty()) return c.output_dir;
  const char* root = std::getenv("QFLOW_OUT_ROOT");
  return (fs::path(root != nullptr && *root ? root : "runs") / c.label).string();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << text;
}

void write_plot(const fs::path& path, const std::vector<double>& x,
                const std::vector<double>& y, const char* header) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << "# " << header << "\n";
  f.precision(17);
  for (std::size_t i = 0; i < x.size(); ++i) f << x[i] << " " << y[i] << "\n";
}

const char* hypothesis_status_name(HypothesisStatus s) {
  switch (s) {
    case HypothesisStatus::kSatisfied: return "satisfied";
    case HypothesisStatus::kViolated: return "violated";
    case HypothesisStatus::kNonCheckable: return "non-checkable";
  }
  return "unknown";
}

double hn2_distance(const SpectralField& a, const SpectralField& b,
                    const GjmsMultiplier& op) {
  SpectralField d = a;
  kernels::active().axpby(-1.0, b.coeffs.data(), 1.0, d.coeffs.data(), d.coeffs.size());
  return sobolev_norm(d, op, 0.5 * op.geom->dim());
}

double l2_distance(const SpectralField& a, const SpectralField& b) {
  double acc = 0.0;
  for (std::size_t m = 0; m < a.coeffs.size(); ++m) {
    const double d = a.coeffs[m] - b.coeffs[m];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

void write_field_csv(const GridField& f, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path);
  const Geometry& g = *f.geom;
  const int axes = g.kind() == GeomKind::kZonalSphere ? 1 : g.dim();
  if (g.kind() == GeomKind::kZonalSphere) {
    os << "x,value\n";
  } else {
    for (int a = 0; a < axes; ++a) os << "x" << (a + 1) << ",";
    os << "value\n";
  }
  os.precision(17);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    for (int a = 0; a < axes; ++a) os << g.node_coord(i, a) << ",";
    os << f.values[i] << "\n";
  }
}

void write_spectral_json(const SpectralField& f, const std::string& path) {
  json j;
  j["geometry"] = {{"kind", f.geom->kind() == GeomKind::kTorus ? "torus" : "zonal-sphere"},
                   {"n", f.geom->dim()},
                   {"resolution", f.geom->resolution()}};
  j["coefficients"] = f.coeffs;
  json labels = json::array();
  for (std::size_t m = 0; m < std::min<std::size_t>(f.coeffs.size(), 64); ++m)
    labels.push_back(f.geom->mode_label(m));
  j["leading_mode_labels"] = labels;
  write_text(path, j.dump(2) + "\n");
}

ScenarioOutcome run_scenario(const ScenarioConfig& config, bool force,
                             std::optional<unsigned long> seed_override,
                             const std::string& resume_from) {
  ScenarioConfig c = config;
  if (seed_override) c.seed = *seed_override;
  ScenarioOutcome out;
  out.out_dir = resolve_out_dir(c);
  fs::create_directories(out.out_dir);
  const fs::path dir(out.out_dir);

  write_text(dir / "config.qcfg", serialize_config(c));

  ValidationReport vr = validate_scenario(c);
  {
    std::ostringstream os;
    for (const auto& h : vr.hypotheses)
      os << hypothesis_status_name(h.status) << " | " << h.name
         << (h.detail.empty() ? "" : " | " + h.detail) << "\n";
    write_text(dir / "validation.txt", os.str());
  }
  if (!vr.passed() && !force) {
    out.exit_code = kExitValidationFailed;
    out.message = "validation reported violated hypotheses (use --force to run anyway)";
    return out;
  }

  ScenarioData d = build_scenario(c);
  write_multiplier_csv(d.bg.op, (dir / "multipliers.csv").string());

  json summary;
  summary["schema"] = "qflow-summary v1";
  summary["label"] = c.label;
  summary["case"] = c.case_tag;
  summary["config_hash"] = config_hash(c);
  summary["k_n"] = d.bg.k_n;
  summary["threshold"] = threshold(c.n);
  summary["synthetic_q0"] = d.bg.synthetic_q0;
  summary["validation_passed"] = vr.passed();
  summary["forced"] = force && !vr.passed();

  const bool run_the_flow = c.pipeline == "flow" || c.pipeline == "both";
  const bool run_gexu = c.pipeline == "gexu" || c.pipeline == "both";
  out.exit_code = kExitOk;

  if (run_the_flow) {
    SpectralField u_start = d.u0;
    std::vector<double> resume_grid;
    double t0 = 0.0;
    int streak = 0;
    double target_volume = 0.0;
    FlowConfig fc = c.flow;
    if (!resume_from.empty()) {
      Checkpoint ck = load_checkpoint(resume_from, config_hash(c));
      if (ck.coeffs.size() != d.geom->mode_count())
        throw std::runtime_error("checkpoint does not match the configured geometry");
      u_start = SpectralField{d.geom, ck.coeffs};
      resume_grid = ck.grid_values;
      t0 = ck.t;
      streak = ck.streak;
      target_volume = ck.target_volume;
      fc.dt = ck.dt;
      summary["resumed_from"] = resume_from;
    } else {
      try {
        u_start = project_constraint(d.u0, d.bg, fc.projection_tol);
      } catch (const InfeasibleConstraint& e) {
        out.exit_code = kExitInfeasible;
        out.message = e.what();
        summary["status"] = "infeasible-constraint";
        summary["error"] = e.what();
        write_text(dir / "summary.json", summary.dump(2) + "\n");
        return out;
      }
    }

    RunResult run = run_flow(u_start, d.bg, fc, t0, streak, target_volume,
                             resume_grid.empty() ? nullptr : &resume_grid);
    out.flow = run;

    {
      std::ofstream f(dir / "diagnostics.csv", std::ios::trunc);
      run.series.write_csv(f);
    }
    std::vector<double> logf2(run.series.size());
    for (std::size_t i = 0; i < run.series.size(); ++i)
      logf2[i] = std::log10(std::max(run.series.f2[i], 1e-300));
    write_plot(dir / "plot_energy.dat", run.series.t, run.series.energy, "t energy");
    write_plot(dir / "plot_logf2.dat", run.series.t, logf2, "t log10(F2)");
    write_plot(dir / "plot_lambda.dat", run.series.t, run.series.lambda, "t lambda");
    write_field_csv(to_grid(run.state.u), (dir / "final_state.csv").string());
    write_spectral_json(run.state.u, (dir / "final_state.json").string());

    Checkpoint ck;
    ck.config_hash = config_hash(c);
    ck.t = run.state.t;
    ck.lambda = run.state.lambda;
    ck.dt = run.next_dt;
    ck.streak = run.next_streak;
    ck.target_volume = run.target_volume;
    ck.coeffs = run.state.u.coeffs;
    ck.grid_values = run.state.u_values;
    save_checkpoint(ck, (dir / "checkpoint.qck").string());

    // decay-rate fit against the final state, leading transient and the
    // self-distance tail excluded
    if (run.snapshots.size() >= 25) {
      std::vector<double> ts, deltas;
      const std::size_t lo = run.snapshots.size() / 10;
      const std::size_t hi =
          run.snapshots.size() - std::max<std::size_t>(1, run.snapshots.size() / 20);
      for (std::size_t i = lo; i < hi; ++i) {
        ts.push_back(run.snapshots[i].first);
        deltas.push_back(hn2_distance(run.snapshots[i].second, run.state.u, d.bg.op));
      }
      try {
        out.rate = fit_rate(ts, deltas);
      } catch (const std::exception& e) {
        summary["rate_fit_error"] = e.what();
      }
    }
    if (run.series.size() >= 15) {
      const double e_end = run.series.energy.back();
      std::vector<double> gaps, f2s;
      const std::size_t hi =
          run.series.size() - std::max<std::size_t>(1, run.series.size() / 20);
      for (std::size_t i = 0; i < hi; ++i) {
        gaps.push_back(run.series.energy[i] - e_end);
        f2s.push_back(run.series.f2[i]);
      }
      try {
        out.lojasiewicz = estimate_lojasiewicz(gaps, f2s);
      } catch (const std::exception& e) {
        summary["lojasiewicz_error"] = e.what();
      }
    }

    // every sphere state encountered must satisfy the Beckner bound; checked
    // at snapshot resolution plus the final state
    if (c.kind == GeomKind::kZonalSphere) {
      try {
        bool all_ok = true;
        double min_gap = 1e300;
        for (const auto& [ts, us] : run.snapshots) {
          (void)ts;
          InequalityReport rep = check_beckner(us);
          all_ok = all_ok && rep.satisfied;
          min_gap = std::min(min_gap, rep.right - rep.left);
        }
        InequalityReport rep = check_beckner(run.state.u);
        all_ok = all_ok && rep.satisfied;
        min_gap = std::min(min_gap, rep.right - rep.left);
        summary["beckner"] = {{"all_states_satisfied", all_ok}, {"min_gap", min_gap}};
      } catch (const std::exception& e) {
        summary["beckner_error"] = e.what();  // overflow on a blow-up state
      }
    }

    if (c.coercivity_request && run.status == RunStatus::kConverged) {
      try {
        NewtonResult refined = newton_refine(run.state.u, run.state.lambda, d.bg, 1e-11);
        out.coercivity_weighted = hessian_coercivity(
            refined.u, refined.lambda, d.bg, TangentConvention::kWeighted,
            c.coercivity_truncation);
        out.coercivity_literal = hessian_coercivity(
            refined.u, refined.lambda, d.bg, TangentConvention::kLiteral,
            c.coercivity_truncation);
      } catch (const std::exception& e) {
        summary["coercivity_error"] = e.what();
      }
    }

    summary["status"] = status_name(run.status);
    summary["message"] = run.message;
    summary["final"] = {{"t", run.state.t},
                        {"lambda", run.state.lambda},
                        {"sqrt_f2", std::sqrt(std::max(0.0, run.series.f2.back()))},
                        {"energy", run.series.energy.back()},
                        {"hn2", run.series.hn2.back()},
                        {"sup_u", run.series.sup_u.back()},
                        {"tail_fraction", run.series.tail_fraction.back()}};
    summary["lambda_inf"] = run.state.lambda;
    double cons_drift = 0.0, vol_drift = 0.0;
    const double v0 = run.series.volume.front();
    for (std::size_t i = 0; i < run.series.size(); ++i) {
      cons_drift = std::max(cons_drift, std::fabs(run.series.constraint[i] - d.bg.k_n));
      vol_drift = std::max(vol_drift, std::fabs(run.series.volume[i] - v0) / v0);
    }
    summary["max_constraint_drift"] = cons_drift;
    summary["max_volume_drift_rel"] = vol_drift;
    if (run.concentration) {
      summary["concentration"] = {
          {"cap_mass_fraction",
           {run.concentration->cap_mass_fraction[0], run.concentration->cap_mass_fraction[1],
            run.concentration->cap_mass_fraction[2]}},
          {"pole", run.concentration->pole == Pole::kNorth ? "north" : "south"},
          {"com_axis", run.concentration->com_axis},
          {"hn2", run.concentration->hn2},
          {"flag", run.concentration->flag}};
    }
    if (out.rate) {
      summary["rate_fit"] = {
          {"model", out.rate->model == RateModel::kExponential ? "exponential" : "polynomial"},
          {"rate", out.rate->rate},
          {"r2", out.rate->r2},
          {"t_lo", out.rate->t_lo},
          {"t_hi", out.rate->t_hi},
          {"samples", out.rate->samples}};
    }
    if (out.lojasiewicz) {
      summary["lojasiewicz"] = {{"theta", out.lojasiewicz->theta},
                                {"r2", out.lojasiewicz->r2},
                                {"samples", out.lojasiewicz->samples}};
    }
    if (out.coercivity_weighted) {
      summary["coercivity"] = {
          {"weighted_min_eigenvalue", out.coercivity_weighted->min_eigenvalue},
          {"literal_min_eigenvalue", out.coercivity_literal->min_eigenvalue},
          {"truncation", out.coercivity_weighted->truncation},
          {"basis_size", out.coercivity_weighted->basis_size}};
    }

    switch (run.status) {
      case RunStatus::kConverged: out.exit_code = kExitOk; break;
      case RunStatus::kBlowUp: out.exit_code = kExitBlowUp; break;
      case RunStatus::kMaxTime: out.exit_code = kExitNoConvergence; break;
      case RunStatus::kNumericalFailure: out.exit_code = kExitError; break;
    }
    out.message = run.message;
  }

  if (run_gexu && (out.exit_code == kExitOk || !run_the_flow)) {
    try {
      auto [u_min, rep] = direct_minimize(d.bg, d.u0);
      out.gexu = rep;
      SpectralField shifted = u_min;
      shifted.coeffs[0] += std::log(rep.beta) / c.n * std::sqrt(d.geom->volume());
      Checkpoint ck;
      ck.config_hash = config_hash(c);
      ck.t = 0.0;
      ck.lambda = 1.0;  // the shifted factor solves P0 u + Q0 = f e^{nu}
      ck.dt = c.flow.dt;
      ck.target_volume = 0.0;
      ck.coeffs = shifted.coeffs;
      GridField shifted_grid = to_grid(shifted);
      ck.grid_values = shifted_grid.values;
      save_checkpoint(ck, (dir / "gexu_solution.qck").string());
      write_spectral_json(shifted, (dir / "gexu_solution.json").string());
      summary["gexu"] = {{"alpha", rep.alpha},
                         {"beta", rep.beta},
                         {"beta_quotient", rep.beta_quotient},
                         {"weak_residual", rep.residual},
                         {"iterations", rep.iterations},
                         {"shifted_residual", stationary_residual(shifted, 1.0, d.bg)}};
      if (out.flow && out.flow->status == RunStatus::kConverged &&
          out.flow->state.lambda > 0.0) {
        SpectralField flow_aligned = out.flow->state.u;
        flow_aligned.coeffs[0] +=
            std::log(out.flow->state.lambda) / c.n * std::sqrt(d.geom->volume());
        out.cross_check_l2 = l2_distance(shifted, flow_aligned);
        summary["cross_check_l2"] = *out.cross_check_l2;
      }
    } catch (const InfeasibleConstraint& e) {
      out.exit_code = kExitInfeasible;
      out.message = e.what();
      summary["gexu_error"] = e.what();
    } catch (const std::exception& e) {
      out.exit_code = kExitError;
      out.message = e.what();
      summary["gexu_error"] = e.what();
    }
  }

  summary["exit_code"] = out.exit_code;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return out;
}

}  // namespace qflow
