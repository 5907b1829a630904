#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qflow/flow.hpp"
#include "qflow/geometry.hpp"
#include "qflow/operators.hpp"

namespace qflow {

/// A fully described run: geometry, background fields, initial data, flow
/// parameters and outputs. Serializes to flat "key = value" text with dotted
/// sections; parse(serialize(c)) == c.
///
/// Field specifications are semicolon-separated term lists:
///   const:<v>                constant contribution
///   c[k1,k2,...]=<v>         v cos(k.x)            (torus)
///   s[k1,k2,...]=<v>         v sin(k.x)            (torus)
///   l<deg>=<v>               v times the orthonormal zonal mode (sphere)
/// plus, for q0 only, the word `metric` (0 on the torus, (n-1)! on the
/// sphere), and for u0 only:
///   zero                     the zero factor
///   dilation:<north|south>:<r>   pullback of 0 under the conformal dilation
///   random:<amp>             seeded band-limited noise with sup amplitude
struct ScenarioConfig {
  std::string case_tag = "case-ii";  // case-i|case-ii|case-iii|sphere-critical|gexu
  std::string label = "scenario";
  GeomKind kind = GeomKind::kTorus;
  int n = 2;
  int resolution = 64;
  std::string q0_spec = "metric";
  std::string f_spec = "const:1";
  std::string u0_spec = "zero";
  std::string pipeline = "flow";  // flow | gexu | both
  FlowConfig flow;
  bool coercivity_request = false;
  int coercivity_truncation = 8;
  unsigned long seed = 1;
  std::string output_dir = "";

  bool operator==(const ScenarioConfig& other) const;
};

std::string serialize_config(const ScenarioConfig& config);
ScenarioConfig parse_config(const std::string& text);

/// FNV-1a over the trajectory-defining part of the config (everything except
/// the output directory and the stop criteria, which may legitimately change
/// between a run and its resumption).
std::string config_hash(const ScenarioConfig& config);

/// Built-in scenario presets, one per theorem clause.
std::vector<std::string> preset_names();
ScenarioConfig preset(const std::string& name);

/// Materialized scenario pieces.
struct ScenarioData {
  std::shared_ptr<const Geometry> geom;
  BackgroundData bg;
  SpectralField u0;         // as specified, before constraint projection
  std::optional<Pole> dilation_pole;  // set when u0 is a dilation pullback
  double dilation_r = 1.0;
};

ScenarioData build_scenario(const ScenarioConfig& config);

enum class HypothesisStatus { kSatisfied, kViolated, kNonCheckable };

struct Hypothesis {
  std::string name;
  HypothesisStatus status = HypothesisStatus::kNonCheckable;
  std::string detail;
};

struct ValidationReport {
  std::vector<Hypothesis> hypotheses;
  bool passed() const {
    for (const auto& h : hypotheses)
      if (h.status == HypothesisStatus::kViolated) return false;
    return true;
  }
};

/// Evaluates every checkable hypothesis of the theorem selected by the case
/// tag (threshold position of k_n, sign conditions on f, the fixed-point-set
/// bound through the initial energy, the dilation cap average) and marks the
/// non-computable constant of the negative case as non-checkable.
ValidationReport validate_scenario(const ScenarioConfig& config);

}  // namespace qflow
