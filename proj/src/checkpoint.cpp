#include "qflow/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qflow {

namespace {

std::string hexfloat(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hexfloat(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == nullptr || *end != '\0')
    throw std::runtime_error("checkpoint: bad float '" + s + "'");
  return v;
}

std::string next_field(std::istream& is, const std::string& want) {
  std::string key, value;
  if (!(is >> key >> value) || key != want)
    throw std::runtime_error("checkpoint: expected field '" + want + "'");
  return value;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ostringstream os;
  os << "qflow-checkpoint v1\n";
  os << "config_hash " << ck.config_hash << "\n";
  os << "t " << hexfloat(ck.t) << "\n";
  os << "lambda " << hexfloat(ck.lambda) << "\n";
  os << "dt " << hexfloat(ck.dt) << "\n";
  os << "streak " << ck.streak << "\n";
  os << "target_volume " << hexfloat(ck.target_volume) << "\n";
  os << "modes " << ck.coeffs.size() << "\n";
  for (double c : ck.coeffs) os << hexfloat(c) << "\n";
  os << "nodes " << ck.grid_values.size() << "\n";
  for (double v : ck.grid_values) os << hexfloat(v) << "\n";
  os << "end\n";
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  f << os.str();
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_hash) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string magic, version;
  if (!(f >> magic >> version) || magic != "qflow-checkpoint" || version != "v1")
    throw std::runtime_error("checkpoint: bad header in " + path);
  Checkpoint ck;
  ck.config_hash = next_field(f, "config_hash");
  if (!expected_hash.empty() && ck.config_hash != expected_hash)
    throw std::runtime_error("checkpoint: config hash mismatch (file " + ck.config_hash +
                             ", expected " + expected_hash + ")");
  ck.t = parse_hexfloat(next_field(f, "t"));
  ck.lambda = parse_hexfloat(next_field(f, "lambda"));
  ck.dt = parse_hexfloat(next_field(f, "dt"));
  ck.streak = static_cast<int>(std::stol(next_field(f, "streak")));
  ck.target_volume = parse_hexfloat(next_field(f, "target_volume"));
  const std::size_t modes = std::stoul(next_field(f, "modes"));
  ck.coeffs.resize(modes);
  std::string tok;
  for (std::size_t m = 0; m < modes; ++m) {
    if (!(f >> tok)) throw std::runtime_error("checkpoint: truncated coefficient block");
    ck.coeffs[m] = parse_hexfloat(tok);
  }
  const std::size_t nodes = std::stoul(next_field(f, "nodes"));
  ck.grid_values.resize(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    if (!(f >> tok)) throw std::runtime_error("checkpoint: truncated grid block");
    ck.grid_values[i] = parse_hexfloat(tok);
  }
  if (!(f >> tok) || tok != "end")
    throw std::runtime_error("checkpoint: missing end marker (corrupted file)");
  return ck;
}

}  // namespace qflow
