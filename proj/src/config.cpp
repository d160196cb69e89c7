#include "sigmakit/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sigmakit/errors.hpp"

namespace sigmakit {

using nlohmann::json;

namespace {

std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

void warn_unknown(const json& obj, const std::set<std::string>& known, const std::string& path,
                  std::vector<std::string>& warnings) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key())) warnings.push_back("unknown field " + path + "." + it.key() + " ignored");
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path + ": must be finite");
  return v;
}

long long integer(const json& j, const std::string& path) {
  if (j.is_number_integer()) return j.get<long long>();
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (v == std::floor(v) && std::abs(v) < 1e15) return static_cast<long long>(v);
  }
  throw ConfigError(path + ": expected an integer");
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path + ": expected a string");
  return j.get<std::string>();
}

const json& list(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected a list");
  return j;
}

std::vector<std::string> string_list(const json& j, const std::string& path) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < list(j, path).size(); ++i) out.push_back(text(j[i], at(path, i)));
  return out;
}

Vec vector_of(const json& j, const std::string& path, std::optional<int> size = std::nullopt) {
  list(j, path);
  if (size && static_cast<int>(j.size()) != *size)
    throw ConfigError(path + ": expected " + std::to_string(*size) + " entries, got " + std::to_string(j.size()));
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], at(path, i));
  return v;
}

Mat matrix_of(const json& j, const std::string& path) {
  if (list(j, path).empty()) throw ConfigError(path + ": matrix has no rows");
  const std::size_t cols = list(j[0], at(path, 0)).size();
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    Vec row = vector_of(j[r], at(path, r), static_cast<int>(cols));
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

bool is_identifier(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

std::vector<std::string> default_states(int n) {
  std::vector<std::string> s;
  for (int i = 1; i <= n; ++i) s.push_back("x" + std::to_string(i));
  return s;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void parse_system(const json& j, RunConfig& cfg) {
  if (!j.is_object()) throw ConfigError("system: expected an object");
  warn_unknown(j, {"n", "m", "states", "drift", "controls", "strict_feedback", "A", "B"}, "system", cfg.warnings);
  SystemConfig& s = cfg.system;
  if (j.contains("A") || j.contains("B")) {
    if (!j.contains("A") || !j.contains("B")) throw ConfigError("system: the linear form needs both A and B");
    if (j.contains("drift") || j.contains("controls"))
      throw ConfigError("system: give either A/B or drift/controls, not both");
    s.a = matrix_of(j["A"], "system.A");
    s.b = matrix_of(j["B"], "system.B");
    if (s.a->rows() != s.a->cols()) throw ConfigError("system.A: must be square");
    if (s.b->rows() != s.a->rows()) throw ConfigError("system.B: must have as many rows as A");
    const int n = static_cast<int>(s.a->rows());
    const int m = static_cast<int>(s.b->cols());
    if (j.contains("n") && integer(j["n"], "system.n") != n) throw ConfigError("system.n: does not match A");
    if (j.contains("m") && integer(j["m"], "system.m") != m) throw ConfigError("system.m: does not match B");
    s.states = j.contains("states") ? string_list(j["states"], "system.states") : default_states(n);
    if (static_cast<int>(s.states.size()) != n) throw ConfigError("system.states: expected " + std::to_string(n));
  } else {
    if (!j.contains("n")) throw ConfigError("system.n: required");
    if (!j.contains("m")) throw ConfigError("system.m: required");
    const long long n = integer(j["n"], "system.n");
    const long long m = integer(j["m"], "system.m");
    if (n < 1) throw ConfigError("system.n: must be >= 1");
    if (m < 1 || m > n) throw ConfigError("system.m: must satisfy 1 <= m <= n");
    s.states = j.contains("states") ? string_list(j["states"], "system.states") : default_states(static_cast<int>(n));
    if (static_cast<long long>(s.states.size()) != n)
      throw ConfigError("system.states: expected " + std::to_string(n) + " names, got " +
                        std::to_string(s.states.size()));
    if (!j.contains("drift")) throw ConfigError("system.drift: required");
    s.drift = string_list(j["drift"], "system.drift");
    if (static_cast<long long>(s.drift.size()) != n)
      throw ConfigError("system.drift: expected " + std::to_string(n) + " components, got " +
                        std::to_string(s.drift.size()));
    if (!j.contains("controls")) throw ConfigError("system.controls: required");
    const json& c = list(j["controls"], "system.controls");
    if (static_cast<long long>(c.size()) != m)
      throw ConfigError("system.controls: expected " + std::to_string(m) + " fields, got " + std::to_string(c.size()));
    for (std::size_t i = 0; i < c.size(); ++i) {
      s.controls.push_back(string_list(c[i], at("system.controls", i)));
      if (static_cast<long long>(s.controls.back().size()) != n)
        throw ConfigError(at("system.controls", i) + ": expected " + std::to_string(n) + " components");
    }
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < s.states.size(); ++i) {
    if (!is_identifier(s.states[i])) throw ConfigError(at("system.states", i) + ": not a valid name");
    if (s.states[i] == "mu") throw ConfigError(at("system.states", i) + ": 'mu' is reserved for the W parameter");
    if (!seen.insert(s.states[i]).second) throw ConfigError(at("system.states", i) + ": duplicate name");
  }
  if (j.contains("strict_feedback")) {
    if (!j["strict_feedback"].is_boolean()) throw ConfigError("system.strict_feedback: expected true or false");
    s.strict_feedback = j["strict_feedback"].get<bool>();
  }
}

std::vector<int> index_list(const json& j, const std::string& path, int n) {
  std::vector<int> out;
  for (std::size_t i = 0; i < list(j, path).size(); ++i) {
    const long long v = integer(j[i], at(path, i));
    if (v < 1 || v > n)
      throw ConfigError(at(path, i) + ": state index " + std::to_string(v) + " outside 1.." + std::to_string(n));
    out.push_back(static_cast<int>(v));
  }
  return out;
}

void parse_manifold(const json& j, RunConfig& cfg) {
  if (!j.is_object()) throw ConfigError("manifold: expected an object");
  warn_unknown(j, {"ind", "dep", "h", "phi", "anchor", "mu", "mu_range"}, "manifold", cfg.warnings);
  const int n = static_cast<int>(cfg.system.states.size());
  ManifoldConfig mc;
  if (j.contains("ind")) mc.ind = index_list(j["ind"], "manifold.ind", n);
  if (j.contains("dep")) mc.dep = index_list(j["dep"], "manifold.dep", n);
  for (std::size_t a = 0; a < mc.ind.size(); ++a)
    for (std::size_t b = a + 1; b < mc.ind.size(); ++b)
      if (mc.ind[a] == mc.ind[b])
        throw ConfigError("manifold.ind: state index " + std::to_string(mc.ind[a]) + " listed twice");
  for (std::size_t a = 0; a < mc.dep.size(); ++a)
    for (std::size_t b = a + 1; b < mc.dep.size(); ++b)
      if (mc.dep[a] == mc.dep[b])
        throw ConfigError("manifold.dep: state index " + std::to_string(mc.dep[a]) + " listed twice");
  for (int d : mc.dep)
    if (std::find(mc.ind.begin(), mc.ind.end(), d) != mc.ind.end())
      throw ConfigError("manifold: state index " + std::to_string(d) + " appears in both ind and dep");

  if (j.contains("phi")) {
    if (j.contains("h")) throw ConfigError("manifold: give either h (graph form) or phi (level set), not both");
    mc.phi = string_list(j["phi"], "manifold.phi");
    if (mc.phi.empty()) throw ConfigError("manifold.phi: needs at least one function");
    if (!j.contains("anchor")) throw ConfigError("manifold.anchor: required with phi");
    mc.anchor = vector_of(j["anchor"], "manifold.anchor", n);
    if (!mc.dep.empty() && mc.dep.size() != mc.phi.size())
      throw ConfigError("manifold.dep: expected one index per phi function");
  } else {
    if (!j.contains("h")) throw ConfigError("manifold: needs h (graph form) or phi (level set)");
    if (!j.contains("dep")) throw ConfigError("manifold.dep: required with h");
    if (!j.contains("ind")) throw ConfigError("manifold.ind: required with h");
    mc.h = string_list(j["h"], "manifold.h");
    if (mc.h.size() != mc.dep.size())
      throw ConfigError("manifold.h: expected " + std::to_string(mc.dep.size()) + " functions (one per dep index)");
    for (int i = 1; i <= n; ++i)
      if (std::find(mc.ind.begin(), mc.ind.end(), i) == mc.ind.end() &&
          std::find(mc.dep.begin(), mc.dep.end(), i) == mc.dep.end())
        throw ConfigError("manifold: state index " + std::to_string(i) + " is in neither ind nor dep");
  }
  if (j.contains("mu")) mc.mu = number(j["mu"], "manifold.mu");
  if (j.contains("mu_range")) {
    const json& r = list(j["mu_range"], "manifold.mu_range");
    if (r.size() != 3) throw ConfigError("manifold.mu_range: expected [min, max, count]");
    MuRange mr{number(r[0], "manifold.mu_range[0]"), number(r[1], "manifold.mu_range[1]"),
               static_cast<int>(integer(r[2], "manifold.mu_range[2]"))};
    mc.mu_range = mr;
  }
  cfg.manifold = std::move(mc);
}

GridAxis grid_axis(const json& j, const std::string& path) {
  if (j.is_object()) {
    for (const char* k : {"min", "max", "step"})
      if (!j.contains(k)) throw ConfigError(path + "." + k + ": required");
    return {number(j["min"], path + ".min"), number(j["max"], path + ".max"), number(j["step"], path + ".step")};
  }
  const json& l = list(j, path);
  if (l.size() != 3) throw ConfigError(path + ": expected [min, max, step]");
  return {number(l[0], at(path, 0)), number(l[1], at(path, 1)), number(l[2], at(path, 2))};
}

void parse_solver(const json& j, RunConfig& cfg) {
  if (!j.is_object()) throw ConfigError("solver: expected an object");
  warn_unknown(j,
               {"tol", "rank_tol", "max_iter", "arc_step", "n_steps", "lambda", "grid", "rtol", "atol", "t_final",
                "report_dt", "cap", "x0", "seeds", "control_bounds"},
               "solver", cfg.warnings);
  SolverConfig& s = cfg.solver;
  const int n = static_cast<int>(cfg.system.states.size());
  if (j.contains("tol")) s.tol = number(j["tol"], "solver.tol");
  if (j.contains("rank_tol")) s.rank_tol = number(j["rank_tol"], "solver.rank_tol");
  if (j.contains("max_iter")) s.max_iter = static_cast<int>(integer(j["max_iter"], "solver.max_iter"));
  if (j.contains("arc_step")) s.arc_step = number(j["arc_step"], "solver.arc_step");
  if (j.contains("n_steps")) s.n_steps = static_cast<int>(integer(j["n_steps"], "solver.n_steps"));
  if (j.contains("lambda")) s.lambda = number(j["lambda"], "solver.lambda");
  if (j.contains("rtol")) s.rtol = number(j["rtol"], "solver.rtol");
  if (j.contains("atol")) s.atol = number(j["atol"], "solver.atol");
  if (j.contains("t_final")) s.t_final = number(j["t_final"], "solver.t_final");
  if (j.contains("report_dt")) s.report_dt = number(j["report_dt"], "solver.report_dt");
  if (j.contains("cap")) {
    const long long c = integer(j["cap"], "solver.cap");
    if (c < 1) throw ConfigError("solver.cap: must be >= 1");
    s.cap = static_cast<std::size_t>(c);
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    if (g.is_object() || (g.is_array() && !g.empty() && g[0].is_number())) {
      s.grid.push_back(grid_axis(g, "solver.grid"));
    } else {
      for (std::size_t i = 0; i < list(g, "solver.grid").size(); ++i)
        s.grid.push_back(grid_axis(g[i], at("solver.grid", i)));
    }
  }
  if (j.contains("x0")) s.x0 = vector_of(j["x0"], "solver.x0", n);
  if (j.contains("seeds")) {
    const json& l = list(j["seeds"], "solver.seeds");
    for (std::size_t i = 0; i < l.size(); ++i) s.seeds.push_back(vector_of(l[i], at("solver.seeds", i), n));
  }
  if (j.contains("control_bounds")) {
    const json& b = j["control_bounds"];
    if (!b.is_object() || !b.contains("lower") || !b.contains("upper"))
      throw ConfigError("solver.control_bounds: expected {\"lower\": [...], \"upper\": [...]}");
    const int m = cfg.system.b ? static_cast<int>(cfg.system.b->cols()) : static_cast<int>(cfg.system.controls.size());
    s.control_bounds = Box{vector_of(b["lower"], "solver.control_bounds.lower", m),
                           vector_of(b["upper"], "solver.control_bounds.upper", m)};
    if ((s.control_bounds->lower.array() > s.control_bounds->upper.array()).any())
      throw ConfigError("solver.control_bounds: lower exceeds upper");
  }
}

}  // namespace

void validate_solver(const SolverConfig& s) {
  if (!(s.tol > 0.0)) throw ConfigError("solver.tol: must be positive");
  if (!(s.rank_tol > 0.0 && s.rank_tol < 1.0)) throw ConfigError("solver.rank_tol: must lie in (0, 1)");
  if (s.max_iter < 1) throw ConfigError("solver.max_iter: must be >= 1");
  if (!(s.arc_step > 0.0)) throw ConfigError("solver.arc_step: must be positive");
  if (s.n_steps < 1) throw ConfigError("solver.n_steps: must be >= 1");
  if (!(s.lambda >= 0.0)) throw ConfigError("solver.lambda: must be >= 0");
  if (!(s.rtol > 0.0)) throw ConfigError("solver.rtol: must be positive");
  if (!(s.atol > 0.0)) throw ConfigError("solver.atol: must be positive");
  if (!(s.t_final > 0.0)) throw ConfigError("solver.t_final: must be positive");
  if (!(s.report_dt > 0.0)) throw ConfigError("solver.report_dt: must be positive");
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    if (!(s.grid[i].step > 0.0)) throw ConfigError(at("solver.grid", i) + ": step must be positive");
    if (!(s.grid[i].max >= s.grid[i].min)) throw ConfigError(at("solver.grid", i) + ": max is below min");
  }
}

void validate_mu_range(const MuRange& r, const std::string& what) {
  if (!(r.max > r.min)) throw ConfigError(what + ": need min < max");
  if (r.count < 2) throw ConfigError(what + ": need at least 2 samples");
}

RunConfig parse_config(const std::string& source) {
  json doc;
  try {
    doc = json::parse(source, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    static const std::set<std::string> blocks = {"system", "manifold", "solver", "output"};
    if (blocks.count(it.key()))
      cfg.present_blocks.push_back(it.key());
    else
      cfg.warnings.push_back("unknown block '" + it.key() + "' ignored");
  }
  if (!doc.contains("system")) throw ConfigError("system: required");
  parse_system(doc["system"], cfg);
  if (doc.contains("manifold")) parse_manifold(doc["manifold"], cfg);
  if (doc.contains("solver")) parse_solver(doc["solver"], cfg);
  if (doc.contains("output")) {
    const json& o = doc["output"];
    if (!o.is_object()) throw ConfigError("output: expected an object");
    warn_unknown(o, {"dir"}, "output", cfg.warnings);
    if (o.contains("dir")) cfg.output_dir = text(o["dir"], "output.dir");
  }
  validate_solver(cfg.solver);
  if (cfg.manifold && cfg.manifold->mu_range) validate_mu_range(*cfg.manifold->mu_range, "manifold.mu_range");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

Expr checked_parse(const std::string& src, const Expr::VariableList& vars, const std::string& path) {
  try {
    return parse(src, vars);
  } catch (const ParseError& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const UndeclaredVariableError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

ControlAffineSystem build_system(const RunConfig& cfg) {
  const SystemConfig& s = cfg.system;
  std::vector<std::string> drift = s.drift;
  std::vector<std::vector<std::string>> controls = s.controls;
  if (s.a) {
    if (auto lin = build_linear(cfg); !lin) throw ConfigError("system: linear form is invalid");
    drift.clear();
    controls.clear();
    const auto n = s.a->rows();
    for (Eigen::Index i = 0; i < n; ++i) {
      std::string row = "0";
      for (Eigen::Index j = 0; j < n; ++j)
        if ((*s.a)(i, j) != 0.0) row += " + " + fmt((*s.a)(i, j)) + "*" + s.states[j];
      drift.push_back(row);
    }
    for (Eigen::Index k = 0; k < s.b->cols(); ++k) {
      std::vector<std::string> col;
      for (Eigen::Index i = 0; i < n; ++i) col.push_back(fmt((*s.b)(i, k)));
      controls.push_back(col);
    }
  }
  auto vars = make_variable_list(s.states);
  std::vector<Expr> f;
  for (std::size_t i = 0; i < drift.size(); ++i) f.push_back(checked_parse(drift[i], vars, at("system.drift", i)));
  std::vector<std::vector<Expr>> g;
  for (std::size_t k = 0; k < controls.size(); ++k) {
    std::vector<Expr> col;
    for (std::size_t i = 0; i < controls[k].size(); ++i)
      col.push_back(checked_parse(controls[k][i], vars, at(at("system.controls", k), i)));
    g.push_back(std::move(col));
  }
  ControlAffineSystem sys = [&] {
    try {
      return ControlAffineSystem(s.states, f, g);
    } catch (const PreconditionError& e) {
      throw ConfigError(std::string("system: ") + e.what());
    }
  }();
  if (s.strict_feedback) {
    try {
      (void)StrictFeedbackSystem::from_control_affine(sys);
    } catch (const PreconditionError& e) {
      throw ConfigError(std::string("system.strict_feedback: ") + e.what());
    }
  }
  return sys;
}

std::optional<LinearControlSystem> build_linear(const RunConfig& cfg) {
  if (!cfg.system.a) return std::nullopt;
  try {
    return LinearControlSystem(*cfg.system.a, *cfg.system.b, cfg.solver.rank_tol);
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("system: ") + e.what());
  }
}

TransverseManifold build_manifold(const RunConfig& cfg, const ControlAffineSystem& sys) {
  if (!cfg.manifold) throw ConfigError("manifold: this command needs a manifold block");
  const ManifoldConfig& mc = *cfg.manifold;
  auto zero_based = [](const std::vector<int>& v) {
    std::vector<int> out;
    for (int i : v) out.push_back(i - 1);
    return out;
  };
  const std::size_t m = mc.phi.empty() ? mc.dep.size() : mc.phi.size();
  if (static_cast<int>(m) != sys.m())
    throw ConfigError("manifold: codimension " + std::to_string(m) + " does not match the " +
                      std::to_string(sys.m()) + " control fields");
  try {
    if (mc.phi.empty()) return TransverseManifold::graph(sys.states(), zero_based(mc.ind), zero_based(mc.dep), mc.h, "mu");
    return TransverseManifold::level_set(sys.states(), mc.phi, *mc.anchor, zero_based(mc.dep), "mu", mc.mu);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("manifold: ") + e.what());
  } catch (const UndeclaredVariableError& e) {
    throw ConfigError(std::string("manifold: ") + e.what());
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("manifold: ") + e.what());
  }
}

Box grid_box(const RunConfig& cfg, int n, double* step) {
  const auto& g = cfg.solver.grid;
  if (g.empty()) throw ConfigError("solver.grid: required for this command (or pass --grid)");
  if (g.size() != 1 && static_cast<int>(g.size()) != n)
    throw ConfigError("solver.grid: give one axis for all states or exactly " + std::to_string(n));
  Box box{Vec(n), Vec(n)};
  for (int i = 0; i < n; ++i) {
    const GridAxis& a = g.size() == 1 ? g[0] : g[static_cast<std::size_t>(i)];
    if (std::abs(a.step - g[0].step) > 1e-12 * g[0].step)
      throw ConfigError("solver.grid: all axes must share one step");
    box.lower(i) = a.min;
    box.upper(i) = a.max;
  }
  if (step) *step = g[0].step;
  return box;
}

namespace {

std::vector<std::string> split_colon(const std::string& s) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(':', start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(what + ": '" + s + "' is not a number");
}

}  // namespace

MuRange parse_mu_range(const std::string& text) {
  auto p = split_colon(text);
  if (p.size() != 3) throw ConfigError("--mu-range: expected A:B:N");
  const double n = to_double(p[2], "--mu-range");
  if (n != std::floor(n)) throw ConfigError("--mu-range: N must be an integer");
  MuRange r{to_double(p[0], "--mu-range"), to_double(p[1], "--mu-range"), static_cast<int>(n)};
  validate_mu_range(r, "--mu-range");
  return r;
}

GridAxis parse_grid_axis(const std::string& text) {
  auto p = split_colon(text);
  if (p.size() != 3) throw ConfigError("--grid: expected MIN:MAX:STEP");
  GridAxis a{to_double(p[0], "--grid"), to_double(p[1], "--grid"), to_double(p[2], "--grid")};
  if (!(a.step > 0.0) || !(a.max >= a.min)) throw ConfigError("--grid: need MIN <= MAX and STEP > 0");
  return a;
}

}  // namespace sigmakit
