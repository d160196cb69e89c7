#include "sigmakit/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sigmakit/config.hpp"
#include "sigmakit/design.hpp"
#include "sigmakit/errors.hpp"
#include "sigmakit/io.hpp"
#include "sigmakit/sigma.hpp"
#include "sigmakit/transverse.hpp"

namespace sigmakit {

namespace {

const std::vector<std::string> kCommands = {"stratify", "sigma", "transverse", "design", "bifurcate", "check"};

struct Flags {
  std::string command;
  std::string config;
  std::optional<std::string> out;
  std::optional<double> tol, rank_tol, lambda, arc_step, rtol, atol, t_final, report_dt, mu;
  std::optional<int> max_iter, n_steps;
  std::optional<std::size_t> cap;
  std::optional<std::string> mu_range;
  std::vector<std::string> grid;
  bool seed_grid = false;
  bool quiet = false;
};

// Raised when a run completes but its result is a numerical failure; reports
// are still written.
struct NumericalFailure {
  std::string message;
};

struct Context {
  Flags flags;
  RunConfig cfg;
  std::filesystem::path out_dir;
  std::ostream& out;
  std::ostream& err;
  double mu = 0.0;
  std::optional<MuRange> mu_range;

  void say(const std::string& line) const {
    if (!flags.quiet) out << line << "\n";
  }
};

void apply_overrides(Context& ctx) {
  const Flags& f = ctx.flags;
  SolverConfig& s = ctx.cfg.solver;
  if (f.tol) s.tol = *f.tol;
  if (f.rank_tol) s.rank_tol = *f.rank_tol;
  if (f.lambda) s.lambda = *f.lambda;
  if (f.arc_step) s.arc_step = *f.arc_step;
  if (f.rtol) s.rtol = *f.rtol;
  if (f.atol) s.atol = *f.atol;
  if (f.t_final) s.t_final = *f.t_final;
  if (f.report_dt) s.report_dt = *f.report_dt;
  if (f.max_iter) s.max_iter = *f.max_iter;
  if (f.n_steps) s.n_steps = *f.n_steps;
  if (f.cap) {
    if (*f.cap < 1) throw ConfigError("--cap: must be >= 1");
    s.cap = *f.cap;
  }
  if (!f.grid.empty()) {
    s.grid.clear();
    for (const auto& g : f.grid) s.grid.push_back(parse_grid_axis(g));
  }
  validate_solver(s);
  if (ctx.cfg.manifold) {
    ctx.mu = ctx.cfg.manifold->mu;
    ctx.mu_range = ctx.cfg.manifold->mu_range;
  }
  if (f.mu) ctx.mu = *f.mu;
  if (f.mu_range) ctx.mu_range = parse_mu_range(*f.mu_range);
  ctx.out_dir = f.out ? std::filesystem::path(*f.out) : std::filesystem::path(ctx.cfg.output_dir);
}

Json header(const Context& ctx) {
  const SolverConfig& s = ctx.cfg.solver;
  Json solver;
  solver["tol"] = s.tol;
  solver["rank_tol"] = s.rank_tol;
  solver["max_iter"] = s.max_iter;
  solver["arc_step"] = s.arc_step;
  solver["n_steps"] = s.n_steps;
  solver["lambda"] = s.lambda;
  Json grid = Json::array();
  for (const auto& g : s.grid) grid.push_back(Json::array({g.min, g.max, g.step}));
  solver["grid"] = grid;
  solver["rtol"] = s.rtol;
  solver["atol"] = s.atol;
  solver["t_final"] = s.t_final;
  solver["report_dt"] = s.report_dt;
  solver["cap"] = s.cap;
  solver["seed_grid"] = ctx.flags.seed_grid;
  solver["mu"] = ctx.mu;
  if (ctx.mu_range)
    solver["mu_range"] = Json::array({ctx.mu_range->min, ctx.mu_range->max, ctx.mu_range->count});
  else
    solver["mu_range"] = nullptr;
  Json h;
  h["tool"] = "sigmakit";
  h["command"] = ctx.flags.command;
  h["config"] = ctx.flags.config;
  h["states"] = ctx.cfg.system.states;
  h["solver"] = solver;
  return h;
}

std::vector<std::string> state_columns(const ControlAffineSystem& sys, std::vector<std::string> extra) {
  std::vector<std::string> cols = sys.states();
  cols.insert(cols.end(), extra.begin(), extra.end());
  return cols;
}

std::vector<std::string> cells(const Vec& x) {
  std::vector<std::string> c;
  for (Eigen::Index i = 0; i < x.size(); ++i) c.push_back(format_double(x(i)));
  return c;
}

void emit(const Context& ctx, const std::string& name, const std::string& content) {
  write_file(ctx.out_dir / name, content);
}

std::vector<Vec> seeds(const Context& ctx, int n) {
  std::vector<Vec> out = ctx.cfg.solver.seeds;
  if (ctx.flags.seed_grid || out.empty()) {
    if (ctx.cfg.solver.grid.empty())
      throw ConfigError("solver.seeds: none given; add seeds or a grid (with --seed-grid)");
    double step = 0.0;
    Box box = grid_box(ctx.cfg, n, &step);
    auto pts = grid_points(box, step, ctx.cfg.solver.cap);
    out.insert(out.end(), pts.begin(), pts.end());
  }
  return out;
}

Json eigen_json(const std::complex<double>& z) { return Json::array({z.real(), z.imag()}); }

Json equilibrium_json(const EquilibriumRecord& r) {
  Json j;
  j["point"] = to_json(r.point);
  j["chart_point"] = to_json(r.chart_point);
  Json ev = Json::array();
  for (const auto& z : r.eigenvalues) ev.push_back(eigen_json(z));
  j["eigenvalues"] = ev;
  j["index"] = r.index;
  j["isolated"] = r.isolated;
  j["condition"] = r.condition;
  j["sigma_margin"] = r.sigma_margin;
  j["jacobian_sign"] = r.jacobian_sign;
  j["residual"] = r.residual;
  return j;
}

Json certificate_json(const ControlAffineSystem& sys, const std::vector<Vec>& points, double rank_tol) {
  std::size_t certified = 0;
  double min_sv = std::numeric_limits<double>::infinity();
  for (const auto& p : points) {
    auto c = dimension_certificate(sys, p, rank_tol);
    certified += c.certified();
    min_sv = std::min(min_sv, c.smallest_singular_value);
  }
  Json j;
  const bool all = !points.empty() && certified == points.size();
  if (all)
    j["dimension"] = sys.m();
  else
    j["dimension"] = nullptr;
  j["status"] = all ? "certified" : points.empty() ? "no points" : "non-generic configuration";
  j["expected_rank"] = sys.n() - sys.m();
  j["certified_points"] = certified;
  j["total_points"] = points.size();
  j["min_singular_value"] = points.empty() ? 0.0 : min_sv;
  return j;
}

int cmd_stratify(Context& ctx) {
  auto sys = build_system(ctx.cfg);
  double step = 0.0;
  Box box = grid_box(ctx.cfg, sys.n(), &step);
  auto st = stratify(sys, box, step, ctx.cfg.solver.rank_tol, ctx.cfg.solver.cap);
  std::string csv = csv_line(state_columns(sys, {"corank"}));
  std::map<int, std::size_t> counts;
  for (std::size_t i = 0; i < st.points.size(); ++i) {
    auto row = cells(st.points[i]);
    row.push_back(std::to_string(st.corank[i]));
    csv += csv_line(row);
    ++counts[st.corank[i]];
  }
  Json j = header(ctx);
  j["points"] = st.points.size();
  j["step"] = step;
  j["box"] = {{"lower", to_json(box.lower)}, {"upper", to_json(box.upper)}};
  j["regular_fraction"] = st.regular_fraction;
  Json c = Json::object();
  for (const auto& [k, v] : counts) c[std::to_string(k)] = v;
  j["corank_counts"] = c;
  emit(ctx, "stratify.csv", csv);
  emit(ctx, "stratify.json", dump_json(j));
  ctx.say("stratify: " + std::to_string(st.points.size()) + " points, regular fraction " +
          format_double(st.regular_fraction));
  return 0;
}

std::string cloud_csv(const ControlAffineSystem& sys, const SigmaSet& set) {
  std::string csv = csv_line(state_columns(sys, {"residual_norm"}));
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    auto row = cells(set.points[i]);
    row.push_back(format_double(i < set.residuals.size() ? set.residuals[i] : 0.0));
    csv += csv_line(row);
  }
  return csv;
}

int cmd_sigma(Context& ctx) {
  const SolverConfig& s = ctx.cfg.solver;
  auto sys = build_system(ctx.cfg);
  Json j = header(ctx);
  std::vector<Vec> accepted;

  if (auto lin = build_linear(ctx.cfg)) {
    auto ls = sigma_linear(*lin, s.rank_tol);
    j["route"] = "linear";
    j["dimension"] = ls.dimension;
    j["degenerate"] = ls.degenerate;
    j["basis"] = to_json(ls.set.basis);
    SigmaSet rows;
    for (Eigen::Index k = 0; k < ls.set.basis.cols(); ++k) {
      Vec v = ls.set.basis.col(k);
      rows.points.push_back(v);
      rows.residuals.push_back(sigma_residual(sys, v, s.rank_tol).norm());
    }
    j["certificate"] = certificate_json(sys, {Vec::Zero(sys.n())}, s.rank_tol);
    emit(ctx, "sigma.csv", cloud_csv(sys, rows));
    emit(ctx, "sigma.json", dump_json(j));
    ctx.say("sigma: linear subspace of dimension " + std::to_string(ls.dimension));
    if (ls.degenerate) throw NumericalFailure{"sigma: degenerate linear system"};
    return 0;
  }

  double step = 0.0;
  Box box = grid_box(ctx.cfg, sys.n(), &step);
  if (ctx.cfg.system.strict_feedback) {
    auto sf = StrictFeedbackSystem::from_control_affine(sys);
    auto samples_pts = grid_points(Box{box.lower.head(1), box.upper.head(1)}, step, s.cap);
    std::vector<double> samples;
    for (const auto& p : samples_pts) samples.push_back(p(0));
    auto res = sigma_strict_feedback(sf, samples, s.tol, s.rank_tol);
    j["route"] = "strict_feedback";
    Json skipped = Json::array();
    for (const auto& e : res.errors) skipped.push_back({{"x1", e.x1}, {"message", e.message}});
    j["skipped"] = skipped;
    accepted = res.graph.points;
    j["points"] = accepted.size();
    j["certificate"] = certificate_json(sys, accepted, s.rank_tol);
    j["dimension"] = j["certificate"]["dimension"];
    emit(ctx, "sigma.csv", cloud_csv(sys, res.graph));
  } else {
    GridScanOptions go;
    go.tol = s.tol;
    go.max_iter = s.max_iter;
    go.rank_tol = s.rank_tol;
    go.cap = s.cap;
    auto scan = sigma_grid_scan(sys, box, step, go);
    j["route"] = "general";
    accepted = scan.cloud.points;
    j["points"] = accepted.size();
    j["scan"] = {{"seeds", scan.seeds},
                 {"converged", scan.converged},
                 {"failed", scan.failed},
                 {"stratum_rejected", scan.stratum_rejected},
                 {"warnings", scan.warnings}};
    j["certificate"] = certificate_json(sys, accepted, s.rank_tol);
    j["dimension"] = j["certificate"]["dimension"];
    emit(ctx, "sigma.csv", cloud_csv(sys, scan.cloud));

    if (sys.m() == 1 && !accepted.empty()) {
      const Vec centre = 0.5 * (box.lower + box.upper);
      std::size_t best = 0;
      for (std::size_t i = 1; i < accepted.size(); ++i)
        if ((accepted[i] - centre).norm() < (accepted[best] - centre).norm()) best = i;
      ContinuationOptions co;
      co.arc_step = s.arc_step;
      co.n_steps = s.n_steps;
      co.tol = s.tol;
      co.rank_tol = s.rank_tol;
      co.both_directions = true;
      co.box = box;
      Json cj;
      try {
        auto cont = sigma_continuation(sys, accepted[best], co);
        cj["start"] = to_json(accepted[best]);
        cj["points"] = cont.curve.points.size();
        Json halts = Json::array();
        for (auto h : cont.halts) halts.push_back(to_string(h));
        cj["halts"] = halts;
        Json diags = Json::array();
        for (const auto& d : cont.diagnostics)
          if (!d.empty()) diags.push_back(d);
        cj["diagnostics"] = diags;
        emit(ctx, "sigma_curve.csv", cloud_csv(sys, cont.curve));
      } catch (const PreconditionError& e) {
        cj["error"] = e.what();
      }
      j["continuation"] = cj;
    }
  }
  emit(ctx, "sigma.json", dump_json(j));
  ctx.say("sigma: " + std::to_string(accepted.size()) + " points (" + j["route"].get<std::string>() + ")");
  if (accepted.empty()) throw NumericalFailure{"sigma: no points of the singular set were found"};
  return 0;
}

EquilibriumOptions equilibrium_options(const Context& ctx) {
  EquilibriumOptions eo;
  eo.mu = ctx.mu;
  eo.tol = ctx.cfg.solver.tol;
  eo.max_iter = ctx.cfg.solver.max_iter;
  eo.rank_tol = ctx.cfg.solver.rank_tol;
  return eo;
}

Json manifold_json(const TransverseManifold& w) {
  Json j;
  j["form"] = w.graph_form() ? "graph" : "level_set";
  j["dimension"] = w.dim();
  j["codimension"] = w.m();
  std::vector<int> ind, dep;
  for (int i : w.ind()) ind.push_back(i + 1);
  for (int i : w.dep()) dep.push_back(i + 1);
  j["ind"] = ind;
  j["dep"] = dep;
  return j;
}

int cmd_transverse(Context& ctx) {
  auto sys = build_system(ctx.cfg);
  auto w = build_manifold(ctx.cfg, sys);
  const auto seed_list = seeds(ctx, sys.n());
  const double rank_tol = ctx.cfg.solver.rank_tol;

  // margin of W against D at the seeds pulled onto W through the chart
  std::size_t sampled = 0, off_stratum = 0, lift_failed = 0, non_transverse = 0;
  double min_sv = std::numeric_limits<double>::infinity(), max_cond = 0.0;
  for (const auto& seed : seed_list) {
    Vec p;
    try {
      p = w.lift(w.chart(seed), ctx.mu);
    } catch (const Error&) {
      ++lift_failed;
      continue;
    }
    try {
      auto m = transversality_to_D(w, sys, p, ctx.mu, kDefaultTransversalityTol, rank_tol);
      ++sampled;
      non_transverse += !m.transverse;
      min_sv = std::min(min_sv, m.sigma_min);
      max_cond = std::max(max_cond, m.condition);
    } catch (const StratumError&) {
      ++off_stratum;
    } catch (const PreconditionError&) {
      ++lift_failed;
    }
  }

  auto search = find_equilibria(w, sys, seed_list, equilibrium_options(ctx));
  Json j = header(ctx);
  j["manifold"] = manifold_json(w);
  Json margin;
  margin["samples"] = sampled;
  margin["transverse"] = sampled > 0 && non_transverse == 0;
  margin["non_transverse_samples"] = non_transverse;
  margin["min_sigma_min"] = sampled ? min_sv : 0.0;
  margin["max_condition"] = max_cond;
  margin["off_stratum"] = off_stratum;
  margin["lift_failures"] = lift_failed;
  j["margin"] = margin;
  Json eqs = Json::array();
  for (const auto& r : search.equilibria) {
    Json e = equilibrium_json(r);
    try {
      auto m = transversality_to_D(w, sys, r.point, ctx.mu, kDefaultTransversalityTol, rank_tol);
      e["margin_to_D"] = m.sigma_min;
    } catch (const Error&) {
      e["margin_to_D"] = nullptr;
    }
    eqs.push_back(e);
  }
  j["equilibria"] = eqs;
  j["continuum_suspected"] = search.continuum_suspected;
  Json failures = Json::array();
  for (const auto& f : search.failures) failures.push_back({{"seed", f.seed}, {"message", f.message}});
  j["failures"] = failures;
  emit(ctx, "transverse.json", dump_json(j));
  ctx.say("transverse: " + std::to_string(search.equilibria.size()) + " equilibria, min margin " +
          format_double(sampled ? min_sv : 0.0));
  return 0;
}

int cmd_design(Context& ctx) {
  const SolverConfig& s = ctx.cfg.solver;
  auto sys = build_system(ctx.cfg);
  auto w = build_manifold(ctx.cfg, sys);
  if (!s.x0) throw ConfigError("solver.x0: required for design");
  auto law = synthesize_invariance_feedback(w, sys, s.lambda, ctx.mu);
  SimulationOptions so;
  so.t_final = s.t_final;
  so.ode.rtol = s.rtol;
  so.ode.atol = s.atol;
  so.ode.report_dt = s.report_dt;
  so.control_bounds = s.control_bounds;
  auto tr = simulate(law, *s.x0, so);

  std::vector<std::string> extra = {"t"};
  for (int k = 1; k <= sys.m(); ++k) extra.push_back("u" + std::to_string(k));
  extra.push_back("s_norm");
  std::string csv = csv_line(state_columns(sys, extra));
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    auto row = cells(tr.states[i]);
    row.push_back(format_double(tr.times[i]));
    auto u = cells(tr.controls[i]);
    row.insert(row.end(), u.begin(), u.end());
    row.push_back(format_double(tr.surface_norm[i]));
    csv += csv_line(row);
  }

  Json j = header(ctx);
  j["manifold"] = manifold_json(w);
  j["lambda"] = s.lambda;
  j["x0"] = to_json(*s.x0);
  j["surface_at_x0"] = to_json(law.surface(*s.x0));
  j["samples"] = tr.times.size();
  j["initial_s_norm"] = tr.surface_norm.empty() ? 0.0 : tr.surface_norm.front();
  j["final_s_norm"] = tr.surface_norm.empty() ? 0.0 : tr.surface_norm.back();
  j["max_s_norm"] =
      tr.surface_norm.empty() ? 0.0 : *std::max_element(tr.surface_norm.begin(), tr.surface_norm.end());
  if (auto rate = decay_rate(tr, 100.0 * s.atol))
    j["decay_rate"] = *rate;
  else
    j["decay_rate"] = nullptr;
  j["accepted_steps"] = tr.accepted_steps;
  j["rejected_steps"] = tr.rejected_steps;
  j["truncated"] = tr.truncated;
  j["diagnostic"] = tr.diagnostic;
  Json viol = Json::array();
  for (std::size_t i = 0; i < tr.violations.size() && i < 100; ++i)
    viol.push_back({{"t", tr.violations[i].t},
                    {"component", tr.violations[i].component + 1},
                    {"value", tr.violations[i].value}});
  j["control_violations"] = tr.violations.size();
  j["first_violations"] = viol;
  emit(ctx, "trajectory.csv", csv);
  emit(ctx, "design.json", dump_json(j));
  ctx.say("design: " + std::to_string(tr.times.size()) + " samples, final |s| " +
          format_double(tr.surface_norm.empty() ? 0.0 : tr.surface_norm.back()));
  if (tr.truncated) throw NumericalFailure{"design: integration stopped early: " + tr.diagnostic};
  return 0;
}

int cmd_bifurcate(Context& ctx) {
  auto sys = build_system(ctx.cfg);
  auto w = build_manifold(ctx.cfg, sys);
  if (!ctx.mu_range) throw ConfigError("manifold.mu_range: required for bifurcate (or pass --mu-range)");
  BifurcationOptions bo;
  bo.mu_min = ctx.mu_range->min;
  bo.mu_max = ctx.mu_range->max;
  bo.n_mu = ctx.mu_range->count;
  bo.equilibrium = equilibrium_options(ctx);
  auto d = trace_bifurcation(w, sys, seeds(ctx, sys.n()), bo);

  std::string csv =
      csv_line(state_columns(sys, {"mu", "branch", "index", "isolated", "leading_re", "leading_im"}));
  for (std::size_t i = 0; i < d.mu.size(); ++i)
    for (std::size_t k = 0; k < d.equilibria[i].size(); ++k) {
      const auto& r = d.equilibria[i][k];
      auto row = cells(r.point);
      row.push_back(format_double(d.mu[i]));
      row.push_back(std::to_string(d.branch[i][k]));
      row.push_back(std::to_string(r.index));
      row.push_back(r.isolated ? "1" : "0");
      const auto lead = r.eigenvalues.empty() ? std::complex<double>() : r.eigenvalues.front();
      row.push_back(format_double(lead.real()));
      row.push_back(format_double(lead.imag()));
      csv += csv_line(row);
    }

  Json j = header(ctx);
  j["manifold"] = manifold_json(w);
  j["branch_count"] = d.branch_count;
  Json events = Json::array();
  for (const auto& e : d.events)
    events.push_back({{"mu", e.mu},
                      {"type", to_string(e.type)},
                      {"point", to_json(e.point)},
                      {"eigenvalue", eigen_json(e.eigenvalue)},
                      {"sigma_margin", e.sigma_margin}});
  j["events"] = events;
  j["diagnostics"] = d.diagnostics;
  emit(ctx, "diagram.csv", csv);
  emit(ctx, "events.json", dump_json(j));
  ctx.say("bifurcate: " + std::to_string(d.mu.size()) + " parameter values, " + std::to_string(d.events.size()) +
          " events");
  return 0;
}

int cmd_check(Context& ctx) {
  auto sys = build_system(ctx.cfg);
  if (ctx.cfg.manifold) (void)build_manifold(ctx.cfg, sys);
  if (!ctx.cfg.solver.grid.empty()) (void)grid_box(ctx.cfg, sys.n(), nullptr);
  ctx.say("config OK: n = " + std::to_string(sys.n()) + ", m = " + std::to_string(sys.m()) +
          (ctx.cfg.manifold ? ", manifold present" : ""));
  return 0;
}

void warn_unused_blocks(const Context& ctx) {
  static const std::map<std::string, std::set<std::string>> used = {
      {"stratify", {"system", "solver", "output"}},
      {"sigma", {"system", "solver", "output"}},
      {"transverse", {"system", "manifold", "solver", "output"}},
      {"design", {"system", "manifold", "solver", "output"}},
      {"bifurcate", {"system", "manifold", "solver", "output"}},
      {"check", {"system", "manifold", "solver", "output"}},
  };
  if (ctx.flags.quiet) return;
  for (const auto& w : ctx.cfg.warnings) ctx.err << "warning: " << w << "\n";
  const auto& u = used.at(ctx.flags.command);
  for (const auto& b : ctx.cfg.present_blocks)
    if (!u.count(b)) ctx.err << "warning: block '" << b << "' is not used by " << ctx.flags.command << "\n";
}

void build_app(CLI::App& app, Flags& f) {
  app.add_option("command", f.command, "stratify | sigma | transverse | design | bifurcate | check")
      ->required()
      ->check(CLI::IsMember(kCommands));
  app.add_option("--config", f.config, "JSON run configuration")->required();
  app.add_option("--out", f.out, "output directory (overrides output.dir)");
  app.add_option("--tol", f.tol, "Newton residual tolerance");
  app.add_option("--rank-tol", f.rank_tol, "relative singular-value threshold");
  app.add_option("--lambda", f.lambda, "attraction rate of the invariance feedback");
  app.add_option("--mu-range", f.mu_range, "parameter sweep A:B:N");
  app.add_option("--mu", f.mu, "parameter value of W");
  app.add_option("--grid", f.grid, "MIN:MAX:STEP, once for all axes or once per axis")
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app.add_flag("--seed-grid", f.seed_grid, "seed Newton searches from the solver grid");
  app.add_option("--max-iter", f.max_iter, "Newton iteration limit");
  app.add_option("--arc-step", f.arc_step, "continuation step length");
  app.add_option("--n-steps", f.n_steps, "continuation steps per direction");
  app.add_option("--rtol", f.rtol, "integrator relative tolerance");
  app.add_option("--atol", f.atol, "integrator absolute tolerance");
  app.add_option("--t-final", f.t_final, "simulation horizon");
  app.add_option("--report-dt", f.report_dt, "trajectory sampling interval");
  app.add_option("--cap", f.cap, "largest admissible grid");
  app.add_flag("--quiet", f.quiet, "suppress warnings and progress lines");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Singular sets, control-transverse manifolds and feedback design", "sigmakit"};
  Flags flags;
  build_app(app, flags);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    Context ctx{flags, load_config(flags.config), {}, out, err, 0.0, std::nullopt};
    apply_overrides(ctx);
    warn_unused_blocks(ctx);
    const std::string& c = flags.command;
    if (c == "stratify") return cmd_stratify(ctx);
    if (c == "sigma") return cmd_sigma(ctx);
    if (c == "transverse") return cmd_transverse(ctx);
    if (c == "design") return cmd_design(ctx);
    if (c == "bifurcate") return cmd_bifurcate(ctx);
    return cmd_check(ctx);
  } catch (const NumericalFailure& e) {
    err << "error: " << e.message << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const UndeclaredVariableError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const GridTooLargeError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace sigmakit
