#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "sigmakit/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "sigmakit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = sigmakit::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string config(const std::string& name) { return std::string(SIGMAKIT_CONFIG_DIR) + "/" + name; }

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("sigmakit_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<double>> read_csv(const fs::path& p, std::vector<std::string>* header = nullptr) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  if (header) {
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header->push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("cli sigma on the pendulum: Sigma is x2 = 0, dimension 1") {
  auto dir = scratch("sigma");
  auto r = run({"sigma", "--config", config("pendulum.json"), "--out", dir.string(), "--quiet"});
  REQUIRE(r.code == 0);
  CHECK(r.err.empty());
  std::vector<std::string> header;
  auto rows = read_csv(dir / "sigma.csv", &header);
  CHECK(header == std::vector<std::string>{"x1", "x2", "residual_norm"});
  REQUIRE(!rows.empty());
  for (const auto& row : rows) CHECK(std::abs(row[1]) < 1e-8);
  auto j = json::parse(slurp(dir / "sigma.json"));
  CHECK(j["certificate"]["dimension"] == 1);
  CHECK(j["dimension"] == 1);
  auto curve = read_csv(dir / "sigma_curve.csv");
  REQUIRE(curve.size() > 10);
  for (const auto& row : curve) CHECK(std::abs(row[1]) < 1e-8);
}

TEST_CASE("cli check reports a dep/ind overlap") {
  auto r = run({"check", "--config", config("overlap.json")});
  CHECK(r.code == 1);
  CHECK(r.err.find("state index 2") != std::string::npos);
}

TEST_CASE("cli bifurcate on the saddle-node finds one fold at mu = 0") {
  auto dir = scratch("bifurcate");
  auto r = run({"bifurcate", "--config", config("saddle_node.json"), "--out", dir.string(), "--quiet"});
  REQUIRE(r.code == 0);
  auto j = json::parse(slurp(dir / "events.json"));
  int folds = 0;
  for (const auto& e : j["events"])
    if (e["type"] == "fold") {
      ++folds;
      CHECK(std::abs(e["mu"].get<double>()) < 1e-6);
    }
  CHECK(folds == 1);
  std::vector<std::string> header;
  auto rows = read_csv(dir / "diagram.csv", &header);
  CHECK(header.front() == "x1");
  CHECK(header[2] == "mu");
  // x1 = +-sqrt(mu) on the sampled branches
  for (const auto& row : rows) CHECK(std::abs(row[0] * row[0] - row[2]) < 1e-8);
}

TEST_CASE("cli outputs are byte-identical across runs") {
  for (const std::string cmd : {"sigma", "transverse", "design", "stratify"}) {
    auto a = scratch("det_a");
    auto b = scratch("det_b");
    REQUIRE(run({cmd, "--config", config("pendulum.json"), "--out", a.string(), "--quiet"}).code == 0);
    REQUIRE(run({cmd, "--config", config("pendulum.json"), "--out", b.string(), "--quiet"}).code == 0);
    for (const auto& entry : fs::directory_iterator(a)) {
      INFO(cmd << " " << entry.path().filename().string());
      CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
    }
  }
  auto a = scratch("det_c");
  auto b = scratch("det_d");
  REQUIRE(run({"bifurcate", "--config", config("saddle_node.json"), "--out", a.string(), "--quiet"}).code == 0);
  REQUIRE(run({"bifurcate", "--config", config("saddle_node.json"), "--out", b.string(), "--quiet"}).code == 0);
  CHECK(slurp(a / "diagram.csv") == slurp(b / "diagram.csv"));
  CHECK(slurp(a / "events.json") == slurp(b / "events.json"));
}

TEST_CASE("cli flag overrides are echoed in the report header") {
  auto dir = scratch("flags");
  auto r = run({"design", "--config", config("pendulum.json"), "--out", dir.string(), "--quiet", "--tol", "1e-11",
                "--rank-tol", "1e-9", "--lambda", "3", "--grid", "-1:1:0.25", "--max-iter", "7", "--arc-step",
                "0.01", "--n-steps", "9", "--rtol", "1e-8", "--atol", "1e-9", "--t-final", "1", "--report-dt", "0.1",
                "--cap", "1000", "--mu", "0"});
  REQUIRE(r.code == 0);
  auto j = json::parse(slurp(dir / "design.json"));
  const auto& s = j["solver"];
  CHECK(s["tol"] == 1e-11);
  CHECK(s["rank_tol"] == 1e-9);
  CHECK(s["lambda"] == 3.0);
  CHECK(s["grid"][0] == json::array({-1.0, 1.0, 0.25}));
  CHECK(s["max_iter"] == 7);
  CHECK(s["arc_step"] == 0.01);
  CHECK(s["n_steps"] == 9);
  CHECK(s["rtol"] == 1e-8);
  CHECK(s["atol"] == 1e-9);
  CHECK(s["t_final"] == 1.0);
  CHECK(s["report_dt"] == 0.1);
  CHECK(s["cap"] == 1000);
  CHECK(j["lambda"] == 3.0);
  CHECK(j["samples"] == 11);
  // final |s| = |s0| exp(-3)
  CHECK(std::abs(j["final_s_norm"].get<double>() - 1.5 * std::exp(-3.0)) < 1e-6);

  auto b = scratch("mu_range");
  auto rb = run({"bifurcate", "--config", config("saddle_node.json"), "--out", b.string(), "--quiet",
                 "--mu-range", "-1:1:11"});
  REQUIRE(rb.code == 0);
  auto jb = json::parse(slurp(b / "events.json"));
  CHECK(jb["solver"]["mu_range"] == json::array({-1.0, 1.0, 11}));
}

TEST_CASE("cli usage errors exit 1") {
  CHECK(run({"sigma", "--config", config("pendulum.json"), "--bogus"}).code == 1);
  CHECK(run({"frobnicate", "--config", config("pendulum.json")}).code == 1);
  CHECK(run({"sigma"}).code == 1);
  CHECK(run({"sigma", "--config", "/nonexistent/config.json"}).code == 1);
  CHECK(run({"sigma", "--config", config("pendulum.json"), "--mu-range", "1:0:5"}).code == 1);
  CHECK(run({"sigma", "--config", config("pendulum.json"), "--grid", "1:0"}).code == 1);
  CHECK(run({"sigma", "--config", config("pendulum.json"), "--tol", "-1"}).code == 1);
  auto help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("--mu-range") != std::string::npos);
}

TEST_CASE("cli config validation names the field") {
  auto dir = scratch("validation");
  struct Case {
    const char* text;
    const char* field;
  };
  const Case cases[] = {
      {R"({"system": {"n": 2, "m": 1, "drift": ["x2"], "controls": [["0", "1"]]}})", "system.drift"},
      {R"({"system": {"n": 2, "m": 1, "drift": ["x2", "y"], "controls": [["0", "1"]]}})", "system.drift[1]"},
      {R"({"system": {"n": 2, "m": 1, "drift": ["x2", "x1 +"], "controls": [["0", "1"]]}})", "system.drift[1]"},
      {R"({"system": {"n": 2, "drift": ["x2", "x1"], "controls": [["0", "1"]]}})", "system.m"},
      {R"({"system": {"n": 2, "m": 1, "drift": ["x2", "x1"], "controls": [["0", "1"]]},
          "solver": {"rtol": 0}})", "solver.rtol"},
      {R"({"system": {"n": 2, "m": 1, "drift": ["x2", "x1"], "controls": [["0", "1"]]},
          "manifold": {"ind": [1], "dep": [3], "h": ["0"]}})", "manifold.dep[0]"},
      {R"({"system": {"n": 2, "m": 1, "drift": ["x2", "x1"], "controls": [["0", "1"]]},
          "manifold": {"ind": [1], "dep": [2], "h": ["x2"]}})", "manifold"},
      {R"({"system": {"n": 2, "m": 1, "drift": ["x2", "x1"], "controls": [["1", "0"]],
          "strict_feedback": true}})", "system.strict_feedback"},
      {R"({"system": )", "not valid JSON"},
  };
  for (const auto& c : cases) {
    auto path = write_config(dir, c.text);
    auto r = run({"check", "--config", path.string()});
    INFO(std::string(c.text));
    CHECK(r.code == 1);
    CHECK(r.err.find(c.field) != std::string::npos);
  }
}

TEST_CASE("cli warns about unused blocks and unknown fields unless quiet") {
  auto dir = scratch("warnings");
  auto path = write_config(dir, R"({"system": {"n": 1, "m": 1, "drift": ["x1"], "controls": [["1"]], "extra": 1},
                                   "manifold": {"ind": [], "dep": [1], "h": ["0"]},
                                   "solver": {"grid": [-1, 1, 1]}, "plots": {}})");
  auto r = run({"stratify", "--config", path.string(), "--out", dir.string()});
  CHECK(r.code == 0);
  CHECK(r.err.find("system.extra") != std::string::npos);
  CHECK(r.err.find("'plots'") != std::string::npos);
  CHECK(r.err.find("'manifold' is not used by stratify") != std::string::npos);
  auto q = run({"stratify", "--config", path.string(), "--out", dir.string(), "--quiet"});
  CHECK(q.code == 0);
  CHECK(q.err.empty());
  CHECK(q.out.empty());
}

TEST_CASE("cli numerical failures exit 2") {
  auto dir = scratch("numerical");
  // W: x2 = 0 is tangent to D = span{e1}, so the feedback cannot be formed.
  auto path = write_config(dir, R"({"system": {"n": 2, "m": 1, "drift": ["x2", "x1"], "controls": [["1", "0"]]},
                                   "manifold": {"ind": [1], "dep": [2], "h": ["0"]},
                                   "solver": {"x0": [0.5, 0.1], "t_final": 1}})");
  auto r = run({"design", "--config", path.string(), "--out", dir.string(), "--quiet"});
  CHECK(r.code == 2);
  // g vanishes everywhere on the grid: no regular stratum, no Sigma points
  auto empty = write_config(dir, R"({"system": {"n": 2, "m": 1, "drift": ["1", "1"], "controls": [["0", "1"]]},
                                    "solver": {"grid": [-1, 1, 0.5]}})");
  CHECK(run({"sigma", "--config", empty.string(), "--out", dir.string(), "--quiet"}).code == 2);
}

TEST_CASE("cli sigma routes: strict feedback and linear") {
  auto dir = scratch("routes");
  auto r = run({"sigma", "--config", config("strict_feedback.json"), "--out", dir.string(), "--quiet"});
  REQUIRE(r.code == 0);
  auto rows = read_csv(dir / "sigma.csv");
  CHECK(rows.size() == 81);
  for (const auto& row : rows) {
    const double x1 = row[0];
    const double x2 = -std::sin(x1) / (2 + std::cos(x1));
    const double x3 = -x1 * x2 / (1 + x1 * x1);
    CHECK(std::abs(row[1] - x2) < 1e-12);
    CHECK(std::abs(row[2] - x3) < 1e-12);
  }
  auto j = json::parse(slurp(dir / "sigma.json"));
  CHECK(j["route"] == "strict_feedback");
  CHECK(j["dimension"] == 1);

  auto lin = scratch("linear");
  REQUIRE(run({"sigma", "--config", config("canonical3.json"), "--out", lin.string(), "--quiet"}).code == 0);
  auto jl = json::parse(slurp(lin / "sigma.json"));
  CHECK(jl["route"] == "linear");
  CHECK(jl["dimension"] == 1);
  const auto& basis = jl["basis"];
  REQUIRE(basis.size() == 3);
  CHECK(std::abs(std::abs(basis[0][0].get<double>()) - 1.0) < 1e-12);
  CHECK(std::abs(basis[1][0].get<double>()) < 1e-12);
  CHECK(std::abs(basis[2][0].get<double>()) < 1e-12);
}

TEST_CASE("cli stratify and transverse reports") {
  auto dir = scratch("stratify");
  auto path = write_config(dir, R"({"system": {"n": 2, "m": 1, "drift": ["0", "0"], "controls": [["x1", "x2"]]},
                                   "solver": {"grid": [-1, 1, 0.5]}})");
  REQUIRE(run({"stratify", "--config", path.string(), "--out", dir.string(), "--quiet"}).code == 0);
  std::vector<std::string> header;
  auto rows = read_csv(dir / "stratify.csv", &header);
  CHECK(header == std::vector<std::string>{"x1", "x2", "corank"});
  CHECK(rows.size() == 25);
  for (const auto& row : rows) CHECK(row[2] == ((row[0] == 0 && row[1] == 0) ? 1.0 : 0.0));

  auto t = scratch("transverse");
  REQUIRE(run({"transverse", "--config", config("pendulum.json"), "--out", t.string(), "--quiet"}).code == 0);
  auto j = json::parse(slurp(t / "transverse.json"));
  REQUIRE(j["equilibria"].size() == 1);
  const auto& e = j["equilibria"][0];
  // chart dynamics x1' = -0.5 x1 at the origin
  CHECK(std::abs(e["point"][0].get<double>()) < 1e-10);
  CHECK(std::abs(e["eigenvalues"][0][0].get<double>() + 0.5) < 1e-10);
  CHECK(e["isolated"] == true);
  CHECK(j["margin"]["transverse"] == true);
}
