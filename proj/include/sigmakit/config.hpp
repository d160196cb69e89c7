#pragma once

// Run configuration: a JSON document with blocks "system", "manifold",
// "solver" and "output". See README for the field list.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sigmakit/linalg.hpp"
#include "sigmakit/sysmodel.hpp"
#include "sigmakit/transverse.hpp"

namespace sigmakit {

struct GridAxis {
  double min = 0.0;
  double max = 0.0;
  double step = 0.0;
};

struct MuRange {
  double min = 0.0;
  double max = 0.0;
  int count = 0;
};

struct SystemConfig {
  std::vector<std::string> states;
  std::vector<std::string> drift;
  std::vector<std::vector<std::string>> controls;
  bool strict_feedback = false;
  std::optional<Mat> a;  // linear form
  std::optional<Mat> b;
};

struct ManifoldConfig {
  std::vector<int> ind;  // 1-based, as written
  std::vector<int> dep;
  std::vector<std::string> h;
  std::vector<std::string> phi;  // level-set form
  std::optional<Vec> anchor;
  double mu = 0.0;
  std::optional<MuRange> mu_range;
};

struct SolverConfig {
  double tol = 1e-9;
  double rank_tol = kDefaultRankTol;
  int max_iter = 50;
  double arc_step = 0.05;
  int n_steps = 200;
  double lambda = 1.0;
  std::vector<GridAxis> grid;
  double rtol = 1e-9;
  double atol = 1e-12;
  double t_final = 5.0;
  double report_dt = 0.01;
  std::size_t cap = kDefaultGridCap;
  std::optional<Vec> x0;
  std::vector<Vec> seeds;
  std::optional<Box> control_bounds;
};

struct RunConfig {
  SystemConfig system;
  std::optional<ManifoldConfig> manifold;
  SolverConfig solver;
  std::string output_dir = ".";
  std::vector<std::string> present_blocks;
  std::vector<std::string> warnings;
};

/// Parses and validates the document structure. Throws ConfigError naming the
/// offending field.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Numeric solver fields, re-checked after flag overrides.
void validate_solver(const SolverConfig& s);
void validate_mu_range(const MuRange& r, const std::string& what);

/// Expressions, dimensions and the strict-feedback structure are checked here.
ControlAffineSystem build_system(const RunConfig& cfg);
std::optional<LinearControlSystem> build_linear(const RunConfig& cfg);
/// Throws ConfigError when the block is missing or inconsistent with the system.
TransverseManifold build_manifold(const RunConfig& cfg, const ControlAffineSystem& sys);

/// Grid axes expanded to n entries; all steps must agree.
Box grid_box(const RunConfig& cfg, int n, double* step);

/// Parses "A:B:N" and "MIN:MAX:STEP" flag values.
MuRange parse_mu_range(const std::string& text);
GridAxis parse_grid_axis(const std::string& text);

}  // namespace sigmakit
