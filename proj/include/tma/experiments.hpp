#pragma once

// Verification suites and their reports: configuration, execution, CSV rows
// and a JSON manifest.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tma/funclass.hpp"

namespace tma {

/// Recognized suite names.
const std::vector<std::string>& suite_names();
bool randomized_suite(const std::string& suite);
/// Default tolerances of a suite, keyed by name.
std::map<std::string, double> default_tolerances(const std::string& suite);

struct FlowSettings {
  /// exact-solution check
  int real_nodes = 129;
  int complex_nodes = 17;
  double a = 2.718281828459045;
  double b = 1.0;
  int exact_steps = 3;
  /// self-convergence and oscillation runs on the periodic torus
  double epsilon = 0.05;
  int time_nodes = 33;
  double time_T = 0.2;
  std::vector<int> space_nodes{33, 65, 129};
  double space_T = 0.05;
  /// cylinder centers; empty means the middle of the torus
  std::vector<std::vector<double>> centers;
  int nodes = 129;
  double T = 0.3;
  int record_every = 5;
  double lambda = 0.5;
  double Lambda = 2.0;
  /// base cylinder radius in grid cells
  double radius_cells = 8.2;
  int ladder_levels = 4;
  std::string scheme = "rk4";
};

struct EllipticSettings {
  int nodes = 33;
  double a = 1.4;
  double guess_amplitude = 0.02;
  /// far-field series: half widths with the cell size held fixed
  std::vector<double> half_widths{1.0, 2.0, 4.0};
  double perturbation = 0.05;
  double inner_half_width = 0.5;
};

struct RescaleSettings {
  std::vector<double> mus{0.5, 2.0, 3.0};
  double amplitude = 0.01;
  int probes = 8;
  double probe_time = 0.1;
};

struct OutputSettings {
  std::string dir = "tma-out";
  /// none | csv | binary
  std::string snapshot = "none";
  bool write_specs = false;
};

struct ExperimentConfig {
  std::string suite;
  std::optional<std::uint64_t> seed;
  EnsembleSpec ensemble;
  std::vector<std::pair<int, int>> pairs;
  std::vector<Flavor> flavors;
  int points_per_draw = 20;
  double point_radius = 0.8;
  std::map<std::string, double> tolerances;
  FlowSettings flow;
  EllipticSettings elliptic;
  RescaleSettings rescale;
  OutputSettings output;

  double tol(const std::string& name) const;
};

/// ConfigInvalid naming the offending field.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& c);

struct Assertion {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  /// "<=", ">=", ">", "<", "=="
  std::string relation;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct SuiteResult {
  std::string suite;
  CsvTable table;
  std::vector<Assertion> assertions;
  nlohmann::json diagnostics = nlohmann::json::object();
  /// auxiliary files written next to the CSV
  std::vector<std::string> extra_files;

  bool passed() const;
};

/// Runs a validated configuration.  Row-level failures land in the table.
/// Snapshots and specs requested by the output settings go to `out_dir`.
SuiteResult run_suite(const ExperimentConfig& cfg, const std::string& out_dir = "");

/// 17 significant digits, "inf", "-inf", "nan".
std::string format_double(double v);
/// RFC-4180 with LF line endings.
std::string to_csv(const CsvTable& t);

struct RunOptions {
  std::string out_dir;
  int workers = 1;
};

struct RunOutcome {
  int exit_code = 0;
  SuiteResult result;
  std::string csv_path;
  std::string manifest_path;
};

/// Executes a suite, writes <suite>.csv and manifest.json, and returns the
/// exit code (0 pass, 1 assertion failure).
RunOutcome run_experiment(const ExperimentConfig& cfg, const RunOptions& opts, const nlohmann::json& config_echo);

/// Manifest for runs that never reached a suite.
void write_failure_manifest(const std::string& out_dir, const std::string& status, const std::string& message,
                            int exit_code, const nlohmann::json& config_echo);

}  // namespace tma
