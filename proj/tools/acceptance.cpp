// Acceptance run: one PASS/FAIL line per criterion.
//
// Usage: tma_acceptance [config_dir] [out_dir]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tma/errors.hpp"
#include "tma/experiments.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  bool ok = false;
  std::string error;
  tma::RunOutcome outcome;
  double seconds = 0.0;
  std::string csv_bytes;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run_config(const fs::path& config, const fs::path& out, int workers) {
  Run r;
  try {
    const json raw = json::parse(slurp(config.string()));
    const auto cfg = tma::config_from_json(raw);
    tma::RunOptions opts;
    opts.out_dir = out.string();
    opts.workers = workers;
    const auto t0 = std::chrono::steady_clock::now();
    r.outcome = tma::run_experiment(cfg, opts, raw);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.csv_bytes = slurp(r.outcome.csv_path);
    r.ok = true;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string summarize(const tma::SuiteResult& res) {
  std::string s;
  for (const auto& a : res.assertions) {
    if (!s.empty()) s += "; ";
    s += (a.pass ? "" : "!") + a.name + " " + fmt(a.value) + " " + a.relation + " " + fmt(a.threshold);
  }
  return s;
}

struct Criterion {
  int id;
  std::string title;
  std::string suite;
  double max_seconds;
  std::size_t min_rows;
};

}  // namespace

int main(int argc, char** argv) {
  const fs::path config_dir = argc > 1 ? fs::path(argv[1]) : fs::path(TMA_CONFIG_DIR);
  const fs::path out_root = argc > 2 ? fs::path(argv[2]) : fs::path("acceptance-out");

  const std::vector<Criterion> criteria{
      {1, "determinant transformation law", "det-law", 30.0, 1000u * 20u * 4u},
      {2, "W nonnegativity", "w-psd", 0.0, 2u * 1000u * 20u * 4u},
      {3, "subsolution sign of Q", "q-sign", 60.0, 1000u * 3u},
      {4, "evolution identity", "evolution-identity", 0.0, 1000u * 3u},
      {5, "heat identity", "heat-identity", 0.0, 1000u * 3u},
      {6, "real reduction", "real-complexify", 0.0, 1000u * 3u},
      {7, "solver correctness", "flow-convergence", 60.0, 1},
      {8, "rigidity probe", "rigidity", 0.0, 1},
      {9, "oscillation decay", "oscillation-decay", 0.0, 1},
      {10, "rescaling law", "rescaling", 0.0, 1},
  };

  const int workers_a = 1;
  const int workers_b = 4;
  std::map<std::string, Run> first;
  int failures = 0;

  for (const auto& c : criteria) {
    Run r = run_config(config_dir / (c.suite + ".json"), out_root / ("w" + std::to_string(workers_a)) / c.suite,
                       workers_a);
    std::string detail;
    bool pass = r.ok;
    if (!r.ok) {
      detail = "error: " + r.error;
    } else {
      const auto& res = r.outcome.result;
      pass = r.outcome.exit_code == 0;
      detail = summarize(res);
      const std::size_t rows = res.table.rows.size();
      if (rows < c.min_rows) {
        pass = false;
        detail += "; !rows " + std::to_string(rows) + " < " + std::to_string(c.min_rows);
      }
      detail += "; " + fmt(r.seconds) + " s";
      if (c.max_seconds > 0.0) {
        const bool fast = r.seconds < c.max_seconds;
        detail += std::string(fast ? " < " : " !>= ") + fmt(c.max_seconds) + " s";
        pass = pass && fast;
      }
    }
    if (!pass) ++failures;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.title << " [" << c.suite
              << "]: " << detail << std::endl;
    first.emplace(c.suite, std::move(r));
  }

  {
    std::vector<std::string> differing;
    for (const auto& c : criteria) {
      const Run r = run_config(config_dir / (c.suite + ".json"),
                               out_root / ("w" + std::to_string(workers_b)) / c.suite, workers_b);
      const Run& a = first.at(c.suite);
      if (!r.ok || !a.ok || r.csv_bytes != a.csv_bytes || r.csv_bytes.empty()) differing.push_back(c.suite);
    }
    const bool pass = differing.empty();
    if (!pass) ++failures;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion 11 determinism: " << criteria.size()
              << " suites, CSV bytes with " << workers_a << " vs " << workers_b << " workers ";
    if (pass) {
      std::cout << "identical";
    } else {
      std::cout << "differ for";
      for (const auto& s : differing) std::cout << ' ' << s;
    }
    std::cout << std::endl;
  }

  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << std::endl;
  return failures == 0 ? 0 : 1;
}
