// Command-line front end: run and validate experiment configurations, check
// function specs.

#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tma/errors.hpp"
#include "tma/experiments.hpp"
#include "tma/funclass.hpp"
#include "tma/jets.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;

using nlohmann::json;

json read_json(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw tma::ConfigInvalid(std::string(what) + ": cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw tma::ConfigInvalid(std::string(what) + ": malformed JSON: " + e.what());
  }
}

int default_workers() {
  if (const char* env = std::getenv("TMA_WORKERS")) {
    try {
      std::size_t used = 0;
      const int n = std::stoi(env, &used);
      if (used == std::string(env).size() && n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw tma::ConfigInvalid(std::string("TMA_WORKERS: expected a positive integer, got \"") + env + "\"");
  }
  return omp_get_num_procs();
}

/// Output directory for a manifest written before the config is fully valid.
std::string fallback_out(const std::string& cli_out, const json& raw) {
  if (!cli_out.empty()) return cli_out;
  if (raw.is_object() && raw.contains("output") && raw["output"].is_object() && raw["output"].contains("dir") &&
      raw["output"]["dir"].is_string())
    return raw["output"]["dir"].get<std::string>();
  return tma::OutputSettings{}.dir;
}

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out,
            std::optional<int> workers) {
  json raw = json::object();
  try {
    raw = read_json(config, "config");
    if (seed) {
      if (!raw.is_object()) throw tma::ConfigInvalid("config: expected an object");
      raw["seed"] = *seed;
    }
    const auto cfg = tma::config_from_json(raw);
    tma::RunOptions opts;
    opts.out_dir = out;
    opts.workers = workers ? *workers : default_workers();
    if (opts.workers < 1) throw tma::ConfigInvalid("--workers: expected a positive integer");
    const auto outcome = tma::run_experiment(cfg, opts, raw);
    for (const auto& a : outcome.result.assertions)
      std::cout << (a.pass ? "PASS " : "FAIL ") << a.name << ": " << tma::format_double(a.value) << ' ' << a.relation
                << ' ' << tma::format_double(a.threshold) << '\n';
    std::cout << "suite " << cfg.suite << ": " << (outcome.exit_code == 0 ? "pass" : "fail") << " ("
              << outcome.result.table.rows.size() << " rows) -> " << outcome.csv_path << '\n';
    return outcome.exit_code;
  } catch (const tma::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << '\n';
    try {
      tma::write_failure_manifest(fallback_out(out, raw), "config_error", e.what(), kExitConfig, raw);
    } catch (const std::exception& w) {
      std::cerr << "could not write manifest: " << w.what() << '\n';
    }
    return kExitConfig;
  }
}

int cmd_validate(const std::string& config) {
  try {
    const auto cfg = tma::config_from_json(read_json(config, "config"));
    std::cout << "valid: suite " << cfg.suite << '\n';
    return kExitPass;
  } catch (const tma::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

int cmd_spec_check(const std::string& path, std::optional<double> lambda, std::optional<double> Lambda) {
  std::string text;
  {
    std::ifstream in(path);
    if (!in) {
      std::cerr << "parse error: cannot open " << path << '\n';
      return kExitConfig;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  std::vector<tma::ExpressionSpec> specs;
  try {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw tma::ParseError(std::string("malformed JSON: ") + e.what());
    }
    if (j.is_array()) {
      for (std::size_t i = 0; i < j.size(); ++i) {
        try {
          specs.push_back(tma::spec_from_json(j[i]));
        } catch (const tma::ParseError& e) {
          throw tma::ParseError("[" + std::to_string(i) + "] " + e.what());
        }
      }
    } else {
      specs.push_back(tma::spec_from_json(j));
    }
  } catch (const tma::UnknownAtom& e) {
    std::cerr << "unknown atom: " << e.what() << '\n';
    return kExitConfig;
  } catch (const tma::Error& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitConfig;
  }

  int status = kExitPass;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const std::string canon = tma::serialize(s);
    const bool stable = tma::serialize(tma::parse_spec(canon)) == canon;
    std::cout << "spec " << i << ": k=" << s.k << " l=" << s.l << " flavor=" << tma::to_string(s.flavor)
              << " round-trip=" << (stable ? "stable" : "UNSTABLE");
    if (!stable) status = kExitFail;
    if (lambda && Lambda) {
      tma::CloudSpec cs;
      const auto rep = tma::class_membership(s, tma::make_cloud(s.dim(), cs), *lambda, *Lambda);
      std::cout << " member=" << (rep.member ? "yes" : "no");
      if (!rep.member) status = kExitFail;
    }
    std::cout << '\n';
  }
  if (specs.size() == 1) std::cout << tma::serialize(specs.front()) << '\n';
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Twisted Monge-Ampere numerical laboratory"};
  app.require_subcommand(1);

  std::string config, out, spec_path;
  std::uint64_t seed = 0;
  int workers = 0;
  double lambda = 0.0, Lambda = 0.0;

  auto* run = app.add_subcommand("run", "Run the suite described by a configuration file");
  run->add_option("--config", config, "Configuration JSON")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Override the configuration seed");
  run->add_option("--out", out, "Output directory");
  auto* workers_opt = run->add_option("--workers", workers, "Worker threads (default: TMA_WORKERS or all cores)");

  auto* val = app.add_subcommand("validate", "Validate a configuration file");
  val->add_option("--config", config, "Configuration JSON")->required();

  auto* spec = app.add_subcommand("spec", "Check function spec files");
  spec->add_option("--check", spec_path, "Function spec JSON (object or array)")->required();
  auto* lambda_opt = spec->add_option("--lambda", lambda, "Lower class bound for a membership check");
  auto* Lambda_opt = spec->add_option("--Lambda", Lambda, "Upper class bound for a membership check");
  lambda_opt->needs(Lambda_opt);
  Lambda_opt->needs(lambda_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run)
      return cmd_run(config, seed_opt->count() ? std::optional<std::uint64_t>(seed) : std::nullopt, out,
                     workers_opt->count() ? std::optional<int>(workers) : std::nullopt);
    if (*val) return cmd_validate(config);
    if (*spec)
      return cmd_spec_check(spec_path, lambda_opt->count() ? std::optional<double>(lambda) : std::nullopt,
                            Lambda_opt->count() ? std::optional<double>(Lambda) : std::nullopt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFail;
  }
  return kExitConfig;
}
