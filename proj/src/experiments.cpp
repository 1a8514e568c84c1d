#include "tma/experiments.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include <Eigen/Core>

#include "tma/errors.hpp"
#include "tma/estimates.hpp"
#include "tma/evolution.hpp"
#include "tma/jets.hpp"
#include "tma/legendre.hpp"
#include "tma/solver.hpp"
#include "tma/twistedops.hpp"

#ifndef TMA_VERSION
#define TMA_VERSION "unknown"
#endif

namespace tma {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

const std::map<std::string, std::map<std::string, double>>& tolerance_table() {
  static const std::map<std::string, std::map<std::string, double>> t{
      {"det-law", {{"det_residual", 1e-10}}},
      {"w-psd", {{"w_lambda_min", 1e-10}}},
      {"q-sign", {{"q_lambda_max", 1e-8}, {"group_lambda_max", 1e-8}, {"hermitian_defect", 1e-10}}},
      {"evolution-identity", {{"evolution_residual", 1e-8}, {"q_lambda_max", 1e-8}}},
      {"heat-identity", {{"heat_residual", 1e-10}}},
      {"real-complexify", {{"w_residual", 1e-10}, {"q_residual", 1e-10}, {"f_residual", 1e-10}, {"real_lambda_max", 1e-8}}},
      {"flow-convergence",
       {{"per_step", 1e-10}, {"time_order_min", 3.5}, {"space_order_min", 1.8}, {"space_order_max", 2.2}}},
      {"oscillation-decay", {{"ladder_monotone", 1e-9}, {"fit_residual", 0.1}}},
      {"rigidity", {{"det_deviation", 1e-9}, {"w_variation", 1e-8}, {"negative_control", 1e-3}, {"far_field", 1e-9}}},
      {"rescaling", {{"ratio_relative", 1e-12}, {"h_discrepancy", 1e-12}}},
  };
  return t;
}

std::string error_kind(const std::exception& e) {
#define TMA_KIND(Name) \
  if (dynamic_cast<const Name*>(&e)) return #Name;
  TMA_KIND(DomainViolation)
  TMA_KIND(DimensionMismatch)
  TMA_KIND(NotPositiveDefinite)
  TMA_KIND(IllConditioned)
  TMA_KIND(NotHermitian)
  TMA_KIND(AmplitudeTooLarge)
  TMA_KIND(NoConvergence)
  TMA_KIND(DomainExceeded)
  TMA_KIND(ClassExit)
  TMA_KIND(CFLViolation)
  TMA_KIND(EmptyCylinder)
  TMA_KIND(DegenerateLadder)
  TMA_KIND(InvalidArgument)
#undef TMA_KIND
  return "Error";
}

// ---------------------------------------------------------------------------
// configuration reading

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigInvalid(path_ + ": expected an object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  const json& at(const char* key) const { return j_.at(key); }

  void get(const char* key, int& out) {
    if (!has(key)) return;
    const auto& v = j_[key];
    if (!v.is_number_integer()) throw ConfigInvalid(field(key) + ": expected an integer");
    out = v.get<int>();
  }
  void get(const char* key, double& out) {
    if (!has(key)) return;
    const auto& v = j_[key];
    if (!v.is_number()) throw ConfigInvalid(field(key) + ": expected a number");
    out = v.get<double>();
  }
  void get(const char* key, bool& out) {
    if (!has(key)) return;
    const auto& v = j_[key];
    if (!v.is_boolean()) throw ConfigInvalid(field(key) + ": expected a boolean");
    out = v.get<bool>();
  }
  void get(const char* key, std::string& out) {
    if (!has(key)) return;
    const auto& v = j_[key];
    if (!v.is_string()) throw ConfigInvalid(field(key) + ": expected a string");
    out = v.get<std::string>();
  }
  void get(const char* key, std::vector<int>& out) {
    if (!has(key)) return;
    const auto& v = j_[key];
    if (!v.is_array()) throw ConfigInvalid(field(key) + ": expected an array of integers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw ConfigInvalid(field(key) + ": expected an array of integers");
      out.push_back(e.get<int>());
    }
  }
  void get(const char* key, std::vector<double>& out) {
    if (!has(key)) return;
    const auto& v = j_[key];
    if (!v.is_array()) throw ConfigInvalid(field(key) + ": expected an array of numbers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigInvalid(field(key) + ": expected an array of numbers");
      out.push_back(e.get<double>());
    }
  }
  void get(const char* key, std::vector<std::vector<double>>& out) {
    if (!has(key)) return;
    const auto& v = j_[key];
    if (!v.is_array()) throw ConfigInvalid(field(key) + ": expected an array of points");
    out.clear();
    for (const auto& p : v) {
      if (!p.is_array()) throw ConfigInvalid(field(key) + ": expected an array of points");
      std::vector<double> q;
      for (const auto& e : p) {
        if (!e.is_number()) throw ConfigInvalid(field(key) + ": expected numeric coordinates");
        q.push_back(e.get<double>());
      }
      out.push_back(std::move(q));
    }
  }

  /// Rejects keys that were never asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigInvalid(field(it.key().c_str()) + ": unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigInvalid(field + ": " + what);
}

std::vector<Flavor> default_flavors(const std::string& suite) {
  if (suite == "w-psd" || suite == "rescaling") return {Flavor::Real, Flavor::Complex};
  if (suite == "q-sign" || suite == "evolution-identity" || suite == "heat-identity") return {Flavor::Complex};
  return {Flavor::Real};
}

std::vector<Flavor> allowed_flavors(const std::string& suite) {
  if (suite == "det-law" || suite == "real-complexify") return {Flavor::Real};
  if (suite == "q-sign" || suite == "evolution-identity") return {Flavor::Complex};
  return {Flavor::Real, Flavor::Complex};
}

void validate(const ExperimentConfig& c) {
  require(c.ensemble.k >= 1 && c.ensemble.l >= 1, "ensemble.k", "k and l must be at least 1");
  require(c.ensemble.a > 0 && c.ensemble.b > 0, "ensemble.a", "base strengths must be positive");
  require(c.ensemble.epsilon >= 0 && c.ensemble.epsilon <= 0.5 * std::min(c.ensemble.a, c.ensemble.b),
          "ensemble.epsilon", "must lie in [0, min(a, b) / 2]");
  require(c.ensemble.atoms >= 0, "ensemble.atoms", "must be non-negative");
  require(c.ensemble.draws >= 1, "ensemble.draws", "must be at least 1");
  require(c.ensemble.freq_scale > 0, "ensemble.freq_scale", "must be positive");
  for (auto [k, l] : c.pairs) require(k >= 1 && l >= 1 && k + l <= 4, "pairs", "each (k, l) needs k, l >= 1 and k + l <= 4");
  const auto allowed = allowed_flavors(c.suite);
  for (Flavor f : c.flavors)
    require(std::find(allowed.begin(), allowed.end(), f) != allowed.end(), "flavors",
            "flavor " + to_string(f) + " is not available for suite " + c.suite);
  require(c.points_per_draw >= 1, "points_per_draw", "must be at least 1");
  require(c.point_radius > 0, "point_radius", "must be positive");
  for (const auto& [name, v] : c.tolerances) require(v > 0 && std::isfinite(v), "tolerances." + name, "must be positive");
  if (randomized_suite(c.suite)) require(c.seed.has_value(), "seed", "required for suite " + c.suite);

  const auto& f = c.flow;
  require(f.real_nodes >= 9, "flow.real_nodes", "must be at least 9");
  require(f.complex_nodes >= 7, "flow.complex_nodes", "must be at least 7");
  require(f.a > 0 && f.b > 0, "flow.a", "strengths must be positive");
  require(f.exact_steps >= 1, "flow.exact_steps", "must be at least 1");
  require(f.epsilon >= 0 && f.epsilon <= 0.1, "flow.epsilon", "must lie in [0, 0.1]");
  require(f.time_nodes >= 9, "flow.time_nodes", "must be at least 9");
  require(f.time_T > 0, "flow.time_T", "must be positive");
  require(f.space_nodes.size() >= 3, "flow.space_nodes", "needs at least three resolutions");
  for (std::size_t i = 0; i < f.space_nodes.size(); ++i) {
    require(f.space_nodes[i] >= 9, "flow.space_nodes", "each resolution needs at least 9 nodes");
    if (i > 0)
      require(f.space_nodes[i] - 1 == 2 * (f.space_nodes[i - 1] - 1), "flow.space_nodes",
              "successive resolutions must halve the spacing");
  }
  require(f.space_T > 0, "flow.space_T", "must be positive");
  require(f.nodes >= 17, "flow.nodes", "must be at least 17");
  require(f.T > 0, "flow.T", "must be positive");
  require(f.record_every >= 1, "flow.record_every", "must be at least 1");
  require(f.lambda > 0 && f.lambda <= f.Lambda, "flow.lambda", "need 0 < lambda <= Lambda");
  require(f.radius_cells >= 2, "flow.radius_cells", "must be at least 2");
  require(f.ladder_levels >= 3, "flow.ladder_levels", "a fit needs at least 3 rungs");
  require(f.scheme == "rk4" || f.scheme == "semi-implicit", "flow.scheme", "expected \"rk4\" or \"semi-implicit\"");
  for (const auto& p : f.centers) require(p.size() == 2, "flow.centers", "each center needs 2 coordinates");

  const auto& e = c.elliptic;
  require(e.nodes >= 9, "elliptic.nodes", "must be at least 9");
  require(e.a > 0, "elliptic.a", "must be positive");
  require(!e.half_widths.empty(), "elliptic.half_widths", "must not be empty");
  for (double L : e.half_widths) require(L >= 1, "elliptic.half_widths", "each half width must be at least 1");
  require(e.inner_half_width > 0 && e.inner_half_width < 1, "elliptic.inner_half_width", "must lie in (0, 1)");

  require(!c.rescale.mus.empty(), "rescale.mus", "must not be empty");
  for (double mu : c.rescale.mus) require(mu > 0, "rescale.mus", "each mu must be positive");
  require(c.rescale.probes >= 1, "rescale.probes", "must be at least 1");

  require(c.output.snapshot == "none" || c.output.snapshot == "csv" || c.output.snapshot == "binary",
          "output.snapshot", "expected \"none\", \"csv\" or \"binary\"");
}

// ---------------------------------------------------------------------------
// reporting helpers

std::string join_coords(const std::vector<double>& x) {
  std::string s;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) s += ';';
    s += format_double(x[i]);
  }
  return s;
}

Assertion check(std::string name, double value, const std::string& rel, double threshold) {
  bool pass = false;
  if (rel == "<=") pass = value <= threshold;
  else if (rel == ">=") pass = value >= threshold;
  else if (rel == "<") pass = value < threshold;
  else if (rel == ">") pass = value > threshold;
  else if (rel == "==") pass = value == threshold;
  return {std::move(name), pass, value, threshold, rel};
}

// ---------------------------------------------------------------------------
// ensemble sweeps

struct SweepRow {
  Flavor flavor = Flavor::Real;
  int k = 1, l = 1;
  std::uint64_t draw = 0;
  int point = 0;
  std::vector<double> coords;
  std::vector<double> values;
  std::string status = "ok";
};

using PointFn = std::function<std::vector<double>(const ExpressionSpec&, const std::vector<double>&)>;

std::vector<SweepRow> ensemble_sweep(const ExperimentConfig& cfg, int points, std::size_t nvalues, const PointFn& fn,
                                     std::vector<ExpressionSpec>* specs) {
  std::vector<SweepRow> all;
  for (Flavor flavor : cfg.flavors) {
    for (auto [k, l] : cfg.pairs) {
      EnsembleSpec es = cfg.ensemble;
      es.k = k;
      es.l = l;
      es.flavor = flavor;
      es.seed = *cfg.seed;
      const auto draws = static_cast<std::size_t>(es.draws);
      const auto per = static_cast<std::size_t>(points);
      std::vector<SweepRow> block(draws * per);
      std::vector<ExpressionSpec> block_specs(specs ? draws : 0);
#pragma omp parallel for schedule(dynamic, 4)
      for (long di = 0; di < static_cast<long>(draws); ++di) {
        const auto d = static_cast<std::uint64_t>(di);
        std::vector<std::vector<double>> pts;
        ExpressionSpec u;
        std::string draw_status = "ok";
        try {
          u = sample_draw(es, d);
          pts = sample_points(es, d, points, cfg.point_radius);
        } catch (const std::exception& e) {
          draw_status = error_kind(e);
        }
        if (specs && draw_status == "ok") block_specs[d] = u;
        for (std::size_t p = 0; p < per; ++p) {
          SweepRow& r = block[d * per + p];
          r.flavor = flavor;
          r.k = k;
          r.l = l;
          r.draw = d;
          r.point = static_cast<int>(p);
          r.values.assign(nvalues, kNaN);
          if (draw_status != "ok") {
            r.status = draw_status;
            continue;
          }
          r.coords = pts[p];
          try {
            r.values = fn(u, pts[p]);
          } catch (const std::exception& e) {
            r.status = error_kind(e);
          }
        }
      }
      for (auto& r : block) all.push_back(std::move(r));
      if (specs)
        for (auto& s : block_specs) specs->push_back(std::move(s));
    }
  }
  return all;
}

CsvTable sweep_table(const std::vector<SweepRow>& rows, const std::vector<std::string>& names, std::uint64_t seed) {
  CsvTable t;
  t.header = {"seed", "flavor", "k", "l", "draw", "point", "coords"};
  t.header.insert(t.header.end(), names.begin(), names.end());
  t.header.push_back("status");
  t.rows.reserve(rows.size());
  for (const auto& r : rows) {
    std::vector<std::string> row{std::to_string(seed), to_string(r.flavor), std::to_string(r.k), std::to_string(r.l),
                                 std::to_string(r.draw), std::to_string(r.point), join_coords(r.coords)};
    for (double v : r.values) row.push_back(format_double(v));
    row.push_back(r.status);
    t.rows.push_back(std::move(row));
  }
  return t;
}

double column_max(const std::vector<SweepRow>& rows, std::size_t c) {
  double m = -kInf;
  for (const auto& r : rows)
    if (r.status == "ok") m = std::max(m, r.values[c]);
  return m;
}

double column_min(const std::vector<SweepRow>& rows, std::size_t c) {
  double m = kInf;
  for (const auto& r : rows)
    if (r.status == "ok") m = std::min(m, r.values[c]);
  return m;
}

double error_rows(const std::vector<SweepRow>& rows) {
  return static_cast<double>(std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return r.status != "ok"; }));
}

void write_specs(const std::vector<ExpressionSpec>& specs, const std::string& out_dir, SuiteResult& res) {
  json arr = json::array();
  for (const auto& s : specs) arr.push_back(to_json(s));
  const auto path = (std::filesystem::path(out_dir) / "specs.json").string();
  std::ofstream(path, std::ios::binary) << arr.dump(1) << '\n';
  res.extra_files.push_back("specs.json");
}

WirtingerTable table_of(const ExpressionSpec& u, const std::vector<double>& p, int order) {
  return wirtinger_from_real(evaluate_jet(u, p, 0.0, {order, false}));
}

SuiteResult sweep_suite(const ExperimentConfig& cfg, const std::string& out_dir, int points,
                        const std::vector<std::string>& names, const PointFn& fn,
                        const std::function<void(const std::vector<SweepRow>&, SuiteResult&)>& assess) {
  SuiteResult res;
  res.suite = cfg.suite;
  std::vector<ExpressionSpec> specs;
  const bool keep = cfg.output.write_specs && !out_dir.empty();
  const auto rows = ensemble_sweep(cfg, points, names.size(), fn, keep ? &specs : nullptr);
  res.table = sweep_table(rows, names, *cfg.seed);
  res.assertions.push_back(check("row_errors", error_rows(rows), "==", 0.0));
  assess(rows, res);
  res.diagnostics["rows"] = rows.size();
  if (keep) write_specs(specs, out_dir, res);
  return res;
}

SuiteResult det_law(const ExperimentConfig& cfg, const std::string& out_dir) {
  return sweep_suite(
      cfg, out_dir, cfg.points_per_draw, {"residual"},
      [](const ExpressionSpec& u, const std::vector<double>& p) {
        return std::vector<double>{det_transform_residual(u, p)};
      },
      [&](const std::vector<SweepRow>& rows, SuiteResult& res) {
        res.assertions.push_back(check("max_det_residual", column_max(rows, 0), "<=", cfg.tol("det_residual")));
      });
}

SuiteResult w_psd(const ExperimentConfig& cfg, const std::string& out_dir) {
  return sweep_suite(
      cfg, out_dir, cfg.points_per_draw, {"lambda_min", "lambda_max"},
      [](const ExpressionSpec& u, const std::vector<double>& p) {
        const auto jet = evaluate_jet(u, p, 0.0, {2, false});
        std::pair<double, double> mm;
        if (u.flavor == Flavor::Real)
          mm = min_max_eigenvalues(real_W(jet));
        else
          mm = min_max_eigenvalues(complex_W(wirtinger_from_real(jet)));
        return std::vector<double>{mm.first, mm.second};
      },
      [&](const std::vector<SweepRow>& rows, SuiteResult& res) {
        res.assertions.push_back(check("min_lambda_min", column_min(rows, 0), ">=", -cfg.tol("w_lambda_min")));
      });
}

SuiteResult q_sign(const ExperimentConfig& cfg, const std::string& out_dir) {
  return sweep_suite(
      cfg, out_dir, cfg.points_per_draw,
      {"lambda_max", "group1_lambda_max", "group2_lambda_max", "group3_lambda_max", "group4_lambda_max",
       "hermitian_defect"},
      [](const ExpressionSpec& u, const std::vector<double>& p) {
        const auto q = assemble_Q(table_of(u, p, 3));
        const auto g = group_spectra(q);
        return std::vector<double>{min_max_eigenvalues(q.Q).second, g[0], g[1], g[2], g[3], q.hermitian_defect};
      },
      [&](const std::vector<SweepRow>& rows, SuiteResult& res) {
        res.assertions.push_back(check("max_lambda_max", column_max(rows, 0), "<=", cfg.tol("q_lambda_max")));
        for (std::size_t g = 1; g <= 4; ++g)
          res.assertions.push_back(check("max_group" + std::to_string(g) + "_lambda_max", column_max(rows, g), "<=",
                                         cfg.tol("group_lambda_max")));
        res.assertions.push_back(check("max_hermitian_defect", column_max(rows, 5), "<=", cfg.tol("hermitian_defect")));
      });
}

SuiteResult evolution_identity(const ExperimentConfig& cfg, const std::string& out_dir) {
  return sweep_suite(
      cfg, out_dir, cfg.points_per_draw, {"residual", "lambda_max"},
      [](const ExpressionSpec& u, const std::vector<double>& p) {
        const auto t = table_of(u, p, 4);
        return std::vector<double>{evolution_residual(t), subsolution_spectrum(t)};
      },
      [&](const std::vector<SweepRow>& rows, SuiteResult& res) {
        res.assertions.push_back(check("max_residual", column_max(rows, 0), "<=", cfg.tol("evolution_residual")));
        res.assertions.push_back(check("max_lambda_max", column_max(rows, 1), "<=", cfg.tol("q_lambda_max")));
      });
}

SuiteResult heat_identity(const ExperimentConfig& cfg, const std::string& out_dir) {
  return sweep_suite(
      cfg, out_dir, cfg.points_per_draw, {"residual"},
      [](const ExpressionSpec& u, const std::vector<double>& p) { return std::vector<double>{heat_residual(u, p)}; },
      [&](const std::vector<SweepRow>& rows, SuiteResult& res) {
        res.assertions.push_back(check("max_residual", column_max(rows, 0), "<=", cfg.tol("heat_residual")));
      });
}

SuiteResult real_complexify(const ExperimentConfig& cfg, const std::string& out_dir) {
  return sweep_suite(
      cfg, out_dir, cfg.points_per_draw, {"w_residual", "q_residual", "f_residual", "real_lambda_max"},
      [](const ExpressionSpec& u, const std::vector<double>& p) {
        const auto r = real_reduction(u, p);
        return std::vector<double>{r.W_residual, r.Q_residual, r.F_residual, r.real_lambda_max};
      },
      [&](const std::vector<SweepRow>& rows, SuiteResult& res) {
        res.assertions.push_back(check("max_w_residual", column_max(rows, 0), "<=", cfg.tol("w_residual")));
        res.assertions.push_back(check("max_q_residual", column_max(rows, 1), "<=", cfg.tol("q_residual")));
        res.assertions.push_back(check("max_f_residual", column_max(rows, 2), "<=", cfg.tol("f_residual")));
        res.assertions.push_back(check("max_real_lambda_max", column_max(rows, 3), "<=", cfg.tol("real_lambda_max")));
      });
}

// ---------------------------------------------------------------------------
// flows

/// a|x|^2/2 - b|y|^2/2 + t log(a^k / b^l), in either flavor.
ExpressionSpec drifting_quadratic(int k, int l, Flavor flavor, double a, double b) {
  const ExpressionSpec q = diagonal_quadratic(k, l, flavor, a, b);
  const int n = q.dim();
  std::vector<std::vector<double>> M(static_cast<std::size_t>(n + 1), std::vector<double>(static_cast<std::size_t>(n + 1), 0.0));
  const int xs = flavor == Flavor::Real ? k : 2 * k;
  const double s = flavor == Flavor::Real ? 1.0 : 2.0;
  for (int i = 0; i < n; ++i) M[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = i < xs ? s * a : -s * b;
  std::vector<double> lin(static_cast<std::size_t>(n + 1), 0.0);
  lin.back() = k * std::log(a) - l * std::log(b);
  return quadratic_spec(k, l, flavor, M, lin, 0.0);
}

/// Three trigonometric atoms on the 2-torus with amplitudes (1.6, -1.2, 0.8) eps.
ExpressionSpec torus_perturbation(double eps) {
  ExpressionSpec p{1, 1, Flavor::Real, nullptr};
  p.root = make_node(Sum{{make_node(Scale{1.6 * eps, make_node(Atom{AtomFn::Sin, {1.0, 0.0}, 0.3, 1.0})}),
                          make_node(Scale{-1.2 * eps, make_node(Atom{AtomFn::Cos, {1.0, 1.0}, 0.1, 1.0})}),
                          make_node(Scale{0.8 * eps, make_node(Atom{AtomFn::Sin, {2.0, -1.0}, 1.1, 1.0})})}});
  return p;
}

FlowField torus_flow(int nodes, double eps, double lambda, double Lambda) {
  const Grid g = make_grid(2, nodes, 0.0, 2.0 * std::numbers::pi, true);
  FlowField f = make_field(g, Flavor::Real, 1, 1, periodic_boundary(diagonal_quadratic(1, 1, Flavor::Real, 1.0, 1.0)),
                           torus_perturbation(eps), 0.0, 1.0, lambda, Lambda);
  f.dt = f.max_explicit_dt();
  return f;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void write_snapshot(const FlowField& f, const ExperimentConfig& cfg, const std::string& out_dir, const std::string& stem,
                    SuiteResult& res) {
  if (out_dir.empty() || cfg.output.snapshot == "none") return;
  const std::string name = stem + (cfg.output.snapshot == "csv" ? ".csv" : ".json");
  const auto path = (std::filesystem::path(out_dir) / name).string();
  if (cfg.output.snapshot == "csv") {
    write_field_csv(f, f.slices.size() - 1, path);
    res.extra_files.push_back(name);
  } else {
    write_field_binary(f, f.slices.size() - 1, path);
    res.extra_files.push_back(name);
    res.extra_files.push_back(name + ".bin");
  }
}

SuiteResult flow_convergence(const ExperimentConfig& cfg, const std::string& out_dir) {
  SuiteResult res;
  res.suite = cfg.suite;
  res.table.header = {"check", "flavor", "scheme", "nodes", "dt", "t", "error", "order", "status"};
  auto row = [&](const std::string& c, const std::string& flavor, const std::string& scheme, int nodes, double dt,
                 double t, double err, double order, const std::string& status) {
    res.table.rows.push_back({c, flavor, scheme, std::to_string(nodes), format_double(dt), format_double(t),
                              format_double(err), format_double(order), status});
  };
  const auto& fs = cfg.flow;

  // exact drifting quadratic, per step
  double worst = 0.0;
  struct Exact {
    Flavor flavor;
    int dim, nodes;
    Scheme scheme;
    const char* name;
  };
  const Exact cases[] = {{Flavor::Real, 2, fs.real_nodes, Scheme::RK4, "rk4"},
                         {Flavor::Real, 2, fs.real_nodes, Scheme::SemiImplicit, "semi-implicit"},
                         {Flavor::Complex, 4, fs.complex_nodes, Scheme::RK4, "rk4"}};
  const double lam = 0.5 * std::min(fs.a, fs.b), Lam = 2.0 * std::max(fs.a, fs.b);
  for (const auto& c : cases) {
    try {
      const Grid g = make_grid(c.dim, c.nodes, -1.0, 1.0, false, 2);
      const ExpressionSpec u = drifting_quadratic(1, 1, c.flavor, fs.a, fs.b);
      FlowField f = make_field(g, c.flavor, 1, 1, frozen_boundary(u), u, 0.0, 1.0, lam, Lam);
      f.dt = f.max_explicit_dt();
      for (int s = 0; s < fs.exact_steps; ++s) {
        step_parabolic(f, c.scheme);
        const auto& cur = f.current();
        double err = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) err = std::max(err, std::abs(cur.values[i] - evaluate(u, g.coords(i), cur.t)));
        worst = std::max(worst, err);
        row("exact", to_string(c.flavor), c.name, c.nodes, f.dt, cur.t, err, kNaN, "ok");
      }
    } catch (const std::exception& e) {
      worst = kNaN;
      row("exact", to_string(c.flavor), c.name, c.nodes, kNaN, kNaN, kNaN, kNaN, error_kind(e));
    }
  }
  res.assertions.push_back(check("max_per_step_error", worst, "<=", cfg.tol("per_step")));

  // time self-convergence of RK4
  double time_order = kNaN;
  int violations = 0;
  try {
    const FlowField f0 = torus_flow(fs.time_nodes, fs.epsilon, fs.lambda, fs.Lambda);
    std::vector<std::vector<double>> sols;
    std::vector<double> dts;
    for (int r = 0; r < 3; ++r) {
      FlowField f = f0;
      f.dt = f0.dt / (1 << r);
      integrate(f, fs.time_T, Scheme::RK4, 1 << 20);
      if (monitor_class(f, fs.lambda, fs.Lambda).first_violation) ++violations;
      sols.push_back(f.current().values);
      dts.push_back(f.dt);
    }
    const double e1 = sup_diff(sols[0], sols[1]), e2 = sup_diff(sols[1], sols[2]);
    time_order = std::log2(e1 / e2);
    row("time", "real", "rk4", fs.time_nodes, dts[0], fs.time_T, e1, kNaN, "ok");
    row("time", "real", "rk4", fs.time_nodes, dts[1], fs.time_T, e2, time_order, "ok");
  } catch (const std::exception& e) {
    row("time", "real", "rk4", fs.time_nodes, kNaN, fs.time_T, kNaN, kNaN, error_kind(e));
  }
  res.assertions.push_back(check("time_order", time_order, ">=", cfg.tol("time_order_min")));

  // space self-convergence
  std::vector<double> space_orders;
  try {
    const double dt = torus_flow(fs.space_nodes.back(), fs.epsilon, fs.lambda, fs.Lambda).dt;
    std::vector<FlowField> runs;
    for (int nodes : fs.space_nodes) {
      FlowField f = torus_flow(nodes, fs.epsilon, fs.lambda, fs.Lambda);
      f.dt = dt;
      integrate(f, fs.space_T, Scheme::RK4, 1 << 20);
      if (monitor_class(f, fs.lambda, fs.Lambda).first_violation) ++violations;
      runs.push_back(std::move(f));
    }
    if (!runs.empty()) write_snapshot(runs.back(), cfg, out_dir, "flow-convergence-field", res);
    auto restricted = [](const FlowField& coarse, const FlowField& fine) {
      double m = 0.0;
      for (std::size_t i = 0; i < coarse.grid.size(); ++i) {
        auto mi = coarse.grid.multi_index(i);
        for (auto& x : mi) x *= 2;
        m = std::max(m, std::abs(coarse.current().values[i] - fine.current().values[fine.grid.linear_index(mi)]));
      }
      return m;
    };
    std::vector<double> errs;
    for (std::size_t r = 0; r + 1 < runs.size(); ++r) errs.push_back(restricted(runs[r], runs[r + 1]));
    for (std::size_t r = 0; r < errs.size(); ++r) {
      const double order = r == 0 ? kNaN : std::log2(errs[r - 1] / errs[r]);
      if (r > 0) space_orders.push_back(order);
      row("space", "real", "rk4", fs.space_nodes[r], dt, fs.space_T, errs[r], order, "ok");
    }
  } catch (const std::exception& e) {
    row("space", "real", "rk4", fs.space_nodes.front(), kNaN, fs.space_T, kNaN, kNaN, error_kind(e));
    space_orders.push_back(kNaN);
  }
  for (std::size_t i = 0; i < space_orders.size(); ++i) {
    const std::string suffix = space_orders.size() > 1 ? "_" + std::to_string(i + 1) : "";
    res.assertions.push_back(check("space_order_lower" + suffix, space_orders[i], ">=", cfg.tol("space_order_min")));
    res.assertions.push_back(check("space_order_upper" + suffix, space_orders[i], "<=", cfg.tol("space_order_max")));
  }
  res.assertions.push_back(check("class_violations", violations, "==", 0.0));
  return res;
}

SuiteResult oscillation_decay(const ExperimentConfig& cfg, const std::string& out_dir) {
  SuiteResult res;
  res.suite = cfg.suite;
  res.table.header = {"cylinder_id", "rho", "quantity", "osc", "alpha_fit", "fit_residual"};
  const auto& fs = cfg.flow;
  FlowField f = torus_flow(fs.nodes, fs.epsilon, fs.lambda, fs.Lambda);
  const Scheme scheme = fs.scheme == "rk4" ? Scheme::RK4 : Scheme::SemiImplicit;
  try {
    integrate(f, fs.T, scheme, fs.record_every);
  } catch (const std::exception& e) {
    res.diagnostics["flow_error"] = error_kind(e) + ": " + e.what();
    res.assertions.push_back(check("flow_completed", 0.0, "==", 1.0));
    return res;
  }
  res.assertions.push_back(check("flow_completed", 1.0, "==", 1.0));
  const auto mon = monitor_class(f, fs.lambda, fs.Lambda);
  res.assertions.push_back(check("class_violations", mon.first_violation ? 1.0 : 0.0, "==", 0.0));
  write_snapshot(f, cfg, out_dir, "oscillation-decay-field", res);

  const double R = fs.radius_cells * f.grid.h[0];
  const double s = f.current().t;
  const double t_min = s - 5.5 * R * R;
  const FieldSamples q = flow_quantities(f, t_min);
  const FieldSamples fam = flow_vector_family(f, t_min);
  auto centers = fs.centers;
  if (centers.empty()) centers.push_back({std::numbers::pi, std::numbers::pi});

  json cyl_diag = json::array();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const Cylinder base{centers[c], s, R};
    const auto ladder = dyadic_ladder(base, fs.ladder_levels).ladder;
    struct Series {
      std::string name;
      std::vector<double> osc;
    };
    std::vector<Series> series;
    try {
      for (const auto& n : q.names) series.push_back({n, {}});
      for (const auto& n : fam.names) series.push_back({"family:" + n, {}});
      series.push_back({"P", {}});
      series.push_back({"P_family", {}});
      for (double rho : ladder) {
        const Cylinder cyl = base.shrink(rho);
        const auto oq = cylinder_oscillation(q, cyl);
        const auto of = cylinder_oscillation(fam, cyl);
        std::size_t idx = 0;
        for (const auto& n : q.names) series[idx++].osc.push_back(oq.at(n));
        for (const auto& n : fam.names) series[idx++].osc.push_back(of.at(n));
        series[idx++].osc.push_back(oscillation_sum(q, cyl));
        series[idx++].osc.push_back(oscillation_sum(fam, cyl));
      }
    } catch (const std::exception& e) {
      res.diagnostics["cylinder_error"] = error_kind(e) + ": " + e.what();
      res.assertions.push_back(check("cylinder_" + std::to_string(c) + "_measured", 0.0, "==", 1.0));
      continue;
    }
    json d;
    for (const auto& sr : series) {
      HolderFit fit{kNaN, kNaN, kNaN, false};
      try {
        fit = holder_exponent_fit(ladder, sr.osc);
      } catch (const DegenerateLadder&) {
      }
      for (std::size_t i = 0; i < ladder.size(); ++i)
        res.table.rows.push_back({std::to_string(c), format_double(ladder[i]), sr.name, format_double(sr.osc[i]),
                                  format_double(fit.alpha), format_double(fit.residual)});
      if (sr.name == "P" || sr.name == "P_family") {
        double worst = -kInf;
        for (std::size_t i = 1; i < sr.osc.size(); ++i)
          worst = std::max(worst, sr.osc[i] / sr.osc[i - 1] - 1.0);
        const std::string pre = "cylinder_" + std::to_string(c) + "_" + sr.name;
        res.assertions.push_back(check(pre + "_monotone_excess", worst, "<=", cfg.tol("ladder_monotone")));
        if (sr.name == "P") {
          res.assertions.push_back(check(pre + "_alpha", fit.alpha, ">", 0.0));
          res.assertions.push_back(check(pre + "_fit_residual", fit.residual, "<", cfg.tol("fit_residual")));
        }
        d[sr.name] = {{"alpha", fit.alpha}, {"fit_residual", fit.residual}};
      }
    }
    // weak Harnack ratio for the positive diagonal entry of W, recorded only
    try {
      const auto it = std::find(q.names.begin(), q.names.end(), "W[0][0]");
      if (it != q.names.end())
        d["weak_harnack_ratio"] =
            weak_harnack_ratio(q, static_cast<std::size_t>(it - q.names.begin()), base, 2.0);
    } catch (const std::exception& e) {
      d["weak_harnack_ratio"] = error_kind(e);
    }
    d["center"] = centers[c];
    cyl_diag.push_back(d);
  }
  res.diagnostics["cylinders"] = cyl_diag;
  res.diagnostics["R"] = R;
  res.diagnostics["slices"] = f.slices.size();
  return res;
}

// ---------------------------------------------------------------------------
// rigidity and rescaling

NodePtr cos_bump(double amplitude) {
  return make_node(Scale{amplitude, make_node(Product{{make_node(Atom{AtomFn::Cos, {0.5 * std::numbers::pi, 0.0}, 0.0, 1.0}),
                                                       make_node(Atom{AtomFn::Cos, {0.0, 0.5 * std::numbers::pi}, 0.0, 1.0})}})});
}

ExpressionSpec plus(const ExpressionSpec& s, NodePtr extra) {
  ExpressionSpec out = s;
  out.root = make_node(Sum{{s.root, std::move(extra)}});
  return out;
}

std::vector<double> sample_grid(const Grid& g, const ExpressionSpec& s) {
  std::vector<double> u(g.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = evaluate(s, g.coords(i));
  return u;
}

/// Values on |x|_inf <= inner (plus one frame node per side) of a symmetric 2D grid.
std::pair<Grid, std::vector<double>> inner_box(const Grid& g, const std::vector<double>& u, double inner) {
  const double h = g.h[0];
  const int half = static_cast<int>(std::lround(inner / h)) + 1;
  const int m = 2 * half + 1;
  const Grid sub = make_grid(2, m, -half * h, half * h, false, 1);
  const int c = g.n[0] / 2;
  std::vector<double> v(sub.size());
  for (std::size_t i = 0; i < sub.size(); ++i) {
    auto mi = sub.multi_index(i);
    for (auto& x : mi) x += c - half;
    v[i] = u[g.linear_index(mi)];
  }
  return {sub, v};
}

SuiteResult rigidity(const ExperimentConfig& cfg, const std::string&) {
  SuiteResult res;
  res.suite = cfg.suite;
  res.table.header = {"case", "flavor", "nodes", "half_width", "iterations", "residual", "det_deviation",
                      "W_variation", "F_residual", "status"};
  const auto& es = cfg.elliptic;
  auto row = [&](const std::string& c, Flavor fl, int nodes, double L, int it, double resid, const RigidityReport& r,
                 const std::string& status) {
    res.table.rows.push_back({c, to_string(fl), std::to_string(nodes), format_double(L), std::to_string(it),
                              format_double(resid), format_double(r.det_deviation), format_double(r.W_variation),
                              format_double(r.F_residual), status});
  };
  const RigidityReport none{kNaN, kNaN, kNaN};
  double det_worst = 0.0, var_worst = 0.0;

  auto solved = [&](const std::string& name, Flavor fl, int dim, int nodes, const ExpressionSpec& q,
                    const ExpressionSpec& guess) {
    try {
      const Grid g = make_grid(dim, nodes, -1.0, 1.0, false, 2);
      const auto sol = solve_elliptic(g, fl, 1, 1, q, guess);
      const auto rep = rigidity_probe(g, fl, 1, 1, sol.values);
      det_worst = std::max(det_worst, rep.det_deviation);
      var_worst = std::max(var_worst, rep.W_variation);
      row(name, fl, nodes, 1.0, sol.iterations, sol.residual, rep, "ok");
    } catch (const std::exception& e) {
      det_worst = var_worst = kNaN;
      row(name, fl, nodes, 1.0, 0, kNaN, none, error_kind(e));
    }
  };

  // exact quadratic with a cross term
  try {
    const Grid g = make_grid(2, es.nodes, -1.0, 1.0, false, 2);
    const auto q = quadratic_spec(1, 1, Flavor::Real, {{1.0, 0.5}, {0.5, -1.0}});
    const auto rep = rigidity_probe(g, Flavor::Real, 1, 1, sample_grid(g, q));
    det_worst = std::max(det_worst, rep.det_deviation);
    var_worst = std::max(var_worst, rep.W_variation);
    row("exact", Flavor::Real, es.nodes, 1.0, 0, kNaN, rep, "ok");
  } catch (const std::exception& e) {
    det_worst = var_worst = kNaN;
    row("exact", Flavor::Real, es.nodes, 1.0, 0, kNaN, none, error_kind(e));
  }
  const auto qr = diagonal_quadratic(1, 1, Flavor::Real, es.a, es.a);
  solved("solved", Flavor::Real, 2, es.nodes, qr, plus(qr, cos_bump(es.guess_amplitude)));
  const auto qc = diagonal_quadratic(1, 1, Flavor::Complex, es.a, es.a);
  solved("solved", Flavor::Complex, 4, 9, qc, qc);
  res.assertions.push_back(check("max_det_deviation", det_worst, "<=", cfg.tol("det_deviation")));
  res.assertions.push_back(check("max_W_variation", var_worst, "<=", cfg.tol("w_variation")));

  // negative control: a field that does not solve the equation
  double control = kNaN;
  try {
    const Grid g = make_grid(2, es.nodes, -1.0, 1.0, false, 2);
    const auto bad = plus(diagonal_quadratic(1, 1, Flavor::Real, 1.0, 1.0),
                          make_node(Scale{es.perturbation, make_node(Atom{AtomFn::Sin, {1.0, 2.0}, 0.0, 1.0})}));
    const auto rep = rigidity_probe(g, Flavor::Real, 1, 1, sample_grid(g, bad));
    control = rep.det_deviation;
    row("negative-control", Flavor::Real, es.nodes, 1.0, 0, kNaN, rep, "ok");
  } catch (const std::exception& e) {
    row("negative-control", Flavor::Real, es.nodes, 1.0, 0, kNaN, none, error_kind(e));
  }
  res.assertions.push_back(check("negative_control_det_deviation", control, ">", cfg.tol("negative_control")));

  // far-field series: non-quadratic data L^2 psi(x / L), spacing fixed, W measured on a fixed inner box
  std::vector<double> variations;
  const double h = 2.0 / (es.nodes - 1);
  for (double L : es.half_widths) {
    const int nodes = 2 * static_cast<int>(std::lround(L / h)) + 1;
    try {
      const Grid g = make_grid(2, nodes, -L, L, false, 2);
      const auto data = plus(qr, make_node(Scale{es.perturbation * L * L,
                                                 make_node(Atom{AtomFn::Sin, {1.0 / L, 0.5 / L}, 0.3, 1.0})}));
      const auto sol = solve_elliptic(g, Flavor::Real, 1, 1, data, data);
      const auto [sub, v] = inner_box(g, sol.values, es.inner_half_width);
      const auto rep = rigidity_probe(sub, Flavor::Real, 1, 1, v);
      variations.push_back(rep.W_variation);
      row("far-field", Flavor::Real, nodes, L, sol.iterations, sol.residual, rep, "ok");
    } catch (const std::exception& e) {
      variations.push_back(kNaN);
      row("far-field", Flavor::Real, nodes, L, 0, kNaN, none, error_kind(e));
    }
  }
  double excess = variations.size() > 1 ? -kInf : 0.0;
  for (std::size_t i = 1; i < variations.size(); ++i) excess = std::max(excess, variations[i] - variations[i - 1]);
  if (std::any_of(variations.begin(), variations.end(), [](double v) { return std::isnan(v); })) excess = kNaN;
  res.assertions.push_back(check("far_field_variation_increase", excess, "<=", cfg.tol("far_field")));
  return res;
}

/// Base quadratic plus amp (x_0 + x_1/2 + 0.3 t + 3)^3.
ExpressionSpec cubic_perturbed(Flavor flavor, double amp) {
  const ExpressionSpec q = diagonal_quadratic(1, 1, flavor, 1.0, 1.0);
  const int n = q.dim();
  std::vector<double> w(static_cast<std::size_t>(n + 1), 0.0);
  w[0] = 1.0;
  w[1] = 0.5;
  w[static_cast<std::size_t>(n)] = 0.3;
  return plus(q, make_node(Scale{amp, make_node(Atom{AtomFn::Pow, w, 3.0, 3.0})}));
}

SuiteResult rescaling(const ExperimentConfig& cfg, const std::string&) {
  SuiteResult res;
  res.suite = cfg.suite;
  res.table.header = {"flavor", "mu", "third_u", "third_v", "ratio", "ratio_relative_error", "H_discrepancy", "status"};
  double worst_ratio = 0.0, worst_H = 0.0;
  const auto& rs = cfg.rescale;
  for (Flavor fl : cfg.flavors) {
    const auto u = cubic_perturbed(fl, rs.amplitude);
    auto rng = draw_rng(*cfg.seed, fl == Flavor::Real ? 0 : 1);
    std::vector<std::vector<double>> probes(static_cast<std::size_t>(rs.probes), std::vector<double>(static_cast<std::size_t>(u.dim())));
    for (auto& p : probes)
      for (auto& x : p) x = 0.2 * (2.0 * uniform01(rng) - 1.0);
    for (double mu : rs.mus) {
      try {
        const auto rep = rescale_report(u, mu, probes, rs.probe_time);
        const double rel = std::abs(rep.ratio - mu) / mu;
        worst_ratio = std::max(worst_ratio, rel);
        worst_H = std::max(worst_H, rep.H_discrepancy);
        res.table.rows.push_back({to_string(fl), format_double(mu), format_double(rep.third_u), format_double(rep.third_v),
                                  format_double(rep.ratio), format_double(rel), format_double(rep.H_discrepancy), "ok"});
      } catch (const std::exception& e) {
        worst_ratio = worst_H = kNaN;
        res.table.rows.push_back({to_string(fl), format_double(mu), "nan", "nan", "nan", "nan", "nan", error_kind(e)});
      }
    }
  }
  res.assertions.push_back(check("max_ratio_relative_error", worst_ratio, "<=", cfg.tol("ratio_relative")));
  res.assertions.push_back(check("max_H_discrepancy", worst_H, "<=", cfg.tol("h_discrepancy")));
  return res;
}

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

json versions() {
  return {{"tma", TMA_VERSION},
          {"compiler", __VERSION__},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"openmp", _OPENMP},
          {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"det-law",           "w-psd",           "q-sign",
                                              "evolution-identity", "heat-identity",   "real-complexify",
                                              "flow-convergence",  "oscillation-decay", "rigidity",
                                              "rescaling"};
  return names;
}

bool randomized_suite(const std::string& suite) {
  return suite == "det-law" || suite == "w-psd" || suite == "q-sign" || suite == "evolution-identity" ||
         suite == "heat-identity" || suite == "real-complexify" || suite == "rescaling";
}

std::map<std::string, double> default_tolerances(const std::string& suite) {
  const auto& t = tolerance_table();
  const auto it = t.find(suite);
  return it == t.end() ? std::map<std::string, double>{} : it->second;
}

double ExperimentConfig::tol(const std::string& name) const {
  const auto it = tolerances.find(name);
  if (it == tolerances.end()) throw InvalidArgument("no tolerance named " + name + " for suite " + suite);
  return it->second;
}

ExperimentConfig config_from_json(const json& j) {
  Section top(j, "");
  ExperimentConfig c;
  if (!top.has("suite")) throw ConfigInvalid("suite: missing");
  top.get("suite", c.suite);
  const auto& names = suite_names();
  if (std::find(names.begin(), names.end(), c.suite) == names.end())
    throw ConfigInvalid("suite: unknown suite \"" + c.suite + "\"");

  if (top.has("ensemble")) {
    c.ensemble = ensemble_from_json(top.at("ensemble"));
    if (top.at("ensemble").contains("seed")) c.seed = c.ensemble.seed;
  }
  if (top.has("seed")) {
    const auto& v = top.at("seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ConfigInvalid("seed: expected an unsigned 64-bit integer");
    c.seed = v.get<std::uint64_t>();
  }
  if (top.has("pairs")) {
    const auto& v = top.at("pairs");
    if (!v.is_array()) throw ConfigInvalid("pairs: expected an array of [k, l]");
    for (const auto& p : v) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
        throw ConfigInvalid("pairs: expected an array of [k, l]");
      c.pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
    }
  } else {
    c.pairs = {{c.ensemble.k, c.ensemble.l}};
  }
  if (top.has("flavors")) {
    const auto& v = top.at("flavors");
    if (!v.is_array()) throw ConfigInvalid("flavors: expected an array of \"real\" / \"complex\"");
    for (const auto& f : v) {
      try {
        c.flavors.push_back(flavor_from_string(f.get<std::string>()));
      } catch (const std::exception&) {
        throw ConfigInvalid("flavors: expected an array of \"real\" / \"complex\"");
      }
    }
  } else {
    c.flavors = default_flavors(c.suite);
  }
  if (c.suite == "q-sign" && !top.has("points_per_draw")) c.points_per_draw = 1;
  top.get("points_per_draw", c.points_per_draw);
  top.get("point_radius", c.point_radius);

  c.tolerances = default_tolerances(c.suite);
  if (top.has("tolerances")) {
    const auto& t = top.at("tolerances");
    if (!t.is_object()) throw ConfigInvalid("tolerances: expected an object");
    for (auto it = t.begin(); it != t.end(); ++it) {
      if (!c.tolerances.count(it.key()))
        throw ConfigInvalid("tolerances." + it.key() + ": not a tolerance of suite " + c.suite);
      if (!it.value().is_number()) throw ConfigInvalid("tolerances." + it.key() + ": expected a number");
      c.tolerances[it.key()] = it.value().get<double>();
    }
  }

  if (top.has("flow")) {
    Section s(top.at("flow"), "flow");
    auto& f = c.flow;
    s.get("real_nodes", f.real_nodes);
    s.get("complex_nodes", f.complex_nodes);
    s.get("a", f.a);
    s.get("b", f.b);
    s.get("exact_steps", f.exact_steps);
    s.get("epsilon", f.epsilon);
    s.get("time_nodes", f.time_nodes);
    s.get("time_T", f.time_T);
    s.get("space_nodes", f.space_nodes);
    s.get("space_T", f.space_T);
    s.get("centers", f.centers);
    s.get("nodes", f.nodes);
    s.get("T", f.T);
    s.get("record_every", f.record_every);
    s.get("lambda", f.lambda);
    s.get("Lambda", f.Lambda);
    s.get("radius_cells", f.radius_cells);
    s.get("ladder_levels", f.ladder_levels);
    s.get("scheme", f.scheme);
    s.finish();
  }
  if (top.has("elliptic")) {
    Section s(top.at("elliptic"), "elliptic");
    auto& e = c.elliptic;
    s.get("nodes", e.nodes);
    s.get("a", e.a);
    s.get("guess_amplitude", e.guess_amplitude);
    s.get("half_widths", e.half_widths);
    s.get("perturbation", e.perturbation);
    s.get("inner_half_width", e.inner_half_width);
    s.finish();
  }
  if (top.has("rescale")) {
    Section s(top.at("rescale"), "rescale");
    auto& r = c.rescale;
    s.get("mus", r.mus);
    s.get("amplitude", r.amplitude);
    s.get("probes", r.probes);
    s.get("probe_time", r.probe_time);
    s.finish();
  }
  if (top.has("output")) {
    Section s(top.at("output"), "output");
    s.get("dir", c.output.dir);
    s.get("snapshot", c.output.snapshot);
    s.get("write_specs", c.output.write_specs);
    s.finish();
  }
  top.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigInvalid(std::string("config: malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

json to_json(const ExperimentConfig& c) {
  json pairs = json::array();
  for (auto [k, l] : c.pairs) pairs.push_back({k, l});
  json flavors = json::array();
  for (Flavor f : c.flavors) flavors.push_back(to_string(f));
  json j{{"suite", c.suite},
         {"ensemble", to_json(c.ensemble)},
         {"pairs", pairs},
         {"flavors", flavors},
         {"points_per_draw", c.points_per_draw},
         {"point_radius", c.point_radius},
         {"tolerances", c.tolerances},
         {"flow",
          {{"real_nodes", c.flow.real_nodes},
           {"complex_nodes", c.flow.complex_nodes},
           {"a", c.flow.a},
           {"b", c.flow.b},
           {"exact_steps", c.flow.exact_steps},
           {"epsilon", c.flow.epsilon},
           {"time_nodes", c.flow.time_nodes},
           {"time_T", c.flow.time_T},
           {"space_nodes", c.flow.space_nodes},
           {"space_T", c.flow.space_T},
           {"centers", c.flow.centers},
           {"nodes", c.flow.nodes},
           {"T", c.flow.T},
           {"record_every", c.flow.record_every},
           {"lambda", c.flow.lambda},
           {"Lambda", c.flow.Lambda},
           {"radius_cells", c.flow.radius_cells},
           {"ladder_levels", c.flow.ladder_levels},
           {"scheme", c.flow.scheme}}},
         {"elliptic",
          {{"nodes", c.elliptic.nodes},
           {"a", c.elliptic.a},
           {"guess_amplitude", c.elliptic.guess_amplitude},
           {"half_widths", c.elliptic.half_widths},
           {"perturbation", c.elliptic.perturbation},
           {"inner_half_width", c.elliptic.inner_half_width}}},
         {"rescale",
          {{"mus", c.rescale.mus},
           {"amplitude", c.rescale.amplitude},
           {"probes", c.rescale.probes},
           {"probe_time", c.rescale.probe_time}}},
         {"output", {{"dir", c.output.dir}, {"snapshot", c.output.snapshot}, {"write_specs", c.output.write_specs}}}};
  if (c.seed) {
    j["seed"] = *c.seed;
    j["ensemble"]["seed"] = *c.seed;
  }
  return j;
}

bool SuiteResult::passed() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.pass; });
}

SuiteResult run_suite(const ExperimentConfig& cfg, const std::string& out_dir) {
  if (cfg.suite == "det-law") return det_law(cfg, out_dir);
  if (cfg.suite == "w-psd") return w_psd(cfg, out_dir);
  if (cfg.suite == "q-sign") return q_sign(cfg, out_dir);
  if (cfg.suite == "evolution-identity") return evolution_identity(cfg, out_dir);
  if (cfg.suite == "heat-identity") return heat_identity(cfg, out_dir);
  if (cfg.suite == "real-complexify") return real_complexify(cfg, out_dir);
  if (cfg.suite == "flow-convergence") return flow_convergence(cfg, out_dir);
  if (cfg.suite == "oscillation-decay") return oscillation_decay(cfg, out_dir);
  if (cfg.suite == "rigidity") return rigidity(cfg, out_dir);
  if (cfg.suite == "rescaling") return rescaling(cfg, out_dir);
  throw ConfigInvalid("suite: unknown suite \"" + cfg.suite + "\"");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string to_csv(const CsvTable& t) {
  std::string out;
  auto field = [&](const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) {
      out += s;
      return;
    }
    out += '"';
    for (char ch : s) {
      if (ch == '"') out += '"';
      out += ch;
    }
    out += '"';
  };
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      field(cells[i]);
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const RunOptions& opts, const json& config_echo) {
  const std::string dir = opts.out_dir.empty() ? cfg.output.dir : opts.out_dir;
  std::filesystem::create_directories(dir);
  omp_set_num_threads(std::max(1, opts.workers));

  RunOutcome out;
  out.csv_path = (std::filesystem::path(dir) / (cfg.suite + ".csv")).string();
  out.manifest_path = (std::filesystem::path(dir) / "manifest.json").string();

  json manifest{{"suite", cfg.suite},
                {"config", config_echo},
                {"resolved_config", to_json(cfg)},
                {"workers", opts.workers},
                {"versions", versions()},
                {"started", iso_now()}};
  const auto t0 = std::chrono::steady_clock::now();
  std::string status;
  try {
    out.result = run_suite(cfg, dir);
    write_text(out.csv_path, to_csv(out.result.table));
    status = out.result.passed() ? "pass" : "fail";
    out.exit_code = out.result.passed() ? 0 : 1;
  } catch (const std::exception& e) {
    status = "error";
    out.exit_code = 1;
    manifest["error"] = error_kind(e) + ": " + e.what();
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json assertions = json::array();
  for (const auto& a : out.result.assertions)
    assertions.push_back({{"name", a.name},
                          {"pass", a.pass},
                          {"value", format_double(a.value)},
                          {"relation", a.relation},
                          {"threshold", format_double(a.threshold)}});
  manifest["assertions"] = assertions;
  manifest["diagnostics"] = out.result.diagnostics;
  manifest["rows"] = out.result.table.rows.size();
  json files = json::array();
  if (status != "error") files.push_back(cfg.suite + ".csv");
  for (const auto& f : out.result.extra_files) files.push_back(f);
  manifest["outputs"] = files;
  manifest["wall_time_s"] = wall;
  manifest["status"] = status;
  manifest["exit_code"] = out.exit_code;
  write_text(out.manifest_path, manifest.dump(2) + "\n");
  return out;
}

void write_failure_manifest(const std::string& out_dir, const std::string& status, const std::string& message,
                            int exit_code, const json& config_echo) {
  std::filesystem::create_directories(out_dir);
  json manifest{{"config", config_echo}, {"versions", versions()}, {"started", iso_now()},
                {"status", status},      {"error", message},       {"exit_code", exit_code},
                {"assertions", json::array()}, {"outputs", json::array()}};
  write_text((std::filesystem::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

}  // namespace tma
