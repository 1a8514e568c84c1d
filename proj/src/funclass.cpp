#include "tma/funclass.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "tma/jets.hpp"
#include "tma/twistedops.hpp"

namespace tma {

BlockBounds block_bounds(const ExpressionSpec& spec, const std::vector<double>& point) {
  const auto jet = evaluate_jet(spec, point, 0.0, {2, false});
  BlockBounds bb;
  auto fill = [&](const auto& blocks) {
    using M = std::decay_t<decltype(blocks.A)>;
    if (blocks.k() > 0) std::tie(bb.x_min, bb.x_max) = min_max_eigenvalues(SelfAdjoint<M>(blocks.A));
    if (blocks.l() > 0) std::tie(bb.y_min, bb.y_max) = min_max_eigenvalues(SelfAdjoint<M>(M(-blocks.C)));
  };
  if (spec.flavor == Flavor::Real)
    fill(real_blocks(jet));
  else
    fill(complex_blocks(wirtinger_from_real(jet)));
  return bb;
}

bool within(const BlockBounds& b, double lambda, double Lambda, double tol) {
  return b.x_min >= lambda - tol && b.x_max <= Lambda + tol && b.y_min >= lambda - tol && b.y_max <= Lambda + tol;
}

ClassReport class_membership(const ExpressionSpec& spec, const std::vector<std::vector<double>>& cloud, double lambda,
                             double Lambda, double tol) {
  if (!(lambda > 0) || !(Lambda >= lambda)) throw InvalidArgument("class bounds need 0 < lambda <= Lambda");
  if (cloud.empty()) throw InvalidArgument("empty sample cloud");
  ClassReport r;
  r.lambda = lambda;
  r.Lambda = Lambda;
  r.bounds.resize(cloud.size());
  const auto n = static_cast<long>(cloud.size());
  std::vector<std::string> errors(cloud.size());
  const double t = tol * std::max(1.0, Lambda);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    try {
      r.bounds[static_cast<std::size_t>(i)] = block_bounds(spec, cloud[static_cast<std::size_t>(i)]);
    } catch (const DomainViolation& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!errors[i].empty()) throw DomainViolation(errors[i]);
    if (!r.first_violation && !within(r.bounds[i], lambda, Lambda, t)) r.first_violation = i;
  }
  r.member = !r.first_violation.has_value();
  return r;
}

std::vector<std::vector<double>> make_cloud(int dim, const CloudSpec& c) {
  std::vector<std::vector<double>> pts;
  int per_axis = c.per_axis;
  while (per_axis > 1 && std::pow(static_cast<double>(per_axis), dim) > c.max_grid) --per_axis;
  if (per_axis >= 1) {
    std::size_t total = 1;
    for (int d = 0; d < dim; ++d) total *= static_cast<std::size_t>(per_axis);
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::vector<double> p(static_cast<std::size_t>(dim));
      std::size_t rem = idx;
      for (int d = 0; d < dim; ++d) {
        const auto i = rem % static_cast<std::size_t>(per_axis);
        rem /= static_cast<std::size_t>(per_axis);
        p[static_cast<std::size_t>(d)] =
            per_axis == 1 ? 0.0 : -c.half_width + 2.0 * c.half_width * static_cast<double>(i) / (per_axis - 1);
      }
      pts.push_back(std::move(p));
    }
  }
  static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
  for (int i = 1; i <= c.halton; ++i) {
    std::vector<double> p(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) {
      const int base = primes[d % 10];
      double f = 1.0, r = 0.0;
      for (int n = i; n > 0; n /= base) {
        f /= base;
        r += f * (n % base);
      }
      p[static_cast<std::size_t>(d)] = -c.half_width + 2.0 * c.half_width * r;
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::mt19937_64 draw_rng(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL)));
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

ExpressionSpec sample_draw(const EnsembleSpec& es, std::uint64_t index) {
  if (!(es.epsilon >= 0.0)) throw AmplitudeTooLarge("epsilon must be non-negative");
  // the atoms are normalized so the perturbation Hessian is bounded by epsilon
  if (es.epsilon > 0.5 * std::min(es.a, es.b))
    throw AmplitudeTooLarge("perturbation Hessian bound " + std::to_string(es.epsilon) + " exceeds min(a,b)/2 = " +
                            std::to_string(0.5 * std::min(es.a, es.b)));
  ExpressionSpec base = diagonal_quadratic(es.k, es.l, es.flavor, es.a, es.b);
  if (es.epsilon == 0.0 || es.atoms == 0) return base;

  auto rng = draw_rng(es.seed, index);
  const int n = es.dim();
  struct Raw {
    std::vector<double> omega;
    double phase, coef;
  };
  std::vector<Raw> raw;
  double bound = 0.0;
  for (int j = 0; j < es.atoms; ++j) {
    Raw r;
    double w2 = 0.0;
    do {
      r.omega.assign(static_cast<std::size_t>(n), 0.0);
      w2 = 0.0;
      for (auto& w : r.omega) {
        w = es.freq_scale * (2.0 * uniform01(rng) - 1.0);
        w2 += w * w;
      }
    } while (w2 < 1e-3 * es.freq_scale * es.freq_scale);
    r.phase = 2.0 * std::numbers::pi * uniform01(rng);
    r.coef = (0.5 + 0.5 * uniform01(rng)) * (uniform01(rng) < 0.5 ? -1.0 : 1.0);
    bound += std::abs(r.coef) * w2;
    raw.push_back(std::move(r));
  }
  const double target = es.flavor == Flavor::Real ? 1.0 : 2.0;
  const double scale = es.epsilon * target / bound;
  Sum sum;
  sum.terms.push_back(base.root);
  for (int j = 0; j < es.atoms; ++j) {
    auto& r = raw[static_cast<std::size_t>(j)];
    Atom a{j % 2 == 0 ? AtomFn::Sin : AtomFn::Cos, r.omega, r.phase, 1.0};
    sum.terms.push_back(make_node(Scale{r.coef * scale, make_node(std::move(a))}));
  }
  base.root = make_node(std::move(sum));
  return base;
}

std::vector<ExpressionSpec> sample_ensemble(const EnsembleSpec& es) {
  if (es.draws < 0) throw InvalidArgument("negative draw count");
  sample_draw(es, 0);  // precheck before spawning work
  std::vector<ExpressionSpec> out(static_cast<std::size_t>(es.draws));
#pragma omp parallel for schedule(static)
  for (long i = 0; i < es.draws; ++i) out[static_cast<std::size_t>(i)] = sample_draw(es, static_cast<std::uint64_t>(i));
  return out;
}

std::vector<std::vector<double>> sample_points(const EnsembleSpec& es, std::uint64_t index, int count, double r) {
  auto rng = draw_rng(es.seed ^ 0xA5A5A5A5A5A5A5A5ULL, index);
  std::vector<std::vector<double>> pts(static_cast<std::size_t>(count), std::vector<double>(static_cast<std::size_t>(es.dim())));
  for (auto& p : pts)
    for (auto& x : p) x = r * (2.0 * uniform01(rng) - 1.0);
  return pts;
}

// ---------------------------------------------------------------------------

using nlohmann::json;

json to_json(const EnsembleSpec& e) {
  return json{{"k", e.k},
              {"l", e.l},
              {"flavor", to_string(e.flavor)},
              {"a", e.a},
              {"b", e.b},
              {"epsilon", e.epsilon},
              {"atoms", e.atoms},
              {"seed", e.seed},
              {"draws", e.draws},
              {"freq_scale", e.freq_scale},
              {"cloud", {{"per_axis", e.cloud.per_axis}, {"halton", e.cloud.halton}, {"half_width", e.cloud.half_width}, {"max_grid", e.cloud.max_grid}}}};
}

namespace {

template <class T>
void read(const json& j, const char* name, T& out, const std::string& prefix) {
  if (!j.contains(name)) return;
  const auto& v = j[name];
  try {
    if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw ConfigInvalid(prefix + name + ": expected an unsigned 64-bit integer");
      out = v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigInvalid(prefix + name + ": expected an integer");
      out = v.get<T>();
    } else {
      if (!v.is_number()) throw ConfigInvalid(prefix + name + ": expected a number");
      out = v.get<T>();
    }
  } catch (const json::exception&) {
    throw ConfigInvalid(prefix + name + ": wrong type");
  }
}

}  // namespace

EnsembleSpec ensemble_from_json(const json& j) {
  if (!j.is_object()) throw ConfigInvalid("ensemble: expected an object");
  EnsembleSpec e;
  const std::string p = "ensemble.";
  static const std::set<std::string> known{"k",     "l",     "flavor", "a",          "b",    "epsilon",
                                           "atoms", "seed",  "draws",  "freq_scale", "cloud"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigInvalid(p + it.key() + ": unknown field");
  read(j, "k", e.k, p);
  read(j, "l", e.l, p);
  if (j.contains("flavor")) {
    try {
      e.flavor = flavor_from_string(j["flavor"].get<std::string>());
    } catch (const std::exception&) {
      throw ConfigInvalid("ensemble.flavor: expected \"real\" or \"complex\"");
    }
  }
  read(j, "a", e.a, p);
  read(j, "b", e.b, p);
  read(j, "epsilon", e.epsilon, p);
  read(j, "atoms", e.atoms, p);
  read(j, "seed", e.seed, p);
  read(j, "draws", e.draws, p);
  read(j, "freq_scale", e.freq_scale, p);
  if (j.contains("cloud")) {
    const auto& c = j["cloud"];
    if (!c.is_object()) throw ConfigInvalid("ensemble.cloud: expected an object");
    for (auto it = c.begin(); it != c.end(); ++it)
      if (it.key() != "per_axis" && it.key() != "halton" && it.key() != "half_width" && it.key() != "max_grid")
        throw ConfigInvalid(p + "cloud." + it.key() + ": unknown field");
    read(c, "per_axis", e.cloud.per_axis, p + "cloud.");
    read(c, "halton", e.cloud.halton, p + "cloud.");
    read(c, "half_width", e.cloud.half_width, p + "cloud.");
    read(c, "max_grid", e.cloud.max_grid, p + "cloud.");
  }
  if (e.k < 1 || e.l < 1) throw ConfigInvalid("ensemble.k/l: both must be >= 1");
  if (e.dim() > 8) throw ConfigInvalid("ensemble.k/l: at most 8 real coordinates");
  if (!(e.a > 0) || !(e.b > 0)) throw ConfigInvalid("ensemble.a/b: must be positive");
  if (!(e.epsilon >= 0)) throw ConfigInvalid("ensemble.epsilon: must be non-negative");
  if (e.atoms < 0) throw ConfigInvalid("ensemble.atoms: must be non-negative");
  if (e.draws < 1) throw ConfigInvalid("ensemble.draws: must be positive");
  if (!(e.freq_scale > 0)) throw ConfigInvalid("ensemble.freq_scale: must be positive");
  if (e.cloud.per_axis < 1 || e.cloud.halton < 0 || !(e.cloud.half_width > 0) || e.cloud.max_grid < 1)
    throw ConfigInvalid("ensemble.cloud: invalid cloud description");
  return e;
}

}  // namespace tma
