#include "tma/expression.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace tma {

using nlohmann::json;

std::string to_string(Flavor f) { return f == Flavor::Real ? "real" : "complex"; }

Flavor flavor_from_string(const std::string& s) {
  if (s == "real") return Flavor::Real;
  if (s == "complex") return Flavor::Complex;
  throw ParseError("flavor: expected \"real\" or \"complex\", got \"" + s + "\"");
}

std::string to_string(AtomFn f) {
  switch (f) {
    case AtomFn::Sin: return "sin";
    case AtomFn::Cos: return "cos";
    case AtomFn::Exp: return "exp";
    case AtomFn::Log: return "log";
    case AtomFn::Cosh: return "cosh";
    case AtomFn::Sinh: return "sinh";
    case AtomFn::Pow: return "pow";
  }
  return "?";
}

AtomFn atom_fn_from_string(const std::string& s) {
  for (AtomFn f : {AtomFn::Sin, AtomFn::Cos, AtomFn::Exp, AtomFn::Log, AtomFn::Cosh, AtomFn::Sinh,
                   AtomFn::Pow})
    if (to_string(f) == s) return f;
  throw UnknownAtom("unsupported atom function \"" + s + "\"");
}

NodePtr make_node(Atom a) { return std::make_shared<const Node>(Node{std::move(a)}); }
NodePtr make_node(Quad q) { return std::make_shared<const Node>(Node{std::move(q)}); }
NodePtr make_node(Sum s) { return std::make_shared<const Node>(Node{std::move(s)}); }
NodePtr make_node(Product p) { return std::make_shared<const Node>(Node{std::move(p)}); }
NodePtr make_node(Scale s) { return std::make_shared<const Node>(Node{std::move(s)}); }

namespace {

/// Coordinates extended by time; entries beyond a table's length read as 0.
double coord(const std::vector<double>& x, double t, int n, std::size_t i) {
  return static_cast<int>(i) < n ? x[i] : t;
}

void check_domain(const Atom& a, double arg) {
  switch (a.fn) {
    case AtomFn::Log:
      if (!(arg > 0)) throw DomainViolation("log argument not positive: " + std::to_string(arg));
      break;
    case AtomFn::Pow: {
      const bool integral = std::floor(a.exponent) == a.exponent;
      if (!integral && !(arg > 0))
        throw DomainViolation("non-integer power of non-positive argument");
      if (integral && a.exponent < 0 && arg == 0) throw DomainViolation("negative power of zero");
      break;
    }
    default:
      break;
  }
}

double affine_value(const Atom& a, const std::vector<double>& x, double t, int n) {
  double s = a.constant;
  for (std::size_t i = 0; i < a.affine.size(); ++i) s += a.affine[i] * coord(x, t, n, i);
  return s;
}

double eval_scalar(const Node& node, const std::vector<double>& x, double t, int n) {
  return std::visit(
      [&](const auto& v) -> double {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, Atom>) {
          const double arg = affine_value(v, x, t, n);
          check_domain(v, arg);
          switch (v.fn) {
            case AtomFn::Sin: return std::sin(arg);
            case AtomFn::Cos: return std::cos(arg);
            case AtomFn::Exp: return std::exp(arg);
            case AtomFn::Log: return std::log(arg);
            case AtomFn::Cosh: return std::cosh(arg);
            case AtomFn::Sinh: return std::sinh(arg);
            case AtomFn::Pow: return std::pow(arg, v.exponent);
          }
          return 0.0;
        } else if constexpr (std::is_same_v<V, Quad>) {
          double s = v.constant;
          for (std::size_t i = 0; i < v.linear.size(); ++i) s += v.linear[i] * coord(x, t, n, i);
          for (std::size_t i = 0; i < v.matrix.size(); ++i) {
            const double xi = coord(x, t, n, i);
            for (std::size_t j = 0; j < v.matrix[i].size(); ++j)
              s += 0.5 * v.matrix[i][j] * xi * coord(x, t, n, j);
          }
          return s;
        } else if constexpr (std::is_same_v<V, Sum>) {
          double s = 0.0;
          for (const auto& c : v.terms) s += eval_scalar(*c, x, t, n);
          return s;
        } else if constexpr (std::is_same_v<V, Product>) {
          double s = 1.0;
          for (const auto& c : v.factors) s *= eval_scalar(*c, x, t, n);
          return s;
        } else {
          return v.factor * eval_scalar(*v.arg, x, t, n);
        }
      },
      node.v);
}

struct JetContext {
  const std::vector<double>& x;
  double t;
  int n;
  const JetLayout& layout;
  int time_var;

  /// Layout variable carrying coordinate i, or -1 when it is not a jet variable.
  int var_of(std::size_t i) const {
    if (static_cast<int>(i) < n) return static_cast<int>(i);
    return time_var;
  }
  std::size_t linear_index(int var) const {
    Exponents e{};
    e[static_cast<std::size_t>(var)] = 1;
    return layout.index(e);
  }
  std::size_t quad_index(int a, int b) const {
    Exponents e{};
    ++e[static_cast<std::size_t>(a)];
    ++e[static_cast<std::size_t>(b)];
    return layout.index(e);
  }
};

RealJet eval_jet(const Node& node, const JetContext& ctx) {
  const int order = ctx.layout.order();
  return std::visit(
      [&](const auto& v) -> RealJet {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, Atom>) {
          RealJet arg = RealJet::constant(ctx.layout, affine_value(v, ctx.x, ctx.t, ctx.n));
          check_domain(v, arg.value());
          if (order >= 1)
            for (std::size_t i = 0; i < v.affine.size(); ++i) {
              const int var = ctx.var_of(i);
              if (var >= 0) arg[ctx.linear_index(var)] += v.affine[i];
            }
          switch (v.fn) {
            case AtomFn::Sin: return sin(arg);
            case AtomFn::Cos: return cos(arg);
            case AtomFn::Exp: return exp(arg);
            case AtomFn::Log: return log(arg);
            case AtomFn::Cosh: return cosh(arg);
            case AtomFn::Sinh: return sinh(arg);
            case AtomFn::Pow: return pow(arg, v.exponent);
          }
          return arg;
        } else if constexpr (std::is_same_v<V, Quad>) {
          RealJet out = RealJet::constant(ctx.layout, eval_scalar(node, ctx.x, ctx.t, ctx.n));
          if (order >= 1) {
            for (std::size_t i = 0; i < v.linear.size(); ++i) {
              const int var = ctx.var_of(i);
              if (var >= 0) out[ctx.linear_index(var)] += v.linear[i];
            }
            for (std::size_t i = 0; i < v.matrix.size(); ++i)
              for (std::size_t j = 0; j < v.matrix[i].size(); ++j) {
                const double m = v.matrix[i][j];
                if (m == 0.0) continue;
                const int vi = ctx.var_of(i), vj = ctx.var_of(j);
                // d/dx_i of 1/2 m x_i x_j contributes 1/2 m x_j, and symmetrically
                if (vi >= 0) out[ctx.linear_index(vi)] += 0.5 * m * coord(ctx.x, ctx.t, ctx.n, j);
                if (vj >= 0) out[ctx.linear_index(vj)] += 0.5 * m * coord(ctx.x, ctx.t, ctx.n, i);
                if (order >= 2 && vi >= 0 && vj >= 0) out[ctx.quad_index(vi, vj)] += 0.5 * m;
              }
          }
          return out;
        } else if constexpr (std::is_same_v<V, Sum>) {
          RealJet s(ctx.layout);
          for (const auto& c : v.terms) s += eval_jet(*c, ctx);
          return s;
        } else if constexpr (std::is_same_v<V, Product>) {
          RealJet s = RealJet::constant(ctx.layout, 1.0);
          for (const auto& c : v.factors) s = s * eval_jet(*c, ctx);
          return s;
        } else {
          return eval_jet(*v.arg, ctx) * v.factor;
        }
      },
      node.v);
}

void require_point(const ExpressionSpec& spec, const std::vector<double>& point) {
  if (!spec.root) throw InvalidArgument("expression has no root");
  if (static_cast<int>(point.size()) != spec.dim())
    throw DimensionMismatch("point has " + std::to_string(point.size()) + " coordinates, expected " +
                            std::to_string(spec.dim()));
}

}  // namespace

double evaluate(const ExpressionSpec& spec, const std::vector<double>& point, double time) {
  require_point(spec, point);
  return eval_scalar(*spec.root, point, time, spec.dim());
}

RealJet evaluate_taylor(const ExpressionSpec& spec, const std::vector<double>& point, double time,
                        const JetLayout& layout, int time_var) {
  require_point(spec, point);
  if (layout.nvars() < spec.dim() || (time_var >= 0 && time_var >= layout.nvars()))
    throw DimensionMismatch("jet layout too small for expression");
  JetContext ctx{point, time, spec.dim(), layout, time_var};
  return eval_jet(*spec.root, ctx);
}

// ---------------------------------------------------------------------------
// linear substitution

namespace {

using Matrix = std::vector<std::vector<double>>;

struct Subst {
  const Matrix& S;
  const std::vector<double>& offset;
  std::size_t n_old_ext;
  std::size_t n_new_ext;
};

std::vector<double> pad(const std::vector<double>& v, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < v.size() && i < n; ++i) out[i] = v[i];
  return out;
}

/// Drop a trailing time entry when it is zero.
void trim_vector(std::vector<double>& v, std::size_t n_spatial) {
  if (v.size() == n_spatial + 1 && v.back() == 0.0) v.pop_back();
}

void trim_matrix(Matrix& m, std::size_t n_spatial) {
  if (m.size() != n_spatial + 1) return;
  for (std::size_t i = 0; i <= n_spatial; ++i)
    if (m[i][n_spatial] != 0.0 || m[n_spatial][i] != 0.0) return;
  m.pop_back();
  for (auto& row : m) row.pop_back();
}

NodePtr substitute(const Node& node, const Subst& s) {
  return std::visit(
      [&](const auto& v) -> NodePtr {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, Atom>) {
          Atom a = v;
          const auto old = pad(v.affine, s.n_old_ext);
          a.affine.assign(s.n_new_ext, 0.0);
          for (std::size_t i = 0; i < s.n_old_ext; ++i) {
            if (old[i] == 0.0) continue;
            a.constant += old[i] * s.offset[i];
            for (std::size_t j = 0; j < s.n_new_ext; ++j) a.affine[j] += old[i] * s.S[i][j];
          }
          trim_vector(a.affine, s.n_new_ext - 1);
          return make_node(std::move(a));
        } else if constexpr (std::is_same_v<V, Quad>) {
          Matrix M(s.n_old_ext, std::vector<double>(s.n_old_ext, 0.0));
          for (std::size_t i = 0; i < v.matrix.size(); ++i)
            for (std::size_t j = 0; j < v.matrix[i].size(); ++j) M[i][j] = v.matrix[i][j];
          const auto b = pad(v.linear, s.n_old_ext);
          Quad q;
          q.constant = v.constant;
          // Mo_sym = 1/2 (M + M^T) o
          std::vector<double> mo(s.n_old_ext, 0.0);
          for (std::size_t i = 0; i < s.n_old_ext; ++i)
            for (std::size_t j = 0; j < s.n_old_ext; ++j) {
              mo[i] += 0.5 * (M[i][j] + M[j][i]) * s.offset[j];
              q.constant += 0.5 * M[i][j] * s.offset[i] * s.offset[j];
            }
          for (std::size_t i = 0; i < s.n_old_ext; ++i) q.constant += b[i] * s.offset[i];
          q.linear.assign(s.n_new_ext, 0.0);
          for (std::size_t j = 0; j < s.n_new_ext; ++j)
            for (std::size_t i = 0; i < s.n_old_ext; ++i) q.linear[j] += s.S[i][j] * (b[i] + mo[i]);
          // S^T M S
          Matrix MS(s.n_old_ext, std::vector<double>(s.n_new_ext, 0.0));
          for (std::size_t i = 0; i < s.n_old_ext; ++i)
            for (std::size_t a = 0; a < s.n_old_ext; ++a) {
              if (M[i][a] == 0.0) continue;
              for (std::size_t j = 0; j < s.n_new_ext; ++j) MS[i][j] += M[i][a] * s.S[a][j];
            }
          q.matrix.assign(s.n_new_ext, std::vector<double>(s.n_new_ext, 0.0));
          for (std::size_t p = 0; p < s.n_new_ext; ++p)
            for (std::size_t i = 0; i < s.n_old_ext; ++i) {
              if (s.S[i][p] == 0.0) continue;
              for (std::size_t j = 0; j < s.n_new_ext; ++j) q.matrix[p][j] += s.S[i][p] * MS[i][j];
            }
          trim_vector(q.linear, s.n_new_ext - 1);
          trim_matrix(q.matrix, s.n_new_ext - 1);
          return make_node(std::move(q));
        } else if constexpr (std::is_same_v<V, Sum>) {
          Sum out;
          for (const auto& c : v.terms) out.terms.push_back(substitute(*c, s));
          return make_node(std::move(out));
        } else if constexpr (std::is_same_v<V, Product>) {
          Product out;
          for (const auto& c : v.factors) out.factors.push_back(substitute(*c, s));
          return make_node(std::move(out));
        } else {
          return make_node(Scale{v.factor, substitute(*v.arg, s)});
        }
      },
      node.v);
}

}  // namespace

ExpressionSpec linear_substitution(const ExpressionSpec& spec, const Matrix& S,
                                   const std::vector<double>& offset, int new_k, int new_l,
                                   Flavor new_flavor) {
  ExpressionSpec out{new_k, new_l, new_flavor, nullptr};
  const auto n_old = static_cast<std::size_t>(spec.dim()) + 1;
  const auto n_new = static_cast<std::size_t>(out.dim()) + 1;
  if (S.size() != n_old) throw DimensionMismatch("substitution matrix row count");
  for (const auto& r : S)
    if (r.size() != n_new) throw DimensionMismatch("substitution matrix column count");
  const auto o = offset.empty() ? std::vector<double>(n_old, 0.0) : offset;
  if (o.size() != n_old) throw DimensionMismatch("substitution offset length");
  out.root = substitute(*spec.root, Subst{S, o, n_old, n_new});
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json node_to_json(const Node& node) {
  return std::visit(
      [](const auto& v) -> json {
        using V = std::decay_t<decltype(v)>;
        json j;
        if constexpr (std::is_same_v<V, Atom>) {
          j["kind"] = "atom";
          j["fn"] = to_string(v.fn);
          j["affine"] = v.affine;
          j["const"] = v.constant;
          if (v.fn == AtomFn::Pow) j["exponent"] = v.exponent;
        } else if constexpr (std::is_same_v<V, Quad>) {
          j["kind"] = "quad";
          j["matrix"] = v.matrix;
          j["linear"] = v.linear;
          j["const"] = v.constant;
        } else if constexpr (std::is_same_v<V, Sum>) {
          j["kind"] = "sum";
          j["terms"] = json::array();
          for (const auto& c : v.terms) j["terms"].push_back(node_to_json(*c));
        } else if constexpr (std::is_same_v<V, Product>) {
          j["kind"] = "product";
          j["factors"] = json::array();
          for (const auto& c : v.factors) j["factors"].push_back(node_to_json(*c));
        } else {
          j["kind"] = "scale";
          j["factor"] = v.factor;
          j["arg"] = node_to_json(*v.arg);
        }
        return j;
      },
      node.v);
}

const json& field(const json& j, const char* name, const std::string& path) {
  if (!j.is_object()) throw ParseError(path + ": expected an object");
  auto it = j.find(name);
  if (it == j.end()) throw ParseError(path + "." + name + ": missing field");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path + ": expected a number");
  return j.get<double>();
}

std::vector<double> number_array(const json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

NodePtr node_from_json(const json& j, const std::string& path, std::size_t n) {
  const json& kind_j = field(j, "kind", path);
  if (!kind_j.is_string()) throw ParseError(path + ".kind: expected a string");
  const auto kind = kind_j.get<std::string>();
  if (kind == "atom") {
    Atom a;
    const json& fn = field(j, "fn", path);
    if (!fn.is_string()) throw ParseError(path + ".fn: expected a string");
    a.fn = atom_fn_from_string(fn.get<std::string>());
    a.affine = number_array(field(j, "affine", path), path + ".affine");
    if (a.affine.size() != n && a.affine.size() != n + 1)
      throw ParseError(path + ".affine: length " + std::to_string(a.affine.size()) + ", expected " +
                       std::to_string(n) + " or " + std::to_string(n + 1));
    a.constant = j.contains("const") ? number(j["const"], path + ".const") : 0.0;
    if (a.fn == AtomFn::Pow) a.exponent = number(field(j, "exponent", path), path + ".exponent");
    return make_node(std::move(a));
  }
  if (kind == "quad") {
    Quad q;
    const json& m = field(j, "matrix", path);
    if (!m.is_array()) throw ParseError(path + ".matrix: expected an array of rows");
    for (std::size_t i = 0; i < m.size(); ++i)
      q.matrix.push_back(number_array(m[i], path + ".matrix[" + std::to_string(i) + "]"));
    const auto rows = q.matrix.size();
    if (rows != n && rows != n + 1)
      throw ParseError(path + ".matrix: " + std::to_string(rows) + " rows, expected " + std::to_string(n) +
                       " or " + std::to_string(n + 1));
    for (const auto& r : q.matrix)
      if (r.size() != rows) throw ParseError(path + ".matrix: not square");
    if (j.contains("linear")) q.linear = number_array(j["linear"], path + ".linear");
    if (!q.linear.empty() && q.linear.size() != n && q.linear.size() != n + 1)
      throw ParseError(path + ".linear: wrong length");
    q.constant = j.contains("const") ? number(j["const"], path + ".const") : 0.0;
    return make_node(std::move(q));
  }
  if (kind == "sum" || kind == "product") {
    const char* key = kind == "sum" ? "terms" : "factors";
    const json& arr = field(j, key, path);
    if (!arr.is_array()) throw ParseError(path + "." + key + ": expected an array");
    std::vector<NodePtr> kids;
    for (std::size_t i = 0; i < arr.size(); ++i)
      kids.push_back(node_from_json(arr[i], path + "." + key + "[" + std::to_string(i) + "]", n));
    if (kind == "sum") return make_node(Sum{std::move(kids)});
    return make_node(Product{std::move(kids)});
  }
  if (kind == "scale") {
    Scale s;
    s.factor = number(field(j, "factor", path), path + ".factor");
    s.arg = node_from_json(field(j, "arg", path), path + ".arg", n);
    return make_node(std::move(s));
  }
  throw ParseError(path + ".kind: unknown kind \"" + kind + "\"");
}

int positive_int(const json& j, const char* name, int fallback) {
  if (!j.contains(name)) return fallback;
  const auto& v = j[name];
  if (!v.is_number_integer() || v.get<int>() < 0)
    throw ParseError(std::string("$.") + name + ": expected a non-negative integer");
  return v.get<int>();
}

}  // namespace

json to_json(const ExpressionSpec& spec) {
  json j = node_to_json(*spec.root);
  j["k"] = spec.k;
  j["l"] = spec.l;
  j["flavor"] = to_string(spec.flavor);
  return j;
}

ExpressionSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("$: expected an object");
  ExpressionSpec spec;
  spec.k = positive_int(j, "k", 1);
  spec.l = positive_int(j, "l", 1);
  if (j.contains("flavor")) {
    if (!j["flavor"].is_string()) throw ParseError("$.flavor: expected a string");
    spec.flavor = flavor_from_string(j["flavor"].get<std::string>());
  }
  if (spec.k + spec.l == 0) throw ParseError("$: k + l must be positive");
  spec.root = node_from_json(j, "$", static_cast<std::size_t>(spec.dim()));
  return spec;
}

std::string serialize(const ExpressionSpec& spec) { return to_json(spec).dump(); }

ExpressionSpec parse_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  return spec_from_json(j);
}

ExpressionSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_spec(ss.str());
}

ExpressionSpec quadratic_spec(int k, int l, Flavor flavor, const Matrix& M, std::vector<double> linear,
                              double c) {
  ExpressionSpec s{k, l, flavor, nullptr};
  s.root = make_node(Quad{M, std::move(linear), c});
  return s;
}

ExpressionSpec diagonal_quadratic(int k, int l, Flavor flavor, double a, double b) {
  ExpressionSpec s{k, l, flavor, nullptr};
  const auto n = static_cast<std::size_t>(s.dim());
  Matrix M(n, std::vector<double>(n, 0.0));
  const std::size_t nx = flavor == Flavor::Real ? static_cast<std::size_t>(k) : 2 * static_cast<std::size_t>(k);
  const double scale = flavor == Flavor::Real ? 1.0 : 2.0;
  for (std::size_t i = 0; i < n; ++i) M[i][i] = i < nx ? scale * a : -scale * b;
  s.root = make_node(Quad{std::move(M), {}, 0.0});
  return s;
}

}  // namespace tma
