#include "tma/evolution.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "tma/twistedops.hpp"

namespace tma {

// ---------------------------------------------------------------------------
// generic dense helpers over scalars or jets

namespace {

inline cdouble lift(const cdouble&, cdouble v) { return v; }
inline double lift(const double&, double v) { return v; }
inline ComplexJet lift(const ComplexJet& proto, cdouble v) { return ComplexJet::constant(proto.layout(), v); }
inline RealJet lift(const RealJet& proto, double v) { return RealJet::constant(proto.layout(), v); }

inline cdouble slog(const cdouble& x) { return std::log(x); }
inline double slog(const double& x) { return std::log(x); }
inline ComplexJet slog(const ComplexJet& x) { return log(x); }
inline RealJet slog(const RealJet& x) { return log(x); }

template <class S>
struct Sq {
  int n = 0;
  std::vector<S> a;
  Sq() = default;
  Sq(int n_, const S& fill) : n(n_), a(static_cast<std::size_t>(n_ * n_), fill) {}
  S& operator()(int i, int j) { return a[static_cast<std::size_t>(i * n + j)]; }
  const S& operator()(int i, int j) const { return a[static_cast<std::size_t>(i * n + j)]; }
};

/// Gauss-Jordan without pivoting; blocks here are definite.
template <class S>
std::vector<S> invert(const Sq<S>& m, int size, const S& one, const S& zero) {
  std::vector<S> A(static_cast<std::size_t>(size * size), zero), I(static_cast<std::size_t>(size * size), zero);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) A[static_cast<std::size_t>(i * size + j)] = m(i, j);
    I[static_cast<std::size_t>(i * size + i)] = one;
  }
  auto at = [size](std::vector<S>& v, int i, int j) -> S& { return v[static_cast<std::size_t>(i * size + j)]; };
  for (int c = 0; c < size; ++c) {
    const S inv = one / at(A, c, c);
    for (int j = 0; j < size; ++j) {
      at(A, c, j) = at(A, c, j) * inv;
      at(I, c, j) = at(I, c, j) * inv;
    }
    for (int r = 0; r < size; ++r) {
      if (r == c) continue;
      const S f = at(A, r, c);
      for (int j = 0; j < size; ++j) {
        at(A, r, j) = at(A, r, j) - f * at(A, c, j);
        at(I, r, j) = at(I, r, j) - f * at(I, c, j);
      }
    }
  }
  return I;
}

template <class S>
S determinant(const Sq<S>& m, int size, const S& one) {
  std::vector<S> A;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) A.push_back(m(i, j));
  auto at = [size](std::vector<S>& v, int i, int j) -> S& { return v[static_cast<std::size_t>(i * size + j)]; };
  S det = one;
  for (int c = 0; c < size; ++c) {
    const S piv = at(A, c, c);
    det = det * piv;
    const S inv = one / piv;
    for (int r = c + 1; r < size; ++r) {
      const S f = at(A, r, c) * inv;
      for (int j = c; j < size; ++j) at(A, r, j) = at(A, r, j) - f * at(A, c, j);
    }
  }
  return det;
}

/// W from the full Hessian; lower-left uses the Hessian's own (w, zbar) entries.
template <class S>
Sq<S> twisted_W_generic(const Sq<S>& H, int k, const S& one, const S& zero) {
  const int n = H.n, l = n - k;
  Sq<S> Cm(l, zero);
  for (int a = 0; a < l; ++a)
    for (int b = 0; b < l; ++b) Cm(a, b) = H(k + a, k + b);
  const auto Ci = invert(Cm, l, one, zero);
  auto cinv = [&](int a, int b) -> const S& { return Ci[static_cast<std::size_t>(a * l + b)]; };
  // BC = B C^-1 (k x l), CD = C^-1 D (l x k)
  std::vector<S> BC(static_cast<std::size_t>(k * l), zero), CD(static_cast<std::size_t>(l * k), zero);
  for (int i = 0; i < k; ++i)
    for (int b = 0; b < l; ++b)
      for (int a = 0; a < l; ++a) BC[static_cast<std::size_t>(i * l + b)] += H(i, k + a) * cinv(a, b);
  for (int a = 0; a < l; ++a)
    for (int j = 0; j < k; ++j)
      for (int b = 0; b < l; ++b) CD[static_cast<std::size_t>(a * k + j)] += cinv(a, b) * H(k + b, j);
  Sq<S> W(n, zero);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      S s = H(i, j);
      for (int a = 0; a < l; ++a) s -= BC[static_cast<std::size_t>(i * l + a)] * H(k + a, j);
      W(i, j) = s;
    }
  for (int i = 0; i < k; ++i)
    for (int b = 0; b < l; ++b) W(i, k + b) = BC[static_cast<std::size_t>(i * l + b)];
  for (int a = 0; a < l; ++a)
    for (int j = 0; j < k; ++j) W(k + a, j) = CD[static_cast<std::size_t>(a * k + j)];
  for (int a = 0; a < l; ++a)
    for (int b = 0; b < l; ++b) W(k + a, k + b) = zero - cinv(a, b);
  return W;
}

/// log det A - log det(-C).
template <class S>
S twisted_F_generic(const Sq<S>& H, int k, const S& one, const S& zero) {
  const int n = H.n, l = n - k;
  S F = zero;
  if (k > 0) {
    Sq<S> A(k, zero);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) A(i, j) = H(i, j);
    F += slog(determinant(A, k, one));
  }
  if (l > 0) {
    Sq<S> C(l, zero);
    for (int i = 0; i < l; ++i)
      for (int j = 0; j < l; ++j) C(i, j) = zero - H(k + i, k + j);
    F -= slog(determinant(C, l, one));
  }
  return F;
}

template <class J>
J drop_time(const J& jet, int nspace) {
  const JetLayout& lo = JetLayout::get(nspace, jet.order());
  J out(lo);
  const JetLayout& src = jet.layout();
  for (std::size_t i = 0; i < lo.size(); ++i) out[i] = jet[src.index(lo.exponents(i))];
  return out;
}

}  // namespace

WirtingerTable spatial_table(const WirtingerTable& t) {
  if (!t.has_time) return t;
  WirtingerTable out = t;
  out.has_time = false;
  out.jet = drop_time(t.jet, 2 * t.complex_dim());
  return out;
}

// ---------------------------------------------------------------------------
// oracle

EvolutionOracle evolution_oracle(const WirtingerTable& table) {
  const WirtingerTable t = spatial_table(table);
  if (t.jet.order() < 4) throw InvalidArgument("evolution oracle needs a table of order 4");
  const int k = t.k, l = t.l, n = k + l;

  const JetLayout& lo2 = JetLayout::get(2 * n, 2);
  const ComplexJet one = ComplexJet::constant(lo2, 1.0), zero = ComplexJet::constant(lo2, 0.0);
  Sq<ComplexJet> H(n, zero);
  for (int i = 0; i < n; ++i) {
    const ComplexJet di = t.jet.differentiate(2 * i);
    for (int j = 0; j < n; ++j) H(i, j) = di.differentiate(2 * j + 1).truncate(2);
  }
  const auto W = twisted_W_generic(H, k, one, zero);
  const ComplexJet F = twisted_F_generic(H, k, one, zero);

  MatC Hv(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) Hv(i, j) = H(i, j).value();
  const auto blocks = split_blocks(Hv, k);
  const MatC Ainv = k > 0 ? MatC(blocks.A.inverse()) : MatC(0, 0);
  const MatC Cinv = l > 0 ? MatC(blocks.C.inverse()) : MatC(0, 0);

  // L phi from a scalar jet of order >= 2
  auto L = [&](const ComplexJet& phi) {
    cdouble s = 0.0;
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) s += Ainv(b, a) * phi.partial({2 * a, 2 * b + 1});
    for (int a = 0; a < l; ++a)
      for (int b = 0; b < l; ++b) s -= Cinv(b, a) * phi.partial({2 * (k + a), 2 * (k + b) + 1});
    return s;
  };

  // time derivative of the Hessian under u_t = F
  const JetLayout& lo1 = JetLayout::get(1, 1);
  const ComplexJet one1 = ComplexJet::constant(lo1, 1.0), zero1 = ComplexJet::constant(lo1, 0.0);
  Sq<ComplexJet> Hd(n, zero1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Hd(i, j) = ComplexJet::constant(lo1, Hv(i, j));
      Hd(i, j)[1] = F.partial({2 * i, 2 * j + 1});
    }
  const auto Wd = twisted_W_generic(Hd, k, one1, zero1);
  const ComplexJet Fd = twisted_F_generic(Hd, k, one1, zero1);

  EvolutionOracle out;
  out.dtW = MatC(n, n);
  out.LW = MatC(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      out.dtW(i, j) = Wd(i, j)[1];
      out.LW(i, j) = L(W(i, j));
    }
  out.lhs = out.dtW - out.LW;
  out.heat = std::abs(Fd[1] - L(F));
  return out;
}

RealEvolutionOracle real_evolution_oracle(const SpaceTimeJet& jet) {
  if (jet.jet.order() < 4) throw InvalidArgument("evolution oracle needs a jet of order 4");
  const int n = jet.dim();
  const int k = jet.flavor == Flavor::Real ? jet.k : 2 * jet.k;
  const int l = n - k;
  const RealJet U = jet.has_time ? drop_time(jet.jet, n) : jet.jet;

  const JetLayout& lo2 = JetLayout::get(n, 2);
  const RealJet one = RealJet::constant(lo2, 1.0), zero = RealJet::constant(lo2, 0.0);
  Sq<RealJet> H(n, zero);
  for (int i = 0; i < n; ++i) {
    const RealJet di = U.differentiate(i);
    for (int j = 0; j < n; ++j) H(i, j) = di.differentiate(j).truncate(2);
  }
  const auto W = twisted_W_generic(H, k, one, zero);
  const RealJet F = twisted_F_generic(H, k, one, zero);

  MatR Hv(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) Hv(i, j) = H(i, j).value();
  const auto blocks = split_blocks(Hv, k);
  const MatR Ainv = blocks.A.inverse();
  const MatR Cinv = blocks.C.inverse();
  auto L = [&](const RealJet& phi) {
    double s = 0.0;
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) s += Ainv(a, b) * phi.partial({a, b});
    for (int a = 0; a < l; ++a)
      for (int b = 0; b < l; ++b) s -= Cinv(a, b) * phi.partial({k + a, k + b});
    return s;
  };

  const JetLayout& lo1 = JetLayout::get(1, 1);
  const RealJet one1 = RealJet::constant(lo1, 1.0), zero1 = RealJet::constant(lo1, 0.0);
  Sq<RealJet> Hd(n, zero1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Hd(i, j) = RealJet::constant(lo1, Hv(i, j));
      Hd(i, j)[1] = F.partial({i, j});
    }
  const auto Wd = twisted_W_generic(Hd, k, one1, zero1);
  const RealJet Fd = twisted_F_generic(Hd, k, one1, zero1);

  RealEvolutionOracle out;
  out.dtW = MatR(n, n);
  out.LW = MatR(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      out.dtW(i, j) = Wd(i, j)[1];
      out.LW(i, j) = L(W(i, j));
    }
  out.lhs = out.dtW - out.LW;
  out.heat = std::abs(Fd[1] - L(F));
  return out;
}

// ---------------------------------------------------------------------------
// Q transcription
//
// Each term is written in index notation.  zi(b,a) = u^{zbar_b z_a} = (A^-1)(b,a),
// wi(b,a) = u^{wbar_b w_a} = (C^-1)(b,a), u(Z:p,Zb:q,W:m) = u_{z_p zbar_q w_m}.
// Free indices are i and j; every other index is summed.

namespace {

struct TermDef {
  int id;
  QBlock block;
  const char* text;
};

const TermDef kTermDefs[] = {
    {1, QBlock::ZZ, "- zi(q,r) zi(s,p) u(Z:p,Zb:q,Z:i) u(Z:r,Zb:s,Zb:j)"},
    {2, QBlock::ZZ, "+ zi(q,r) zi(s,p) u(Z:p,Zb:q,Z:i) u(Z:r,Zb:s,Wb:k) wi(k,l) u(W:l,Zb:j)"},
    {3, QBlock::ZZ, "- u(Z:i,Wb:k) wi(k,m) zi(q,r) zi(s,p) u(Z:p,Zb:q,W:m) u(Z:r,Zb:s,Wb:n) wi(n,l) u(W:l,Zb:j)"},
    {4, QBlock::ZZ, "+ u(Z:i,Wb:k) wi(k,l) zi(q,r) zi(s,p) u(Z:p,Zb:q,W:l) u(Z:r,Zb:s,Zb:j)"},
    {5, QBlock::ZZ, "- zi(b,a) u(Z:i,Wb:k,Z:a) wi(k,p) u(W:p,Wb:q,Zb:b) wi(q,l) u(W:l,Zb:j)"},
    {6, QBlock::ZZ, "+ zi(b,a) u(Z:i,Wb:k,Z:a) wi(k,l) u(W:l,Zb:j,Zb:b)"},
    {7, QBlock::ZZ, "- zi(b,a) u(Z:i,Wb:k,Zb:b) wi(k,p) u(W:p,Wb:q,Z:a) wi(q,l) u(W:l,Zb:j)"},
    {8, QBlock::ZZ, "+ zi(b,a) u(Z:i,Wb:k) wi(k,r) u(W:r,Wb:s,Zb:b) wi(s,p) u(W:p,Wb:q,Z:a) wi(q,l) u(W:l,Zb:j)"},
    {9, QBlock::ZZ, "+ zi(b,a) u(Z:i,Wb:k) wi(k,p) u(W:p,Wb:q,Z:a) wi(q,r) u(W:r,Wb:s,Zb:b) wi(s,l) u(W:l,Zb:j)"},
    {10, QBlock::ZZ, "- zi(b,a) u(Z:i,Wb:k) wi(k,p) u(W:p,Wb:q,Z:a) wi(q,l) u(W:l,Zb:j,Zb:b)"},
    {11, QBlock::ZZ, "+ zi(b,a) u(Z:i,Wb:k,Zb:b) wi(k,l) u(W:l,Zb:j,Z:a)"},
    {12, QBlock::ZZ, "- zi(b,a) u(Z:i,Wb:k) wi(k,r) u(W:r,Wb:s,Zb:b) wi(s,l) u(W:l,Zb:j,Z:a)"},
    {13, QBlock::ZZ, "+ wi(b,a) u(Z:i,Wb:k,Wb:b) wi(k,p) u(W:p,Wb:q,W:a) wi(q,l) u(W:l,Zb:j)"},
    {14, QBlock::ZZ, "- wi(b,a) u(Z:i,Wb:k) wi(k,r) u(W:r,Wb:s,Wb:b) wi(s,p) u(W:p,Wb:q,W:a) wi(q,l) u(W:l,Zb:j)"},
    {15, QBlock::ZZ, "- wi(b,a) u(Z:i,Wb:k,Wb:b) wi(k,l) u(W:l,Zb:j,W:a)"},
    {16, QBlock::ZZ, "+ wi(b,a) u(Z:i,Wb:k) wi(k,r) u(W:r,Wb:s,Wb:b) wi(s,l) u(W:l,Zb:j,W:a)"},
    {17, QBlock::WW, "- wi(j,k) wi(l,i) zi(q,r) zi(s,p) u(Z:p,Zb:q,W:k) u(Z:r,Zb:s,Wb:l)"},
    {18, QBlock::WW, "+ zi(l',k') wi(j,p) u(W:p,Wb:q,Zb:l') wi(q,m) u(W:m,Wb:n,Z:k') wi(n,i)"},
    {19, QBlock::WW, "+ zi(l',k') wi(j,m) u(W:m,Wb:n,Z:k') wi(n,p) u(W:p,Wb:q,Zb:l') wi(q,i)"},
    {20, QBlock::WW, "- wi(l',k') wi(j,p) u(W:p,Wb:q,Wb:l') wi(q,m) u(W:m,Wb:r,W:k') wi(r,i)"},
    {21, QBlock::ZW, "- zi(b,a) zi(d,c) u(Z:a,Zb:d,Z:i) u(Z:c,Zb:b,Wb:k) wi(k,j)"},
    {22, QBlock::ZW, "+ u(Z:i,Wb:k) wi(k,l) wi(p,j) zi(b,a) zi(d,c) u(Z:a,Zb:d,W:l) u(Z:c,Zb:b,Wb:p)"},
    {23, QBlock::ZW, "+ zi(b,a) u(Z:i,Wb:k,Z:a) wi(k,p) u(W:p,Wb:q,Zb:b) wi(q,j)"},
    {24, QBlock::ZW, "+ zi(b,a) u(Z:i,Wb:k,Zb:b) wi(k,p) u(W:p,Wb:q,Z:a) wi(q,j)"},
    {25, QBlock::ZW, "- zi(b,a) u(Z:i,Wb:k) wi(k,r) u(W:r,Wb:s,Zb:b) wi(s,p) u(W:p,Wb:q,Z:a) wi(q,j)"},
    {26, QBlock::ZW, "- zi(b,a) u(Z:i,Wb:k) wi(k,p) u(W:p,Wb:q,Z:a) wi(q,r) u(W:r,Wb:s,Zb:b) wi(s,j)"},
    {27, QBlock::ZW, "- wi(b,a) u(Z:i,Wb:k,Wb:b) wi(k,p) u(W:p,Wb:q,W:a) wi(q,j)"},
    {28, QBlock::ZW, "+ wi(b,a) u(Z:i,Wb:k) wi(k,r) u(W:r,Wb:s,Wb:b) wi(s,p) u(W:p,Wb:q,W:a) wi(q,j)"},
    {29, QBlock::WZ, "+ wi(i,p) wi(q,k) u(W:k,Zb:j) zi(b,a) zi(d,c) u(Z:a,Zb:d,W:p) u(Z:c,Zb:b,Wb:q)"},
    {30, QBlock::WZ, "- wi(i,k) zi(b,a) zi(d,c) u(Z:a,Zb:d,W:k) u(Z:c,Zb:b,Zb:j)"},
    {31, QBlock::WZ, "- zi(b,a) wi(i,r) u(W:r,Wb:s,Zb:b) wi(s,p) u(W:p,Wb:q,Z:a) wi(q,k) u(W:k,Zb:j)"},
    {32, QBlock::WZ, "- zi(b,a) wi(i,p) u(W:p,Wb:q,Z:a) wi(q,r) u(W:r,Wb:s,Zb:b) wi(s,k) u(W:k,Zb:j)"},
    {33, QBlock::WZ, "+ zi(b,a) wi(i,p) u(W:p,Wb:q,Z:a) wi(q,k) u(W:k,Zb:j,Zb:b)"},
    {34, QBlock::WZ, "+ zi(b,a) wi(i,p) u(W:p,Wb:q,Zb:b) wi(q,k) u(W:k,Zb:j,Z:a)"},
    {35, QBlock::WZ, "+ wi(b,a) wi(i,r) u(W:r,Wb:s,Wb:b) wi(s,p) u(W:p,Wb:q,W:a) wi(q,k) u(W:k,Zb:j)"},
    {36, QBlock::WZ, "- wi(b,a) wi(i,p) u(W:p,Wb:q,Wb:b) wi(q,k) u(W:k,Zb:j,W:a)"},
};

enum class Range { Z, W };
enum class Slot { Z, Zb, W, Wb };

struct Factor {
  enum Kind { U, ZInv, WInv } kind;
  std::vector<Slot> slots;
  std::vector<int> labels;
  int depth = 0;  // deepest label used
};

struct ParsedTerm {
  int id;
  QBlock block;
  std::string text;
  double sign;
  std::vector<Range> ranges;  // per label; 0 = i, 1 = j
  std::vector<Factor> factors;
  std::vector<std::vector<int>> at_depth;  // factor indices evaluated once label d is bound
};

ParsedTerm parse_term(const TermDef& def) {
  ParsedTerm t;
  t.id = def.id;
  t.block = def.block;
  t.text = def.text;
  std::map<std::string, int> label_id{{"i", 0}, {"j", 1}};
  std::vector<std::optional<Range>> ranges(2);
  switch (def.block) {
    case QBlock::ZZ: ranges[0] = Range::Z; ranges[1] = Range::Z; break;
    case QBlock::WW: ranges[0] = Range::W; ranges[1] = Range::W; break;
    case QBlock::ZW: ranges[0] = Range::Z; ranges[1] = Range::W; break;
    case QBlock::WZ: ranges[0] = Range::W; ranges[1] = Range::Z; break;
  }
  auto label = [&](const std::string& name, Range r) {
    auto it = label_id.find(name);
    int id;
    if (it == label_id.end()) {
      id = static_cast<int>(ranges.size());
      label_id.emplace(name, id);
      ranges.emplace_back(r);
    } else {
      id = it->second;
    }
    if (ranges[static_cast<std::size_t>(id)] != r)
      throw std::logic_error("term " + std::to_string(def.id) + ": index " + name + " used with two ranges");
    return id;
  };

  std::istringstream in(def.text);
  std::string tok;
  in >> tok;
  if (tok != "+" && tok != "-") throw std::logic_error("term must start with a sign");
  t.sign = tok == "+" ? 1.0 : -1.0;
  while (in >> tok) {
    const auto open = tok.find('('), close = tok.rfind(')');
    const std::string head = tok.substr(0, open);
    std::vector<std::string> args;
    std::stringstream as(tok.substr(open + 1, close - open - 1));
    for (std::string a; std::getline(as, a, ',');) args.push_back(a);
    Factor f{};
    if (head == "zi" || head == "wi") {
      f.kind = head == "zi" ? Factor::ZInv : Factor::WInv;
      const Range r = head == "zi" ? Range::Z : Range::W;
      for (const auto& a : args) f.labels.push_back(label(a, r));
    } else if (head == "u") {
      f.kind = Factor::U;
      for (const auto& a : args) {
        const auto colon = a.find(':');
        const std::string s = a.substr(0, colon), name = a.substr(colon + 1);
        Slot slot = s == "Z" ? Slot::Z : s == "Zb" ? Slot::Zb : s == "W" ? Slot::W : Slot::Wb;
        if (s != "Z" && s != "Zb" && s != "W" && s != "Wb") throw std::logic_error("bad slot " + a);
        f.slots.push_back(slot);
        f.labels.push_back(label(name, (slot == Slot::Z || slot == Slot::Zb) ? Range::Z : Range::W));
      }
    } else {
      throw std::logic_error("bad factor " + tok);
    }
    t.factors.push_back(std::move(f));
  }
  for (const auto& r : ranges) t.ranges.push_back(*r);
  t.at_depth.assign(t.ranges.size(), {});
  for (std::size_t fi = 0; fi < t.factors.size(); ++fi) {
    auto& f = t.factors[fi];
    f.depth = 1;
    for (int lbl : f.labels) f.depth = std::max(f.depth, lbl);
    t.at_depth[static_cast<std::size_t>(f.depth)].push_back(static_cast<int>(fi));
  }
  return t;
}

const std::vector<ParsedTerm>& parsed_terms() {
  static const std::vector<ParsedTerm> terms = [] {
    std::vector<ParsedTerm> v;
    for (const auto& d : kTermDefs) v.push_back(parse_term(d));
    return v;
  }();
  return terms;
}

struct QContext {
  int k, l;
  MatC Ainv, Cinv;
  std::vector<cdouble> d2, d3;  // Wirtinger derivatives by slot index
  int ns;

  int slot_index(Slot s, int v) const {
    switch (s) {
      case Slot::Z: return 2 * v;
      case Slot::Zb: return 2 * v + 1;
      case Slot::W: return 2 * (k + v);
      case Slot::Wb: return 2 * (k + v) + 1;
    }
    return 0;
  }

  cdouble factor(const Factor& f, const std::vector<int>& bind) const {
    switch (f.kind) {
      case Factor::ZInv: return Ainv(bind[static_cast<std::size_t>(f.labels[0])], bind[static_cast<std::size_t>(f.labels[1])]);
      case Factor::WInv: return Cinv(bind[static_cast<std::size_t>(f.labels[0])], bind[static_cast<std::size_t>(f.labels[1])]);
      case Factor::U: {
        int idx[3];
        for (std::size_t s = 0; s < f.slots.size(); ++s)
          idx[s] = slot_index(f.slots[s], bind[static_cast<std::size_t>(f.labels[s])]);
        if (f.slots.size() == 2) return d2[static_cast<std::size_t>(idx[0] * ns + idx[1])];
        return d3[static_cast<std::size_t>((idx[0] * ns + idx[1]) * ns + idx[2])];
      }
    }
    return 0.0;
  }
};

cdouble contract(const ParsedTerm& t, const QContext& c, std::vector<int>& bind, std::size_t depth, cdouble acc) {
  if (depth == t.ranges.size()) return acc;
  const int range = t.ranges[depth] == Range::Z ? c.k : c.l;
  cdouble sum = 0.0;
  for (int v = 0; v < range; ++v) {
    bind[depth] = v;
    cdouble p = acc;
    for (int fi : t.at_depth[depth]) p *= c.factor(t.factors[static_cast<std::size_t>(fi)], bind);
    if (p == 0.0) continue;
    sum += contract(t, c, bind, depth + 1, p);
  }
  return sum;
}

QContext make_context(const WirtingerTable& table) {
  if (table.jet.order() < 3) throw InvalidArgument("Q needs third derivatives");
  QContext c;
  c.k = table.k;
  c.l = table.l;
  const auto b = complex_blocks(table);
  // conditioning guards on both blocks
  inverse_and_logdet(HermitianMatrix(b.A));
  inverse_and_logdet(HermitianMatrix(MatC(-b.C)));
  c.Ainv = b.A.inverse();
  c.Cinv = b.C.inverse();
  c.ns = 2 * (c.k + c.l);
  const auto ns = static_cast<std::size_t>(c.ns);
  c.d2.resize(ns * ns);
  c.d3.resize(ns * ns * ns);
  for (int a = 0; a < c.ns; ++a)
    for (int b2 = 0; b2 < c.ns; ++b2) {
      c.d2[static_cast<std::size_t>(a * c.ns + b2)] = table.d({a, b2});
      for (int e = 0; e < c.ns; ++e) c.d3[static_cast<std::size_t>((a * c.ns + b2) * c.ns + e)] = table.d({a, b2, e});
    }
  return c;
}

MatC evaluate_term(const ParsedTerm& t, const QContext& c) {
  const int n = c.k + c.l;
  MatC M = MatC::Zero(n, n);
  const int ri = t.ranges[0] == Range::Z ? c.k : c.l;
  const int rj = t.ranges[1] == Range::Z ? c.k : c.l;
  const int oi = t.ranges[0] == Range::Z ? 0 : c.k;
  const int oj = t.ranges[1] == Range::Z ? 0 : c.k;
  std::vector<int> bind(t.ranges.size(), 0);
  for (int i = 0; i < ri; ++i)
    for (int j = 0; j < rj; ++j) {
      bind[0] = i;
      bind[1] = j;
      cdouble acc = t.sign;
      for (int fi : t.at_depth[0]) acc *= c.factor(t.factors[static_cast<std::size_t>(fi)], bind);
      for (int fi : t.at_depth[1]) acc *= c.factor(t.factors[static_cast<std::size_t>(fi)], bind);
      const cdouble v = acc == 0.0 ? 0.0 : contract(t, c, bind, 2, acc);
      // the ww block is written with its free indices in (wbar, w) order
      if (t.block == QBlock::WW)
        M(oj + j, oi + i) = v;
      else
        M(oi + i, oj + j) = v;
    }
  return M;
}

}  // namespace

const std::array<std::vector<int>, 4>& q_groups() {
  static const std::array<std::vector<int>, 4> g = {{{1, 2, 3, 4, 17, 21, 22, 29, 30},
                                                     {5, 6, 9, 10, 19, 23, 26, 32, 33},
                                                     {7, 8, 11, 12, 18, 24, 25, 31, 34},
                                                     {13, 14, 15, 16, 20, 27, 28, 35, 36}}};
  return g;
}

namespace {

struct RawTerms {
  std::array<MatC, kQTerms + 1> terms;
  MatC sum;
};

RawTerms raw_terms(const WirtingerTable& table) {
  const QContext c = make_context(table);
  const int n = c.k + c.l;
  RawTerms r;
  r.sum = MatC::Zero(n, n);
  r.terms[0] = MatC::Zero(n, n);
  for (const auto& t : parsed_terms()) {
    r.terms[static_cast<std::size_t>(t.id)] = evaluate_term(t, c);
    r.sum += r.terms[static_cast<std::size_t>(t.id)];
  }
  return r;
}

}  // namespace

MatC raw_Q(const WirtingerTable& table) { return raw_terms(table).sum; }

QTensor assemble_Q(const WirtingerTable& table) {
  auto r = raw_terms(table);
  QTensor q;
  q.hermitian_defect = hermitian_defect(r.sum);
  const double scale = std::max(1.0, r.sum.cwiseAbs().maxCoeff());
  if (q.hermitian_defect > 1e-10 * scale)
    throw NotHermitian("assembled Q not Hermitian (defect " + std::to_string(q.hermitian_defect) + ")");
  q.Q = HermitianMatrix(r.sum, 1e-10);
  for (const auto& t : parsed_terms()) {
    const auto& m = r.terms[static_cast<std::size_t>(t.id)];
    q.provenance.push_back({t.id, t.block, t.text, m.size() ? m.cwiseAbs().maxCoeff() : 0.0});
  }
  q.terms = std::move(r.terms);
  return q;
}

std::array<double, 4> group_spectra(const QTensor& q) {
  std::array<double, 4> out{};
  const auto& groups = q_groups();
  for (std::size_t g = 0; g < 4; ++g) {
    MatC s = MatC::Zero(q.Q.dim(), q.Q.dim());
    for (int id : groups[g]) s += q.terms[static_cast<std::size_t>(id)];
    const MatC h = 0.5 * (s + s.adjoint());
    out[g] = min_max_eigenvalues(HermitianMatrix(h)).second;
  }
  return out;
}

double subsolution_spectrum(const WirtingerTable& table) { return min_max_eigenvalues(assemble_Q(table).Q).second; }

double evolution_residual(const WirtingerTable& table) {
  const auto oracle = evolution_oracle(table);
  const auto q = assemble_Q(table);
  return (oracle.lhs - q.Q.matrix()).cwiseAbs().maxCoeff();
}

namespace {

WirtingerTable table_at(const ExpressionSpec& spec, const std::vector<double>& point) {
  if (spec.flavor != Flavor::Complex) throw InvalidArgument("expected a complex-flavor expression");
  return wirtinger_from_real(evaluate_jet(spec, point, 0.0, {4, false}));
}

}  // namespace

double evolution_residual(const ExpressionSpec& spec, const std::vector<double>& point) {
  return evolution_residual(table_at(spec, point));
}

double heat_residual(const WirtingerTable& table) { return evolution_oracle(table).heat; }

double heat_residual(const ExpressionSpec& spec, const std::vector<double>& point) {
  if (spec.flavor == Flavor::Real) return heat_residual(table_at(complexify_real(spec), complexify_point(point)));
  return heat_residual(table_at(spec, point));
}

ExpressionSpec complexify_real(const ExpressionSpec& spec) {
  if (spec.flavor != Flavor::Real) throw InvalidArgument("complexify_real expects a real-flavor expression");
  const int n = spec.dim();
  const auto rows = static_cast<std::size_t>(n + 1), cols = static_cast<std::size_t>(2 * n + 1);
  std::vector<std::vector<double>> S(rows, std::vector<double>(cols, 0.0));
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) S[i][2 * i] = 1.0;
  S[rows - 1][cols - 1] = 1.0;
  return linear_substitution(spec, S, {}, spec.k, spec.l, Flavor::Complex);
}

std::vector<double> complexify_point(const std::vector<double>& point) {
  std::vector<double> out;
  for (double x : point) {
    out.push_back(x);
    out.push_back(0.0);
  }
  return out;
}

RealReduction real_reduction(const ExpressionSpec& real_spec, const std::vector<double>& point) {
  const int k = real_spec.k, l = real_spec.l;
  const auto rjet = evaluate_jet(real_spec, point, 0.0, {4, false});
  const auto v = complexify_real(real_spec);
  const auto table = table_at(v, complexify_point(point));

  MatR D = MatR::Zero(k + l, k + l);
  for (int i = 0; i < k; ++i) D(i, i) = 0.5;
  for (int i = 0; i < l; ++i) D(k + i, k + i) = 2.0;

  RealReduction r;
  const MatR Wu = real_W(rjet).matrix();
  const MatC Wv = complex_W(table).matrix();
  r.W_residual = (Wv - (D * Wu * D).cast<cdouble>()).cwiseAbs().maxCoeff();

  const auto oracle = real_evolution_oracle(rjet);
  const MatC Qv = assemble_Q(table).Q.matrix();
  r.Q_residual = (Qv - (D * oracle.lhs * D).cast<cdouble>()).cwiseAbs().maxCoeff();
  r.real_lambda_max = min_max_eigenvalues(SymmetricMatrix(oracle.lhs, 1e-9)).second;

  r.F_residual = std::abs(eval_F_complex(table) - eval_F_real(rjet) - (l - k) * std::log(4.0));
  return r;
}

}  // namespace tma
