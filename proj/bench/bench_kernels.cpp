// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <numbers>
#include <vector>

#include "tma/expression.hpp"
#include "tma/solver.hpp"

namespace {

tma::FlowField torus_field(int nodes) {
  tma::ExpressionSpec p{1, 1, tma::Flavor::Real, nullptr};
  p.root = tma::make_node(tma::Sum{{tma::make_node(tma::Scale{0.05, tma::make_node(tma::Atom{tma::AtomFn::Sin, {1.0, 0.0}, 0.3, 1.0})}),
                                    tma::make_node(tma::Scale{-0.04, tma::make_node(tma::Atom{tma::AtomFn::Cos, {1.0, 1.0}, 0.1, 1.0})})}});
  const auto g = tma::make_grid(2, nodes, 0.0, 2.0 * std::numbers::pi, true);
  const auto base = tma::diagonal_quadratic(1, 1, tma::Flavor::Real, 1.0, 1.0);
  auto f = tma::make_field(g, tma::Flavor::Real, 1, 1, tma::periodic_boundary(base), p, 0.0, 1.0, 0.5, 2.0);
  f.dt = f.max_explicit_dt();
  return f;
}

tma::FlowField complex_field(int nodes) {
  const auto g = tma::make_grid(4, nodes, -1.0, 1.0, false, 2);
  const auto u = tma::diagonal_quadratic(1, 1, tma::Flavor::Complex, 1.5, 1.0);
  auto f = tma::make_field(g, tma::Flavor::Complex, 1, 1, tma::frozen_boundary(u), u, 0.0, 1.0, 0.5, 2.0);
  f.dt = f.max_explicit_dt();
  return f;
}

template <tma::Execution Ex>
void BM_RealRhs(benchmark::State& state) {
  const auto f = torus_field(static_cast<int>(state.range(0)));
  std::vector<double> out;
  for (auto _ : state) {
    tma::flow_rhs(f, f.current().values, out, Ex);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.current().values.size()));
}

template <tma::Execution Ex>
void BM_ComplexRhs(benchmark::State& state) {
  const auto f = complex_field(static_cast<int>(state.range(0)));
  std::vector<double> out;
  for (auto _ : state) {
    tma::flow_rhs(f, f.current().values, out, Ex);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.current().values.size()));
}

template <tma::Execution Ex>
void BM_Rk4Step(benchmark::State& state) {
  auto f = torus_field(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    tma::step_parabolic(f, tma::Scheme::RK4, Ex);
    if (f.slices.size() > 2) f.slices.erase(f.slices.begin(), f.slices.end() - 1);
  }
}

}  // namespace

BENCHMARK(BM_RealRhs<tma::Execution::Serial>)->Arg(65)->Arg(129)->Arg(257)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_RealRhs<tma::Execution::Parallel>)->Arg(65)->Arg(129)->Arg(257)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ComplexRhs<tma::Execution::Serial>)->Arg(9)->Arg(17)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ComplexRhs<tma::Execution::Parallel>)->Arg(9)->Arg(17)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Rk4Step<tma::Execution::Serial>)->Arg(129)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Rk4Step<tma::Execution::Parallel>)->Arg(129)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
