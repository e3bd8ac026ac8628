#include <memory>
#include <random>

#include "doctest.h"
#include "mklab/advdiff.hpp"
#include "mklab/rng.hpp"
#include "mklab/spectral_ops.hpp"
#include "test_util.hpp"

using namespace mklab;
using namespace mklab::test;

namespace {

DriftProvider zero_drift(const GridSpec& g) {
  auto u = std::make_shared<PeriodicField>(g, Rank::vector);
  return static_drift(u);
}

DriftProvider shear_drift(const GridSpec& g, double amp = 1.0) {
  auto u = std::make_shared<PeriodicField>(sample_vector(
      g, [amp](double, double y, double) { return Eigen::Vector3d(amp * std::sin(y), 0, 0); }));
  return static_drift(u);
}

}  // namespace

TEST_CASE("pure heat decay of a single mode is the exact exponential") {
  GridSpec g(32);
  auto rho0 = sample_scalar(g, [](double x, double, double) { return std::cos(x); });
  auto run = solve_advdiff(rho0, zero_drift(g), DiffusivitySpec::constant(0.1), 1.0);
  const double expect = std::exp(-0.1) * l2_norm(rho0);
  CHECK(std::abs(l2_norm(run.rho) - expect) <= 1e-8 * expect);
}

TEST_CASE("constant data stay constant; means conserved to 1e-12") {
  GridSpec g(16);
  PeriodicField rho0(g, Rank::scalar);
  rho0.c[0].setConstant(1.7);
  auto run = solve_advdiff(rho0, shear_drift(g), DiffusivitySpec::constant(0.05), 0.5);
  CHECK(max_abs_diff(run.rho, rho0) <= 1e-12);

  auto rho1 = random_scalar(g, 8);
  rho1.c[0] += 0.3;
  auto run2 = solve_advdiff(rho1, shear_drift(g), DiffusivitySpec::constant(0.05), 0.5);
  CHECK(run2.mean_drift_error <= 1e-12);
}

TEST_CASE("energy identity closes to 1e-6 relative on a generic run") {
  GridSpec g(32);
  auto rho0 = random_scalar(g, 9, 6, 3.0);
  auto u = std::make_shared<PeriodicField>(random_solenoidal(g, 21, 5, 3.0));
  auto kap = std::make_shared<PeriodicField>(sample_scalar(
      g, [](double x, double y, double) { return 0.08 + 0.03 * std::sin(x) * std::cos(y); }));
  auto diff = DiffusivitySpec::scalar([kap](double) { return *kap; });
  auto run = solve_advdiff(rho0, static_drift(u), diff, 0.5);
  CHECK(run.energy_defect <= 1e-6);
  CHECK(run.mean_drift_error <= 1e-12);
  // ledger consistency: D(T) = (|rho_in|^2 - |rho(T)|^2)/2
  const double lhs = run.ledger.final_dissipation();
  const double rhs = 0.5 * (run.ledger.l2sq.front() - run.ledger.l2sq.back());
  CHECK(std::abs(lhs - rhs) <= 1e-6 * run.ledger.l2sq.front());
}

TEST_CASE("drift with nonzero divergence is rejected") {
  GridSpec g(16);
  auto rho0 = random_scalar(g, 3);
  auto u = std::make_shared<PeriodicField>(grad(random_scalar(g, 4)));
  CHECK_THROWS_AS(
      (void)solve_advdiff(rho0, static_drift(u), DiffusivitySpec::constant(0.1), 0.1),
      PreconditionError);
}

TEST_CASE("non-elliptic diffusivity is rejected") {
  GridSpec g(16);
  auto rho0 = random_scalar(g, 3);
  auto kap = std::make_shared<PeriodicField>(sample_scalar(
      g, [](double x, double, double) { return 0.01 + 0.02 * std::sin(x); }));
  auto diff = DiffusivitySpec::scalar([kap](double) { return *kap; });
  CHECK_THROWS_AS((void)solve_advdiff(rho0, zero_drift(g), diff, 0.1), PreconditionError);
}

TEST_CASE("measured convergence order under dt-halving is at least 3.8") {
  GridSpec g(32);
  auto rho0 = random_scalar(g, 10, 5, 3.0);
  auto u = std::make_shared<PeriodicField>(random_solenoidal(g, 11, 4, 3.0));
  auto kap = std::make_shared<PeriodicField>(sample_scalar(
      g, [](double x, double, double) { return 0.1 + 0.04 * std::cos(x); }));
  auto diff = DiffusivitySpec::scalar([kap](double) { return *kap; });
  const double T = 0.2;
  SolveOptions o;
  auto at = [&](double dt) {
    o.dt = dt;
    return solve_advdiff(rho0, static_drift(u), diff, T, o).rho;
  };
  PeriodicField ref = at(T / 256);
  const double e1 = l2_norm(at(T / 16) - ref);
  const double e2 = l2_norm(at(T / 32) - ref);
  const double order = std::log2(e1 / e2);
  INFO("e1=", e1, " e2=", e2, " order=", order);
  CHECK(order >= 3.8);
}

TEST_CASE("heat-semigroup gradient dissipation is monotone without drift") {
  GridSpec g(32);
  auto rho0 = random_scalar(g, 12, 6, 3.0);
  SolveOptions o;
  o.snapshots = 6;
  auto run = solve_advdiff(rho0, zero_drift(g), DiffusivitySpec::constant(0.05), 0.8, o);
  PeriodicField ones(g, Rank::scalar);
  ones.c[0].setConstant(1.0);
  auto series = weighted_norm_ledger(run, ones, 1);
  for (size_t i = 1; i < series[1].size(); ++i)
    CHECK(series[1][i] <= series[1][i - 1] * (1 + 1e-12));
}

TEST_CASE("weighted ledger: single mode gives kbar |k|^2 |rho|^2 exactly") {
  GridSpec g(32);
  auto rho = sample_scalar(g, [](double, double y, double) { return std::sin(2.0 * y); });
  ScalarRun run;
  run.rho = rho;
  PeriodicField kbar(g, Rank::scalar);
  kbar.c[0].setConstant(0.3);
  auto series = weighted_norm_ledger(run, kbar, 2);
  REQUIRE(series.size() == 3);
  const double r2 = l2_norm(rho) * l2_norm(rho);
  CHECK(series[0].back() == doctest::Approx(r2).epsilon(1e-12));
  CHECK(series[1].back() == doctest::Approx(0.3 * 4.0 * r2).epsilon(1e-12));
  CHECK(series[2].back() == doctest::Approx(0.09 * 16.0 * r2).epsilon(1e-12));
  for (auto& s : series)
    for (double v : s) CHECK(v >= 0.0);
}

TEST_CASE("compare_elliptic: identical tensors give zero gaps and epsilon") {
  GridSpec g(16);
  auto rho0 = random_scalar(g, 5);
  auto A = DiffusivitySpec::constant(0.1);
  auto rep = compare_elliptic(rho0, shear_drift(g, 0.5), A, A, 0.3);
  CHECK(rep.epsilon == 0.0);
  CHECK(rep.sup_gap <= 1e-24);
  CHECK(rep.diss_gap <= 1e-16);
}

TEST_CASE("compare_elliptic: scalar scaling gives the exact epsilon and valid bounds") {
  GridSpec g(32);
  auto rho0 = random_scalar(g, 6, 5, 3.0);
  auto A1 = DiffusivitySpec::constant(0.1);
  auto A2 = DiffusivitySpec::constant(0.1 * 1.05);
  auto rep = compare_elliptic(rho0, shear_drift(g, 0.5), A1, A2, 0.4);
  CHECK(rep.epsilon == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(rep.sup_ok);
  CHECK(rep.diss_ok);
}

TEST_CASE("compare_elliptic: hypothesis guard at epsilon > 1/10") {
  GridSpec g(16);
  auto rho0 = random_scalar(g, 5);
  auto A1 = DiffusivitySpec::constant(0.1);
  auto A2 = DiffusivitySpec::constant(0.15);
  CHECK_THROWS_AS((void)compare_elliptic(rho0, zero_drift(g), A1, A2, 0.1),
                  HypothesisError);
}

TEST_CASE("compare_elliptic: random perturbed tensors satisfy both inequalities") {
  GridSpec g(32);
  std::mt19937_64 seeds(31337);
  for (int trial = 0; trial < 5; ++trial) {
    const std::uint64_t s = seeds();
    auto rho0 = random_scalar(g, s ^ 1, 5, 3.0);
    auto u = std::make_shared<PeriodicField>(random_solenoidal(g, s ^ 2, 4, 3.0));
    auto base = std::make_shared<PeriodicField>(random_scalar(g, s ^ 3, 3, 2.0));
    base->c[0] = 0.1 + 0.02 * base->c[0] / std::max(1.0, base->c[0].abs().maxCoeff());
    auto pert = std::make_shared<PeriodicField>(random_scalar(g, s ^ 4, 3, 2.0));
    pert->c[0] = 1.0 + 0.02 * pert->c[0] / std::max(1.0, pert->c[0].abs().maxCoeff());
    auto A1 = DiffusivitySpec::scalar([base](double) { return *base; });
    auto A2 = DiffusivitySpec::scalar([base, pert](double) {
      PeriodicField k = *base;
      k.c[0] *= pert->c[0];
      return k;
    });
    auto rep = compare_elliptic(rho0, static_drift(u), A1, A2, 0.3);
    INFO("trial ", trial, " epsilon=", rep.epsilon);
    CHECK(rep.epsilon <= 0.03);
    CHECK(rep.sup_ok);
    CHECK(rep.diss_ok);
  }
}
