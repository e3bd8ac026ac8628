#include <memory>

#include "doctest.h"
#include "mklab/pipeline.hpp"
#include "mklab/spectral_ops.hpp"
#include "test_util.hpp"

using namespace mklab;
using namespace mklab::test;

namespace {

ParamConfig desk_params(double beta = 0.25, double b = 1.1, double a = 2.0) {
  ParamConfig cfg;
  cfg.a = a;
  cfg.b = b;
  cfg.beta = beta;
  auto_fill(cfg);
  return cfg;
}

}  // namespace

TEST_CASE("poincare length of the grid is one") {
  CHECK(ell0_from_grid(GridSpec(16)) == doctest::Approx(1.0).epsilon(1e-12));
  GridSpec g(16);
  auto rho = sample_scalar(g, [](double x, double, double) { return std::cos(x); });
  CHECK(ell_in_of(rho) == doctest::Approx(1.0).epsilon(1e-12));
  auto rho3 = sample_scalar(g, [](double, double y, double) { return std::sin(3 * y); });
  CHECK(ell_in_of(rho3) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("inertial index: large-T limit, monotone scan, datum monotonicity") {
  ParamConfig p = desk_params();
  // T -> infinity: the condition reduces to 10 C_N / ell_in <= lambda_q
  const double C_N = 0.8;
  InertialChoice big = choose_inertial_index(p, 1.0, 1e9, C_N, 0, 8);
  int expect = -1;
  for (int q = 0; q <= 8; ++q)
    if (stage(p, q).lambda >= 10.0 * C_N) {
      expect = q;
      break;
    }
  CHECK(big.q_I == expect);
  CHECK(big.monotone);

  // f(lambda) = lambda^2 (1 - exp(-2 lambda^{-b theta})) strictly increasing
  const double btheta = p.b * theta_of(p.beta, p.b);
  double prev = 0.0;
  for (double L = 1.0; L <= 1e6; L *= 1.3) {
    const double f = L * L * (1.0 - std::exp(-2.0 * std::pow(L, -btheta)));
    CHECK(f > prev);
    prev = f;
  }

  // doubling ell_in never increases q_I
  InertialChoice a1 = choose_inertial_index(p, 0.5, 0.5, C_N, 0, 12);
  InertialChoice a2 = choose_inertial_index(p, 1.0, 0.5, C_N, 0, 12);
  CHECK(a2.q_I <= a1.q_I);
  CHECK_THROWS_AS(
      (void)choose_inertial_index(p, 1e-9, 1e-6, C_N, 0, 3), StageRangeError);
}

TEST_CASE("datum mollification: zero, flatness, change bound") {
  GridSpec g(32);
  ParamConfig p = desk_params(0.25, 1.1, 3.0);
  PeriodicField zero(g, Rank::scalar);
  MollifyReport rep;
  CHECK(linf_norm(mollify_datum(zero, p, 1, &rep)) == 0.0);

  auto rho = sample_scalar(g, [](double x, double, double) { return std::cos(x); });
  PeriodicField out = mollify_datum(rho, p, 2, &rep);
  // single low mode: relative change bounded by the symbol flatness at r|k|
  DeepKernel k(p.Ntilde, rep.r);
  const double flat = std::abs(k.symbol(rep.r) - 1.0);
  CHECK(l2_norm(out - rho) <= flat * l2_norm(rho) * (1.0 + 1e-12));
  CHECK(rep.change <= rep.bound * (1.0 + 1e-12));
  REQUIRE(rep.h_norms.size() == 5);
  CHECK(rep.h_norms[0] == doctest::Approx(l2_norm(out)).epsilon(1e-10));

  PeriodicField biased = rho;
  biased.c[0] += 1.0;
  CHECK_THROWS_AS((void)mollify_datum(biased, p, 1, nullptr), PreconditionError);
}

TEST_CASE("synthetic drift: divergence-free layered cascade with a guard") {
  GridSpec g(32);
  ExperimentConfig cfg;
  cfg.params = desk_params();
  cfg.n = 32;
  cfg.q_lo = 0;
  cfg.q_hi = 2;
  MikadoFamily fam = build_profiles(build_shear_direction_set(), g);
  PeriodicField u = synthetic_drift(cfg, fam, 2);
  CHECK(linf_norm(div(u)) <= 1e-10 * linf_norm(u));
  for (int c = 0; c < 3; ++c) CHECK(std::abs(u.mean(c)) <= 1e-12);
  ExperimentConfig tight = cfg;
  tight.max_layer_freq = 2;
  CHECK_THROWS_AS((void)synthetic_drift(tight, fam, 2), ResolutionError);
}

TEST_CASE("dissipation sweep: heat-kernel exactness without drift") {
  ExperimentConfig cfg;
  cfg.params = desk_params(0.25, 1.1, 2.0);
  cfg.n = 32;
  cfg.q_lo = 0;
  cfg.q_hi = 2;
  cfg.T = 0.4;
  cfg.amplitude = 0.0;  // drift-free: per-mode heat decay is exact
  PipelineReport rep = dissipation_sweep(cfg);
  REQUIRE(rep.Dq.size() == 3);
  CHECK(rep.ell0 == doctest::Approx(1.0).epsilon(1e-12));
  for (size_t i = 0; i < rep.Dq.size(); ++i) {
    const StageParams sp = stage(cfg.params, rep.qs[i]);
    // datum is cos(x1) mollified; lowest-mode mass decays at exp(-2 kappa t)
    CHECK(rep.floor_ok[i]);
    const double expect = rep.poincare_floor[i];
    CHECK(rep.Dq[i] == doctest::Approx(expect).epsilon(1e-6));
    (void)sp;
  }
  // ratios track kappa alone: D_{q+1}/D_q ~ (1 - e^{-2 k_{q+1} T})/(1 - e^{-2 k_q T})
  for (size_t i = 0; i + 1 < rep.Dq.size(); ++i) {
    const double k0 = stage(cfg.params, rep.qs[i]).kappa;
    const double k1 = stage(cfg.params, rep.qs[i + 1]).kappa;
    const double expect = (1.0 - std::exp(-2.0 * k1 * cfg.T)) /
                          (1.0 - std::exp(-2.0 * k0 * cfg.T));
    CHECK(rep.ratios[i] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("dissipation sweep: active cascade respects the floor and reports gaps") {
  ExperimentConfig cfg;
  cfg.params = desk_params(0.25, 1.1, 2.0);
  cfg.n = 32;
  cfg.q_lo = 0;
  cfg.q_hi = 2;
  cfg.T = 0.4;
  cfg.amplitude = 0.6;
  PipelineReport rep = dissipation_sweep(cfg);
  for (size_t i = 0; i < rep.Dq.size(); ++i) {
    CHECK(rep.floor_ok[i]);
    CHECK(rep.Dq[i] > rep.poincare_floor[i]);
  }
  CHECK(rep.stability_gap.size() == rep.ratios.size());
  CHECK(rep.c0_measured > 0.0);
  CHECK(rep.c0_predicted > 0.0);
}

TEST_CASE("richardson: drift-free fit slope is near one") {
  ExperimentConfig cfg;
  cfg.params = desk_params(0.25, 1.1, 2.0);
  cfg.n = 32;
  cfg.q_lo = 0;
  cfg.q_hi = 3;
  cfg.amplitude = 0.0;
  // D(T)/|rho|^2 = (1 - e^{-2 kappa T})/2 ~ kappa T for small T
  RichardsonFit fit = richardson_diagnostic(cfg, {0.02, 0.05, 0.1, 0.2}, 10.0);
  INFO("slope ", fit.slope);
  CHECK_FALSE(fit.degenerate);
  CHECK(fit.slope == doctest::Approx(1.0).epsilon(0.25));
  CHECK_THROWS_AS(
      (void)richardson_diagnostic(cfg, {0.1, 0.2, 0.3}, 0.35), PreconditionError);
  CHECK_THROWS_AS(
      (void)richardson_diagnostic(cfg, {0.1, 0.12, 0.15, 0.2}, 0.35), PreconditionError);
}

TEST_CASE("enhanced dissipation on the reference one-stripe configuration") {
  // sigma chosen so the predicted enhancement is about 3x
  const double kappa = 0.05, N = 4.0;
  const double sigma = 2.0 * N * N * kappa * kappa;  // gain 1 for the shear family
  EnhancementReport rep = enhanced_dissipation_reference(32, int(N), kappa, sigma, 1.0);
  INFO("measured ", rep.measured, " predicted ", rep.predicted, " rel_err ", rep.rel_err);
  CHECK(rep.measured >= 2.0);
  CHECK(rep.rel_err <= 0.25);
}
