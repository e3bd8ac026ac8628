#include <cmath>
#include <random>

#include "doctest.h"
#include "mklab/grid.hpp"
#include "mklab/schedule.hpp"

using namespace mklab;

namespace {
ParamConfig base_config(double beta = 0.25, double b = 1.1, double a = 5.0) {
  ParamConfig cfg;
  cfg.a = a;
  cfg.b = b;
  cfg.beta = beta;
  auto_fill(cfg);
  return cfg;
}
}  // namespace

TEST_CASE("validate: symmetric gamma choice at (beta,b)=(0.25,1.1) passes") {
  ParamConfig cfg = base_config();
  // (b-1)(1-(2b+1)beta)/(b(b+1)) = 0.1*0.2/2.31
  CHECK(cfg.gamma_T == doctest::Approx(0.02 / 2.31).epsilon(1e-12));
  CHECK(cfg.gamma_T == doctest::Approx(0.008658).epsilon(1e-4));
  auto rep = validate(cfg);
  for (const auto& c : rep.constraints) {
    INFO(c.name, " lhs=", c.lhs, " rhs=", c.rhs);
    CHECK(c.satisfied);
  }
  CHECK(rep.pass);
}

TEST_CASE("validate: boundary and out-of-range rejections") {
  ParamConfig cfg = base_config();
  cfg.beta = 1.0 / 3.0;
  auto rep = validate(cfg);
  CHECK_FALSE(rep.find("beta_lt_third")->satisfied);
  CHECK_FALSE(rep.pass);

  ParamConfig cfg2 = base_config();
  cfg2.b = 1.6;  // (1-beta)/(2 beta) = 1.5
  auto rep2 = validate(cfg2);
  CHECK_FALSE(rep2.find("b_lt_holder_limit")->satisfied);
}

TEST_CASE("validate: exact rational path is robust at the boundary") {
  RationalParams p;
  p.b = Rat(11, 10);
  p.beta = Rat(1, 3);  // exactly on the boundary: must reject
  p.gamma_T = p.gamma_R = p.gamma_E = Rat(1, 1000);
  p.gamma_L = Rat(1, 1000);
  p.alpha = Rat(1, 10000);
  p.Nbar = 2000;
  auto rep = validate_rational(p);
  CHECK_FALSE(rep.find("beta_lt_third")->satisfied);
  CHECK(rep.find("beta_lt_third")->exact);

  p.beta = Rat(1, 4);
  auto rep2 = validate_rational(p);
  CHECK(rep2.find("beta_lt_third")->satisfied);
}

TEST_CASE("stage: ceiling arithmetic and the paper-style value") {
  ParamConfig cfg;
  cfg.a = 5.0;
  cfg.b = 1.2;
  auto_fill(cfg);
  auto s1 = stage(cfg, 1);  // 5^1.2 = 6.8986... -> 7
  CHECK(s1.lambda == 7.0);
  CHECK(s1.lambda_paper == doctest::Approx(kTwoPi * 7.0).epsilon(1e-15));
  auto s0 = stage(cfg, 0);
  CHECK(s0.lambda == 5.0);
  CHECK(s0.lambda_paper == doctest::Approx(kTwoPi * 5.0).epsilon(1e-15));
}

TEST_CASE("stage: ideal-mode recursion kappa_q lambda_{q+1}^2 kappa_{q+1} = delta_{q+1}") {
  ParamConfig cfg = base_config();
  cfg.ideal_mode = true;
  cfg.a = 3.0;
  for (int q = 0; q <= 10; ++q) {
    auto sq = stage(cfg, q);
    auto sq1 = stage(cfg, q + 1);
    const double ratio = sq.kappa * sq1.lambda * sq1.lambda * sq1.kappa / sq1.delta;
    CHECK(std::abs(ratio - 1.0) <= 1e-12);
  }
}

TEST_CASE("stage: with the ceiling on, the recursion defect shrinks as a grows") {
  double prev = 1e9;
  for (double a : {10.0, 100.0, 1000.0}) {
    ParamConfig cfg = base_config(0.25, 1.1, a);
    auto s0 = stage(cfg, 0);
    auto s1 = stage(cfg, 1);
    const double defect =
        std::abs(s0.kappa * s1.lambda * s1.lambda * s1.kappa / s1.delta - 1.0);
    CHECK(defect < prev);
    prev = defect;
  }
  CHECK(prev <= 2e-3);
}

TEST_CASE("stage: scales strictly decreasing in q; overflow raises") {
  ParamConfig cfg = base_config();
  StageParams prev = stage(cfg, 0);
  for (int q = 1; q <= 6; ++q) {
    StageParams s = stage(cfg, q);
    CHECK(s.delta < prev.delta);
    CHECK(s.kappa < prev.kappa);
    CHECK(s.ell < prev.ell);
    CHECK(s.tau < prev.tau);
    prev = s;
  }
  ParamConfig big = base_config(0.25, 1.2, 10.0);
  big.full_theorem = false;
  CHECK_THROWS_AS((void)stage(big, 60), StageRangeError);
}

TEST_CASE("auto_gammas: value, re-validation, and beta->0 monotone limit") {
  auto g = auto_gammas(0.25, 1.1);
  CHECK(g.gamma_T == doctest::Approx(0.02 / 2.31).epsilon(1e-12));

  // returned values pass validate for a sample of admissible (beta, b)
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ub(0.02, 0.32), udb(0.0, 1.0);
  int tried = 0;
  while (tried < 50) {
    const double beta = ub(rng);
    const double bmax = std::min(std::sqrt(1.5), (1.0 - beta) / (2.0 * beta));
    const double b = 1.0 + udb(rng) * 0.95 * (bmax - 1.0);
    if (b <= 1.0001) continue;
    ++tried;
    ParamConfig cfg;
    cfg.a = 10.0;
    cfg.b = b;
    cfg.beta = beta;
    auto_fill(cfg);
    auto rep = validate(cfg);
    INFO("beta=", beta, " b=", b);
    CHECK(rep.pass);
  }

  // gamma_T -> (b-1)/(b(b+1)) monotonically as beta -> 0
  const double b = 1.1;
  const double limit = (b - 1.0) / (b * (b + 1.0));
  double prev = 0.0;
  for (double beta : {0.1, 0.01, 0.001}) {
    const double v = auto_gammas(beta, b).gamma_T;
    CHECK(v > prev);
    CHECK(v < limit);
    prev = v;
  }
  CHECK(limit - prev <= 0.01 * limit);
}

TEST_CASE("predicted_c0: exponents, Poincare length, saturation, domain error") {
  // b -> 1 limit of the small-time exponent is 2/(1-beta): 8/3 at beta = 1/4
  auto p = predicted_c0(0.25, 1.0 + 1e-9, 1.0, 0.5, 1.0, 0.1);
  CHECK(p.b_to_1_limit == doctest::Approx(8.0 / 3.0).epsilon(1e-12));
  CHECK(p.small_time_exponent == doctest::Approx(8.0 / 3.0).epsilon(1e-6));

  // frozen oracle value at (beta,b)=(0.25,1.1): theta = 2.2*1.25/2.1,
  // exponent = 2.2/(2 - 1.1*theta) = 3.93191...
  const double theta = 2.2 * 1.25 / 2.1;
  const double expo = 2.2 / (2.0 - 1.1 * theta);
  auto p2 = predicted_c0(0.25, 1.1, 1.0, 0.5, 1.0, 0.1);
  CHECK(p2.small_time_exponent == doctest::Approx(expo).epsilon(1e-12));
  CHECK(p2.small_time_exponent == doctest::Approx(3.9319).epsilon(1e-4));

  // very large T saturates at min(delta0, ell_in^{2b})/ell_in^2
  auto p3 = predicted_c0(0.25, 1.1, 1.0, 0.5, 0.05, 1e9);
  CHECK(p3.argmin != 0);
  CHECK(p3.value == doctest::Approx(std::min(0.05, std::pow(0.5, 2.2)) / 0.25));

  CHECK_THROWS_AS((void)predicted_c0(0.3, 1.4, 1.0, 0.5, 1.0, 0.1), DomainError);
}
