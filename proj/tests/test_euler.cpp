#include "doctest.h"
#include "mklab/euler.hpp"
#include "mklab/rng.hpp"
#include "mklab/spectral_ops.hpp"
#include "test_util.hpp"

using namespace mklab;
using namespace mklab::test;

TEST_CASE("unidirectional shear is a stationary Euler solution") {
  GridSpec g(32);
  auto u0 = sample_vector(
      g, [](double, double y, double) { return Eigen::Vector3d(std::sin(y), 0, 0); });
  EulerOptions o;
  o.enforce_guard = false;
  EulerMarch m(u0, 0.0, o);
  m.advance_to(0.5);
  CHECK(max_abs_diff(m.velocity(), u0) <= 1e-8);
}

TEST_CASE("ABC flow is stationary over a turnover time (Beltrami)") {
  GridSpec g(32);
  auto u0 = sample_vector(g, [](double x, double y, double z) {
    return Eigen::Vector3d(std::sin(z) + std::cos(y), std::sin(x) + std::cos(z),
                           std::sin(y) + std::cos(x));
  });
  EulerOptions o;
  o.enforce_guard = false;
  EulerMarch m(u0, 0.0, o);
  m.advance_to(1.0);
  CHECK(max_abs_diff(m.velocity(), u0) <= 1e-6 * linf_norm(u0));
  // Bernoulli pressure of a Beltrami flow: p = -|u|^2/2 up to the mean
  PeriodicField p = m.pressure();
  PeriodicField expect(g, Rank::scalar);
  expect.c[0] = -0.5 * (u0.c[0].square() + u0.c[1].square() + u0.c[2].square());
  expect.c[0] -= expect.c[0].mean();
  dealias_inplace(expect);
  CHECK(max_abs_diff(p, expect) <= 1e-6);
}

TEST_CASE("energy conserved to 1e-6 relative for a random small field") {
  GridSpec g(32);
  PeriodicField u0 = random_solenoidal(g, 42, 4, 2.5);
  u0 *= 0.2 / std::max(1.0, linf_norm(u0));
  EulerOptions o;
  o.enforce_guard = false;
  EulerMarch m(u0, 0.0, o);
  m.advance_to(1.0);
  CHECK(std::abs(m.kinetic_energy() - m.initial_energy()) <=
        1e-6 * m.initial_energy());
  CHECK(linf_norm(div(m.velocity())) <= 1e-10 * linf_norm(m.velocity()));
}

TEST_CASE("span guard rejects long horizons; backward marching works") {
  GridSpec g(16);
  auto u0 = sample_vector(
      g, [](double, double y, double) { return Eigen::Vector3d(4.0 * std::sin(y), 0, 0); });
  EulerOptions o;
  o.guard_c = 0.4;
  EulerMarch m(u0, 0.0, o);
  CHECK_THROWS_AS(m.advance_to(10.0), PreconditionError);

  EulerOptions o2;
  o2.enforce_guard = false;
  EulerMarch fw(u0, 0.0, o2);
  fw.advance_to(0.05);
  fw.advance_to(0.0);
  CHECK(max_abs_diff(fw.velocity(), u0) <= 1e-9);
}

TEST_CASE("velocity tendency vanishes for stationary solutions") {
  GridSpec g(32);
  auto u0 = sample_vector(
      g, [](double, double y, double) { return Eigen::Vector3d(std::sin(y), 0, 0); });
  EulerOptions o;
  o.enforce_guard = false;
  EulerMarch m(u0, 0.0, o);
  CHECK(linf_norm(m.velocity_tendency()) <= 1e-11);
}
