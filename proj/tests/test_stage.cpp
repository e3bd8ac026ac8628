#include <memory>

#include "doctest.h"
#include "mklab/fft.hpp"
#include "mklab/stage.hpp"
#include "test_util.hpp"

using namespace mklab;
using namespace mklab::test;

namespace {

ParamConfig desk_params() {
  ParamConfig cfg;
  cfg.a = 2.0;
  cfg.b = 1.1;
  cfg.beta = 0.25;
  auto_fill(cfg);
  return cfg;
}

}  // namespace

TEST_CASE("cutoffs: plateau, disjoint supports, exact partitions") {
  StageParams sp;
  sp.tau = 0.25;
  CutoffSystem cs = build_cutoffs(sp, GridSpec(32));
  CutoffReport rep = verify_cutoffs(cs, GridSpec(32));
  CHECK(rep.max_eta <= 1.0 + 1e-12);         // (i)
  CHECK(rep.max_overlap == 0.0);             // (ii)
  CHECK(rep.plateau_defect == 0.0);          // (iii)
  CHECK(rep.support_defect == 0.0);          // (iv) and eta~ eta = eta
  CHECK(rep.chi_partition_defect <= 1e-12);  // sum chi = sum eta~ = 1
  CHECK(rep.c1_rel_var <= 1e-8);             // (vi)
  // (v) holds only on average for plateau-exact stripes: between the middle
  // thirds the squiggle sweep covers part of the cell, so the cell average of
  // etabar^2 genuinely dips; measured, not asserted at 1e-8
  CHECK(rep.c0_rel_var <= 0.9);
  CHECK(cs.c0_min > 0.05);
  CHECK(cs.c0_mean > 0.4);
  CHECK(cs.c1 > 0.4);
  CHECK(cs.ebar() == doctest::Approx(3.0 * cs.c0_mean / cs.c1));
}

TEST_CASE("cutoffs: under-resolved time grid and bad roll-off are rejected") {
  StageParams sp;
  sp.tau = 0.1;
  CHECK_THROWS_AS((void)build_cutoffs(sp, GridSpec(16), 0.12, 8), ResolutionError);
  CHECK_THROWS_AS((void)build_cutoffs(sp, GridSpec(16), 0.5), ConfigError);
}

TEST_CASE("flow map: zero and constant drifts are exact") {
  GridSpec g(16);
  auto zero = std::make_shared<PeriodicField>(g, Rank::vector);
  FlowMap fm([zero](double) { return std::shared_ptr<const PeriodicField>(zero); }, 0.0,
             g, 0.01);
  fm.advance_to(0.3);
  CHECK(linf_norm(fm.displacement()) == 0.0);
  CHECK(fm.max_det_defect() <= 1e-13);

  auto cst = std::make_shared<PeriodicField>(g, Rank::vector);
  cst->c[0].setConstant(0.7);
  FlowMap fc([cst](double) { return std::shared_ptr<const PeriodicField>(cst); }, 0.0, g,
             0.01);
  fc.advance_to(0.4);
  CHECK(std::abs(fc.displacement().c[0](0) + 0.7 * 0.4) <= 1e-12);
  CHECK(fc.max_det_defect() <= 1e-12);
}

TEST_CASE("flow map: steady shear has the analytic displacement and unit volume") {
  GridSpec g(32);
  auto u = std::make_shared<PeriodicField>(sample_vector(
      g, [](double, double y, double) { return Eigen::Vector3d(std::sin(y), 0, 0); }));
  FlowMap fm([u](double) { return std::shared_ptr<const PeriodicField>(u); }, 0.0, g,
             0.005);
  const double t = 0.25;
  fm.advance_to(t);
  auto expect = sample_vector(g, [t](double, double y, double) {
    return Eigen::Vector3d(-t * std::sin(y), 0, 0);
  });
  CHECK(max_abs_diff(fm.displacement(), expect) <= 1e-9);
  CHECK(fm.max_det_defect() <= 1e-8);
  CHECK(fm.max_grad_defect() <= t + 1e-6);
  // backward excursion returns to the anchor
  fm.advance_to(0.0);
  CHECK(linf_norm(fm.displacement()) <= 1e-9);
}

TEST_CASE("subsolution init: energy, exactness, typed errors") {
  GridSpec g(32);
  ParamConfig cfg = desk_params();
  MikadoFamily fam = build_profiles(build_shear_direction_set(), g);
  PeriodicField Rbar(g, Rank::symtensor);
  const double e0 = 1.0;
  for (int c : {XX, YY, ZZ}) Rbar.c[c].setConstant(e0 / 3.0);
  PeriodicField zu(g, Rank::vector), zp(g, Rank::scalar);
  StageFields st = init_from_subsolution(zu, zp, Rbar, cfg, 0, 1, fam);

  const double delta1 = stage(cfg, 1).delta;
  CHECK(st.energy == doctest::Approx(e0 - delta1).epsilon(0.05));
  CHECK(st.residual <= 1e-10 * std::max(st.residual_scale, 1.0));
  CHECK(linf_norm(div(st.u)) <= 1e-10 * linf_norm(st.u));
  Eigen::ArrayXd tr = st.R.c[XX] + st.R.c[YY] + st.R.c[ZZ];
  CHECK(tr.abs().maxCoeff() <= 1e-10);
  CHECK(linf_norm(curl(st.z) - st.u) <= 1e-9 * linf_norm(st.u));

  // divergence-corrector residual concentrates away from the lowest modes
  PeriodicField flux = outer_sym(st.u, st.u);
  PeriodicField Rt = Rbar;
  for (int c : {XX, YY, ZZ}) Rt.c[c] -= delta1 / 3.0;
  flux -= Rt;
  PeriodicField f = div(flux);
  SpectralField fs = fft::forward(f);
  double low = 0.0, tot = 0.0;
  const int n = g.n;
  std::int64_t p = 0;
  for (int jx = 0; jx < n; ++jx)
    for (int jy = 0; jy < n; ++jy)
      for (int jz = 0; jz <= n / 2; ++jz, ++p) {
        const double w = (jz == 0 || jz == n / 2) ? 1.0 : 2.0;
        double e = 0.0;
        for (int c = 0; c < 3; ++c) e += w * std::norm(fs.c[c](p));
        tot += e;
        const int kx = wavenumber(jx, n), ky = wavenumber(jy, n);
        if (kx * kx + ky * ky + jz * jz < 2) low += e;
      }
  CHECK(low <= 0.05 * tot);

  PeriodicField Rzero(g, Rank::symtensor);  // zero eigenvalue everywhere
  Rzero.c[XX].setConstant(1.0);
  CHECK_THROWS_AS((void)init_from_subsolution(zu, zp, Rzero, cfg, 0, 1, fam),
                  DomainError);
}

TEST_CASE("mollification: constants exact, flat kernel, residual control") {
  GridSpec g(32);
  ParamConfig cfg = desk_params();
  MikadoFamily fam = build_profiles(build_shear_direction_set(), g);
  PeriodicField Rbar(g, Rank::symtensor);
  for (int c : {XX, YY, ZZ}) Rbar.c[c].setConstant(1.0 / 3.0);
  PeriodicField zu(g, Rank::vector), zp(g, Rank::scalar);
  StageFields st = init_from_subsolution(zu, zp, Rbar, cfg, 0, 1, fam);

  PeriodicField uc(g, Rank::vector);
  uc.c[0].setConstant(0.4);
  PeriodicField Rz(g, Rank::symtensor);
  PeriodicField ul, Rl;
  mollify_stage(uc, Rz, 0.05, DeepKernel(4, 1.0), &ul, &Rl);
  CHECK(max_abs_diff(ul, uc) <= 1e-13);

  // low modes against an almost flat kernel: R_ell stays near zero
  mollify_stage(st.u, PeriodicField(g, Rank::symtensor), 0.01, DeepKernel(4, 1.0), &ul,
                &Rl);
  CHECK(linf_norm(Rl) <= 1e-6 * linf_norm(st.u) * linf_norm(st.u));

  // Euler-Reynolds residual of the mollified pair stays comparable
  mollify_stage(st.u, st.R, 0.05, DeepKernel(4, 1.0), &ul, &Rl);
  PeriodicField f = div(outer_sym(ul, ul)) - div(Rl);
  subtract_mean(f);
  const double res_moll = l2_norm(leray_project(f));
  CHECK(res_moll <= 10.0 * st.residual + 1e-8 * st.residual_scale);
}

TEST_CASE("mini stage run: certificates, divergence, residual, traces") {
  StageConfig sc;
  sc.params = desk_params();
  sc.q = 0;
  sc.n = 32;
  sc.N_init = 1;
  sc.N_next = 2;
  sc.init_kind = MikadoKind::shear;
  sc.perturb_kind = MikadoKind::shear;
  sc.subsolution_energy = 0.62;
  sc.slices_per_tau = 8;
  sc.residual_checks = 2;
  StageReport rep = run_stage(sc);

  CHECK(rep.support_exterior_max == 0.0);
  CHECK(rep.max_div_unew <= 1e-10);
  CHECK(rep.max_residual_ratio <= 1e-4);
  CHECK(rep.flow_det_defect <= 1e-6);
  CHECK(rep.rtilde_max_dev <= 0.5);
  for (const auto& d : rep.slices) {
    CHECK(d.rnew_trace <= 1e-10 * std::max(1.0, d.rnew_inf));
    CHECK(d.sigma > 0.0);
  }
  CHECK(rep.min_annulus_fraction >= 0.9);
  // the shear-on-shear mini stage exercises a genuinely active gluing strip
  bool saw_strip_stress = false;
  for (const auto& d : rep.slices)
    if (d.in_strip && d.rbar_inf > 1e-6) saw_strip_stress = true;
  CHECK(saw_strip_stress);
  // contraction is only reachable in the tuned tube-comparator configuration
  // exercised by the acceptance suite; here it is recorded, not gated
  INFO("contraction ", rep.contraction, " Rq ", rep.r_q_inf, " Rnew ", rep.r_new_inf_max);
  CHECK(rep.contraction > 0.0);
}
