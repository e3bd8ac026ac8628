// dev tool: measure the stage error budget for candidate configurations
#include <chrono>
#include <cstdio>
#include <cstring>

#include "mklab/stage.hpp"

using namespace mklab;

int main(int argc, char** argv) {
  StageConfig sc;
  sc.params.a = 2.0;
  sc.params.b = 1.1;
  sc.params.beta = 0.25;
  auto_fill(sc.params);
  sc.q = 0;
  sc.n = 32;
  sc.N_init = 1;
  sc.N_next = 2;
  sc.init_kind = MikadoKind::shear;
  sc.perturb_kind = MikadoKind::shear;
  sc.subsolution_energy = 0.05;
  sc.slices_per_tau = 8;
  sc.residual_checks = 2;
  sc.params.glue_time_constant = 1.0;
  for (int i = 1; i < argc; ++i) {
    if (!std::strncmp(argv[i], "n=", 2)) sc.n = std::atoi(argv[i] + 2);
    if (!std::strncmp(argv[i], "e=", 2)) sc.subsolution_energy = std::atof(argv[i] + 2);
    if (!std::strncmp(argv[i], "N1=", 3)) sc.N_next = std::atoi(argv[i] + 3);
    if (!std::strncmp(argv[i], "N0=", 3)) sc.N_init = std::atoi(argv[i] + 3);
    if (!std::strncmp(argv[i], "tube", 4)) sc.perturb_kind = MikadoKind::tube;
    if (!std::strncmp(argv[i], "tau=", 4)) sc.tau_override = std::atof(argv[i] + 4);
    if (!std::strncmp(argv[i], "eps=", 4)) {} // reserved
    if (!std::strncmp(argv[i], "sf=", 3)) sc.sigma_floor = std::atof(argv[i] + 3);
    if (!std::strncmp(argv[i], "ss=", 3)) sc.sigma_scale = std::atof(argv[i] + 3);
    if (!std::strncmp(argv[i], "ti", 2)) sc.init_kind = MikadoKind::tube;
  }
  auto t0 = std::chrono::steady_clock::now();
  try {
    StageReport rep = run_stage(sc);
    auto t1 = std::chrono::steady_clock::now();
    std::printf("== config n=%d N0=%d N1=%d e0=%g kind=%s ==\n", sc.n, sc.N_init,
                sc.N_next, sc.subsolution_energy,
                sc.perturb_kind == MikadoKind::tube ? "tube" : "shear");
    std::printf("tau=%.4f (schedule %.4f)  c0=%.4f c1=%.4f ebar=%.4f sigma=%.4f\n",
                rep.tau_used, rep.sp_q.tau, rep.c0, rep.c1, rep.ebar, rep.sigma_mean);
    std::printf("Rq=%.5f  Rnew_max=%.5f  contraction=%.3f\n", rep.r_q_inf,
                rep.r_new_inf_max, rep.contraction);
    std::printf("rtilde_dev=%.3f  det_defect=%.2e grad_defect=%.3f\n", rep.rtilde_max_dev,
                rep.flow_det_defect, rep.flow_grad_defect);
    std::printf("support_ext=%.3e div=%.2e resid=%.2e annulus_min=%.3f\n",
                rep.support_exterior_max, rep.max_div_unew, rep.max_residual_ratio,
                rep.min_annulus_fraction);
    for (const auto& d : rep.slices)
      std::printf(
          "  t=%.3f strip=%d Rbar=%.4f w=%.3f nash=%.4f trans=%.4f osc=%.4f Rnew=%.4f "
          "ann=%.3f mom=%.3f\n",
          d.t, int(d.in_strip), d.rbar_inf, d.w_inf, d.nash_inf, d.transport_inf,
          d.oscillation_inf, d.rnew_inf, d.annulus_fraction, d.wo_moment_err);
    for (const auto& d : rep.slices) if (d.residual >= 0) std::printf("  CHECK t=%.3f resid=%.3e glued=%.3e scale=%.3e\n", d.t, d.residual, d.residual_glued, d.residual_scale);
    std::printf("runtime %.1fs\n", std::chrono::duration<double>(t1 - t0).count());
  } catch (const std::exception& e) {
    std::printf("FAILED: %s\n", e.what());
    return 1;
  }
  return 0;
}
