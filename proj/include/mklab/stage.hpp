#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>

#include "mklab/euler.hpp"
#include "mklab/mikado.hpp"
#include "mklab/schedule.hpp"
#include "mklab/spectral_ops.hpp"

namespace mklab {

// --- squiggling-stripe cutoffs ---------------------------------------------

// Space-time cutoff family eta_i(x,t) = H(t/tau - sin(2 pi x1)/6 - i) with a
// C-infinity plateau profile H (1 on [1/6,5/6], supported in (0,1)), plus the
// wider partition eta~_i and the temporal gluing partition chi_i.
struct CutoffSystem {
  double tau = 0.0;
  double eps_h = 1.0 / 6.0;  // roll-off width of H in stripe coordinates

  double stripe_coord(double x1, double t) const;        // t/tau - sin(2pi x1)/6
  double eta(int i, double x1, double t) const;          // squiggling cutoff
  double eta_tilde(int i, double x1, double t) const;    // wider partition
  double etabar_sq(double x1, double t) const;           // sum_i eta_i^2
  double chi(int i, double t) const;                     // temporal partition
  double dchi(int i, double t) const;                    // d/dt chi_i
  // stripe indices possibly active at time t
  std::pair<int, int> stripe_range(double t) const;
  // gluing strip of time t: i with t in (i tau + tau/3, i tau + 2 tau/3)
  std::optional<int> transition_strip(double t) const;

  // measured constants of the construction
  double c0_mean = 0.0, c0_min = 0.0, c0_max = 0.0;  // cell average of etabar^2
  double c1 = 0.0;                                   // time average over one period
  double c1_var = 0.0;
  double ebar() const { return 3.0 * c0_mean / c1; }
};

// builds the system and measures c0(t), c1(x); the time grid must resolve
// tau/6 (the plateau-third structure)
CutoffSystem build_cutoffs(const StageParams& sp, const GridSpec& grid,
                           double eps_h = 1.0 / 6.0, int time_samples = 192);

// properties (i)-(vi) evaluated numerically for reporting/tests
struct CutoffReport {
  double max_eta = 0.0;           // (i)  <= 1
  double max_overlap = 0.0;       // (ii) max_i!=j |eta_i eta_j|
  double plateau_defect = 0.0;    // (iii) max |eta_i - 1| on the middle third
  double support_defect = 0.0;    // (iv) mass outside the stated support
  double c0_rel_var = 0.0;        // (v)  relative variation of the cell average
  double c1_rel_var = 0.0;        // (vi) relative variation over x
  double chi_partition_defect = 0.0;  // |sum_i chi_i - 1|
};
CutoffReport verify_cutoffs(const CutoffSystem& cs, const GridSpec& grid,
                            int time_samples = 96);

// --- flow maps --------------------------------------------------------------

// Backward flow map of a time-dependent drift, anchored at t0: the
// displacement d = Phi - x solves d_t d + u.grad d = -u with d(t0) = 0,
// marched spectrally with RK4 substeps.
class FlowMap {
 public:
  using UProvider = std::function<std::shared_ptr<const PeriodicField>(double)>;
  FlowMap(UProvider u, double t0, const GridSpec& g, double dt_sub);

  void advance_to(double t);
  double time() const { return t_; }
  double anchor() const { return t0_; }
  const PeriodicField& displacement() const { return d_; }
  // gradient of the map as three vector fields (rows of grad Phi)
  std::vector<Eigen::ArrayXd> grad_map() const;  // 9 row-major arrays
  double max_det_defect() const;                 // max |det grad Phi - 1|
  double max_grad_defect() const;                // max |grad Phi - Id|
  Eigen::Vector3d map_at(std::int64_t p) const;  // Phi(x_p)

 private:
  UProvider u_;
  GridSpec grid_;
  PeriodicField d_;
  double t_ = 0.0, t0_ = 0.0, dt_sub_ = 0.0;
  PeriodicField tendency(const PeriodicField& d, double t) const;
};

// --- stage data and operations ----------------------------------------------

struct StageFields {
  PeriodicField u;  // velocity (divergence-free, mean zero)
  PeriodicField R;  // traceless symmetric stress
  PeriodicField p;  // mean-zero pressure
  PeriodicField z;  // vector potential
  double residual = 0.0;           // projected Euler-Reynolds residual (L2)
  double residual_scale = 0.0;     // |div(u (x) u)|_{L2}
  double energy = 0.0;             // int |u|^2
  double energy_gap = 0.0;         // |e - int|u|^2 - ebar delta_{q+1}|
};

// Mikado initialization from a static strict subsolution (ubar = 0 at desk
// scale); N_osc is the integer oscillation frequency of the carrier
StageFields init_from_subsolution(const PeriodicField& ubar, const PeriodicField& pbar,
                                  const PeriodicField& Rbar, const ParamConfig& cfg,
                                  int q, int N_osc, const MikadoFamily& fam,
                                  double min_eig_fraction = 0.01);

// mollification of a static pair by the deep kernel
void mollify_stage(const PeriodicField& u, const PeriodicField& R, double ell,
                   const DeepKernel& kernel, PeriodicField* u_ell, PeriodicField* R_ell);

struct StageConfig {
  ParamConfig params;
  int q = 0;
  int n = 64;
  int N_init = 1;             // carrier frequency of the base field
  int N_next = 2;             // oscillation frequency of the perturbation
  double subsolution_energy = 1.0;
  MikadoKind init_kind = MikadoKind::shear;
  MikadoKind perturb_kind = MikadoKind::tube;
  double tau_override = 0.0;  // 0: min(schedule tau, guard)
  int slices_per_tau = 16;
  double t_lo_frac = 0.0, t_hi_frac = 1.0;  // output window in units of tau
  int residual_checks = 4;
  double fd_frac = 2e-3;      // FD half-step for d_t, in units of tau
  double flow_dt_frac = 1.0 / 64.0;
  double sigma_floor = 0.05;  // guard: sigma_q must stay above this * delta
  double sigma_scale = 1.0;   // energy pump: sigma_q(0) = sigma_scale * delta_{q+1} / c1
  bool dump_fields = false;
  std::string dump_prefix;
};

struct StageSliceDiag {
  double t = 0.0;
  double rbar_inf = 0.0;      // glued stress sup norm
  bool in_strip = false;
  double w_inf = 0.0, w_c1 = 0.0;
  double div_unew = 0.0;
  double rnew_inf = 0.0, rnew_trace = 0.0;
  double nash_inf = 0.0, transport_inf = 0.0, oscillation_inf = 0.0;
  double annulus_fraction = 0.0;
  double sigma = 0.0;
  double residual = -1.0, residual_scale = 0.0;  // only on checked slices
  double residual_glued = -1.0;  // glued pair alone, on checked slices
  double wo_moment_err = 0.0;  // low-pass of <w_o (x) w_o> vs sum R_{q,i}
};

struct StageReport {
  StageParams sp_q, sp_qp1;
  double tau_used = 0.0;
  CutoffSystem cutoffs;
  CutoffReport cutoff_report;
  std::vector<StageSliceDiag> slices;
  double r_q_inf = 0.0;            // input stress sup norm
  double r_new_inf_max = 0.0;      // max over slices
  double contraction = 0.0;        // r_new_inf_max / r_q_inf
  double support_exterior_max = 0.0;  // max |Rbar| outside the strips (exact 0)
  double min_annulus_fraction = 0.0;
  double max_div_unew = 0.0;
  double max_residual_ratio = 0.0;
  double flow_det_defect = 0.0;
  double flow_grad_defect = 0.0;
  double rtilde_max_dev = 0.0;     // max ||Rtilde - Id||_op seen
  double ubar_minus_uell = 0.0;    // gluing drift diagnostic
  double zbar_minus_zell = 0.0;
  double c0 = 0.0, c1 = 0.0, ebar = 0.0;
  double sigma_mean = 0.0;
};

// one full convex-integration pass: mollify, glue, cut off, perturb, stress
StageReport run_stage(const StageConfig& cfg);

// projected Euler-Reynolds residual of a time slice, fourth-order FD in time:
// fields[0..4] = u at t-2h, t-h, t, t+h, t+2h
double euler_reynolds_residual(const std::vector<PeriodicField>& u5, double h,
                               const PeriodicField& R, double* scale);

}  // namespace mklab
