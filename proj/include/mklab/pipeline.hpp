#pragma once

#include "mklab/homogenize.hpp"
#include "mklab/mikado.hpp"
#include "mklab/schedule.hpp"

namespace mklab {

// Synthetic multiscale configuration: static shear-Mikado layers at the
// schedule's frequencies with amplitudes delta_q^{1/2}.
struct ExperimentConfig {
  ParamConfig params;
  int n = 64;
  int q_lo = 0, q_hi = 2;
  double T = 0.5;
  double amplitude = 1.0;
  std::uint64_t seed = 1;
  int rho_mode = 1;        // initial datum cos(rho_mode * x1) unless a field is given
  double dt = 0.0;         // 0: auto
  int max_layer_freq = 0;  // 0: n/3 guard
};

// one shear-Mikado layer at integer frequency Nq with a seeded shift
PeriodicField mikado_layer(const GridSpec& g, const MikadoFamily& fam, int Nq,
                           const Eigen::Matrix3d& R, std::uint64_t seed);
// superposition of layers for stages q_lo..q (inclusive)
PeriodicField synthetic_drift(const ExperimentConfig& cfg, const MikadoFamily& fam,
                              int q);

// lowest-nonzero-mode mass of a mean-zero field (|k|^2 = 1 shell, true L2)
double lowest_mode_mass(const PeriodicField& f);
// Poincare length of the grid: 1/|k|_min of the nonzero spectrum
double ell0_from_grid(const GridSpec& g);
double ell_in_of(const PeriodicField& rho);

// smallest q in [q_lo, q_hi] with 10 C_N / ell_in <= lambda_q sqrt(1 -
// exp(-2 kappa_{q+1} T / ell0^2)) for all larger q in range
struct InertialChoice {
  int q_I = -1;
  bool monotone = true;  // right-hand side monotone over the scanned range
  std::vector<double> rhs;
};
InertialChoice choose_inertial_index(const ParamConfig& p, double ell_in, double T,
                                     double C_N, int q_lo, int q_hi,
                                     double ell0 = 1.0);

struct MollifyReport {
  double r = 0.0;
  double C_N = 0.0;
  double change = 0.0;        // |rho~ - rho|
  double bound = 0.0;         // C_N r |grad rho|
  std::vector<double> h_norms;  // H^n norms of the mollified datum, n = 0..4
};
PeriodicField mollify_datum(const PeriodicField& rho_in, const ParamConfig& p, int q_I,
                            MollifyReport* rep = nullptr);

struct PipelineReport {
  int q_I = -1;
  double ell0 = 0.0, ell_in = 0.0, C_N = 0.0;
  std::vector<int> qs;
  std::vector<double> Dq;
  std::vector<double> ratios;          // D_{q+1}/D_q
  std::vector<double> stability_gap;   // |D_{q+1}-D_q| / D_q vs lambda_q^-gamma
  std::vector<double> stability_target;
  std::vector<double> poincare_floor;
  std::vector<bool> floor_ok;
  // the literal three-solve comparison chain at each q
  std::vector<double> gap_drift_vs_full;   // sup-style gap of rho~_q vs rho~_{u,q}
  std::vector<double> gap_datum_vs_moll;   // rho_{u,q} vs rho~_{u,q} at T
  double c0_measured = 0.0;
  double c0_predicted = 0.0;
  int c0_pred_branch = 0;
};

PipelineReport dissipation_sweep(const ExperimentConfig& cfg);

struct RichardsonFit {
  std::vector<double> Ts, c0s;
  std::vector<int> qIs;
  double slope = 0.0;
  double target = 0.0;  // 2b / (2 - b theta)
  bool within_band = false;
  bool degenerate = false;
};
RichardsonFit richardson_diagnostic(const ExperimentConfig& cfg,
                                    const std::vector<double>& T_list,
                                    double band = 0.35);

struct EnhancementReport {
  double D_with = 0.0, D_without = 0.0;
  double measured = 0.0;    // D_with / D_without
  double predicted = 0.0;   // from the effective-tensor decay of the datum mode
  double kappa_eff = 0.0;
  double rel_err = 0.0;
};
// reference one-stripe configuration: Mikado drift at frequency Ncell against
// plain kappa diffusion of the same datum
EnhancementReport enhanced_dissipation_reference(int n, int Ncell, double kappa,
                                                 double sigma, double T,
                                                 MikadoKind kind = MikadoKind::shear);

}  // namespace mklab
