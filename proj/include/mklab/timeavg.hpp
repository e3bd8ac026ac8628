#pragma once

#include <functional>

#include "mklab/advdiff.hpp"

namespace mklab {

// Oscillatory scalar diffusivity kappa0 + kappa1 eta(x,t,s), s = t/tau the
// fast phase; eta is 1-periodic in s, nonnegative, with unit s-average.
struct OscillatoryDiffusivity {
  double kappa0 = 0.05;
  double kappa1 = 0.05;
  double tau = 0.05;
  // eta(x, t, s); must satisfy eta >= 0 and int_0^1 eta ds = 1 for every (x,t)
  std::function<double(const Eigen::Vector3d&, double, double)> eta;

  double kappa() const { return kappa0 + kappa1; }
  double g(const Eigen::Vector3d& x, double t, double s) const {
    return kappa1 / kappa() * (eta(x, t, s) - 1.0);
  }
  // checks eta >= 0 and the unit mean on sampled phases; throws DomainError
  void validate(const GridSpec& grid, int s_samples = 256) const;
};

// eta = 1 + cos(2 pi s), optionally phase-modulated in x1
OscillatoryDiffusivity cosine_oscillation(double kappa0, double kappa1, double tau,
                                          double x_modulation = 0.0);

// materialize kappa~(x, t) as a scalar diffusivity for the general solver
DiffusivitySpec build_kappa_tilde(const OscillatoryDiffusivity& spec, const GridSpec& g);

struct ChainOptions {
  double dt = 0.0;          // 0: auto (advective CFL and tau/substeps)
  int substeps_per_period = 32;
  int snapshots = 0;
  bool gate_a1 = true;
};

struct ApproxChain {
  int levels = 0;
  std::vector<double> level_gap;       // sup_t |rho^i - rho^{i-1}|_{L2}^2
  std::vector<double> level_diss;      // kappa int |grad rho^i|^2
  double exact_vs_last = 0.0;          // sup_t |rho - rho^N|^2
  double sup_gap = 0.0;                // sup_t |rho - rho^0|^2
  double diss_gap = 0.0;               // |D - Dtilde|
  double D = 0.0;                      // averaged-equation dissipation
  double Dtilde = 0.0;                 // oscillatory-equation dissipation
  double mu = 0.0;                     // |grad u|_inf
  double tau_mu = 0.0;
  double bilinear_B0 = 0.0;            // kappa int int g_tau |grad rho^0|^2
  std::vector<double> a2_ratios;       // reported hypothesis ratios (A2)
  double a3_ratio = 0.0, a4_ratio = 0.0;
  PeriodicField rho_exact, rho_avg;
};

// co-marches the oscillatory solve, the averaged solve (level 0) and N
// correction levels with shared RK4 stages
ApproxChain successive_approx(const OscillatoryDiffusivity& spec, const DriftProvider& u,
                              const PeriodicField& rho_in, double T, int N,
                              const ChainOptions& opt = {});

// convenience: N = 0 chain returning the gaps of the averaging proposition
ApproxChain time_avg_gap(const OscillatoryDiffusivity& spec, const DriftProvider& u,
                         const PeriodicField& rho_in, double T,
                         const ChainOptions& opt = {});

struct TauSweep {
  std::vector<double> taus, sup_gaps, diss_gaps;
  double sup_slope = 0.0;   // d log(sup_gap) / d log(tau); ~2 expected
  double diss_slope = 0.0;  // ~1 expected
};
TauSweep tau_sweep(const OscillatoryDiffusivity& base, const DriftProvider& u,
                   const PeriodicField& rho_in, double T,
                   const std::vector<double>& taus, const ChainOptions& opt = {});

// least-squares slope of log(y) against log(x)
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace mklab
