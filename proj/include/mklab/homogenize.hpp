#pragma once

#include <memory>

#include "mklab/advdiff.hpp"
#include "mklab/mikado.hpp"

namespace mklab {

// One homogenization cell problem: slow fields frozen in time at desk scale.
// Flow maps are volume-preserving by construction (composed shears or the
// identity), so the drift-form and matrix-form readings coincide exactly.
struct CellSetup {
  GridSpec grid;
  int Ncell = 8;       // integer cell frequency
  double kappa = 0.05; // microscopic diffusivity
  double sigma = 0.0;  // squared amplitude of the oscillatory part
  std::shared_ptr<const MikadoFamily> fam;

  struct Stripe {
    PeriodicField eta;        // scalar cutoff (may vanish)
    PeriodicField eta_tilde;  // wider partition member
    // displacement of the volume-preserving map Phi = x + disp
    PeriodicField disp;       // vector; all-zero = identity map
    bool identity_map = true;
    PeriodicField Rtilde;     // symtensor field near Id
  };
  std::vector<Stripe> stripes;

  // stage scales entering the D functional
  double tau = 0.25, ell = 0.5, delta = 0.5;

  // checks eta~_i eta_i = eta_i, eta~_i eta_j = 0, sum eta~_i = 1
  double partition_defect() const;
};

// Phi = Id, eta = eta~ = 1, Rtilde = Id everywhere
CellSetup one_stripe_setup(const GridSpec& g, std::shared_ptr<const MikadoFamily> fam,
                           int Ncell, double kappa, double sigma);
// randomized smooth slow fields: banded eta partition, composed-shear flow
// maps (det grad Phi = 1 exactly), Rtilde = Id + small smooth symmetric field
CellSetup random_setup(const GridSpec& g, std::shared_ptr<const MikadoFamily> fam,
                       int Ncell, double kappa, double sigma, std::uint64_t seed,
                       int stripes = 2, double rdev = 0.2, double shear_amp = 0.05);

// grad Phi rows (9 arrays) and its exact inverse for a stripe
void stripe_grad_map(const CellSetup& s, int i, std::vector<Eigen::ArrayXd>* G,
                     std::vector<Eigen::ArrayXd>* Ginv);

// oscillatory tensor of the cell problem. conjugated = true gives the
// homogenization-side tensor sum_i eta~_i gradPhi^{-1}(kappa Id + ...)gradPhi^{-T};
// conjugated = false keeps the plain kappa Id outside (the drift-equivalent
// tensor, exactly matched to advection by the oscillatory field)
DiffusivitySpec oscillatory_coefficient(const CellSetup& s, bool conjugated = true);

// the oscillatory velocity field of the same physics: w = curl z with
// A - kappa Id = -[z]_x; advection by w + kappa-diffusion is identical to the
// unconjugated matrix form
PeriodicField wform_drift(const CellSetup& s);

// explicit corrector of stripe i at cell point xi, given the slow point p
Eigen::Vector3d corrector_at(const CellSetup& s, int i, std::int64_t p,
                             const Eigen::Vector3d& xi);

// spectral divergence (relative) of the assembled cell flux at a frozen slow
// point: the explicit-corrector property
double corrector_cell_flux_divergence(const CellSetup& s, int i, std::int64_t p,
                                      const GridSpec& cell_grid);

struct EffectiveForm {
  std::vector<Eigen::ArrayXd> closed;      // 9 row-major arrays
  std::vector<Eigen::ArrayXd> quadrature;  // sampled cell quadrature
  std::vector<std::int64_t> sample_points;
  double rel_err = 0.0;                    // max over samples
  DiffusivitySpec spec() const;            // closed form as a solver tensor
};

// closed form kappa sum eta~ gPhi^-1 gPhi^-T + (sigma G/(N^2 kappa)) sum eta^2
// gPhi^-1 Rtilde gPhi^-T against the direct cell quadrature
EffectiveForm effective_tensor(const CellSetup& s, int cell_n = 32,
                               int slow_samples = 24);

struct EffectiveGapReport {
  double sup_gap = 0.0;       // sup_t |rho - rhobar|_{L2}^2
  double diss_gap = 0.0;      // | |rho(T)|^2 - |rhobar(T)|^2 |
  double Dfunc = 0.0;         // D_l functional
  double corrector_term = 0.0;  // sup_t of the first-order ansatz term (L2)
  double ansatz_residual = 0.0; // sup_t |rho~|_{L2}^2
  double resolved_D = 0.0, effective_D = 0.0;
};

EffectiveGapReport two_scale_gap(const CellSetup& s, const PeriodicField& rho_in,
                                 double T, int l_trunc = 4,
                                 const SolveOptions& opt = {});

// scalar kappa-bar field kappa (1 + sum eta_i^2 sigma G / (kappa N)^2)
PeriodicField kappa_bar_field(const CellSetup& s);

}  // namespace mklab
