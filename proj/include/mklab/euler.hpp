#pragma once

#include <vector>

#include "mklab/field.hpp"

namespace mklab {

struct EulerOptions {
  double cfl = 0.5;          // fraction of the grid CFL
  double dt = 0.0;           // 0: auto
  double guard_c = 0.4;      // span guard: |t1 - t0| <= guard_c / |u|_C1
  bool enforce_guard = true;
  bool check_resolution = true;
  double resolution_tail = 0.1;  // error when this energy fraction sits above the cutoff
  bool resolution_error = false; // false: record a warning instead of throwing
};

// Incompressible Euler marched in vorticity form with classic RK4 stages and
// the 2/3 dealias rule on the advection product.
class EulerMarch {
 public:
  EulerMarch(const PeriodicField& u0, double t0, const EulerOptions& opt = {});

  void advance_to(double t1);  // forward or backward
  double time() const { return t_; }
  PeriodicField velocity() const;
  // Leray-projected tendency -P div(u (x) u) of the current state
  PeriodicField velocity_tendency() const;
  // pressure with zero mean recovered from the projection residual
  PeriodicField pressure() const;
  double kinetic_energy() const;
  double initial_energy() const { return e0_; }
  double max_tail_fraction() const { return max_tail_; }
  bool resolution_warning() const { return res_warn_; }

 private:
  SpectralField omega_hat_;  // vorticity coefficients
  GridSpec grid_;
  EulerOptions opt_;
  double t_ = 0.0;
  double e0_ = 0.0;
  double c1_at_start_ = 0.0;
  double t_start_ = 0.0;
  double max_tail_ = 0.0;
  bool res_warn_ = false;

  SpectralField tendency(const SpectralField& w) const;
  void rk4_step(double dt);
  void post_step_checks();
};

// convenience wrapper: solution sampled at the requested times
std::vector<PeriodicField> euler_solve(const PeriodicField& u0, double t0,
                                       const std::vector<double>& times,
                                       const EulerOptions& opt = {});

// sup norm of the velocity gradient (the C^1 seminorm used by the guards)
double c1_seminorm(const PeriodicField& u);

}  // namespace mklab
