#include "mklab/euler.hpp"

#include <cmath>

#include "mklab/fft.hpp"
#include "mklab/spectral_ops.hpp"

namespace mklab {

namespace {

inline double dkv(int k, int n) { return (k == n / 2 || k == -n / 2) ? 0.0 : double(k); }

// velocity coefficients from vorticity: u_hat = i k x w_hat / |k|^2
SpectralField velocity_from_vorticity(const SpectralField& w) {
  SpectralField u(w.grid, Rank::vector);
  const int n = w.grid.n;
  std::int64_t p = 0;
  for (int jx = 0; jx < n; ++jx) {
    const double k0 = dkv(wavenumber(jx, n), n);
    for (int jy = 0; jy < n; ++jy) {
      const double k1 = dkv(wavenumber(jy, n), n);
      for (int jz = 0; jz <= n / 2; ++jz, ++p) {
        const double k2 = dkv(jz, n);
        const double ksq = k0 * k0 + k1 * k1 + k2 * k2;
        if (ksq == 0.0) continue;
        const std::complex<double> I(0.0, 1.0);
        u.c[0](p) = I * (k1 * w.c[2](p) - k2 * w.c[1](p)) / ksq;
        u.c[1](p) = I * (k2 * w.c[0](p) - k0 * w.c[2](p)) / ksq;
        u.c[2](p) = I * (k0 * w.c[1](p) - k1 * w.c[0](p)) / ksq;
      }
    }
  }
  return u;
}

}  // namespace

double c1_seminorm(const PeriodicField& u) {
  double m = 0.0;
  for (int j = 0; j < u.ncomp(); ++j) {
    PeriodicField comp(u.grid, Rank::scalar);
    comp.c[0] = u.c[j];
    m = std::max(m, linf_norm(grad(comp)));
  }
  return m;
}

EulerMarch::EulerMarch(const PeriodicField& u0, double t0, const EulerOptions& opt)
    : grid_(u0.grid), opt_(opt), t_(t0), t_start_(t0) {
  if (u0.rank != Rank::vector) throw PreconditionError("EulerMarch: vector field expected");
  const double scale = std::max(1.0, linf_norm(u0));
  if (linf_norm(div(u0)) > 1e-9 * scale)
    throw PreconditionError("EulerMarch: initial field is not divergence-free");
  for (int j = 0; j < 3; ++j)
    if (std::abs(u0.mean(j)) > 1e-11 * scale)
      throw PreconditionError("EulerMarch: initial field must have zero mean");
  omega_hat_ = fft::forward(curl(u0));
  e0_ = kinetic_energy();
  c1_at_start_ = c1_seminorm(u0);
}

SpectralField EulerMarch::tendency(const SpectralField& w) const {
  // d_t omega = curl(u x omega)
  SpectralField us = velocity_from_vorticity(w);
  PeriodicField u = fft::inverse(us);
  PeriodicField om = fft::inverse(w);
  PeriodicField cross(grid_, Rank::vector);
  cross.c[0] = u.c[1] * om.c[2] - u.c[2] * om.c[1];
  cross.c[1] = u.c[2] * om.c[0] - u.c[0] * om.c[2];
  cross.c[2] = u.c[0] * om.c[1] - u.c[1] * om.c[0];
  SpectralField cs = fft::forward(cross);
  dealias_inplace(cs);
  return curl_s(cs);
}

void EulerMarch::rk4_step(double dt) {
  const SpectralField k1 = tendency(omega_hat_);
  SpectralField s2 = omega_hat_;
  for (int j = 0; j < 3; ++j) s2.c[j] += 0.5 * dt * k1.c[j];
  const SpectralField k2 = tendency(s2);
  SpectralField s3 = omega_hat_;
  for (int j = 0; j < 3; ++j) s3.c[j] += 0.5 * dt * k2.c[j];
  const SpectralField k3 = tendency(s3);
  SpectralField s4 = omega_hat_;
  for (int j = 0; j < 3; ++j) s4.c[j] += dt * k3.c[j];
  const SpectralField k4 = tendency(s4);
  for (int j = 0; j < 3; ++j)
    omega_hat_.c[j] += (dt / 6.0) * (k1.c[j] + 2.0 * k2.c[j] + 2.0 * k3.c[j] + k4.c[j]);
  t_ += dt;
}

void EulerMarch::post_step_checks() {
  if (!opt_.check_resolution) return;
  PeriodicField u = velocity();
  const double tail = spectral_tail_fraction(u);
  max_tail_ = std::max(max_tail_, tail);
  if (tail >= opt_.resolution_tail) {
    if (opt_.resolution_error)
      throw ResolutionError("EulerMarch: " + std::to_string(tail * 100.0) +
                            "% of the energy above the dealias cutoff");
    res_warn_ = true;
  }
}

void EulerMarch::advance_to(double t1) {
  if (opt_.enforce_guard && c1_at_start_ > 0.0) {
    const double span = std::abs(t1 - t_start_);
    if (span > opt_.guard_c / c1_at_start_ + 1e-14)
      throw PreconditionError("EulerMarch: requested span " + std::to_string(span) +
                              " exceeds the guard " +
                              std::to_string(opt_.guard_c / c1_at_start_));
  }
  const double sign = (t1 >= t_) ? 1.0 : -1.0;
  while (std::abs(t1 - t_) > 1e-14) {
    double dt = opt_.dt;
    if (dt <= 0.0) {
      const double umax = std::max(1e-12, linf_norm(velocity()));
      dt = opt_.cfl * grid_.h() / umax;
    }
    dt = std::min(dt, std::abs(t1 - t_));
    rk4_step(sign * dt);
    post_step_checks();
  }
  t_ = t1;
}

PeriodicField EulerMarch::velocity() const {
  return fft::inverse(velocity_from_vorticity(omega_hat_));
}

PeriodicField EulerMarch::velocity_tendency() const {
  PeriodicField u = velocity();
  PeriodicField conv(grid_, Rank::vector);
  // div(u (x) u) with div-free u, assembled in divergence form
  for (int i = 0; i < 3; ++i) {
    PeriodicField flux(grid_, Rank::vector);
    for (int j = 0; j < 3; ++j) flux.c[j] = u.c[i] * u.c[j];
    dealias_inplace(flux);
    conv.c[i] = div(flux).c[0];
  }
  PeriodicField t = leray_project(conv);
  t *= -1.0;
  return t;
}

PeriodicField EulerMarch::pressure() const {
  PeriodicField u = velocity();
  PeriodicField conv(grid_, Rank::vector);
  for (int i = 0; i < 3; ++i) {
    PeriodicField flux(grid_, Rank::vector);
    for (int j = 0; j < 3; ++j) flux.c[j] = u.c[i] * u.c[j];
    dealias_inplace(flux);
    conv.c[i] = div(flux).c[0];
  }
  // Delta p = -div conv; mean-zero normalization
  PeriodicField negp = helmholtz_potential(conv);
  negp *= -1.0;
  return negp;
}

double EulerMarch::kinetic_energy() const {
  PeriodicField u = velocity();
  return kTwoPi * kTwoPi * kTwoPi * dot_mean(u, u);
}

std::vector<PeriodicField> euler_solve(const PeriodicField& u0, double t0,
                                       const std::vector<double>& times,
                                       const EulerOptions& opt) {
  EulerMarch m(u0, t0, opt);
  std::vector<PeriodicField> out;
  out.reserve(times.size());
  for (double t : times) {
    m.advance_to(t);
    out.push_back(m.velocity());
  }
  return out;
}

}  // namespace mklab
