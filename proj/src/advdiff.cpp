#include "mklab/advdiff.hpp"

#include <cmath>

#include "mklab/fft.hpp"
#include "mklab/spectral_ops.hpp"

namespace mklab {

DiffusivitySpec DiffusivitySpec::constant(double kappa) {
  DiffusivitySpec d;
  d.kind = Kind::constant;
  d.kappa = kappa;
  d.ellip_min = d.ellip_max = kappa;
  return d;
}

DiffusivitySpec DiffusivitySpec::scalar(std::function<PeriodicField(double)> f) {
  DiffusivitySpec d;
  d.kind = Kind::scalar_field;
  d.field = std::move(f);
  return d;
}

DiffusivitySpec DiffusivitySpec::matrix(std::function<std::vector<Eigen::ArrayXd>(double)> f) {
  DiffusivitySpec d;
  d.kind = Kind::tensor_field;
  d.tensor = std::move(f);
  return d;
}

namespace {

// materialized diffusivity at one time: 9 row-major components
struct TensorAt {
  std::vector<Eigen::ArrayXd> a;
  bool is_constant = false;
  double kappa = 0.0;

  void apply(const std::vector<Eigen::ArrayXd>& gin, std::vector<Eigen::ArrayXd>& out,
             double shift) const {
    // out = (A - shift I) g
    if (is_constant) {
      for (int i = 0; i < 3; ++i) out[i] = (kappa - shift) * gin[i];
      return;
    }
    for (int i = 0; i < 3; ++i) {
      out[i] = a[3 * i] * gin[0] + a[3 * i + 1] * gin[1] + a[3 * i + 2] * gin[2];
      out[i] -= shift * gin[i];
    }
  }
  void bounds(double* emin, double* emax, double* spread, double shift) const {
    if (is_constant) {
      *emin = *emax = kappa;
      *spread = std::abs(kappa - shift);
      return;
    }
    double mn = 1e300, mx = -1e300, sp = 0.0;
    const std::int64_t np = a[0].size();
    for (std::int64_t p = 0; p < np; ++p) {
      Eigen::Matrix3d m;
      m << a[0](p), a[1](p), a[2](p), a[3](p), a[4](p), a[5](p), a[6](p), a[7](p), a[8](p);
      const Eigen::Matrix3d s = 0.5 * (m + m.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(s);
      mn = std::min(mn, es.eigenvalues().minCoeff());
      mx = std::max(mx, es.eigenvalues().maxCoeff());
      const Eigen::Matrix3d d = m - shift * Eigen::Matrix3d::Identity();
      sp = std::max(sp, d.cwiseAbs().rowwise().sum().maxCoeff());
    }
    *emin = mn;
    *emax = mx;
    *spread = sp;
  }
};

TensorAt materialize(const DiffusivitySpec& diff, double t, const GridSpec& g) {
  TensorAt out;
  switch (diff.kind) {
    case DiffusivitySpec::Kind::constant:
      out.is_constant = true;
      out.kappa = diff.kappa;
      return out;
    case DiffusivitySpec::Kind::scalar_field: {
      PeriodicField k = diff.field(t);
      out.a.assign(9, Eigen::ArrayXd::Zero(g.points()));
      out.a[0] = k.c[0];
      out.a[4] = k.c[0];
      out.a[8] = k.c[0];
      return out;
    }
    case DiffusivitySpec::Kind::tensor_field:
      out.a = diff.tensor(t);
      return out;
  }
  throw ConfigError("materialize: bad diffusivity kind");
}

class Stepper {
 public:
  Stepper(const PeriodicField& rho_in, const DriftProvider& drift,
          const DiffusivitySpec& diff, double T, const SolveOptions& opt)
      : grid_(rho_in.grid), drift_(drift), diff_(diff), opt_(opt) {
    rho_hat_ = fft::forward(rho_in).c[0];
    mean0_ = rho_in.mean();
    double emin = 1e300, emax = -1e300;
    for (double t : {0.0, 0.5 * T, T}) {
      TensorAt A = materialize(diff_, t, grid_);
      double mn, mx, sp;
      A.bounds(&mn, &mx, &sp, 0.0);
      emin = std::min(emin, mn);
      emax = std::max(emax, mx);
    }
    if (!(emin > 0.0))
      throw PreconditionError("solve_advdiff: diffusivity is not elliptic (min eig " +
                              std::to_string(emin) + ")");
    ellip_min_ = emin;
    kappa_split_ = emax;
    TensorAt A0 = materialize(diff_, 0.0, grid_);
    double mn, mx;
    A0.bounds(&mn, &mx, &spread_, kappa_split_);

    const int n = grid_.n;
    ksq_.resize(grid_.spages());
    std::int64_t p = 0;
    for (int jx = 0; jx < n; ++jx) {
      const int kx = wavenumber(jx, n);
      const double k0 = (kx == n / 2) ? 0.0 : kx;
      for (int jy = 0; jy < n; ++jy) {
        const int ky = wavenumber(jy, n);
        const double k1 = (ky == n / 2) ? 0.0 : ky;
        for (int jz = 0; jz <= n / 2; ++jz, ++p) {
          const double k2 = jz == n / 2 ? 0.0 : jz;
          ksq_(p) = k0 * k0 + k1 * k1 + k2 * k2;
        }
      }
    }
  }

  double suggest_dt(double T) const {
    if (opt_.dt > 0.0) return opt_.dt;
    const PeriodicField& u0 = drift_(0.0);
    const double umax = linf_norm(u0);
    double dt = T / opt_.min_steps;
    if (umax > 0.0) dt = std::min(dt, opt_.cfl * grid_.h() / umax);
    const double cut = grid_.dealias_cutoff();
    const double ksqmax = 3.0 * cut * cut;
    if (spread_ > 0.0) dt = std::min(dt, 1.2 / (spread_ * ksqmax));
    return dt;
  }

  void set_exp(double dt) {
    ehalf_ = (-0.5 * dt * kappa_split_ * ksq_).exp();
    dt_ = dt;
  }

  // explicit tendency: spectral div( (A - kappa_split I) grad rho - u rho ),
  // optionally reporting the dissipation form int A grad rho . grad rho
  Eigen::ArrayXcd tendency(const Eigen::ArrayXcd& rho_hat, double t, double* qform) {
    SpectralField rs(grid_, Rank::scalar);
    rs.c[0] = rho_hat;
    SpectralField gs = grad_s(rs);
    std::vector<Eigen::ArrayXd> gphys(3);
    for (int i = 0; i < 3; ++i) fft::inverse(grid_, gs.c[i], gphys[i]);
    Eigen::ArrayXd rphys;
    fft::inverse(grid_, rho_hat, rphys);

    TensorAt A = materialize(diff_, t, grid_);
    std::vector<Eigen::ArrayXd> flux(3);
    A.apply(gphys, flux, kappa_split_);
    if (qform) {
      double q = 0.0;
      for (int i = 0; i < 3; ++i)
        q += (flux[i] * gphys[i]).mean() + kappa_split_ * gphys[i].square().mean();
      *qform = q * kTwoPi * kTwoPi * kTwoPi;
    }
    const PeriodicField& u = drift_(t);
    for (int i = 0; i < 3; ++i) flux[i] -= u.c[i] * rphys;

    SpectralField fs(grid_, Rank::vector);
    for (int i = 0; i < 3; ++i) fft::forward(grid_, flux[i], fs.c[i]);
    if (opt_.dealias) dealias_inplace(fs);
    SpectralField d = div_s(fs);
    return d.c[0];
  }

  void step(double t, double* diss_accum) {
    double q1 = 0, q2 = 0, q3 = 0, q4 = 0;
    double* p1 = diss_accum ? &q1 : nullptr;
    double* p2 = diss_accum ? &q2 : nullptr;
    double* p3 = diss_accum ? &q3 : nullptr;
    double* p4 = diss_accum ? &q4 : nullptr;
    const Eigen::ArrayXcd k1 = tendency(rho_hat_, t, p1);
    const Eigen::ArrayXcd mid1 = ehalf_ * (rho_hat_ + 0.5 * dt_ * k1);
    const Eigen::ArrayXcd k2 = tendency(mid1, t + 0.5 * dt_, p2);
    const Eigen::ArrayXcd mid2 = ehalf_ * rho_hat_ + 0.5 * dt_ * k2;
    const Eigen::ArrayXcd k3 = tendency(mid2, t + 0.5 * dt_, p3);
    const Eigen::ArrayXcd end = ehalf_ * (ehalf_ * rho_hat_ + dt_ * k3);
    const Eigen::ArrayXcd k4 = tendency(end, t + dt_, p4);
    rho_hat_ = ehalf_ * ehalf_ * rho_hat_ +
               (dt_ / 6.0) * (ehalf_ * ehalf_ * k1 + 2.0 * ehalf_ * (k2 + k3) + k4);
    if (diss_accum) *diss_accum += (dt_ / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4);
  }

  PeriodicField state() const {
    SpectralField s(grid_, Rank::scalar);
    s.c[0] = rho_hat_;
    return fft::inverse(s);
  }
  double l2sq() const {
    double s = 0.0;
    const int n = grid_.n;
    std::int64_t p = 0;
    for (int jx = 0; jx < n; ++jx)
      for (int jy = 0; jy < n; ++jy)
        for (int jz = 0; jz <= n / 2; ++jz, ++p) {
          const double w = (jz == 0 || jz == n / 2) ? 1.0 : 2.0;
          s += w * std::norm(rho_hat_(p));
        }
    return s * kTwoPi * kTwoPi * kTwoPi;
  }
  double dissrate(double t) {
    double q = 0.0;
    (void)tendency(rho_hat_, t, &q);
    return q;
  }
  double mean() const { return rho_hat_(0).real(); }
  double mean0() const { return mean0_; }

 private:
  GridSpec grid_;
  DriftProvider drift_;
  const DiffusivitySpec& diff_;
  SolveOptions opt_;
  Eigen::ArrayXcd rho_hat_;
  Eigen::ArrayXd ksq_;
  Eigen::ArrayXd ehalf_;
  double kappa_split_ = 0.0, spread_ = 0.0, dt_ = 0.0, mean0_ = 0.0, ellip_min_ = 0.0;
};

void check_drift(const DriftProvider& drift, const SolveOptions& opt) {
  if (!opt.check_drift_divfree) return;
  const PeriodicField& u0 = drift(0.0);
  const double scale = std::max(1.0, linf_norm(u0));
  if (linf_norm(div(u0)) > opt.divfree_tol * scale)
    throw PreconditionError("solve_advdiff: drift is not divergence-free");
}

}  // namespace

ScalarRun solve_advdiff(const PeriodicField& rho_in, const DriftProvider& drift,
                        const DiffusivitySpec& diff, double T, const SolveOptions& opt) {
  if (rho_in.rank != Rank::scalar)
    throw PreconditionError("solve_advdiff: scalar initial datum expected");
  check_drift(drift, opt);
  Stepper st(rho_in, drift, diff, T, opt);
  double dt = st.suggest_dt(T);
  const int nsteps = std::max(1, int(std::ceil(T / dt - 1e-12)));
  dt = T / nsteps;
  st.set_exp(dt);

  ScalarRun run;
  run.dt_used = dt;
  const double e0 = st.l2sq();
  double D = 0.0;
  run.ledger.times.push_back(0.0);
  run.ledger.l2sq.push_back(e0);
  run.ledger.dissrate.push_back(st.dissrate(0.0));
  run.ledger.cumulative.push_back(0.0);

  const int snap_every = opt.snapshots > 0 ? std::max(1, nsteps / (opt.snapshots + 1)) : 0;
  double worst_mean = 0.0;
  for (int s = 0; s < nsteps; ++s) {
    st.step(s * dt, &D);
    const double tn = (s + 1) * dt;
    run.ledger.times.push_back(tn);
    run.ledger.l2sq.push_back(st.l2sq());
    run.ledger.dissrate.push_back(st.dissrate(tn));
    run.ledger.cumulative.push_back(D);
    worst_mean = std::max(worst_mean, std::abs(st.mean() - st.mean0()));
    if (snap_every > 0 && (s + 1) % snap_every == 0 && s + 1 < nsteps) {
      run.snap_times.push_back(tn);
      run.snapshots.push_back(st.state());
    }
  }
  run.rho = st.state();
  run.mean_drift_error = worst_mean;
  const double eT = st.l2sq();
  run.energy_defect = std::abs(eT + 2.0 * D - e0) / std::max(e0, 1e-300);
  return run;
}

double elliptic_epsilon(const DiffusivitySpec& A1, const DiffusivitySpec& A2,
                        const GridSpec& g, const std::vector<double>& times) {
  double eps = 0.0;
  for (double t : times) {
    TensorAt a1 = materialize(A1, t, g);
    TensorAt a2 = materialize(A2, t, g);
    const std::int64_t np = g.points();
    auto mat_at = [&](const TensorAt& a, std::int64_t p) {
      Eigen::Matrix3d m;
      if (a.is_constant)
        m = a.kappa * Eigen::Matrix3d::Identity();
      else
        m << a.a[0](p), a.a[1](p), a.a[2](p), a.a[3](p), a.a[4](p), a.a[5](p),
            a.a[6](p), a.a[7](p), a.a[8](p);
      return m;
    };
    const std::int64_t stride = (a1.is_constant && a2.is_constant) ? np : 1;
    for (std::int64_t p = 0; p < np; p += stride) {
      const Eigen::Matrix3d m1 = 0.5 * (mat_at(a1, p) + mat_at(a1, p).transpose());
      const Eigen::Matrix3d m2 = 0.5 * (mat_at(a2, p) + mat_at(a2, p).transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m1);
      if (es.eigenvalues().minCoeff() <= 0.0)
        throw PreconditionError("compare_elliptic: A1 not elliptic");
      const Eigen::Matrix3d isq = es.operatorInverseSqrt();
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eg(isq * (m1 - m2) * isq);
      eps = std::max(eps, eg.eigenvalues().cwiseAbs().maxCoeff());
    }
  }
  return eps;
}

EllipticGapReport compare_elliptic(const PeriodicField& rho_in, const DriftProvider& drift,
                                   const DiffusivitySpec& A1, const DiffusivitySpec& A2,
                                   double T, const SolveOptions& opt) {
  EllipticGapReport rep;
  rep.epsilon = elliptic_epsilon(A1, A2, rho_in.grid, {0.0, 0.5 * T, T});
  if (rep.epsilon > 0.1 + 1e-12)
    throw HypothesisError("compare_elliptic: measured epsilon " +
                          std::to_string(rep.epsilon) + " exceeds 1/10");
  check_drift(drift, opt);
  Stepper s1(rho_in, drift, A1, T, opt);
  Stepper s2(rho_in, drift, A2, T, opt);
  double dt = std::min(s1.suggest_dt(T), s2.suggest_dt(T));
  const int nsteps = std::max(1, int(std::ceil(T / dt - 1e-12)));
  dt = T / nsteps;
  s1.set_exp(dt);
  s2.set_exp(dt);

  const double e0 = s1.l2sq();
  const double eps2 = rep.epsilon * rep.epsilon;
  rep.sup_ok = rep.diss_ok = true;
  for (int s = 0; s < nsteps; ++s) {
    s1.step(s * dt, nullptr);
    s2.step(s * dt, nullptr);
    PeriodicField d = s1.state() - s2.state();
    const double gap = l2_norm(d);
    const double rhs = std::abs(e0 - s2.l2sq());
    rep.sup_gap = std::max(rep.sup_gap, gap * gap);
    rep.sup_gap_bound = std::max(rep.sup_gap_bound, 2.0 * eps2 * rhs);
    const double dgap = std::abs(s1.l2sq() - s2.l2sq());
    rep.diss_gap = std::max(rep.diss_gap, dgap);
    rep.diss_gap_bound = std::max(rep.diss_gap_bound, 10.0 * rep.epsilon * rhs);
  }
  rep.sup_ok = rep.sup_gap <= rep.sup_gap_bound + 1e-14;
  rep.diss_ok = rep.diss_gap <= rep.diss_gap_bound + 1e-14;
  rep.sup_ratio = rep.sup_gap_bound > 0.0 ? rep.sup_gap / rep.sup_gap_bound : 0.0;
  rep.diss_ratio = rep.diss_gap_bound > 0.0 ? rep.diss_gap / rep.diss_gap_bound : 0.0;
  return rep;
}

std::vector<std::vector<double>> weighted_norm_ledger(const ScalarRun& run,
                                                      const PeriodicField& kappa_bar,
                                                      int n_max) {
  if (n_max > 4)
    throw PreconditionError("weighted_norm_ledger: n_max must be <= 4 at desk scale");
  std::vector<const PeriodicField*> snaps;
  for (const auto& s : run.snapshots) snaps.push_back(&s);
  snaps.push_back(&run.rho);
  std::vector<std::vector<double>> out(n_max + 1);

  auto fact = [](int m) {
    double f = 1.0;
    for (int i = 2; i <= m; ++i) f *= i;
    return f;
  };
  for (const PeriodicField* rp : snaps) {
    const GridSpec& g = rp->grid;
    for (int n = 0; n <= n_max; ++n) {
      double total = 0.0;
      for (int ax = 0; ax <= n; ++ax)
        for (int ay = 0; ay + ax <= n; ++ay) {
          const int az = n - ax - ay;
          const double w = fact(n) / (fact(ax) * fact(ay) * fact(az));
          PeriodicField d = *rp;
          for (int r = 0; r < ax; ++r) d = partial(d, 0);
          for (int r = 0; r < ay; ++r) d = partial(d, 1);
          for (int r = 0; r < az; ++r) d = partial(d, 2);
          Eigen::ArrayXd kpow = Eigen::ArrayXd::Ones(g.points());
          for (int r = 0; r < n; ++r) kpow *= kappa_bar.c[0];
          total += w * (kpow * d.c[0].square()).mean();
        }
      out[n].push_back(total * kTwoPi * kTwoPi * kTwoPi);
    }
  }
  return out;
}

}  // namespace mklab
