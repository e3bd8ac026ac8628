#include "mklab/stage.hpp"
#include <cstdlib>
#include <cstdio>

#include <algorithm>
#include <cmath>

#include "mklab/fft.hpp"
#include "mklab/io.hpp"

namespace mklab {

namespace {

// C-infinity sigmoid with the exact complement identity rise(t)+rise(1-t)=1
inline double expg(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
inline double rise(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = expg(t), b = expg(1.0 - t);
  return a / (a + b);
}
inline double drise(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  const double a = expg(t), b = expg(1.0 - t);
  const double da = a / (t * t);
  const double db = -b / ((1.0 - t) * (1.0 - t));
  return (da * (a + b) - a * (da + db)) / ((a + b) * (a + b));
}

// plateau profile: 1 on [1/6, 5/6], supported in (1/6 - eps, 5/6 + eps)
inline double plateau(double s, double eps) {
  if (s <= 1.0 / 6.0 - eps || s >= 5.0 / 6.0 + eps) return 0.0;
  if (s < 1.0 / 6.0) return rise((s - (1.0 / 6.0 - eps)) / eps);
  if (s <= 5.0 / 6.0) return 1.0;
  return rise((5.0 / 6.0 + eps - s) / eps);
}

}  // namespace

double CutoffSystem::stripe_coord(double x1, double t) const {
  return t / tau - std::sin(x1) / 6.0;
}

double CutoffSystem::eta(int i, double x1, double t) const {
  return plateau(stripe_coord(x1, t) - i, eps_h);
}

double CutoffSystem::eta_tilde(int i, double x1, double t) const {
  const double s = stripe_coord(x1, t) - i;
  const double wt = 0.45 * (1.0 / 3.0 - 2.0 * eps_h);
  return rise((s + wt) / (2.0 * wt)) - rise((s - 1.0 + wt) / (2.0 * wt));
}

double CutoffSystem::etabar_sq(double x1, double t) const {
  auto [lo, hi] = stripe_range(t);
  double s = 0.0;
  for (int i = lo; i <= hi; ++i) {
    const double e = eta(i, x1, t);
    s += e * e;
  }
  return s;
}

double CutoffSystem::chi(int i, double t) const {
  const double s = std::abs(t / tau - i);
  if (s <= 1.0 / 3.0) return 1.0;
  if (s >= 2.0 / 3.0) return 0.0;
  return 1.0 - rise(3.0 * (s - 1.0 / 3.0));
}

double CutoffSystem::dchi(int i, double t) const {
  const double raw = t / tau - i;
  const double s = std::abs(raw);
  if (s <= 1.0 / 3.0 || s >= 2.0 / 3.0) return 0.0;
  const double sign = raw > 0 ? 1.0 : -1.0;
  return -sign * drise(3.0 * (s - 1.0 / 3.0)) * 3.0 / tau;
}

std::pair<int, int> CutoffSystem::stripe_range(double t) const {
  const double s = t / tau;
  return {int(std::floor(s - 1.0 - eps_h - 0.2)), int(std::ceil(s + eps_h + 0.2))};
}

std::optional<int> CutoffSystem::transition_strip(double t) const {
  const double s = t / tau;
  const int i = int(std::floor(s));
  const double frac = s - i;
  if (frac > 1.0 / 3.0 && frac < 2.0 / 3.0) return i;
  return std::nullopt;
}

CutoffSystem build_cutoffs(const StageParams& sp, const GridSpec& grid, double eps_h,
                           int time_samples) {
  if (time_samples < 36)
    throw ResolutionError("build_cutoffs: time grid does not resolve tau/6");
  if (!(eps_h > 0.0 && eps_h <= 1.0 / 6.0))
    throw ConfigError("build_cutoffs: eps_h must lie in (0, 1/6]");
  CutoffSystem cs;
  cs.tau = sp.tau;
  cs.eps_h = eps_h;

  double cmin = 1e300, cmax = -1e300, csum = 0.0;
  for (int s = 0; s < time_samples; ++s) {
    const double t = cs.tau * s / time_samples;
    double avg = 0.0;
    for (int ix = 0; ix < grid.n; ++ix) avg += cs.etabar_sq(grid.x(ix), t);
    avg /= grid.n;
    cmin = std::min(cmin, avg);
    cmax = std::max(cmax, avg);
    csum += avg;
  }
  cs.c0_mean = csum / time_samples;
  cs.c0_min = cmin;
  cs.c0_max = cmax;

  double c1min = 1e300, c1max = -1e300;
  for (int ix = 0; ix < grid.n; ix += std::max(1, grid.n / 8)) {
    double avg = 0.0;
    const int nq = 4096;
    for (int s = 0; s < nq; ++s) avg += cs.etabar_sq(grid.x(ix), cs.tau * (s + 0.5) / nq);
    avg /= nq;
    c1min = std::min(c1min, avg);
    c1max = std::max(c1max, avg);
  }
  cs.c1 = 0.5 * (c1min + c1max);
  cs.c1_var = (c1max - c1min) / std::max(cs.c1, 1e-300);
  return cs;
}

CutoffReport verify_cutoffs(const CutoffSystem& cs, const GridSpec& grid,
                            int time_samples) {
  CutoffReport rep;
  for (int s = 0; s <= time_samples; ++s) {
    const double t = cs.tau * (double(s) / time_samples * 1.5 - 0.25);
    auto [lo, hi] = cs.stripe_range(t);
    double chisum = 0.0;
    for (int i = lo - 1; i <= hi + 1; ++i) chisum += cs.chi(i, t);
    rep.chi_partition_defect = std::max(rep.chi_partition_defect, std::abs(chisum - 1.0));
    for (int ix = 0; ix < grid.n; ++ix) {
      const double x1 = grid.x(ix);
      double tilde_sum = 0.0;
      for (int i = lo; i <= hi; ++i) {
        const double e = cs.eta(i, x1, t);
        tilde_sum += cs.eta_tilde(i, x1, t);
        rep.max_eta = std::max(rep.max_eta, e);
        for (int j = lo; j <= hi; ++j)
          if (j != i) rep.max_overlap = std::max(rep.max_overlap, e * cs.eta(j, x1, t));
        const double frac = t / cs.tau - i;
        if (frac > 1.0 / 3.0 + 1e-9 && frac < 2.0 / 3.0 - 1e-9)
          rep.plateau_defect = std::max(rep.plateau_defect, std::abs(e - 1.0));
        if (frac < -1.0 / 3.0 || frac > 4.0 / 3.0)
          rep.support_defect = std::max(rep.support_defect, std::abs(e));
        // partition consistency: eta~_i eta_i = eta_i
        rep.support_defect =
            std::max(rep.support_defect, std::abs(cs.eta_tilde(i, x1, t) * e - e));
      }
      rep.chi_partition_defect =
          std::max(rep.chi_partition_defect, std::abs(tilde_sum - 1.0));
    }
  }
  rep.c0_rel_var = (cs.c0_max - cs.c0_min) / std::max(cs.c0_mean, 1e-300);
  rep.c1_rel_var = cs.c1_var;
  return rep;
}

// --- flow map ----------------------------------------------------------------

FlowMap::FlowMap(UProvider u, double t0, const GridSpec& g, double dt_sub)
    : u_(std::move(u)), grid_(g), d_(g, Rank::vector), t_(t0), t0_(t0), dt_sub_(dt_sub) {
  if (!(dt_sub_ > 0.0)) throw ConfigError("FlowMap: positive substep required");
}

PeriodicField FlowMap::tendency(const PeriodicField& d, double t) const {
  auto u = u_(t);
  PeriodicField out(grid_, Rank::vector);
  for (int j = 0; j < 3; ++j) {
    PeriodicField comp(grid_, Rank::scalar);
    comp.c[0] = d.c[j];
    PeriodicField g = grad(comp);
    out.c[j] = -(u->c[0] * g.c[0] + u->c[1] * g.c[1] + u->c[2] * g.c[2]) - u->c[j];
  }
  dealias_inplace(out);
  return out;
}

void FlowMap::advance_to(double t1) {
  const double sign = (t1 >= t_) ? 1.0 : -1.0;
  while (std::abs(t1 - t_) > 1e-13) {
    const double dt = sign * std::min(dt_sub_, std::abs(t1 - t_));
    PeriodicField k1 = tendency(d_, t_);
    PeriodicField s2 = d_;
    for (int j = 0; j < 3; ++j) s2.c[j] += 0.5 * dt * k1.c[j];
    PeriodicField k2 = tendency(s2, t_ + 0.5 * dt);
    PeriodicField s3 = d_;
    for (int j = 0; j < 3; ++j) s3.c[j] += 0.5 * dt * k2.c[j];
    PeriodicField k3 = tendency(s3, t_ + 0.5 * dt);
    PeriodicField s4 = d_;
    for (int j = 0; j < 3; ++j) s4.c[j] += dt * k3.c[j];
    PeriodicField k4 = tendency(s4, t_ + dt);
    for (int j = 0; j < 3; ++j)
      d_.c[j] += (dt / 6.0) * (k1.c[j] + 2.0 * k2.c[j] + 2.0 * k3.c[j] + k4.c[j]);
    t_ += dt;
  }
  t_ = t1;
}

std::vector<Eigen::ArrayXd> FlowMap::grad_map() const {
  std::vector<Eigen::ArrayXd> g(9);
  for (int j = 0; j < 3; ++j) {
    PeriodicField comp(grid_, Rank::scalar);
    comp.c[0] = d_.c[j];
    PeriodicField gc = grad(comp);
    for (int i = 0; i < 3; ++i) {
      g[3 * j + i] = gc.c[i];
      if (i == j) g[3 * j + i] += 1.0;
    }
  }
  return g;
}

double FlowMap::max_det_defect() const {
  auto g = grad_map();
  double worst = 0.0;
  for (std::int64_t p = 0; p < grid_.points(); ++p) {
    Eigen::Matrix3d m;
    m << g[0](p), g[1](p), g[2](p), g[3](p), g[4](p), g[5](p), g[6](p), g[7](p), g[8](p);
    worst = std::max(worst, std::abs(m.determinant() - 1.0));
  }
  return worst;
}

double FlowMap::max_grad_defect() const {
  auto g = grad_map();
  double worst = 0.0;
  for (std::int64_t p = 0; p < grid_.points(); ++p) {
    Eigen::Matrix3d m;
    m << g[0](p), g[1](p), g[2](p), g[3](p), g[4](p), g[5](p), g[6](p), g[7](p), g[8](p);
    worst = std::max(worst, (m - Eigen::Matrix3d::Identity()).norm());
  }
  return worst;
}

Eigen::Vector3d FlowMap::map_at(std::int64_t p) const {
  const int n = grid_.n;
  const int iz = int(p % n), iy = int((p / n) % n), ix = int(p / n / n);
  return Eigen::Vector3d(grid_.x(ix) + d_.c[0](p), grid_.x(iy) + d_.c[1](p),
                         grid_.x(iz) + d_.c[2](p));
}

// --- initialization and mollification ----------------------------------------

StageFields init_from_subsolution(const PeriodicField& ubar, const PeriodicField& pbar,
                                  const PeriodicField& Rbar, const ParamConfig& cfg,
                                  int q, int N_osc, const MikadoFamily& fam,
                                  double min_eig_fraction) {
  (void)pbar;
  if (linf_norm(ubar) > 0.0)
    throw PreconditionError(
        "init_from_subsolution: only the resting subsolution is supported at desk scale");
  const GridSpec& g = Rbar.grid;
  for (std::int64_t p = 0; p < g.points(); ++p) {
    const Eigen::Matrix3d R = Rbar.sym_at(p);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(R);
    const double tr = R.trace();
    if (!(tr > 0.0) || es.eigenvalues().minCoeff() < min_eig_fraction * tr)
      throw DomainError("init_from_subsolution: subsolution stress not uniformly positive");
  }
  const StageParams sp1 = stage(cfg, q + 1);
  PeriodicField Rt = Rbar;
  for (int c : {XX, YY, ZZ}) Rt.c[c] -= sp1.delta / 3.0;

  PeriodicField V(g, Rank::vector);
  for (std::int64_t p = 0; p < g.points(); ++p) {
    const Eigen::Matrix3d R = Rt.sym_at(p);
    const double tr = R.trace();
    if (!(tr > 0.0))
      throw DomainError("init_from_subsolution: delta_{q+1} exceeds the stress trace");
    const Eigen::Matrix3d S = 3.0 * R / tr;  // trace-normalized, centered near Id
    Eigen::VectorXd sq = nash_squares(S, fam.coeffs);
    if (sq.minCoeff() < -1e-12)
      throw DomainError("init_from_subsolution: no positive Mikado decomposition");
    const int n = g.n;
    const int iz = int(p % n), iy = int((p / n) % n), ix = int(p / n / n);
    const Eigen::Vector3d xi(N_osc * g.x(ix), N_osc * g.x(iy), N_osc * g.x(iz));
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (int k = 0; k < fam.size(); ++k) {
      double psi;
      Eigen::Vector3d gphi;
      eval_profile(fam, k, xi, &psi, &gphi);
      const Eigen::Vector3d kv = fam.dirs.dirs[k].k.cast<double>();
      const double ak = std::sqrt(std::max(0.0, sq(k)) / 3.0) / kv.norm();
      acc += ak * kv.cross(gphi);
    }
    V.set_vec_at(p, std::sqrt(tr) * acc);
  }
  StageFields out;
  out.u = curl(V);
  out.u *= 1.0 / N_osc;

  PeriodicField flux = outer_sym(out.u, out.u);
  flux -= Rt;
  PeriodicField f = div(flux);
  subtract_mean(f);
  out.R = inverse_divergence(f);
  PeriodicField conv = div(outer_sym(out.u, out.u));
  out.p = helmholtz_potential(div(out.R) - conv);
  out.z = biot_savart(out.u);
  out.residual = l2_norm(leray_project(f - div(out.R)));
  out.residual_scale = l2_norm(conv);
  // energy bookkeeping uses the cell average (the unit-volume convention)
  out.energy = dot_mean(out.u, out.u);
  const double e_sub =
      dot_mean(ubar, ubar) + (Rbar.c[XX] + Rbar.c[YY] + Rbar.c[ZZ]).mean();
  out.energy_gap = std::abs(e_sub - out.energy);
  return out;
}

void mollify_stage(const PeriodicField& u, const PeriodicField& R, double ell,
                   const DeepKernel& kernel, PeriodicField* u_ell, PeriodicField* R_ell) {
  DeepKernel k = kernel;
  k.length = ell;
  *u_ell = deep_mollify(u, k);
  PeriodicField uu = outer_traceless(u, u);
  PeriodicField uul = outer_traceless(*u_ell, *u_ell);
  *R_ell = deep_mollify(R, k) - deep_mollify(uu, k) + uul;
}

double euler_reynolds_residual(const std::vector<PeriodicField>& u5, double h,
                               const PeriodicField& R, double* scale) {
  if (u5.size() != 5) throw PreconditionError("euler_reynolds_residual: five slices needed");
  const GridSpec& g = u5[2].grid;
  PeriodicField dudt(g, Rank::vector);
  for (int j = 0; j < 3; ++j)
    dudt.c[j] =
        (-u5[4].c[j] + 8.0 * u5[3].c[j] - 8.0 * u5[1].c[j] + u5[0].c[j]) / (12.0 * h);
  PeriodicField conv(g, Rank::vector);
  for (int i = 0; i < 3; ++i) {
    PeriodicField flux(g, Rank::vector);
    for (int j = 0; j < 3; ++j) flux.c[j] = u5[2].c[i] * u5[2].c[j];
    dealias_inplace(flux);
    conv.c[i] = div(flux).c[0];
  }
  if (scale) *scale = l2_norm(conv);
  PeriodicField resid = dudt + conv - div(R);
  return l2_norm(leray_project(resid));
}

// --- the stage runner ---------------------------------------------------------

namespace {

double annulus_fraction(const PeriodicField& w, double klo, double khi) {
  SpectralField s = fft::forward(w);
  const int n = w.grid.n;
  double inside = 0.0, total = 0.0;
  std::int64_t p = 0;
  for (int jx = 0; jx < n; ++jx) {
    const int kx = wavenumber(jx, n);
    for (int jy = 0; jy < n; ++jy) {
      const int ky = wavenumber(jy, n);
      for (int jz = 0; jz <= n / 2; ++jz, ++p) {
        const double wgt = (jz == 0 || jz == n / 2) ? 1.0 : 2.0;
        double e = 0.0;
        for (int c = 0; c < 3; ++c) e += std::norm(s.c[c](p));
        e *= wgt;
        total += e;
        const double ak = std::sqrt(double(kx) * kx + double(ky) * ky + double(jz) * jz);
        if (ak >= klo && ak <= khi) inside += e;
      }
    }
  }
  return total > 0.0 ? inside / total : 0.0;
}

class StageRunner {
 public:
  explicit StageRunner(const StageConfig& cfg) : cfg_(cfg), grid_(cfg.n) {
    sp_q_ = stage(cfg_.params, cfg_.q);
    sp_qp1_ = stage(cfg_.params, cfg_.q + 1);
    fam_init_ = std::make_unique<MikadoFamily>(
        build_profiles(cfg_.init_kind == MikadoKind::shear ? build_shear_direction_set()
                                                           : build_direction_set(),
                       grid_));
    if (cfg_.perturb_kind == cfg_.init_kind) {
      fam_pert_ = nullptr;
    } else {
      fam_pert_ = std::make_unique<MikadoFamily>(build_profiles(
          cfg_.perturb_kind == MikadoKind::shear ? build_shear_direction_set()
                                                 : build_direction_set(),
          grid_));
    }
  }

  StageReport run();

 private:
  StageConfig cfg_;
  GridSpec grid_;
  StageParams sp_q_, sp_qp1_;
  std::unique_ptr<MikadoFamily> fam_init_, fam_pert_;
  CutoffSystem cs_;
  double tau_ = 0.0;
  int N1_ = 2;

  PeriodicField u_ell_, R_ell_;
  double e_target_ = 0.0;

  std::map<int, std::unique_ptr<EulerMarch>> marches_;
  std::map<long long, std::shared_ptr<const PeriodicField>> ubar_memo_;
  std::map<int, std::unique_ptr<FlowMap>> flows_;
  double rtilde_max_dev_ = 0.0;

  const MikadoFamily& pert_family() const { return fam_pert_ ? *fam_pert_ : *fam_init_; }

  static long long quantize(double t) { return llround(t * 1e10); }

  EulerMarch& march(int i) {
    auto it = marches_.find(i);
    if (it == marches_.end()) {
      EulerOptions eo;
      eo.guard_c = cfg_.params.glue_time_constant;
      eo.enforce_guard = false;  // tau_ is chosen to respect the guard
      it = marches_.emplace(i, std::make_unique<EulerMarch>(u_ell_, i * tau_, eo)).first;
    }
    return *it->second;
  }

  std::shared_ptr<const PeriodicField> ubar_at(double t) {
    const long long key = quantize(t);
    auto it = ubar_memo_.find(key);
    if (it != ubar_memo_.end()) return it->second;
    auto out = std::make_shared<PeriodicField>(grid_, Rank::vector);
    const int ic = int(std::floor(t / tau_ + 0.5));
    for (int i = ic - 1; i <= ic + 1; ++i) {
      const double c = cs_.chi(i, t);
      if (c == 0.0) continue;
      EulerMarch& m = march(i);
      m.advance_to(t);
      PeriodicField ui = m.velocity();
      for (int j = 0; j < 3; ++j) out->c[j] += c * ui.c[j];
    }
    if (ubar_memo_.size() > 24) ubar_memo_.clear();
    ubar_memo_[key] = out;
    return out;
  }

  FlowMap& flow(int i, double t) {
    auto it = flows_.find(i);
    if (it == flows_.end()) {
      auto up = [this](double tt) { return ubar_at(tt); };
      it = flows_
               .emplace(i, std::make_unique<FlowMap>(up, i * tau_, grid_,
                                                     cfg_.flow_dt_frac * tau_))
               .first;
    }
    it->second->advance_to(t);
    return *it->second;
  }

  PeriodicField rbar_at(double t) {
    PeriodicField R(grid_, Rank::symtensor);
    auto strip = cs_.transition_strip(t);
    if (!strip) return R;
    const int i = *strip;
    EulerMarch& mi = march(i);
    EulerMarch& mj = march(i + 1);
    mi.advance_to(t);
    mj.advance_to(t);
    PeriodicField du = mi.velocity() - mj.velocity();
    const double c = cs_.chi(i, t), dc = cs_.dchi(i, t);
    PeriodicField term1 = inverse_divergence(du);
    term1 *= dc;
    PeriodicField term2 = outer_traceless(du, du);
    term2 *= -c * (1.0 - c);
    return term1 + term2;
  }

  double sigma_at(double t) {
    auto u = ubar_at(t);
    const double eu = dot_mean(*u, *u);
    const double sigma =
        (e_target_ - eu - cs_.ebar() * stage(cfg_.params, cfg_.q + 2).delta) /
        (3.0 * cs_.c0_mean);
    if (sigma < cfg_.sigma_floor * sp_qp1_.delta)
      throw DomainError("run_stage: sigma_q fell below its floor");
    return sigma;
  }

  PeriodicField perturbation(double t, PeriodicField* wo_out, PeriodicField* rsum_out,
                             double* sigma_out) {
    const MikadoFamily& fam = pert_family();
    const double sigma = sigma_at(t);
    if (sigma_out) *sigma_out = sigma;
    PeriodicField Rbar = rbar_at(t);
    PeriodicField V(grid_, Rank::vector);
    PeriodicField wo(grid_, Rank::vector);
    PeriodicField rsum(grid_, Rank::symtensor);
    auto [ilo, ihi] = cs_.stripe_range(t);
    const int n = grid_.n;
    for (int i = ilo; i <= ihi; ++i) {
      bool active = false;
      for (int ix = 0; ix < n && !active; ++ix)
        if (cs_.eta(i, grid_.x(ix), t) > 0.0) active = true;
      if (!active) continue;
      FlowMap& fm = flow(i, t);
      auto G = fm.grad_map();
      const PeriodicField& disp = fm.displacement();
      std::int64_t p = 0;
      for (int ix = 0; ix < n; ++ix) {
        const double x1 = grid_.x(ix);
        const double etai = cs_.eta(i, x1, t);
        if (etai == 0.0) {
          p += std::int64_t(n) * n;
          continue;
        }
        for (int iy = 0; iy < n; ++iy)
          for (int iz = 0; iz < n; ++iz, ++p) {
            Eigen::Matrix3d Gm;
            Gm << G[0](p), G[1](p), G[2](p), G[3](p), G[4](p), G[5](p), G[6](p),
                G[7](p), G[8](p);
            const Eigen::Matrix3d Rt =
                Gm * (Eigen::Matrix3d::Identity() - Rbar.sym_at(p) / sigma) *
                Gm.transpose();
            {
              Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(
                  Rt - Eigen::Matrix3d::Identity());
              rtilde_max_dev_ =
                  std::max(rtilde_max_dev_, es.eigenvalues().cwiseAbs().maxCoeff());
            }
            Eigen::VectorXd sq = nash_squares(Rt, fam.coeffs);
            if (sq.minCoeff() < -1e-12)
              throw DomainError("run_stage: localized stress left the coefficient ball");
            const Eigen::Vector3d xi =
                double(N1_) *
                Eigen::Vector3d(grid_.x(ix) + disp.c[0](p), grid_.x(iy) + disp.c[1](p),
                                grid_.x(iz) + disp.c[2](p));
            const double amp = etai * std::sqrt(sigma);
            Eigen::Vector3d accV = Eigen::Vector3d::Zero();
            Eigen::Vector3d accW = Eigen::Vector3d::Zero();
            for (int k = 0; k < fam.size(); ++k) {
              double psi;
              Eigen::Vector3d gphi;
              eval_profile(fam, k, xi, &psi, &gphi);
              const Eigen::Vector3d kv = fam.dirs.dirs[k].k.cast<double>();
              const double ak = std::sqrt(std::max(0.0, sq(k))) / kv.norm();
              accV += ak * kv.cross(gphi);
              if (wo_out) accW += ak * psi * kv;
            }
            V.set_vec_at(p, V.vec_at(p) + amp * (Gm.transpose() * accV));
            if (wo_out) wo.set_vec_at(p, wo.vec_at(p) + amp * (Gm.inverse() * accW));
            if (rsum_out) {
              const Eigen::Matrix3d Ri =
                  etai * etai * (sigma * Eigen::Matrix3d::Identity() - Rbar.sym_at(p));
              rsum.set_sym_at(p, rsum.sym_at(p) + Ri);
            }
          }
      }
    }
    PeriodicField w = curl(V);
    w *= 1.0 / N1_;
    if (wo_out) *wo_out = wo;
    if (rsum_out) *rsum_out = rsum;
    return w;
  }
};

StageReport StageRunner::run() {
  StageReport rep;
  rep.sp_q = sp_q_;
  rep.sp_qp1 = sp_qp1_;
  N1_ = cfg_.N_next;

  PeriodicField Rbar0(grid_, Rank::symtensor);
  for (int c : {XX, YY, ZZ}) Rbar0.c[c].setConstant(cfg_.subsolution_energy / 3.0);
  PeriodicField zero_u(grid_, Rank::vector), zero_p(grid_, Rank::scalar);
  StageFields base = init_from_subsolution(zero_u, zero_p, Rbar0, cfg_.params, cfg_.q,
                                           cfg_.N_init, *fam_init_);
  rep.r_q_inf = linf_norm(base.R);

  DeepKernel kernel(std::max(1, cfg_.params.Nbar), sp_q_.ell);
  mollify_stage(base.u, base.R, sp_q_.ell, kernel, &u_ell_, &R_ell_);

  const double c1n = c1_seminorm(u_ell_);
  const double guard = cfg_.params.glue_time_constant / std::max(c1n, 1e-12);
  tau_ = cfg_.tau_override > 0.0 ? cfg_.tau_override : std::min(sp_q_.tau, 0.55 * guard);
  StageParams sp_used = sp_q_;
  sp_used.tau = tau_;
  rep.tau_used = tau_;
  if (std::getenv("MKLAB_STAGE_DEBUG"))
    std::fprintf(stderr, "  [dbg] |u_q|=%.3f |R_q|=%.4f |u_ell|=%.3f |R_ell|=%.4f C1(u_ell)=%.3f tau=%.3f\n",
                 linf_norm(base.u), rep.r_q_inf, linf_norm(u_ell_), linf_norm(R_ell_),
                 c1n, tau_);
  cs_ = build_cutoffs(sp_used, grid_);
  rep.cutoffs = cs_;
  rep.cutoff_report = verify_cutoffs(cs_, grid_);
  rep.c0 = cs_.c0_mean;
  rep.c1 = cs_.c1;
  rep.ebar = cs_.ebar();

  {
    const double eu = dot_mean(u_ell_, u_ell_);
    e_target_ = eu + 3.0 * cs_.c0_mean * cfg_.sigma_scale * (sp_qp1_.delta / cs_.c1) +
                cs_.ebar() * stage(cfg_.params, cfg_.q + 2).delta;
  }

  const int nsl = std::max(
      4, int(std::lround(cfg_.slices_per_tau * (cfg_.t_hi_frac - cfg_.t_lo_frac))));
  const double h = cfg_.fd_frac * tau_;
  std::vector<int> check_slices;
  for (int c = 0; c < cfg_.residual_checks; ++c) {
    int s = 1 + int(std::lround(double(c) * (nsl - 2) / std::max(1, cfg_.residual_checks - 1)));
    s = std::min(std::max(s, 1), nsl - 1);
    if (std::find(check_slices.begin(), check_slices.end(), s) == check_slices.end())
      check_slices.push_back(s);
  }

  double sigma_sum = 0.0;
  rep.min_annulus_fraction = 1.0;
  for (int sidx = 0; sidx <= nsl; ++sidx) {
    StageSliceDiag d;
    const double t = tau_ * (cfg_.t_lo_frac +
                             (cfg_.t_hi_frac - cfg_.t_lo_frac) * double(sidx) / nsl);
    d.t = t;
    const bool checked =
        std::find(check_slices.begin(), check_slices.end(), sidx) != check_slices.end();

    const std::vector<double> ts = {t - 2 * h, t - h, t, t + h, t + 2 * h};
    std::vector<PeriodicField> w5, u5;
    PeriodicField wo, rsum;
    double sigma_t = 0.0;
    for (int j = 0; j < 5; ++j) {
      PeriodicField w = (j == 2) ? perturbation(ts[j], &wo, &rsum, &sigma_t)
                                 : perturbation(ts[j], nullptr, nullptr, nullptr);
      auto ub = ubar_at(ts[j]);
      u5.push_back(*ub + w);
      w5.push_back(std::move(w));
    }

    PeriodicField& w = w5[2];
    auto ub = ubar_at(t);
    PeriodicField Rbar = rbar_at(t);
    d.rbar_inf = linf_norm(Rbar);
    d.in_strip = cs_.transition_strip(t).has_value();
    if (!d.in_strip)
      rep.support_exterior_max = std::max(rep.support_exterior_max, d.rbar_inf);
    d.sigma = sigma_t;
    sigma_sum += sigma_t;

    d.w_inf = linf_norm(w);
    d.w_c1 = d.w_inf + c1_seminorm(w);
    // carrier band of the family: shear profiles oscillate at N1 itself,
    // tube profiles at N1 times their cross-section content ~ [pi, 4 pi]
    const double carrier =
        pert_family().dirs.kind == MikadoKind::shear ? 1.0 : kTwoPi;
    d.annulus_fraction = annulus_fraction(w, 0.5 * carrier * N1_,
                                          2.0 * carrier * N1_ * std::sqrt(2.0));
    rep.min_annulus_fraction = std::min(rep.min_annulus_fraction, d.annulus_fraction);

    {
      const Eigen::Matrix3d mom = second_moment(wo);
      Eigen::Matrix3d rmean = Eigen::Matrix3d::Zero();
      for (int i = 0; i < 3; ++i)
        for (int jj = 0; jj < 3; ++jj) rmean(i, jj) = rsum.c[sym_index(i, jj)].mean();
      d.wo_moment_err = (mom - rmean).norm() / std::max(rmean.norm(), 1e-300);
    }

    PeriodicField dwdt(grid_, Rank::vector);
    for (int c = 0; c < 3; ++c)
      dwdt.c[c] =
          (-w5[4].c[c] + 8.0 * w5[3].c[c] - 8.0 * w5[1].c[c] + w5[0].c[c]) / (12.0 * h);
    PeriodicField nash(grid_, Rank::vector);
    for (int c = 0; c < 3; ++c) {
      PeriodicField comp(grid_, Rank::scalar);
      comp.c[0] = ub->c[c];
      PeriodicField gc = grad(comp);
      nash.c[c] = w.c[0] * gc.c[0] + w.c[1] * gc.c[1] + w.c[2] * gc.c[2];
    }
    dealias_inplace(nash);
    // only the advective product is dealiased; d_t w is not a product
    PeriodicField transp(grid_, Rank::vector);
    for (int c = 0; c < 3; ++c) {
      PeriodicField comp(grid_, Rank::scalar);
      comp.c[0] = w.c[c];
      PeriodicField gc = grad(comp);
      transp.c[c] = ub->c[0] * gc.c[0] + ub->c[1] * gc.c[1] + ub->c[2] * gc.c[2];
    }
    dealias_inplace(transp);
    transp += dwdt;
    PeriodicField osc_flux = outer_sym(w, w);
    osc_flux -= rsum;
    PeriodicField osc = div(osc_flux);
    subtract_mean(nash);
    subtract_mean(transp);
    subtract_mean(osc);
    PeriodicField Rnash = inverse_divergence(nash);
    PeriodicField Rtrans = inverse_divergence(transp);
    PeriodicField Rosc = inverse_divergence(osc);
    d.nash_inf = linf_norm(Rnash);
    d.transport_inf = linf_norm(Rtrans);
    d.oscillation_inf = linf_norm(Rosc);
    PeriodicField Rnew = Rnash + Rtrans + Rosc;
    d.rnew_inf = linf_norm(Rnew);
    Eigen::ArrayXd tr = Rnew.c[XX] + Rnew.c[YY] + Rnew.c[ZZ];
    d.rnew_trace = tr.abs().maxCoeff();
    rep.r_new_inf_max = std::max(rep.r_new_inf_max, d.rnew_inf);

    PeriodicField unew = *ub + w;
    d.div_unew = linf_norm(div(unew)) / std::max(1.0, linf_norm(unew));
    rep.max_div_unew = std::max(rep.max_div_unew, d.div_unew);

    if (checked) {
      if (std::getenv("MKLAB_STAGE_DEBUG")) {
        PeriodicField dr = div(Rnew) - (nash + transp + osc);
        std::fprintf(stderr, "  [dbg] t=%.3f |divR-parts|=%.3e |nash|=%.3e |transp|=%.3e |osc|=%.3e\n",
                     t, l2_norm(dr), l2_norm(nash), l2_norm(transp), l2_norm(osc));
        PeriodicField dudt5(grid_, Rank::vector);
        for (int c = 0; c < 3; ++c)
          dudt5.c[c] = (-u5[4].c[c] + 8.0 * u5[3].c[c] - 8.0 * u5[1].c[c] + u5[0].c[c]) / (12.0 * h);
        PeriodicField dwdt_resid = dudt5;
        std::vector<PeriodicField> ub5d;
        for (int j = 0; j < 5; ++j) ub5d.push_back(u5[j] - w5[j]);
        for (int c = 0; c < 3; ++c)
          dwdt_resid.c[c] -= (-ub5d[4].c[c] + 8.0 * ub5d[3].c[c] - 8.0 * ub5d[1].c[c] + ub5d[0].c[c]) / (12.0 * h);
        std::fprintf(stderr, "  [dbg] |FDw(from u5)-dwdt|=%.3e |dwdt|=%.3e\n",
                     l2_norm(dwdt_resid - dwdt), l2_norm(dwdt));
        PeriodicField dwdt_da = dwdt;
        dealias_inplace(dwdt_da);
        std::fprintf(stderr, "  [dbg] |(1-P)dwdt|=%.3e  |(1-P)w|=%.3e |w|=%.3e\n",
                     l2_norm(leray_project(dwdt - dwdt_da)), 
                     std::sqrt(spectral_tail_fraction(w)) * l2_norm(w), l2_norm(w));
        PeriodicField crossA(grid_, Rank::vector);
        for (int i2 = 0; i2 < 3; ++i2) {
          PeriodicField fx(grid_, Rank::vector);
          for (int j2 = 0; j2 < 3; ++j2)
            fx.c[j2] = ub->c[i2] * w.c[j2] + w.c[i2] * ub->c[j2];
          dealias_inplace(fx);
          crossA.c[i2] = div(fx).c[0];
        }
        PeriodicField crossB = nash + transp - dwdt;  // advective cross terms (dealiased)
        std::fprintf(stderr, "  [dbg] |P[cross_div - cross_adv]|=%.3e\n",
                     l2_norm(leray_project(crossA - crossB)));
      }
      double scale = 0.0;
      d.residual = euler_reynolds_residual(u5, h, Rnew, &scale);
      d.residual_scale = scale;
      rep.max_residual_ratio =
          std::max(rep.max_residual_ratio, d.residual / std::max(scale, 1e-300));
      std::vector<PeriodicField> ub5;
      for (int j = 0; j < 5; ++j) ub5.push_back(u5[j] - w5[j]);
      double gs = 0.0;
      d.residual_glued = euler_reynolds_residual(ub5, h, Rbar, &gs);
    }

    if (cfg_.dump_fields && !cfg_.dump_prefix.empty()) {
      mkf_write(cfg_.dump_prefix + "_u_" + std::to_string(sidx) + ".mkf", unew);
      mkf_write(cfg_.dump_prefix + "_R_" + std::to_string(sidx) + ".mkf", Rnew);
    }
    rep.slices.push_back(d);
  }
  rep.sigma_mean = sigma_sum / double(nsl + 1);
  rep.contraction = rep.r_new_inf_max / std::max(rep.r_q_inf, 1e-300);
  rep.rtilde_max_dev = rtilde_max_dev_;

  {
    const double tm = 0.5 * tau_ * (cfg_.t_lo_frac + cfg_.t_hi_frac);
    FlowMap& fm = flow(0, tm);
    rep.flow_det_defect = fm.max_det_defect();
    rep.flow_grad_defect = fm.max_grad_defect();
    auto ub = ubar_at(tm);
    rep.ubar_minus_uell = linf_norm(*ub - u_ell_);
    PeriodicField zb = biot_savart(*ub);
    PeriodicField zl = biot_savart(u_ell_);
    rep.zbar_minus_zell = linf_norm(zb - zl);
  }
  return rep;
}

}  // namespace

StageReport run_stage(const StageConfig& cfg) {
  StageRunner r(cfg);
  return r.run();
}

}  // namespace mklab
