#include "mklab/homogenize.hpp"

#include <cmath>

#include "mklab/fft.hpp"
#include "mklab/rng.hpp"
#include "mklab/spectral_ops.hpp"

namespace mklab {

namespace {

inline double expg(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
inline double rise(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = expg(t), b = expg(1.0 - t);
  return a / (a + b);
}
inline double plateau(double s, double eps) {
  if (s <= 1.0 / 6.0 - eps || s >= 5.0 / 6.0 + eps) return 0.0;
  if (s < 1.0 / 6.0) return rise((s - (1.0 / 6.0 - eps)) / eps);
  if (s <= 5.0 / 6.0) return 1.0;
  return rise((5.0 / 6.0 + eps - s) / eps);
}

constexpr double kEps = 0.12;
constexpr double kTildeHalf = 0.45 * (1.0 / 3.0 - 2.0 * kEps);

double tilde_profile(double s) {
  return rise((s + kTildeHalf) / (2.0 * kTildeHalf)) -
         rise((s - 1.0 + kTildeHalf) / (2.0 * kTildeHalf));
}

// coefficients a_k(R)/|k| so that sum (a_k |k|)^2 khat khat^T = R
Eigen::VectorXd mikado_coeffs(const Eigen::Matrix3d& R, const MikadoFamily& fam) {
  Eigen::VectorXd sq = nash_squares(R, fam.coeffs);
  Eigen::VectorXd a(fam.size());
  for (int k = 0; k < fam.size(); ++k) {
    if (sq(k) < -1e-12)
      throw DomainError("mikado_coeffs: stress outside the positive cone");
    a(k) = std::sqrt(std::max(0.0, sq(k))) / fam.dirs.dirs[k].k.cast<double>().norm();
  }
  return a;
}

Eigen::Matrix3d grad_at(const std::vector<Eigen::ArrayXd>& G, std::int64_t p) {
  Eigen::Matrix3d m;
  m << G[0](p), G[1](p), G[2](p), G[3](p), G[4](p), G[5](p), G[6](p), G[7](p), G[8](p);
  return m;
}

}  // namespace

double CellSetup::partition_defect() const {
  double worst = 0.0;
  const std::int64_t np = grid.points();
  for (std::int64_t p = 0; p < np; ++p) {
    double tsum = 0.0;
    for (size_t i = 0; i < stripes.size(); ++i) {
      const double e = stripes[i].eta.c[0](p);
      const double et = stripes[i].eta_tilde.c[0](p);
      tsum += et;
      worst = std::max(worst, std::abs(et * e - e));
      for (size_t j = 0; j < stripes.size(); ++j)
        if (j != i) worst = std::max(worst, std::abs(et * stripes[j].eta.c[0](p)));
    }
    worst = std::max(worst, std::abs(tsum - 1.0));
  }
  return worst;
}

CellSetup one_stripe_setup(const GridSpec& g, std::shared_ptr<const MikadoFamily> fam,
                           int Ncell, double kappa, double sigma) {
  CellSetup s;
  s.grid = g;
  s.Ncell = Ncell;
  s.kappa = kappa;
  s.sigma = sigma;
  s.fam = std::move(fam);
  CellSetup::Stripe st;
  st.eta = PeriodicField(g, Rank::scalar);
  st.eta.c[0].setConstant(1.0);
  st.eta_tilde = st.eta;
  st.disp = PeriodicField(g, Rank::vector);
  st.identity_map = true;
  st.Rtilde = PeriodicField(g, Rank::symtensor);
  for (int c : {XX, YY, ZZ}) st.Rtilde.c[c].setConstant(1.0);
  s.stripes.push_back(std::move(st));
  return s;
}

CellSetup random_setup(const GridSpec& g, std::shared_ptr<const MikadoFamily> fam,
                       int Ncell, double kappa, double sigma, std::uint64_t seed,
                       int nstripes, double rdev, double shear_amp) {
  if (nstripes < 1 || nstripes > 4)
    throw ConfigError("random_setup: stripe count out of range");
  CellSetup s;
  s.grid = g;
  s.Ncell = Ncell;
  s.kappa = kappa;
  s.sigma = sigma;
  s.fam = std::move(fam);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < nstripes; ++i) {
    CellSetup::Stripe st;
    st.eta = PeriodicField(g, Rank::scalar);
    st.eta_tilde = PeriodicField(g, Rank::scalar);
    st.disp = PeriodicField(g, Rank::vector);
    st.Rtilde = PeriodicField(g, Rank::symtensor);
    const double a1 = shear_amp * (0.5 + u01(rng));
    const double a2 = shear_amp * (0.5 + u01(rng));
    const double ph1 = kTwoPi * u01(rng), ph2 = kTwoPi * u01(rng);
    const int m1 = 1 + int(u01(rng) * 2.0), m2 = 1 + int(u01(rng) * 2.0);
    st.identity_map = false;
    Eigen::Matrix3d base = random_symmetric_ball(rng, rdev);
    std::int64_t p = 0;
    for (int ix = 0; ix < g.n; ++ix) {
      // banded partition in x1, nstripes bands per period
      const double zeta = g.x(ix) / kTwoPi * nstripes;
      double si = std::fmod(zeta - i + nstripes, double(nstripes));
      if (si > nstripes - 0.5) si -= nstripes;
      const double eta = nstripes == 1 ? 1.0 : plateau(si, kEps);
      const double etat = nstripes == 1 ? 1.0 : tilde_profile(si);
      for (int iy = 0; iy < g.n; ++iy)
        for (int iz = 0; iz < g.n; ++iz, ++p) {
          st.eta.c[0](p) = eta;
          st.eta_tilde.c[0](p) = etat;
          // composed shears: Phi = x + f(x2) e1 + h(x3) e2, det = 1 exactly
          st.disp.c[0](p) = a1 * std::sin(m1 * g.x(iy) + ph1);
          st.disp.c[1](p) = a2 * std::sin(m2 * g.x(iz) + ph2);
          const double mod = 1.0 + 0.5 * std::sin(g.x(ix) + ph1);
          st.Rtilde.set_sym_at(p, Eigen::Matrix3d::Identity() + mod * base);
        }
    }
    s.stripes.push_back(std::move(st));
  }
  return s;
}

void stripe_grad_map(const CellSetup& s, int i, std::vector<Eigen::ArrayXd>* G,
                     std::vector<Eigen::ArrayXd>* Ginv) {
  const GridSpec& g = s.grid;
  const CellSetup::Stripe& st = s.stripes.at(size_t(i));
  std::vector<Eigen::ArrayXd> gm(9);
  for (int j = 0; j < 3; ++j) {
    PeriodicField comp(g, Rank::scalar);
    comp.c[0] = st.disp.c[j];
    PeriodicField gc = grad(comp);
    for (int c = 0; c < 3; ++c) {
      gm[3 * j + c] = gc.c[c];
      if (c == j) gm[3 * j + c] += 1.0;
    }
  }
  if (Ginv) {
    Ginv->assign(9, Eigen::ArrayXd::Zero(g.points()));
    for (std::int64_t p = 0; p < g.points(); ++p) {
      const Eigen::Matrix3d inv = grad_at(gm, p).inverse();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) (*Ginv)[3 * r + c](p) = inv(r, c);
    }
  }
  if (G) *G = std::move(gm);
}

namespace {

std::vector<Eigen::ArrayXd> assemble_oscillatory(const CellSetup& s, bool conjugated) {
  const GridSpec& g = s.grid;
  const std::int64_t np = g.points();
  std::vector<Eigen::ArrayXd> A(9, Eigen::ArrayXd::Zero(np));
  if (!conjugated) {
    A[0].setConstant(s.kappa);
    A[4].setConstant(s.kappa);
    A[8].setConstant(s.kappa);
  }
  const double srt = std::sqrt(s.sigma);
  const int n = g.n;
  for (size_t i = 0; i < s.stripes.size(); ++i) {
    const CellSetup::Stripe& st = s.stripes[i];
    std::vector<Eigen::ArrayXd> Ginv;
    stripe_grad_map(s, int(i), nullptr, &Ginv);
    for (std::int64_t p = 0; p < np; ++p) {
      const double eta = st.eta.c[0](p);
      const double etat = st.eta_tilde.c[0](p);
      if (etat == 0.0 && eta == 0.0) continue;
      const Eigen::Matrix3d Gi = grad_at(Ginv, p);
      Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
      if (eta != 0.0 && s.sigma > 0.0) {
        const Eigen::VectorXd a = mikado_coeffs(st.Rtilde.sym_at(p), *s.fam);
        const int iz = int(p % n), iy = int((p / n) % n), ix = int(p / n / n);
        Eigen::Vector3d xi(g.x(ix) + st.disp.c[0](p), g.x(iy) + st.disp.c[1](p),
                           g.x(iz) + st.disp.c[2](p));
        xi *= double(s.Ncell);
        for (int k = 0; k < s.fam->size(); ++k) {
          Eigen::Vector3d gphi;
          eval_profile(*s.fam, k, xi, nullptr, &gphi);
          H += a(k) * h_matrix(s.fam->dirs.dirs[k].k.cast<double>().cross(gphi));
        }
        H *= srt * eta / double(s.Ncell);
      }
      Eigen::Matrix3d contrib;
      if (conjugated)
        contrib = etat * Gi * (s.kappa * Eigen::Matrix3d::Identity() + H) * Gi.transpose();
      else
        contrib = Gi * H * Gi.transpose();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) A[3 * r + c](p) += contrib(r, c);
    }
  }
  return A;
}

}  // namespace

DiffusivitySpec oscillatory_coefficient(const CellSetup& s, bool conjugated) {
  auto arrays = std::make_shared<std::vector<Eigen::ArrayXd>>(
      assemble_oscillatory(s, conjugated));
  DiffusivitySpec d = DiffusivitySpec::matrix([arrays](double) { return *arrays; });
  double emin = 1e300, emax = -1e300;
  const auto& A = *arrays;
  for (std::int64_t p = 0; p < s.grid.points(); ++p) {
    Eigen::Matrix3d m;
    m << A[0](p), A[1](p), A[2](p), A[3](p), A[4](p), A[5](p), A[6](p), A[7](p), A[8](p);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(0.5 * (m + m.transpose()));
    emin = std::min(emin, es.eigenvalues().minCoeff());
    emax = std::max(emax, es.eigenvalues().maxCoeff());
  }
  d.ellip_min = emin;
  d.ellip_max = emax;
  if (emin < 0.5 * s.kappa)
    throw DomainError(
        "oscillatory_coefficient: flow maps too deformed; symmetric part lost half of "
        "the microscopic ellipticity");
  return d;
}

PeriodicField wform_drift(const CellSetup& s) {
  const GridSpec& g = s.grid;
  PeriodicField z(g, Rank::vector);
  const double srt = std::sqrt(s.sigma);
  const int n = g.n;
  for (size_t i = 0; i < s.stripes.size(); ++i) {
    const CellSetup::Stripe& st = s.stripes[i];
    std::vector<Eigen::ArrayXd> G;
    stripe_grad_map(s, int(i), &G, nullptr);
    for (std::int64_t p = 0; p < g.points(); ++p) {
      const double eta = st.eta.c[0](p);
      if (eta == 0.0 || s.sigma == 0.0) continue;
      const Eigen::VectorXd a = mikado_coeffs(st.Rtilde.sym_at(p), *s.fam);
      const int iz = int(p % n), iy = int((p / n) % n), ix = int(p / n / n);
      Eigen::Vector3d xi(g.x(ix) + st.disp.c[0](p), g.x(iy) + st.disp.c[1](p),
                         g.x(iz) + st.disp.c[2](p));
      xi *= double(s.Ncell);
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      for (int k = 0; k < s.fam->size(); ++k) {
        Eigen::Vector3d gphi;
        eval_profile(*s.fam, k, xi, nullptr, &gphi);
        acc += a(k) * s.fam->dirs.dirs[k].k.cast<double>().cross(gphi);
      }
      z.set_vec_at(p, z.vec_at(p) + (srt * eta / s.Ncell) * (grad_at(G, p).transpose() * acc));
    }
  }
  return curl(z);
}

Eigen::Vector3d corrector_at(const CellSetup& s, int i, std::int64_t p,
                             const Eigen::Vector3d& xi) {
  const CellSetup::Stripe& st = s.stripes.at(size_t(i));
  std::vector<Eigen::ArrayXd> Ginv;
  stripe_grad_map(s, i, nullptr, &Ginv);
  const Eigen::VectorXd a = mikado_coeffs(st.Rtilde.sym_at(p), *s.fam);
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (int k = 0; k < s.fam->size(); ++k) {
    double phi = 0.0;
    eval_profile(*s.fam, k, xi, nullptr, nullptr, &phi);
    acc += a(k) * phi * s.fam->dirs.dirs[k].k.cast<double>();
  }
  return (std::sqrt(s.sigma) / (s.kappa * s.Ncell)) * (grad_at(Ginv, p) * acc);
}

double corrector_cell_flux_divergence(const CellSetup& s, int i, std::int64_t p,
                                      const GridSpec& cell_grid) {
  const CellSetup::Stripe& st = s.stripes.at(size_t(i));
  std::vector<Eigen::ArrayXd> Ginv;
  stripe_grad_map(s, i, nullptr, &Ginv);
  const Eigen::Matrix3d Gi = grad_at(Ginv, p);
  const double eta = st.eta.c[0](p);
  const Eigen::VectorXd a = mikado_coeffs(st.Rtilde.sym_at(p), *s.fam);
  const double pref = std::sqrt(s.sigma) / (s.kappa * s.Ncell);

  double worst = 0.0;
  for (int j = 0; j < 3; ++j) {
    const Eigen::Vector3d ej = Eigen::Vector3d::Unit(j);
    // per-direction weights of grad_xi chi_j
    Eigen::VectorXd wj(s.fam->size());
    for (int k = 0; k < s.fam->size(); ++k)
      wj(k) = pref * a(k) * (Gi * s.fam->dirs.dirs[k].k.cast<double>()).dot(ej);
    // cell means <H_k grad chi_j> (cross terms vanish by orthogonality)
    std::vector<Eigen::Vector3d> mean_term(s.fam->size());
    for (int k = 0; k < s.fam->size(); ++k)
      mean_term[k] = wj(k) * s.fam->gradnorm[k] * s.fam->dirs.dirs[k].k.cast<double>();

    // gradPhi b_j = kappa grad chi_j + (sigma^{1/2}/N) sum_k a_k (H_k Ginv^T e_j
    //             + eta H_k grad chi_j - eta <H_k grad chi_j>)
    PeriodicField flux(cell_grid, Rank::vector);
    std::int64_t q = 0;
    for (int cx = 0; cx < cell_grid.n; ++cx)
      for (int cy = 0; cy < cell_grid.n; ++cy)
        for (int cz = 0; cz < cell_grid.n; ++cz, ++q) {
          const Eigen::Vector3d xi(cell_grid.x(cx), cell_grid.x(cy), cell_grid.x(cz));
          Eigen::Vector3d gchi = Eigen::Vector3d::Zero();
          std::vector<Eigen::Vector3d> gphis(s.fam->size());
          for (int k = 0; k < s.fam->size(); ++k) {
            eval_profile(*s.fam, k, xi, nullptr, &gphis[k]);
            gchi += wj(k) * gphis[k];
          }
          Eigen::Vector3d b = s.kappa * gchi;
          for (int k = 0; k < s.fam->size(); ++k) {
            const Eigen::Matrix3d Hk =
                h_matrix(s.fam->dirs.dirs[k].k.cast<double>().cross(gphis[k]));
            b += (std::sqrt(s.sigma) / s.Ncell) * a(k) *
                 (Hk * (Gi.transpose() * ej) + eta * Hk * gchi - eta * mean_term[k]);
          }
          flux.set_vec_at(q, b);
        }
    PeriodicField dv = div(flux);
    const double scale = std::max(linf_norm(flux), 1e-300);
    worst = std::max(worst, linf_norm(dv) / (scale * cell_grid.n));
  }
  return worst;
}

PeriodicField kappa_bar_field(const CellSetup& s) {
  PeriodicField kb(s.grid, Rank::scalar);
  kb.c[0].setConstant(1.0);
  const double gain = s.fam->flux_gain();
  for (const auto& st : s.stripes)
    kb.c[0] += st.eta.c[0].square() *
               (s.sigma * gain / (s.kappa * s.kappa * s.Ncell * double(s.Ncell)));
  kb.c[0] *= s.kappa;
  return kb;
}

EffectiveForm effective_tensor(const CellSetup& s, int cell_n, int slow_samples) {
  const GridSpec& g = s.grid;
  const std::int64_t np = g.points();
  EffectiveForm out;
  out.closed.assign(9, Eigen::ArrayXd::Zero(np));
  const double gain = s.fam->flux_gain();

  std::vector<std::vector<Eigen::ArrayXd>> Ginvs(s.stripes.size());
  for (size_t i = 0; i < s.stripes.size(); ++i)
    stripe_grad_map(s, int(i), nullptr, &Ginvs[i]);

  for (std::int64_t p = 0; p < np; ++p) {
    Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
    for (size_t i = 0; i < s.stripes.size(); ++i) {
      const auto& st = s.stripes[i];
      const Eigen::Matrix3d Gi = grad_at(Ginvs[i], p);
      const double eta = st.eta.c[0](p), etat = st.eta_tilde.c[0](p);
      if (etat != 0.0) acc += s.kappa * etat * Gi * Gi.transpose();
      if (eta != 0.0 && s.sigma > 0.0)
        acc += (s.sigma * gain / (double(s.Ncell) * s.Ncell * s.kappa)) * eta * eta *
               Gi * st.Rtilde.sym_at(p) * Gi.transpose();
    }
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out.closed[3 * r + c](p) = acc(r, c);
  }

  // direct cell quadrature at sampled slow points
  GridSpec cg(cell_n, 1.0);
  std::mt19937_64 rng(12345);
  const double pref = std::sqrt(s.sigma) / (s.kappa * s.Ncell);
  out.quadrature.assign(9, Eigen::ArrayXd::Zero(slow_samples));
  for (int t = 0; t < slow_samples; ++t) {
    const std::int64_t p = std::int64_t(rng() % std::uint64_t(np));
    out.sample_points.push_back(p);
    std::vector<Eigen::VectorXd> coeff(s.stripes.size());
    std::vector<Eigen::Matrix3d> Gi(s.stripes.size()), Gm(s.stripes.size());
    for (size_t i = 0; i < s.stripes.size(); ++i) {
      Gi[i] = grad_at(Ginvs[i], p);
      Gm[i] = Gi[i].inverse();
      coeff[i] = s.sigma > 0.0 ? mikado_coeffs(s.stripes[i].Rtilde.sym_at(p), *s.fam)
                               : Eigen::VectorXd::Zero(s.fam->size());
    }
    Eigen::Matrix3d quad = Eigen::Matrix3d::Zero();
    std::int64_t q = 0;
    for (int cx = 0; cx < cg.n; ++cx)
      for (int cy = 0; cy < cg.n; ++cy)
        for (int cz = 0; cz < cg.n; ++cz, ++q) {
          const Eigen::Vector3d xi(cg.x(cx), cg.x(cy), cg.x(cz));
          Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
          Eigen::Matrix3d M = Eigen::Matrix3d::Identity();
          for (size_t i = 0; i < s.stripes.size(); ++i) {
            const auto& st = s.stripes[i];
            const double eta = st.eta.c[0](p), etat = st.eta_tilde.c[0](p);
            Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
            Eigen::Matrix3d gchiT = Eigen::Matrix3d::Zero();
            for (int k = 0; k < s.fam->size(); ++k) {
              Eigen::Vector3d gphi;
              eval_profile(*s.fam, k, xi, nullptr, &gphi);
              const Eigen::Vector3d kv = s.fam->dirs.dirs[k].k.cast<double>();
              H += coeff[i](k) * h_matrix(kv.cross(gphi));
              gchiT += pref * coeff[i](k) * gphi * (Gi[i] * kv).transpose();
            }
            A += etat * Gi[i] *
                 (s.kappa * Eigen::Matrix3d::Identity() +
                  (std::sqrt(s.sigma) * eta / s.Ncell) * H) *
                 Gi[i].transpose();
            M += eta * Gm[i].transpose() * gchiT;
          }
          quad += A * M;
        }
    quad /= double(cg.points());
    Eigen::Matrix3d closed_here;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        closed_here(r, c) = out.closed[3 * r + c](p);
        out.quadrature[3 * r + c](t) = quad(r, c);
      }
    out.rel_err = std::max(
        out.rel_err, (quad - closed_here).norm() / std::max(closed_here.norm(), 1e-300));
  }
  return out;
}

DiffusivitySpec EffectiveForm::spec() const {
  auto arrays = std::make_shared<std::vector<Eigen::ArrayXd>>(closed);
  return DiffusivitySpec::matrix([arrays](double) { return *arrays; });
}

EffectiveGapReport two_scale_gap(const CellSetup& s, const PeriodicField& rho_in,
                                 double T, int l_trunc, const SolveOptions& opt_in) {
  EffectiveGapReport rep;
  DiffusivitySpec Atilde = oscillatory_coefficient(s, true);
  EffectiveForm eff = effective_tensor(s, 16, 4);
  DiffusivitySpec Abar = eff.spec();

  auto zero_u = std::make_shared<PeriodicField>(s.grid, Rank::vector);
  SolveOptions opt = opt_in;
  opt.snapshots = std::max(opt.snapshots, 8);
  {
    ScalarRun pr = solve_advdiff(rho_in, static_drift(zero_u), Atilde, T / 1000.0, opt_in);
    ScalarRun pe = solve_advdiff(rho_in, static_drift(zero_u), Abar, T / 1000.0, opt_in);
    opt.dt = std::min(pr.dt_used, pe.dt_used);
  }
  ScalarRun resolved = solve_advdiff(rho_in, static_drift(zero_u), Atilde, T, opt);
  ScalarRun effective = solve_advdiff(rho_in, static_drift(zero_u), Abar, T, opt);
  rep.resolved_D = resolved.ledger.final_dissipation();
  rep.effective_D = effective.ledger.final_dissipation();

  // first-order corrector of the ansatz evaluated on the slow grid
  std::vector<std::vector<Eigen::ArrayXd>> Ginvs(s.stripes.size());
  for (size_t i = 0; i < s.stripes.size(); ++i)
    stripe_grad_map(s, int(i), nullptr, &Ginvs[i]);
  auto corrector_field = [&](const PeriodicField& rb) {
    PeriodicField grad_rb = grad(rb);
    PeriodicField corr(s.grid, Rank::scalar);
    if (s.sigma == 0.0) return corr;
    const double pref = std::sqrt(s.sigma) / (s.kappa * s.Ncell);
    const int n = s.grid.n;
    for (size_t i = 0; i < s.stripes.size(); ++i) {
      const auto& st = s.stripes[i];
      std::int64_t p = 0;
      for (int ix = 0; ix < n; ++ix)
        for (int iy = 0; iy < n; ++iy)
          for (int iz = 0; iz < n; ++iz, ++p) {
            const double eta = st.eta.c[0](p);
            if (eta == 0.0) continue;
            Eigen::Vector3d xi(s.grid.x(ix) + st.disp.c[0](p),
                               s.grid.x(iy) + st.disp.c[1](p),
                               s.grid.x(iz) + st.disp.c[2](p));
            xi *= double(s.Ncell);
            const Eigen::VectorXd a = mikado_coeffs(st.Rtilde.sym_at(p), *s.fam);
            Eigen::Vector3d acc = Eigen::Vector3d::Zero();
            for (int k = 0; k < s.fam->size(); ++k) {
              double phi = 0.0;
              eval_profile(*s.fam, k, xi, nullptr, nullptr, &phi);
              acc += a(k) * phi * s.fam->dirs.dirs[k].k.cast<double>();
            }
            const Eigen::Vector3d chi = pref * (grad_at(Ginvs[i], p) * acc);
            corr.c[0](p) += (eta / s.Ncell) * chi.dot(grad_rb.vec_at(p));
          }
    }
    return corr;
  };

  auto account = [&](const PeriodicField& r, const PeriodicField& rb) {
    PeriodicField diff = r - rb;
    const double gap = l2_norm(diff);
    rep.sup_gap = std::max(rep.sup_gap, gap * gap);
    PeriodicField corr = corrector_field(rb);
    const double cn = l2_norm(corr);
    rep.corrector_term = std::max(rep.corrector_term, cn * cn);
    PeriodicField resid = diff - corr;
    const double rn = l2_norm(resid);
    rep.ansatz_residual = std::max(rep.ansatz_residual, rn * rn);
  };
  const size_t nsnap = std::min(resolved.snapshots.size(), effective.snapshots.size());
  for (size_t i = 0; i < nsnap; ++i) account(resolved.snapshots[i], effective.snapshots[i]);
  account(resolved.rho, effective.rho);
  rep.diss_gap = std::abs(l2_norm(resolved.rho) * l2_norm(resolved.rho) -
                          l2_norm(effective.rho) * l2_norm(effective.rho));

  // D functional: trapezoid of |kbar^{1/2} grad rhobar|^2 over the snapshots
  // plus the tau-weighted initial-data tower
  PeriodicField kb = kappa_bar_field(s);
  double dint = 0.0;
  {
    std::vector<const PeriodicField*> snaps{&rho_in};
    std::vector<double> times{0.0};
    for (size_t i = 0; i < effective.snapshots.size(); ++i) {
      snaps.push_back(&effective.snapshots[i]);
      times.push_back(effective.snap_times[i]);
    }
    snaps.push_back(&effective.rho);
    times.push_back(T);
    std::vector<double> vals;
    for (const PeriodicField* f : snaps) {
      PeriodicField gf = grad(*f);
      double v = 0.0;
      for (int c = 0; c < 3; ++c) v += (kb.c[0] * gf.c[c].square()).mean();
      vals.push_back(v * kTwoPi * kTwoPi * kTwoPi);
    }
    for (size_t i = 0; i + 1 < vals.size(); ++i)
      dint += 0.5 * (vals[i] + vals[i + 1]) * (times[i + 1] - times[i]);
  }
  ScalarRun tmp;
  tmp.rho = rho_in;
  auto tower = weighted_norm_ledger(tmp, kb, std::min(l_trunc, 4));
  double tow = 0.0;
  for (int j = 1; j < int(tower.size()); ++j) tow += std::pow(s.tau, j) * tower[j].back();
  rep.Dfunc = dint + tow;
  return rep;
}

}  // namespace mklab
