#include "mklab/mikado.hpp"

#include <cmath>
#include <random>

#include "mklab/fft.hpp"
#include "mklab/spectral_ops.hpp"

namespace mklab {

namespace {

const double kSqrt2 = std::sqrt(2.0);

Direction make_direction(const Eigen::Vector3i& k) {
  Direction d;
  d.k = k;
  d.khat = k.cast<double>().normalized();
  const int nz = (k.array() != 0).count();
  if (nz == 1) {
    // axis direction: plane basis = the other two axes, cyclic
    int a = 0;
    while (k(a) == 0) ++a;
    d.f1 = Eigen::Vector3d::Unit((a + 1) % 3);
    d.f2 = Eigen::Vector3d::Unit((a + 2) % 3);
    d.L1 = d.L2 = kTwoPi;
  } else {
    // e_i +- e_j: in-plane lattice direction (e_i -+ e_j)/sqrt2 with period
    // pi*sqrt2, plus the remaining axis with period 2*pi
    int l = 0;
    for (int t = 0; t < 3; ++t)
      if (k(t) == 0) l = t;
    const int i = (l + 1) % 3;
    const int j = (l + 2) % 3;
    Eigen::Vector3d f1 = Eigen::Vector3d::Zero();
    f1(i) = k(j);
    f1(j) = -k(i);
    d.f1 = f1.normalized();
    d.f2 = Eigen::Vector3d::Unit(l);
    d.L1 = kTwoPi / kSqrt2;
    d.L2 = kTwoPi;
  }
  return d;
}

inline double wrap_center(double v, double L) {
  v = std::fmod(v, L);
  if (v < -0.5 * L) v += L;
  if (v >= 0.5 * L) v -= L;
  return v;
}

// periodic distance from a 3D point to the axis line of direction d
inline double axis_distance(const Direction& d, const Eigen::Vector3d& x) {
  const double u1 = wrap_center(d.f1.dot(x) - d.offset(0), d.L1);
  const double u2 = wrap_center(d.f2.dot(x) - d.offset(1), d.L2);
  return std::hypot(u1, u2);
}

// offsets found by seeded multistart + coordinate descent over the plane
// offsets, maximizing the min pairwise axis distance (frozen result)
constexpr double kTubeOffsets[9][2] = {
    {4.63122985, 1.56870802}, {0.69695454, 0.10341376}, {1.02009109, 2.23972386},
    {2.77146623, 2.36588582}, {0.36025176, 3.16303638}, {1.09890650, 4.12709949},
    {0.85587602, 5.24615436}, {2.97303716, 5.42807387}, {1.41969292, 3.67021711}};

}  // namespace

double min_pairwise_axis_distance(const DirectionSet& ds, int samples_per_line) {
  double best = 1e300;
  for (int a = 0; a < ds.size(); ++a) {
    const Direction& A = ds.dirs[a];
    const double len = kTwoPi * A.k.cast<double>().norm();
    const Eigen::Vector3d base = A.offset(0) * A.f1 + A.offset(1) * A.f2;
    for (int b = 0; b < ds.size(); ++b) {
      if (b == a) continue;
      const Direction& B = ds.dirs[b];
      double m = 1e300;
      for (int s = 0; s < samples_per_line; ++s) {
        const Eigen::Vector3d x = base + (len * s / samples_per_line) * A.khat;
        m = std::min(m, axis_distance(B, x));
      }
      best = std::min(best, m);
    }
  }
  return best;
}

DirectionSet build_direction_set(double radius) {
  DirectionSet ds;
  ds.kind = MikadoKind::tube;
  const int raw[9][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, -1, 0},
                         {0, 1, 1}, {0, 1, -1}, {1, 0, 1}, {1, 0, -1}};
  for (auto& r : raw) ds.dirs.push_back(make_direction(Eigen::Vector3i(r[0], r[1], r[2])));
  for (int i = 0; i < 9; ++i)
    ds.dirs[i].offset = Eigen::Vector2d(kTubeOffsets[i][0], kTubeOffsets[i][1]);
  const int cert_samples = 1 << 17;
  ds.min_axis_distance = min_pairwise_axis_distance(ds, cert_samples);
  ds.certificate_samples = std::int64_t(cert_samples) * (ds.size() * (ds.size() - 1));
  const double feasible = 0.499 * ds.min_axis_distance;
  if (radius <= 0.0) radius = feasible;
  if (radius > feasible)
    throw ConfigError("build_direction_set: tubes of radius " + std::to_string(radius) +
                      " cannot be pairwise disjoint; maximal feasible radius is " +
                      std::to_string(feasible));
  ds.radius = radius;
  return ds;
}

DirectionSet build_shear_direction_set() {
  DirectionSet ds;
  ds.kind = MikadoKind::shear;
  const int raw[6][3] = {{1, 1, 0}, {1, -1, 0}, {0, 1, 1}, {0, 1, -1}, {1, 0, 1}, {1, 0, -1}};
  const int mode_axis[6] = {2, 2, 0, 0, 1, 1};
  for (int i = 0; i < 6; ++i) {
    Direction d = make_direction(Eigen::Vector3i(raw[i][0], raw[i][1], raw[i][2]));
    d.shear_mode = Eigen::Vector3i::Zero();
    d.shear_mode(mode_axis[i]) = 1;
    d.shear_phase = (i % 2 == 0) ? 0.0 : 0.5 * M_PI;  // cos / sin pairs per mode
    ds.dirs.push_back(d);
  }
  return ds;
}

Eigen::Matrix<double, 6, 1> sym_to_vec6(const Eigen::Matrix3d& m) {
  Eigen::Matrix<double, 6, 1> v;
  v << m(0, 0), m(1, 1), m(2, 2), kSqrt2 * m(0, 1), kSqrt2 * m(0, 2), kSqrt2 * m(1, 2);
  return v;
}

Eigen::Matrix3d vec6_to_sym(const Eigen::Matrix<double, 6, 1>& v) {
  Eigen::Matrix3d m;
  const double s = 1.0 / kSqrt2;
  m << v(0), s * v(3), s * v(4), s * v(3), v(1), s * v(5), s * v(4), s * v(5), v(2);
  return m;
}

NashCoeffs nash_coeffs(const DirectionSet& ds) {
  NashCoeffs nc;
  const int K = ds.size();
  nc.dyads.resize(6, K);
  for (int j = 0; j < K; ++j) {
    const Eigen::Vector3d kh = ds.dirs[j].khat;
    nc.dyads.col(j) = sym_to_vec6(kh * kh.transpose());
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(nc.dyads,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  if (svd.rank() < 6)
    throw ConfigError("nash_coeffs: direction dyads do not span the symmetric matrices");
  // base weights: 1/3 on the 9-direction set, 1/2 on the 6 diagonals
  nc.base = Eigen::VectorXd::Constant(K, K == 9 ? 1.0 / 3.0 : 0.5);
  const Eigen::Matrix<double, 6, 1> id6 = sym_to_vec6(Eigen::Matrix3d::Identity());
  if ((nc.dyads * nc.base - id6).norm() > 1e-12)
    throw ConfigError("nash_coeffs: base weights do not reproduce the identity");
  // min-norm right inverse: L = D^T (D D^T)^{-1}
  Eigen::MatrixXd DDt = nc.dyads * nc.dyads.transpose();
  nc.right_inverse = nc.dyads.transpose() * DDt.inverse();
  if (K > 6) {
    // orthonormal null basis from the full SVD
    Eigen::JacobiSVD<Eigen::MatrixXd> full(nc.dyads, Eigen::ComputeFullV);
    nc.null_basis = full.matrixV().rightCols(K - 6);
  } else {
    nc.null_basis.resize(K, 0);
    // without null-space slack, positivity only holds on a smaller ball:
    // certified radius = min_k base_k / max_k nuclear norm of the k-th row
    double worst = 0.0;
    for (int j = 0; j < K; ++j) {
      Eigen::Matrix3d row = vec6_to_sym(nc.right_inverse.row(j).transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(row);
      worst = std::max(worst, es.eigenvalues().cwiseAbs().sum());
    }
    nc.ball_radius = std::min(0.5, nc.base.minCoeff() / worst);
  }
  return nc;
}

Eigen::VectorXd nash_squares(const Eigen::Matrix3d& R, const NashCoeffs& nc) {
  const Eigen::Matrix<double, 6, 1> dv = sym_to_vec6(R - Eigen::Matrix3d::Identity());
  Eigen::VectorXd g = nc.base + nc.right_inverse * dv;
  const int m = int(nc.null_basis.cols());
  if (m == 0) return g;
  // soft-min recentering along the null space: minimize
  // sum_k exp(-(g + Z z)_k / eps) over z; smooth in R, reconstruction exact
  const double eps = nc.repair_eps;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd margins = g;
  double f = (-(margins.array() / eps)).exp().sum();
  for (int it = 0; it < 60; ++it) {
    const Eigen::ArrayXd w = (-(margins.array() / eps)).exp();
    const Eigen::VectorXd grad = -(nc.null_basis.transpose() * w.matrix()) / eps;
    if (grad.norm() <= 1e-13 * std::max(1.0, f / eps)) break;
    Eigen::MatrixXd hess = nc.null_basis.transpose() * w.matrix().asDiagonal() *
                           nc.null_basis / (eps * eps);
    Eigen::VectorXd dz = -hess.ldlt().solve(grad);
    double step = 1.0;
    for (int ls = 0; ls < 40; ++ls) {
      const Eigen::VectorXd zt = z + step * dz;
      const Eigen::VectorXd mt = g + nc.null_basis * zt;
      const double ft = (-(mt.array() / eps)).exp().sum();
      if (ft <= f) {
        z = zt;
        margins = mt;
        f = ft;
        break;
      }
      step *= 0.5;
    }
  }
  return margins;
}

Eigen::VectorXd nash_decompose(const Eigen::Matrix3d& R, const NashCoeffs& nc) {
  if ((R - R.transpose()).norm() > 1e-12 * std::max(1.0, R.norm()))
    throw PreconditionError("nash_decompose: R must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(R - Eigen::Matrix3d::Identity());
  const double opnorm = es.eigenvalues().cwiseAbs().maxCoeff();
  if (opnorm > nc.ball_radius + 1e-14)
    throw DomainError("nash_decompose: ||R - Id||_op = " + std::to_string(opnorm) +
                      " exceeds the coefficient ball radius " +
                      std::to_string(nc.ball_radius));
  Eigen::VectorXd sq = nash_squares(R, nc);
  if (sq.minCoeff() < -1e-13)
    throw DomainError("nash_decompose: negative coefficient square inside the ball");
  return sq.cwiseMax(0.0).cwiseSqrt();
}

// --- tube cross-section profile -------------------------------------------

namespace {

inline double bump(double t) {
  const double t2 = t * t;
  if (t2 >= 1.0 - 1e-12) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - t2));
}
inline double bump_d(double t) {
  const double t2 = t * t;
  if (t2 >= 1.0 - 1e-12) return 0.0;
  const double om = 1.0 - t2;
  return bump(t) * (-2.0 * t / (om * om));
}
inline double bump_dd(double t) {
  const double t2 = t * t;
  if (t2 >= 1.0 - 1e-12) return 0.0;
  const double om = 1.0 - t2;
  const double e1 = -2.0 * t / (om * om);
  const double e2 = -(2.0 + 6.0 * t2) / (om * om * om);
  return bump(t) * (e1 * e1 + e2);
}

}  // namespace

double TubeProfile::value(double d) const {
  const double c = (w1 * w1) / (w2 * w2);
  return amplitude * (bump(d / w1) - c * bump(d / w2));
}
double TubeProfile::dvalue(double d) const {
  const double c = (w1 * w1) / (w2 * w2);
  return amplitude * (bump_d(d / w1) / w1 - c * bump_d(d / w2) / w2);
}
double TubeProfile::lap2d(double d) const {
  const double c = (w1 * w1) / (w2 * w2);
  if (d < 1e-9)
    return amplitude * 2.0 * (bump_dd(0.0) / (w1 * w1) - c * bump_dd(0.0) / (w2 * w2));
  const double gpp =
      amplitude * (bump_dd(d / w1) / (w1 * w1) - c * bump_dd(d / w2) / (w2 * w2));
  return gpp + dvalue(d) / d;
}

namespace {

// continuum cross-section integrals of the profile
void profile_cross_integrals(const TubeProfile& p, double* grad2, double* lap2) {
  const int nq = 20000;
  double ig = 0.0, il = 0.0;
  for (int i = 0; i < nq; ++i) {
    const double d = p.w2 * (i + 0.5) / nq;
    const double gp = p.dvalue(d);
    const double lp = p.lap2d(d);
    ig += gp * gp * d;
    il += lp * lp * d;
  }
  const double dd = p.w2 / nq;
  *grad2 = kTwoPi * ig * dd;
  *lap2 = kTwoPi * il * dd;
}

// Alternate projections onto {supported in the tube, zero mean} against the
// spectral plane constraint {m.k = 0}; ends with the support-side projection.
// The tube indicator is itself constant along k, so the in-tube mean shift
// only touches admissible modes and the scheme converges fast.
double pocs_clean(PeriodicField& phi, const Direction& dir,
                  const std::vector<char>& inside, int max_iter) {
  const GridSpec& g = phi.grid;
  const int n = g.n;
  std::int64_t inside_count = 0;
  for (char c : inside) inside_count += c;
  const double frac = double(inside_count) / double(g.points());

  auto support_project = [&](PeriodicField& f) {
    for (std::int64_t q = 0; q < g.points(); ++q)
      if (!inside[size_t(q)]) f.c[0](q) = 0.0;
    const double shift = f.c[0].mean() / frac;
    for (std::int64_t q = 0; q < g.points(); ++q)
      if (inside[size_t(q)]) f.c[0](q) -= shift;
  };

  support_project(phi);
  double bad = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    SpectralField s = fft::forward(phi);
    double bad2 = 0.0, tot2 = 0.0;
    std::int64_t p = 0;
    for (int jx = 0; jx < n; ++jx) {
      const int kx = wavenumber(jx, n);
      for (int jy = 0; jy < n; ++jy) {
        const int ky = wavenumber(jy, n);
        for (int jz = 0; jz <= n / 2; ++jz, ++p) {
          const double w = (jz == 0 || jz == n / 2) ? 1.0 : 2.0;
          const long long dot = (long long)kx * dir.k(0) + (long long)ky * dir.k(1) +
                                (long long)jz * dir.k(2);
          const double e = std::norm(s.c[0](p));
          tot2 += w * e;
          if (dot != 0) {
            bad2 += w * e;
            s.c[0](p) = 0.0;
          }
        }
      }
    }
    bad = std::sqrt(bad2 / std::max(tot2, 1e-300));
    phi = fft::inverse(s);
    support_project(phi);
    if (bad < 5e-14) break;
  }
  return bad;
}

}  // namespace

MikadoFamily build_profiles(const DirectionSet& ds, const GridSpec& grid,
                            double target_gradnorm) {
  MikadoFamily fam;
  fam.dirs = ds;
  fam.grid = grid;
  fam.coeffs = nash_coeffs(ds);
  const int K = ds.size();
  fam.phi.resize(K);
  fam.prof.resize(K);
  fam.gradnorm.resize(K);
  fam.lapnorm.resize(K);

  if (ds.kind == MikadoKind::shear) {
    for (int j = 0; j < K; ++j) {
      const Direction& d = ds.dirs[j];
      PeriodicField phi(grid, Rank::scalar);
      std::int64_t p = 0;
      for (int ix = 0; ix < grid.n; ++ix)
        for (int iy = 0; iy < grid.n; ++iy)
          for (int iz = 0; iz < grid.n; ++iz, ++p) {
            const double ph = d.shear_mode(0) * grid.x(ix) +
                              d.shear_mode(1) * grid.x(iy) +
                              d.shear_mode(2) * grid.x(iz) + d.shear_phase;
            phi.c[0](p) = kSqrt2 * std::cos(ph);
          }
      fam.phi[j] = std::move(phi);
      PeriodicField gphi = grad(fam.phi[j]);
      fam.gradnorm[j] = dot_mean(gphi, gphi);
      PeriodicField lphi = laplacian(fam.phi[j]);
      fam.lapnorm[j] = dot_mean(lphi, lphi);
    }
    return fam;
  }

  // tube construction
  const double r = ds.radius;
  if (2.0 * r < 8.0 * grid.h())
    throw ResolutionError(
        "build_profiles: grid does not resolve the tube radius with >= 8 points "
        "across a diameter");
  // reference ratio at unit width; pure width scaling gives ratio ~ 1/w^2
  TubeProfile ref;
  ref.w2 = 1.0;
  ref.w1 = 0.75;
  ref.amplitude = 1.0;
  double ig1 = 0.0, il1 = 0.0;
  profile_cross_integrals(ref, &ig1, &il1);
  const double ratio1 = il1 / ig1;
  const double wmax = 0.96 * r;
  const double gmax = (wmax * wmax) / ratio1;
  if (target_gradnorm <= 0.0) target_gradnorm = 0.95 * gmax;
  if (target_gradnorm > gmax)
    throw ConfigError("build_profiles: requested gradnorm target " +
                      std::to_string(target_gradnorm) +
                      " infeasible at tube radius; max is " + std::to_string(gmax));
  const double w2 = std::sqrt(target_gradnorm * ratio1);
  fam.analytic_gain = target_gradnorm;  // = w2^2/ratio1, the realized grad/lap ratio

  for (int j = 0; j < K; ++j) {
    const Direction& d = ds.dirs[j];
    TubeProfile prof;
    prof.w2 = w2;
    prof.w1 = 0.75 * w2;
    prof.amplitude = 1.0;

    PeriodicField phi(grid, Rank::scalar);
    std::vector<char> inside(size_t(grid.points()), 0);
    std::int64_t p = 0;
    for (int ix = 0; ix < grid.n; ++ix)
      for (int iy = 0; iy < grid.n; ++iy)
        for (int iz = 0; iz < grid.n; ++iz, ++p) {
          const Eigen::Vector3d x(grid.x(ix), grid.x(iy), grid.x(iz));
          const double dist = axis_distance(d, x);
          inside[size_t(p)] = dist < prof.w2 ? 1 : 0;
          phi.c[0](p) = prof.value(dist);
        }
    pocs_clean(phi, d, inside, 400);

    PeriodicField lap = laplacian(phi);
    const double ln = dot_mean(lap, lap);
    if (!(ln > 0.0)) throw ResolutionError("build_profiles: degenerate tube profile");
    const double amp = 1.0 / std::sqrt(ln);
    phi *= amp;
    prof.amplitude = amp;

    fam.phi[j] = std::move(phi);
    fam.prof[j] = prof;
    PeriodicField gphi = grad(fam.phi[j]);
    fam.gradnorm[j] = dot_mean(gphi, gphi);
    PeriodicField lphi = laplacian(fam.phi[j]);
    fam.lapnorm[j] = dot_mean(lphi, lphi);
  }
  return fam;
}

void mikado_fields(const MikadoFamily& fam, int dir, PeriodicField* W, PeriodicField* U) {
  if (dir < 0 || dir >= fam.size())
    throw PreconditionError("mikado_fields: unknown direction index");
  const Direction& d = fam.dirs.dirs[dir];
  const PeriodicField& phi = fam.phi[dir];
  if (W) {
    PeriodicField psi = laplacian(phi);
    *W = PeriodicField(fam.grid, Rank::vector);
    for (int j = 0; j < 3; ++j) W->c[j] = psi.c[0] * double(d.k(j));
  }
  if (U) {
    PeriodicField gphi = grad(phi);
    *U = PeriodicField(fam.grid, Rank::vector);
    const Eigen::Vector3d kv = d.k.cast<double>();
    U->c[0] = kv(1) * gphi.c[2] - kv(2) * gphi.c[1];
    U->c[1] = kv(2) * gphi.c[0] - kv(0) * gphi.c[2];
    U->c[2] = kv(0) * gphi.c[1] - kv(1) * gphi.c[0];
  }
}

void eval_profile(const MikadoFamily& fam, int dir, const Eigen::Vector3d& xi,
                  double* psi, Eigen::Vector3d* gphi, double* phi_val) {
  const Direction& d = fam.dirs.dirs[dir];
  if (fam.dirs.kind == MikadoKind::shear) {
    const double ph = d.shear_mode.cast<double>().dot(xi) + d.shear_phase;
    const double c = std::cos(ph), s = std::sin(ph);
    if (phi_val) *phi_val = kSqrt2 * c;
    if (psi) *psi = -kSqrt2 * c;  // |m| = 1
    if (gphi) *gphi = -kSqrt2 * s * d.shear_mode.cast<double>();
    return;
  }
  const TubeProfile& p = fam.prof[dir];
  const double u1 = wrap_center(d.f1.dot(xi) - d.offset(0), d.L1);
  const double u2 = wrap_center(d.f2.dot(xi) - d.offset(1), d.L2);
  const double dist = std::hypot(u1, u2);
  if (phi_val) *phi_val = p.value(dist);
  if (psi) *psi = p.lap2d(dist);
  if (gphi) {
    if (dist < 1e-9) {
      *gphi = Eigen::Vector3d::Zero();
    } else {
      const double gp = p.dvalue(dist) / dist;
      *gphi = gp * (u1 * d.f1 + u2 * d.f2);
    }
  }
}

PeriodicField assemble_mikado_velocity(const MikadoFamily& fam, const Eigen::Matrix3d& R) {
  const Eigen::VectorXd a = nash_decompose(R, fam.coeffs);
  PeriodicField W(fam.grid, Rank::vector);
  for (int j = 0; j < fam.size(); ++j) {
    PeriodicField Wk;
    mikado_fields(fam, j, &Wk, nullptr);
    const double knorm = fam.dirs.dirs[j].k.cast<double>().norm();
    const double c = a(j) / knorm;
    for (int m = 0; m < 3; ++m) W.c[m] += c * Wk.c[m];
  }
  return W;
}

Eigen::Matrix3d second_moment(const PeriodicField& v) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) m(i, j) = m(j, i) = (v.c[i] * v.c[j]).mean();
  return m;
}

}  // namespace mklab
