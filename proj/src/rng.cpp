#include "mklab/rng.hpp"

#include "mklab/spectral_ops.hpp"

namespace mklab {

namespace {

// superpose random cosine waves; exact, Hermitian-symmetric by construction
void fill_random(Eigen::ArrayXd& a, const GridSpec& g, std::mt19937_64& rng,
                 int kmax, double k0) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, kTwoPi);
  const int n = g.n;
  a = Eigen::ArrayXd::Zero(g.points());
  Eigen::ArrayXd xs(n);
  for (int i = 0; i < n; ++i) xs(i) = g.x(i);
  for (int kx = 0; kx <= kmax; ++kx)
    for (int ky = -kmax; ky <= kmax; ++ky)
      for (int kz = -kmax; kz <= kmax; ++kz) {
        if (kx == 0 && (ky < 0 || (ky == 0 && kz <= 0))) continue;  // one per conjugate pair
        const double k2 = double(kx) * kx + double(ky) * ky + double(kz) * kz;
        if (k2 == 0.0 || k2 > double(kmax) * kmax) continue;
        const double amp = gauss(rng) * std::exp(-k2 / (k0 * k0));
        const double phase = unif(rng);
        if (amp == 0.0) continue;
        std::int64_t p = 0;
        for (int ix = 0; ix < n; ++ix) {
          const double phx = kx * xs(ix) + phase;
          for (int iy = 0; iy < n; ++iy) {
            const double phxy = phx + ky * xs(iy);
            for (int iz = 0; iz < n; ++iz, ++p) a(p) += amp * std::cos(phxy + kz * xs(iz));
          }
        }
      }
}

}  // namespace

PeriodicField random_scalar(const GridSpec& g, std::uint64_t seed, int kmax, double k0) {
  std::mt19937_64 rng(seed);
  PeriodicField f(g, Rank::scalar);
  fill_random(f.c[0], g, rng, kmax, k0);
  return f;
}

PeriodicField random_vector(const GridSpec& g, std::uint64_t seed, int kmax, double k0) {
  std::mt19937_64 rng(seed);
  PeriodicField f(g, Rank::vector);
  for (int j = 0; j < 3; ++j) fill_random(f.c[j], g, rng, kmax, k0);
  return f;
}

PeriodicField random_solenoidal(const GridSpec& g, std::uint64_t seed, int kmax, double k0) {
  return leray_project(random_vector(g, seed, kmax, k0));
}

Eigen::Matrix3d random_symmetric_ball(std::mt19937_64& rng, double radius,
                                      const Eigen::Matrix3d& center) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) m(i, j) = m(j, i) = gauss(rng);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
  const double opnorm = es.eigenvalues().cwiseAbs().maxCoeff();
  if (opnorm > 0.0) m *= (radius * unif(rng)) / opnorm;
  return center + m;
}

}  // namespace mklab
