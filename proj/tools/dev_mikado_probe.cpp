// dev tool: measure tube-family quality (POCS residuals, identities) per grid
#include <chrono>
#include <cstdio>

#include "mklab/mikado.hpp"
#include "mklab/spectral_ops.hpp"

using namespace mklab;

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 64;
  auto t0 = std::chrono::steady_clock::now();
  DirectionSet ds = build_direction_set();
  std::printf("min axis distance %.6f  radius %.6f\n", ds.min_axis_distance, ds.radius);
  GridSpec g(n);
  MikadoFamily fam = build_profiles(ds, g);
  auto t1 = std::chrono::steady_clock::now();
  std::printf("build_profiles(%d): %.1fs\n", n,
              std::chrono::duration<double>(t1 - t0).count());
  std::printf("flux_gain %.6e  (2pi)^-2 = %.6e\n", fam.flux_gain(),
              1.0 / (kTwoPi * kTwoPi));
  for (int j = 0; j < fam.size(); ++j) {
    const auto& phi = fam.phi[j];
    PeriodicField gphi = grad(phi);
    PeriodicField kdg(g, Rank::scalar);
    const Eigen::Vector3d kv = fam.dirs.dirs[j].k.cast<double>();
    kdg.c[0] = kv(0) * gphi.c[0] + kv(1) * gphi.c[1] + kv(2) * gphi.c[2];
    PeriodicField W, U;
    mikado_fields(fam, j, &W, &U);
    PeriodicField cU = curl(U);
    double curl_err = 0.0;
    for (int c = 0; c < 3; ++c)
      curl_err = std::max(curl_err, (cU.c[c] - W.c[c]).abs().maxCoeff());
    std::printf(
        "dir %d: grad %.6e lap %.6e  mean %8.1e  k.grad %8.1e  |curlU-W| %8.1e (|W|inf "
        "%6.2f) divW %8.1e\n",
        j, fam.gradnorm[j], fam.lapnorm[j], phi.mean(), linf_norm(kdg),
        curl_err, linf_norm(W), linf_norm(div(W)));
  }
  // pairwise support products and psi cross-moments
  double max_prod = 0.0, max_cross = 0.0;
  std::vector<PeriodicField> psi(fam.size());
  for (int j = 0; j < fam.size(); ++j) psi[j] = laplacian(fam.phi[j]);
  for (int a = 0; a < fam.size(); ++a)
    for (int b = a + 1; b < fam.size(); ++b) {
      max_prod = std::max(max_prod,
                          (fam.phi[a].c[0] * fam.phi[b].c[0]).abs().maxCoeff());
      max_cross = std::max(max_cross, std::abs((psi[a].c[0] * psi[b].c[0]).mean()));
    }
  std::printf("max pointwise phi product %e   max cross <psi psi'> %e\n", max_prod,
              max_cross);
  return 0;
}
