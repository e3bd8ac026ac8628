#pragma once

#include <cmath>
#include <cstdint>

#include "mklab/errors.hpp"

namespace mklab {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Uniform N^3 grid of the periodic cube [0,2pi)^3. Wavenumbers are integers;
// the lowest nonzero |k| is 1, so the Poincare constant of the torus is 1.
struct GridSpec {
  int n = 32;
  double dealias_fraction = 2.0 / 3.0;

  GridSpec() = default;
  explicit GridSpec(int n_, double dealias = 2.0 / 3.0)
      : n(n_), dealias_fraction(dealias) {
    if (n < 8) throw ConfigError("GridSpec: n must be >= 8");
    if ((n & (n - 1)) != 0) throw ConfigError("GridSpec: n must be a power of two");
    if (!(dealias_fraction > 0.0 && dealias_fraction <= 1.0))
      throw ConfigError("GridSpec: dealias_fraction must lie in (0,1]");
  }

  double h() const { return kTwoPi / n; }
  std::int64_t points() const { return std::int64_t(n) * n * n; }
  std::int64_t spages() const { return std::int64_t(n) * n * (n / 2 + 1); }
  // per-axis cutoff of the dealias rule (modes with any |k_i| above it are zeroed)
  int dealias_cutoff() const { return int(std::floor(dealias_fraction * n / 2.0)); }
  double x(int i) const { return kTwoPi * i / n; }
  bool operator==(const GridSpec& o) const {
    return n == o.n && dealias_fraction == o.dealias_fraction;
  }
};

// signed wavenumber of index j on an n-grid
inline int wavenumber(int j, int n) { return (j <= n / 2) ? j : j - n; }

}  // namespace mklab
