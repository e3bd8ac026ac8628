#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "mklab/grid.hpp"

namespace mklab {

enum class Rank { scalar = 0, vector = 1, symtensor = 2 };

inline int component_count(Rank r) {
  switch (r) {
    case Rank::scalar: return 1;
    case Rank::vector: return 3;
    case Rank::symtensor: return 6;
  }
  return 0;
}

// symtensor component order
enum SymIdx { XX = 0, YY = 1, ZZ = 2, XY = 3, XZ = 4, YZ = 5 };

// maps (i,j) -> packed symmetric index
inline int sym_index(int i, int j) {
  static constexpr int tab[3][3] = {{XX, XY, XZ}, {XY, YY, YZ}, {XZ, YZ, ZZ}};
  return tab[i][j];
}

// Real samples on the grid, row-major with z fastest: idx = (ix*n + iy)*n + iz.
struct PeriodicField {
  GridSpec grid;
  Rank rank = Rank::scalar;
  std::vector<Eigen::ArrayXd> c;

  PeriodicField() = default;
  PeriodicField(const GridSpec& g, Rank r) : grid(g), rank(r) {
    c.resize(component_count(r));
    for (auto& a : c) a = Eigen::ArrayXd::Zero(g.points());
  }

  int ncomp() const { return int(c.size()); }
  std::int64_t idx(int ix, int iy, int iz) const {
    return (std::int64_t(ix) * grid.n + iy) * grid.n + iz;
  }

  double mean(int comp = 0) const { return c[comp].mean(); }

  // pointwise symmetric-matrix access for symtensor fields
  Eigen::Matrix3d sym_at(std::int64_t p) const {
    Eigen::Matrix3d m;
    m << c[XX](p), c[XY](p), c[XZ](p),
         c[XY](p), c[YY](p), c[YZ](p),
         c[XZ](p), c[YZ](p), c[ZZ](p);
    return m;
  }
  void set_sym_at(std::int64_t p, const Eigen::Matrix3d& m) {
    c[XX](p) = m(0, 0); c[YY](p) = m(1, 1); c[ZZ](p) = m(2, 2);
    c[XY](p) = 0.5 * (m(0, 1) + m(1, 0));
    c[XZ](p) = 0.5 * (m(0, 2) + m(2, 0));
    c[YZ](p) = 0.5 * (m(1, 2) + m(2, 1));
  }
  Eigen::Vector3d vec_at(std::int64_t p) const {
    return {c[0](p), c[1](p), c[2](p)};
  }
  void set_vec_at(std::int64_t p, const Eigen::Vector3d& v) {
    c[0](p) = v(0); c[1](p) = v(1); c[2](p) = v(2);
  }

  PeriodicField& operator+=(const PeriodicField& o) {
    for (int j = 0; j < ncomp(); ++j) c[j] += o.c[j];
    return *this;
  }
  PeriodicField& operator-=(const PeriodicField& o) {
    for (int j = 0; j < ncomp(); ++j) c[j] -= o.c[j];
    return *this;
  }
  PeriodicField& operator*=(double s) {
    for (auto& a : c) a *= s;
    return *this;
  }
};

inline PeriodicField operator+(PeriodicField a, const PeriodicField& b) { return a += b; }
inline PeriodicField operator-(PeriodicField a, const PeriodicField& b) { return a -= b; }
inline PeriodicField operator*(double s, PeriodicField a) { return a *= s; }

// Fourier coefficients, half-complex layout: idx = (kx*n + ky)*(n/2+1) + kz,
// kz in [0, n/2]. Coefficients are normalized so f(x) = sum_k fhat_k e^{i k.x}.
struct SpectralField {
  GridSpec grid;
  Rank rank = Rank::scalar;
  std::vector<Eigen::ArrayXcd> c;

  SpectralField() = default;
  SpectralField(const GridSpec& g, Rank r) : grid(g), rank(r) {
    c.resize(component_count(r));
    for (auto& a : c) a = Eigen::ArrayXcd::Zero(g.spages());
  }
  int ncomp() const { return int(c.size()); }
  std::int64_t idx(int jx, int jy, int jz) const {
    return (std::int64_t(jx) * grid.n + jy) * (grid.n / 2 + 1) + jz;
  }
};

// grid mean of f*g (all components contracted; symtensor off-diagonals doubled)
double dot_mean(const PeriodicField& a, const PeriodicField& b);
// true L2 norm: sqrt( (2pi)^3 * mean(|f|^2) )
double l2_norm(const PeriodicField& f);
double linf_norm(const PeriodicField& f);

}  // namespace mklab
