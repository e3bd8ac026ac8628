#include "mklab/spectral_ops.hpp"

#include <cmath>

namespace mklab {

namespace {

using cd = std::complex<double>;
constexpr cd I{0.0, 1.0};

// iterate over all half-complex modes, calling fn(index, kx, ky, kz)
template <typename F>
void for_modes(const GridSpec& g, F&& fn) {
  const int n = g.n, nzh = g.n / 2 + 1;
  std::int64_t p = 0;
  for (int jx = 0; jx < n; ++jx) {
    const int kx = wavenumber(jx, n);
    for (int jy = 0; jy < n; ++jy) {
      const int ky = wavenumber(jy, n);
      for (int jz = 0; jz < nzh; ++jz, ++p) fn(p, kx, ky, jz);
    }
  }
}

// first-derivative wavenumber: Nyquist contributes zero
inline double dk(int k, int n) { return (k == n / 2 || k == -n / 2) ? 0.0 : double(k); }

}  // namespace

double dot_mean(const PeriodicField& a, const PeriodicField& b) {
  double s = 0.0;
  if (a.rank == Rank::symtensor) {
    // Frobenius contraction: off-diagonal components count twice
    for (int j = 0; j < 6; ++j) {
      const double w = (j >= 3) ? 2.0 : 1.0;
      s += w * (a.c[j] * b.c[j]).mean();
    }
  } else {
    for (int j = 0; j < a.ncomp(); ++j) s += (a.c[j] * b.c[j]).mean();
  }
  return s;
}

double l2_norm(const PeriodicField& f) {
  return std::sqrt(kTwoPi * kTwoPi * kTwoPi * dot_mean(f, f));
}

double linf_norm(const PeriodicField& f) {
  double m = 0.0;
  if (f.rank == Rank::scalar) return f.c[0].abs().maxCoeff();
  if (f.rank == Rank::vector) {
    Eigen::ArrayXd s = f.c[0].square() + f.c[1].square() + f.c[2].square();
    return std::sqrt(s.maxCoeff());
  }
  for (std::int64_t p = 0; p < f.grid.points(); ++p)
    m = std::max(m, f.sym_at(p).norm());
  return m;
}

double DeepKernel::mollification_constant() const {
  double best = 0.0;
  for (int i = 1; i <= 4000; ++i) {
    const double s = 8.0 * i / 4000.0;
    best = std::max(best, std::abs(symbol(s) - 1.0) / s);
  }
  return best;
}

SpectralField grad_s(const SpectralField& f) {
  if (f.rank != Rank::scalar) throw PreconditionError("grad: expects a scalar field");
  SpectralField g(f.grid, Rank::vector);
  const int n = f.grid.n;
  for_modes(f.grid, [&](std::int64_t p, int kx, int ky, int kz) {
    const cd v = f.c[0](p);
    g.c[0](p) = I * dk(kx, n) * v;
    g.c[1](p) = I * dk(ky, n) * v;
    g.c[2](p) = I * dk(kz, n) * v;
  });
  return g;
}

SpectralField div_s(const SpectralField& f) {
  const int n = f.grid.n;
  if (f.rank == Rank::vector) {
    SpectralField d(f.grid, Rank::scalar);
    for_modes(f.grid, [&](std::int64_t p, int kx, int ky, int kz) {
      d.c[0](p) = I * (dk(kx, n) * f.c[0](p) + dk(ky, n) * f.c[1](p) + dk(kz, n) * f.c[2](p));
    });
    return d;
  }
  if (f.rank == Rank::symtensor) {
    SpectralField d(f.grid, Rank::vector);
    for_modes(f.grid, [&](std::int64_t p, int kx, int ky, int kz) {
      const double kv[3] = {dk(kx, n), dk(ky, n), dk(kz, n)};
      for (int j = 0; j < 3; ++j) {
        cd s = 0.0;
        for (int i = 0; i < 3; ++i) s += kv[i] * f.c[sym_index(i, j)](p);
        d.c[j](p) = I * s;
      }
    });
    return d;
  }
  throw PreconditionError("div: expects a vector or symtensor field");
}

SpectralField curl_s(const SpectralField& f) {
  if (f.rank != Rank::vector) throw PreconditionError("curl: expects a vector field");
  SpectralField g(f.grid, Rank::vector);
  const int n = f.grid.n;
  for_modes(f.grid, [&](std::int64_t p, int kx, int ky, int kz) {
    const double k0 = dk(kx, n), k1 = dk(ky, n), k2 = dk(kz, n);
    g.c[0](p) = I * (k1 * f.c[2](p) - k2 * f.c[1](p));
    g.c[1](p) = I * (k2 * f.c[0](p) - k0 * f.c[2](p));
    g.c[2](p) = I * (k0 * f.c[1](p) - k1 * f.c[0](p));
  });
  return g;
}

void dealias_inplace(SpectralField& f) {
  const int cut = f.grid.dealias_cutoff();
  if (cut >= f.grid.n / 2) return;
  for_modes(f.grid, [&](std::int64_t p, int kx, int ky, int kz) {
    if (std::abs(kx) > cut || std::abs(ky) > cut || std::abs(kz) > cut)
      for (int j = 0; j < f.ncomp(); ++j) f.c[j](p) = 0.0;
  });
}

void dealias_inplace(PeriodicField& f) {
  SpectralField s = fft::forward(f);
  dealias_inplace(s);
  f = fft::inverse(s);
}

PeriodicField grad(const PeriodicField& f) { return fft::inverse(grad_s(fft::forward(f))); }
PeriodicField div(const PeriodicField& f) { return fft::inverse(div_s(fft::forward(f))); }
PeriodicField curl(const PeriodicField& f) { return fft::inverse(curl_s(fft::forward(f))); }

PeriodicField laplacian(const PeriodicField& f) {
  // Nyquist rows carry no first derivative, so the laplacian drops them too;
  // this keeps div(grad f) == laplacian(f) exact on the grid
  SpectralField s = fft::forward(f);
  const int n = f.grid.n;
  for_modes(f.grid, [&](std::int64_t p, int kx, int ky, int kz) {
    const double k0 = dk(kx, n), k1 = dk(ky, n), k2 = dk(kz, n);
    const double ksq = k0 * k0 + k1 * k1 + k2 * k2;
    for (int j = 0; j < s.ncomp(); ++j) s.c[j](p) *= -ksq;
  });
  return fft::inverse(s);
}

PeriodicField partial(const PeriodicField& f, int axis) {
  SpectralField s = fft::forward(f);
  const int n = f.grid.n;
  for_modes(f.grid, [&](std::int64_t p, int kx, int ky, int kz) {
    const double kv[3] = {dk(kx, n), dk(ky, n), dk(kz, n)};
    for (int j = 0; j < s.ncomp(); ++j) s.c[j](p) *= I * kv[axis];
  });
  return fft::inverse(s);
}

PeriodicField derivative_ops(const PeriodicField& f, DerivKind kind) {
  switch (kind) {
    case DerivKind::grad: return grad(f);
    case DerivKind::div: return div(f);
    case DerivKind::curl: return curl(f);
    case DerivKind::laplacian: return laplacian(f);
  }
  throw PreconditionError("derivative_ops: unknown kind");
}

PeriodicField leray_project(const PeriodicField& v) {
  if (v.rank != Rank::vector) throw PreconditionError("leray_project: expects a vector field");
  SpectralField s = fft::forward(v);
  const int n = v.grid.n;
  for_modes(v.grid, [&](std::int64_t p, int kx, int ky, int kz) {
    const double k0 = dk(kx, n), k1 = dk(ky, n), k2 = dk(kz, n);
    const double k2n = k0 * k0 + k1 * k1 + k2 * k2;
    if (k2n == 0.0) return;  // mean preserved
    const cd kdotu = k0 * s.c[0](p) + k1 * s.c[1](p) + k2 * s.c[2](p);
    s.c[0](p) -= k0 * kdotu / k2n;
    s.c[1](p) -= k1 * kdotu / k2n;
    s.c[2](p) -= k2 * kdotu / k2n;
  });
  return fft::inverse(s);
}

PeriodicField biot_savart(const PeriodicField& u) {
  if (u.rank != Rank::vector) throw PreconditionError("biot_savart: expects a vector field");
  const double scale = std::max(1.0, linf_norm(u));
  for (int j = 0; j < 3; ++j)
    if (std::abs(u.mean(j)) > 1e-12 * scale)
      throw PreconditionError("biot_savart: input must have zero mean");
  if (linf_norm(div(u)) > 1e-10 * scale)
    throw PreconditionError("biot_savart: input must be divergence-free");
  SpectralField s = fft::forward(u);
  SpectralField z(u.grid, Rank::vector);
  const int n = u.grid.n;
  for_modes(u.grid, [&](std::int64_t p, int kx, int ky, int kz) {
    const double k0 = dk(kx, n), k1 = dk(ky, n), k2 = dk(kz, n);
    const double k2n = k0 * k0 + k1 * k1 + k2 * k2;
    if (k2n == 0.0) return;
    // z_hat = i k x u_hat / |k|^2
    z.c[0](p) = I * (k1 * s.c[2](p) - k2 * s.c[1](p)) / k2n;
    z.c[1](p) = I * (k2 * s.c[0](p) - k0 * s.c[2](p)) / k2n;
    z.c[2](p) = I * (k0 * s.c[1](p) - k1 * s.c[0](p)) / k2n;
  });
  return fft::inverse(z);
}

PeriodicField inverse_divergence(const PeriodicField& f) {
  if (f.rank != Rank::vector) throw PreconditionError("inverse_divergence: expects a vector field");
  const double scale = std::max(1.0, linf_norm(f));
  for (int j = 0; j < 3; ++j)
    if (std::abs(f.mean(j)) > 1e-12 * scale)
      throw PreconditionError("inverse_divergence: input must have zero mean");
  SpectralField s = fft::forward(f);
  SpectralField r(f.grid, Rank::symtensor);
  const int n = f.grid.n;
  for_modes(f.grid, [&](std::int64_t p, int kx, int ky, int kz) {
    const double kv[3] = {dk(kx, n), dk(ky, n), dk(kz, n)};
    const double k2n = kv[0] * kv[0] + kv[1] * kv[1] + kv[2] * kv[2];
    if (k2n == 0.0) return;
    const cd fv[3] = {s.c[0](p), s.c[1](p), s.c[2](p)};
    const cd kdotf = kv[0] * fv[0] + kv[1] * fv[1] + kv[2] * fv[2];
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) {
        cd val = 0.5 * I * kv[i] * kv[j] * kdotf / (k2n * k2n);
        if (i == j) val += 0.5 * I * kdotf / k2n;
        val -= I * (kv[i] * fv[j] + kv[j] * fv[i]) / k2n;
        r.c[sym_index(i, j)](p) = val;
      }
  });
  return fft::inverse(r);
}

PeriodicField apply_multiplier(const PeriodicField& f,
                               const std::function<double(double)>& mult_of_absk) {
  SpectralField s = fft::forward(f);
  for_modes(f.grid, [&](std::int64_t p, int kx, int ky, int kz) {
    const double ak = std::sqrt(double(kx) * kx + double(ky) * ky + double(kz) * kz);
    const double m = mult_of_absk(ak);
    for (int j = 0; j < s.ncomp(); ++j) s.c[j](p) *= m;
  });
  return fft::inverse(s);
}

PeriodicField deep_mollify(const PeriodicField& f, const DeepKernel& k) {
  return apply_multiplier(f, [&](double ak) { return ak == 0.0 ? 1.0 : k.symbol(k.length * ak); });
}

PeriodicField multiply(const PeriodicField& a, const PeriodicField& b, bool dealias) {
  if (a.rank != Rank::scalar || b.rank != Rank::scalar)
    throw PreconditionError("multiply: scalar fields expected");
  PeriodicField r(a.grid, Rank::scalar);
  r.c[0] = a.c[0] * b.c[0];
  if (dealias) dealias_inplace(r);
  return r;
}

PeriodicField outer_sym(const PeriodicField& a, const PeriodicField& b, bool dealias) {
  PeriodicField r(a.grid, Rank::symtensor);
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j)
      r.c[sym_index(i, j)] = 0.5 * (a.c[i] * b.c[j] + a.c[j] * b.c[i]);
  if (dealias) dealias_inplace(r);
  return r;
}

PeriodicField outer_traceless(const PeriodicField& a, const PeriodicField& b, bool dealias) {
  PeriodicField r = outer_sym(a, b, false);
  Eigen::ArrayXd tr3 = (r.c[XX] + r.c[YY] + r.c[ZZ]) / 3.0;
  r.c[XX] -= tr3; r.c[YY] -= tr3; r.c[ZZ] -= tr3;
  if (dealias) dealias_inplace(r);
  return r;
}

void subtract_mean(PeriodicField& f) {
  for (auto& a : f.c) a -= a.mean();
}

double spectral_tail_fraction(const PeriodicField& f) {
  SpectralField s = fft::forward(f);
  const int cut = f.grid.dealias_cutoff();
  double tail = 0.0, total = 0.0;
  for_modes(f.grid, [&](std::int64_t p, int kx, int ky, int kz) {
    const double w = (kz == 0 || kz == f.grid.n / 2) ? 1.0 : 2.0;  // half-complex weight
    double e = 0.0;
    for (int j = 0; j < s.ncomp(); ++j) e += std::norm(s.c[j](p));
    e *= w;
    total += e;
    if (std::abs(kx) > cut || std::abs(ky) > cut || std::abs(kz) > cut) tail += e;
  });
  return total > 0.0 ? tail / total : 0.0;
}

PeriodicField helmholtz_potential(const PeriodicField& v) {
  SpectralField s = div_s(fft::forward(v));
  for_modes(v.grid, [&](std::int64_t p, int kx, int ky, int kz) {
    const double k2 = double(kx) * kx + double(ky) * ky + double(kz) * kz;
    s.c[0](p) = (k2 == 0.0) ? cd(0.0) : s.c[0](p) / (-k2);
  });
  return fft::inverse(s);
}

}  // namespace mklab
