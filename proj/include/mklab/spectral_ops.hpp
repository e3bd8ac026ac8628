#pragma once

#include <functional>

#include "mklab/fft.hpp"
#include "mklab/field.hpp"

namespace mklab {

enum class DerivKind { grad, div, curl, laplacian };

// Smoothing operator specified by a radial spectral multiplier m(s), s = ell*|k|,
// with m(0)=1 and m(s)-1 vanishing to order depth+1 at s=0.
struct DeepKernel {
  int depth = 4;    // paper's Nbar
  double length = 0.1;  // ell

  DeepKernel() = default;
  DeepKernel(int depth_, double ell) : depth(depth_), length(ell) {
    if (depth < 1) throw ConfigError("DeepKernel: depth must be >= 1");
    if (!(length > 0.0)) throw ConfigError("DeepKernel: length must be positive");
  }
  double symbol(double s) const { return std::exp(-std::pow(s, depth + 1)); }
  // sup_s |m(s)-1|/s, the measured mollification constant C_N of the kernel
  double mollification_constant() const;
};

// exact spectral differentiation of the trigonometric interpolant
PeriodicField derivative_ops(const PeriodicField& f, DerivKind kind);
PeriodicField grad(const PeriodicField& f);        // scalar -> vector
PeriodicField div(const PeriodicField& f);         // vector -> scalar, symtensor -> vector
PeriodicField curl(const PeriodicField& f);        // vector -> vector
PeriodicField laplacian(const PeriodicField& f);   // any rank
PeriodicField partial(const PeriodicField& f, int axis);  // componentwise d/dx_axis

SpectralField grad_s(const SpectralField& f);
SpectralField div_s(const SpectralField& f);
SpectralField curl_s(const SpectralField& f);
void dealias_inplace(SpectralField& f);
void dealias_inplace(PeriodicField& f);

// L^2 projection onto divergence-free fields; preserves the mean
PeriodicField leray_project(const PeriodicField& v);

// z = (-Delta)^{-1} curl u for mean-zero divergence-free u: div z = 0, curl z = u
PeriodicField biot_savart(const PeriodicField& u);

// symmetric traceless R with div R = f, for mean-zero f
PeriodicField inverse_divergence(const PeriodicField& f);

PeriodicField deep_mollify(const PeriodicField& f, const DeepKernel& k);

// pointwise product of scalars, dealiased by default
PeriodicField multiply(const PeriodicField& a, const PeriodicField& b, bool dealias = true);
// traceless part of the outer product a (x) b of two vector fields, symmetrized
PeriodicField outer_traceless(const PeriodicField& a, const PeriodicField& b, bool dealias = true);
PeriodicField outer_sym(const PeriodicField& a, const PeriodicField& b, bool dealias = true);

void subtract_mean(PeriodicField& f);
PeriodicField apply_multiplier(const PeriodicField& f, const std::function<double(double)>& mult_of_absk);

// fraction of L2 mass of f with any |k_i| above the dealias cutoff
double spectral_tail_fraction(const PeriodicField& f);

// Helmholtz potential: scalar phi with laplacian(phi) = div(v), mean zero
PeriodicField helmholtz_potential(const PeriodicField& v);

}  // namespace mklab
