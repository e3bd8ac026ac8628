#pragma once

#include <complex>

#include "mklab/field.hpp"

namespace mklab {

// Cached-plan FFT between the real grid and the half-complex layout.
// Forward scales by 1/n^3 so spectral data are Fourier coefficients.
namespace fft {

void forward(const GridSpec& g, const Eigen::ArrayXd& real_in, Eigen::ArrayXcd& spec_out);
void inverse(const GridSpec& g, const Eigen::ArrayXcd& spec_in, Eigen::ArrayXd& real_out);

SpectralField forward(const PeriodicField& f);
PeriodicField inverse(const SpectralField& f);

}  // namespace fft
}  // namespace mklab
