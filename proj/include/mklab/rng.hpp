#pragma once

#include <random>

#include "mklab/field.hpp"

namespace mklab {

// Band-limited random smooth fields, reproducible from the seed.
// Modes with |k| <= kmax get unit-variance Gaussian coefficients damped by
// exp(-(|k|/k0)^2); the result is mean-zero.
PeriodicField random_scalar(const GridSpec& g, std::uint64_t seed, int kmax = 8, double k0 = 4.0);
PeriodicField random_vector(const GridSpec& g, std::uint64_t seed, int kmax = 8, double k0 = 4.0);
// random_vector followed by a Leray projection
PeriodicField random_solenoidal(const GridSpec& g, std::uint64_t seed, int kmax = 8, double k0 = 4.0);

// random symmetric 3x3 matrix with operator norm <= radius, centered at center
Eigen::Matrix3d random_symmetric_ball(std::mt19937_64& rng, double radius,
                                      const Eigen::Matrix3d& center = Eigen::Matrix3d::Identity());

}  // namespace mklab
