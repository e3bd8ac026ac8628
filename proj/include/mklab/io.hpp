#pragma once

#include <string>

#include "mklab/field.hpp"

namespace mklab {

// MKF1 container: 16-byte magic+version header, then n, rank code and
// component count as 64-bit little-endian integers, then float64
// little-endian row-major samples (components in order).
void mkf_write(const std::string& path, const PeriodicField& f);
PeriodicField mkf_read(const std::string& path, double dealias_fraction = 2.0 / 3.0);

}  // namespace mklab
