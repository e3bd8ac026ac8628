#include "mklab/fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>

namespace mklab {
namespace fft {
namespace {

struct PlanSet {
  int n = 0;
  double* rbuf = nullptr;
  fftw_complex* cbuf = nullptr;
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;

  explicit PlanSet(int n_) : n(n_) {
    const std::int64_t np = std::int64_t(n) * n * n;
    const std::int64_t nc = std::int64_t(n) * n * (n / 2 + 1);
    rbuf = fftw_alloc_real(np);
    cbuf = fftw_alloc_complex(nc);
    r2c = fftw_plan_dft_r2c_3d(n, n, n, rbuf, cbuf, FFTW_ESTIMATE);
    c2r = fftw_plan_dft_c2r_3d(n, n, n, cbuf, rbuf, FFTW_ESTIMATE);
  }
  ~PlanSet() {
    fftw_destroy_plan(r2c);
    fftw_destroy_plan(c2r);
    fftw_free(rbuf);
    fftw_free(cbuf);
  }
};

std::mutex g_mutex;
std::map<int, std::unique_ptr<PlanSet>>& plans() {
  static std::map<int, std::unique_ptr<PlanSet>> p;
  return p;
}

PlanSet& plan_for(int n) {
  std::lock_guard<std::mutex> lk(g_mutex);
  auto& p = plans();
  auto it = p.find(n);
  if (it == p.end()) it = p.emplace(n, std::make_unique<PlanSet>(n)).first;
  return *it->second;
}

}  // namespace

void forward(const GridSpec& g, const Eigen::ArrayXd& real_in, Eigen::ArrayXcd& spec_out) {
  PlanSet& ps = plan_for(g.n);
  std::lock_guard<std::mutex> lk(g_mutex);
  const std::int64_t np = g.points(), nc = g.spages();
  std::copy(real_in.data(), real_in.data() + np, ps.rbuf);
  fftw_execute(ps.r2c);
  spec_out.resize(nc);
  const double scale = 1.0 / double(np);
  auto* src = reinterpret_cast<std::complex<double>*>(ps.cbuf);
  for (std::int64_t i = 0; i < nc; ++i) spec_out(i) = src[i] * scale;
}

void inverse(const GridSpec& g, const Eigen::ArrayXcd& spec_in, Eigen::ArrayXd& real_out) {
  PlanSet& ps = plan_for(g.n);
  std::lock_guard<std::mutex> lk(g_mutex);
  const std::int64_t np = g.points(), nc = g.spages();
  auto* dst = reinterpret_cast<std::complex<double>*>(ps.cbuf);
  for (std::int64_t i = 0; i < nc; ++i) dst[i] = spec_in(i);
  fftw_execute(ps.c2r);
  real_out.resize(np);
  std::copy(ps.rbuf, ps.rbuf + np, real_out.data());
}

SpectralField forward(const PeriodicField& f) {
  SpectralField s(f.grid, f.rank);
  for (int j = 0; j < f.ncomp(); ++j) forward(f.grid, f.c[j], s.c[j]);
  return s;
}

PeriodicField inverse(const SpectralField& f) {
  PeriodicField p(f.grid, f.rank);
  for (int j = 0; j < f.ncomp(); ++j) inverse(f.grid, f.c[j], p.c[j]);
  return p;
}

}  // namespace fft
}  // namespace mklab
