// dev tool: search for tube offsets maximizing the min pairwise axis distance
#include <cstdio>
#include <random>

#include "mklab/mikado.hpp"

using namespace mklab;

namespace {

DirectionSet raw_set() {
  DirectionSet ds;
  ds.kind = MikadoKind::tube;
  // rebuild geometry through the public constructor path: copy directions
  // from build_shear_direction_set is wrong; assemble by hand via offsets=0
  // using the same raw list as build_direction_set
  // (we cannot call build_direction_set here: it certifies the frozen offsets)
  return ds;
}

}  // namespace

int main() {
  // assemble the 9 directions with zero offsets via the public API by asking
  // for a tiny radius (certification passes for any offsets at radius ~0)
  DirectionSet ds;
  try {
    ds = build_direction_set(1e-6);
  } catch (const std::exception& e) {
    std::printf("seed set failed: %s\n", e.what());
    return 1;
  }
  const int K = ds.size();
  std::mt19937_64 rng(20240901);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  auto objective = [&](const DirectionSet& s, int samples) {
    return min_pairwise_axis_distance(s, samples);
  };

  auto descend = [&](DirectionSet& s, double& val, double step0) {
    double step = step0;
    while (step > 2e-4) {
      bool improved = false;
      for (int i = 0; i < K; ++i)
        for (int c = 0; c < 2; ++c)
          for (double sgn : {1.0, -1.0}) {
            DirectionSet cand = s;
            cand.dirs[i].offset(c) += sgn * step;
            const double L = (c == 0) ? cand.dirs[i].L1 : cand.dirs[i].L2;
            cand.dirs[i].offset(c) = std::fmod(cand.dirs[i].offset(c) + L, L);
            const double v = objective(cand, 768);
            if (v > val) {
              val = v;
              s = cand;
              improved = true;
            }
          }
      if (!improved) step *= 0.6;
    }
  };

  DirectionSet best = ds;
  double best_val = objective(best, 256);
  for (int trial = 0; trial < 1200; ++trial) {
    DirectionSet cand = ds;
    for (int i = 0; i < K; ++i) {
      cand.dirs[i].offset(0) = u01(rng) * cand.dirs[i].L1;
      cand.dirs[i].offset(1) = u01(rng) * cand.dirs[i].L2;
    }
    const double v = objective(cand, 256);
    if (v > best_val) {
      best_val = v;
      best = cand;
    }
  }
  std::printf("after multistart: %.6f\n", best_val);
  descend(best, best_val, 0.35);
  std::printf("after descent: %.6f\n", best_val);

  std::normal_distribution<double> kick(0.0, 0.12);
  for (int hop = 0; hop < 14; ++hop) {
    DirectionSet cand = best;
    for (int i = 0; i < K; ++i) {
      cand.dirs[i].offset(0) += kick(rng);
      cand.dirs[i].offset(1) += kick(rng);
    }
    double v = objective(cand, 768);
    descend(cand, v, 0.2);
    if (v > best_val) {
      best_val = v;
      best = cand;
      std::printf("hop %d improved: %.6f\n", hop, best_val);
    }
  }
  const double certified = objective(best, 1 << 17);
  std::printf("refined: %.6f   certified(2^17 samples): %.6f\n", best_val, certified);
  std::printf("constexpr double kTubeOffsets[9][2] = {\n");
  for (int i = 0; i < K; ++i)
    std::printf("    {%.8f, %.8f},%s", best.dirs[i].offset(0), best.dirs[i].offset(1),
                (i % 3 == 2) ? "\n" : " ");
  std::printf("};\n");
  return 0;
}
