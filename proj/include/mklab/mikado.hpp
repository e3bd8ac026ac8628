#pragma once

#include <Eigen/Dense>

#include "mklab/field.hpp"

namespace mklab {

enum class MikadoKind { tube, shear };

// One flow direction: integer coprime vector, an orthonormal basis of the
// orthogonal plane, the periods of the quotient lattice in that basis, and
// the tube offset (tube kind) or the single-mode data (shear kind).
struct Direction {
  Eigen::Vector3i k;
  Eigen::Vector3d khat;
  Eigen::Vector3d f1, f2;
  double L1 = 0.0, L2 = 0.0;
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
  Eigen::Vector3i shear_mode = Eigen::Vector3i::Zero();
  double shear_phase = 0.0;
};

struct DirectionSet {
  MikadoKind kind = MikadoKind::tube;
  std::vector<Direction> dirs;
  double radius = 0.0;              // common tube radius
  double min_axis_distance = 0.0;   // certified min pairwise distance between axes
  std::int64_t certificate_samples = 0;
  int size() const { return int(dirs.size()); }
};

// default 9-direction set {e1,e2,e3, e1+-e2, e2+-e3, e1+-e3} with offsets
// certified to keep tubes of the returned radius pairwise disjoint
DirectionSet build_direction_set(double radius = 0.0);
// 6 diagonal directions carrying single-mode cross profiles; spans the
// symmetric matrices and admits the exact double normalization
DirectionSet build_shear_direction_set();

// min over pairs of the sampled distance between the two periodic axes
double min_pairwise_axis_distance(const DirectionSet& ds, int samples_per_line);

// Coefficients a_k with sum a_k(R)^2 khat khat^T = R near Id:
// a_k^2(R) = c_k + L_k(R - Id) with a fixed linear right-inverse L.
struct NashCoeffs {
  Eigen::MatrixXd dyads;          // 6 x K, vec6 of khat khat^T
  Eigen::VectorXd base;           // c_k > 0 with sum c_k khat khat^T = Id
  Eigen::MatrixXd right_inverse;  // K x 6
  // orthonormal basis of the dyad-map null space; coefficient squares are
  // recentered along it by a smooth soft-min step so they stay positive on
  // the whole coefficient ball (the affine scheme alone cannot be)
  Eigen::MatrixXd null_basis;     // K x (K-6)
  double repair_eps = 0.01;
  double ball_radius = 0.5;
  int K() const { return int(base.size()); }
};

NashCoeffs nash_coeffs(const DirectionSet& ds);
// symmetric vec6 with off-diagonals weighted by sqrt(2) (Frobenius-compatible)
Eigen::Matrix<double, 6, 1> sym_to_vec6(const Eigen::Matrix3d& m);
Eigen::Matrix3d vec6_to_sym(const Eigen::Matrix<double, 6, 1>& v);

// affine squares, no domain guard (used where the calling construction
// certifies positivity itself)
Eigen::VectorXd nash_squares(const Eigen::Matrix3d& R, const NashCoeffs& nc);
// guarded: R symmetric with ||R - Id||_op <= ball_radius, returns a_k >= 0
Eigen::VectorXd nash_decompose(const Eigen::Matrix3d& R, const NashCoeffs& nc);

// analytic radial cross-section profile: inner bump minus a wider
// compensating bump, mean-zero over the plane
struct TubeProfile {
  double w1 = 0.0, w2 = 0.0;
  double amplitude = 1.0;
  double value(double d) const;
  double dvalue(double d) const;      // g'(d)
  double lap2d(double d) const;       // g'' + g'/d
  double support_radius() const { return w2; }
};

struct MikadoFamily {
  DirectionSet dirs;
  GridSpec grid;
  NashCoeffs coeffs;
  std::vector<PeriodicField> phi;  // normative samples on the grid
  std::vector<TubeProfile> prof;   // analytic pieces (tube kind)
  std::vector<double> gradnorm;    // cell mean of |grad phi_k|^2
  std::vector<double> lapnorm;     // cell mean of |lap phi_k|^2 (= 1)
  // cell-flux weight int|grad phi|^2 / int|lap phi|^2 of the profile the
  // assembly formulas evaluate (exact for shear: 1; analytic for tubes,
  // identical across directions by scale invariance)
  double flux_gain() const { return analytic_gain; }
  double analytic_gain = 1.0;
  int size() const { return dirs.size(); }
};

// Tube kind: width solved per direction so that gradnorm matches a common
// target (auto-chosen from the feasible range when target <= 0), amplitude
// solved so the grid lapnorm is exactly 1, supports kept exactly inside the
// disjoint tubes. Shear kind: phi_k = sqrt(2) cos(m.xi + theta), both
// normalizations exact.
MikadoFamily build_profiles(const DirectionSet& ds, const GridSpec& grid,
                            double target_gradnorm = 0.0);

// derived fields of one direction: W = (lap phi) k, U = k x grad phi
void mikado_fields(const MikadoFamily& fam, int dir, PeriodicField* W,
                   PeriodicField* U);
// H v = -U x v
inline Eigen::Matrix3d h_matrix(const Eigen::Vector3d& U) {
  Eigen::Matrix3d H;
  H << 0.0, U(2), -U(1), -U(2), 0.0, U(0), U(1), -U(0), 0.0;
  return H;
}

// pointwise analytic evaluation at an arbitrary cell point (exact for shear,
// analytic-profile for tube): psi = lap phi, gphi = grad phi
void eval_profile(const MikadoFamily& fam, int dir, const Eigen::Vector3d& xi,
                  double* psi, Eigen::Vector3d* gphi, double* phi_val = nullptr);

// W(R, xi) = sum_k (a_k(R)/|k|) psi_k(xi) k from the normative grid fields
PeriodicField assemble_mikado_velocity(const MikadoFamily& fam, const Eigen::Matrix3d& R);

// second moment of a velocity field: (1/(2pi)^3) int v (x) v dx
Eigen::Matrix3d second_moment(const PeriodicField& v);

}  // namespace mklab
