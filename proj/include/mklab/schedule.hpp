#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mklab/errors.hpp"

namespace mklab {

// Exponent web of the multiscale construction. The frequency scale of stage q
// is s_q = ceil(a^(b^q)) (a^(b^q) without the ceiling in ideal mode); the
// paper-style value lambda_q = 2*pi*s_q is carried for reporting, while all
// power laws and the recursion kappa_q * s_{q+1}^2 * kappa_{q+1} = delta_{q+1}
// are built on s_q so the identity is exact in ideal mode.
struct ParamConfig {
  double a = 5.0;
  double b = 1.1;
  double beta = 0.25;
  double gamma_T = 0.0;
  double gamma_R = 0.0;
  double gamma_E = 0.0;
  double gamma_L = 0.0;
  double gamma = 0.0;
  double alpha = 0.0;
  int Nbar = 0;
  int Ntilde = 4;
  int Nh = 4;
  bool ideal_mode = false;
  bool full_theorem = true;  // also require b < sqrt(3/2)
  // knobs the paper leaves universal/unquantified
  double M = 1.0;
  double ebar = 0.0;          // 0 = use the measured 3*c0/c1 of the cutoffs
  double c0_prefactor = 1.0;  // C(beta,b) in the dissipation-constant bound
  double glue_time_constant = 0.4;  // c in the gluing time guard
};

struct StageParams {
  int q = 0;
  double lambda = 0.0;        // frequency scale s_q
  double lambda_paper = 0.0;  // 2*pi*s_q
  double delta = 0.0;         // s_q^{-2 beta}
  double kappa = 0.0;         // s_q^{-theta}
  double ell = 0.0;           // s_q^{-1-gamma_L}
  double tau = 0.0;           // s_q^{-1+beta-gamma_T}
  double theta = 0.0;
};

struct Constraint {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;  // constraint is lhs < rhs
  bool satisfied = false;
  double slack = 0.0;  // rhs - lhs
  bool exact = false;  // decided by the rational path
};

struct ValidationReport {
  std::vector<Constraint> constraints;
  bool pass = false;
  const Constraint* find(const std::string& name) const;
};

// exact rational scalar for the boundary-robust inequality path
struct Rat {
  long long num = 0;
  long long den = 1;
  Rat() = default;
  Rat(long long n, long long d = 1);
  static std::optional<Rat> from_double(double x, long long max_den = 1000000);
};

struct RationalParams {
  Rat b, beta, gamma_T, gamma_R, gamma_E, gamma_L, alpha;
  int Nbar = 0;
};

double theta_of(double beta, double b);

ValidationReport validate(const ParamConfig& cfg);
// exact-rational evaluation of the same inequality set (no alpha/Nbar-free ones skipped)
ValidationReport validate_rational(const RationalParams& p, bool full_theorem = true);

StageParams stage(const ParamConfig& cfg, int q);

struct GammaChoice {
  double gamma_T, gamma_R, gamma_E, gamma;
};
// symmetric choice gamma_E = gamma_T = gamma_R = (b-1)(1-(2b+1)beta)/(b(b+1)),
// with gamma from the eight-way minimum
GammaChoice auto_gammas(double beta, double b);
double auto_gamma_L(double beta, double b);
// complete a config from (a, b, beta): gammas, alpha, Nbar
void auto_fill(ParamConfig& cfg);

struct C0Prediction {
  double value = 0.0;
  double small_time_exponent = 0.0;  // 2b/(2-b*theta)
  double b_to_1_limit = 0.0;         // 2/(1-beta)
  int argmin = 0;                    // which branch of the min was active
};
C0Prediction predicted_c0(double beta, double b, double ell0, double ell_in,
                          double delta0, double T, double prefactor = 1.0);

}  // namespace mklab
