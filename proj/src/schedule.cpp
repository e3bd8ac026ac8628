#include "mklab/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "mklab/grid.hpp"

namespace mklab {

namespace {

long long igcd(long long a, long long b) {
  while (b) { a %= b; std::swap(a, b); }
  return a < 0 ? -a : a;
}

}  // namespace

Rat::Rat(long long n, long long d) : num(n), den(d) {
  if (den == 0) throw DomainError("Rat: zero denominator");
  if (den < 0) { num = -num; den = -den; }
  const long long g = igcd(num < 0 ? -num : num, den);
  if (g > 1) { num /= g; den /= g; }
}

std::optional<Rat> Rat::from_double(double x, long long max_den) {
  // continued-fraction expansion; accept only an exact representation
  long long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double v = x;
  for (int it = 0; it < 64; ++it) {
    const double fl = std::floor(v);
    if (std::abs(fl) > 9e17) return std::nullopt;
    const long long ai = (long long)fl;
    const long long p2 = ai * p1 + p0, q2 = ai * q1 + q0;
    if (q2 > max_den || q2 <= 0) return std::nullopt;
    p0 = p1; q0 = q1; p1 = p2; q1 = q2;
    if (double(p1) / double(q1) == x) return Rat(p1, q1);
    const double rem = v - fl;
    if (rem == 0.0) break;
    v = 1.0 / rem;
  }
  return std::nullopt;
}

namespace {

using I128 = __int128;

struct Rx {  // rational with 128-bit intermediates
  I128 n = 0, d = 1;
  Rx() = default;
  Rx(const Rat& r) : n(r.num), d(r.den) {}
  Rx(long long v) : n(v), d(1) {}
  void norm() {
    if (d < 0) { n = -n; d = -d; }
  }
};
Rx operator*(Rx a, Rx b) { Rx r; r.n = a.n * b.n; r.d = a.d * b.d; r.norm(); return r; }
Rx operator+(Rx a, Rx b) { Rx r; r.n = a.n * b.d + b.n * a.d; r.d = a.d * b.d; r.norm(); return r; }
Rx operator-(Rx a, Rx b) { Rx r; r.n = a.n * b.d - b.n * a.d; r.d = a.d * b.d; r.norm(); return r; }
bool lt(const Rx& a, const Rx& b) { return a.n * b.d < b.n * a.d; }
double to_d(const Rx& a) { return double((long double)a.n / (long double)a.d); }

void push(std::vector<Constraint>& v, const std::string& name, double lhs, double rhs,
          bool exact = false, bool exact_sat = false) {
  Constraint c;
  c.name = name;
  c.lhs = lhs;
  c.rhs = rhs;
  c.exact = exact;
  c.satisfied = exact ? exact_sat : (lhs < rhs);
  c.slack = rhs - lhs;
  v.push_back(c);
}

}  // namespace

const Constraint* ValidationReport::find(const std::string& name) const {
  for (const auto& c : constraints)
    if (c.name == name) return &c;
  return nullptr;
}

double theta_of(double beta, double b) { return 2.0 * b * (1.0 + beta) / (b + 1.0); }

ValidationReport validate(const ParamConfig& cfg) {
  ValidationReport r;
  const double b = cfg.b, beta = cfg.beta;
  const double gT = cfg.gamma_T, gR = cfg.gamma_R, gE = cfg.gamma_E, gL = cfg.gamma_L;
  const double al = cfg.alpha;
  const double onsager_rhs = (b - 1.0) * (1.0 - (2.0 * b + 1.0) * beta);
  const double diss_mid = onsager_rhs / (b + 1.0);

  push(r.constraints, "a_gt_1", 1.0, cfg.a);
  push(r.constraints, "beta_positive", 0.0, beta);
  push(r.constraints, "beta_lt_third", beta, 1.0 / 3.0);
  push(r.constraints, "b_gt_1", 1.0, b);
  push(r.constraints, "b_lt_holder_limit", b, (1.0 - beta) / (2.0 * beta));
  if (cfg.full_theorem)
    push(r.constraints, "b_lt_sqrt_3_2", b, std::sqrt(1.5));
  push(r.constraints, "onsager_conditions", std::max(gT + b * gR, gE), onsager_rhs);
  push(r.constraints, "dissipation_left", gT, diss_mid);
  push(r.constraints, "dissipation_right", diss_mid, gR + gT);
  push(r.constraints, "dissipation_length", 2.0 * gL, (b - 1.0) * (1.0 + beta) / (b + 1.0));
  push(r.constraints, "comparison_7_1a", gL, (b - 1.0) * beta);
  push(r.constraints, "gluing2_7_1b", 4.0 * al * (1.0 + gL) + 2.0 * gL,
       2.0 * (b - 1.0) * beta + gT + gR);
  push(r.constraints, "taucondition_7_1c", al * gL, gT);
  push(r.constraints, "gammaRalpha_7_1d", 4.0 * al * (1.0 + gL), gR);
  push(r.constraints, "gluing1_7_1e", 2.0 * beta * (b - 1.0) + 1.0 + gR, cfg.Nbar * gL);
  push(r.constraints, "transport_7_1f", b * al + gT + b * gR, onsager_rhs);
  push(r.constraints, "energy_7_1g", b * gE, onsager_rhs);

  r.pass = std::all_of(r.constraints.begin(), r.constraints.end(),
                       [](const Constraint& c) { return c.satisfied; });
  return r;
}

ValidationReport validate_rational(const RationalParams& p, bool full_theorem) {
  ValidationReport r;
  const Rx b = p.b, beta = p.beta, gT = p.gamma_T, gR = p.gamma_R, gE = p.gamma_E,
           gL = p.gamma_L, al = p.alpha;
  const Rx one(1), two(2), four(4);
  const Rx onsager = (b - one) * (one - (two * b + one) * beta);
  const Rx diss_mid_num = onsager;  // divided by (b+1): compare cross-multiplied
  auto pushx = [&](const std::string& name, Rx lhs, Rx rhs) {
    push(r.constraints, name, to_d(lhs), to_d(rhs), true, lt(lhs, rhs));
  };

  pushx("beta_positive", Rx(0), beta);
  pushx("beta_lt_third", beta * Rx(3), one);
  pushx("b_gt_1", one, b);
  pushx("b_lt_holder_limit", b * (two * beta), one - beta);
  if (full_theorem) {
    // b < sqrt(3/2)  <=>  2 b^2 < 3
    pushx("b_lt_sqrt_3_2", two * b * b, Rx(3));
  }
  {
    const Rx lhs1 = gT + b * gR;
    const Rx worst = lt(lhs1, gE) ? Rx(gE) : lhs1;
    pushx("onsager_conditions", worst, onsager);
  }
  pushx("dissipation_left", gT * (b + one), diss_mid_num);
  pushx("dissipation_right", diss_mid_num, (gR + gT) * (b + one));
  pushx("dissipation_length", two * gL * (b + one), (b - one) * (one + beta));
  pushx("comparison_7_1a", gL, (b - one) * beta);
  pushx("gluing2_7_1b", four * al * (one + gL) + two * gL, two * (b - one) * beta + gT + gR);
  pushx("taucondition_7_1c", al * gL, gT);
  pushx("gammaRalpha_7_1d", four * al * (one + gL), gR);
  pushx("gluing1_7_1e", two * beta * (b - one) + one + gR, Rx(p.Nbar) * gL);
  pushx("transport_7_1f", b * al + gT + b * gR, onsager);
  pushx("energy_7_1g", b * gE, onsager);

  r.pass = std::all_of(r.constraints.begin(), r.constraints.end(),
                       [](const Constraint& c) { return c.satisfied; });
  return r;
}

StageParams stage(const ParamConfig& cfg, int q) {
  if (q < 0) throw StageRangeError("stage: q must be nonnegative");
  const double logs = std::pow(cfg.b, q) * std::log(cfg.a);
  if (logs > 600.0) throw StageRangeError("stage: a^(b^q) overflows double range");
  double s = std::exp(logs);
  if (!cfg.ideal_mode) {
    const double rounded = std::round(s);
    s = (std::abs(s - rounded) < 1e-9 * s) ? rounded : std::ceil(s);
  }
  StageParams sp;
  sp.q = q;
  sp.theta = theta_of(cfg.beta, cfg.b);
  sp.lambda = s;
  sp.lambda_paper = kTwoPi * s;
  sp.delta = std::pow(s, -2.0 * cfg.beta);
  sp.kappa = std::pow(s, -sp.theta);
  sp.ell = std::pow(s, -1.0 - cfg.gamma_L);
  sp.tau = std::pow(s, -1.0 + cfg.beta - cfg.gamma_T);
  return sp;
}

GammaChoice auto_gammas(double beta, double b) {
  if (!(beta > 0.0 && beta < 1.0 / 3.0 && b > 1.0 && b < (1.0 - beta) / (2.0 * beta)))
    throw DomainError("auto_gammas: (beta, b) outside the admissible region");
  GammaChoice g;
  const double sym = (b - 1.0) * (1.0 - (2.0 * b + 1.0) * beta) / (b * (b + 1.0));
  g.gamma_T = g.gamma_R = g.gamma_E = sym;
  const double gL = auto_gamma_L(beta, b);
  const double theta = theta_of(beta, b);
  const double cands[8] = {
      gL,
      g.gamma_T,
      g.gamma_R,
      g.gamma_E,
      (b - 1.0) * beta,
      (b - 1.0) * theta,
      g.gamma_T + g.gamma_R + (2.0 * b - 1.0) * beta + 1.0 - theta,
      (b - 1.0) * (1.0 - (2.0 * b + 1.0) * beta) / (b + 1.0) - g.gamma_T};
  g.gamma = 0.25 * *std::min_element(cands, cands + 8);
  return g;
}

double auto_gamma_L(double beta, double b) {
  return 0.5 * std::min((b - 1.0) * beta, 0.5 * (b - 1.0) * (1.0 + beta) / (b + 1.0));
}

void auto_fill(ParamConfig& cfg) {
  const GammaChoice g = auto_gammas(cfg.beta, cfg.b);
  cfg.gamma_T = g.gamma_T;
  cfg.gamma_R = g.gamma_R;
  cfg.gamma_E = g.gamma_E;
  cfg.gamma = g.gamma;
  cfg.gamma_L = auto_gamma_L(cfg.beta, cfg.b);
  const double onsager = (cfg.b - 1.0) * (1.0 - (2.0 * cfg.b + 1.0) * cfg.beta);
  const double a1 = cfg.gamma_R / (4.0 * (1.0 + cfg.gamma_L));
  const double a2 = (2.0 * (cfg.b - 1.0) * cfg.beta + cfg.gamma_T + cfg.gamma_R -
                     2.0 * cfg.gamma_L) / (4.0 * (1.0 + cfg.gamma_L));
  const double a3 = (onsager - cfg.gamma_T - cfg.b * cfg.gamma_R) / cfg.b;
  const double a4 = cfg.gamma_T / cfg.gamma_L;
  cfg.alpha = 0.9 * std::min(std::min(a1, a2), std::min(a3, a4));
  cfg.Nbar = int(std::ceil((2.0 * cfg.beta * (cfg.b - 1.0) + 1.0 + cfg.gamma_R) /
                           cfg.gamma_L)) + 1;
}

C0Prediction predicted_c0(double beta, double b, double ell0, double ell_in,
                          double delta0, double T, double prefactor) {
  const double theta = theta_of(beta, b);
  if (!(b * theta < 2.0)) throw DomainError("predicted_c0: requires b*theta < 2");
  C0Prediction out;
  out.small_time_exponent = 2.0 * b / (2.0 - b * theta);
  out.b_to_1_limit = 2.0 / (1.0 - beta);
  const double cands[3] = {
      std::pow(ell_in / ell0, 2.0 * out.small_time_exponent) *
          std::pow(T, out.small_time_exponent),
      delta0,
      std::pow(ell_in, 2.0 * b)};
  out.argmin = int(std::min_element(cands, cands + 3) - cands);
  out.value = prefactor * cands[out.argmin] / (ell_in * ell_in);
  return out;
}

}  // namespace mklab
