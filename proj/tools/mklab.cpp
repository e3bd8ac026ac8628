// Command-line driver: parameter validation, field construction, scalar runs,
// homogenization and time-averaging sweeps, the dissipation ledger pipeline
// and MKF1 file utilities.
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "json.hpp"
#include "mklab/advdiff.hpp"
#include "mklab/euler.hpp"
#include "mklab/homogenize.hpp"
#include "mklab/io.hpp"
#include "mklab/mikado.hpp"
#include "mklab/pipeline.hpp"
#include "mklab/rng.hpp"
#include "mklab/schedule.hpp"
#include "mklab/spectral_ops.hpp"
#include "mklab/stage.hpp"
#include "mklab/timeavg.hpp"

using json = nlohmann::json;
using namespace mklab;

namespace {

json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  json j;
  is >> j;
  return j;
}

std::uint64_t config_hash(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= std::uint64_t(static_cast<unsigned char>(c));
    h *= 1099511628211ull;
  }
  return h;
}

ParamConfig params_from_json(const json& j) {
  ParamConfig p;
  p.a = j.value("a", 2.0);
  p.b = j.value("b", 1.1);
  p.beta = j.value("beta", 0.25);
  p.ideal_mode = j.value("ideal_mode", false);
  p.full_theorem = j.value("full_theorem", true);
  if (j.contains("gamma_T")) {
    p.gamma_T = j["gamma_T"];
    p.gamma_R = j.value("gamma_R", p.gamma_T);
    p.gamma_E = j.value("gamma_E", p.gamma_T);
    p.gamma_L = j.value("gamma_L", auto_gamma_L(p.beta, p.b));
    p.alpha = j.value("alpha", 1e-4);
    p.Nbar = j.value("Nbar", 8);
    p.gamma = j.value("gamma", auto_gammas(p.beta, p.b).gamma);
  } else {
    auto_fill(p);
  }
  p.Ntilde = j.value("Ntilde", 4);
  p.Nh = j.value("Nh", 4);
  p.c0_prefactor = j.value("c0_prefactor", 1.0);
  p.glue_time_constant = j.value("glue_time_constant", 0.4);
  return p;
}

json report_to_json(const ValidationReport& rep) {
  json out;
  out["pass"] = rep.pass;
  out["constraints"] = json::array();
  for (const auto& c : rep.constraints)
    out["constraints"].push_back({{"name", c.name},
                                  {"lhs", c.lhs},
                                  {"rhs", c.rhs},
                                  {"satisfied", c.satisfied},
                                  {"slack", c.slack},
                                  {"exact", c.exact}});
  return out;
}

PeriodicField datum_from_json(const json& j, const GridSpec& g) {
  if (j.contains("file")) return mkf_read(j["file"].get<std::string>());
  PeriodicField rho(g, Rank::scalar);
  if (j.contains("modes")) {
    for (const auto& m : j["modes"]) {
      const int kx = m.value("kx", 1), ky = m.value("ky", 0), kz = m.value("kz", 0);
      const double amp = m.value("amp", 1.0), phase = m.value("phase", 0.0);
      std::int64_t p = 0;
      for (int ix = 0; ix < g.n; ++ix)
        for (int iy = 0; iy < g.n; ++iy)
          for (int iz = 0; iz < g.n; ++iz, ++p)
            rho.c[0](p) +=
                amp * std::cos(kx * g.x(ix) + ky * g.x(iy) + kz * g.x(iz) + phase);
    }
  } else {
    const int mode = j.value("mode", 1);
    std::int64_t p = 0;
    for (int ix = 0; ix < g.n; ++ix)
      for (int iy = 0; iy < g.n; ++iy)
        for (int iz = 0; iz < g.n; ++iz, ++p) rho.c[0](p) = std::cos(mode * g.x(ix));
  }
  return rho;
}

DriftProvider drift_from_json(const json& j, const GridSpec& g) {
  const std::string kind = j.value("kind", "none");
  if (kind == "none") {
    auto u = std::make_shared<PeriodicField>(g, Rank::vector);
    return static_drift(u);
  }
  if (kind == "file") {
    auto u = std::make_shared<PeriodicField>(mkf_read(j["path"].get<std::string>()));
    return static_drift(u);
  }
  if (kind == "shear") {
    const double amp = j.value("amp", 1.0);
    auto u = std::make_shared<PeriodicField>(g, Rank::vector);
    std::int64_t p = 0;
    for (int ix = 0; ix < g.n; ++ix)
      for (int iy = 0; iy < g.n; ++iy)
        for (int iz = 0; iz < g.n; ++iz, ++p) u->c[0](p) = amp * std::sin(g.x(iy));
    return static_drift(u);
  }
  if (kind == "abc") {
    const double amp = j.value("amp", 1.0);
    auto u = std::make_shared<PeriodicField>(g, Rank::vector);
    std::int64_t p = 0;
    for (int ix = 0; ix < g.n; ++ix)
      for (int iy = 0; iy < g.n; ++iy)
        for (int iz = 0; iz < g.n; ++iz, ++p) {
          const double x = g.x(ix), y = g.x(iy), z = g.x(iz);
          u->c[0](p) = amp * (std::sin(z) + std::cos(y));
          u->c[1](p) = amp * (std::sin(x) + std::cos(z));
          u->c[2](p) = amp * (std::sin(y) + std::cos(x));
        }
    return static_drift(u);
  }
  if (kind == "mikado") {
    const int N = j.value("N", 4);
    const double sigma = j.value("sigma", 0.1);
    const double kappa = j.value("kappa", 0.05);
    const std::string fk = j.value("family", "shear");
    auto fam = std::make_shared<MikadoFamily>(build_profiles(
        fk == "tube" ? build_direction_set() : build_shear_direction_set(), g));
    CellSetup setup = one_stripe_setup(g, fam, N, kappa, sigma);
    auto u = std::make_shared<PeriodicField>(wform_drift(setup));
    return static_drift(u);
  }
  throw ConfigError("drift kind not recognized: " + kind);
}

void write_ledger_csv(const std::string& path, const DissipationLedger& led) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open " + path);
  os << "t,l2sq,dissrate,cumulative\n";
  for (size_t i = 0; i < led.times.size(); ++i)
    os << led.times[i] << "," << led.l2sq[i] << "," << led.dissrate[i] << ","
       << led.cumulative[i] << "\n";
}

int run_validate(const std::string& cfg_path, bool rational) {
  json j = cfg_path.empty() ? json::object() : load_config(cfg_path);
  ParamConfig p = params_from_json(j);
  ValidationReport rep;
  if (rational) {
    RationalParams rp;
    auto need = [&](double v, const char* name) {
      auto r = Rat::from_double(v);
      if (!r) throw ConfigError(std::string("no exact rational form for ") + name);
      return *r;
    };
    rp.b = need(p.b, "b");
    rp.beta = need(p.beta, "beta");
    rp.gamma_T = need(p.gamma_T, "gamma_T");
    rp.gamma_R = need(p.gamma_R, "gamma_R");
    rp.gamma_E = need(p.gamma_E, "gamma_E");
    rp.gamma_L = need(p.gamma_L, "gamma_L");
    rp.alpha = need(p.alpha, "alpha");
    rp.Nbar = p.Nbar;
    rep = validate_rational(rp, p.full_theorem);
  } else {
    rep = validate(p);
  }
  json out = report_to_json(rep);
  out["params"] = {{"a", p.a},             {"b", p.b},
                   {"beta", p.beta},       {"gamma_T", p.gamma_T},
                   {"gamma_R", p.gamma_R}, {"gamma_E", p.gamma_E},
                   {"gamma_L", p.gamma_L}, {"alpha", p.alpha},
                   {"Nbar", p.Nbar},       {"gamma", p.gamma}};
  std::cout << out.dump(2) << "\n";
  return rep.pass ? 0 : 2;
}

int run_stage_cmd(const std::string& cfg_path) {
  json j = load_config(cfg_path);
  StageConfig sc;
  sc.params = params_from_json(j.value("params", json::object()));
  sc.q = j.value("q", 0);
  sc.n = j.value("n", 64);
  sc.N_init = j.value("N_init", 1);
  sc.N_next = j.value("N_next", 9);
  sc.subsolution_energy = j.value("subsolution_energy", 3.0);
  sc.sigma_scale = j.value("sigma_scale", 0.25);
  sc.init_kind = j.value("init_kind", std::string("tube")) == "tube"
                     ? MikadoKind::tube
                     : MikadoKind::shear;
  sc.perturb_kind = j.value("perturb_kind", std::string("shear")) == "tube"
                        ? MikadoKind::tube
                        : MikadoKind::shear;
  sc.slices_per_tau = j.value("slices_per_tau", 12);
  sc.residual_checks = j.value("residual_checks", 3);
  sc.tau_override = j.value("tau", 0.0);
  sc.dump_fields = j.contains("dump_prefix");
  sc.dump_prefix = j.value("dump_prefix", std::string());
  StageReport rep = run_stage(sc);
  json out;
  out["tau"] = rep.tau_used;
  out["c0"] = rep.c0;
  out["c1"] = rep.c1;
  out["ebar"] = rep.ebar;
  out["sigma_mean"] = rep.sigma_mean;
  out["R_q_inf"] = rep.r_q_inf;
  out["R_new_inf_max"] = rep.r_new_inf_max;
  out["contraction"] = rep.contraction;
  out["support_exterior_max"] = rep.support_exterior_max;
  out["max_div_unew"] = rep.max_div_unew;
  out["max_residual_ratio"] = rep.max_residual_ratio;
  out["min_annulus_fraction"] = rep.min_annulus_fraction;
  out["flow_det_defect"] = rep.flow_det_defect;
  out["rtilde_max_dev"] = rep.rtilde_max_dev;
  out["slices"] = json::array();
  for (const auto& d : rep.slices)
    out["slices"].push_back({{"t", d.t},
                             {"in_strip", d.in_strip},
                             {"rbar_inf", d.rbar_inf},
                             {"w_inf", d.w_inf},
                             {"w_c1", d.w_c1},
                             {"nash_inf", d.nash_inf},
                             {"transport_inf", d.transport_inf},
                             {"oscillation_inf", d.oscillation_inf},
                             {"rnew_inf", d.rnew_inf},
                             {"annulus_fraction", d.annulus_fraction},
                             {"residual", d.residual},
                             {"residual_scale", d.residual_scale},
                             {"sigma", d.sigma}});
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"periodic-torus laboratory for multiscale advection-diffusion"};
  app.require_subcommand(1);

  std::string cfg_path, in_path, out_path;
  bool rational = false;

  auto* validate_cmd = app.add_subcommand("validate-params", "check the exponent web");
  validate_cmd->add_option("--config", cfg_path, "JSON parameter file");
  validate_cmd->add_flag("--rational", rational, "exact-rational inequality path");

  auto* build_cmd = app.add_subcommand("build-field", "construct a Mikado family");
  std::string family_kind = "tube";
  int build_n = 64;
  build_cmd->add_option("--kind", family_kind, "tube or shear");
  build_cmd->add_option("--n", build_n, "grid points per axis");
  build_cmd->add_option("--out", out_path, "output prefix")->required();

  auto* scalar_cmd = app.add_subcommand("scalar", "scalar transport");
  auto* scalar_run = scalar_cmd->add_subcommand("run", "advect-diffuse a scalar");
  scalar_run->add_option("--config", cfg_path, "JSON run config")->required();

  auto* hom_cmd = app.add_subcommand("homogenize", "cell problems");
  auto* hom_sweep = hom_cmd->add_subcommand("sweep", "two-scale gap over cell counts");
  hom_sweep->add_option("--config", cfg_path, "JSON sweep config")->required();

  auto* tav_cmd = app.add_subcommand("timeavg", "temporal averaging");
  auto* tav_sweep = tav_cmd->add_subcommand("sweep", "gaps over fast periods");
  tav_sweep->add_option("--config", cfg_path, "JSON sweep config")->required();

  auto* diss_cmd = app.add_subcommand("dissipation-sweep", "ledger across stages");
  diss_cmd->add_option("--config", cfg_path, "JSON config")->required();

  auto* rich_cmd = app.add_subcommand("richardson", "small-time exponent fit");
  rich_cmd->add_option("--config", cfg_path, "JSON config")->required();

  auto* stage_cmd = app.add_subcommand("stage", "convex-integration stage");
  auto* stage_run = stage_cmd->add_subcommand("run", "run one stage");
  stage_run->add_option("--config", cfg_path, "JSON stage config")->required();

  auto* dump_cmd = app.add_subcommand("dump", "write a named analytic field");
  std::string dump_kind = "abc";
  int dump_n = 32;
  dump_cmd->add_option("--kind", dump_kind, "abc | shear | random");
  dump_cmd->add_option("--n", dump_n, "grid points per axis");
  dump_cmd->add_option("--out", out_path, "MKF1 output path")->required();

  auto* load_cmd = app.add_subcommand("load", "inspect an MKF1 container");
  load_cmd->add_option("--in", in_path, "MKF1 input path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate_cmd->parsed()) return run_validate(cfg_path, rational);

    if (build_cmd->parsed()) {
      GridSpec g(build_n);
      DirectionSet ds =
          family_kind == "tube" ? build_direction_set() : build_shear_direction_set();
      MikadoFamily fam = build_profiles(ds, g);
      json sidecar;
      sidecar["kind"] = family_kind;
      sidecar["n"] = build_n;
      sidecar["radius"] = ds.radius;
      sidecar["min_axis_distance"] = ds.min_axis_distance;
      sidecar["flux_gain"] = fam.flux_gain();
      sidecar["directions"] = json::array();
      for (int k = 0; k < fam.size(); ++k) {
        const auto& d = fam.dirs.dirs[k];
        mkf_write(out_path + "_phi" + std::to_string(k) + ".mkf", fam.phi[k]);
        sidecar["directions"].push_back(
            {{"k", {d.k(0), d.k(1), d.k(2)}},
             {"offset", {d.offset(0), d.offset(1)}},
             {"gradnorm", fam.gradnorm[k]},
             {"lapnorm", fam.lapnorm[k]},
             {"gradnorm_residual", fam.gradnorm[k] - fam.flux_gain()},
             {"lapnorm_residual", fam.lapnorm[k] - 1.0}});
      }
      std::ofstream os(out_path + ".json");
      os << sidecar.dump(2) << "\n";
      std::cout << "wrote " << fam.size() << " profiles to " << out_path << "*\n";
      return 0;
    }

    if (scalar_run->parsed()) {
      json j = load_config(cfg_path);
      GridSpec g(j.value("n", 32));
      PeriodicField rho = datum_from_json(j.value("rho_in", json::object()), g);
      DriftProvider u = drift_from_json(j.value("drift", json::object()), g);
      DiffusivitySpec diff = DiffusivitySpec::constant(j.value("kappa", 0.05));
      SolveOptions opt;
      opt.dt = j.value("dt", 0.0);
      opt.snapshots = j.value("snapshots", 0);
      ScalarRun run = solve_advdiff(rho, u, diff, j.value("T", 0.5), opt);
      if (j.contains("out_csv")) write_ledger_csv(j["out_csv"], run.ledger);
      if (j.contains("out_prefix")) {
        for (size_t i = 0; i < run.snapshots.size(); ++i)
          mkf_write(j["out_prefix"].get<std::string>() + "_" + std::to_string(i) + ".mkf",
                    run.snapshots[i]);
        mkf_write(j["out_prefix"].get<std::string>() + "_final.mkf", run.rho);
      }
      json out;
      out["D"] = run.ledger.final_dissipation();
      out["l2_final_sq"] = run.ledger.l2sq.back();
      out["energy_defect"] = run.energy_defect;
      out["mean_drift"] = run.mean_drift_error;
      out["dt"] = run.dt_used;
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (hom_sweep->parsed()) {
      json j = load_config(cfg_path);
      GridSpec g(j.value("n", 32));
      auto fam = std::make_shared<MikadoFamily>(
          build_profiles(j.value("family", std::string("shear")) == "tube"
                             ? build_direction_set()
                             : build_shear_direction_set(),
                         g));
      PeriodicField rho = datum_from_json(j.value("rho_in", json::object()), g);
      const double kappa = j.value("kappa", 0.08);
      const double sigma = j.value("sigma", 0.04);
      const double T = j.value("T", 0.3);
      std::vector<int> cells = j.value("cells", std::vector<int>{4, 8, 16});
      std::ofstream os(j.value("out_csv", std::string("homogenize_sweep.csv")));
      os << "cells,sup_gap,diss_gap,Dfunc,corrector,ansatz_residual,tensor_rel_err\n";
      std::vector<double> lam, gaps;
      for (int N : cells) {
        CellSetup s = one_stripe_setup(g, fam, N, kappa, sigma);
        EffectiveForm ef = effective_tensor(s, 16, 4);
        EffectiveGapReport rep = two_scale_gap(s, rho, T);
        os << N << "," << rep.sup_gap << "," << rep.diss_gap << "," << rep.Dfunc << ","
           << rep.corrector_term << "," << rep.ansatz_residual << "," << ef.rel_err
           << "\n";
        lam.push_back(N);
        gaps.push_back(rep.sup_gap);
      }
      json out;
      out["slope_sup_gap"] = loglog_slope(lam, gaps);
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (tav_sweep->parsed()) {
      json j = load_config(cfg_path);
      GridSpec g(j.value("n", 16));
      PeriodicField rho = datum_from_json(j.value("rho_in", json::object()), g);
      DriftProvider u = drift_from_json(j.value("drift", json::object()), g);
      OscillatoryDiffusivity base =
          cosine_oscillation(j.value("kappa0", 0.05), j.value("kappa1", 0.05), 0.1,
                             j.value("x_modulation", 0.4));
      std::vector<double> taus =
          j.value("taus", std::vector<double>{0.125, 0.0625, 0.03125});
      TauSweep sw = tau_sweep(base, u, rho, j.value("T", 0.4), taus);
      std::ofstream os(j.value("out_csv", std::string("timeavg_sweep.csv")));
      os << "tau,sup_gap,diss_gap\n";
      for (size_t i = 0; i < sw.taus.size(); ++i)
        os << sw.taus[i] << "," << sw.sup_gaps[i] << "," << sw.diss_gaps[i] << "\n";
      json out;
      out["sup_slope"] = sw.sup_slope;
      out["diss_slope"] = sw.diss_slope;
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (diss_cmd->parsed()) {
      json j = load_config(cfg_path);
      ExperimentConfig cfg;
      cfg.params = params_from_json(j.value("params", json::object()));
      cfg.n = j.value("n", 32);
      cfg.q_lo = j.value("q_lo", 0);
      cfg.q_hi = j.value("q_hi", 2);
      cfg.T = j.value("T", 0.4);
      cfg.amplitude = j.value("amplitude", 0.6);
      cfg.seed = j.value("seed", 1);
      PipelineReport rep = dissipation_sweep(cfg);
      std::ofstream os(j.value("out_csv", std::string("dissipation_sweep.csv")));
      os << "q,Dq,floor,floor_ok,gap_drift_vs_full,gap_datum_vs_moll\n";
      for (size_t i = 0; i < rep.Dq.size(); ++i)
        os << rep.qs[i] << "," << rep.Dq[i] << "," << rep.poincare_floor[i] << ","
           << int(rep.floor_ok[i]) << "," << rep.gap_drift_vs_full[i] << ","
           << rep.gap_datum_vs_moll[i] << "\n";
      json manifest;
      manifest["config_hash"] = config_hash(j);
      manifest["q_I"] = rep.q_I;
      manifest["ell0"] = rep.ell0;
      manifest["ell_in"] = rep.ell_in;
      manifest["C_N"] = rep.C_N;
      manifest["c0_measured"] = rep.c0_measured;
      manifest["c0_predicted"] = rep.c0_predicted;
      manifest["ratios"] = rep.ratios;
      manifest["stability_gap"] = rep.stability_gap;
      manifest["stability_target"] = rep.stability_target;
      std::ofstream ms(
          j.value("out_manifest", std::string("dissipation_manifest.json")));
      ms << manifest.dump(2) << "\n";
      bool floors = true;
      for (bool ok : rep.floor_ok) floors = floors && ok;
      std::cout << manifest.dump(2) << "\n";
      return floors ? 0 : 4;
    }

    if (rich_cmd->parsed()) {
      json j = load_config(cfg_path);
      ExperimentConfig cfg;
      cfg.params = params_from_json(j.value("params", json::object()));
      cfg.n = j.value("n", 32);
      cfg.q_lo = j.value("q_lo", 0);
      cfg.q_hi = j.value("q_hi", 3);
      cfg.amplitude = j.value("amplitude", 0.6);
      std::vector<double> Ts = j.value("T_list", std::vector<double>{});
      if (Ts.empty())
        throw ConfigError("richardson: T_list required (at least four, one decade)");
      RichardsonFit fit = richardson_diagnostic(cfg, Ts, j.value("band", 0.35));
      std::ofstream os(j.value("out_csv", std::string("richardson.csv")));
      os << "T,qI,c0\n";
      for (size_t i = 0; i < fit.Ts.size(); ++i)
        os << fit.Ts[i] << "," << fit.qIs[i] << "," << fit.c0s[i] << "\n";
      json out;
      out["slope"] = fit.slope;
      out["target"] = fit.target;
      out["within_band"] = fit.within_band;
      std::cout << out.dump(2) << "\n";
      if (!fit.within_band)
        std::cerr << "warning: fitted exponent outside the band; artifacts persisted\n";
      return 0;  // loosely gated: failure downgrades to a warning
    }

    if (stage_run->parsed()) return run_stage_cmd(cfg_path);

    if (dump_cmd->parsed()) {
      GridSpec g(dump_n);
      PeriodicField f(g, Rank::vector);
      if (dump_kind == "abc") {
        std::int64_t p = 0;
        for (int ix = 0; ix < g.n; ++ix)
          for (int iy = 0; iy < g.n; ++iy)
            for (int iz = 0; iz < g.n; ++iz, ++p) {
              f.c[0](p) = std::sin(g.x(iz)) + std::cos(g.x(iy));
              f.c[1](p) = std::sin(g.x(ix)) + std::cos(g.x(iz));
              f.c[2](p) = std::sin(g.x(iy)) + std::cos(g.x(ix));
            }
      } else if (dump_kind == "shear") {
        std::int64_t p = 0;
        for (int ix = 0; ix < g.n; ++ix)
          for (int iy = 0; iy < g.n; ++iy)
            for (int iz = 0; iz < g.n; ++iz, ++p) f.c[0](p) = std::sin(g.x(iy));
      } else if (dump_kind == "random") {
        f = random_solenoidal(g, 12345);
      } else {
        throw ConfigError("dump kind not recognized: " + dump_kind);
      }
      mkf_write(out_path, f);
      std::cout << "wrote " << out_path << "\n";
      return 0;
    }

    if (load_cmd->parsed()) {
      PeriodicField f = mkf_read(in_path);
      json out;
      out["n"] = f.grid.n;
      out["rank"] = int(f.rank);
      out["components"] = f.ncomp();
      out["linf"] = linf_norm(f);
      out["l2"] = l2_norm(f);
      std::vector<double> means;
      for (int c = 0; c < f.ncomp(); ++c) means.push_back(f.mean(c));
      out["means"] = means;
      std::cout << out.dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}
