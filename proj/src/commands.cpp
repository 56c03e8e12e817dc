#include "hsb/commands.hpp"

#include "hsb/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

namespace hsb {

namespace {

namespace fs = std::filesystem;

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

class OutDir {
public:
  explicit OutDir(const std::string &dir) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw ValidationError("config key 'output_dir': cannot create '" + dir + "'");
  }
  void write(const std::string &name, const std::string &text) {
    const fs::path p = fs::path(dir_) / name;
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    out_.files.push_back(p.string());
  }
  CommandOutput finish(const std::string &summary) {
    write("summary.txt", summary);
    out_.summary = summary;
    return out_;
  }

private:
  std::string dir_;
  CommandOutput out_;
};

std::string mode_text(const Mode &n) {
  return "(" + std::to_string(n[0]) + "," + std::to_string(n[1]) + "," + std::to_string(n[2]) + ")";
}

std::string pass(bool ok) { return ok ? "PASS" : "FAIL"; }

SpectrumReport spectrum_for(const LinearizedOperator &L, const Mode &n, const RunConfig &c) {
  SpectrumOptions opt;
  opt.dense_cap = c.spectrum.dense_cap;
  opt.iterative_count = c.spectrum.iterative_count;
  opt.essential = L.diagonal(n);
  if (n == Mode::Zero()) opt.null_residual = L.null_residual();
  return compute_spectrum(L.ln(n, {c.weight_m, c.reference.mu}), n, opt);
}

std::string eigen_csv(const SpectrumReport &r) {
  std::ostringstream s;
  s << "index,re,im\n";
  for (std::size_t i = 0; i < r.eigenvalues.size(); ++i)
    s << i << "," << num(r.eigenvalues[i].real()) << "," << num(r.eigenvalues[i].imag()) << "\n";
  return s.str();
}

} // namespace

std::string mode_tag(const Mode &n) {
  std::string s;
  for (int k = 0; k < 3; ++k) {
    if (k) s += "_";
    s += (n[k] < 0 ? "m" : "") + std::to_string(std::abs(n[k]));
  }
  return s;
}

double default_theta(double lambda, double gap) { return std::min(lambda / 4.0, gap / 2.0); }

GridFunction generic_perturbation(const LinearizedOperator &L, std::uint64_t seed) {
  const auto &G = L.grid();
  const auto &p = L.params();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  // all monomials c1^a c2^b c3^c with a + b + c <= 4, c = (v - mu) / sqrt(T)
  std::vector<std::array<int, 3>> powers;
  for (int a = 0; a <= 4; ++a)
    for (int b = 0; a + b <= 4; ++b)
      for (int d = 0; a + b + d <= 4; ++d) powers.push_back({a, b, d});
  std::vector<double> cs;
  for (std::size_t k = 0; k < powers.size(); ++k) cs.push_back(coef(rng));
  const GridFunction M = maxwellian_on_grid(p, G);
  GridFunction f(G.size());
  for (int i = 0; i < G.size(); ++i) {
    const Vec3 c = (G.nodes.col(i) - p.mu) / std::sqrt(p.T);
    double poly = 0.0;
    for (std::size_t k = 0; k < powers.size(); ++k)
      poly += cs[k] * std::pow(c[0], powers[k][0]) * std::pow(c[1], powers[k][1]) *
              std::pow(c[2], powers[k][2]);
    f[i] = M[i] * poly;
  }
  f -= L.projection().apply(f);
  return f;
}

CommandOutput cmd_kernels(const RunConfig &c) {
  validate_config(c);
  if (c.reference.T != 0.5 || c.reference.mu != Vec3::Zero())
    throw ValidationError("config key 'reference': the closed-form kernels need T = 0.5 and mu = 0");
  OutDir out(c.output_dir);
  std::ostringstream sum;
  sum << "command kernels\n";

  struct Point {
    const char *label;
    Vec3 v, u;
    bool k1;
    double expected;
  };
  const Point points[] = {
      {"k1", Vec3(0, 0, 0), Vec3(1, 0, 0), true, std::numbers::pi},
      {"k23", Vec3(0, 0, 0), Vec3(1, 0, 0), false, 2 * std::numbers::pi},
      {"k23", Vec3(0, 0, 2), Vec3(0, 0, 1), false, 2 * std::numbers::pi * std::exp(-4.0)},
  };
  std::ostringstream pts;
  pts << "kernel,v1,v2,v3,u1,u2,u3,value,expected,abs_error\n";
  double worst = 0.0;
  for (const auto &p : points) {
    const double val = p.k1 ? k1_kernel(p.v, p.u) : k23_kernel(p.v, p.u);
    const double err = std::abs(val - p.expected);
    worst = std::max(worst, err);
    pts << p.label << "," << num(p.v[0]) << "," << num(p.v[1]) << "," << num(p.v[2]) << ","
        << num(p.u[0]) << "," << num(p.u[1]) << "," << num(p.u[2]) << "," << num(val) << ","
        << num(p.expected) << "," << num(err) << "\n";
  }
  out.write("kernel_points.csv", pts.str());
  sum << "kernel_points max_abs_error " << num(worst) << " " << pass(worst <= 1e-10) << " (<= 1e-10)\n";

  const CollisionConfig cfg = collision_config(c);
  const auto &G = cfg.grid;
  const auto tests = gaussian_test_functions(G, c.kernels.tests, c.seed);
  const Eigen::MatrixXd Kc = assemble_k_closed_form(c.reference, G).re;
  std::vector<GridFunction> sph, cls;
  for (const auto &f : tests) {
    sph.push_back(apply_k_spherical(f, c.reference, cfg));
    cls.push_back(Kc * f);
  }
  const KernelCrossCheck x = cross_validate_kernels(sph, cls, G);
  std::ostringstream xs;
  xs << "test,relative_deviation\n";
  for (std::size_t k = 0; k < x.deviations.size(); ++k) xs << k << "," << num(x.deviations[k]) << "\n";
  out.write("kernel_crosscheck.csv", xs.str());
  sum << "fitted_constant " << num(x.constant) << "\n";
  sum << "max_relative_deviation " << num(x.max_deviation) << " " << pass(x.max_deviation <= 0.05)
      << " (<= 0.05)\n";

  const Eigen::MatrixXd Kfit = x.constant * Kc;
  std::ostringstream us;
  us << "m,sampled,induced\n";
  double prev = -1.0, prev_ind = -1.0;
  bool monotone = true, monotone_ind = true;
  for (std::size_t k = 0; k < c.kernels.upsilon_m.size(); ++k) {
    const double m = c.kernels.upsilon_m[k];
    const UpsilonEstimate u = upsilon(Kfit, G, m, c.kernels.upsilon_samples, c.seed + 1000 + k);
    us << num(m) << "," << num(u.sampled) << "," << num(u.induced) << "\n";
    monotone = monotone && u.sampled >= prev;
    monotone_ind = monotone_ind && u.induced >= prev_ind;
    prev = u.sampled;
    prev_ind = u.induced;
  }
  out.write("upsilon.csv", us.str());
  // the sampled max is a lower bound; the induced norm is the supremum over the grid
  sum << "upsilon_sampled_nondecreasing " << (monotone ? "yes" : "no") << "\n";
  sum << "upsilon_induced_nondecreasing " << (monotone_ind ? "yes" : "no") << "\n";
  return out.finish(sum.str());
}

CommandOutput cmd_spectrum(const RunConfig &c) {
  validate_config(c);
  OutDir out(c.output_dir);
  const LinearizedOperator L(collision_config(c));
  std::ostringstream sum;
  sum << "command spectrum\n";
  for (const Mode &n : c.modes) {
    const SpectrumReport r = spectrum_for(L, n, c);
    const std::string tag = mode_tag(n);
    out.write("spectrum_" + tag + ".txt", format_spectrum_report(r));
    out.write("eigenvalues_" + tag + ".csv", eigen_csv(r));
    sum << "mode " << mode_text(n) << " null_cluster " << r.null_cluster.size() << " gap " << num(r.gap)
        << " min_nu " << num(nu_min(c.reference, L.grid())) << "\n";
  }
  return out.finish(sum.str());
}

CommandOutput cmd_propagator(const RunConfig &c) {
  validate_config(c);
  OutDir out(c.output_dir);
  const LinearizedOperator L(collision_config(c));
  const auto &G = L.grid();
  const WeightSpec w{c.weight_m, c.reference.mu};
  const double lambda = nu_min(c.reference, G);
  std::ostringstream sum;
  sum << "command propagator\n";

  // decay of e^{-t L_n} (1 - P) f
  const GridFunction f0 = generic_perturbation(L, c.seed);
  std::ostringstream fits;
  std::vector<NormCurve> curves;
  std::vector<SpectrumReport> spectra;
  for (const Mode &n : c.modes) {
    spectra.push_back(spectrum_for(L, n, c));
    const double gap = spectra.back().gap;
    const OperatorMatrix A = L.ln(n, w);
    curves.push_back(semigroup_norm_curve(A, f0.cast<Complex>(), c.propagator.dt, c.propagator.steps, w));
    const double t_last = curves.back().t.back();
    const double lo = c.propagator.fit_lo > 0 ? c.propagator.fit_lo : std::min(2.0 / gap, 0.2 * t_last);
    const double hi = c.propagator.fit_hi > 0 ? c.propagator.fit_hi : std::min(10.0 / gap, t_last);
    DecayFit fit;
    try {
      fit = fit_decay(curves.back().t, curves.back().norm, lo, hi, 0.98);
    } catch (const ValidationError &e) {
      fits << "mode " << mode_text(n) << " REJECTED " << e.what() << "\n";
      continue;
    }
    fits << "mode " << mode_text(n) << " gap " << num(gap) << " " << format_decay_fit(fit)
         << " rate_over_gap " << num(fit.rate / gap) << "\n";
  }
  out.write("decay_fits.txt", fits.str());
  sum << fits.str();
  {
    std::ostringstream s;
    s << "t";
    for (const Mode &n : c.modes) s << ",norm_" << mode_tag(n);
    s << "\n";
    for (std::size_t j = 0; j < curves.front().t.size(); ++j) {
      s << num(curves.front().t[j]);
      for (const auto &cv : curves) s << "," << num(cv.norm[j]);
      s << "\n";
    }
    out.write("norm_curves.csv", s.str());
  }

  // contour representation against the matrix exponential
  for (std::size_t k = 0; k < c.modes.size(); ++k) {
    const Mode &n = c.modes[k];
    const double theta = c.contour.theta ? *c.contour.theta : default_theta(lambda, spectra[k].gap);
    const CGridFunction diag = L.diagonal(n);
    const double psi = c.contour.psi ? *c.contour.psi
                                     : choose_psi(diag, G, n, theta, lambda, c.contour.samples).psi;
    const ContourGamma gamma = contour_gamma(n, theta, psi, lambda);
    const OperatorMatrix A = L.ln(n, w);
    ContourOptions copt;
    copt.refine = c.contour.refine;
    const ProjectionP *P = n == Mode::Zero() ? &L.projection() : nullptr;
    const ContourResult cr =
        contour_semigroup(A, gamma, P, c.contour.t, f0.cast<Complex>(), copt, spectra[k].eigenvalues);
    CGridFunction ref = semigroup_apply(A, c.contour.t, f0.cast<Complex>());
    if (P) ref -= P->apply(ref);
    const double err = weighted_l1_norm(CGridFunction(cr.value - ref), w, G) / weighted_l1_norm(ref, w, G);
    sum << "contour mode " << mode_text(n) << " theta " << num(theta) << " psi " << num(psi) << " nodes "
        << cr.nodes << " relative_error " << num(err) << " " << pass(err <= 1e-4) << " (<= 1e-4)\n";
  }

  // oscillation lattice along e1
  {
    OscillationKernel::Options oo;
    oo.weight = {c.weight_m, Vec3::Zero()};
    const OscillationKernel K(Vec3(1, 0, 0), oo);
    std::vector<double> na, ta, va;
    std::ostringstream s;
    s << "n,t,norm\n";
    for (int n : c.propagator.oscillation_n)
      for (double t : c.propagator.oscillation_t) {
        const double v = K.norm(n, t);
        na.push_back(n);
        ta.push_back(t);
        va.push_back(v);
        s << n << "," << num(t) << "," << num(v) << "\n";
      }
    out.write("oscillation.csv", s.str());
    const OscillationFit of = fit_oscillation(na, ta, va, lambda);
    sum << "oscillation_fit constant " << num(of.constant) << " lambda " << num(lambda) << " r2 "
        << num(of.r_squared) << "\n";
  }

  // Duhamel ledger for the first nonzero mode
  for (const Mode &n : c.modes) {
    if (n == Mode::Zero()) continue;
    DuhamelOptions dopt;
    dopt.k_max = std::max(1, c.propagator.duhamel_k_max);
    const DuhamelLedger d = duhamel_ledger(L, n, c.propagator.duhamel_t, f0.cast<Complex>(), w, dopt);
    std::ostringstream s;
    s << "t";
    for (int k = 0; k <= d.k_max; ++k) s << ",A" << k;
    s << "\n";
    for (std::size_t j = 0; j < d.t.size(); ++j) {
      s << num(d.t[j]);
      for (int k = 0; k <= d.k_max; ++k) s << "," << num(d.norms[k][j]);
      s << "\n";
    }
    out.write("duhamel_" + mode_tag(n) + ".csv", s.str());
    CGridFunction partial = CGridFunction::Zero(G.size());
    for (int k = 0; k <= d.k_max; ++k) partial += (k % 2 ? -1.0 : 1.0) * d.terms_at_end[k];
    const CGridFunction ref = semigroup_apply(L.ln(n, w), c.propagator.duhamel_t, f0.cast<Complex>());
    sum << "duhamel mode " << mode_text(n) << " k_max " << d.k_max << " intervals " << d.intervals
        << " truncation_remainder " << num(weighted_l1_norm(CGridFunction(ref - partial), w, G) /
                                           weighted_l1_norm(ref, w, G))
        << "\n";
    break;
  }
  return out.finish(sum.str());
}

CommandOutput cmd_simulate(const RunConfig &c) {
  validate_config(c);
  OutDir out(c.output_dir);
  const CollisionConfig cfg = collision_config(c);
  const DynamicsModel model(cfg, make_sphere_quadrature(c.quadratic_sphere.n_polar,
                                                         c.quadratic_sphere.n_azimuthal));
  const ModeField init =
      init_perturbation(c.reference, cfg.grid, c.integrator.n_max, c.perturbation.mode,
                        c.perturbation.amplitude, perturbation_shape_from_string(c.perturbation.shape),
                        c.perturbation.isotropic_bump);
  const double bound = model.stability_bound(c.integrator.n_max);
  const double dt = c.integrator.dt ? *c.integrator.dt : bound;
  if (dt > bound)
    throw ValidationError("config key 'integrator.dt': exceeds the stability bound " + num(bound));
  Monitors mon;
  mon.weight = {c.weight_m, Vec3::Zero()};
  const RelaxationRun run = run_relaxation(init, c.integrator.t_end, dt, mon, model);

  const SpectrumReport lin = spectrum_for(model.linear(), c.perturbation.mode, c);

  std::ostringstream s;
  s << "t,distance,mass,momentum1,momentum2,momentum3,energy,controlling,min_density\n";
  for (std::size_t i = 0; i < run.t.size(); ++i) {
    const Moments &m = run.invariants[i];
    s << num(run.t[i]) << "," << num(run.distance[i]) << "," << num(m.mass) << "," << num(m.momentum[0])
      << "," << num(m.momentum[1]) << "," << num(m.momentum[2]) << "," << num(m.energy) << ","
      << num(run.controlling[i]) << "," << num(run.min_density[i]) << "\n";
  }
  out.write("timeseries.csv", s.str());

  std::ostringstream sum;
  sum << "command simulate\n";
  sum << "target T " << num(run.params.T) << " mu " << num(run.params.mu[0]) << " " << num(run.params.mu[1])
      << " " << num(run.params.mu[2]) << "\n";
  sum << "dt " << num(dt) << " steps " << run.t.size() - 1 << " t_end " << num(run.t.back()) << "\n";
  sum << "amplitude " << num(c.perturbation.amplitude) << " min_density " << num(*std::min_element(
                                                                    run.min_density.begin(), run.min_density.end()))
      << "\n";
  sum << "drift mass " << num(run.drift_mass) << " momentum " << num(run.drift_momentum) << " energy "
      << num(run.drift_energy) << " " << pass(std::max({run.drift_mass, run.drift_momentum, run.drift_energy}) <= 1e-8)
      << " (<= 1e-8)\n";
  sum << "fit " << format_decay_fit(run.fit) << "\n";
  sum << "linear_gap " << num(lin.gap) << " rate_over_gap " << num(lin.gap > 0 ? run.fit.rate / lin.gap : 0.0)
      << "\n";
  sum << "controlling c0 " << num(run.controlling_c0) << " sup_over_initial " << num(run.controlling_ratio) << " "
      << (run.controlling_ratio <= 3.0 ? "BOUNDED" : "UNBOUNDED") << " (<= 3)\n";
  if (run.aborted) sum << "aborted " << run.abort_reason << "\n";
  return out.finish(sum.str());
}

int run_command(const std::string &name, const RunConfig &c) {
  try {
    CommandOutput o;
    if (name == "kernels") o = cmd_kernels(c);
    else if (name == "spectrum") o = cmd_spectrum(c);
    else if (name == "propagator") o = cmd_propagator(c);
    else if (name == "simulate") o = cmd_simulate(c);
    else throw ValidationError("unknown command '" + name + "'");
    std::cout << o.summary;
    return 0;
  } catch (const ValidationError &e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError &e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
}

} // namespace hsb
