// Acceptance suite: one PASS/FAIL line per criterion, also written to
// acceptance_report.txt. Arguments select a subset of criteria (default: all).
// The exit status is 0 when every selected criterion was evaluated, whatever
// its verdict, and 2 when an evaluation itself broke.

#include "hsb/commands.hpp"
#include "hsb/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace hsb;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

void note(const std::string &s) { std::cerr << "  " << s << std::endl; }

struct Verdict {
  bool pass = false;
  std::string detail;
};

// checks joined into one verdict; every failing part is named
class Checks {
public:
  void add(const std::string &label, bool ok, const std::string &value) {
    pass_ = pass_ && ok;
    parts_.push_back(label + " " + value + (ok ? "" : " [fail]"));
  }
  Verdict verdict() const {
    std::string d;
    for (std::size_t k = 0; k < parts_.size(); ++k) d += (k ? "; " : "") + parts_[k];
    return {pass_, d};
  }

private:
  bool pass_ = true;
  std::vector<std::string> parts_;
};

CollisionConfig default_config(int points) {
  return make_collision_config(make_grid(points, 4.5), make_sphere_quadrature(16, 32));
}

GridFunction mixture(const VelocityGrid &g, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> c(-0.8, 0.8), s(0.5, 0.9), a(0.2, 1.0);
  GridFunction f = GridFunction::Zero(g.size());
  for (int k = 0; k < 3; ++k) {
    const Vec3 mu(c(rng), c(rng), c(rng));
    const double sig = s(rng), amp = a(rng);
    for (int i = 0; i < g.size(); ++i) f[i] += amp * std::exp(-(g.node(i) - mu).squaredNorm() / (2 * sig * sig));
  }
  return f;
}

double min_real_part(const std::vector<Complex> &z) {
  double m = 1e300;
  for (const auto &x : z) m = std::min(m, x.real());
  return m;
}

// state shared between criteria
struct Shared {
  std::unique_ptr<LinearizedOperator> lin15;
  std::map<int, SpectrumReport> spec15; // keyed by the multiple of e1
  double res19 = -1.0, raw19 = -1.0, gap19 = -1.0, eig19_seconds = 0.0;
  double kernel_constant = -1.0;

  const LinearizedOperator &L15() {
    if (!lin15) {
      const auto t0 = Clock::now();
      lin15 = std::make_unique<LinearizedOperator>(default_config(15));
      note("15^3 linearized operator assembled in " + num(seconds_since(t0)) + " s");
    }
    return *lin15;
  }
  const SpectrumReport &spectrum15(int k, double *seconds = nullptr) {
    auto it = spec15.find(k);
    if (it == spec15.end()) {
      const auto &L = L15();
      const Mode n(k, 0, 0);
      SpectrumOptions opt;
      if (k == 0) opt.null_residual = L.null_residual();
      const auto t0 = Clock::now();
      it = spec15.emplace(k, compute_spectrum(L.ln(n), n, opt)).first;
      const double s = seconds_since(t0);
      if (seconds) *seconds = s;
      note("15^3 spectrum of L_" + std::to_string(k) + "e1 in " + num(s) + " s, gap " + num(it->second.gap));
    }
    return it->second;
  }
  // 19^3 quantities, computed before anything at 15^3 is held in memory
  void refine19() {
    if (res19 >= 0.0) return;
    const auto t0 = Clock::now();
    const LinearizedOperator L(default_config(19));
    note("19^3 linearized operator assembled in " + num(seconds_since(t0)) + " s");
    res19 = L.null_residual();
    raw19 = L.null_residual_raw();
    const double cluster = std::max(1e-6, 10 * res19);
    const auto t1 = Clock::now();
    // shift-invert around the coarse-grid gap scale
    double resid = 0.0;
    const auto near = eigenvalues_near(L.ln(Mode::Zero()), 0.02, 12, &resid);
    eig19_seconds = seconds_since(t1);
    std::vector<Complex> outside;
    for (const auto &z : near)
      if (std::abs(z) > cluster) outside.push_back(z);
    gap19 = outside.empty() ? 0.0 : min_real_part(outside);
    note("19^3 null residual " + num(res19) + ", gap " + num(gap19) + " (" + num(eig19_seconds) +
         " s, Arnoldi residual " + num(resid) + ")");
  }
};

Verdict c1_equilibrium(Shared &) {
  const auto t0 = Clock::now();
  const CollisionOperator op(default_config(15));
  const auto &g = op.config().grid;
  const GridFunction M = maxwellian_on_grid({}, g);
  const GridFunction q = op.apply(M, M);
  const double rel = weighted_l1_norm(q, {}, g) /
                     weighted_l1_norm(GridFunction(nu_on_grid({}, op.config()).cwiseProduct(M)), {}, g);
  const double secs = seconds_since(t0);
  Checks c;
  c.add("||Q(M,M)||/||nu M||", rel <= 1e-3, num(rel) + " (<= 1e-3)");
  c.add("runtime", secs <= 60.0, num(secs) + " s (<= 60)");
  return c.verdict();
}

Verdict c2_invariants(Shared &) {
  const CollisionOperator op(default_config(15));
  const auto &g = op.config().grid;
  std::mt19937_64 rng(2024);
  double worst = 0.0, worst_raw = 0.0;
  for (int r = 0; r < 20; ++r) {
    const GridFunction f = mixture(g, rng);
    const double scale = std::pow(g.quad_weights.dot(f.cwiseAbs()), 2);
    auto rel = [&](const GridFunction &q) {
      const Moments m = moments(q, g);
      return std::max({std::abs(m.mass), m.momentum.norm(), std::abs(m.energy)}) / scale;
    };
    const GridFunction raw = op.apply_raw(f, f);
    worst = std::max(worst, rel(GridFunction(raw - op.projection().apply(raw))));
    worst_raw = std::max(worst_raw, rel(raw));
  }
  Checks c;
  c.add("max moment / ||f||^2", worst <= 1e-6, num(worst) + " (<= 1e-6)");
  c.add("before conservative projection", true, num(worst_raw) + " (info)");
  return c.verdict();
}

Verdict c3_null_space(Shared &s) {
  s.refine19();
  const double r15 = s.L15().null_residual();
  Checks c;
  c.add("15^3 residual", r15 <= 5e-3, num(r15) + " (<= 5e-3)");
  c.add("19^3 reduction", r15 >= 2 * s.res19, num(r15 / s.res19) + "x (>= 2)");
  const double raw15 = s.L15().null_residual_raw();
  c.add("without the conservative correction", true,
        num(raw15) + " -> " + num(s.raw19) + " (info)");
  return c.verdict();
}

Verdict c4_gap(Shared &s) {
  s.refine19();
  double secs = 0.0;
  const SpectrumReport &r0 = s.spectrum15(0, &secs);
  const double gap = r0.gap;
  Checks c;
  c.add("null cluster", r0.null_cluster.size() == 5, std::to_string(r0.null_cluster.size()) + " (== 5)");
  c.add("gap", gap > 0.0, num(gap) + " (> 0)");
  for (int k : {1, 2}) {
    const double lo = min_real_part(s.spectrum15(k).eigenvalues);
    c.add("min Re spec L_" + std::to_string(k) + "e1 / gap", lo >= 0.8 * gap, num(lo / gap) + " (>= 0.8)");
  }
  const double drift = std::abs(s.gap19 / gap - 1.0);
  c.add("gap 15^3 -> 19^3 change", drift <= 0.2, num(drift) + " (<= 0.2)");
  c.add("3375-dim dense eigendecomposition", secs <= 600.0, num(secs) + " s (<= 600)");
  c.add("19^3 iterative", s.eig19_seconds <= 120.0, num(s.eig19_seconds) + " s (<= 120, info)");
  return c.verdict();
}

Verdict c5_decay(Shared &s) {
  const auto &L = s.L15();
  const double gap = s.spectrum15(0).gap;
  const GridFunction f = generic_perturbation(L, 1);
  const double lo = 2.0 / gap, hi = 10.0 / gap;
  const double dt = 2.0;
  const int steps = static_cast<int>(std::ceil(hi / dt)) + 1;
  Checks c;
  {
    const NormCurve cv = semigroup_norm_curve(L.ln(Mode::Zero()), f.cast<Complex>(), dt, steps, {});
    const DecayFit fit = fit_decay(cv.t, cv.norm, lo, hi, 0.99);
    c.add("L0 rate / gap", std::abs(fit.rate / gap - 1.0) <= 0.15, num(fit.rate / gap) + " (within 15%)");
    c.add("r2", fit.r_squared >= 0.99, num(fit.r_squared) + " (>= 0.99)");
  }
  for (int k : {1, 2, 4}) {
    const Mode n(k, 0, 0);
    const NormCurve cv = semigroup_norm_curve(L.ln(n), f.cast<Complex>(), dt, steps, {});
    const DecayFit fit = fit_decay(cv.t, cv.norm, lo, hi, 0.0);
    c.add("rate " + std::to_string(k) + "e1", fit.rate > 0.0, num(fit.rate) + " (> 0)");
  }
  return c.verdict();
}

Verdict c6_contour(Shared &) {
  const LinearizedOperator L(default_config(9));
  const auto &g = L.grid();
  const Mode n(1, 0, 0);
  const auto t0 = Clock::now();
  const OperatorMatrix A = L.ln(n);
  const SpectrumReport r = compute_spectrum(A, n);
  const double lambda = nu_min({}, g);
  const double theta = default_theta(lambda, r.gap);
  const double psi = choose_psi(L.diagonal(n), g, n, theta, lambda).psi;
  const ContourGamma gamma = contour_gamma(n, theta, psi, lambda);
  const CGridFunction f = generic_perturbation(L, 1).cast<Complex>();
  const ContourResult cr = contour_semigroup(A, gamma, nullptr, 1.0, f, {}, r.eigenvalues);
  const double secs = seconds_since(t0);
  const CGridFunction ref = semigroup_apply(A, 1.0, f);
  const double err = weighted_l1_norm(CGridFunction(cr.value - ref), {}, g) / weighted_l1_norm(ref, {}, g);
  Checks c;
  c.add("relative error", err <= 1e-4, num(err) + " (<= 1e-4, " + std::to_string(cr.nodes) + " nodes)");
  c.add("runtime", secs <= 300.0, num(secs) + " s (<= 300)");
  return c.verdict();
}

Verdict c7_oscillation(Shared &) {
  const std::vector<int> ns{0, 1, 2, 4, 8};
  const std::vector<double> ts{0.5, 1, 2, 4};
  const OscillationKernel K(Vec3(1, 0, 0), {});
  const double lambda = nu_min({}, make_grid(15, 4.5));
  std::vector<double> na, ta, va;
  std::map<std::pair<int, double>, double> v;
  for (int n : ns)
    for (double t : ts) {
      const double x = K.norm(n, t);
      v[{n, t}] = x;
      na.push_back(n);
      ta.push_back(t);
      va.push_back(x);
    }
  Checks c;
  for (double t : {1.0, 2.0}) {
    bool mono = true;
    std::string seq;
    for (std::size_t k = 0; k < ns.size(); ++k) {
      seq += (k ? "," : "") + num(v[{ns[k], t}]);
      if (k) mono = mono && v[{ns[k], t}] <= v[{ns[k - 1], t}];
    }
    c.add("nonincreasing at t=" + num(t), mono, "[" + seq + "]");
  }
  const OscillationFit of = fit_oscillation(na, ta, va, lambda);
  c.add("log-fit R2", of.r_squared >= 0.9, num(of.r_squared) + " (>= 0.9)");
  return c.verdict();
}

Verdict c8_deltas(Shared &s) {
  Checks c;
  c.add("delta_{1,1}", delta_m1_closed(1.0) == 0.5, num(delta_m1_closed(1.0)) + " (== 0.5)");
  double worst = 0.0;
  const std::vector<double> ms{1, 2, 4, 8, 16};
  for (double m : ms) worst = std::max(worst, std::abs(delta_m1_closed(m) - delta_m1_numeric(m)));
  c.add("closed vs numeric", worst <= 1e-12, num(worst) + " (<= 1e-12)");

  const auto &g = s.L15().grid();
  const double scale = s.kernel_constant > 0 ? s.kernel_constant : 2.0 / (kTorusVolume * std::pow(std::numbers::pi, 1.5));
  ClosedFormParts parts = assemble_k_closed_form_parts({}, g);
  parts.k1 *= scale;
  parts.k23 *= scale;
  const std::vector<const Eigen::MatrixXd *> ks{&parts.k1, &parts.k23};
  std::vector<DeltaConstants> d;
  for (double m : ms) d.push_back(delta_constants(m, g, ks));
  auto sweep = [&](auto get, const std::string &label) {
    bool mono = true;
    std::string seq;
    for (std::size_t k = 0; k < d.size(); ++k) {
      seq += (k ? "," : "") + num(get(d[k]));
      if (k) mono = mono && get(d[k]) <= get(d[k - 1]);
    }
    c.add(label + " nonincreasing", mono, "[" + seq + "]");
  };
  sweep([](const DeltaConstants &x) { return x.delta_m0; }, "delta_{m,0}");
  sweep([](const DeltaConstants &x) { return x.delta_m2; }, "delta_{m,2}");
  sweep([](const DeltaConstants &x) { return x.delta_m2_alt; }, "delta_{m,2} second form");
  return c.verdict();
}

Verdict c9_relaxation(Shared &) {
  const auto t0 = Clock::now();
  const CollisionConfig cfg = default_config(11);
  const DynamicsModel model(cfg, make_sphere_quadrature(6, 12));
  const Mode n(1, 0, 0);
  const ModeField init = init_perturbation({}, cfg.grid, 1, n, 0.1);
  Monitors mon;
  const RelaxationRun run = run_relaxation(init, 20.0, model.stability_bound(1), mon, model);
  const double secs = seconds_since(t0);
  const double gap_e1 = compute_spectrum(model.linear().ln(n), n).gap;
  SpectrumOptions o0;
  o0.null_residual = model.linear().null_residual();
  const double gap_0 = compute_spectrum(model.linear().ln(Mode::Zero()), Mode::Zero(), o0).gap;
  const double drift = std::max({run.drift_mass, run.drift_momentum, run.drift_energy});
  Checks c;
  c.add("aborted", !run.aborted, run.aborted ? run.abort_reason : "no");
  c.add("drift", drift <= 1e-8, num(drift) + " (<= 1e-8)");
  c.add("r2", run.fit.r_squared >= 0.98, num(run.fit.r_squared) + " (>= 0.98)");
  c.add("rate / gap(L_e1)", std::abs(run.fit.rate / gap_e1 - 1.0) <= 0.25,
        num(run.fit.rate) + " / " + num(gap_e1) + " = " + num(run.fit.rate / gap_e1) + " (within 25%)");
  c.add("rate / gap(L_0)", true, num(run.fit.rate / gap_0) + " (info)");
  c.add("controlling sup/initial", run.controlling_ratio <= 3.0, num(run.controlling_ratio) + " (<= 3)");
  c.add("runtime", secs <= 900.0, num(secs) + " s (<= 900)");
  return c.verdict();
}

Verdict c10_kernels(Shared &s) {
  Checks c;
  const double e1 = std::abs(k1_kernel(Vec3::Zero(), Vec3(1, 0, 0)) - std::numbers::pi);
  const double e2 = std::abs(k23_kernel(Vec3::Zero(), Vec3(1, 0, 0)) - 2 * std::numbers::pi);
  const double e3 = std::abs(k23_kernel(Vec3(0, 0, 2), Vec3(0, 0, 1)) - 2 * std::numbers::pi * std::exp(-4.0));
  const double pe = std::max({e1, e2, e3});
  c.add("point values", pe <= 1e-10, num(pe) + " (<= 1e-10)");
  const CollisionConfig cfg = default_config(15);
  const auto &g = cfg.grid;
  const auto tests = gaussian_test_functions(g, 10, 1);
  const Eigen::MatrixXd Kc = assemble_k_closed_form({}, g).re;
  std::vector<GridFunction> sph, cls;
  for (const auto &f : tests) {
    sph.push_back(apply_k_spherical(f, {}, cfg));
    cls.push_back(Kc * f);
  }
  const KernelCrossCheck x = cross_validate_kernels(sph, cls, g);
  s.kernel_constant = x.constant;
  c.add("max deviation", x.max_deviation <= 0.05, num(x.max_deviation) + " (<= 0.05)");
  c.add("fitted constant", true, num(x.constant) + " (derived " +
                                     num(2.0 / (kTorusVolume * std::pow(std::numbers::pi, 1.5))) + ")");
  return c.verdict();
}

} // namespace

int main(int argc, char **argv) {
  std::set<int> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::stoi(argv[i]));
  const std::vector<std::pair<const char *, std::function<Verdict(Shared &)>>> criteria{
      {"equilibrium", c1_equilibrium},   {"collision invariants", c2_invariants},
      {"null space", c3_null_space},     {"spectral gap", c4_gap},
      {"semigroup decay", c5_decay},     {"contour representation", c6_contour},
      {"oscillation trend", c7_oscillation}, {"delta constants", c8_deltas},
      {"nonlinear relaxation", c9_relaxation}, {"kernel cross-validation", c10_kernels},
  };
  // evaluation order: the 19^3 refinement first (memory), kernels before the delta sweep
  const std::vector<int> order{3, 4, 1, 2, 10, 8, 5, 6, 7, 9};
  std::map<int, std::string> lines;
  Shared shared;
  bool broken = false;
  for (int id : order) {
    if (!pick.empty() && !pick.count(id)) continue;
    const auto &[name, run] = criteria[id - 1];
    std::cerr << "criterion " << id << " (" << name << ")" << std::endl;
    const auto t0 = Clock::now();
    std::string line;
    try {
      const Verdict v = run(shared);
      line = std::string(v.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + " " + name + ": " +
             v.detail;
    } catch (const std::exception &e) {
      broken = true;
      line = "FAIL criterion " + std::to_string(id) + " " + name + ": evaluation error: " + e.what();
    }
    line += " {" + num(seconds_since(t0)) + " s}";
    std::cout << line << std::endl;
    lines[id] = line;
  }
  std::ofstream report("acceptance_report.txt");
  int passed = 0;
  for (const auto &[id, line] : lines) {
    report << line << "\n";
    passed += line.rfind("PASS", 0) == 0;
  }
  const std::string tally = std::to_string(passed) + "/" + std::to_string(lines.size()) + " criteria PASS";
  report << tally << "\n";
  std::cout << tally << std::endl;
  return broken ? 2 : 0;
}
