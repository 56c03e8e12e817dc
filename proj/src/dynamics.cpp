#include "hsb/dynamics.hpp"

#include "hsb/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace hsb {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_representative(const Mode &n) {
  for (int k = 0; k < 3; ++k) {
    if (n[k] > 0) return true;
    if (n[k] < 0) return false;
  }
  return true; // zero mode
}

bool is_active(const CGridFunction &g) { return g.cwiseAbs().maxCoeff() > 0.0; }

} // namespace

int ModeField::index(const Mode &n) const {
  if (n.cwiseAbs().maxCoeff() > n_max) return -1;
  const int w = 2 * n_max + 1;
  return (n[0] + n_max) * w * w + (n[1] + n_max) * w + (n[2] + n_max);
}

CGridFunction &ModeField::at(const Mode &n) {
  const int i = index(n);
  if (i < 0) throw ValidationError("mode outside the truncation");
  return coeffs[i];
}

const CGridFunction &ModeField::at(const Mode &n) const {
  const int i = index(n);
  if (i < 0) throw ValidationError("mode outside the truncation");
  return coeffs[i];
}

void ModeField::enforce_reality() {
  for (int i = 0; i < size(); ++i) {
    const Mode &n = modes[i];
    if (n == Mode::Zero()) {
      coeffs[i] = coeffs[i].real().cast<Complex>();
      continue;
    }
    if (!is_representative(n)) continue;
    CGridFunction &a = coeffs[i];
    CGridFunction &b = at(Mode(-n));
    const CGridFunction avg = 0.5 * (a + b.conjugate());
    a = avg;
    b = avg.conjugate();
  }
}

double ModeField::reality_defect() const {
  double worst = 0.0;
  for (int i = 0; i < size(); ++i) {
    const CGridFunction &b = at(Mode(-modes[i]));
    worst = std::max(worst, (b - coeffs[i].conjugate()).cwiseAbs().maxCoeff());
  }
  return worst;
}

GridFunction ModeField::reconstruct(const Vec3 &x) const {
  GridFunction g = GridFunction::Zero(grid.size());
  for (int i = 0; i < size(); ++i) {
    if (!is_representative(modes[i]) || !is_active(coeffs[i])) continue;
    const double ph = modes[i].cast<double>().dot(x);
    if (modes[i] == Mode::Zero())
      g += coeffs[i].real();
    else // g_n e^{i ph} + conj
      g += 2.0 * (coeffs[i].real() * std::cos(ph) - coeffs[i].imag() * std::sin(ph));
  }
  return g;
}

Moments ModeField::total_moments() const {
  Moments m = moments(at(Mode::Zero()).real(), grid);
  m.mass *= kTorusVolume;
  m.momentum *= kTorusVolume;
  m.energy *= kTorusVolume;
  return m;
}

ModeField zero_field(const VelocityGrid &grid, int n_max) {
  if (n_max < 0) throw ValidationError("n_max must be nonnegative");
  ModeField f;
  f.grid = grid;
  f.n_max = n_max;
  for (int a = -n_max; a <= n_max; ++a)
    for (int b = -n_max; b <= n_max; ++b)
      for (int c = -n_max; c <= n_max; ++c) {
        f.modes.emplace_back(a, b, c);
        f.coeffs.push_back(CGridFunction::Zero(grid.size()));
      }
  return f;
}

ModeField operator+(const ModeField &a, const ModeField &b) {
  if (a.size() != b.size()) throw ValidationError("mode fields differ in truncation");
  ModeField r = a;
  for (int i = 0; i < r.size(); ++i) r.coeffs[i] += b.coeffs[i];
  return r;
}

ModeField operator*(double s, const ModeField &a) {
  ModeField r = a;
  for (auto &c : r.coeffs) c *= s;
  return r;
}

PerturbationShape perturbation_shape_from_string(const std::string &s) {
  if (s == "maxwellian_v1") return PerturbationShape::MaxwellianV1;
  throw ValidationError("unknown perturbation shape '" + s + "'");
}

ModeField init_perturbation(const MaxwellParams &p, const VelocityGrid &grid, int n_max,
                            const Mode &mode, double amplitude, PerturbationShape shape,
                            double isotropic_bump) {
  validate(p);
  if (mode == Mode::Zero()) throw ValidationError("perturbation mode must be nonzero");
  ModeField g = zero_field(grid, n_max);
  if (g.index(mode) < 0) throw ValidationError("perturbation mode exceeds n_max");
  const GridFunction M = maxwellian_on_grid(p, grid);
  GridFunction g0 = M;
  if (isotropic_bump != 0.0) {
    // fourth-order Laguerre profile: no mass, momentum or energy
    GridFunction b(grid.size());
    for (int i = 0; i < grid.size(); ++i) {
      const double c2 = (grid.nodes.col(i) - p.mu).squaredNorm();
      b[i] = M[i] * (c2 * c2 - 10.0 * p.T * c2 + 15.0 * p.T * p.T) / (15.0 * p.T * p.T);
    }
    b -= make_projection(p, grid).apply(b);
    g0 += isotropic_bump * b;
  }
  g.at(Mode::Zero()) = g0.cast<Complex>();
  CGridFunction s(grid.size());
  switch (shape) {
  case PerturbationShape::MaxwellianV1:
    for (int i = 0; i < grid.size(); ++i) s[i] = M[i] * (grid.nodes(0, i) - p.mu[0]);
    break;
  }
  g.at(mode) = amplitude * s;
  g.at(Mode(-mode)) = amplitude * s.conjugate();
  for (double a : {0.0, kPi / 2, kPi})
    for (double b : {0.0, kPi / 2, kPi})
      for (double c : {0.0, kPi / 2, kPi}) {
        const GridFunction r = g.reconstruct(Vec3(a, b, c));
        if (r.minCoeff() < 0.0)
          throw ValidationError("perturbation amplitude " + std::to_string(amplitude) +
                                " makes g negative at a probe point");
      }
  return g;
}

DynamicsModel::DynamicsModel(const CollisionConfig &linear, const SphereQuadrature &quadratic_sphere)
    : lin_(linear), quad_([&] {
        CollisionConfig c = linear;
        c.sphere = quadratic_sphere;
        return c;
      }()),
      m_(maxwellian_on_grid(linear.reference, linear.grid)) {
  nu_max_ = lin_.nu().maxCoeff();
}

double DynamicsModel::stability_bound(int n_max, double c) const {
  return c / (nu_max_ + n_max * grid().extent);
}

ModeField DynamicsModel::quadratic_part(const ModeField &f) const {
  const auto &G = grid();
  ModeField out = zero_field(G, f.n_max);
  // real fields: re and im parts of the active representative modes
  std::vector<int> rep_of(f.size(), -1);   // field slot of re part, -1 inactive
  std::vector<GridFunction> store;
  store.reserve(2 * f.size());
  for (int i = 0; i < f.size(); ++i) {
    if (!is_representative(f.modes[i]) || !is_active(f.coeffs[i])) continue;
    rep_of[i] = static_cast<int>(store.size());
    store.push_back(f.coeffs[i].real());
    store.push_back(f.modes[i] == Mode::Zero() ? GridFunction::Zero(G.size())
                                               : GridFunction(f.coeffs[i].imag()));
  }
  if (store.empty()) return out;
  std::vector<const GridFunction *> fields;
  for (const auto &s : store) fields.push_back(&s);
  std::vector<GridFunction> conv(store.size());
  for (std::size_t k = 0; k < store.size(); ++k) conv[k] = quad_.gain().speed_convolution(store[k]);

  // a mode and its conjugate share the representative slots with sign s on im
  auto slot = [&](const Mode &n, int &re, int &im, double &s) {
    const bool rep = is_representative(n);
    const int i = f.index(rep ? n : Mode(-n));
    if (i < 0 || rep_of[i] < 0) return false;
    re = rep_of[i];
    im = re + 1;
    s = rep ? 1.0 : -1.0;
    return true;
  };

  std::vector<int> out_modes;
  std::vector<GainProduct> prod;
  std::vector<std::vector<std::pair<std::array<int, 2>, std::array<double, 4>>>> losses;
  for (int o = 0; o < f.size(); ++o) {
    const Mode &n = f.modes[o];
    if (!is_representative(n)) continue;
    const int slot_out = static_cast<int>(out_modes.size());
    bool any = false;
    losses.emplace_back();
    for (int a = 0; a < f.size(); ++a) {
      const Mode n1 = f.modes[a];
      const Mode n2 = n - n1;
      if (f.index(n2) < 0) continue;
      int r1, i1, r2, i2;
      double s1, s2;
      if (!slot(n1, r1, i1, s1) || !slot(n2, r2, i2, s2)) continue;
      any = true;
      // Q(a, b): Re = Q(ar, br) - Q(ai, bi), Im = Q(ar, bi) + Q(ai, br)
      const bool im1 = n1 != Mode::Zero(), im2 = n2 != Mode::Zero();
      prod.push_back({2 * slot_out, r1, r2, 1.0});
      if (im1 && im2) prod.push_back({2 * slot_out, i1, i2, -s1 * s2});
      if (im2) prod.push_back({2 * slot_out + 1, r1, i2, s2});
      if (im1) prod.push_back({2 * slot_out + 1, i1, r2, s1});
      losses.back().push_back({{r1, r2}, {s1, s2, 0.0, 0.0}});
    }
    if (!any) {
      losses.pop_back();
      continue;
    }
    out_modes.push_back(o);
  }
  if (out_modes.empty()) return out;
  ExitStats stats;
  const auto gain = quad_.gain().gains(fields, prod, 2 * static_cast<int>(out_modes.size()), &stats);
  quad_.check_exits(stats);
  const auto &P = quad_.projection();
  const bool conservative = quad_.config().conservative;
  for (std::size_t k = 0; k < out_modes.size(); ++k) {
    GridFunction re = gain[2 * k], im = gain[2 * k + 1];
    for (const auto &[idx, sg] : losses[k]) {
      const int r1 = idx[0], i1 = r1 + 1, r2 = idx[1], i2 = r2 + 1;
      const double s1 = sg[0], s2 = sg[1];
      // loss of Q(a, b) is b(v) (S |u - v| * a)(v)
      re.array() -= store[r2].array() * conv[r1].array() - s1 * s2 * store[i2].array() * conv[i1].array();
      im.array() -= s2 * store[i2].array() * conv[r1].array() + s1 * store[r2].array() * conv[i1].array();
    }
    if (conservative) {
      re -= P.apply(re);
      im -= P.apply(im);
    }
    const Mode &n = f.modes[out_modes[k]];
    CGridFunction c(G.size());
    c.real() = re;
    c.imag() = n == Mode::Zero() ? GridFunction::Zero(G.size()) : im;
    out.coeffs[out_modes[k]] = c;
    if (n != Mode::Zero()) out.at(Mode(-n)) = c.conjugate();
  }
  return out;
}

ModeField DynamicsModel::rhs(const ModeField &g) const {
  if (g.grid.size() != grid().size()) throw ValidationError("field grid does not match the model");
  ModeField f = g;
  f.at(Mode::Zero()) -= m_.cast<Complex>();
  ModeField out = quadratic_part(f);
  for (int i = 0; i < f.size(); ++i) {
    const Mode &n = f.modes[i];
    if (!is_representative(n) || !is_active(f.coeffs[i])) continue;
    const CGridFunction lin = lin_.apply_ln(n, f.coeffs[i]);
    out.coeffs[i] -= lin;
    if (n != Mode::Zero()) out.at(Mode(-n)) = out.coeffs[i].conjugate();
    else out.coeffs[i] = out.coeffs[i].real().cast<Complex>();
  }
  return out;
}

ModeField step_rk4(const ModeField &g, double dt, const DynamicsModel &model, double c) {
  const double bound = model.stability_bound(g.n_max, c);
  if (!(dt > 0.0) || dt > bound)
    throw ValidationError("time step " + std::to_string(dt) + " violates the stability bound " +
                          std::to_string(bound));
  const ModeField k1 = model.rhs(g);
  const ModeField k2 = model.rhs(g + (0.5 * dt) * k1);
  const ModeField k3 = model.rhs(g + (0.5 * dt) * k2);
  const ModeField k4 = model.rhs(g + dt * k3);
  ModeField next = g + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  next.enforce_reality();
  return next;
}

double relaxation_distance(const ModeField &g, const GridFunction &target, const WeightSpec &w,
                           int points_per_axis) {
  if (points_per_axis < 2) throw ValidationError("distance quadrature needs >= 2 points per axis");
  const auto &G = g.grid;
  // axes on which some active nonzero mode has a component
  std::array<bool, 3> axis{false, false, false};
  for (int i = 0; i < g.size(); ++i)
    if (g.modes[i] != Mode::Zero() && is_active(g.coeffs[i]))
      for (int k = 0; k < 3; ++k) axis[k] = axis[k] || g.modes[i][k] != 0;
  std::array<int, 3> pts;
  double cell = 1.0;
  for (int k = 0; k < 3; ++k) {
    pts[k] = axis[k] ? points_per_axis : 1;
    cell *= 2.0 * kPi / pts[k];
  }
  const Eigen::VectorXd wq = weight_values(w, G).cwiseProduct(G.quad_weights);
  ModeField f = g;
  f.at(Mode::Zero()) -= target.cast<Complex>();
  double total = 0.0;
  for (int a = 0; a < pts[0]; ++a)
    for (int b = 0; b < pts[1]; ++b)
      for (int c = 0; c < pts[2]; ++c) {
        const Vec3 x(2 * kPi * a / pts[0], 2 * kPi * b / pts[1], 2 * kPi * c / pts[2]);
        total += cell * wq.dot(f.reconstruct(x).cwiseAbs());
      }
  return total;
}

std::vector<double> controlling_function(const std::vector<double> &t,
                                         const std::vector<double> &dist, double c0) {
  if (t.size() != dist.size()) throw ValidationError("time and distance series differ in length");
  std::vector<double> m(t.size());
  double run = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(dist[i] >= 0.0)) throw ValidationError("distance series must be nonnegative");
    run = std::max(run, std::exp(c0 * t[i]) * dist[i]);
    m[i] = run;
  }
  return m;
}

RelaxationRun run_relaxation(const ModeField &init, double t_end, double dt, const Monitors &mon,
                             const DynamicsModel &model) {
  if (!(t_end > 0.0)) throw ValidationError("t_end must be positive");
  if (mon.x_points < 1) throw ValidationError("positivity lattice needs at least one point");
  RelaxationRun run;
  const auto &G = model.grid();
  // unit mass up to the grid's own quadrature defect on the reference Maxwellian
  const double defect = std::abs(G.quad_weights.dot(model.reference()) * kTorusVolume - 1.0);
  run.params = match_moments(init.total_moments(), 1e-3 + defect);
  const GridFunction target = maxwellian_on_grid(run.params, G);
  const double peak = target.maxCoeff();
  WeightSpec w = mon.weight;
  w.center = run.params.mu;

  // absolute moments at t = 0 set the drift scales
  const GridFunction g0 = init.at(Mode::Zero()).real();
  Moments scale;
  for (int i = 0; i < G.size(); ++i) {
    const Vec3 v = G.nodes.col(i);
    const double a = std::abs(g0[i]) * G.quad_weights[i] * kTorusVolume;
    scale.mass += a;
    scale.momentum += a * v.cwiseAbs();
    scale.energy += a * v.squaredNorm();
  }

  auto min_density = [&](const ModeField &g) {
    double lo = std::numeric_limits<double>::infinity();
    const int P = mon.x_points;
    for (int a = 0; a < P; ++a)
      for (int b = 0; b < P; ++b)
        for (int c = 0; c < P; ++c) {
          const Vec3 x(2 * kPi * a / P, 2 * kPi * b / P, 2 * kPi * c / P);
          lo = std::min(lo, g.reconstruct(x).minCoeff());
        }
    return lo / peak;
  };
  auto record = [&](double t, const ModeField &g) {
    run.t.push_back(t);
    run.distance.push_back(relaxation_distance(g, target, w, mon.norm_points));
    run.invariants.push_back(g.total_moments());
    run.min_density.push_back(min_density(g));
  };

  const int steps = static_cast<int>(std::ceil(t_end / dt - 1e-9));
  const double h = t_end / steps;
  ModeField g = init;
  record(0.0, g);
  for (int s = 1; s <= steps; ++s) {
    ModeField next = step_rk4(g, h, model);
    bool finite = true;
    for (const auto &c : next.coeffs) finite = finite && c.allFinite();
    if (!finite) {
      run.aborted = true;
      run.abort_reason = "non-finite state at t = " + std::to_string(s * h);
      break;
    }
    g = std::move(next);
    record(s * h, g);
  }
  run.final_state = g;

  const Moments &m0 = run.invariants.front();
  for (const auto &m : run.invariants) {
    run.drift_mass = std::max(run.drift_mass, std::abs(m.mass - m0.mass) / scale.mass);
    for (int k = 0; k < 3; ++k)
      run.drift_momentum = std::max(run.drift_momentum, std::abs(m.momentum[k] - m0.momentum[k]) /
                                                            std::max(scale.momentum[k], 1e-300));
    run.drift_energy = std::max(run.drift_energy, std::abs(m.energy - m0.energy) / scale.energy);
  }

  const double hi = mon.fit_hi > 0.0 ? mon.fit_hi : run.t.back();
  bool positive = run.distance.size() >= 10;
  for (double d : run.distance) positive = positive && d > 0.0;
  if (positive && hi > mon.fit_lo) {
    run.fit = fit_decay(run.t, run.distance, mon.fit_lo, hi, mon.min_r2);
    run.controlling_c0 = mon.controlling_margin * std::max(run.fit.rate, 0.0);
  }
  run.controlling = controlling_function(run.t, run.distance, run.controlling_c0);
  run.controlling_ratio = run.distance.front() > 0.0
                              ? *std::max_element(run.controlling.begin(), run.controlling.end()) /
                                    run.distance.front()
                              : 0.0;
  return run;
}

} // namespace hsb
