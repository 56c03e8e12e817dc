#include "hsb/dynamics.hpp"
#include "hsb/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace hsb;

namespace {

const DynamicsModel &model9() {
  static const DynamicsModel m(make_collision_config(make_grid(9, 4.5), make_sphere_quadrature(8, 16)),
                               make_sphere_quadrature(4, 8));
  return m;
}

double field_diff(const ModeField &a, const ModeField &b) {
  double s = 0.0;
  for (int k = 0; k < a.size(); ++k) s = std::max(s, (a.coeffs[k] - b.coeffs[k]).cwiseAbs().maxCoeff());
  return s;
}

double field_max(const ModeField &a) {
  double s = 0.0;
  for (const auto &c : a.coeffs) s = std::max(s, c.cwiseAbs().maxCoeff());
  return s;
}

} // namespace

TEST_CASE("mode field bookkeeping") {
  const auto g = make_grid(5, 2.0);
  ModeField f = zero_field(g, 1);
  CHECK(f.size() == 27);
  CHECK(f.index(Mode(2, 0, 0)) == -1);
  CHECK(f.modes[f.index(Mode(-1, 0, 1))] == Mode(-1, 0, 1));
  f.at(Mode(1, 0, 0)).setConstant(Complex(1.0, 2.0));
  CHECK(f.reality_defect() > 0.0);
  f.enforce_reality();
  CHECK(f.reality_defect() == 0.0);
  // 2 Re(c e^{ix}) with c = (1 + 2i) / 2
  const GridFunction r = f.reconstruct(Vec3(0.3, 0, 0));
  CHECK(r[0] == doctest::Approx(std::cos(0.3) - 2 * std::sin(0.3)));
  CHECK_THROWS(f.at(Mode(3, 0, 0)));
}

TEST_CASE("initial data") {
  const auto &m = model9();
  const auto &g = m.grid();
  const ModeField flat = init_perturbation({}, g, 1, Mode(1, 0, 0), 0.0);
  CHECK((flat.at(Mode::Zero()).real() - m.reference()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(field_max(flat) == doctest::Approx(m.reference().maxCoeff()));

  const ModeField g0 = init_perturbation({}, g, 1, Mode(1, 0, 0), 0.1, PerturbationShape::MaxwellianV1, 0.05);
  const Moments a = g0.total_moments(), b = flat.total_moments();
  CHECK(std::abs(a.mass - b.mass) <= 1e-10 * b.mass);
  CHECK(a.momentum.norm() <= 1e-10 * b.mass);
  CHECK(std::abs(a.energy - b.energy) <= 1e-10 * b.energy);
  CHECK(g0.reality_defect() == 0.0);
  CHECK_THROWS_AS(init_perturbation({}, g, 1, Mode(1, 0, 0), 50.0), ValidationError);
  CHECK_THROWS_AS(init_perturbation({}, g, 1, Mode(2, 0, 0), 0.1), ValidationError);
  CHECK_THROWS_AS(perturbation_shape_from_string("square"), ValidationError);
}

TEST_CASE("right-hand side") {
  const auto &m = model9();
  const auto &g = m.grid();
  const ModeField M = init_perturbation({}, g, 1, Mode(1, 0, 0), 0.0);
  CHECK(field_max(m.rhs(M)) == 0.0);

  // linearization: rhs(M + e h) = -e L h + O(e^2)
  const Mode n(1, 0, 0);
  auto rhs_at = [&](double eps) {
    ModeField s = init_perturbation({}, g, 1, n, eps);
    return m.rhs(s);
  };
  const ModeField unit = (1.0 / 1e-3) * (init_perturbation({}, g, 1, n, 1e-3) + (-1.0) * M);
  ModeField lin = zero_field(g, 1);
  for (int k = 0; k < unit.size(); ++k) lin.coeffs[k] = -m.linear().apply_ln(unit.modes[k], unit.coeffs[k]);
  const double e1 = field_diff((1.0 / 1e-2) * rhs_at(1e-2), lin);
  const double e2 = field_diff((1.0 / 5e-3) * rhs_at(5e-3), lin);
  CHECK(e1 > 0.0);
  CHECK(e2 == doctest::Approx(0.5 * e1).epsilon(0.05));

  // reality is preserved
  const ModeField r = rhs_at(0.1);
  CHECK(r.reality_defect() <= 1e-15 * field_max(r));
  // the quadratic part carries no mass, momentum or energy
  const Moments q = m.quadratic_part(unit).total_moments();
  CHECK(std::abs(q.mass) + q.momentum.norm() + std::abs(q.energy) <= 1e-12 * field_max(m.quadratic_part(unit)));
}

TEST_CASE("RK4 step") {
  const auto &m = model9();
  const auto &g = m.grid();
  const ModeField g0 = init_perturbation({}, g, 1, Mode(1, 0, 0), 0.1);
  const double bound = m.stability_bound(1);
  CHECK(bound == doctest::Approx(1.0 / (m.linear().nu().maxCoeff() + 4.5)).epsilon(1e-12));
  CHECK_THROWS_AS(step_rk4(g0, 1.01 * bound, m), ValidationError);

  // fourth order: halving dt over a fixed span cuts the error by about 16
  const double T = 4 * bound;
  auto run = [&](int steps) {
    ModeField s = g0;
    for (int k = 0; k < steps; ++k) s = step_rk4(s, T / steps, m);
    return s;
  };
  const ModeField ref = run(32), a = run(4), b = run(8);
  const double ea = field_diff(a, ref), eb = field_diff(b, ref);
  CHECK(ea / eb >= 10.0);
  CHECK(ea / eb <= 20.0);
}

TEST_CASE("controlling function") {
  const std::vector<double> t{0, 1, 2, 3};
  const std::vector<double> d{1.0, std::exp(-0.5), std::exp(-1.0), std::exp(-1.5)};
  const auto c = controlling_function(t, d, 0.5);
  for (double v : c) CHECK(v == doctest::Approx(1.0));
  const auto up = controlling_function(t, d, 1.0);
  CHECK(up.back() == doctest::Approx(std::exp(1.5)));
  const std::vector<double> bump{1.0, 2.0, 0.1, 0.1};
  const auto mx = controlling_function(t, bump, 0.0);
  CHECK(mx[3] == doctest::Approx(2.0));
}

TEST_CASE("short relaxation run") {
  const auto &m = model9();
  const auto &g = m.grid();
  const ModeField g0 = init_perturbation({}, g, 1, Mode(1, 0, 0), 0.1);
  Monitors mon;
  mon.x_points = 4;
  mon.norm_points = 16;
  mon.fit_lo = 0.5;
  const RelaxationRun r = run_relaxation(g0, 6.0, m.stability_bound(1), mon, m);
  CHECK(!r.aborted);
  CHECK(r.drift_mass <= 1e-10);
  CHECK(r.drift_momentum <= 1e-10);
  CHECK(r.drift_energy <= 1e-10);
  CHECK(r.distance.back() < r.distance.front());
  CHECK(r.min_density.front() > 0.0);
  CHECK(r.t.back() == doctest::Approx(6.0));
  CHECK(r.controlling.size() == r.t.size());
  // grid energy quadrature shifts the matched temperature at this resolution
  CHECK(r.params.T == doctest::Approx(0.5).epsilon(0.02));
}
