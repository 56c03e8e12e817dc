#include "hsb/collision.hpp"
#include "hsb/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace hsb;

namespace {

constexpr double kPi = std::numbers::pi;

const CollisionOperator &op11() {
  static const CollisionOperator op(make_collision_config(make_grid(11, 4.5), make_sphere_quadrature(16, 32)));
  return op;
}

// coarser sphere for the sampled sweeps
const CollisionOperator &op11c() {
  static const CollisionOperator op(make_collision_config(make_grid(11, 4.5), make_sphere_quadrature(8, 16)));
  return op;
}

// random Gaussian mixture on the grid
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

} // namespace

TEST_CASE("collision frequency values") {
  const double nu0 = 1.0 / (2 * kPi * kPi * std::sqrt(kPi));
  CHECK(nu_exact({}, Vec3::Zero()) == doctest::Approx(nu0).epsilon(1e-12));
  CHECK(nu0 == doctest::Approx(0.028585).epsilon(1e-4));
  CHECK(nu_exact({}, Vec3(20, 0, 0)) / 20 == doctest::Approx(1 / (4 * kPi * kPi)).epsilon(0.02));
  // grid quadrature version
  const auto &cfg = op11().config();
  CHECK(eval_nu({}, Vec3::Zero(), cfg) == doctest::Approx(nu0).epsilon(1e-3));
  CHECK(nu_min({}, cfg.grid) == doctest::Approx(nu0).epsilon(1e-12));
  CHECK(nu_min({}, cfg.grid) > 0.0);

  // nu >= C (1 + |v|) with C > 0 and radial monotonicity along an axis
  const GridFunction nu = nu_on_grid({}, cfg);
  double c = 1e300;
  for (int i = 0; i < cfg.grid.size(); ++i) c = std::min(c, nu[i] / (1 + cfg.grid.node(i).norm()));
  CHECK(c > 0.0);
  const int n = cfg.grid.points_per_axis, mid = n / 2;
  for (int ix = mid; ix + 1 < n; ++ix)
    CHECK(nu[cfg.grid.index(ix + 1, mid, mid)] >= nu[cfg.grid.index(ix, mid, mid)]);

  // translation invariance of Lambda under recentering
  const MaxwellParams p{0.5, Vec3(0.7, 0, 0)};
  CHECK(nu_min(p, make_grid(11, 4.5, p.mu)) == doctest::Approx(nu0).epsilon(1e-12));
}

TEST_CASE("Q(M, M) vanishes to quadrature accuracy") {
  const auto &op = op11();
  const auto &g = op.config().grid;
  const GridFunction M = maxwellian_on_grid({}, g);
  const GridFunction q = op.apply(M, M);
  const GridFunction nuM = nu_on_grid({}, op.config()).cwiseProduct(M);
  CHECK(weighted_l1_norm(q, {}, g) <= 1e-3 * weighted_l1_norm(nuM, {}, g));
}

TEST_CASE("bilinearity") {
  const auto &op = op11();
  const auto &g = op.config().grid;
  std::mt19937_64 rng(2);
  const GridFunction f = mixture(g, rng), h = mixture(g, rng);
  const GridFunction z = GridFunction::Zero(g.size());
  CHECK(op.apply(z, h).cwiseAbs().maxCoeff() == 0.0);
  const double alpha = 1.7;
  const GridFunction a = op.apply(GridFunction(alpha * f), h), b = alpha * op.apply(f, h);
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-13 * b.cwiseAbs().maxCoeff());
}

TEST_CASE("collision invariants") {
  const auto &op = op11c();
  const auto &g = op.config().grid;
  std::mt19937_64 rng(9);
  for (int r = 0; r < 20; ++r) {
    const GridFunction f = mixture(g, rng);
    const GridFunction q = op.apply(f, f);
    const Moments m = moments(q, g);
    const double scale = std::pow(g.quad_weights.dot(f.cwiseAbs()), 2);
    CHECK(std::abs(m.mass) <= 1e-6 * scale);
    CHECK(m.momentum.norm() <= 1e-6 * scale);
    CHECK(std::abs(m.energy) <= 1e-6 * scale);
  }
}

TEST_CASE("nonlinear weighted bound stays within a fixed constant") {
  const auto &op = op11c();
  const auto &g = op.config().grid;
  std::mt19937_64 rng(21);
  std::vector<double> ratio;
  const WeightSpec w2{2.0, Vec3::Zero()}, w3{3.0, Vec3::Zero()}, w0{};
  for (int r = 0; r < 30; ++r) {
    const GridFunction f = mixture(g, rng), h = mixture(g, rng);
    const double num = weighted_l1_norm(op.apply(f, h), w2, g);
    const double den = weighted_l1_norm(f, w0, g) * weighted_l1_norm(h, w3, g) +
                       weighted_l1_norm(f, w3, g) * weighted_l1_norm(h, w0, g);
    ratio.push_back(num / den);
  }
  std::vector<double> s = ratio;
  std::nth_element(s.begin(), s.begin() + s.size() / 2, s.end());
  const double median = s[s.size() / 2];
  CHECK(*std::max_element(ratio.begin(), ratio.end()) <= 10 * median);
}

TEST_CASE("exit fraction limit") {
  auto cfg = make_collision_config(make_grid(7, 1.0), make_sphere_quadrature(4, 8));
  cfg.max_exit_fraction = 1e-6;
  const CollisionOperator op(cfg);
  const GridFunction M = maxwellian_on_grid({}, cfg.grid);
  CHECK_THROWS_AS(op.apply(M, M), NumericalError);
}
