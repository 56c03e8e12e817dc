#include "hsb/errors.hpp"
#include "hsb/projection.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace hsb;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("Maxwellian values") {
  // (2 pi)^-3 pi^-3/2 in long double
  const long double ref = 1.0L / (8.0L * std::pow(std::numbers::pi_v<long double>, 4.5L));
  CHECK(eval_maxwellian({}, Vec3::Zero()) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-14));
  CHECK(eval_maxwellian({}, Vec3::Zero()) == doctest::Approx(7.2405e-4).epsilon(1e-4));
  const MaxwellParams p{0.8, Vec3(1, -0.5, 0.2)};
  CHECK(eval_maxwellian(p, p.mu) ==
        doctest::Approx(1.0 / (kTorusVolume * std::pow(2 * kPi * 0.8, 1.5))).epsilon(1e-14));
  CHECK_THROWS_AS(eval_maxwellian({-1.0, Vec3::Zero()}, Vec3::Zero()), ValidationError);
}

TEST_CASE("grid quadrature of M reproduces (2 pi)^-3") {
  const auto g = make_grid(15, 4.5);
  const double mass = moments(maxwellian_on_grid({}, g), g).mass;
  CHECK(std::abs(mass * kTorusVolume - 1.0) <= 1e-6);
}

TEST_CASE("moment matching") {
  const auto g = make_grid(15, 4.5);
  const MaxwellParams a = match_moments(maxwellian_on_grid({}, g), g);
  CHECK(a.T == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(a.mu.norm() <= 1e-12);

  const auto g2 = make_grid(21, 6.0);
  const MaxwellParams p{0.8, Vec3(1, 0, 0)};
  const MaxwellParams b = match_moments(maxwellian_on_grid(p, g2), g2);
  CHECK(b.T == doctest::Approx(0.8).epsilon(1e-5));
  CHECK((b.mu - p.mu).norm() <= 1e-6);

  // mixture: mu = 0.5 e1, T = 1/2 + 1/12 by the moment algebra
  const GridFunction mix =
      0.5 * maxwellian_on_grid({}, g2) + 0.5 * maxwellian_on_grid({0.5, Vec3(1, 0, 0)}, g2);
  const MaxwellParams c = match_moments(mix, g2);
  CHECK(c.mu[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(c.T == doctest::Approx(0.5 + 1.0 / 12).epsilon(1e-6));

  CHECK_THROWS_AS(match_moments(GridFunction(2.0 * maxwellian_on_grid({}, g)), g), ValidationError);
}

TEST_CASE("moment matching is idempotent on exact moments") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> T(0.3, 1.5), u(-1, 1);
  for (int i = 0; i < 20; ++i) {
    Vec3 mu(u(rng), u(rng), u(rng));
    if (mu.norm() > 1.0) mu /= 2 * mu.norm();
    const double t = T(rng);
    Moments m;
    m.mass = 1.0;
    m.momentum = mu;
    m.energy = 3 * t + mu.squaredNorm();
    const MaxwellParams p = match_moments(m);
    CHECK(p.T == doctest::Approx(t).epsilon(1e-10));
    CHECK((p.mu - mu).norm() <= 1e-10);
  }
}

TEST_CASE("null basis") {
  const MaxwellParams p{0.7, Vec3(0.3, 0, -0.2)};
  const auto g = make_grid(15, 5.0, p.mu);
  const NullBasis nb = null_basis(p, g);
  CHECK(nb.b[0].minCoeff() > 0.0);
  // b1 at v = mu
  int at = -1;
  for (int i = 0; i < g.size(); ++i)
    if ((g.node(i) - p.mu).norm() < 1e-12) at = i;
  REQUIRE(at >= 0);
  CHECK(nb.b[1][at] == doctest::Approx(eval_maxwellian(p, p.mu) * (-1.5 / p.T)).epsilon(1e-14));
  for (int k = 2; k < 5; ++k) CHECK(std::abs(g.quad_weights.dot(nb.b[k])) <= 1e-13);
  // nonzero only through the truncated tail of the box
  CHECK(std::abs(g.quad_weights.dot(nb.b[1])) <= 1e-5 * g.quad_weights.dot(nb.b[0]));

  // finite-difference oracle for dM/dT and dM/dmu
  const double h = 1e-5;
  for (int i = 0; i < g.size(); i += 37) {
    const Vec3 v = g.node(i);
    const double dT = (eval_maxwellian({p.T + h, p.mu}, v) - eval_maxwellian({p.T - h, p.mu}, v)) / (2 * h);
    CHECK(nb.b[1][i] == doctest::Approx(dT).epsilon(1e-6).scale(1e-12));
    Vec3 e = Vec3::Zero();
    e[0] = h;
    const double dm = (eval_maxwellian({p.T, p.mu + e}, v) - eval_maxwellian({p.T, p.mu - e}, v)) / (2 * h);
    CHECK(nb.b[2][i] == doctest::Approx(dm).epsilon(1e-6).scale(1e-12));
  }
  const Eigen::MatrixXd B = nb.matrix();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(B);
  CHECK(svd.singularValues()[4] > 0.0);
  for (double m : {0.0, 2.0, 4.0, 6.0})
    for (const auto &b : nb.b) CHECK(std::isfinite(weighted_l1_norm(b, {m, p.mu}, g)));
}

TEST_CASE("projection") {
  const auto g = make_grid(11, 4.5);
  const ProjectionP P = make_projection({}, g);
  const GridFunction M = maxwellian_on_grid({}, g);
  CHECK((P.apply(M) - M).cwiseAbs().maxCoeff() <= 1e-10 * M.maxCoeff());

  GridFunction f(g.size());
  for (int i = 0; i < g.size(); ++i) f[i] = M[i] * g.node(i)[0] * g.node(i)[1];
  CHECK(P.apply(f).cwiseAbs().maxCoeff() <= 1e-12 * M.maxCoeff());

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int r = 0; r < 20; ++r) {
    GridFunction x(g.size());
    for (int i = 0; i < g.size(); ++i) x[i] = u(rng) * M[i];
    const GridFunction Px = P.apply(x);
    CHECK((P.apply(Px) - Px).cwiseAbs().maxCoeff() <= 1e-10 * Px.cwiseAbs().maxCoeff());
    const Moments m = moments(GridFunction(x - Px), g);
    const double s = g.quad_weights.dot(x.cwiseAbs());
    CHECK(std::abs(m.mass) <= 1e-10 * s);
    CHECK(m.momentum.norm() <= 1e-10 * s);
    CHECK(std::abs(m.energy) <= 1e-10 * s);
  }
  // range(P) = span of the basis
  Eigen::FullPivLU<Eigen::MatrixXd> lu(P.matrix());
  lu.setThreshold(1e-10);
  CHECK(lu.rank() == 5);
}
