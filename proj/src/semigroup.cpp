#include "hsb/semigroup.hpp"

#include "hsb/errors.hpp"
#include "hsb/lapack.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace hsb {

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::VectorXd balance_of(const OperatorMatrix &A) {
  if (A.balance.size() == A.dim()) return A.balance;
  return Eigen::VectorXd::Ones(A.dim());
}

Eigen::MatrixXcd balanced(const OperatorMatrix &A, const Eigen::VectorXd &d) {
  return d.cwiseInverse().asDiagonal() * A.to_complex() * d.asDiagonal();
}

// (K x) for a real K and a complex x
CGridFunction real_times(const Eigen::MatrixXd &K, const CGridFunction &x) {
  CGridFunction y(K.rows());
  y.real() = K * x.real().eval();
  y.imag() = K * x.imag().eval();
  return y;
}

// phi1(a) = (e^a - 1) / a and phi2(a) = (e^a - 1 - a) / a^2, stable near a = 0
void phi12(Complex a, Complex &e, Complex &p1, Complex &p2) {
  e = std::exp(a);
  if (std::abs(a) < 1e-3) {
    p1 = 1.0 + a / 2.0 + a * a / 6.0 + a * a * a / 24.0;
    p2 = 0.5 + a / 6.0 + a * a / 24.0 + a * a * a / 120.0;
  } else {
    p1 = (e - 1.0) / a;
    p2 = (e - 1.0 - a) / (a * a);
  }
}

} // namespace

CGridFunction semigroup_apply(const OperatorMatrix &A, double t, const CGridFunction &f,
                              ExpMethod method, double tol) {
  if (!(t >= 0.0)) throw ValidationError("semigroup time must be nonnegative");
  if (f.size() != A.dim()) throw ValidationError("field does not match the operator");
  if (t == 0.0) return f;
  const Eigen::VectorXd d = balance_of(A);
  const Eigen::MatrixXcd S = balanced(A, d);
  const CGridFunction g = d.cwiseInverse().asDiagonal() * f;
  CGridFunction u;
  if (method == ExpMethod::Dense) {
    const Eigen::MatrixXcd E = (Complex(-t) * S).exp();
    u = E * g;
  } else {
    namespace ode = boost::numeric::odeint;
    const int N = A.dim();
    std::vector<double> x(2 * N);
    for (int i = 0; i < N; ++i) {
      x[i] = g[i].real();
      x[N + i] = g[i].imag();
    }
    const Eigen::MatrixXd Sr = S.real(), Si = S.imag();
    auto rhs = [&](const std::vector<double> &y, std::vector<double> &dy, double) {
      Eigen::Map<const Eigen::VectorXd> yr(y.data(), N), yi(y.data() + N, N);
      Eigen::Map<Eigen::VectorXd> dr(dy.data(), N), di(dy.data() + N, N);
      dr = -(Sr * yr - Si * yi);
      di = -(Sr * yi + Si * yr);
    };
    using stepper = ode::runge_kutta_dopri5<std::vector<double>>;
    try {
      ode::integrate_adaptive(ode::make_controlled<stepper>(tol, tol), rhs, x, 0.0, t,
                              std::min(t, 1e-2));
    } catch (const std::exception &e) {
      throw NumericalError(std::string("ODE integration of the semigroup failed: ") + e.what());
    }
    u.resize(N);
    for (int i = 0; i < N; ++i) u[i] = Complex(x[i], x[N + i]);
  }
  return d.asDiagonal() * u;
}

Propagator::Propagator(const OperatorMatrix &A, double dt) : dt_(dt) {
  if (!(dt > 0.0)) throw ValidationError("propagator step must be positive");
  d_ = balance_of(A);
  E_ = (Complex(-dt) * balanced(A, d_)).exp();
}

CGridFunction Propagator::step(const CGridFunction &f) const {
  return d_.asDiagonal() * (E_ * (d_.cwiseInverse().asDiagonal() * f));
}

NormCurve semigroup_norm_curve(const OperatorMatrix &A, const CGridFunction &f, double dt,
                               int steps, const WeightSpec &w) {
  if (steps < 1) throw ValidationError("norm curve needs at least one step");
  const Propagator prop(A, dt);
  NormCurve c;
  CGridFunction u = f;
  for (int k = 0; k <= steps; ++k) {
    if (k > 0) u = prop.step(u);
    c.t.push_back(k * dt);
    c.norm.push_back(weighted_l1_norm(u, w, A.grid));
  }
  return c;
}

ContourResult contour_semigroup(const OperatorMatrix &A, const ContourGamma &gamma,
                                const ProjectionP *P, double t, const CGridFunction &f,
                                const ContourOptions &opt, std::vector<Complex> spectrum) {
  if (!(t >= opt.t_min))
    throw ValidationError("contour quadrature needs t >= " + std::to_string(opt.t_min));
  if (f.size() != A.dim()) throw ValidationError("field does not match the operator");
  CGridFunction g = f;
  if (P) g -= P->apply(f);
  if (spectrum.empty()) {
    const Eigen::VectorXcd ev = A.is_real() ? lapack::eigenvalues(A.re) : lapack::eigenvalues(A.to_complex());
    spectrum.assign(ev.data(), ev.data() + ev.size());
  }
  for (const auto &z : spectrum) {
    if (gamma.encloses(z)) continue;
    // the null cluster stays outside when (1 - P) removes it
    if (P && std::abs(z) < 0.5 * gamma.theta) continue;
    std::ostringstream s;
    s << "contour does not enclose the eigenvalue " << z;
    throw ValidationError(s.str());
  }
  const Eigen::VectorXd d = balance_of(A);
  const HessenbergResolvent hr(balanced(A, d));
  const CGridFunction c = hr.to_hessenberg(d.cwiseInverse().asDiagonal() * g);
  const auto nodes = contour_nodes(gamma, spectrum, t, opt.refine, opt.tail_tol, opt.order);
  CGridFunction y = CGridFunction::Zero(A.dim());
  const Complex two_pi_i(0.0, 2.0 * kPi);
  for (const auto &nd : nodes) y += (nd.w * std::exp(-t * nd.z) / two_pi_i) * hr.solve_hessenberg(nd.z, c);

  // tail beyond the truncated rays, bounded by the last resolvent value and the
  // exponential decay along the ray
  ContourResult r;
  const double re_end = gamma.theta + std::log(1.0 / opt.tail_tol) / t;
  const double ray_len = (re_end - gamma.theta) / gamma.ray_up_direction.real();
  for (const Complex end : {gamma.segment_high + ray_len * gamma.ray_up_direction,
                            gamma.segment_low + ray_len * gamma.ray_down_direction}) {
    const double mag = std::abs(std::exp(-t * end)) * hr.solve_hessenberg(end, c).norm();
    r.tail_estimate += mag / (2.0 * kPi * t * gamma.ray_up_direction.real());
  }
  const double scale = std::max(y.norm(), 1e-300);
  if (r.tail_estimate > opt.truncation_tol * scale) {
    std::ostringstream s;
    s << "ray truncation error " << r.tail_estimate / scale << " exceeds " << opt.truncation_tol
      << "; lower tail_tol below " << opt.tail_tol * opt.truncation_tol * scale / r.tail_estimate;
    throw NumericalError(s.str());
  }
  r.value = d.asDiagonal() * hr.from_hessenberg(y);
  r.nodes = static_cast<int>(nodes.size());
  return r;
}

DuhamelLedger duhamel_ledger(const LinearizedOperator &L, const Mode &n, double t_end,
                             const CGridFunction &f, const WeightSpec &w,
                             const DuhamelOptions &opt) {
  if (opt.k_max < 1 || opt.k_max > 12) throw ValidationError("k_max must lie in [1, 12]");
  if (!(t_end > 0.0)) throw ValidationError("t_end must be positive");
  if (opt.initial_intervals < 1 || opt.max_intervals < opt.initial_intervals)
    throw ValidationError("invalid Duhamel time grid");
  const auto &grid = L.grid();
  if (f.size() != grid.size()) throw ValidationError("field does not match the grid");
  const CGridFunction dg = L.diagonal(n);
  const Eigen::MatrixXd &K = L.k();
  const int samples = opt.initial_intervals;

  auto run = [&](int J) {
    DuhamelLedger led;
    led.n = n;
    led.k_max = opt.k_max;
    led.weight = w;
    led.intervals = J;
    led.norms.assign(opt.k_max + 1, {});
    const double dt = t_end / J;
    const int stride = J / samples;
    CGridFunction e(grid.size()), p1(grid.size()), p2(grid.size());
    for (int i = 0; i < grid.size(); ++i) phi12(-dt * dg[i], e[i], p1[i], p2[i]);
    const CGridFunction c0 = p1 - p2; // weight of g_j
    std::vector<CGridFunction> u(opt.k_max + 1, CGridFunction::Zero(grid.size()));
    std::vector<CGridFunction> gk(opt.k_max + 1);
    u[0] = f;
    for (int k = 1; k <= opt.k_max; ++k) gk[k] = real_times(K, u[k - 1]);
    auto record = [&](int j) {
      led.t.push_back(j * dt);
      for (int k = 0; k <= opt.k_max; ++k) led.norms[k].push_back(weighted_l1_norm(u[k], w, grid));
    };
    record(0);
    for (int j = 0; j < J; ++j) {
      const double t1 = (j + 1) * dt;
      for (int i = 0; i < grid.size(); ++i) u[0][i] = std::exp(-t1 * dg[i]) * f[i];
      for (int k = 1; k <= opt.k_max; ++k) {
        const CGridFunction gnext = real_times(K, u[k - 1]);
        u[k] = e.cwiseProduct(u[k]) + dt * (c0.cwiseProduct(gk[k]) + p2.cwiseProduct(gnext));
        gk[k] = gnext;
      }
      if ((j + 1) % stride == 0) record(j + 1);
    }
    led.terms_at_end = u;
    return led;
  };

  // the scheme is second order: Richardson-extrapolate successive doublings
  // and stop once two extrapolants agree
  DuhamelLedger prev = run(samples);
  std::vector<CGridFunction> prev_rich;
  for (int J = 2 * samples; J <= opt.max_intervals; J *= 2) {
    DuhamelLedger next = run(J);
    std::vector<CGridFunction> rich(opt.k_max + 1);
    for (int k = 0; k <= opt.k_max; ++k)
      rich[k] = (4.0 * next.terms_at_end[k] - prev.terms_at_end[k]) / 3.0;
    if (!prev_rich.empty()) {
      double change = 0.0;
      for (int k = 0; k <= opt.k_max; ++k) {
        const double s = rich[k].norm();
        if (s > 0.0) change = std::max(change, (rich[k] - prev_rich[k]).norm() / s);
      }
      if (change <= opt.tol) {
        next.terms_at_end = std::move(rich);
        return next;
      }
    }
    prev = std::move(next);
    prev_rich = std::move(rich);
  }
  throw NumericalError("Duhamel quadrature did not converge within " +
                       std::to_string(opt.max_intervals) + " intervals");
}

CGridFunction duhamel_term(int k, const Mode &n, double t, const CGridFunction &f,
                           const LinearizedOperator &L, const DuhamelOptions &opt) {
  if (k < 0 || k > 12) throw ValidationError("k must lie in [0, 12]");
  if (!(t >= 0.0)) throw ValidationError("t must be nonnegative");
  if (k == 0 || t == 0.0) {
    if (k > 0) return CGridFunction::Zero(f.size());
    const CGridFunction dg = L.diagonal(n);
    CGridFunction out(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) out[i] = std::exp(-t * dg[i]) * f[i];
    return out;
  }
  DuhamelOptions o = opt;
  o.k_max = std::max(1, k);
  return duhamel_ledger(L, n, t, f, WeightSpec{}, o).terms_at_end[k];
}

OscillationKernel::OscillationKernel(const Vec3 &direction, const Options &opt) : opt_(opt) {
  if (direction.norm() == 0.0) throw ValidationError("oscillation direction must be nonzero");
  if (opt.outer_points < 3 || opt.inner_points < 3 || opt.inner_fine < 3)
    throw ValidationError("oscillation lattices need at least 3 points per axis");
  dir_ = direction.normalized();
  outer_ = make_grid(opt.outer_points, opt.extent);
  Vec3 e1, e2;
  orthonormal_frame(dir_, e1, e2);

  std::vector<double> xa, wa, xb, wb;
  auto trapezoid = [&](int n, std::vector<double> &x, std::vector<double> &w) {
    x.resize(n);
    w.resize(n);
    const double h = 2.0 * opt.extent / (n - 1);
    for (int i = 0; i < n; ++i) {
      x[i] = -opt.extent + i * h;
      w[i] = (i == 0 || i == n - 1) ? h / 2 : h;
    }
    return h;
  };
  const double ha = trapezoid(opt.inner_fine, xa, wa);
  const double hb = trapezoid(opt.inner_points, xb, wb);
  const int Nw = opt.inner_fine * opt.inner_points * opt.inner_points;
  std::vector<Vec3> wn(Nw);
  Eigen::VectorXd qw(Nw);
  nu_w_.resize(Nw);
  along_.resize(Nw);
  const MaxwellParams p;
  int k = 0;
  for (int c = 0; c < opt.inner_points; ++c)
    for (int b = 0; b < opt.inner_points; ++b)
      for (int a = 0; a < opt.inner_fine; ++a, ++k) {
        wn[k] = xa[a] * dir_ + xb[b] * e1 + xb[c] * e2;
        qw[k] = wa[a] * wb[b] * wb[c];
        nu_w_[k] = nu_exact(p, wn[k]);
        along_[k] = xa[a];
      }

  // singular self-interaction: |x|^-1 averaged over the cell around the node
  const double cell_inner = 8.0 * inverse_distance_box_integral(ha / 2, hb / 2, hb / 2) / (ha * hb * hb);
  const double ho = outer_.spacing;
  const double cell_outer = 8.0 * inverse_distance_box_integral(ho / 2, ho / 2, ho / 2) / (ho * ho * ho);
  auto kernel = [](const Vec3 &v, const Vec3 &u, double cell) {
    if ((u - v).squaredNorm() < 1e-20) {
      const double s = v.norm();
      const double ang = s < 1e-12 ? 1.0 : std::sqrt(kPi) * std::erf(s) / (2.0 * s);
      return -2.0 * kPi * cell * ang;
    }
    return k1_kernel(v, u) - k23_kernel(v, u);
  };
  const int No = outer_.size();
  left_.resize(No, Nw);
  right_.resize(Nw, No);
  for (int j = 0; j < Nw; ++j)
    for (int i = 0; i < No; ++i) {
      const Vec3 v = outer_.nodes.col(i);
      left_(i, j) = opt.constant * kernel(v, wn[j], cell_inner) * qw[j];
      right_(j, i) = opt.constant * kernel(wn[j], v, cell_outer) * outer_.quad_weights[i];
    }
  w_out_ = weight_values(opt.weight, outer_);
  w_in_ = weight_values({opt.weight.m + 3.0, opt.weight.center}, outer_);
}

double OscillationKernel::norm(double s, double t) const {
  if (!(t >= 0.0)) throw ValidationError("t must be nonnegative");
  const Eigen::Index Nw = nu_w_.size();
  Eigen::VectorXd c(Nw), sn(Nw);
  for (Eigen::Index k = 0; k < Nw; ++k) {
    const double damp = std::exp(-t * nu_w_[k]);
    const double ph = t * s * along_[k];
    c[k] = damp * std::cos(ph);
    sn[k] = -damp * std::sin(ph);
  }
  const Eigen::MatrixXd re = left_ * c.asDiagonal() * right_;
  const Eigen::MatrixXd im = left_ * sn.asDiagonal() * right_;
  Eigen::MatrixXcd M(re.rows(), re.cols());
  M.real() = re;
  M.imag() = im;
  return induced_l1_norm(M, outer_.quad_weights, w_out_, w_in_);
}

double oscillation_norm(const Mode &n, double t, const OscillationKernel &K) {
  return K.norm(n.cast<double>().norm(), t);
}

DecayFit fit_decay(const std::vector<double> &t, const std::vector<double> &norm, double t_lo,
                   double t_hi, double min_r2) {
  if (t.size() != norm.size()) throw ValidationError("time and norm series differ in length");
  if (!(t_hi > t_lo)) throw ValidationError("empty fit window");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_lo || t[i] > t_hi) continue;
    if (!(norm[i] > 0.0)) throw ValidationError("nonpositive sample in the fit window");
    x.push_back(t[i]);
    y.push_back(std::log(norm[i]));
  }
  if (x.size() < 10) throw ValidationError("fewer than 10 samples in the fit window");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  DecayFit f;
  const double slope = sxy / sxx;
  f.rate = -slope;
  f.amplitude = std::exp(my - slope * mx);
  double ssr = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (my + slope * (x[i] - mx));
    ssr += r * r;
  }
  f.r_squared = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
  f.t_lo = t_lo;
  f.t_hi = t_hi;
  f.samples = static_cast<int>(x.size());
  f.accepted = f.r_squared >= min_r2 && f.rate > 0.0;
  return f;
}

std::string format_decay_fit(const DecayFit &f) {
  std::ostringstream s;
  s << std::setprecision(8) << "rate " << f.rate << " amplitude " << f.amplitude << " r2 "
    << f.r_squared << " window " << f.t_lo << ' ' << f.t_hi << " samples " << f.samples
    << " weight_loss " << f.weight_loss << ' ' << (f.accepted ? "ACCEPTED" : "REJECTED");
  return s.str();
}

OscillationFit fit_oscillation(const std::vector<double> &n_abs, const std::vector<double> &t,
                               const std::vector<double> &norm, double lambda) {
  if (n_abs.size() != t.size() || t.size() != norm.size() || t.empty())
    throw ValidationError("oscillation lattice series differ in length");
  const std::size_t m = t.size();
  std::vector<double> y(m), shape(m);
  double mean_y = 0.0, mean_c = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!(norm[i] > 0.0)) throw ValidationError("nonpositive oscillation norm");
    y[i] = std::log(norm[i]);
    shape[i] = -std::log1p(n_abs[i] * t[i]) - lambda * t[i];
    mean_y += y[i];
    mean_c += y[i] - shape[i];
  }
  mean_y /= static_cast<double>(m);
  mean_c /= static_cast<double>(m);
  double ssr = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = y[i] - (mean_c + shape[i]);
    ssr += r * r;
    sst += (y[i] - mean_y) * (y[i] - mean_y);
  }
  OscillationFit f;
  f.constant = std::exp(mean_c);
  f.r_squared = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
  return f;
}

} // namespace hsb
