#include "hsb/spectra.hpp"

#include "hsb/errors.hpp"
#include "hsb/lapack.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/tools/minima.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

extern "C" {
void znaupd_(int *ido, const char *bmat, const int *n, const char *which, const int *nev,
             const double *tol, std::complex<double> *resid, const int *ncv,
             std::complex<double> *v, const int *ldv, int *iparam, int *ipntr,
             std::complex<double> *workd, std::complex<double> *workl, const int *lworkl,
             double *rwork, int *info, std::size_t bmat_len, std::size_t which_len);
void zneupd_(const int *rvec, const char *howmny, int *select, std::complex<double> *d,
             std::complex<double> *z, const int *ldz, const std::complex<double> *sigma,
             std::complex<double> *workev, const char *bmat, const int *n, const char *which,
             const int *nev, const double *tol, std::complex<double> *resid, const int *ncv,
             std::complex<double> *v, const int *ldv, int *iparam, int *ipntr,
             std::complex<double> *workd, std::complex<double> *workl, const int *lworkl,
             double *rwork, int *info, std::size_t howmny_len, std::size_t bmat_len,
             std::size_t which_len);
}

namespace hsb {

namespace {

bool by_real_part(const Complex &a, const Complex &b) {
  if (a.real() != b.real()) return a.real() < b.real();
  return a.imag() < b.imag();
}

// D^-1 A D when a balance is present
Eigen::MatrixXd balanced_real(const OperatorMatrix &A) {
  if (A.balance.size() == 0) return A.re;
  const Eigen::VectorXd &d = A.balance;
  return d.cwiseInverse().asDiagonal() * A.re * d.asDiagonal();
}

Eigen::MatrixXcd balanced_complex(const OperatorMatrix &A) {
  Eigen::MatrixXcd C = A.to_complex();
  if (A.balance.size() == 0) return C;
  const Eigen::VectorXd &d = A.balance;
  return d.cwiseInverse().asDiagonal() * C * d.asDiagonal();
}

double segment_distance(Complex z, Complex a, Complex b) {
  const Complex ab = b - a;
  const double s = std::clamp(std::real((z - a) * std::conj(ab)) / std::norm(ab), 0.0, 1.0);
  return std::abs(z - (a + s * ab));
}

double ray_distance(Complex z, Complex origin, Complex dir) {
  const double s = std::max(0.0, std::real((z - origin) * std::conj(dir)));
  return std::abs(z - (origin + s * dir));
}

double nearest(const std::vector<Complex> &pts, Complex z) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto &p : pts) best = std::min(best, std::abs(p - z));
  return best;
}

// Gauss-Legendre panels along a straight piece z(s) = a + s dir, s in [0, len].
void add_panels(std::vector<ContourNode> &out, Complex a, Complex dir, double len,
                const std::vector<Complex> &spectrum, double max_panel, double scale, int order) {
  std::vector<double> x, w;
  double s = 0.0;
  while (s < len - 1e-15 * len) {
    const double d = nearest(spectrum, a + s * dir);
    double h = std::min(max_panel, std::isfinite(d) ? scale * d : max_panel);
    h = std::max(h, 1e-12);
    // do not cross into a region closer to the spectrum than the start point
    for (int k = 0; k < 60; ++k) {
      const double dm = nearest(spectrum, a + (s + h) * dir);
      if (!std::isfinite(dm) || h <= scale * dm * 1.5) break;
      h *= 0.5;
    }
    h = std::min(h, len - s);
    gauss_legendre(order, s, s + h, x, w);
    for (int k = 0; k < order; ++k) out.push_back({a + x[k] * dir, w[k] * dir});
    s += h;
  }
}

} // namespace

SpectrumReport compute_spectrum(const OperatorMatrix &A, const Mode &n,
                                const SpectrumOptions &opt) {
  if (A.dim() == 0) throw ValidationError("empty operator");
  SpectrumReport r;
  r.n = n;
  Eigen::VectorXcd ev;
  if (A.dim() <= opt.dense_cap) {
    ev = A.is_real() ? lapack::eigenvalues(A.re) : lapack::eigenvalues(A.to_complex());
  } else {
    double shift;
    if (opt.shift) {
      shift = *opt.shift;
    } else {
      double dmin = std::numeric_limits<double>::infinity();
      for (int i = 0; i < A.dim(); ++i) dmin = std::min(dmin, A.re(i, i));
      shift = -0.5 * std::abs(dmin);
    }
    const auto near = eigenvalues_near(A, shift, opt.iterative_count, &r.max_residual);
    ev = Eigen::Map<const Eigen::VectorXcd>(near.data(), static_cast<Eigen::Index>(near.size()));
    r.iterative = true;
  }
  r.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  std::sort(r.eigenvalues.begin(), r.eigenvalues.end(), by_real_part);
  r.cluster_radius = std::max(1e-6, 10.0 * opt.null_residual);
  for (const auto &z : r.eigenvalues)
    if (std::abs(z) <= r.cluster_radius) r.null_cluster.push_back(z);
  r.essential_samples.assign(opt.essential.data(), opt.essential.data() + opt.essential.size());
  std::ostringstream meta;
  meta << "points_per_axis=" << A.grid.points_per_axis << " extent=" << A.grid.extent
       << " dim=" << A.dim() << " method=" << (r.iterative ? "shift-invert-arnoldi" : "dense-qr");
  r.grid_meta = meta.str();
  r.gap = spectral_gap(r);
  return r;
}

double spectral_gap(const SpectrumReport &r) {
  double g = std::numeric_limits<double>::infinity();
  for (const auto &z : r.eigenvalues)
    if (std::abs(z) > r.cluster_radius) g = std::min(g, z.real());
  if (!std::isfinite(g)) throw NumericalError("no eigenvalue outside the null cluster");
  return g;
}

std::vector<Complex> eigenvalues_near(const OperatorMatrix &A, double shift, int count,
                                      double *max_residual) {
  const int N = A.dim();
  if (count < 1 || count > N - 2) throw ValidationError("eigenvalue count out of range");
  const int nev = count;
  const int ncv = std::min(N, std::max(2 * nev + 1, 80));
  const int lworkl = 3 * ncv * ncv + 5 * ncv;

  // OP = (S - shift)^-1 in the balanced frame S = D^-1 A D
  std::optional<lapack::RealLU> rlu;
  std::optional<lapack::ComplexLU> clu;
  Eigen::MatrixXd Sr;
  Eigen::MatrixXcd Sc;
  if (A.is_real()) {
    Sr = balanced_real(A);
    Eigen::MatrixXd T = Sr;
    T.diagonal().array() -= shift;
    rlu.emplace(std::move(T));
    if (rlu->singular()) throw NumericalError("shift coincides with an eigenvalue");
  } else {
    Sc = balanced_complex(A);
    Eigen::MatrixXcd T = Sc;
    T.diagonal().array() -= shift;
    clu.emplace(std::move(T));
    if (clu->singular()) throw NumericalError("shift coincides with an eigenvalue");
  }
  auto op = [&](const Complex *x, Complex *y) {
    Eigen::Map<const Eigen::VectorXcd> xv(x, N);
    Eigen::Map<Eigen::VectorXcd> yv(y, N);
    if (rlu) {
      Eigen::MatrixXd B(N, 2);
      B.col(0) = xv.real();
      B.col(1) = xv.imag();
      const Eigen::MatrixXd X = rlu->solve(B);
      yv.real() = X.col(0);
      yv.imag() = X.col(1);
    } else {
      yv = clu->solve(xv).col(0);
    }
  };

  int ido = 0, info = 1;
  const char bmat[] = "I", which[] = "LM", howmny[] = "A";
  const double tol = 0.0;
  std::vector<Complex> resid(N), v(static_cast<std::size_t>(N) * ncv), workd(3 * N), workl(lworkl);
  std::vector<double> rwork(ncv);
  for (int i = 0; i < N; ++i) resid[i] = Complex(1.0 + 0.5 * std::sin(0.7 * i), 0.25 * std::cos(1.3 * i));
  int iparam[11] = {}, ipntr[14] = {};
  iparam[0] = 1;
  iparam[2] = 3000;
  iparam[6] = 1;
  for (;;) {
    znaupd_(&ido, bmat, &N, which, &nev, &tol, resid.data(), &ncv, v.data(), &N, iparam, ipntr,
            workd.data(), workl.data(), &lworkl, rwork.data(), &info, 1, 2);
    if (ido == -1 || ido == 1)
      op(workd.data() + ipntr[0] - 1, workd.data() + ipntr[1] - 1);
    else
      break;
  }
  if (info < 0) throw NumericalError("znaupd failed with info " + std::to_string(info));
  if (info == 1)
    throw NumericalError("Arnoldi iteration hit the iteration limit with " +
                         std::to_string(iparam[4]) + " converged values");
  const int rvec = 1;
  std::vector<int> select(ncv);
  std::vector<Complex> d(nev + 1), z(static_cast<std::size_t>(N) * nev), workev(2 * ncv);
  const Complex sigma(0.0, 0.0);
  int info2 = 0;
  zneupd_(&rvec, howmny, select.data(), d.data(), z.data(), &N, &sigma, workev.data(), bmat, &N,
          which, &nev, &tol, resid.data(), &ncv, v.data(), &N, iparam, ipntr, workd.data(),
          workl.data(), &lworkl, rwork.data(), &info2, 1, 1, 2);
  if (info2 != 0) throw NumericalError("zneupd failed with info " + std::to_string(info2));
  const int nconv = iparam[4];
  if (nconv < nev)
    throw NumericalError("only " + std::to_string(nconv) + " of " + std::to_string(nev) +
                         " eigenvalues converged");

  std::vector<Complex> out;
  double worst = 0.0;
  for (int k = 0; k < nev; ++k) {
    const Complex lambda = shift + 1.0 / d[k];
    const Eigen::VectorXcd x = Eigen::Map<const Eigen::VectorXcd>(z.data() + static_cast<std::size_t>(k) * N, N);
    Eigen::VectorXcd Ax;
    if (rlu) {
      Ax.resize(N);
      Ax.real() = Sr * x.real().eval();
      Ax.imag() = Sr * x.imag().eval();
    } else {
      Ax = Sc * x;
    }
    worst = std::max(worst, (Ax - lambda * x).norm() / x.norm());
    out.push_back(lambda);
  }
  if (max_residual) *max_residual = worst;
  std::sort(out.begin(), out.end(), by_real_part);
  return out;
}

std::vector<Complex> ContourGamma::sample(double per_unit, double ray_length) const {
  if (!(per_unit > 0.0) || !(ray_length >= 0.0)) throw ValidationError("invalid sampling density");
  std::vector<Complex> pts;
  const double seg_len = std::abs(segment_high - segment_low);
  const int ns = std::max(2, static_cast<int>(std::ceil(seg_len * per_unit)) + 1);
  for (int k = 0; k < ns; ++k)
    pts.push_back(segment_high + (segment_low - segment_high) * (static_cast<double>(k) / (ns - 1)));
  const int nr = static_cast<int>(std::ceil(ray_length * per_unit));
  for (int k = 1; k <= nr; ++k) {
    const double s = ray_length * k / nr;
    pts.push_back(segment_high + s * ray_up_direction);
    pts.push_back(segment_low + s * ray_down_direction);
  }
  return pts;
}

bool ContourGamma::encloses(Complex z) const {
  const double x = z.real() - theta;
  if (x <= 0.0) return false;
  return std::abs(z.imag()) < half_height() + slope * x;
}

double ContourGamma::distance(Complex z) const {
  return std::min({segment_distance(z, segment_low, segment_high),
                   ray_distance(z, segment_high, ray_up_direction),
                   ray_distance(z, segment_low, ray_down_direction)});
}

ContourGamma contour_gamma(const Mode &n, double theta, double psi, double lambda) {
  if (!(lambda > 0.0)) throw ValidationError("lambda must be positive");
  if (!(theta > 0.0 && theta < 0.5 * lambda))
    throw ValidationError("theta must lie in (0, lambda / 2)");
  if (!(psi > 0.0)) throw ValidationError("psi must be positive");
  ContourGamma g;
  g.n = n;
  g.theta = theta;
  g.psi = psi;
  const double H = g.half_height();
  g.slope = H;
  g.segment_low = {theta, -H};
  g.segment_high = {theta, H};
  const double s = std::hypot(1.0, g.slope);
  g.ray_up_direction = Complex(1.0, g.slope) / s;
  g.ray_down_direction = Complex(1.0, -g.slope) / s;
  return g;
}

std::vector<ContourNode> contour_nodes(const ContourGamma &g, const std::vector<Complex> &spectrum,
                                       double t, int refine, double tail_tol, int order) {
  if (!(t > 0.0)) throw ValidationError("contour quadrature needs t > 0");
  if (refine < 0 || order < 2) throw ValidationError("invalid contour refinement");
  const double scale = std::ldexp(1.0, -refine);
  const double max_panel = 8.0 / t * scale;
  // e^{-t Re zeta} < tail_tol beyond this abscissa
  const double re_end = g.theta + std::log(1.0 / tail_tol) / t;
  const double ray_len = (re_end - g.theta) / g.ray_up_direction.real();

  std::vector<ContourNode> up, seg, down;
  // upper ray traversed inwards: build outwards, then reverse with negated weights
  add_panels(up, g.segment_high, g.ray_up_direction, ray_len, spectrum, max_panel, scale, order);
  add_panels(seg, g.segment_high, (g.segment_low - g.segment_high) / std::abs(g.segment_low - g.segment_high),
             std::abs(g.segment_low - g.segment_high), spectrum, max_panel, scale, order);
  add_panels(down, g.segment_low, g.ray_down_direction, ray_len, spectrum, max_panel, scale, order);
  std::vector<ContourNode> out;
  out.reserve(up.size() + seg.size() + down.size());
  for (auto it = up.rbegin(); it != up.rend(); ++it) out.push_back({it->z, -it->w});
  out.insert(out.end(), seg.begin(), seg.end());
  out.insert(out.end(), down.begin(), down.end());
  return out;
}

double multiplier_constant(const CGridFunction &diag, const VelocityGrid &grid, const Mode &n,
                           Complex zeta) {
  const Vec3 nn = n.cast<double>();
  double best = 0.0;
  for (int i = 0; i < grid.size(); ++i) {
    const Vec3 v = grid.nodes.col(i);
    const double num = 1.0 + v.norm() + std::abs(nn.dot(v));
    best = std::max(best, num / std::abs(diag[i] - zeta));
  }
  return best;
}

PsiChoice choose_psi(const CGridFunction &diag, const VelocityGrid &grid, const Mode &n,
                     double theta, double lambda, int samples) {
  if (samples < 4) throw ValidationError("need at least 4 samples for the psi rule");
  double re_max = 0.0;
  for (int i = 0; i < diag.size(); ++i) re_max = std::max(re_max, diag[i].real());
  for (int k = 0; k <= 30; ++k) {
    const double psi = std::ldexp(1.0, k);
    const ContourGamma g = contour_gamma(n, theta, psi, lambda);
    bool inside = true;
    for (int i = 0; i < diag.size() && inside; ++i) inside = g.encloses(diag[i]);
    if (!inside) continue;
    PsiChoice c;
    c.psi = psi;
    const double seg_len = 2.0 * g.half_height();
    for (int s = 0; s < samples; ++s) {
      const Complex z = g.segment_high + Complex(0.0, -seg_len * s / (samples - 1));
      c.segment_constant = std::max(c.segment_constant, multiplier_constant(diag, grid, n, z));
    }
    // rays up to twice the largest real part of the multiplication spectrum
    const double ray_len = (2.0 * re_max + 1.0) / g.ray_up_direction.real();
    for (int s = 1; s <= samples; ++s) {
      const double a = ray_len * s / samples;
      c.ray_constant = std::max({c.ray_constant,
                                 multiplier_constant(diag, grid, n, g.segment_high + a * g.ray_up_direction),
                                 multiplier_constant(diag, grid, n, g.segment_low + a * g.ray_down_direction)});
    }
    if (c.ray_constant <= c.segment_constant) return c;
  }
  throw NumericalError("no power of two up to 2^30 satisfies the psi rule");
}

double resolvent_norm(const OperatorMatrix &A, Complex zeta) {
  Eigen::MatrixXcd T = A.to_complex();
  T.diagonal().array() -= zeta;
  lapack::ComplexLU lu(T);
  auto fail = [&]() {
    const Eigen::VectorXcd ev = A.is_real() ? lapack::eigenvalues(A.re) : lapack::eigenvalues(A.to_complex());
    Complex best = ev[0];
    for (Eigen::Index i = 1; i < ev.size(); ++i)
      if (std::abs(ev[i] - zeta) < std::abs(best - zeta)) best = ev[i];
    std::ostringstream s;
    s << "resolvent is singular at zeta = " << zeta << " (nearest eigenvalue " << best << ")";
    throw NumericalError(s.str());
  };
  if (lu.singular()) fail();
  const Eigen::MatrixXcd R = lu.solve(Eigen::MatrixXcd::Identity(A.dim(), A.dim()));
  if (!R.allFinite()) fail();
  const Eigen::VectorXd w = weight_values(A.weight, A.grid);
  return induced_l1_norm(R, A.grid.quad_weights, w, w);
}

HessenbergResolvent::HessenbergResolvent(const Eigen::MatrixXcd &A) {
  Eigen::HessenbergDecomposition<Eigen::MatrixXcd> hd(A);
  Q_ = hd.matrixQ();
  H_ = hd.matrixH();
}

CGridFunction HessenbergResolvent::to_hessenberg(const CGridFunction &b) const {
  return Q_.adjoint() * b;
}

CGridFunction HessenbergResolvent::from_hessenberg(const CGridFunction &y) const { return Q_ * y; }

CGridFunction HessenbergResolvent::solve(Complex zeta, const CGridFunction &b) const {
  return from_hessenberg(solve_hessenberg(zeta, to_hessenberg(b)));
}

CGridFunction HessenbergResolvent::solve_hessenberg(Complex zeta, const CGridFunction &c) const {
  const Eigen::Index N = H_.rows();
  // (zeta - H) is upper Hessenberg; eliminate the subdiagonal with adjacent-row pivoting
  Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> T = -H_;
  T.diagonal().array() += zeta;
  CGridFunction y = c;
  for (Eigen::Index k = 0; k + 1 < N; ++k) {
    if (std::abs(T(k + 1, k)) > std::abs(T(k, k))) {
      T.row(k).tail(N - k).swap(T.row(k + 1).tail(N - k));
      std::swap(y[k], y[k + 1]);
    }
    if (T(k, k) == Complex(0.0)) throw NumericalError("resolvent is singular on the contour");
    const Complex f = T(k + 1, k) / T(k, k);
    if (f != Complex(0.0)) {
      T.row(k + 1).tail(N - k - 1) -= f * T.row(k).tail(N - k - 1);
      y[k + 1] -= f * y[k];
    }
  }
  for (Eigen::Index k = N - 1; k >= 0; --k) {
    if (T(k, k) == Complex(0.0)) throw NumericalError("resolvent is singular on the contour");
    Complex s = y[k];
    if (k + 1 < N) s -= T.row(k).tail(N - k - 1).transpose().cwiseProduct(y.tail(N - k - 1)).sum();
    y[k] = s / T(k, k);
  }
  return y;
}

double delta_m1_closed(double m) {
  if (!(m > 0.0)) throw ValidationError("m must be positive");
  return std::pow(1.0 + 1.0 / m, -(m + 1.0) / 2.0) / std::sqrt(m);
}

double delta_m1_numeric(double m) {
  if (!(m > 0.0)) throw ValidationError("m must be positive");
  auto neg = [m](double a) { return -std::pow(1.0 + a * a, -m / 2.0) * a / std::sqrt(1.0 + a * a); };
  const auto r = boost::math::tools::brent_find_minima(neg, 0.0, 10.0, std::numeric_limits<double>::digits);
  return -r.second;
}

double delta_m2_first(double m) {
  if (!(m > 0.0)) throw ValidationError("m must be positive");
  boost::math::quadrature::exp_sinh<double> q;
  const double a = std::pow(m, 0.75);
  // integrate in log space around the peak to keep the integrand representable
  const double zp = std::max(a, 2.0 * std::sqrt(m));
  const double lp = 2.0 * m * std::log(zp) - zp * zp / 4.0;
  auto f = [&](double s) {
    const double z = a + s;
    return std::exp(2.0 * m * std::log(z) - z * z / 4.0 - lp);
  };
  return std::pow(2.0, m) * std::exp(lp) * q.integrate(f);
}

double delta_m2_second(double m) {
  if (!(m > 0.0)) throw ValidationError("m must be positive");
  boost::math::quadrature::exp_sinh<double> q;
  const double p = 1.5 * m - 0.25;
  // peak of z^p e^{-z^{3/2}/4} at z = (8p/3)^{2/3}
  const double zp = std::max(m, std::pow(8.0 * p / 3.0, 2.0 / 3.0));
  const double lp = p * std::log(zp) - std::pow(zp, 1.5) / 4.0;
  auto f = [&](double s) {
    const double z = m + s;
    return std::exp(p * std::log(z) - std::pow(z, 1.5) / 4.0 - lp);
  };
  return 3.0 * std::pow(2.0, m - 2.0) * std::exp(lp) * q.integrate(f);
}

double delta_m0(double m, const VelocityGrid &grid, const std::vector<const Eigen::MatrixXd *> &parts,
                bool *empty) {
  if (!(m > 0.0)) throw ValidationError("m must be positive");
  std::vector<int> idx;
  for (int i = 0; i < grid.size(); ++i)
    if ((grid.nodes.col(i) - grid.center).norm() > m) idx.push_back(i);
  if (empty) *empty = idx.empty();
  if (idx.empty()) return 0.0;
  const int n = static_cast<int>(idx.size());
  Eigen::VectorXd q(n), wo(n), wi(n);
  for (int a = 0; a < n; ++a) {
    const double jv = japanese(grid.nodes.col(idx[a]) - grid.center);
    q[a] = grid.quad_weights[idx[a]];
    wo[a] = std::pow(jv, m);
    wi[a] = std::pow(jv, m + 1.0);
  }
  double total = 0.0;
  for (const auto *K : parts) {
    if (K->rows() != grid.size() || K->cols() != grid.size())
      throw ValidationError("kernel part does not match the grid");
    Eigen::MatrixXd sub(n, n);
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a) sub(a, b) = (*K)(idx[a], idx[b]);
    total += induced_l1_norm(sub, q, wo, wi);
  }
  return total;
}

DeltaConstants delta_constants(double m, const VelocityGrid &grid,
                               const std::vector<const Eigen::MatrixXd *> &parts) {
  DeltaConstants d;
  d.m = m;
  d.delta_m0 = delta_m0(m, grid, parts, &d.empty_cutoff);
  d.delta_m1 = delta_m1_closed(m);
  d.delta_m2 = delta_m2_first(m);
  d.delta_m2_alt = delta_m2_second(m);
  return d;
}

std::string format_spectrum_report(const SpectrumReport &r) {
  std::ostringstream s;
  s << std::setprecision(12);
  s << "mode " << r.n.x() << ' ' << r.n.y() << ' ' << r.n.z() << '\n';
  s << "grid " << r.grid_meta << '\n';
  s << "eigenvalue_count " << r.eigenvalues.size() << '\n';
  s << "cluster_radius " << r.cluster_radius << '\n';
  s << "null_cluster_size " << r.null_cluster.size() << '\n';
  for (const auto &z : r.null_cluster) s << "null " << z.real() << ' ' << z.imag() << '\n';
  s << "gap " << r.gap << '\n';
  if (r.iterative) s << "max_residual " << r.max_residual << '\n';
  for (const auto &z : r.eigenvalues) s << "eig " << z.real() << ' ' << z.imag() << '\n';
  for (const auto &z : r.essential_samples) s << "ess " << z.real() << ' ' << z.imag() << '\n';
  return s.str();
}

} // namespace hsb
