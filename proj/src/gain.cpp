#include "hsb/gain.hpp"

#include "hsb/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hsb {

const char *to_string(Interpolation p) {
  switch (p) {
  case Interpolation::WeightedQuadratic: return "weighted_quadratic";
  case Interpolation::Trilinear: return "trilinear";
  case Interpolation::Quadratic: return "quadratic";
  }
  return "?";
}

Interpolation interpolation_from_string(const std::string &s) {
  if (s == "weighted_quadratic") return Interpolation::WeightedQuadratic;
  if (s == "trilinear") return Interpolation::Trilinear;
  if (s == "quadratic") return Interpolation::Quadratic;
  throw ValidationError("unknown interpolation policy '" + s + "'");
}

namespace {

struct Box {
  int x0, y0, z0, X, Y, Z;
  int size() const { return X * Y * Z; }
};

// v with v and v + w both on the lattice
Box pair_box(int n, int a, int b, int c) {
  return {std::max(0, -a), std::max(0, -b), std::max(0, -c),
          n - std::abs(a), n - std::abs(b), n - std::abs(c)};
}

// number of i in [lo, hi] with i + p and i + q inside [0, n-1]
int inside_count(int lo, int hi, double p, double q, int n) {
  const int a = std::max({lo, static_cast<int>(std::ceil(-p)), static_cast<int>(std::ceil(-q))});
  const int b = std::min({hi, static_cast<int>(std::floor(n - 1 - p)),
                          static_cast<int>(std::floor(n - 1 - q))});
  return std::max(0, b - a + 1);
}

// Separable interpolation over a box of output nodes. The padded array holds
// F interleaved fields per node; the output keeps the same interleaving.
template <int W, int FC>
void interp_box_f(const double *hpad, int P, int G, int Frt, const int base[3], const double c[3][3],
                  const Box &bx, double *t1, double *t2, double *out) {
  const int F = FC > 0 ? FC : Frt;
  const int XF = bx.X * F, Y = bx.Y, Z = bx.Z;
  const int Ye = Y + W - 1, Ze = Z + W - 1;
  const long P2 = static_cast<long>(P) * P;
  for (int zz = 0; zz < Ze; ++zz)
    for (int yy = 0; yy < Ye; ++yy) {
      const double *src = hpad + ((bx.z0 + G + base[2] + zz) * P2 +
                                  static_cast<long>(bx.y0 + G + base[1] + yy) * P + (bx.x0 + G + base[0])) * F;
      double *dst = t1 + (static_cast<long>(zz) * Ye + yy) * XF;
      for (int i = 0; i < XF; ++i) {
        double s = c[0][0] * src[i];
        for (int d = 1; d < W; ++d) s += c[0][d] * src[i + d * F];
        dst[i] = s;
      }
    }
  for (int zz = 0; zz < Ze; ++zz)
    for (int j = 0; j < Y; ++j) {
      double *dst = t2 + (static_cast<long>(zz) * Y + j) * XF;
      const double *s0 = t1 + (static_cast<long>(zz) * Ye + j) * XF;
      for (int i = 0; i < XF; ++i) {
        double s = c[1][0] * s0[i];
        for (int d = 1; d < W; ++d) s += c[1][d] * s0[i + d * XF];
        dst[i] = s;
      }
    }
  const long plane = static_cast<long>(Y) * XF;
  for (int k = 0; k < Z; ++k) {
    const double *s0 = t2 + k * plane;
    double *dst = out + k * plane;
    for (long i = 0; i < plane; ++i) {
      double s = c[2][0] * s0[i];
      for (int d = 1; d < W; ++d) s += c[2][d] * s0[i + d * plane];
      dst[i] = s;
    }
  }
}

template <int W>
void interp_box(const double *hpad, int P, int G, int F, const int base[3], const double c[3][3],
                const Box &bx, double *t1, double *t2, double *out) {
  switch (F) {
  case 1: interp_box_f<W, 1>(hpad, P, G, F, base, c, bx, t1, t2, out); break;
  case 2: interp_box_f<W, 2>(hpad, P, G, F, base, c, bx, t1, t2, out); break;
  case 3: interp_box_f<W, 3>(hpad, P, G, F, base, c, bx, t1, t2, out); break;
  default: interp_box_f<W, 0>(hpad, P, G, F, base, c, bx, t1, t2, out); break;
  }
}

} // namespace

GainQuadrature::GainQuadrature(const VelocityGrid &grid, const SphereQuadrature &sphere,
                               Interpolation interp, const MaxwellParams &reference)
    : grid_(grid), interp_(interp), ref_(reference) {
  validate(reference);
  width_ = interp == Interpolation::Trilinear ? 2 : 3;
  const double dphi = 2.0 * std::numbers::pi / sphere.n_azimuthal;
  for (int p = 0; p < sphere.n_polar; ++p) {
    const double ct = sphere.cos_theta[p];
    s_abs_ += sphere.n_azimuthal * sphere.polar_weights[p] * dphi * std::abs(ct);
    if (ct <= 0.0) continue;
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    for (int a = 0; a < sphere.n_azimuthal; ++a)
      hemi_.push_back({ct, st, std::cos(sphere.phi[a]), std::sin(sphere.phi[a]),
                       sphere.polar_weights[p] * dphi});
  }

  const int N = grid.size();
  rho_peak_ = 1.0 / (kTorusVolume * std::pow(2.0 * std::numbers::pi * ref_.T, 1.5));
  e_.resize(N);
  rho_.resize(N);
  double worst = 0.0;
  for (int i = 0; i < N; ++i) {
    const double x = (grid.nodes.col(i) - ref_.mu).squaredNorm() / (2.0 * ref_.T);
    worst = std::max(worst, x);
    e_[i] = std::exp(-x);
    rho_[i] = interp_ == Interpolation::WeightedQuadratic ? rho_peak_ * e_[i] : 1.0;
  }
  if (interp_ == Interpolation::WeightedQuadratic && worst > 650.0)
    throw ValidationError("grid extent too large for the reference temperature: "
                          "Maxwellian weight underflows at the box corners");
}

void GainQuadrature::make_stencil(const double p[3], Stencil &s) const {
  for (int k = 0; k < 3; ++k) {
    if (width_ == 3) {
      const double r = std::nearbyint(p[k]);
      const double t = p[k] - r;
      s.base[k] = static_cast<int>(r) - 1;
      s.c[k][0] = 0.5 * t * (t - 1.0);
      s.c[k][1] = 1.0 - t * t;
      s.c[k][2] = 0.5 * t * (t + 1.0);
    } else {
      const double r = std::floor(p[k]);
      const double t = p[k] - r;
      s.base[k] = static_cast<int>(r);
      s.c[k][0] = 1.0 - t;
      s.c[k][1] = t;
      s.c[k][2] = 0.0;
    }
  }
}

namespace {

struct StencilData {
  int base[3];
  double c[3][3];
};

// Shared driver for the bilinear and the linear evaluations. Only w in the
// lexicographically positive half of the lattice differences is visited: the
// pair (v + w, -w) has the same post-collision points as (v, w) with the roles
// of u' and v' exchanged, and `finish` scatters to both output nodes.
// `iy` and `iz` hold the F interleaved fields interpolated at v + y and v + z.
template <class MakeStencil, class Setup, class Combine, class Finish>
void gain_sweep(const VelocityGrid &grid, int width, int F, const std::vector<double> &hpad,
                int P, int G, const auto &hemi, const MakeStencil &make_stencil,
                ExitStats *stats, Setup setup, Combine combine, Finish finish) {
  const int n = grid.points_per_axis;
  const double h = grid.spacing;
  const std::size_t maxbox = static_cast<std::size_t>(n) * n * n * F;
  const std::size_t ext = static_cast<std::size_t>(n + 2) * (n + 2) * (n + 2) * F;
  std::vector<double> t1(ext), t2(ext), iy(maxbox), iz(maxbox);
  ExitStats local;
  for (int c = 0; c <= n - 1; ++c)
    for (int b = -(n - 1); b <= n - 1; ++b)
      for (int a = -(n - 1); a <= n - 1; ++a) {
        if (c == 0 && (b < 0 || (b == 0 && a <= 0))) continue;
        const Box bx = pair_box(n, a, b, c);
        const Vec3 wc(a, b, c);
        const double wlen_c = wc.norm();
        const Vec3 what = wc / wlen_c;
        Vec3 e1, e2;
        orthonormal_frame(what, e1, e2);
        setup(bx);
        for (const auto &nd : hemi) {
          const Vec3 om = nd.ct * what + nd.st * (nd.cphi * e1 + nd.sphi * e2);
          const Vec3 zc = (wlen_c * nd.ct) * om;
          const Vec3 yc = wc - zc;
          const double W = 2.0 * nd.weight * (h * wlen_c * nd.ct);
          const double py[3] = {yc.x(), yc.y(), yc.z()};
          const double pz[3] = {zc.x(), zc.y(), zc.z()};
          StencilData sy, sz;
          make_stencil(py, sy);
          make_stencil(pz, sz);
          if (stats) {
            const long in = static_cast<long>(inside_count(bx.x0, bx.x0 + bx.X - 1, py[0], pz[0], n)) *
                            inside_count(bx.y0, bx.y0 + bx.Y - 1, py[1], pz[1], n) *
                            inside_count(bx.z0, bx.z0 + bx.Z - 1, py[2], pz[2], n);
            local.evaluations += 2 * static_cast<std::uint64_t>(bx.size());
            local.exits += 2 * static_cast<std::uint64_t>(bx.size() - in);
          }
          if (width == 3) {
            interp_box<3>(hpad.data(), P, G, F, sy.base, sy.c, bx, t1.data(), t2.data(), iy.data());
            interp_box<3>(hpad.data(), P, G, F, sz.base, sz.c, bx, t1.data(), t2.data(), iz.data());
          } else {
            interp_box<2>(hpad.data(), P, G, F, sy.base, sy.c, bx, t1.data(), t2.data(), iy.data());
            interp_box<2>(hpad.data(), P, G, F, sz.base, sz.c, bx, t1.data(), t2.data(), iz.data());
          }
          combine(bx, W, iy.data(), iz.data());
        }
        finish(bx, a, b, c);
      }
  if (stats) {
    stats->evaluations += local.evaluations;
    stats->exits += local.exits;
  }
}

int ghost_width(int n) { return static_cast<int>(std::ceil(std::sqrt(3.0) * (n - 1))) + 3; }

} // namespace

std::vector<GridFunction>
GainQuadrature::gains(const std::vector<const GridFunction *> &fields,
                      const std::vector<GainProduct> &products, int n_out,
                      ExitStats *stats) const {
  const int n = grid_.points_per_axis;
  const int N = grid_.size();
  for (const auto *f : fields)
    if (!f || f->size() != N) throw ValidationError("gain field size does not match grid");
  for (const auto &p : products)
    if (p.first < 0 || p.first >= static_cast<int>(fields.size()) || p.second < 0 ||
        p.second >= static_cast<int>(fields.size()) || p.out < 0 || p.out >= n_out)
      throw ValidationError("gain product refers to a missing field");

  // identical inputs are interpolated once; unused inputs not at all
  std::vector<int> slot(fields.size(), -1);
  std::vector<const GridFunction *> used;
  auto slot_of = [&](int k) {
    if (slot[k] < 0) {
      for (std::size_t j = 0; j < fields.size(); ++j)
        if (slot[j] >= 0 && fields[j] == fields[k]) return slot[k] = slot[j];
      slot[k] = static_cast<int>(used.size());
      used.push_back(fields[k]);
    }
    return slot[k];
  };
  struct Term {
    int out, f, g;
    double coef;
  };
  std::vector<Term> terms;
  for (const auto &p : products) {
    const int f = slot_of(p.first), g = slot_of(p.second);
    bool merged = false;
    for (auto &t : terms)
      if (t.out == p.out && t.f == f && t.g == g) {
        t.coef += p.coef;
        merged = true;
        break;
      }
    if (!merged) terms.push_back({p.out, f, g, p.coef});
  }
  // a product list symmetric under f <-> g needs no separate mirror sum
  bool symmetric = true;
  for (const auto &t : terms) {
    bool found = t.f == t.g;
    for (const auto &s : terms)
      if (!found && s.out == t.out && s.f == t.g && s.g == t.f && s.coef == t.coef) found = true;
    symmetric = symmetric && found;
  }
  const int F = static_cast<int>(used.size());
  if (F == 0) return std::vector<GridFunction>(n_out, GridFunction::Zero(N));

  const int G = ghost_width(n);
  const int P = n + 2 * G;
  std::vector<double> hpad(static_cast<std::size_t>(P) * P * P * F, 0.0);
  for (int iz = 0; iz < n; ++iz)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const int i = grid_.index(ix, iy, iz);
        const std::size_t at = ((static_cast<std::size_t>(iz + G) * P + (iy + G)) * P + (ix + G)) * F;
        for (int k = 0; k < F; ++k) hpad[at + k] = (*used[k])[i] / rho_[i];
      }

  std::vector<GridFunction> out(n_out, GridFunction::Zero(N));
  std::vector<std::vector<double>> acc(n_out, std::vector<double>(N));
  std::vector<std::vector<double>> mir(symmetric ? 0 : n_out, std::vector<double>(N));
  auto stencil = [this](const double p[3], StencilData &s) {
    Stencil t;
    make_stencil(p, t);
    std::copy(t.base, t.base + 3, s.base);
    for (int k = 0; k < 3; ++k) std::copy(t.c[k], t.c[k] + 3, s.c[k]);
  };

  gain_sweep(
      grid_, width_, F, hpad, P, G, hemi_, stencil, stats,
      [&](const Box &bx) {
        for (auto &a : acc) std::fill(a.begin(), a.begin() + bx.size(), 0.0);
        for (auto &a : mir) std::fill(a.begin(), a.begin() + bx.size(), 0.0);
      },
      [&](const Box &bx, double W, const double *iy, const double *iz) {
        const int m = bx.size();
        for (const auto &t : terms) {
          double *ac = acc[t.out].data();
          const double cw = t.coef * W;
          if (symmetric) {
            for (int i = 0; i < m; ++i) ac[i] += cw * iy[i * F + t.f] * iz[i * F + t.g];
          } else {
            double *mi = mir[t.out].data();
            for (int i = 0; i < m; ++i) {
              ac[i] += cw * iy[i * F + t.f] * iz[i * F + t.g];
              mi[i] += cw * iz[i * F + t.f] * iy[i * F + t.g];
            }
          }
        }
      },
      [&](const Box &bx, int a, int b, int c) {
        for (int kz = 0; kz < bx.Z; ++kz)
          for (int ky = 0; ky < bx.Y; ++ky)
            for (int kx = 0; kx < bx.X; ++kx) {
              const int v = grid_.index(bx.x0 + kx, bx.y0 + ky, bx.z0 + kz);
              const int u = grid_.index(bx.x0 + kx + a, bx.y0 + ky + b, bx.z0 + kz + c);
              const double rr = rho_[v] * rho_[u];
              const double pv = grid_.quad_weights[u] * rr, pu = grid_.quad_weights[v] * rr;
              const int l = (kz * bx.Y + ky) * bx.X + kx;
              for (int o = 0; o < n_out; ++o) {
                out[o][v] += pv * acc[o][l];
                out[o][u] += pu * (symmetric ? acc[o][l] : mir[o][l]);
              }
            }
      });
  return out;
}

GridFunction GainQuadrature::linear_gain(const GridFunction &f, ExitStats *stats) const {
  if (interp_ != Interpolation::WeightedQuadratic)
    throw ValidationError("the linear gain operator requires the weighted interpolation scheme");
  const int n = grid_.points_per_axis;
  const int N = grid_.size();
  if (f.size() != N) throw ValidationError("grid function size does not match grid");
  const int G = ghost_width(n);
  const int P = n + 2 * G;
  std::vector<double> hpad(static_cast<std::size_t>(P) * P * P, 0.0);
  for (int iz = 0; iz < n; ++iz)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const int i = grid_.index(ix, iy, iz);
        hpad[(static_cast<std::size_t>(iz + G) * P + (iy + G)) * P + (ix + G)] = f[i] / rho_[i];
      }
  GridFunction out = GridFunction::Zero(N);
  std::vector<double> acc(N);
  auto stencil = [this](const double p[3], StencilData &s) {
    Stencil t;
    make_stencil(p, t);
    std::copy(t.base, t.base + 3, s.base);
    for (int k = 0; k < 3; ++k) std::copy(t.c[k], t.c[k] + 3, s.c[k]);
  };
  gain_sweep(
      grid_, width_, 1, hpad, P, G, hemi_, stencil, stats,
      [&](const Box &bx) { std::fill(acc.begin(), acc.begin() + bx.size(), 0.0); },
      [&](const Box &bx, double W, const double *iy, const double *iz) {
        const int m = bx.size();
        for (int i = 0; i < m; ++i) acc[i] += W * (iy[i] + iz[i]);
      },
      [&](const Box &bx, int a, int b, int c) {
        for (int kz = 0; kz < bx.Z; ++kz)
          for (int ky = 0; ky < bx.Y; ++ky)
            for (int kx = 0; kx < bx.X; ++kx) {
              const int v = grid_.index(bx.x0 + kx, bx.y0 + ky, bx.z0 + kz);
              const int u = grid_.index(bx.x0 + kx + a, bx.y0 + ky + b, bx.z0 + kz + c);
              const double ra = rho_[v] * rho_[u] * acc[(kz * bx.Y + ky) * bx.X + kx];
              out[v] += grid_.quad_weights[u] * ra;
              out[u] += grid_.quad_weights[v] * ra;
            }
      });
  return out;
}

GridFunction GainQuadrature::speed_convolution(const GridFunction &f) const {
  const int n = grid_.points_per_axis;
  const int N = grid_.size();
  if (f.size() != N) throw ValidationError("grid function size does not match grid");
  const int D = 2 * n - 1;
  std::vector<double> dist(static_cast<std::size_t>(D) * D * D);
  for (int c = 0; c < D; ++c)
    for (int b = 0; b < D; ++b)
      for (int a = 0; a < D; ++a) {
        const double x = a - (n - 1), y = b - (n - 1), z = c - (n - 1);
        dist[(static_cast<std::size_t>(c) * D + b) * D + a] = s_abs_ * grid_.spacing * std::sqrt(x * x + y * y + z * z);
      }
  std::vector<double> qf(N);
  for (int i = 0; i < N; ++i) qf[i] = grid_.quad_weights[i] * f[i];
  GridFunction out(N);
  for (int vz = 0; vz < n; ++vz)
    for (int vy = 0; vy < n; ++vy)
      for (int vx = 0; vx < n; ++vx) {
        double s = 0.0;
        for (int uz = 0; uz < n; ++uz)
          for (int uy = 0; uy < n; ++uy) {
            const double *row = dist.data() + (static_cast<std::size_t>(uz - vz + n - 1) * D + (uy - vy + n - 1)) * D + (n - 1 - vx);
            const double *q = qf.data() + grid_.index(0, uy, uz);
            for (int ux = 0; ux < n; ++ux) s += row[ux] * q[ux];
          }
        out[grid_.index(vx, vy, vz)] = s;
      }
  return out;
}

namespace {

// Translation-invariant table for one lattice difference w: coefficient of
// f(v + o) / M_ref(v + o) in the linear gain at v, summed over omega.
class TableBuilder {
public:
  explicit TableBuilder(int n) : n_(n) {}

  template <class Hemi, class MakeStencil>
  void build(int a, int b, int c, double h, const Hemi &hemi, const MakeStencil &mk, int width) {
    entries.clear();
    const Vec3 wc(a, b, c);
    const double wl = wc.norm();
    const Vec3 what = wc / wl;
    Vec3 e1, e2;
    orthonormal_frame(what, e1, e2);
    for (int k = 0; k < 3; ++k) {
      lo_[k] = static_cast<int>(std::floor(0.5 * wc[k] - 0.5 * wl)) - 2;
      side_[k] = static_cast<int>(std::ceil(0.5 * wc[k] + 0.5 * wl)) + 2 - lo_[k] + 1;
    }
    const std::size_t vol = static_cast<std::size_t>(side_[0]) * side_[1] * side_[2];
    if (cube_.size() < vol) {
      cube_.assign(vol, 0.0);
      stamp_.assign(vol, 0);
    }
    ++epoch_;
    touched_.clear();
    for (const auto &nd : hemi) {
      const Vec3 om = nd.ct * what + nd.st * (nd.cphi * e1 + nd.sphi * e2);
      const Vec3 zc = (wl * nd.ct) * om;
      const Vec3 yc = wc - zc;
      const double W = 2.0 * nd.weight * (h * wl * nd.ct);
      const double pz[3] = {zc.x(), zc.y(), zc.z()};
      const double py[3] = {yc.x(), yc.y(), yc.z()};
      for (const double *p : {pz, py}) {
        StencilData s;
        mk(p, s);
        for (int dz = 0; dz < width; ++dz)
          for (int dy = 0; dy < width; ++dy)
            for (int dx = 0; dx < width; ++dx) {
              const int ox = s.base[0] + dx - lo_[0];
              const int oy = s.base[1] + dy - lo_[1];
              const int oz = s.base[2] + dz - lo_[2];
              const std::size_t idx = (static_cast<std::size_t>(oz) * side_[1] + oy) * side_[0] + ox;
              if (stamp_[idx] != epoch_) {
                stamp_[idx] = epoch_;
                cube_[idx] = 0.0;
                touched_.push_back(idx);
              }
              cube_[idx] += W * s.c[0][dx] * s.c[1][dy] * s.c[2][dz];
            }
      }
    }
    for (std::size_t idx : touched_) {
      const int ox = static_cast<int>(idx % side_[0]) + lo_[0];
      const int oy = static_cast<int>((idx / side_[0]) % side_[1]) + lo_[1];
      const int oz = static_cast<int>(idx / (static_cast<std::size_t>(side_[0]) * side_[1])) + lo_[2];
      if (std::abs(ox) > n_ - 1 || std::abs(oy) > n_ - 1 || std::abs(oz) > n_ - 1) continue;
      if (cube_[idx] != 0.0) entries.push_back({ox, oy, oz, cube_[idx]});
    }
  }

  // o_z range that a table for w can reach
  static void z_reach(int c, double wl, int &zlo, int &zhi) {
    zlo = static_cast<int>(std::floor(0.5 * c - 0.5 * wl)) - 2;
    zhi = static_cast<int>(std::ceil(0.5 * c + 0.5 * wl)) + 2;
  }

  struct Entry {
    int ox, oy, oz;
    double coef;
  };
  std::vector<Entry> entries;

private:
  int n_;
  int lo_[3] = {0, 0, 0}, side_[3] = {0, 0, 0};
  std::vector<double> cube_;
  std::vector<unsigned> stamp_;
  unsigned epoch_ = 0;
  std::vector<std::size_t> touched_;
};

template <int V>
void correlate_rows(const double *gp, long rowstride, long planestride, const int *boff,
                    const double *coef, std::size_t ne, int Y, int Z, int X, double *c) {
  constexpr int L = 8 * V;
  for (int kz = 0; kz < Z; ++kz)
    for (int ky = 0; ky < Y; ++ky) {
      double r[L] = {};
      const double *base = gp + kz * planestride + ky * rowstride;
      for (std::size_t e = 0; e < ne; ++e) {
        const double *src = base + boff[e];
        const double w = coef[e];
        for (int i = 0; i < L; ++i) r[i] += w * src[i];
      }
      double *dst = c + (static_cast<long>(kz) * Y + ky) * X;
      for (int i = 0; i < X; ++i) dst[i] = r[i];
    }
}

void correlate_rows_generic(const double *gp, long rowstride, long planestride, const int *boff,
                            const double *coef, std::size_t ne, int Y, int Z, int X, double *c) {
  for (int kz = 0; kz < Z; ++kz)
    for (int ky = 0; ky < Y; ++ky) {
      double *dst = c + (static_cast<long>(kz) * Y + ky) * X;
      std::fill(dst, dst + X, 0.0);
      const double *base = gp + kz * planestride + ky * rowstride;
      for (std::size_t e = 0; e < ne; ++e) {
        const double *src = base + boff[e];
        const double w = coef[e];
        for (int i = 0; i < X; ++i) dst[i] += w * src[i];
      }
    }
}

} // namespace

Eigen::MatrixXd GainQuadrature::linear_gain_matrix(std::size_t max_chunk_entries) const {
  if (interp_ != Interpolation::WeightedQuadratic)
    throw ValidationError("the linear gain matrix requires the weighted interpolation scheme");
  const int n = grid_.points_per_axis;
  const int N = grid_.size();
  const double h = grid_.spacing;
  const int D = 2 * n - 1;
  const int nb = n - 1;
  auto aidx = [&](int ox, int oy, int oz) {
    return (ox + nb) + D * ((oy + nb) + D * (oz + nb));
  };

  // g(u) = q_u exp(-|u - mu|^2 / 2T), zero padded by n-1 on each side (+8 in x)
  const int Pgx = 3 * n - 2 + 8, Pg = 3 * n - 2;
  const long rowstride = Pgx, planestride = static_cast<long>(Pgx) * Pg;
  std::vector<double> gpad(static_cast<std::size_t>(planestride) * Pg, 0.0);
  for (int iz = 0; iz < n; ++iz)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const int i = grid_.index(ix, iy, iz);
        gpad[(iz + nb) * planestride + (iy + nb) * rowstride + (ix + nb)] = grid_.quad_weights[i] * e_[i];
      }
  Eigen::VectorXd einv = e_.cwiseInverse();

  auto sfn = [this](const double p[3], StencilData &s) {
    Stencil t;
    make_stencil(p, t);
    std::copy(t.base, t.base + 3, s.base);
    for (int k = 0; k < 3; ++k) std::copy(t.c[k], t.c[k] + 3, s.c[k]);
  };
  TableBuilder tb(n);

  auto for_each_w = [&](int zlo, int zhi, auto &&fn) {
    for (int c = -nb; c <= nb; ++c)
      for (int b = -nb; b <= nb; ++b)
        for (int a = -nb; a <= nb; ++a) {
          if (a == 0 && b == 0 && c == 0) continue;
          const double wl = std::sqrt(double(a * a + b * b + c * c));
          int rlo, rhi;
          TableBuilder::z_reach(c, wl, rlo, rhi);
          if (rhi < zlo || rlo > zhi) continue;
          tb.build(a, b, c, h, hemi_, sfn, width_);
          fn(a, b, c);
        }
  };

  // counting pass over all offsets
  std::vector<std::size_t> count(static_cast<std::size_t>(D) * D * D, 0);
  for_each_w(-nb, nb, [&](int, int, int) {
    for (const auto &e : tb.entries) ++count[aidx(e.ox, e.oy, e.oz)];
  });

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  std::vector<double> cbuf(static_cast<std::size_t>(n) * n * n);
  std::vector<int> boff;
  std::vector<double> coef;
  std::vector<std::size_t> start;

  int z_begin = -nb;
  while (z_begin <= nb) {
    // grow the chunk of o_z slices while the entry budget allows
    std::size_t total = 0;
    int z_end = z_begin;
    for (; z_end <= nb; ++z_end) {
      std::size_t slice = 0;
      for (int oy = -nb; oy <= nb; ++oy)
        for (int ox = -nb; ox <= nb; ++ox) slice += count[aidx(ox, oy, z_end)];
      if (z_end > z_begin && total + slice > max_chunk_entries) break;
      total += slice;
    }
    const int zlast = z_end - 1;
    const int first = aidx(-nb, -nb, z_begin);
    const int last = aidx(nb, nb, zlast);
    start.assign(static_cast<std::size_t>(last - first) + 2, 0);
    for (int ai = first; ai <= last; ++ai) start[ai - first + 1] = start[ai - first] + count[ai];
    boff.resize(total);
    coef.resize(total);
    std::vector<std::size_t> fill(start.begin(), start.end() - 1);
    for_each_w(z_begin, zlast, [&](int a, int b, int c) {
      const int off = a + static_cast<int>(rowstride) * b + static_cast<int>(planestride) * c;
      for (const auto &e : tb.entries) {
        if (e.oz < z_begin || e.oz > zlast) continue;
        const std::size_t k = fill[aidx(e.ox, e.oy, e.oz) - first]++;
        boff[k] = off;
        coef[k] = e.coef;
      }
    });

    for (int oz = z_begin; oz <= zlast; ++oz)
      for (int oy = -nb; oy <= nb; ++oy)
        for (int ox = -nb; ox <= nb; ++ox) {
          const int ai = aidx(ox, oy, oz) - first;
          const std::size_t ne = start[ai + 1] - start[ai];
          if (ne == 0) continue;
          const Box bx = pair_box(n, ox, oy, oz);
          const double *gp = gpad.data() + (bx.z0 + nb) * planestride + (bx.y0 + nb) * rowstride + (bx.x0 + nb);
          const int *bo = boff.data() + start[ai];
          const double *co = coef.data() + start[ai];
          if (bx.X <= 8) correlate_rows<1>(gp, rowstride, planestride, bo, co, ne, bx.Y, bx.Z, bx.X, cbuf.data());
          else if (bx.X <= 16) correlate_rows<2>(gp, rowstride, planestride, bo, co, ne, bx.Y, bx.Z, bx.X, cbuf.data());
          else if (bx.X <= 24) correlate_rows<3>(gp, rowstride, planestride, bo, co, ne, bx.Y, bx.Z, bx.X, cbuf.data());
          else correlate_rows_generic(gp, rowstride, planestride, bo, co, ne, bx.Y, bx.Z, bx.X, cbuf.data());
          for (int kz = 0; kz < bx.Z; ++kz)
            for (int ky = 0; ky < bx.Y; ++ky)
              for (int kx = 0; kx < bx.X; ++kx) {
                const int v = grid_.index(bx.x0 + kx, bx.y0 + ky, bx.z0 + kz);
                const int j = grid_.index(bx.x0 + kx + ox, bx.y0 + ky + oy, bx.z0 + kz + oz);
                A(v, j) = rho_peak_ * e_[v] * cbuf[(kz * bx.Y + ky) * bx.X + kx] * einv[j];
              }
        }
    z_begin = z_end;
  }
  return A;
}

} // namespace hsb
