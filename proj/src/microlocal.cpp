#include "qhm/microlocal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qhm/parallel.hpp"

namespace qhm {

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

double wrap(double d) {
  d = std::fmod(d, kTwoPi);
  if (d > std::numbers::pi)
    d -= kTwoPi;
  if (d < -std::numbers::pi)
    d += kTwoPi;
  return d;
}

// 1-D factors of a separable von Mises window centred at grid point `at`
std::vector<std::vector<double>> von_mises_factors(const Grid& g,
                                                   const std::vector<double>& kappa,
                                                   const std::vector<double>& c) {
  std::vector<std::vector<double>> f(g.dim());
  for (int j = 0; j < g.dim(); ++j) {
    int N = g.shape()[j];
    f[j].resize(N);
    for (int k = 0; k < N; ++k)
      f[j][k] = std::exp(kappa[j] * (std::cos(kTwoPi * k / N - c[j]) - 1));
  }
  return f;
}

void check_window(const Grid& g, const WindowSpec& w) {
  if (static_cast<int>(w.center.size()) != g.dim())
    throw std::invalid_argument("window: center dimension mismatch");
  if (w.profile == WindowSpec::Profile::VonMises &&
      static_cast<int>(w.kappa.size()) != g.dim())
    throw std::invalid_argument("window: one concentration per axis");
  if (w.profile == WindowSpec::Profile::Bump && !(w.radius > 0))
    throw std::invalid_argument("window: radius must be positive");
}

double low_cut_value(double r, double eps0) { return smoothstep(2 * r / eps0 - 1); }

} // namespace

double smoothstep(double t) {
  if (t <= 0)
    return 0;
  if (t >= 1)
    return 1;
  return bump_cdf(2 * t - 1);
}

WindowSpec von_mises(std::vector<double> center, std::vector<double> kappa) {
  WindowSpec w;
  w.center = std::move(center);
  w.kappa = std::move(kappa);
  return w;
}

Field window_field(GridPtr g, const WindowSpec& w) {
  check_window(*g, w);
  if (w.profile == WindowSpec::Profile::VonMises) {
    return Field::from_function(g, [&](const double* x) {
      double s = 0;
      for (int j = 0; j < g->dim(); ++j)
        s += w.kappa[j] * (std::cos(x[j] - w.center[j]) - 1);
      return cplx(std::exp(s));
    });
  }
  return Field::from_function(g, [&](const double* x) {
    double r2 = 0;
    for (int j = 0; j < g->dim(); ++j) {
      double d = wrap(x[j] - w.center[j]);
      r2 += d * d;
    }
    return cplx(1 - smoothstep(2 * std::sqrt(r2) / w.radius - 1));
  });
}

double cutoff_value(const MConicSector& s, const WeightVector& w,
                    std::span<const double> xi) {
  double r = m_norm(w, xi);
  double low = low_cut_value(r, s.low_cut);
  if (low == 0)
    return 0;
  double d = sphere_distance(w, xi, s.center);
  return (1 - smoothstep(d / s.radius - 1)) * low;
}

std::vector<double> microlocal_cutoff(const MConicSector& s, const Grid& g) {
  if (!(s.radius > 0))
    throw std::invalid_argument("microlocal_cutoff: sector radius must be positive");
  std::vector<double> psi(g.size());
  bool any = false;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!g.representable(i))
      continue;
    psi[i] = cutoff_value(s, g.weight(), g.xi(i));
    any = any || psi[i] > 0;
  }
  if (!any)
    throw std::invalid_argument("microlocal_cutoff: the sector covers no grid "
                                "frequency");
  return psi;
}

static void check_lift(int lift) {
  if (lift < 0 || lift % 2)
    throw std::invalid_argument("probe: lift must be a non-negative even order");
}

static Field lifted(const Field& u, int lift) {
  return lift ? bracket_power(u, lift) : u;
}

BesovEstimate probe(const Field& u, const ProbeConfig& cfg, const DyadicSystem& sys) {
  check_lift(cfg.lift);
  if (!(u.g() == *sys.grid()))
    throw std::invalid_argument("probe: system/grid mismatch");
  const Grid& g = u.g();
  auto psi = microlocal_cutoff(cfg.sector, g);
  Field v = window_field(u.grid(), cfg.window) * lifted(u, cfg.lift);
  int hi = cfg.fit.hi < 0 ? sys.h_max() - 1 : cfg.fit.hi;
  auto sups = block_sups_spec(g, v.spectrum(), sys, cfg.fit.lo, hi, &psi);
  EstimatorOptions opt;
  opt.shift = cfg.lift;
  return besov_estimate(sups, sys.h_max(), cfg.fit, opt, sup_norm(v));
}

BesovEstimate probe_point(const Field& u, const WindowSpec& win, double low_cut,
                          const DyadicSystem& sys, FitRange fit, int lift) {
  check_lift(lift);
  if (!(u.g() == *sys.grid()))
    throw std::invalid_argument("probe_point: system/grid mismatch");
  const Grid& g = u.g();
  std::vector<double> low(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    low[i] = g.representable(i) ? low_cut_value(g.mnorm()[i], low_cut) : 0.0;
  Field v = window_field(u.grid(), win) * lifted(u, lift);
  int hi = fit.hi < 0 ? sys.h_max() - 1 : fit.hi;
  auto sups = block_sups_spec(g, v.spectrum(), sys, fit.lo, hi, &low);
  EstimatorOptions opt;
  opt.shift = lift;
  return besov_estimate(sups, sys.h_max(), fit, opt, sup_norm(v));
}

std::vector<double> scan_kappa(const WeightVector& w) {
  std::vector<double> k;
  for (int j = 0; j < w.dim(); ++j)
    k.push_back(40.0 / std::pow(20.0, w[j] - 1));
  return k;
}

std::vector<char> WavefrontMap::projection() const {
  std::vector<char> p(x.size());
  for (std::size_t c = 0; c < x.size(); ++c)
    for (int d = 0; d < directions; ++d)
      p[c] = p[c] || wf(c, d);
  return p;
}

namespace {

struct CellLayout {
  std::vector<int> shape;
  std::vector<std::vector<double>> x;
  std::vector<std::vector<int>> at;  // grid coordinates of the cell centers
};

CellLayout cells(const Grid& g, int stride) {
  if (stride < 1)
    throw std::invalid_argument("scan: stride must be positive");
  CellLayout c;
  std::size_t total = 1;
  for (int j = 0; j < g.dim(); ++j) {
    if (g.shape()[j] % stride)
      throw std::invalid_argument("scan: stride must divide the grid size");
    c.shape.push_back(g.shape()[j] / stride);
    total *= c.shape.back();
  }
  for (std::size_t q = 0; q < total; ++q) {
    std::vector<int> k(g.dim());
    std::size_t r = q;
    for (int j = g.dim() - 1; j >= 0; --j) {
      k[j] = static_cast<int>(r % c.shape[j]) * stride;
      r /= c.shape[j];
    }
    std::vector<double> x(g.dim());
    for (int j = 0; j < g.dim(); ++j)
      x[j] = kTwoPi * k[j] / g.shape()[j];
    c.x.push_back(std::move(x));
    c.at.push_back(std::move(k));
  }
  return c;
}

// phi_c * v for a separable von Mises window centred on a grid point:
// the 1-D factor tables are shifted copies of the one centred at 0.
std::vector<cplx> windowed(const Grid& g, const std::vector<cplx>& v,
                           const std::vector<std::vector<double>>& f0,
                           const std::vector<int>& at) {
  std::vector<cplx> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double w = 1;
    for (int j = 0; j < g.dim(); ++j) {
      int N = g.shape()[j];
      int k = g.coord(i, j) - at[j];
      w *= f0[j][k < 0 ? k + N : k];
    }
    out[i] = v[i] * w;
  }
  return out;
}

struct Sparse {
  std::vector<std::size_t> idx;
  std::vector<double> w;
};

Sparse sparse_mask(const std::vector<double>& a, const std::vector<double>* b) {
  Sparse s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double v = a[i] * (b ? (*b)[i] : 1.0);
    if (v != 0) {
      s.idx.push_back(i);
      s.w.push_back(v);
    }
  }
  return s;
}

double masked_sup(const Grid& g, const std::vector<cplx>& spec, const Sparse& m) {
  if (m.idx.empty())
    return 0;
  std::vector<cplx> c(spec.size());
  for (std::size_t q = 0; q < m.idx.size(); ++q)
    c[m.idx[q]] = spec[m.idx[q]] * m.w[q];
  return inverse_sup(g, c);
}

std::vector<double> scan_kappa_for(const Grid& g, const ScanOptions& opt) {
  auto k = opt.kappa.empty() ? scan_kappa(g.weight()) : opt.kappa;
  if (static_cast<int>(k.size()) != g.dim())
    throw std::invalid_argument("scan: one concentration per axis");
  return k;
}

int fit_hi(const ScanOptions& opt, const DyadicSystem& sys) {
  return opt.fit.hi < 0 ? sys.h_max() - 1 : opt.fit.hi;
}

} // namespace

WavefrontMap wavefront_scan(const Field& u, const DyadicSystem& sys,
                            const ScanOptions& opt) {
  const Grid& g = u.g();
  if (!(g == *sys.grid()))
    throw std::invalid_argument("wavefront_scan: system/grid mismatch");
  if (g.dim() != 2)
    throw std::invalid_argument("wavefront_scan: two-dimensional grids only");
  if (opt.directions < 2)
    throw std::invalid_argument("wavefront_scan: at least two directions");
  check_lift(opt.lift);
  const WeightVector& w = g.weight();
  auto layout = cells(g, opt.stride);
  WavefrontMap map;
  map.shape = layout.shape;
  map.x = layout.x;
  map.s = opt.s;
  map.directions = opt.directions;
  int K = opt.directions;
  for (int d = 0; d < K; ++d) {
    map.angles.push_back(kTwoPi * d / K);
    map.points.push_back(direction_point(w, map.angles.back()));
  }
  for (int d = 0; d < K; ++d) {
    double best = INFINITY;
    for (int e = 0; e < K; ++e)
      if (e != d)
        best = std::min(best, sphere_distance(w, map.points[d], map.points[e]));
    map.radii.push_back(0.5 * best);
  }
  // Real data: psi_{-theta}(xi) = psi_theta(-xi) and the windowed spectrum is
  // Hermitian, so the antipodal direction has identical block sups.
  double scale = sup_norm(u);
  bool real = u.is_real(1e-14 * std::max(scale, 1e-300));
  bool mirror = real && K % 2 == 0;
  int Kc = mirror ? K / 2 : K;

  int lo = opt.fit.lo, hi = fit_hi(opt, sys);
  int top = hi;
  std::vector<std::vector<Sparse>> masks(Kc);
  for (int d = 0; d < Kc; ++d) {
    MConicSector sec{map.points[d], map.radii[d], opt.low_cut};
    auto psi = microlocal_cutoff(sec, g);
    for (int h = lo; h <= top; ++h)
      masks[d].push_back(sparse_mask(sys.phi(h), &psi));
  }
  auto f0 = von_mises_factors(g, scan_kappa_for(g, opt), std::vector<double>(2, 0.0));
  Field ul = lifted(u, opt.lift);
  const auto& uv = ul.values();
  std::size_t nc = layout.x.size();
  map.index.assign(nc * K, 0);
  map.indicator.assign(nc * K, 0);
  EstimatorOptions eo;
  eo.shift = opt.lift;
  parallel_for(nc, [&](std::size_t c) {
    auto v = windowed(g, uv, f0, layout.at[c]);
    double ref = 0;
    for (auto z : v)
      ref = std::max(ref, std::abs(z));
    auto spec = forward(g, v);
    for (int d = 0; d < Kc; ++d) {
      std::vector<double> sups(sys.shells(), -1.0);
      for (int h = lo; h <= top; ++h)
        sups[h + 1] = masked_sup(g, spec, masks[d][h - lo]);
      double idx = besov_estimate(sups, sys.h_max(), opt.fit, eo, ref).index_or_inf();
      map.index[c * K + d] = idx;
      if (mirror)
        map.index[c * K + d + Kc] = idx;
    }
  });
  for (std::size_t q = 0; q < map.index.size(); ++q)
    map.indicator[q] = map.index[q] < opt.s;
  return map;
}

SingSuppMap singsupp_scan(const Field& u, const DyadicSystem& sys,
                          const ScanOptions& opt) {
  const Grid& g = u.g();
  if (!(g == *sys.grid()))
    throw std::invalid_argument("singsupp_scan: system/grid mismatch");
  check_lift(opt.lift);
  auto layout = cells(g, opt.stride);
  SingSuppMap map;
  map.shape = layout.shape;
  map.x = layout.x;
  std::vector<double> low(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    low[i] = g.representable(i) ? low_cut_value(g.mnorm()[i], opt.low_cut) : 0.0;
  int lo = opt.fit.lo, hi = fit_hi(opt, sys);
  int top = hi;
  std::vector<Sparse> masks;
  for (int h = lo; h <= top; ++h)
    masks.push_back(sparse_mask(sys.phi(h), &low));
  auto f0 = von_mises_factors(g, scan_kappa_for(g, opt),
                              std::vector<double>(g.dim(), 0.0));
  Field ul = lifted(u, opt.lift);
  std::size_t nc = layout.x.size();
  map.index.assign(nc, 0);
  EstimatorOptions eo;
  eo.shift = opt.lift;
  parallel_for(nc, [&](std::size_t c) {
    auto v = windowed(g, ul.values(), f0, layout.at[c]);
    double ref = 0;
    for (auto z : v)
      ref = std::max(ref, std::abs(z));
    auto spec = forward(g, v);
    std::vector<double> sups(sys.shells(), -1.0);
    for (int h = lo; h <= top; ++h)
      sups[h + 1] = masked_sup(g, spec, masks[h - lo]);
    map.index[c] = besov_estimate(sups, sys.h_max(), opt.fit, eo, ref).index_or_inf();
  });
  map.indicator.resize(nc);
  for (std::size_t c = 0; c < nc; ++c)
    map.indicator[c] = map.index[c] < opt.s;
  return map;
}

GainIdentity gain_identity(const Field& u, const std::vector<Field>& partials,
                           double tol) {
  const Grid& g = u.g();
  const WeightVector& w = g.weight();
  if (static_cast<int>(partials.size()) != g.dim())
    throw std::invalid_argument("gain_identity: one partial per axis");
  Field ub = band_limit(u);
  double scale = std::max(spectral_l2(ub), 1e-300);
  for (int j = 0; j < g.dim(); ++j) {
    if (!(partials[j].g() == g))
      throw std::invalid_argument("gain_identity: grid mismatch");
    std::vector<int> e(g.dim(), 0);
    e[j] = 1;
    double err = spectral_l2(band_limit(partials[j]) - derivative(ub, e));
    double ref = std::max(spectral_l2(derivative(ub, e)), scale);
    if (err > tol * ref)
      throw std::invalid_argument("gain_identity: partials inconsistent with u");
  }
  double inv = 1.0 / w.m_star();
  Field out = bracket_power(ub, inv - 2);
  for (int j = 0; j < g.dim(); ++j) {
    int p = 2 * w[j] - 1;
    Field dj = band_limit(partials[j]);
    out = out + apply_multiplier(dj, [&](const Freq& xi) {
            return cplx(std::pow(m_bracket(w, xi), inv - 2) * std::pow(xi[j], p));
          });
  }
  out = band_limit(out);
  GainIdentity r{out, sup_norm(out - bracket_power(ub, inv))};
  return r;
}

void to_json(nlohmann::json& j, const EllipticityReport& e) {
  j = {{"c0", e.c0},         {"rho0", e.rho0},       {"threshold", e.threshold},
       {"order", e.order},   {"pass", e.pass},       {"samples", e.samples},
       {"x_at_min", e.x_at_min}, {"xi_at_min", e.xi_at_min}};
}

} // namespace qhm
