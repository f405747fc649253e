#include "qhm/decomp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>

#include "qhm/parallel.hpp"

namespace qhm {

// --- cutoff profile -------------------------------------------------------

namespace {

constexpr int kNodes = 2048;

// 8-point Gauss-Legendre on [-1, 1]
constexpr std::array<double, 8> kGx = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
    -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
    0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGw = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
    0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
    0.2223810344533745, 0.1012285362903763};

double raw_bump(double s) {
  if (s <= -1 || s >= 1)
    return 0;
  return std::exp(-1.0 / (1 - s * s));
}

double gl(double a, double b) {
  double c = 0.5 * (a + b), h = 0.5 * (b - a), s = 0;
  for (int i = 0; i < 8; ++i)
    s += kGw[i] * raw_bump(c + h * kGx[i]);
  return s * h;
}

struct CdfTable {
  std::vector<double> c;  // cumulative at nodes
  double z = 1;
  CdfTable() : c(kNodes + 1) {
    double h = 2.0 / kNodes;
    c[0] = 0;
    for (int i = 0; i < kNodes; ++i)
      c[i + 1] = c[i] + gl(-1 + i * h, -1 + (i + 1) * h);
    z = c[kNodes];
  }
};

const CdfTable& table() {
  static const CdfTable t;
  return t;
}

} // namespace

double bump_density(double s) { return raw_bump(s) / table().z; }

double bump_cdf(double s) {
  if (s <= -1)
    return 0;
  if (s >= 1)
    return 1;
  const auto& t = table();
  double h = 2.0 / kNodes;
  int i = std::clamp(static_cast<int>((s + 1) / h), 0, kNodes - 1);
  double a = -1 + i * h;
  return (t.c[i] + gl(a, s)) / t.z;
}

CutoffProfile::CutoffProfile(double K) : K_(K) {
  if (!(K > 1))
    throw std::invalid_argument("cutoff: K must exceed 1");
}

double CutoffProfile::operator()(double t) const {
  double a = 0.5 / K_, b = K_;
  if (t <= a)
    return 1;
  if (t >= b)
    return 0;
  return 1 - bump_cdf(-1 + 2 * (t - a) / (b - a));
}

double CutoffProfile::derivative(double t) const {
  double a = 0.5 / K_, b = K_;
  if (t <= a || t >= b)
    return 0;
  return -bump_density(-1 + 2 * (t - a) / (b - a)) * 2 / (b - a);
}

CutoffProfile make_cutoff(double K) { return CutoffProfile(K); }

// --- dyadic system --------------------------------------------------------

int shell_limit(const Grid& g, double K) {
  return static_cast<int>(std::floor(std::log2(g.radius() / K)));
}

DyadicSystem::DyadicSystem(CutoffProfile profile, GridPtr grid)
    : profile_(profile), grid_(std::move(grid)) {
  h_max_ = shell_limit(*grid_, profile_.K());
  if (h_max_ < 2)
    throw std::invalid_argument("dyadic system: grid too small (h_max < 2)");
  const auto& r = grid_->mnorm();
  std::size_t n = r.size();
  phi_.assign(h_max_ + 2, std::vector<double>(n));
  std::vector<double> prev(n);
  for (std::size_t i = 0; i < n; ++i)
    prev[i] = phi_[0][i] = profile_(r[i]);
  for (int h = 0; h < h_max_; ++h) {
    double s = std::ldexp(1.0, -h - 1);
    auto& cur = phi_[h + 1];
    for (std::size_t i = 0; i < n; ++i) {
      double p = profile_(s * r[i]);
      cur[i] = p - prev[i];
      prev[i] = p;
    }
  }
  auto& top = phi_[h_max_ + 1];
  for (std::size_t i = 0; i < n; ++i)
    top[i] = 1 - prev[i];
}

double DyadicSystem::phi_at(int h, double r) const {
  if (h == -1)
    return profile_(r);
  double hi = profile_(std::ldexp(r, -h));
  if (h == h_max_)
    return 1 - hi;
  return profile_(std::ldexp(r, -h - 1)) - hi;
}

std::pair<double, double> DyadicSystem::crown(int h) const {
  double K = profile_.K();
  if (h == -1)
    return {0.0, K};
  double hi = h == h_max_ ? INFINITY : K * std::ldexp(1.0, h + 1);
  return {std::ldexp(1.0, h - 1) / K, hi};
}

SystemPtr build_system(const CutoffProfile& profile, GridPtr grid) {
  static std::mutex m;
  static std::map<std::tuple<double, std::vector<int>, std::vector<int>>,
                  SystemPtr> cache;
  std::lock_guard lk(m);
  auto key = std::make_tuple(profile.K(), grid->shape(), grid->weight().m());
  auto it = cache.find(key);
  if (it != cache.end())
    return it->second;
  auto s = std::make_shared<const DyadicSystem>(profile, grid);
  cache[key] = s;
  return s;
}

SystemPtr build_system(const CutoffProfile& profile, const WeightVector& w,
                       const std::vector<int>& shape) {
  return build_system(profile, make_grid(shape, w));
}

// --- blocks ---------------------------------------------------------------

Field BlockSequence::sum() const {
  Field s(blocks.front().grid());
  for (const auto& b : blocks)
    s = s + b;
  return s;
}

BlockSequence dyadic_blocks(const Field& u, const SystemPtr& sys,
                            std::string source) {
  if (!(u.g() == *sys->grid()))
    throw std::invalid_argument("dyadic_blocks: system/grid mismatch");
  BlockSequence bs;
  bs.sys = sys;
  bs.source = std::move(source);
  bs.blocks.resize(sys->shells());
  const auto& spec = u.spectrum();
  parallel_for(sys->shells(), [&](std::size_t k) {
    const auto& p = sys->phi(static_cast<int>(k) - 1);
    std::vector<cplx> c(spec.size());
    for (std::size_t i = 0; i < c.size(); ++i)
      c[i] = spec[i] * p[i];
    bs.blocks[k] = Field::from_spectrum(u.grid(), std::move(c));
  });
  return bs;
}

std::vector<double> block_sups_spec(const Grid& g, const std::vector<cplx>& spec,
                                    const DyadicSystem& sys, int lo, int hi,
                                    const std::vector<double>* extra) {
  if (hi < -1)
    hi = sys.h_max();
  lo = std::max(lo, -1);
  hi = std::min(hi, sys.h_max());
  std::vector<double> out(sys.shells(), -1.0);
  if (hi < lo)
    return out;
  parallel_for(hi - lo + 1, [&](std::size_t k) {
    int h = lo + static_cast<int>(k);
    const auto& p = sys.phi(h);
    std::vector<cplx> c(spec.size());
    bool any = false;
    for (std::size_t i = 0; i < c.size(); ++i) {
      double m = p[i];
      if (extra)
        m *= (*extra)[i];
      if (m != 0) {
        c[i] = spec[i] * m;
        any = true;
      }
    }
    out[h + 1] = any ? inverse_sup(g, c) : 0.0;
  });
  return out;
}

std::vector<double> block_sups(const Field& u, const DyadicSystem& sys, int lo,
                               int hi) {
  if (!(u.g() == *sys.grid()))
    throw std::invalid_argument("block_sups: system/grid mismatch");
  return block_sups_spec(u.g(), u.spectrum(), sys, lo, hi);
}

// --- estimator ------------------------------------------------------------

double BesovEstimate::norm_at(double s) const {
  double m = 0;
  for (std::size_t k = 0; k < sups.size(); ++k)
    if (sups[k] >= 0)
      m = std::max(m, std::exp2(s * (static_cast<int>(k) - 1)) * sups[k]);
  return m;
}

double BesovEstimate::index_or_inf() const {
  if (beyond || !index)
    return std::numeric_limits<double>::infinity();
  return *index;
}

BesovEstimate besov_estimate(const std::vector<double>& sups, int h_max,
                             FitRange fit, EstimatorOptions opt, double ref) {
  BesovEstimate e;
  e.sups = sups;
  e.lo = fit.lo;
  e.hi = fit.hi < 0 ? h_max - 1 : fit.hi;
  if (e.lo < -1 || e.hi > h_max || e.hi - e.lo + 1 < 3)
    throw std::invalid_argument("besov_estimate: fit range needs at least 3 "
                                "shells inside [-1, h_max]");
  for (int h = e.lo; h <= e.hi; ++h)
    if (sups.at(h + 1) < 0)
      throw std::invalid_argument("besov_estimate: shell not computed");
  if (ref < 0)
    for (double s : sups)
      ref = std::max(ref, s);
  int n = e.hi - e.lo + 1;
  std::vector<char> zero(n);
  for (int k = 0; k < n; ++k)
    zero[k] = sups[e.lo + k + 1] <= opt.zero_tol * ref || ref <= 0;
  for (int k = 0; k + 1 < n; ++k)
    if (zero[k] && zero[k + 1]) {
      e.beyond = true;
      e.note = "consecutive zero blocks";
      return e;
    }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> y(n);
  for (int k = 0; k < n; ++k) {
    double x = e.lo + k;
    y[k] = std::log2(zero[k] ? 1e-300 : sups[e.lo + k + 1]);
    sx += x;
    sy += y[k];
    sxx += x * x;
    sxy += x * y[k];
  }
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  double icpt = (sy - slope * sx) / n;
  double rss = 0;
  for (int k = 0; k < n; ++k) {
    double d = y[k] - (icpt + slope * (e.lo + k));
    rss += d * d;
  }
  e.slope = slope;
  e.residual = std::sqrt(rss / n);
  double local = y[n - 2] - y[n - 1];
  if (-slope >= opt.resolvable || local >= opt.resolvable) {
    e.beyond = true;
    e.note = "decay faster than resolvable";
    return e;
  }
  e.index = -slope + opt.shift;
  return e;
}

BesovEstimate besov_estimate(const BlockSequence& bs, FitRange fit,
                             EstimatorOptions opt) {
  std::vector<double> s;
  for (const auto& b : bs.blocks)
    s.push_back(sup_norm(b));
  double ref = sup_norm(bs.sum());
  return besov_estimate(s, bs.sys->h_max(), fit, opt, ref);
}

BesovEstimate besov_estimate(const Field& u, const DyadicSystem& sys,
                             FitRange fit, EstimatorOptions opt) {
  auto s = block_sups(u, sys);
  return besov_estimate(s, sys.h_max(), fit, opt, sup_norm(u));
}

void to_json(nlohmann::json& j, const BesovEstimate& e) {
  j = {{"sups", e.sups},
       {"fit_range", {e.lo, e.hi}},
       {"fit_quality", e.residual},
       {"beyond_resolvable_scale", e.beyond}};
  if (e.index)
    j["index"] = *e.index;
  else
    j["index"] = nullptr;
  if (!e.note.empty())
    j["note"] = e.note;
}

// --- Bernstein and block derivative checks --------------------------------

double bernstein_ratio(const Field& u, std::span<const int> alpha, double R,
                       double tol) {
  const Grid& g = u.g();
  const auto& c = u.spectrum();
  double mx = 0, out = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    double a = std::abs(c[i]);
    mx = std::max(mx, a);
    if (g.mnorm()[i] > R * (1 + 1e-12))
      out = std::max(out, a);
  }
  if (out > tol * std::max(mx, 1e-300))
    throw DataError("bernstein_ratio: spectrum leaves the ball B^M_R");
  double su = sup_norm(u);
  if (su == 0)
    return 0;
  double sd = sup_norm(derivative(u, alpha));
  return sd / (std::pow(R, g.weight().order(alpha)) * su);
}

static void enumerate(const WeightVector& w, double k, bool exact,
                      std::vector<int>& cur, int j,
                      std::vector<std::vector<int>>& out) {
  int L = 1;
  for (int v : w.m())
    L = std::lcm(L, v);
  if (j == w.dim()) {
    long num = 0;
    for (int i = 0; i < w.dim(); ++i)
      num += static_cast<long>(cur[i]) * (L / w[i]);
    double kl = k * L;
    bool ok = exact ? std::abs(num - kl) < 1e-9 : num <= kl + 1e-9;
    if (ok)
      out.push_back(cur);
    return;
  }
  int top = static_cast<int>(std::floor(k * w[j] + 1e-9));
  for (int a = 0; a <= top; ++a) {
    cur[j] = a;
    enumerate(w, k, exact, cur, j + 1, out);
  }
  cur[j] = 0;
}

static void canonical_sort(std::vector<std::vector<int>>& v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    int da = std::accumulate(a.begin(), a.end(), 0);
    int db = std::accumulate(b.begin(), b.end(), 0);
    if (da != db)
      return da < db;
    return a > b;
  });
}

std::vector<std::vector<int>> multi_indices_of_order(const WeightVector& w,
                                                     double k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(w.dim());
  enumerate(w, k, true, cur, 0, out);
  canonical_sort(out);
  return out;
}

std::vector<std::vector<int>> multi_indices_up_to(const WeightVector& w,
                                                  double k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(w.dim());
  enumerate(w, k, false, cur, 0, out);
  canonical_sort(out);
  return out;
}

double block_derivative_equivalence(const Field& u_h, int h, int k) {
  auto set = multi_indices_of_order(u_h.g().weight(), k);
  if (set.empty())
    throw std::invalid_argument("block_derivative_equivalence: empty index set");
  double su = sup_norm(u_h);
  if (su == 0)
    throw std::domain_error("block_derivative_equivalence: zero block");
  double s = 0;
  for (const auto& a : set)
    s += sup_norm(derivative(u_h, a));
  return s / (std::exp2(double(h) * k) * su);
}

// --- synthesis, multipliers, composition ----------------------------------

Synthesis synthesize_from_blocks(const std::vector<Field>& blocks, double r,
                                 BlockSupport support, const SystemPtr& sys,
                                 double tol) {
  if (blocks.empty() || static_cast<int>(blocks.size()) > sys->shells())
    throw std::invalid_argument("synthesize: block count out of range");
  if (support == BlockSupport::Ball && r <= 0)
    throw std::invalid_argument("synthesize: r>0 required for ball supports");
  const Grid& g = *sys->grid();
  Synthesis out;
  out.u = Field(sys->grid());
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    int h = static_cast<int>(k) - 1;
    const auto& c = blocks[k].spectrum();
    auto [lo, hi] = sys->crown(h);
    if (support == BlockSupport::Ball)
      lo = 0;
    double mx = 0, bad = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      double a = std::abs(c[i]);
      mx = std::max(mx, a);
      double rr = g.mnorm()[i];
      if (rr < lo * (1 - 1e-12) || rr > hi * (1 + 1e-12))
        bad = std::max(bad, a);
    }
    if (bad > tol * std::max(mx, 1e-300))
      throw DataError("synthesize: block " + std::to_string(h) +
                      " spectrum leaves its support");
    out.u = out.u + blocks[k];
    out.block_norm =
        std::max(out.block_norm, std::exp2(r * h) * sup_norm(blocks[k]));
  }
  auto est = block_sups(out.u, *sys);
  BesovEstimate e;
  e.sups = est;
  out.field_norm = e.norm_at(r);
  out.constant = support == BlockSupport::Crown
                     ? kSynthesisConstant
                     : kSynthesisConstant / (1 - std::exp2(-r));
  out.certified = out.field_norm <= out.constant * out.block_norm;
  return out;
}

Field meyer_apply(const std::vector<Field>& mult, const Field& u,
                  const DyadicSystem& sys) {
  if (static_cast<int>(mult.size()) != sys.shells())
    throw std::invalid_argument("meyer_apply: one multiplier per shell required");
  const auto& spec = u.spectrum();
  Field out(u.grid());
  for (int h = -1; h <= sys.h_max(); ++h) {
    const auto& p = sys.phi(h);
    std::vector<cplx> c(spec.size());
    for (std::size_t i = 0; i < c.size(); ++i)
      c[i] = spec[i] * p[i];
    out = out + mult[h + 1] * Field::from_spectrum(u.grid(), std::move(c));
  }
  return out;
}

Field compose_smooth(const std::function<cplx(cplx)>& F, const Field& u,
                     ComposeOptions opt) {
  cplx f0 = F(0.0);
  if (std::abs(f0) > 1e-14 && !opt.subtract_f0)
    throw std::invalid_argument("compose_smooth: F(0) must vanish");
  return map(u, [&](cplx v) { return F(v) - f0; });
}

} // namespace qhm
