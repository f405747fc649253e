#include "qhm/nonlinear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "qhm/parallel.hpp"

namespace qhm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const cplx kI(0, 1);

MultiIndex unit(int n, int j) {
  MultiIndex e(n, 0);
  e[j] = 1;
  return e;
}

// fn(x, zeta) at every sample, zeta read from the jet fields
Field pointwise(const GridPtr& g, const std::vector<Field>& jf, const ZetaFn& fn) {
  std::vector<cplx> out(g->size());
  int d = g->dim();
  parallel_for(g->size(), [&](std::size_t i) {
    std::vector<double> x(d);
    for (int j = 0; j < d; ++j)
      x[j] = g->x(i, j);
    std::vector<cplx> z(jf.size());
    for (std::size_t k = 0; k < jf.size(); ++k)
      z[k] = jf[k][i];
    out[i] = fn(x, z);
  });
  return Field(g, std::move(out));
}

void check_grid(const CoefficientBundle& b, const Field& u) {
  if (!(u.g().weight() == b.weight))
    throw std::invalid_argument("bundle " + b.id + ": weight does not match the field grid");
}

double probe_index(const Field& v, const NonlinearConfig& cfg, const DyadicSystem& sys) {
  return probe(v, cfg.probe, sys).index_or_inf();
}

nlohmann::json num(double v) {
  if (std::isfinite(v))
    return v;
  return nullptr;
}

nlohmann::json opt(const std::optional<double>& v) {
  return v ? num(*v) : nlohmann::json(nullptr);
}

} // namespace

std::vector<MultiIndex> jet_indices(const WeightVector& w, double order) {
  return multi_indices_up_to(w, order);
}

std::vector<Field> jet(const Field& u, double order) {
  std::vector<Field> out;
  for (const auto& b : jet_indices(u.g().weight(), order))
    out.push_back(derivative(u, b));
  return out;
}

int CoefficientBundle::slot(std::span<const int> beta) const {
  for (std::size_t k = 0; k < zeta.size(); ++k)
    if (std::equal(zeta[k].begin(), zeta[k].end(), beta.begin(), beta.end()))
      return static_cast<int>(k);
  return -1;
}

CoefficientBundle quasilinear_bundle(std::string id, WeightVector w, int m,
                                     std::vector<MultiIndex> alpha,
                                     std::vector<ZetaFn> a) {
  if (m < 1)
    throw std::invalid_argument("quasilinear bundle: order m must be positive");
  if (alpha.size() != a.size())
    throw std::invalid_argument("quasilinear bundle: one coefficient per multi-index");
  for (const auto& al : alpha)
    if (static_cast<int>(al.size()) != w.dim() || w.order(al) > m + 1e-12)
      throw std::invalid_argument("quasilinear bundle: alpha outside alpha.1/M <= m");
  CoefficientBundle b;
  b.kind = CoefficientBundle::Kind::QuasiLinear;
  b.id = std::move(id);
  b.m = m;
  b.zeta = jet_indices(w, m - 1);
  b.weight = std::move(w);
  b.alpha = std::move(alpha);
  b.a = std::move(a);
  return b;
}

CoefficientBundle fully_nonlinear_bundle(std::string id, WeightVector w, int m, ZetaFn F,
                                         std::vector<ZetaFn> dF_dzeta,
                                         std::vector<ZetaFn> dF_dx) {
  if (m < 1)
    throw std::invalid_argument("nonlinear bundle: order m must be positive");
  CoefficientBundle b;
  b.kind = CoefficientBundle::Kind::FullyNonlinear;
  b.id = std::move(id);
  b.m = m;
  b.zeta = jet_indices(w, m);
  if (!dF_dzeta.empty() && dF_dzeta.size() != b.zeta.size())
    throw std::invalid_argument("nonlinear bundle: one zeta partial per jet entry");
  if (!dF_dx.empty() && static_cast<int>(dF_dx.size()) != w.dim())
    throw std::invalid_argument("nonlinear bundle: one x partial per axis");
  b.weight = std::move(w);
  b.F = std::move(F);
  b.dF_dzeta = std::move(dF_dzeta);
  b.dF_dx = std::move(dF_dx);
  return b;
}

static cplx fd_zeta(const ZetaFn& F, int k, std::span<const double> x, Zeta zeta) {
  std::vector<cplx> z(zeta.begin(), zeta.end());
  double h = 1e-6 * (1 + std::abs(zeta[k]));
  auto diff = [&](cplx step) {
    z[k] = zeta[k] + step;
    cplx p = F(x, z);
    z[k] = zeta[k] - step;
    cplx q = F(x, z);
    z[k] = zeta[k];
    return (p - q) / (2 * h);
  };
  return 0.5 * (diff(h) - kI * diff(kI * h));
}

static cplx fd_x(const ZetaFn& F, int j, std::span<const double> x, Zeta zeta) {
  std::vector<double> y(x.begin(), x.end());
  double h = 1e-6 * (1 + std::abs(x[j]));
  y[j] = x[j] + h;
  cplx p = F(y, zeta);
  y[j] = x[j] - h;
  cplx q = F(y, zeta);
  return (p - q) / (2 * h);
}

cplx d_zeta(const CoefficientBundle& b, int k, std::span<const double> x, Zeta zeta) {
  if (b.kind != CoefficientBundle::Kind::FullyNonlinear)
    throw std::invalid_argument("d_zeta: fully nonlinear bundle required");
  if (!b.dF_dzeta.empty())
    return b.dF_dzeta[k](x, zeta);
  if (!b.finite_differences)
    throw std::invalid_argument("bundle " + b.id + ": zeta partials unavailable");
  return fd_zeta(b.F, k, x, zeta);
}

cplx d_x(const CoefficientBundle& b, int j, std::span<const double> x, Zeta zeta) {
  if (b.kind != CoefficientBundle::Kind::FullyNonlinear)
    throw std::invalid_argument("d_x: fully nonlinear bundle required");
  if (!b.dF_dx.empty())
    return b.dF_dx[j](x, zeta);
  if (!b.finite_differences)
    throw std::invalid_argument("bundle " + b.id + ": x partials unavailable");
  return fd_x(b.F, j, x, zeta);
}

PartialsCheck check_partials(const CoefficientBundle& b, int samples, unsigned seed) {
  if (b.kind != CoefficientBundle::Kind::FullyNonlinear)
    throw std::invalid_argument("check_partials: fully nonlinear bundle required");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0, 2 * std::numbers::pi);
  std::normal_distribution<double> nz;
  PartialsCheck out;
  int d = b.weight.dim();
  for (int s = 0; s < samples; ++s) {
    std::vector<double> x(d);
    for (auto& v : x)
      v = ux(rng);
    std::vector<cplx> z(b.zeta.size());
    for (auto& v : z)
      v = {nz(rng), nz(rng)};
    for (std::size_t k = 0; k < z.size() && !b.dF_dzeta.empty(); ++k) {
      cplx a = b.dF_dzeta[k](x, z), f = fd_zeta(b.F, static_cast<int>(k), x, z);
      out.max_rel_zeta = std::max(out.max_rel_zeta, std::abs(a - f) / std::max(1.0, std::abs(a)));
    }
    for (int j = 0; j < d && !b.dF_dx.empty(); ++j) {
      cplx a = b.dF_dx[j](x, z), f = fd_x(b.F, j, x, z);
      out.max_rel_x = std::max(out.max_rel_x, std::abs(a - f) / std::max(1.0, std::abs(a)));
    }
    ++out.samples;
  }
  return out;
}

Field evaluate(const CoefficientBundle& b, const Field& u) {
  check_grid(b, u);
  const GridPtr& g = u.grid();
  if (b.kind == CoefficientBundle::Kind::FullyNonlinear)
    return band_limit(pointwise(g, jet(u, b.m), b.F));
  if (b.a.size() != b.alpha.size())
    throw std::invalid_argument("bundle " + b.id + ": arity mismatch");
  auto jf = jet(u, b.m - 1);
  Field acc(g);
  for (std::size_t k = 0; k < b.a.size(); ++k)
    acc = acc + pointwise(g, jf, b.a[k]) * derivative(u, b.alpha[k]);
  return band_limit(acc);
}

SymbolSpec linearize_quasilinear(const CoefficientBundle& b, const Field& u) {
  if (b.kind != CoefficientBundle::Kind::QuasiLinear)
    throw std::invalid_argument("linearize_quasilinear: quasi-linear bundle required");
  check_grid(b, u);
  if (b.a.size() != b.alpha.size())
    throw std::invalid_argument("bundle " + b.id + ": arity mismatch");
  auto jf = jet(u, b.m - 1);
  std::vector<DiffTerm> terms;
  for (std::size_t k = 0; k < b.a.size(); ++k)
    terms.push_back(term(pointwise(u.grid(), jf, b.a[k]), b.alpha[k]));
  auto s = SymbolSpec::diffpoly(std::move(terms));
  s.declared_order = b.m;
  return s;
}

LinearizedEquation linearize_fully_nonlinear(const CoefficientBundle& b, const Field& u,
                                             const Field& f, int j) {
  if (b.kind != CoefficientBundle::Kind::FullyNonlinear)
    throw std::invalid_argument("linearize_fully_nonlinear: fully nonlinear bundle required");
  check_grid(b, u);
  int d = b.weight.dim();
  if (j < 0 || j >= d)
    throw std::invalid_argument("linearize_fully_nonlinear: axis out of range");
  const GridPtr& g = u.grid();
  auto jf = jet(u, b.m);
  std::vector<DiffTerm> terms;
  for (std::size_t k = 0; k < b.zeta.size(); ++k) {
    Field c = pointwise(g, jf, [&](std::span<const double> x, Zeta z) {
      return d_zeta(b, static_cast<int>(k), x, z);
    });
    if (sup_norm(c) == 0)
      continue;
    terms.push_back(term(std::move(c), b.zeta[k]));
  }
  LinearizedEquation out;
  out.op = SymbolSpec::diffpoly(std::move(terms));
  out.op.declared_order = b.m;
  auto e = unit(d, j);
  out.du = kI * derivative(u, e);
  Field fx = pointwise(g, jf, [&](std::span<const double> x, Zeta z) { return d_x(b, j, x, z); });
  out.rhs = band_limit(kI * derivative(f, e) - fx);
  Field lhs = quantize(out.op, out.du);
  double scale = std::max({sup_norm(lhs), sup_norm(out.rhs), 1e-300});
  out.defect = sup_norm(lhs - out.rhs) / scale;
  return out;
}

SymbolSpec principal_part(const SymbolSpec& s, const WeightVector& w, double order) {
  if (s.kind != SymbolSpec::Kind::DiffPoly)
    throw std::invalid_argument("principal_part: DiffPoly symbol required");
  std::vector<DiffTerm> top;
  for (const auto& t : s.terms)
    if (std::abs(w.order(t.alpha) - order) < 1e-12)
      top.push_back(t);
  auto p = SymbolSpec::diffpoly(std::move(top));
  p.declared_order = order;
  return p;
}

NonlinearConfig case_config(const ManufacturedCase& c) {
  const WeightVector& w = c.bundle.weight;
  std::vector<double> kp, kb;
  for (int j = 0; j < w.dim(); ++j) {
    kp.push_back(5 * std::pow(0.1, w[j] - 1));
    kb.push_back(std::pow(0.25, w[j] - 1));
  }
  NonlinearConfig cfg;
  cfg.probe.window = von_mises(c.x0, kp);
  cfg.probe.sector = make_sector(w, c.theta0, 0.5, 4);
  cfg.probe.lift = 4;
  cfg.parametrix.window = von_mises(c.x0, kb);
  cfg.parametrix.sector = cfg.probe.sector;
  cfg.delta = c.delta;
  cfg.s = c.s;
  return cfg;
}

QuasilinearReport verify_quasilinear(const ManufacturedCase& c, const NonlinearConfig& cfg,
                                     const SystemPtr& sys) {
  const CoefficientBundle& b = c.bundle;
  if (b.kind != CoefficientBundle::Kind::QuasiLinear)
    throw std::invalid_argument("verify_quasilinear: quasi-linear case required");
  const WeightVector& w = b.weight;
  QuasilinearReport rep;
  rep.case_id = c.id;
  rep.m = b.m;
  rep.delta = cfg.delta;
  rep.s = cfg.s;
  auto fail = [&](std::string s) { rep.hypothesis_failures.push_back(std::move(s)); };

  SymbolSpec A = linearize_quasilinear(b, c.u);
  rep.r_measured = coefficient_besov(A, *sys).r;
  rep.global_u = besov_estimate(c.u, *sys).index_or_inf();
  rep.jet_index = kInf;
  for (const auto& v : jet(c.u, b.m - 1))
    rep.jet_index = std::min(rep.jet_index, besov_estimate(v, *sys).index_or_inf());
  // the coefficients lie in B^r for every r up to the measured index; u in
  // B^{r+m-1} caps the usable r
  double rm = rep.r_measured ? *rep.r_measured : kInf;
  rep.r = std::min(rm, rep.global_u - b.m + 1);
  if (rep.r < rm)
    rep.notes.push_back("r limited by the global index of u (u in B^{r+m-1})");
  rep.sigma = std::max((cfg.delta - 1) * rep.r + b.m, rep.r + b.m - 1);
  rep.reduced = rep.r * cfg.delta >= 1;
  if (rep.reduced)
    rep.notes.push_back("r delta >= 1: B^{r+m-1} and B^{s-delta r} reduce to B^{r+m-1}");

  if (!(rep.r > 0))
    fail("coefficient index r must be positive");
  if (!(cfg.delta > 0 && cfg.delta < 1.0 / w.m_star()))
    fail("delta must lie in (0, 1/m*)");
  if (!(rep.sigma < cfg.s && cfg.s <= rep.r + b.m))
    fail("s outside (sigma, r + m]");
  if (!rep.reduced && rep.global_u < cfg.s - cfg.delta * rep.r - cfg.tolerance)
    fail("global index of u below s - delta r");
  rep.principal = elliptic_min(principal_part(A, w, b.m), c.u.grid(), cfg.parametrix.region,
                               cfg.probe.sector, cfg.parametrix.rho0,
                               cfg.parametrix.threshold);
  if (!rep.principal.pass)
    fail("principal symbol not elliptic at (x0, theta0)");

  BootstrapConfig bc;
  bc.probe = cfg.probe;
  bc.parametrix = cfg.parametrix;
  bc.delta = cfg.delta;
  bc.s = cfg.s;
  bc.tolerance = cfg.tolerance;
  bc.coefficient_index = rep.r;
  rep.bootstrap = bootstrap_check(A, c.u, c.f, bc, sys);
  rep.probe_u = rep.bootstrap.probe_u;
  rep.probe_f = rep.bootstrap.probe_f;
  if (rep.probe_f < cfg.s - b.m - cfg.tolerance)
    fail("probe(f) below s - m");
  rep.pass = rep.probe_u >= cfg.s - cfg.tolerance;
  return rep;
}

FullyNonlinearReport verify_fully_nonlinear(const ManufacturedCase& c,
                                            const NonlinearConfig& cfg,
                                            const SystemPtr& sys) {
  const CoefficientBundle& b = c.bundle;
  if (b.kind != CoefficientBundle::Kind::FullyNonlinear)
    throw std::invalid_argument("verify_fully_nonlinear: fully nonlinear case required");
  const WeightVector& w = b.weight;
  const int d = w.dim();
  FullyNonlinearReport rep;
  rep.case_id = c.id;
  rep.m = b.m;
  rep.delta = cfg.delta;
  auto fail = [&](std::string s) { rep.hypothesis_failures.push_back(std::move(s)); };

  std::vector<LinearizedEquation> lin;
  for (int j = 0; j < d; ++j)
    lin.push_back(linearize_fully_nonlinear(b, c.u, c.f, j));
  rep.r_measured = coefficient_besov(lin[0].op, *sys).r;
  rep.global_u = besov_estimate(c.u, *sys).index_or_inf();
  double rm = rep.r_measured ? *rep.r_measured : kInf;
  rep.r = std::min(rm, rep.global_u - b.m);
  if (rep.r < rm)
    rep.notes.push_back("r limited by the global index of u (u in B^{r+m})");
  rep.reduced = rep.r * cfg.delta >= 1;
  if (rep.reduced)
    rep.notes.push_back("r delta >= 1: d_j u in B^{r+m-delta r} follows from u in B^{r+m}");
  if (!(rep.r > 0))
    fail("coefficient index r must be positive");
  if (!(cfg.delta > 0 && cfg.delta < 1.0 / w.m_star()))
    fail("delta must lie in (0, 1/m*)");
  rep.principal = elliptic_min(principal_part(lin[0].op, w, b.m), c.u.grid(),
                               cfg.parametrix.region, cfg.probe.sector,
                               cfg.parametrix.rho0, cfg.parametrix.threshold);
  if (!rep.principal.pass)
    fail("linearized principal symbol not elliptic at (x0, theta0)");

  const double s = rep.r + b.m;
  bool all = true;
  for (int j = 0; j < d; ++j) {
    DerivativeCheck dc;
    dc.axis = j;
    dc.defect = lin[j].defect;
    dc.global_du = besov_estimate(lin[j].du, *sys).index_or_inf();
    dc.probe_du = probe_index(lin[j].du, cfg, *sys);
    Field df = cplx(0, 1) * derivative(c.f, unit(d, j));
    dc.probe_df = probe_index(df, cfg, *sys);
    std::string ax = std::to_string(j + 1);
    if (!rep.reduced && dc.global_du < s - cfg.delta * rep.r - cfg.tolerance)
      fail("d_" + ax + " u below B^{r+m-delta r}");
    if (dc.probe_df < rep.r - cfg.tolerance)
      fail("d_" + ax + " f below mcl B^r at (x0, theta0)");
    BootstrapConfig bc;
    bc.probe = cfg.probe;
    bc.parametrix = cfg.parametrix;
    bc.delta = cfg.delta;
    bc.s = s;
    bc.tolerance = cfg.tolerance;
    bc.coefficient_index = rep.r;
    dc.bootstrap = bootstrap_check(lin[j].op, lin[j].du, lin[j].rhs, bc, sys);
    dc.pass = dc.probe_du >= s - cfg.tolerance;
    all = all && dc.pass;
    rep.derivatives.push_back(std::move(dc));
  }

  std::vector<Field> partials;
  for (int j = 0; j < d; ++j)
    partials.push_back(derivative(c.u, unit(d, j)));
  auto gi = gain_identity(c.u, partials);
  double gain = 1.0 / w.m_star();
  rep.gain_defect = gi.defect;
  rep.probe_gain = probe_index(gi.value, cfg, *sys) + gain;
  rep.probe_u = probe_index(c.u, cfg, *sys);
  rep.target_u = s + gain;
  rep.pass = all && rep.probe_u >= rep.target_u - cfg.tolerance;
  return rep;
}

void to_json(nlohmann::json& j, const QuasilinearReport& r) {
  j = {{"case", r.case_id},
       {"r_measured", opt(r.r_measured)},
       {"r", num(r.r)},
       {"m", r.m},
       {"delta", r.delta},
       {"s", r.s},
       {"sigma", num(r.sigma)},
       {"global_u", num(r.global_u)},
       {"jet_index", num(r.jet_index)},
       {"probe_u", num(r.probe_u)},
       {"probe_f", num(r.probe_f)},
       {"reduced", r.reduced},
       {"notes", r.notes},
       {"hypothesis_failures", r.hypothesis_failures},
       {"principal_ellipticity", r.principal},
       {"bootstrap", r.bootstrap},
       {"pass", r.pass}};
}

void to_json(nlohmann::json& j, const FullyNonlinearReport& r) {
  auto ds = nlohmann::json::array();
  for (const auto& d : r.derivatives)
    ds.push_back({{"axis", d.axis + 1},
                  {"chain_rule_defect", d.defect},
                  {"global_du", num(d.global_du)},
                  {"probe_du", num(d.probe_du)},
                  {"probe_df", num(d.probe_df)},
                  {"bootstrap", d.bootstrap},
                  {"pass", d.pass}});
  j = {{"case", r.case_id},
       {"r_measured", opt(r.r_measured)},
       {"r", num(r.r)},
       {"m", r.m},
       {"delta", r.delta},
       {"global_u", num(r.global_u)},
       {"probe_u", num(r.probe_u)},
       {"probe_gain_identity", num(r.probe_gain)},
       {"gain_identity_defect", r.gain_defect},
       {"target_u", num(r.target_u)},
       {"reduced", r.reduced},
       {"notes", r.notes},
       {"hypothesis_failures", r.hypothesis_failures},
       {"principal_ellipticity", r.principal},
       {"derivatives", ds},
       {"pass", r.pass}};
}

} // namespace qhm
