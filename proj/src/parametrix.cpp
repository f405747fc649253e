#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qhm/microlocal.hpp"
#include "qhm/parallel.hpp"

namespace qhm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// a(ix, k) for separable or dense grid symbols
struct SymbolTable {
  const GridSymbol* a;
  std::vector<std::vector<cplx>> lat;
  explicit SymbolTable(const GridSymbol& s) : a(&s) {
    if (!s.is_dense()) {
      lat.resize(s.terms().size());
      for (std::size_t r = 0; r < lat.size(); ++r)
        lat[r] = s.terms()[r].lattice(*s.grid());
    }
  }
  cplx at(std::size_t ix, std::size_t k) const {
    if (a->is_dense())
      return a->at(ix, k);
    cplx s = 0;
    for (std::size_t r = 0; r < lat.size(); ++r)
      if (lat[r][k] != 0.0)
        s += a->terms()[r].fx(ix) * lat[r][k];
    return s;
  }
};

// axes along which every x-factor of a is constant
std::vector<bool> constant_axes(const GridSymbol& a) {
  const Grid& g = *a.grid();
  int d = g.dim();
  std::vector<bool> out(d, true);
  auto varies = [&](const std::function<cplx(std::size_t)>& f, int j) {
    std::vector<int> k(d);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g.coord(i, j) == 0)
        continue;
      for (int q = 0; q < d; ++q)
        k[q] = g.coord(i, q);
      k[j] = 0;
      std::size_t base = 0;
      for (int q = 0; q < d; ++q)
        base = base * g.shape()[q] + k[q];
      cplx x = f(i), y = f(base);
      if (std::abs(x - y) > 1e-14 * std::max(1.0, std::abs(y)))
        return true;
    }
    return false;
  };
  for (int j = 0; j < d; ++j) {
    if (a.is_dense()) {
      for (std::size_t k = 0; k < g.size() && out[j]; ++k)
        if (varies([&](std::size_t ix) { return a.at(ix, k); }, j))
          out[j] = false;
    } else {
      for (const auto& t : a.terms())
        if (t.f && varies([&](std::size_t ix) { return (*t.f)[ix]; }, j)) {
          out[j] = false;
          break;
        }
    }
  }
  return out;
}

std::size_t index_at(const Grid& g, std::span<const double> x) {
  std::size_t i = 0;
  for (int j = 0; j < g.dim(); ++j) {
    int N = g.shape()[j];
    long k = std::lround(x[j] * N / (2 * std::numbers::pi));
    k %= N;
    if (k < 0)
      k += N;
    i = i * N + static_cast<std::size_t>(k);
  }
  return i;
}

cplx clamped_inverse(cplx a, double floor) {
  double m = std::abs(a);
  if (m >= floor)
    return 1.0 / a;
  if (m == 0)
    return 1.0 / floor;
  return 1.0 / (a * (floor / m));
}

} // namespace

EllipticityReport parametrix_ellipticity(const GridSymbol& a, double m,
                                         const ParametrixConfig& cfg) {
  // psi is supported in the doubled sector above eps0/2
  MConicSector support = cfg.sector;
  support.radius *= 2;
  return elliptic_min(a, m, cfg.region, support, cfg.rho0, cfg.threshold);
}

Parametrix::Parametrix(GridSymbol a, double m, ParametrixConfig cfg, SystemPtr sys)
    : a_(std::move(a)), m_(m), cfg_(std::move(cfg)), sys_(std::move(sys)) {
  if (cfg_.order < 0 || cfg_.order > 2)
    throw std::invalid_argument("parametrix: Neumann order must be 0, 1 or 2");
  const GridPtr& gp = a_.grid();
  const Grid& g = *gp;
  const WeightVector& w = g.weight();
  phi_ = window_field(gp, cfg_.window);
  psi_ = microlocal_cutoff(cfg_.sector, g);
  ell_ = parametrix_ellipticity(a_, m_, cfg_);
  if (!ell_.pass)
    throw EllipticityError("parametrix: symbol is not elliptic on the sector (c0 = " +
                           std::to_string(ell_.c0) + ")");
  const double c0 = ell_.c0;
  std::vector<double> floor(g.size());
  for (std::size_t k = 0; k < g.size(); ++k)
    floor[k] = 0.5 * c0 * std::pow(m_bracket(w, g.xi(k)), m_);

  // rank one a = f(x) g(xi) with |f g| above the clamp: b0 is separable
  if (!cfg_.force_interp && !a_.is_dense() && a_.terms().size() == 1) {
    const SepTerm& t = a_.terms()[0];
    auto lat = t.lattice(g);
    double fmin = kInf;
    for (std::size_t ix = 0; ix < g.size(); ++ix)
      fmin = std::min(fmin, std::abs(t.fx(ix)));
    bool ok = fmin > 0;
    for (std::size_t k = 0; ok && k < g.size(); ++k)
      if (psi_[k] != 0 && fmin * std::abs(lat[k]) < floor[k])
        ok = false;
    if (ok) {
      std::vector<cplx> xi(g.size());
      for (std::size_t k = 0; k < g.size(); ++k)
        if (psi_[k] != 0)
          xi[k] = psi_[k] / lat[k];
      std::vector<cplx> x(g.size());
      for (std::size_t ix = 0; ix < g.size(); ++ix)
        x[ix] = phi_[ix] / t.fx(ix);
      sep_b0_.emplace(Field(gp, std::move(x)), std::move(xi));
      return;
    }
  }

  auto table = std::make_shared<SymbolTable>(a_);
  auto psi = std::make_shared<std::vector<double>>(psi_);
  auto fl = std::make_shared<std::vector<double>>(std::move(floor));
  GridPtr grid = gp;
  interp_.prefactor = phi_;
  interp_.b = [table, psi, fl, grid](std::span<const double> x,
                                     std::span<const double> xi) -> cplx {
    std::vector<int> k(xi.size());
    for (std::size_t j = 0; j < xi.size(); ++j)
      k[j] = static_cast<int>(std::lround(xi[j]));
    std::size_t ik = grid->index_of_freq(k);
    double p = (*psi)[ik];
    if (p == 0)
      return 0.0;
    return p * clamped_inverse(table->at(index_at(*grid, x), ik), (*fl)[ik]);
  };
  interp_.nodes = detect_nodes(interp_, g, constant_axes(a_), cfg_.interp_tol);
  auto total = [&] {
    std::size_t t = 1;
    for (int n : interp_.nodes)
      t *= n;
    return t;
  };
  while (total() > std::max<std::size_t>(cfg_.max_nodes, 1)) {
    auto it = std::max_element(interp_.nodes.begin(), interp_.nodes.end());
    *it = *it > 4 ? *it / 2 : 1;
    capped_ = true;
  }
  nodes_ = interp_.nodes;
}

Field Parametrix::apply_a(const Field& u) const { return quantize(a_, u); }

Field Parametrix::apply_b0(const Field& u) const {
  if (sep_b0_)
    return band_limit(sep_b0_->first * apply_multiplier(band_limit(u), sep_b0_->second));
  return quantize_interp(interp_, u);
}

Field Parametrix::apply_p(const Field& u) const {
  return band_limit(phi_ * apply_multiplier(u, psi_));
}

Field Parametrix::error(const Field& u) const {
  return apply_a(apply_b0(u)) - apply_p(u);
}

Field Parametrix::apply(const Field& u, int J) const {
  if (J < 0)
    J = cfg_.order;
  if (J > 2)
    throw std::invalid_argument("parametrix: Neumann order must be 0, 1 or 2");
  // B_J u = B0 sum_{j<=J} (-E)^j u
  Field acc = u, term = u;
  for (int j = 1; j <= J; ++j) {
    term = -1.0 * error(term);
    acc = acc + term;
  }
  return apply_b0(acc);
}

Field Parametrix::residual(const Field& u, int J) const {
  return apply_a(apply(u, J)) - band_limit(apply_multiplier(phi_ * u, psi_));
}

ResidualReport residual_order(const Parametrix& p, const std::vector<Field>& battery,
                              int J) {
  if (battery.empty())
    throw std::invalid_argument("residual_order: empty battery");
  ResidualReport rep;
  double sum = 0;
  int finite = 0;
  for (const auto& u : battery) {
    const auto& sys = *build_system(make_cutoff(2.0), u.grid());
    double iu = besov_estimate(u, sys).index_or_inf();
    Field r = p.residual(u, J);
    // zero blocks are judged against the input scale: an exact inverse leaves
    // only rounding behind
    auto sups = block_sups(r, sys);
    double ir = besov_estimate(sups, sys.h_max(), {}, {}, sup_norm(u)).index_or_inf();
    rep.field_index.push_back(iu);
    rep.residual_index.push_back(ir);
    double gain = ir - iu;
    rep.gains.push_back(gain);
    if (std::isfinite(gain)) {
      sum += gain;
      ++finite;
    }
  }
  rep.sentinel = finite == 0;
  rep.mean_gain = finite ? sum / finite : kInf;
  return rep;
}

BootstrapReport bootstrap_check(const SymbolSpec& A, const Field& u, const Field& f,
                                const BootstrapConfig& cfg, const SystemPtr& sys) {
  if (A.kind != SymbolSpec::Kind::DiffPoly)
    throw std::invalid_argument("bootstrap_check: DiffPoly operator required");
  const GridPtr& gp = u.grid();
  const WeightVector& w = gp->weight();
  BootstrapReport rep;
  rep.m = A.declared_order ? *A.declared_order : quasi_order(A, w);
  rep.delta = cfg.delta;
  rep.s = cfg.s;
  rep.tolerance = cfg.tolerance;
  auto coef = coefficient_besov(A, *sys);
  rep.r_measured = coef.r;
  rep.r = cfg.coefficient_index ? cfg.coefficient_index : coef.r;
  double r = rep.r ? *rep.r : kInf;
  auto fail = [&](std::string s) { rep.hypothesis_failures.push_back(std::move(s)); };

  if (!(r > 0))
    fail("coefficient index r must be positive");
  if (!(cfg.delta > 0 && cfg.delta < 1.0 / w.m_star()))
    fail("delta must lie in (0, 1/m*)");
  if (std::isfinite(r) && !((cfg.delta - 1) * r + rep.m < cfg.s && cfg.s <= r + rep.m))
    fail("s outside ((delta-1)r + m, r + m]");
  auto pf = probe(f, cfg.probe, *sys);
  rep.probe_f = pf.index_or_inf();
  if (rep.probe_f < cfg.s - rep.m - cfg.tolerance)
    fail("probe(f) below s - m");
  rep.global_u = besov_estimate(u, *sys).index_or_inf();
  if (std::isfinite(r) && rep.global_u < cfg.s - cfg.delta * r - cfg.tolerance)
    fail("global index of u below s - delta r");

  rep.probe_u = probe(u, cfg.probe, *sys).index_or_inf();
  rep.expected = std::min(rep.probe_f + rep.m, r + rep.m);
  rep.pass = rep.probe_u >= cfg.s - cfg.tolerance;

  auto split = split_sharp_natural(A, cfg.delta, sys);
  rep.ellipticity = parametrix_ellipticity(split.sharp, rep.m, cfg.parametrix);
  if (!rep.ellipticity.pass) {
    fail("not elliptic on the parametrix sector");
    rep.term_bf = rep.term_natural = rep.term_remainder = kNaN;
    rep.identity_defect = kNaN;
    return rep;
  }
  Parametrix B(split.sharp, rep.m, cfg.parametrix, sys);
  rep.nodes = B.nodes();
  rep.nodes_capped = B.nodes_capped();

  // psi(D)(phi u) = B f - B A_natural u - R u,  R = Op(A_sharp) B - psi(D) phi
  Field bf = B.apply(f);
  Field bn = B.apply(quantize(split.natural, u));
  Field target = band_limit(apply_multiplier(B.window() * u, B.psi()));
  Field ru = bf - bn - target;  // equals B A_sharp u - target up to rounding
  Field ru_direct = B.apply(quantize(split.sharp, u)) - target;
  rep.identity_defect = sup_norm(ru - ru_direct) / std::max(sup_norm(target), 1e-300);

  rep.term_bf = probe(bf, cfg.probe, *sys).index_or_inf();
  rep.term_natural = probe(bn, cfg.probe, *sys).index_or_inf();
  rep.term_remainder = probe(ru_direct, cfg.probe, *sys).index_or_inf();
  return rep;
}

static nlohmann::json num(double v) {
  if (std::isfinite(v))
    return v;
  return nullptr;
}

void to_json(nlohmann::json& j, const BootstrapReport& r) {
  j = {{"m", r.m},
       {"delta", r.delta},
       {"s", r.s},
       {"r", r.r ? nlohmann::json(*r.r) : nlohmann::json(nullptr)},
       {"r_measured", r.r_measured ? nlohmann::json(*r.r_measured) : nlohmann::json(nullptr)},
       {"probe_u", num(r.probe_u)},
       {"probe_f", num(r.probe_f)},
       {"global_u", num(r.global_u)},
       {"terms",
        {{"B_f", num(r.term_bf)},
         {"B_natural_u", num(r.term_natural)},
         {"remainder_u", num(r.term_remainder)}}},
       {"identity_defect", num(r.identity_defect)},
       {"interp_nodes", r.nodes},
       {"interp_nodes_capped", r.nodes_capped},
       {"expected", num(r.expected)},
       {"hypothesis_failures", r.hypothesis_failures},
       {"ellipticity", r.ellipticity},
       {"tolerance", r.tolerance},
       {"pass", r.pass}};
}

void to_json(nlohmann::json& j, const ResidualReport& r) {
  auto arr = [](const std::vector<double>& v) {
    auto a = nlohmann::json::array();
    for (double x : v)
      a.push_back(num(x));
    return a;
  };
  j = {{"field_index", arr(r.field_index)},
       {"residual_index", arr(r.residual_index)},
       {"gains", arr(r.gains)},
       {"mean_gain", num(r.mean_gain)},
       {"beyond_resolvable_scale", r.sentinel}};
}

} // namespace qhm
