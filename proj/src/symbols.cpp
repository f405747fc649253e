#include "qhm/symbols.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "qhm/parallel.hpp"

namespace qhm {

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

double xi_pow(std::span<const double> xi, std::span<const int> alpha) {
  double p = 1;
  for (std::size_t j = 0; j < alpha.size(); ++j)
    if (alpha[j])
      p *= std::pow(xi[j], alpha[j]);
  return p;
}

std::vector<int> pad(std::vector<int> a, int n) {
  a.resize(n, 0);
  return a;
}

void check_grid(const Field& f, const Grid& g, const char* what) {
  if (!(f.g() == g))
    throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

// grid index of x, or throws when x is not a grid point
std::size_t grid_index(const Grid& g, std::span<const double> x) {
  std::size_t idx = 0;
  for (int j = 0; j < g.dim(); ++j) {
    double c = x[j] * g.shape()[j] / kTwoPi;
    double r = std::round(c);
    if (std::abs(c - r) > 1e-9)
      throw std::invalid_argument("symbol_eval: x is not a grid point");
    long k = static_cast<long>(r) % g.shape()[j];
    if (k < 0)
      k += g.shape()[j];
    idx = idx * g.shape()[j] + static_cast<std::size_t>(k);
  }
  return idx;
}

std::size_t lattice_index(const Grid& g, std::span<const double> xi) {
  std::vector<int> k(g.dim());
  for (int j = 0; j < g.dim(); ++j) {
    double r = std::round(xi[j]);
    if (std::abs(xi[j] - r) > 1e-9)
      throw std::invalid_argument("grid symbol: xi is not a lattice point");
    k[j] = static_cast<int>(r);
  }
  return g.index_of_freq(k);
}

// per-term lattices for fast repeated evaluation
struct LatticeForm {
  const std::vector<SepTerm>* terms;
  std::vector<std::vector<cplx>> lat;
  LatticeForm(const std::vector<SepTerm>& t, const Grid& g) : terms(&t) {
    lat.resize(t.size());
    parallel_for(t.size(), [&](std::size_t r) { lat[r] = t[r].lattice(g); });
  }
  cplx at(std::size_t ix, std::size_t ixi) const {
    cplx s = 0;
    for (std::size_t r = 0; r < lat.size(); ++r)
      if (lat[r][ixi] != 0.0)
        s += (*terms)[r].fx(ix) * lat[r][ixi];
    return s;
  }
};

std::vector<cplx> band_limited_spectrum(const Field& u) {
  const Grid& g = u.g();
  std::vector<cplx> c = u.spectrum();
  for (std::size_t i = 0; i < c.size(); ++i)
    if (!g.representable(i))
      c[i] = 0;
  return c;
}

Field finish(Field out, const QuantizeOptions& opt) {
  return opt.project ? band_limit(out) : out;
}

} // namespace

// --- terms and grid symbols ------------------------------------------------

cplx SepTerm::g(const WeightVector& w, std::span<const double> xi) const {
  cplx v = alpha.empty() ? 1.0 : xi_pow(xi, alpha);
  if (power != 0)
    v *= std::pow(m_bracket(w, xi), power);
  if (extra)
    v *= extra(xi);
  return v;
}

std::vector<cplx> SepTerm::lattice(const Grid& grid) const {
  std::vector<cplx> out(grid.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (grid.representable(i))
      out[i] = g(grid.weight(), grid.xi(i));
  return out;
}

GridSymbol GridSymbol::dense(GridPtr g, std::vector<cplx> values) {
  if (values.size() != g->size() * g->size())
    throw std::invalid_argument("grid symbol: expected N_x * N_xi samples");
  GridSymbol s;
  s.g_ = std::move(g);
  s.dense_ = std::move(values);
  return s;
}

GridSymbol GridSymbol::separable(GridPtr g, std::vector<SepTerm> terms) {
  for (const auto& t : terms)
    if (t.f)
      check_grid(*t.f, *g, "grid symbol");
  GridSymbol s;
  s.g_ = std::move(g);
  s.terms_ = std::move(terms);
  return s;
}

GridSymbol GridSymbol::sample(GridPtr g,
                              const std::function<cplx(std::size_t, std::size_t)>& a) {
  std::size_t n = g->size();
  std::vector<cplx> v(n * n);
  parallel_for(n, [&](std::size_t ix) {
    for (std::size_t k = 0; k < n; ++k)
      v[ix * n + k] = g->representable(k) ? a(ix, k) : 0.0;
  });
  return dense(std::move(g), std::move(v));
}

cplx GridSymbol::at(std::size_t ix, std::size_t ixi) const {
  if (is_dense())
    return dense_[ix * g_->size() + ixi];
  if (!g_->representable(ixi))
    return 0;
  cplx s = 0;
  Freq xi = g_->xi(ixi);
  for (const auto& t : terms_)
    s += t.fx(ix) * t.g(g_->weight(), xi);
  return s;
}

GridSymbol GridSymbol::to_dense() const {
  if (is_dense())
    return *this;
  LatticeForm lf(terms_, *g_);
  return sample(g_, [&](std::size_t ix, std::size_t k) { return lf.at(ix, k); });
}

// --- specs -----------------------------------------------------------------

bool DiffTerm::is_zero() const {
  if (coeff)
    return sup_norm(*coeff) == 0;
  return constant == 0.0;
}

SymbolSpec SymbolSpec::weight_power(double s) {
  SymbolSpec r;
  r.kind = Kind::WeightPower;
  r.power = s;
  return r;
}

SymbolSpec SymbolSpec::diffpoly(std::vector<DiffTerm> terms) {
  SymbolSpec r;
  r.kind = Kind::DiffPoly;
  r.terms = std::move(terms);
  return r;
}

SymbolSpec SymbolSpec::sum(std::vector<SymbolSpec> parts) {
  SymbolSpec r;
  r.kind = Kind::Sum;
  r.children = std::move(parts);
  return r;
}

SymbolSpec SymbolSpec::product(std::vector<SymbolSpec> parts) {
  SymbolSpec r;
  r.kind = Kind::Product;
  r.children = std::move(parts);
  return r;
}

SymbolSpec SymbolSpec::from_grid(GridSymbol g) {
  SymbolSpec r;
  r.kind = Kind::Grid;
  r.grid = std::make_shared<const GridSymbol>(std::move(g));
  return r;
}

DiffTerm term(cplx c, std::vector<int> alpha) {
  DiffTerm t;
  t.constant = c;
  t.alpha = std::move(alpha);
  return t;
}

DiffTerm term(Field coeff, std::vector<int> alpha) {
  DiffTerm t;
  t.coeff = std::move(coeff);
  t.alpha = std::move(alpha);
  return t;
}

cplx symbol_eval(const SymbolSpec& s, const WeightVector& w,
                 std::span<const double> x, std::span<const double> xi) {
  if (static_cast<int>(xi.size()) != w.dim())
    throw std::invalid_argument("symbol_eval: dimension mismatch");
  switch (s.kind) {
  case SymbolSpec::Kind::WeightPower:
    return std::pow(m_bracket(w, xi), s.power);
  case SymbolSpec::Kind::DiffPoly: {
    cplx v = 0;
    for (const auto& t : s.terms) {
      cplx c = t.constant;
      if (t.coeff)
        c = (*t.coeff)[grid_index(t.coeff->g(), x)];
      v += c * xi_pow(xi, pad(t.alpha, w.dim()));
    }
    return v;
  }
  case SymbolSpec::Kind::Sum: {
    cplx v = 0;
    for (const auto& c : s.children)
      v += symbol_eval(c, w, x, xi);
    return v;
  }
  case SymbolSpec::Kind::Product: {
    cplx v = 1;
    for (const auto& c : s.children)
      v *= symbol_eval(c, w, x, xi);
    return v;
  }
  case SymbolSpec::Kind::Grid: {
    const Grid& g = *s.grid->grid();
    return s.grid->at(grid_index(g, x), lattice_index(g, xi));
  }
  }
  return 0;
}

double quasi_order(const SymbolSpec& s, const WeightVector& w) {
  switch (s.kind) {
  case SymbolSpec::Kind::WeightPower:
    return s.power;
  case SymbolSpec::Kind::DiffPoly: {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& t : s.terms)
      if (!t.is_zero())
        m = std::max(m, w.order(pad(t.alpha, w.dim())));
    return m;
  }
  case SymbolSpec::Kind::Sum: {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& c : s.children)
      m = std::max(m, quasi_order(c, w));
    return m;
  }
  case SymbolSpec::Kind::Product: {
    double m = 0;
    for (const auto& c : s.children)
      m += quasi_order(c, w);
    return m;
  }
  case SymbolSpec::Kind::Grid:
    if (!s.declared_order)
      throw std::invalid_argument("quasi_order: grid symbol needs a declared order");
    return *s.declared_order;
  }
  return 0;
}

static SepTerm combine(const SepTerm& a, const SepTerm& b, int n) {
  SepTerm r;
  r.c = a.c * b.c;
  if (a.f && b.f)
    r.f = *a.f * *b.f;
  else if (a.f)
    r.f = a.f;
  else
    r.f = b.f;
  r.alpha = pad(a.alpha, n);
  auto bb = pad(b.alpha, n);
  for (int j = 0; j < n; ++j)
    r.alpha[j] += bb[j];
  r.power = a.power + b.power;
  if (a.extra && b.extra) {
    auto ea = a.extra, eb = b.extra;
    r.extra = [ea, eb](std::span<const double> xi) { return ea(xi) * eb(xi); };
  } else {
    r.extra = a.extra ? a.extra : b.extra;
  }
  return r;
}

std::optional<std::vector<SepTerm>> separable_form(const SymbolSpec& s,
                                                   const WeightVector& w) {
  std::vector<SepTerm> out;
  switch (s.kind) {
  case SymbolSpec::Kind::WeightPower: {
    SepTerm t;
    t.power = s.power;
    out.push_back(t);
    break;
  }
  case SymbolSpec::Kind::DiffPoly:
    for (const auto& d : s.terms) {
      if (d.is_zero())
        continue;
      SepTerm t;
      if (d.coeff)
        t.f = d.coeff;
      else
        t.c = d.constant;
      t.alpha = pad(d.alpha, w.dim());
      out.push_back(t);
    }
    break;
  case SymbolSpec::Kind::Sum:
    for (const auto& c : s.children) {
      auto p = separable_form(c, w);
      if (!p)
        return std::nullopt;
      out.insert(out.end(), p->begin(), p->end());
    }
    break;
  case SymbolSpec::Kind::Product: {
    out.push_back(SepTerm{});
    for (const auto& c : s.children) {
      auto p = separable_form(c, w);
      if (!p)
        return std::nullopt;
      std::vector<SepTerm> next;
      for (const auto& a : out)
        for (const auto& b : *p)
          next.push_back(combine(a, b, w.dim()));
      out = std::move(next);
    }
    break;
  }
  case SymbolSpec::Kind::Grid:
    if (s.grid->is_dense())
      return std::nullopt;
    out = s.grid->terms();
    break;
  }
  return out;
}

static cplx eval_index(const SymbolSpec& s, const Grid& g, std::size_t ix,
                       std::size_t ixi) {
  switch (s.kind) {
  case SymbolSpec::Kind::Sum: {
    cplx v = 0;
    for (const auto& c : s.children)
      v += eval_index(c, g, ix, ixi);
    return v;
  }
  case SymbolSpec::Kind::Product: {
    cplx v = 1;
    for (const auto& c : s.children)
      v *= eval_index(c, g, ix, ixi);
    return v;
  }
  case SymbolSpec::Kind::Grid:
    return s.grid->at(ix, ixi);
  default: {
    auto terms = *separable_form(s, g.weight());
    cplx v = 0;
    Freq xi = g.xi(ixi);
    for (const auto& t : terms)
      v += t.fx(ix) * t.g(g.weight(), xi);
    return v;
  }
  }
}

GridSymbol to_grid_symbol(const SymbolSpec& s, GridPtr g) {
  if (auto sep = separable_form(s, g->weight()))
    return GridSymbol::separable(g, std::move(*sep));
  return GridSymbol::sample(
      g, [&](std::size_t ix, std::size_t k) { return eval_index(s, *g, ix, k); });
}

// --- quantization ----------------------------------------------------------

Field quantize_separable(const std::vector<SepTerm>& terms, const Field& u,
                         QuantizeOptions opt) {
  const GridPtr& gp = u.grid();
  const Grid& g = *gp;
  auto spec = band_limited_spectrum(u);
  std::vector<Field> parts(terms.size());
  parallel_for(terms.size(), [&](std::size_t r) {
    const auto& t = terms[r];
    if (t.f)
      check_grid(*t.f, g, "quantize");
    auto lat = t.lattice(g);
    for (std::size_t i = 0; i < lat.size(); ++i)
      lat[i] *= spec[i];
    Field v = Field::from_spectrum(gp, std::move(lat));
    parts[r] = t.f ? (t.c * (*t.f * v)) : t.c * v;
  });
  Field out(gp);
  for (const auto& p : parts)
    out = out + p;
  return finish(std::move(out), opt);
}

Field quantize_direct(const GridSymbol& a, const Field& u, QuantizeOptions opt) {
  const Grid& g = u.g();
  if (!(g == *a.grid()))
    throw std::invalid_argument("quantize: grid mismatch");
  if (g.size() > opt.direct_limit)
    throw std::invalid_argument("quantize: direct sum disabled above the grid "
                                "size limit");
  std::size_t n = g.size();
  auto spec = band_limited_spectrum(u);
  std::vector<std::vector<cplx>> tw(g.dim());
  for (int j = 0; j < g.dim(); ++j) {
    int N = g.shape()[j];
    for (int k = 0; k < N; ++k)
      tw[j].push_back(std::polar(1.0, kTwoPi * k / N));
  }
  std::optional<LatticeForm> lf;
  if (!a.is_dense())
    lf.emplace(a.terms(), g);
  std::vector<cplx> out(n);
  parallel_for(n, [&](std::size_t ix) {
    // compensated sum keeps the direct path at the FFT path's accuracy
    cplx s = 0, comp = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (spec[k] == 0.0)
        continue;
      cplx e = 1;
      for (int j = 0; j < g.dim(); ++j) {
        int N = g.shape()[j];
        long p = (static_cast<long>(g.coord(ix, j)) * g.freq(k, j)) % N;
        e *= tw[j][p < 0 ? p + N : p];
      }
      cplx av = lf ? lf->at(ix, k) : a.values()[ix * n + k];
      cplx y = e * av * spec[k] - comp;
      cplx t = s + y;
      comp = (t - s) - y;
      s = t;
    }
    out[ix] = s;
  });
  return finish(Field(u.grid(), std::move(out)), opt);
}

Field quantize(const GridSymbol& a, const Field& u, QuantizeOptions opt) {
  if (!(u.g() == *a.grid()))
    throw std::invalid_argument("quantize: grid mismatch");
  if (a.is_dense())
    return quantize_direct(a, u, opt);
  return quantize_separable(a.terms(), u, opt);
}

Field quantize(const SymbolSpec& s, const Field& u, QuantizeOptions opt) {
  if (auto sep = separable_form(s, u.g().weight()))
    return quantize_separable(*sep, u, opt);
  return quantize_direct(to_grid_symbol(s, u.grid()), u, opt);
}

// periodic cardinal function of n equispaced nodes, n even or 1
static double cardinal(int n, double t) {
  if (n == 1)
    return 1;
  double s = std::sin(0.5 * t);
  if (std::abs(s) < 1e-14)
    return 1;
  return std::sin(0.5 * n * t) * std::cos(0.5 * t) / (n * s);
}

std::vector<int> detect_nodes(const InterpSymbol& s, const Grid& g,
                              std::vector<bool> constant_axes, double tol) {
  int d = g.dim();
  std::vector<int> nodes(d, 1);
  // deterministic frequency sample: every 97th representable lattice point
  std::vector<Freq> xis;
  for (std::size_t i = 0; i < g.size(); i += 97)
    if (g.representable(i))
      xis.push_back(g.xi(i));
  for (int j = 0; j < d; ++j) {
    if (j < static_cast<int>(constant_axes.size()) && constant_axes[j])
      continue;
    int N = g.shape()[j];
    int chosen = N;
    for (int n = 4; n <= N; n *= 2) {
      if (N % n)
        break;
      double top = 0, all = 0;
      std::vector<double> x(d, 0.0);
      for (double off : {0.0, 1.3, 2.9}) {
        for (const auto& xi : xis) {
          std::vector<cplx> v(n);
          for (int c = 0; c < n; ++c) {
            for (int q = 0; q < d; ++q)
              x[q] = q == j ? kTwoPi * c / n : off;
            v[c] = s.b(x, xi);
          }
          for (int k = 0; k <= n / 2; ++k) {
            cplx acc = 0;
            for (int c = 0; c < n; ++c)
              acc += v[c] * std::polar(1.0, -kTwoPi * k * c / n);
            double m = std::abs(acc) / n;
            all = std::max(all, m);
            if (k >= n / 4)
              top = std::max(top, m);
          }
        }
      }
      if (top <= tol * std::max(all, 1e-300)) {
        chosen = n;
        break;
      }
    }
    nodes[j] = chosen;
  }
  return nodes;
}

Field quantize_interp(const InterpSymbol& s, const Field& u, QuantizeOptions opt) {
  const GridPtr& gp = u.grid();
  const Grid& g = *gp;
  int d = g.dim();
  if (static_cast<int>(s.nodes.size()) != d)
    throw std::invalid_argument("quantize_interp: one node count per axis");
  std::size_t total = 1;
  for (int j = 0; j < d; ++j) {
    int n = s.nodes[j];
    if (n < 1 || g.shape()[j] % n || (n > 1 && n % 2))
      throw std::invalid_argument("quantize_interp: node count must be 1 or an "
                                  "even divisor of N_j");
    total *= n;
  }
  auto spec = band_limited_spectrum(u);
  std::vector<Freq> xis(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.representable(i))
      xis[i] = g.xi(i);
  // 1-D cardinal tables: card[j][c][k] for node c and fine index k
  std::vector<std::vector<std::vector<double>>> card(d);
  for (int j = 0; j < d; ++j) {
    int n = s.nodes[j], N = g.shape()[j];
    card[j].assign(n, std::vector<double>(N));
    for (int c = 0; c < n; ++c)
      for (int k = 0; k < N; ++k)
        card[j][c][k] = cardinal(n, kTwoPi * k / N - kTwoPi * c / n);
  }
  auto node_coord = [&](std::size_t c, std::vector<int>& cc) {
    for (int j = d - 1; j >= 0; --j) {
      cc[j] = static_cast<int>(c % s.nodes[j]);
      c /= s.nodes[j];
    }
  };
  // one node at a time: out += L_c * Op(b(x_c, .)) u, memory O(grid)
  std::vector<cplx> out(g.size());
  std::vector<cplx> col(g.size());
  std::vector<int> cc(d);
  std::vector<double> x(d);
  for (std::size_t c = 0; c < total; ++c) {
    node_coord(c, cc);
    for (int j = 0; j < d; ++j)
      x[j] = kTwoPi * cc[j] / s.nodes[j];
    parallel_for(g.size(), [&](std::size_t i) {
      col[i] = spec[i] != 0.0 ? s.b(x, xis[i]) * spec[i] : cplx(0);
    });
    auto v = inverse(g, col);
    parallel_for(g.size(), [&](std::size_t i) {
      double L = 1;
      for (int j = 0; j < d; ++j)
        L *= card[j][cc[j]][g.coord(i, j)];
      out[i] += L * v[i];
    });
  }
  Field r(gp, std::move(out));
  if (s.prefactor)
    r = *s.prefactor * r;
  return finish(std::move(r), opt);
}

// --- seminorms -------------------------------------------------------------

namespace {

// second-order central stencil for the k-th derivative, k = 0..4
const std::vector<std::pair<int, double>>& stencil(int k) {
  static const std::vector<std::vector<std::pair<int, double>>> s = {
      {{0, 1.0}},
      {{-1, -0.5}, {1, 0.5}},
      {{-1, 1.0}, {0, -2.0}, {1, 1.0}},
      {{-2, -0.5}, {-1, 1.0}, {1, -1.0}, {2, 0.5}},
      {{-2, 1.0}, {-1, -4.0}, {0, 6.0}, {1, -4.0}, {2, 1.0}}};
  return s.at(k);
}

cplx fd_xi(const std::function<cplx(std::span<const double>)>& g, Freq xi,
           std::span<const int> alpha, std::span<const double> h, int j = 0) {
  if (j == static_cast<int>(alpha.size()))
    return g(xi);
  int k = alpha[j];
  if (k == 0)
    return fd_xi(g, xi, alpha, h, j + 1);
  cplx acc = 0;
  double x0 = xi[j];
  for (auto [o, w] : stencil(k)) {
    xi[j] = x0 + o * h[j];
    acc += w * fd_xi(g, xi, alpha, h, j + 1);
  }
  return acc / std::pow(h[j], k);
}

cplx deriv_g(const SepTerm& t, const WeightVector& w, const Freq& xi,
             std::span<const int> alpha) {
  int n = w.dim();
  bool poly = t.power == 0 && !t.extra;
  auto a = pad(t.alpha, n);
  if (poly) {
    double v = 1;
    for (int j = 0; j < n; ++j) {
      if (alpha[j] > a[j])
        return 0;
      double f = 1;
      for (int q = 0; q < alpha[j]; ++q)
        f *= a[j] - q;
      v *= f * std::pow(xi[j], a[j] - alpha[j]);
    }
    return v;
  }
  auto g = [&](std::span<const double> z) { return t.g(w, z); };
  double r = m_bracket(w, xi);
  std::vector<double> h(n), h2(n);
  for (int j = 0; j < n; ++j) {
    h[j] = 0.05 * std::pow(r, w.inv(j));
    h2[j] = 0.5 * h[j];
  }
  cplx d1 = fd_xi(g, xi, alpha, h), d2 = fd_xi(g, xi, alpha, h2);
  return (4.0 * d2 - d1) / 3.0;
}

Freq random_xi(const WeightVector& w, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> n;
  Freq d(w.dim());
  for (auto& v : d)
    v = n(rng);
  double r = lo * std::pow(hi / lo, u(rng));
  return dilate(w, r, sphere_project(w, d));
}

void check_orders(std::span<const int> alpha, std::span<const int> beta) {
  int s = 0;
  for (int a : alpha)
    s += a;
  for (int b : beta)
    s += b;
  if (s > 4)
    throw std::invalid_argument("seminorm_estimate: |alpha|+|beta| > 4 unsupported");
}

} // namespace

SeminormEstimate seminorm_estimate(const SymbolSpec& s, GridPtr gp,
                                   std::span<const int> alpha,
                                   std::span<const int> beta, double delta,
                                   int budget, unsigned seed) {
  check_orders(alpha, beta);
  const Grid& g = *gp;
  const WeightVector& w = g.weight();
  double m = s.declared_order ? *s.declared_order : quasi_order(s, w);
  auto sep = separable_form(s, w);
  if (!sep)
    return seminorm_estimate(to_grid_symbol(s, gp), m, alpha, beta, delta, budget,
                             seed);
  // x-derivatives of coefficients, spectral: d^beta = i^|beta| D^beta
  int bsum = 0;
  for (int b : beta)
    bsum += b;
  cplx ib = std::pow(cplx(0, 1), bsum);
  std::vector<std::optional<Field>> fb(sep->size());
  bool any_field = false;
  for (std::size_t r = 0; r < sep->size(); ++r) {
    const auto& t = (*sep)[r];
    if (t.f) {
      fb[r] = ib * derivative(*t.f, beta);
      any_field = true;
    } else if (bsum) {
      fb[r] = Field(gp);  // constant coefficient: derivative vanishes
    }
  }
  std::size_t stride = any_field ? std::max<std::size_t>(1, g.size() / 4096) : g.size();
  double ord = w.order(alpha), bord = w.order(beta);
  std::mt19937_64 rng(seed);
  SeminormEstimate est;
  for (int q = 0; q < budget; ++q) {
    Freq xi = random_xi(w, 4, g.radius(), rng);
    std::vector<cplx> gd(sep->size());
    for (std::size_t r = 0; r < sep->size(); ++r)
      gd[r] = deriv_g((*sep)[r], w, xi, alpha);
    double norm = std::pow(m_bracket(w, xi), m - ord + delta * bord);
    for (std::size_t ix = 0; ix < g.size(); ix += stride) {
      cplx v = 0;
      for (std::size_t r = 0; r < sep->size(); ++r) {
        cplx f = fb[r] ? (*sep)[r].c * (*fb[r])[ix] : (*sep)[r].c;
        v += f * gd[r];
      }
      double e = std::abs(v) / norm;
      ++est.samples;
      if (e > est.value) {
        est.value = e;
        est.xi_at_max = xi;
      }
    }
  }
  return est;
}

SeminormEstimate seminorm_estimate(const GridSymbol& a, double m,
                                   std::span<const int> alpha,
                                   std::span<const int> beta, double delta,
                                   int budget, unsigned seed) {
  check_orders(alpha, beta);
  const Grid& g = *a.grid();
  const WeightVector& w = g.weight();
  int d = g.dim();
  GridSymbol D = a.is_dense() ? a : a.to_dense();
  std::size_t n = g.size();
  double hx_[8];
  for (int j = 0; j < d; ++j)
    hx_[j] = kTwoPi / g.shape()[j];
  // candidate xi: representable, stencil neighbours representable
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < n; ++i) {
    double r = g.mnorm()[i];
    if (!g.representable(i) || r < 4)
      continue;
    bool ok = true;
    std::vector<int> k(d);
    for (int j = 0; j < d; ++j)
      k[j] = g.freq(i, j);
    for (int j = 0; j < d && ok; ++j)
      for (int o = -2; o <= 2 && ok; ++o) {
        auto kk = k;
        kk[j] += o;
        if (std::abs(kk[j]) >= g.shape()[j] / 2)
          ok = false;
        else
          ok = g.representable(g.index_of_freq(kk));
      }
    if (ok)
      cand.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(cand.begin(), cand.end(), rng);
  if (static_cast<int>(cand.size()) > budget)
    cand.resize(budget);
  std::sort(cand.begin(), cand.end());
  double ord = w.order(alpha), bord = w.order(beta);
  SeminormEstimate est;
  auto xshift = [&](std::size_t ix, int j, int o) {
    std::vector<int> c(d);
    for (int q = 0; q < d; ++q)
      c[q] = g.coord(ix, q);
    int N = g.shape()[j];
    c[j] = ((c[j] + o) % N + N) % N;
    std::size_t r = 0;
    for (int q = 0; q < d; ++q)
      r = r * g.shape()[q] + c[q];
    return r;
  };
  std::function<cplx(std::size_t, std::vector<int>, int)> dx;
  std::function<cplx(std::size_t, std::size_t, int)> dxi;
  // xi-derivative by lattice differences, then x-derivative by cell differences
  dxi = [&](std::size_t ix, std::size_t k, int j) -> cplx {
    if (j == d)
      return D.at(ix, k);
    if (alpha[j] == 0)
      return dxi(ix, k, j + 1);
    cplx acc = 0;
    std::vector<int> kk(d);
    for (int q = 0; q < d; ++q)
      kk[q] = g.freq(k, q);
    int k0 = kk[j];
    for (auto [o, wt] : stencil(alpha[j])) {
      kk[j] = k0 + o;
      acc += wt * dxi(ix, g.index_of_freq(kk), j + 1);
    }
    return acc;
  };
  dx = [&](std::size_t k, std::vector<int> pos, int j) -> cplx {
    std::size_t ix = pos[0];
    if (j == d)
      return dxi(ix, k, 0);
    if (beta[j] == 0)
      return dx(k, pos, j + 1);
    cplx acc = 0;
    for (auto [o, wt] : stencil(beta[j])) {
      auto p2 = pos;
      p2[0] = static_cast<int>(xshift(ix, j, o));
      acc += wt * dx(k, p2, j + 1);
    }
    return acc / std::pow(hx_[j], beta[j]);
  };
  std::size_t stride = std::max<std::size_t>(1, n / 1024);
  for (std::size_t k : cand) {
    Freq xi = g.xi(k);
    double norm = std::pow(m_bracket(w, xi), m - ord + delta * bord);
    for (std::size_t ix = 0; ix < n; ix += stride) {
      double e = std::abs(dx(k, {static_cast<int>(ix)}, 0)) / norm;
      ++est.samples;
      if (e > est.value) {
        est.value = e;
        est.xi_at_max = xi;
      }
    }
  }
  return est;
}

// --- coefficient regularity, split -----------------------------------------

CoefficientReport coefficient_besov(const SymbolSpec& s, const DyadicSystem& sys) {
  if (s.kind != SymbolSpec::Kind::DiffPoly)
    throw std::invalid_argument("coefficient_besov: DiffPoly symbol required");
  CoefficientReport rep;
  for (const auto& t : s.terms) {
    rep.alpha.push_back(t.alpha);
    BesovEstimate e;
    if (t.coeff) {
      e = besov_estimate(*t.coeff, sys);
    } else {
      e.beyond = true;
      e.note = "constant coefficient";
      e.lo = sys.default_lo();
      e.hi = sys.default_hi();
    }
    if (e.index)
      rep.r = rep.r ? std::min(*rep.r, *e.index) : *e.index;
    rep.estimates.push_back(e);
  }
  return rep;
}

std::vector<double> split_lowpass(const Grid& g, int h, double delta) {
  static const CutoffProfile phi(2.0);
  double s = std::exp2(-h * delta);
  std::vector<double> m(g.size());
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = phi(s * g.mnorm()[i]);
  return m;
}

SplitResult split_sharp_natural(const SymbolSpec& s, double delta,
                                const SystemPtr& sys) {
  if (!(delta > 0 && delta <= 1))
    throw std::invalid_argument("split: delta must lie in (0, 1]");
  auto sep = separable_form(s, sys->weight());
  if (!sep)
    return split_sharp_natural(to_grid_symbol(s, sys->grid()), delta, sys);
  return split_sharp_natural(GridSymbol::separable(sys->grid(), *sep), delta, sys);
}

SplitResult split_sharp_natural(const GridSymbol& a, double delta,
                                const SystemPtr& sys) {
  if (!(delta > 0 && delta <= 1))
    throw std::invalid_argument("split: delta must lie in (0, 1]");
  const GridPtr& gp = sys->grid();
  const Grid& g = *gp;
  if (!(g == *a.grid()))
    throw std::invalid_argument("split: grid mismatch");
  int H = sys->h_max();
  if (!a.is_dense()) {
    std::vector<SepTerm> sharp, nat;
    for (const auto& t : a.terms()) {
      if (!t.f) {
        sharp.push_back(t);
        continue;
      }
      nat.push_back(t);
      for (int h = -1; h <= H; ++h) {
        SepTerm st = t;
        st.f = apply_multiplier(*t.f, split_lowpass(g, h, delta));
        auto prev = t.extra;
        SystemPtr sp = sys;
        WeightVector w = g.weight();
        st.extra = [prev, sp, w, h](std::span<const double> xi) -> cplx {
          cplx v = sp->phi_at(h, m_norm(w, xi));
          return prev ? v * prev(xi) : v;
        };
        st.label = t.label + "#" + std::to_string(h);
        SepTerm nt = st;
        nt.c = -st.c;
        sharp.push_back(st);
        nat.push_back(nt);
      }
    }
    return {GridSymbol::separable(gp, std::move(sharp)),
            GridSymbol::separable(gp, std::move(nat))};
  }
  std::size_t n = g.size();
  std::vector<std::vector<double>> lp(H + 2);
  for (int h = -1; h <= H; ++h)
    lp[h + 1] = split_lowpass(g, h, delta);
  std::vector<cplx> sv(n * n), nv(n * n);
  parallel_for(n, [&](std::size_t k) {
    std::vector<cplx> col(n);
    for (std::size_t ix = 0; ix < n; ++ix)
      col[ix] = a.values()[ix * n + k];
    auto c = forward(g, col);
    for (std::size_t e = 0; e < n; ++e) {
      double m = 0;
      for (int h = -1; h <= H; ++h)
        m += sys->phi(h)[k] * lp[h + 1][e];
      c[e] *= m;
    }
    auto lo = inverse(g, c);
    for (std::size_t ix = 0; ix < n; ++ix) {
      sv[ix * n + k] = lo[ix];
      nv[ix * n + k] = col[ix] - lo[ix];
    }
  });
  return {GridSymbol::dense(gp, std::move(sv)), GridSymbol::dense(gp, std::move(nv))};
}

// --- ellipticity -----------------------------------------------------------

bool SpatialWindow::contains(std::span<const double> x) const {
  if (center.empty())
    return true;
  double s = 0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    double d = std::remainder(x[j] - center[j], kTwoPi);
    s += d * d;
  }
  return std::sqrt(s) <= radius;
}

EllipticityReport elliptic_min(const SymbolAt& a, const Grid& g, double m,
                               const SpatialWindow& win,
                               const std::optional<MConicSector>& sector,
                               double rho0, double threshold, std::size_t max_x) {
  const WeightVector& w = g.weight();
  std::vector<std::size_t> xs;
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::vector<double> x(g.dim());
    for (int j = 0; j < g.dim(); ++j)
      x[j] = g.x(i, j);
    if (win.contains(x))
      xs.push_back(i);
  }
  if (xs.size() > max_x) {
    std::vector<std::size_t> t;
    double step = double(xs.size()) / max_x;
    for (std::size_t q = 0; q < max_x; ++q)
      t.push_back(xs[static_cast<std::size_t>(q * step)]);
    xs = std::move(t);
  }
  std::vector<std::size_t> ks;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!g.representable(k) || g.mnorm()[k] <= rho0)
      continue;
    if (sector && !sector_contains(*sector, w, g.xi(k)))
      continue;
    ks.push_back(k);
  }
  if (xs.empty() || ks.empty())
    throw std::invalid_argument("elliptic_min: empty sample region");
  std::vector<double> br(g.size());
  for (std::size_t k : ks)
    br[k] = std::pow(std::sqrt(1 + g.mnorm()[k] * g.mnorm()[k]), m);
  std::vector<std::pair<double, std::size_t>> best(xs.size(),
                                                    {INFINITY, 0});
  parallel_for(xs.size(), [&](std::size_t q) {
    for (std::size_t k : ks) {
      double v = std::abs(a(xs[q], k)) / br[k];
      if (v < best[q].first)
        best[q] = {v, k};
    }
  });
  EllipticityReport rep;
  rep.rho0 = rho0;
  rep.threshold = threshold;
  rep.order = m;
  rep.samples = xs.size() * ks.size();
  rep.c0 = INFINITY;
  for (std::size_t q = 0; q < xs.size(); ++q)
    if (best[q].first < rep.c0) {
      rep.c0 = best[q].first;
      rep.x_at_min.clear();
      for (int j = 0; j < g.dim(); ++j)
        rep.x_at_min.push_back(g.x(xs[q], j));
      rep.xi_at_min = g.xi(best[q].second);
    }
  rep.pass = rep.c0 >= threshold;
  return rep;
}

EllipticityReport elliptic_min(const GridSymbol& a, double m,
                               const SpatialWindow& win,
                               const std::optional<MConicSector>& sector,
                               double rho0, double threshold) {
  const Grid& g = *a.grid();
  if (a.is_dense())
    return elliptic_min([&](std::size_t ix, std::size_t k) { return a.at(ix, k); },
                        g, m, win, sector, rho0, threshold);
  LatticeForm lf(a.terms(), g);
  return elliptic_min([&](std::size_t ix, std::size_t k) { return lf.at(ix, k); },
                      g, m, win, sector, rho0, threshold);
}

EllipticityReport elliptic_min(const SymbolSpec& s, GridPtr g,
                               const SpatialWindow& win,
                               const std::optional<MConicSector>& sector,
                               double rho0, double threshold) {
  double m = s.declared_order ? *s.declared_order : quasi_order(s, g->weight());
  return elliptic_min(to_grid_symbol(s, g), m, win, sector, rho0, threshold);
}

// --- characteristic directions ---------------------------------------------

static SymbolSpec principal_part(const SymbolSpec& s, const WeightVector& w,
                                 std::span<const double> x0) {
  if (s.kind != SymbolSpec::Kind::DiffPoly)
    throw std::invalid_argument("char_directions: DiffPoly symbol required");
  double m = quasi_order(s, w);
  std::vector<DiffTerm> top;
  bool nonzero = false;
  for (const auto& t : s.terms) {
    if (t.is_zero() || std::abs(w.order(pad(t.alpha, w.dim())) - m) > 1e-12)
      continue;
    cplx c = t.coeff ? (*t.coeff)[grid_index(t.coeff->g(), x0)] : t.constant;
    if (c != 0.0)
      nonzero = true;
    top.push_back(term(c, pad(t.alpha, w.dim())));
  }
  if (!nonzero)
    throw std::invalid_argument("char_directions: zero principal part at x0");
  return SymbolSpec::diffpoly(std::move(top));
}

std::vector<CharDirection> char_directions(const SymbolSpec& s, GridPtr g,
                                           std::span<const double> x0,
                                           int count, double threshold) {
  const WeightVector& w = g->weight();
  auto p = principal_part(s, w, x0);
  std::vector<CharDirection> out;
  double mx = 0;
  for (int k = 0; k < count; ++k) {
    CharDirection c;
    c.index = k;
    c.angle = kTwoPi * k / count;
    c.point = direction_point(w, c.angle);
    c.magnitude = std::abs(symbol_eval(p, w, x0, c.point));
    mx = std::max(mx, c.magnitude);
    out.push_back(c);
  }
  for (auto& c : out)
    c.characteristic = c.magnitude < threshold * mx;
  return out;
}

std::vector<double> char_angles(const SymbolSpec& s, GridPtr g,
                                std::span<const double> x0, int count) {
  const WeightVector& w = g->weight();
  auto p = principal_part(s, w, x0);
  auto f = [&](double t) {
    return std::abs(symbol_eval(p, w, x0, direction_point(w, t)));
  };
  int fine = count * 16;
  std::vector<double> v(fine);
  double mx = 0;
  for (int k = 0; k < fine; ++k)
    mx = std::max(mx, v[k] = f(kTwoPi * k / fine));
  std::vector<double> out;
  for (int k = 0; k < fine; ++k) {
    double a = v[(k + fine - 1) % fine], b = v[k], c = v[(k + 1) % fine];
    if (!(b <= a && b < c))
      continue;
    // golden-section refinement of the local minimum
    double lo = kTwoPi * (k - 1) / fine, hi = kTwoPi * (k + 1) / fine;
    const double r = (std::sqrt(5.0) - 1) / 2;
    double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 100; ++it) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - r * (hi - lo);
        f1 = f(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + r * (hi - lo);
        f2 = f(x2);
      }
    }
    double t = 0.5 * (lo + hi);
    if (f(t) <= 1e-8 * mx)
      out.push_back(std::fmod(t + kTwoPi, kTwoPi));
  }
  return out;
}

// --- boundedness -----------------------------------------------------------

BoundednessReport boundedness_probe(const SymbolSpec& s, double sreg,
                                    const std::vector<Field>& battery,
                                    const DyadicSystem& sys,
                                    std::optional<double> r, double delta) {
  BoundednessReport rep;
  double m = s.declared_order ? *s.declared_order : quasi_order(s, sys.weight());
  if (r && !(sreg > (delta - 1) * *r && sreg <= *r))
    rep.warning = "s outside the admissible window ((delta-1)r, r]";
  for (const auto& u : battery) {
    BesovEstimate eu, ev;
    eu.sups = block_sups(u, sys);
    ev.sups = block_sups(quantize(s, u), sys);
    double den = eu.norm_at(sreg + m);
    double q = den > 0 ? ev.norm_at(sreg) / den : 0;
    rep.ratios.push_back(q);
    rep.max_ratio = std::max(rep.max_ratio, q);
  }
  return rep;
}

} // namespace qhm
