#include "qhm/field.hpp"

#include <fftw3.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace qhm {

// --- grid -----------------------------------------------------------------

Grid::Grid(std::vector<int> shape, WeightVector w)
    : shape_(std::move(shape)), w_(std::move(w)) {
  if (static_cast<int>(shape_.size()) != w_.dim())
    throw std::invalid_argument("grid: shape/weight dimension mismatch");
  for (int n : shape_)
    if (n < 8 || n % 2)
      throw std::invalid_argument("grid: every N_j must be even and >= 8");
  stride_.assign(shape_.size(), 1);
  for (int j = dim() - 1; j >= 0; --j) {
    stride_[j] = size_;
    size_ *= shape_[j];
  }
  kf_.resize(dim());
  radius_ = INFINITY;
  for (int j = 0; j < dim(); ++j) {
    int n = shape_[j];
    for (int k = 0; k < n; ++k)
      kf_[j].push_back(k < n / 2 ? k : k - n);
    radius_ = std::min(radius_, std::pow(n / 2.0, w_[j]));
  }
  mn_.resize(size_);
  rep_.resize(size_);
  for (std::size_t i = 0; i < size_; ++i) {
    double s = 0;
    bool inside = true;
    for (int j = 0; j < dim(); ++j) {
      int k = freq(i, j);
      s += std::pow(double(k) * k, w_[j]);
      if (k == -shape_[j] / 2)
        inside = false;
    }
    mn_[i] = std::sqrt(s);
    rep_[i] = inside && mn_[i] <= radius_;
  }
}

double Grid::x(std::size_t i, int j) const {
  return 2 * M_PI * coord(i, j) / shape_[j];
}

Freq Grid::xi(std::size_t i) const {
  Freq f(dim());
  for (int j = 0; j < dim(); ++j)
    f[j] = freq(i, j);
  return f;
}

std::size_t Grid::index_of_freq(std::span<const int> k) const {
  std::size_t i = 0;
  for (int j = 0; j < dim(); ++j) {
    int n = shape_[j];
    int c = ((k[j] % n) + n) % n;
    i += c * stride_[j];
  }
  return i;
}

GridPtr make_grid(const std::vector<int>& shape, const WeightVector& w) {
  static std::mutex m;
  static std::map<std::pair<std::vector<int>, std::vector<int>>, GridPtr> cache;
  std::lock_guard lk(m);
  auto key = std::make_pair(shape, w.m());
  auto it = cache.find(key);
  if (it != cache.end())
    return it->second;
  auto g = std::make_shared<const Grid>(shape, w);
  cache[key] = g;
  return g;
}

// --- fft ------------------------------------------------------------------

namespace {

struct AlignedBuf {
  fftw_complex* p = nullptr;
  std::size_t n = 0;
  ~AlignedBuf() { fftw_free(p); }
  fftw_complex* get(std::size_t m) {
    if (m > n) {
      fftw_free(p);
      p = fftw_alloc_complex(m);
      n = m;
    }
    return p;
  }
};

// Plans are made on SIMD-aligned scratch; transforms copy through
// thread-local aligned buffers so the fast kernels apply.
fftw_plan plan_for(const std::vector<int>& shape, int sign) {
  static std::mutex m;
  static std::map<std::pair<std::vector<int>, int>, fftw_plan> plans;
  std::lock_guard lk(m);
  auto key = std::make_pair(shape, sign);
  auto it = plans.find(key);
  if (it != plans.end())
    return it->second;
  std::size_t n = 1;
  for (int s : shape)
    n *= s;
  fftw_complex* a = fftw_alloc_complex(n);
  fftw_complex* b = fftw_alloc_complex(n);
  fftw_plan p = fftw_plan_dft(static_cast<int>(shape.size()), shape.data(), a, b,
                              sign, FFTW_ESTIMATE);
  fftw_free(a);
  fftw_free(b);
  plans[key] = p;
  return p;
}

std::vector<cplx> transform(const Grid& g, const std::vector<cplx>& v, int sign,
                            double scale) {
  thread_local AlignedBuf bin, bout;
  std::size_t n = v.size();
  fftw_complex* in = bin.get(n);
  fftw_complex* out = bout.get(n);
  std::memcpy(in, v.data(), n * sizeof(cplx));
  fftw_execute_dft(plan_for(g.shape(), sign), in, out);
  std::vector<cplx> r(n);
  const cplx* o = reinterpret_cast<const cplx*>(out);
  if (scale == 1.0)
    std::memcpy(r.data(), o, n * sizeof(cplx));
  else
    for (std::size_t i = 0; i < n; ++i)
      r[i] = o[i] * scale;
  return r;
}

fftw_plan plan_lines(int n, int howmany, int stride, int dist) {
  static std::mutex m;
  static std::map<std::array<int, 4>, fftw_plan> plans;
  std::lock_guard lk(m);
  std::array<int, 4> key{n, howmany, stride, dist};
  auto it = plans.find(key);
  if (it != plans.end())
    return it->second;
  std::size_t len = static_cast<std::size_t>(n - 1) * stride +
                    static_cast<std::size_t>(howmany - 1) * dist + 1;
  fftw_complex* a = fftw_alloc_complex(len);
  fftw_plan p = fftw_plan_many_dft(1, &n, howmany, a, nullptr, stride, dist, a,
                                   nullptr, stride, dist, FFTW_BACKWARD,
                                   FFTW_ESTIMATE);
  fftw_free(a);
  plans[key] = p;
  return p;
}

} // namespace

double inverse_sup(const Grid& g, const std::vector<cplx>& coeffs) {
  if (g.dim() != 2) {
    double s = 0;
    for (auto v : inverse(g, coeffs))
      s = std::max(s, std::abs(v));
    return s;
  }
  const int n0 = g.shape()[0], n1 = g.shape()[1];
  std::vector<char> row(n0), col(n1);
  for (int a = 0; a < n0; ++a)
    for (int b = 0; b < n1; ++b)
      if (coeffs[static_cast<std::size_t>(a) * n1 + b] != 0.0)
        row[a] = col[b] = 1;
  int nr = 0, nc = 0;
  for (char r : row)
    nr += r;
  for (char c : col)
    nc += c;
  if (nr == 0)
    return 0;
  thread_local AlignedBuf buf, line;
  const std::size_t n = g.size();
  fftw_complex* t = buf.get(n);
  cplx* tc = reinterpret_cast<cplx*>(t);
  std::memcpy(t, coeffs.data(), n * sizeof(cplx));
  // sparse direction first, one line at a time through an aligned buffer,
  // then every line of the other axis in one batched transform
  if (nr * n1 <= nc * n0) {
    fftw_plan p = plan_lines(n1, 1, 1, n1);
    fftw_complex* l = line.get(n1);
    for (int a = 0; a < n0; ++a) {
      if (!row[a])
        continue;
      std::memcpy(l, tc + static_cast<std::size_t>(a) * n1, n1 * sizeof(cplx));
      fftw_execute_dft(p, l, l);
      std::memcpy(tc + static_cast<std::size_t>(a) * n1, l, n1 * sizeof(cplx));
    }
    fftw_execute_dft(plan_lines(n0, n1, n1, 1), t, t);
  } else {
    fftw_plan p = plan_lines(n0, 1, 1, n0);
    fftw_complex* l = line.get(n0);
    cplx* lc = reinterpret_cast<cplx*>(l);
    for (int b = 0; b < n1; ++b) {
      if (!col[b])
        continue;
      for (int a = 0; a < n0; ++a)
        lc[a] = tc[static_cast<std::size_t>(a) * n1 + b];
      fftw_execute_dft(p, l, l);
      for (int a = 0; a < n0; ++a)
        tc[static_cast<std::size_t>(a) * n1 + b] = lc[a];
    }
    fftw_execute_dft(plan_lines(n1, n0, 1, n1), t, t);
  }
  double s = 0;
  for (std::size_t i = 0; i < n; ++i)
    s = std::max(s, std::norm(tc[i]));
  return std::sqrt(s);
}

std::vector<cplx> forward(const Grid& g, const std::vector<cplx>& values) {
  return transform(g, values, FFTW_FORWARD, 1.0 / g.size());
}

std::vector<cplx> inverse(const Grid& g, const std::vector<cplx>& coeffs) {
  return transform(g, coeffs, FFTW_BACKWARD, 1.0);
}

// --- field ----------------------------------------------------------------

Field::Field(GridPtr g, std::vector<cplx> values)
    : g_(std::move(g)), v_(std::move(values)) {
  if (v_.size() != g_->size())
    throw std::invalid_argument("field: value count does not match grid");
}

Field::Field(GridPtr g) : g_(std::move(g)), v_(g_->size()) {}

Field Field::from_function(GridPtr g,
                           const std::function<cplx(const double* x)>& fn) {
  std::vector<cplx> v(g->size());
  std::vector<double> x(g->dim());
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (int j = 0; j < g->dim(); ++j)
      x[j] = g->x(i, j);
    v[i] = fn(x.data());
  }
  return Field(std::move(g), std::move(v));
}

Field Field::from_spectrum(GridPtr g, std::vector<cplx> coeffs) {
  Field f(g, inverse(*g, coeffs));
  f.spec_ = std::make_shared<const std::vector<cplx>>(std::move(coeffs));
  return f;
}

std::vector<cplx>& Field::values_mut() {
  spec_.reset();
  return v_;
}

const std::vector<cplx>& Field::spectrum() const {
  std::lock_guard lk(*lock_);
  if (!spec_)
    spec_ = std::make_shared<const std::vector<cplx>>(forward(*g_, v_));
  return *spec_;
}

bool Field::has_spectrum() const {
  std::lock_guard lk(*lock_);
  return static_cast<bool>(spec_);
}

Field& Field::to_spectrum() {
  spectrum();
  return *this;
}

bool Field::is_real(double tol) const {
  for (auto c : v_)
    if (std::abs(c.imag()) > tol)
      return false;
  return true;
}

Field to_spectrum(const Field& f) {
  Field g(f);
  g.to_spectrum();
  return g;
}

double sup_norm(const Field& f) {
  double m = 0;
  for (auto c : f.values())
    m = std::max(m, std::abs(c));
  return m;
}

double l2_mean(const Field& f) {
  double s = 0;
  for (auto c : f.values())
    s += std::norm(c);
  return std::sqrt(s / f.size());
}

double spectral_l2(const Field& f) {
  double s = 0;
  for (auto c : f.spectrum())
    s += std::norm(c);
  return std::sqrt(s);
}

static void same_grid(const Field& a, const Field& b) {
  if (!(a.g() == b.g()))
    throw std::invalid_argument("field: grid mismatch");
}

Field operator+(const Field& a, const Field& b) {
  same_grid(a, b);
  std::vector<cplx> v(a.values());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] += b[i];
  return Field(a.grid(), std::move(v));
}

Field operator-(const Field& a, const Field& b) {
  same_grid(a, b);
  std::vector<cplx> v(a.values());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] -= b[i];
  return Field(a.grid(), std::move(v));
}

Field operator*(const Field& a, const Field& b) {
  same_grid(a, b);
  std::vector<cplx> v(a.values());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] *= b[i];
  return Field(a.grid(), std::move(v));
}

Field operator*(cplx c, const Field& a) {
  std::vector<cplx> v(a.values());
  for (auto& x : v)
    x *= c;
  return Field(a.grid(), std::move(v));
}

Field real_part(const Field& a) {
  return map(a, [](cplx c) { return cplx(c.real(), 0.0); });
}

Field conj(const Field& a) {
  return map(a, [](cplx c) { return std::conj(c); });
}

Field map(const Field& a, const std::function<cplx(cplx)>& fn) {
  std::vector<cplx> v(a.values());
  for (auto& x : v)
    x = fn(x);
  return Field(a.grid(), std::move(v));
}

Field apply_multiplier(const Field& u, const std::vector<cplx>& m) {
  if (m.size() != u.size())
    throw std::invalid_argument("multiplier: size mismatch");
  std::vector<cplx> c(u.spectrum());
  for (std::size_t i = 0; i < c.size(); ++i)
    c[i] *= m[i];
  return Field::from_spectrum(u.grid(), std::move(c));
}

Field apply_multiplier(const Field& u, const std::vector<double>& m) {
  if (m.size() != u.size())
    throw std::invalid_argument("multiplier: size mismatch");
  std::vector<cplx> c(u.spectrum());
  for (std::size_t i = 0; i < c.size(); ++i)
    c[i] *= m[i];
  return Field::from_spectrum(u.grid(), std::move(c));
}

Field apply_multiplier(const Field& u,
                       const std::function<cplx(const Freq&)>& m) {
  const Grid& g = u.g();
  std::vector<cplx> c(u.spectrum());
  for (std::size_t i = 0; i < c.size(); ++i)
    c[i] *= m(g.xi(i));
  return Field::from_spectrum(u.grid(), std::move(c));
}

std::vector<cplx> monomial(const Grid& g, std::span<const int> alpha) {
  if (static_cast<int>(alpha.size()) != g.dim())
    throw std::invalid_argument("monomial: multi-index dimension mismatch");
  std::vector<cplx> m(g.size(), 1.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double p = 1;
    for (int j = 0; j < g.dim(); ++j) {
      int k = g.freq(i, j);
      // odd powers of the unpaired Nyquist mode have no real counterpart
      if (k == -g.shape()[j] / 2 && alpha[j] % 2)
        p = 0;
      else
        p *= std::pow(double(k), alpha[j]);
    }
    m[i] = p;
  }
  return m;
}

Field derivative(const Field& u, std::span<const int> alpha) {
  return apply_multiplier(u, monomial(u.g(), alpha));
}

Field bracket_power(const Field& u, double s) {
  const auto& mn = u.g().mnorm();
  std::vector<double> m(mn.size());
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = std::pow(1 + mn[i] * mn[i], s / 2);
  return apply_multiplier(u, m);
}

Field band_limit(const Field& u) {
  const Grid& g = u.g();
  std::vector<double> m(g.size());
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = g.representable(i) ? 1.0 : 0.0;
  return apply_multiplier(u, m);
}

bool is_band_limited(const Field& u, double tol) {
  const Grid& g = u.g();
  const auto& c = u.spectrum();
  double mx = 0, out = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    mx = std::max(mx, std::abs(c[i]));
    if (!g.representable(i))
      out = std::max(out, std::abs(c[i]));
  }
  return out <= tol * std::max(mx, 1e-300);
}

// --- io -------------------------------------------------------------------

std::uint32_t crc32_bytes(const void* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  const Bytef* p = static_cast<const Bytef*>(data);
  while (n > 0) {
    uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

static std::string hex32(std::uint32_t v) {
  char b[9];
  std::snprintf(b, sizeof b, "%08x", v);
  return b;
}

static_assert(std::endian::native == std::endian::little,
              "payload is written in host order; little-endian hosts only");

void save_field(const Field& f, const std::filesystem::path& stem) {
  bool real = f.is_real();
  std::vector<double> payload;
  payload.reserve(f.size() * (real ? 1 : 2));
  for (auto c : f.values()) {
    payload.push_back(c.real());
    if (!real)
      payload.push_back(c.imag());
  }
  std::size_t bytes = payload.size() * sizeof(double);
  nlohmann::json h = {{"schema", "qhm.field/1"},
                      {"shape", f.g().shape()},
                      {"weight", f.g().weight()},
                      {"dtype", real ? "float64" : "complex128"},
                      {"domain", "torus-2pi"},
                      {"crc32", hex32(crc32_bytes(payload.data(), bytes))}};
  auto json_path = std::filesystem::path(stem).replace_extension(".json");
  auto bin_path = std::filesystem::path(stem).replace_extension(".f64");
  std::ofstream hj(json_path);
  if (!hj)
    throw DataError("cannot write " + json_path.string());
  hj << h.dump(2) << "\n";
  std::ofstream bj(bin_path, std::ios::binary);
  if (!bj)
    throw DataError("cannot write " + bin_path.string());
  bj.write(reinterpret_cast<const char*>(payload.data()), bytes);
}

Field load_field(const std::filesystem::path& stem) {
  auto json_path = std::filesystem::path(stem).replace_extension(".json");
  auto bin_path = std::filesystem::path(stem).replace_extension(".f64");
  std::ifstream hj(json_path);
  if (!hj)
    throw DataError("cannot open " + json_path.string());
  nlohmann::json h;
  try {
    hj >> h;
  } catch (const std::exception& e) {
    throw DataError("malformed header " + json_path.string() + ": " + e.what());
  }
  std::vector<int> shape;
  WeightVector w;
  std::string dtype;
  std::string crc;
  try {
    shape = h.at("shape").get<std::vector<int>>();
    w = h.at("weight").get<WeightVector>();
    dtype = h.at("dtype").get<std::string>();
    crc = h.at("crc32").get<std::string>();
    if (h.value("domain", "torus-2pi") != "torus-2pi")
      throw DataError("unsupported domain");
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError("malformed header: " + std::string(e.what()));
  }
  if (dtype != "float64" && dtype != "complex128")
    throw DataError("unsupported dtype " + dtype);
  GridPtr g;
  try {
    g = make_grid(shape, w);
  } catch (const std::exception& e) {
    throw DataError(std::string("invalid header: ") + e.what());
  }
  std::size_t per = dtype == "float64" ? 1 : 2;
  std::ifstream bj(bin_path, std::ios::binary | std::ios::ate);
  if (!bj)
    throw DataError("cannot open " + bin_path.string());
  std::size_t bytes = static_cast<std::size_t>(bj.tellg());
  if (bytes != g->size() * per * sizeof(double))
    throw DataError("payload length " + std::to_string(bytes) +
                    " does not match shape");
  bj.seekg(0);
  std::vector<double> payload(g->size() * per);
  bj.read(reinterpret_cast<char*>(payload.data()), bytes);
  if (hex32(crc32_bytes(payload.data(), bytes)) != crc)
    throw DataError("checksum mismatch in " + bin_path.string());
  std::vector<cplx> v(g->size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = per == 1 ? cplx(payload[i], 0) : cplx(payload[2 * i], payload[2 * i + 1]);
  return Field(g, std::move(v));
}

} // namespace qhm
