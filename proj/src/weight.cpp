#include "qhm/weight.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace qhm {

WeightVector::WeightVector(std::vector<int> m) : m_(std::move(m)) {
  if (m_.empty())
    throw std::invalid_argument("weight: empty weight vector");
  for (int v : m_)
    if (v < 1)
      throw std::invalid_argument("weight: entries must be positive integers");
  if (*std::min_element(m_.begin(), m_.end()) != 1)
    throw std::invalid_argument("weight: min_j m_j must be 1");
  mstar_ = *std::max_element(m_.begin(), m_.end());
}

double WeightVector::order(std::span<const int> alpha) const {
  if (static_cast<int>(alpha.size()) != dim())
    throw std::invalid_argument("weight: multi-index dimension mismatch");
  double s = 0;
  for (int j = 0; j < dim(); ++j)
    s += alpha[j] * inv(j);
  return s;
}

void to_json(nlohmann::json& j, const WeightVector& w) { j = {{"m", w.m()}}; }

void from_json(const nlohmann::json& j, WeightVector& w) {
  std::vector<double> raw = j.at("m").get<std::vector<double>>();
  std::vector<int> m;
  for (double v : raw) {
    if (v != std::floor(v))
      throw std::invalid_argument("weight: non-integer anisotropy");
    m.push_back(static_cast<int>(v));
  }
  w = WeightVector(m);
}

static void check_dim(const WeightVector& w, std::span<const double> xi) {
  if (static_cast<int>(xi.size()) != w.dim())
    throw std::invalid_argument("weight: dimension mismatch");
}

double m_norm2(const WeightVector& w, std::span<const double> xi) {
  check_dim(w, xi);
  double s = 0;
  for (int j = 0; j < w.dim(); ++j)
    s += std::pow(xi[j] * xi[j], w[j]);
  return s;
}

double m_norm(const WeightVector& w, std::span<const double> xi) {
  return std::sqrt(m_norm2(w, xi));
}

double m_bracket(const WeightVector& w, std::span<const double> xi) {
  return std::sqrt(1.0 + m_norm2(w, xi));
}

Freq dilate(const WeightVector& w, double t, std::span<const double> xi) {
  check_dim(w, xi);
  if (!(t > 0))
    throw std::invalid_argument("dilate: t must be positive");
  Freq out(xi.size());
  for (int j = 0; j < w.dim(); ++j)
    out[j] = std::pow(t, w.inv(j)) * xi[j];
  return out;
}

Freq sphere_project(const WeightVector& w, std::span<const double> xi) {
  double r = m_norm(w, xi);
  if (r == 0)
    throw std::invalid_argument("sphere_project: zero frequency");
  return dilate(w, 1.0 / r, xi);
}

double sphere_distance(const WeightVector& w, std::span<const double> a,
                       std::span<const double> b) {
  Freq pa = sphere_project(w, a), pb = sphere_project(w, b);
  double s = 0;
  for (size_t j = 0; j < pa.size(); ++j)
    s += (pa[j] - pb[j]) * (pa[j] - pb[j]);
  return std::sqrt(s);
}

Freq direction_point(const WeightVector& w, double t) {
  if (w.dim() != 2)
    throw std::invalid_argument("direction_point: only n = 2");
  double om[2] = {std::cos(t), std::sin(t)};
  Freq p(2);
  for (int j = 0; j < 2; ++j)
    p[j] = std::copysign(std::pow(std::abs(om[j]), w.inv(j)), om[j]);
  return p;
}

MConicSector make_sector(const WeightVector& w, std::span<const double> dir,
                         double radius, double low_cut) {
  if (radius < 0 || !(low_cut > 0))
    throw std::invalid_argument("sector: radius >= 0 and low_cut > 0 required");
  return {sphere_project(w, dir), radius, low_cut};
}

bool sector_contains(const MConicSector& s, const WeightVector& w,
                     std::span<const double> xi) {
  double r = m_norm(w, xi);
  if (r <= s.low_cut)
    return false;
  Freq p = dilate(w, 1.0 / r, xi);
  double d = 0;
  for (size_t j = 0; j < p.size(); ++j)
    d += (p[j] - s.center[j]) * (p[j] - s.center[j]);
  return std::sqrt(d) <= s.radius;
}

static Freq random_sphere_point(const WeightVector& w, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Freq xi(w.dim());
  for (auto& v : xi)
    v = g(rng);
  return sphere_project(w, xi);
}

double equivalence_constant(const WeightVector& w, int samples, unsigned seed) {
  // On the M-sphere, scale t: <xi>_M vs <xi>; sweep t over decades.
  std::mt19937_64 rng(seed);
  double c = 1.0;
  for (int i = 0; i < samples; ++i) {
    Freq p = random_sphere_point(w, rng);
    for (double t = 1e-3; t < 1e6; t *= 3.7) {
      Freq xi = dilate(w, t, p);
      double e = 0;
      for (double v : xi)
        e += v * v;
      double br = std::sqrt(1 + e), bm = m_bracket(w, xi);
      c = std::max({c, br / bm, bm / std::pow(br, w.m_star())});
    }
  }
  return c;
}

double triangle_constant(const WeightVector& w, int samples, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::lognormal_distribution<double> scale(0.0, 2.0);
  double c = 1.0;
  for (int i = 0; i < samples; ++i) {
    Freq a = dilate(w, scale(rng), random_sphere_point(w, rng));
    Freq b = dilate(w, scale(rng), random_sphere_point(w, rng));
    Freq s(a.size());
    for (size_t j = 0; j < a.size(); ++j)
      s[j] = a[j] + b[j];
    c = std::max(c, m_norm(w, s) / (m_norm(w, a) + m_norm(w, b)));
  }
  return c;
}

} // namespace qhm
