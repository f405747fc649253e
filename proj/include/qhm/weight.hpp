#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace qhm {

// Anisotropy M = (m_1..m_n), integer entries with min 1.
class WeightVector {
public:
  WeightVector() = default;
  explicit WeightVector(std::vector<int> m);

  int dim() const { return static_cast<int>(m_.size()); }
  int operator[](int j) const { return m_[j]; }
  const std::vector<int>& m() const { return m_; }
  int m_star() const { return mstar_; }
  double inv(int j) const { return 1.0 / m_[j]; }

  // alpha . 1/M
  double order(std::span<const int> alpha) const;

  bool operator==(const WeightVector& o) const { return m_ == o.m_; }

private:
  std::vector<int> m_;
  int mstar_ = 0;
};

void to_json(nlohmann::json& j, const WeightVector& w);
void from_json(const nlohmann::json& j, WeightVector& w);

using Freq = std::vector<double>;

double m_norm(const WeightVector& w, std::span<const double> xi);
double m_norm2(const WeightVector& w, std::span<const double> xi);
double m_bracket(const WeightVector& w, std::span<const double> xi);
Freq dilate(const WeightVector& w, double t, std::span<const double> xi);
Freq sphere_project(const WeightVector& w, std::span<const double> xi);

// Euclidean distance between the sphere projections of a and b.
double sphere_distance(const WeightVector& w, std::span<const double> a,
                       std::span<const double> b);

// Point on the M-sphere reached from the unit circle angle t (n = 2 only):
// p_j = sgn(w_j)|w_j|^{1/m_j}, w = (cos t, sin t).
Freq direction_point(const WeightVector& w, double t);

struct MConicSector {
  Freq center;           // on the M-sphere
  double radius = 0.0;   // chord distance between projections
  double low_cut = 4.0;  // eps0
};

MConicSector make_sector(const WeightVector& w, std::span<const double> dir,
                         double radius, double low_cut);
bool sector_contains(const MConicSector& s, const WeightVector& w,
                     std::span<const double> xi);

// Sampled constant C with C^-1 <xi> <= <xi>_M <= C <xi>^{m*}, and the
// quasi-triangle constant |xi+eta|_M <= C(|xi|_M + |eta|_M).
double equivalence_constant(const WeightVector& w, int samples, unsigned seed);
double triangle_constant(const WeightVector& w, int samples, unsigned seed);

} // namespace qhm
