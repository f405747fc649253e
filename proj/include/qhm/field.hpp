#pragma once

#include <complex>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "qhm/weight.hpp"

namespace qhm {

using cplx = std::complex<double>;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sampling grid on the torus [0,2pi)^n together with its integer frequency
// lattice in FFT order (0..N/2-1, -N/2..-1 per axis, row-major, axis 0 slowest).
class Grid {
public:
  Grid(std::vector<int> shape, WeightVector w);

  const std::vector<int>& shape() const { return shape_; }
  const WeightVector& weight() const { return w_; }
  int dim() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return size_; }

  // integer frequency of flat index i along axis j
  int freq(std::size_t i, int j) const { return kf_[j][coord(i, j)]; }
  int coord(std::size_t i, int j) const {
    return static_cast<int>((i / stride_[j]) % shape_[j]);
  }
  double x(std::size_t i, int j) const;
  Freq xi(std::size_t i) const;
  std::size_t index_of_freq(std::span<const int> k) const;

  // |xi|_M at every lattice point
  const std::vector<double>& mnorm() const { return mn_; }
  // largest M-ball radius inside the Nyquist box: min_j (N_j/2)^{m_j}
  double radius() const { return radius_; }
  // lattice points strictly inside the box with |xi|_M <= radius()
  bool representable(std::size_t i) const { return rep_[i]; }

  bool operator==(const Grid& o) const {
    return shape_ == o.shape_ && w_ == o.w_;
  }

private:
  std::vector<int> shape_;
  WeightVector w_;
  std::size_t size_ = 1;
  std::vector<std::size_t> stride_;
  std::vector<std::vector<int>> kf_;
  std::vector<double> mn_;
  std::vector<char> rep_;
  double radius_ = 0;
};

using GridPtr = std::shared_ptr<const Grid>;

// Shared grid instance per (shape, weight).
GridPtr make_grid(const std::vector<int>& shape, const WeightVector& w);

// Complex samples on a grid. Spectrum uses the coefficient convention
// u_hat(xi) = N^-1 sum_k u(x_k) e^{-i x_k.xi}, so u == 1 has u_hat(0) = 1.
class Field {
public:
  Field() = default;
  Field(GridPtr g, std::vector<cplx> values);
  explicit Field(GridPtr g);  // zeros

  static Field from_function(GridPtr g,
                             const std::function<cplx(const double* x)>& fn);
  static Field from_spectrum(GridPtr g, std::vector<cplx> coeffs);

  const GridPtr& grid() const { return g_; }
  const Grid& g() const { return *g_; }
  std::size_t size() const { return v_.size(); }
  const std::vector<cplx>& values() const { return v_; }
  std::vector<cplx>& values_mut();
  cplx operator[](std::size_t i) const { return v_[i]; }

  // Computed on first use, then cached (thread-safe).
  const std::vector<cplx>& spectrum() const;
  bool has_spectrum() const;
  Field& to_spectrum();

  bool is_real(double tol = 0.0) const;

private:
  GridPtr g_;
  std::vector<cplx> v_;
  mutable std::shared_ptr<const std::vector<cplx>> spec_;
  mutable std::shared_ptr<std::mutex> lock_ = std::make_shared<std::mutex>();
};

Field to_spectrum(const Field& f);

// Raw transforms with the coefficient convention above.
std::vector<cplx> forward(const Grid& g, const std::vector<cplx>& values);
std::vector<cplx> inverse(const Grid& g, const std::vector<cplx>& coeffs);
// sup |inverse(coeffs)|; 2-D transforms skip empty frequency lines
double inverse_sup(const Grid& g, const std::vector<cplx>& coeffs);

double sup_norm(const Field& f);
double l2_mean(const Field& f);           // (N^-1 sum |u|^2)^{1/2}
double spectral_l2(const Field& f);       // (sum |u_hat|^2)^{1/2}

Field operator+(const Field& a, const Field& b);
Field operator-(const Field& a, const Field& b);
Field operator*(const Field& a, const Field& b);  // pointwise
Field operator*(cplx c, const Field& a);
Field real_part(const Field& a);
Field conj(const Field& a);
Field map(const Field& a, const std::function<cplx(cplx)>& fn);

// Multiplier m(xi) sampled on the lattice (FFT order).
Field apply_multiplier(const Field& u, const std::vector<cplx>& m);
Field apply_multiplier(const Field& u, const std::vector<double>& m);
Field apply_multiplier(const Field& u, const std::function<cplx(const Freq&)>& m);

// D^alpha with D = -i d/dx, i.e. multiplier xi^alpha.
Field derivative(const Field& u, std::span<const int> alpha);
std::vector<cplx> monomial(const Grid& g, std::span<const int> alpha);

// <D>_M^s
Field bracket_power(const Field& u, double s);

// Projection onto representable frequencies (M-ball of the grid).
Field band_limit(const Field& u);
bool is_band_limited(const Field& u, double tol);

// File format: <stem>.json header + <stem>.f64 payload.
void save_field(const Field& f, const std::filesystem::path& stem);
Field load_field(const std::filesystem::path& stem);
std::uint32_t crc32_bytes(const void* data, std::size_t n);

} // namespace qhm
