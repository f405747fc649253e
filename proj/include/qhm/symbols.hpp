#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qhm/decomp.hpp"

namespace qhm {

using XiFn = std::function<cplx(std::span<const double> xi)>;

// One separable piece c * f(x) * xi^alpha * <xi>_M^power * extra(xi).
struct SepTerm {
  cplx c = 1.0;
  std::optional<Field> f;   // absent: x-independent
  std::vector<int> alpha;   // empty: xi^0
  double power = 0;
  XiFn extra;               // optional
  std::string label;

  cplx g(const WeightVector& w, std::span<const double> xi) const;
  // g on the grid lattice, zero off the representable set
  std::vector<cplx> lattice(const Grid& grid) const;
  cplx fx(std::size_t ix) const { return f ? c * (*f)[ix] : c; }
};

// Symbol sampled on (x grid) x (frequency lattice). Either dense values,
// row-major in (x index, xi index), or a list of separable terms.
class GridSymbol {
public:
  static GridSymbol dense(GridPtr g, std::vector<cplx> values);
  static GridSymbol separable(GridPtr g, std::vector<SepTerm> terms);
  // Dense sampling of an arbitrary callable a(x index, xi index).
  static GridSymbol sample(GridPtr g,
                           const std::function<cplx(std::size_t, std::size_t)>& a);

  const GridPtr& grid() const { return g_; }
  bool is_dense() const { return !dense_.empty(); }
  const std::vector<cplx>& values() const { return dense_; }
  const std::vector<SepTerm>& terms() const { return terms_; }
  cplx at(std::size_t ix, std::size_t ixi) const;
  GridSymbol to_dense() const;

private:
  GridPtr g_;
  std::vector<cplx> dense_;
  std::vector<SepTerm> terms_;
};

struct DiffTerm {
  cplx constant = 0.0;
  std::optional<Field> coeff;  // overrides constant when present
  std::string coeff_ref;       // file stem the coefficient came from
  std::vector<int> alpha;
  bool is_zero() const;
};

struct SymbolSpec {
  enum class Kind { WeightPower, DiffPoly, Sum, Product, Grid };
  Kind kind = Kind::DiffPoly;
  double power = 0;
  std::vector<DiffTerm> terms;
  std::vector<SymbolSpec> children;
  std::shared_ptr<const GridSymbol> grid;
  std::optional<double> declared_order;
  double declared_delta = 0;

  static SymbolSpec weight_power(double s);
  static SymbolSpec diffpoly(std::vector<DiffTerm> terms);
  static SymbolSpec sum(std::vector<SymbolSpec> parts);
  static SymbolSpec product(std::vector<SymbolSpec> parts);
  static SymbolSpec from_grid(GridSymbol g);
};

// convenience constructors for DiffPoly terms
DiffTerm term(cplx c, std::vector<int> alpha);
DiffTerm term(Field coeff, std::vector<int> alpha);

cplx symbol_eval(const SymbolSpec& s, const WeightVector& w,
                 std::span<const double> x, std::span<const double> xi);
double quasi_order(const SymbolSpec& s, const WeightVector& w);

// Separable form, or nullopt when a dense GridSymbol is involved.
std::optional<std::vector<SepTerm>> separable_form(const SymbolSpec& s,
                                                   const WeightVector& w);
// Grid sampling of any spec.
GridSymbol to_grid_symbol(const SymbolSpec& s, GridPtr g);

struct QuantizeOptions {
  bool project = true;              // band-limit the output to the M-ball
  std::size_t direct_limit = 64 * 64;  // grid size cap of the direct sum
};

// a(x,D)u = sum_xi e^{ix.xi} a(x,xi) u_hat(xi) over representable xi.
Field quantize(const SymbolSpec& s, const Field& u, QuantizeOptions opt = {});
Field quantize(const GridSymbol& a, const Field& u, QuantizeOptions opt = {});
Field quantize_separable(const std::vector<SepTerm>& terms, const Field& u,
                         QuantizeOptions opt = {});
Field quantize_direct(const GridSymbol& a, const Field& u,
                      QuantizeOptions opt = {});

// Symbol p(x) b(x, xi) whose x-dependence in b is a trigonometric polynomial
// resolved by nodes[j] equispaced points per axis (1: independent of x_j).
struct InterpSymbol {
  std::optional<Field> prefactor;
  std::function<cplx(std::span<const double> x, std::span<const double> xi)> b;
  std::vector<int> nodes;
};

// Smallest power-of-two node counts (>= 4 on axes that vary) for which the
// x-spectrum of b at sampled frequencies falls below tol. Axes listed as
// constant get one node.
std::vector<int> detect_nodes(const InterpSymbol& s, const Grid& g,
                              std::vector<bool> constant_axes, double tol = 1e-10);
Field quantize_interp(const InterpSymbol& s, const Field& u,
                      QuantizeOptions opt = {});

struct SeminormEstimate {
  double value = 0;
  std::size_t samples = 0;
  std::vector<double> xi_at_max;
};

// sup |d_x^beta d_xi^alpha a| / <xi>^{m - alpha.1/M + delta beta.1/M} over
// samples with |xi|_M in [4, R]. x-derivatives are spectral, xi-derivatives
// exact for polynomials and Richardson central differences otherwise.
SeminormEstimate seminorm_estimate(const SymbolSpec& s, GridPtr g,
                                   std::span<const int> alpha,
                                   std::span<const int> beta, double delta,
                                   int budget, unsigned seed = 1);
SeminormEstimate seminorm_estimate(const GridSymbol& a, double m,
                                   std::span<const int> alpha,
                                   std::span<const int> beta, double delta,
                                   int budget, unsigned seed = 1);

struct CoefficientReport {
  std::vector<std::vector<int>> alpha;
  std::vector<BesovEstimate> estimates;
  std::optional<double> r;  // min over terms; nullopt when all are smooth
};
CoefficientReport coefficient_besov(const SymbolSpec& s, const DyadicSystem& sys);

struct SplitResult {
  GridSymbol sharp;
  GridSymbol natural;
};
// Low-pass of the x-dependence on shell h by phi_{K=2}(2^{-h delta}|eta|_M).
SplitResult split_sharp_natural(const SymbolSpec& s, double delta,
                                const SystemPtr& sys);
SplitResult split_sharp_natural(const GridSymbol& a, double delta,
                                const SystemPtr& sys);
std::vector<double> split_lowpass(const Grid& g, int h, double delta);

// Spatial region: points within periodic distance radius of center.
struct SpatialWindow {
  std::vector<double> center;
  double radius = 1e9;  // everything
  bool contains(std::span<const double> x) const;
};

struct EllipticityReport {
  double c0 = 0;
  double rho0 = 4;
  double threshold = 1e-6;
  double order = 0;
  bool pass = false;
  std::size_t samples = 0;
  std::vector<double> x_at_min, xi_at_min;
};

// min |a| / <xi>_M^m over window x sector lattice points with |xi|_M > rho0.
// x samples are strided to at most max_x points.
using SymbolAt = std::function<cplx(std::size_t ix, std::size_t ixi)>;
EllipticityReport elliptic_min(const SymbolAt& a, const Grid& g, double m,
                               const SpatialWindow& win,
                               const std::optional<MConicSector>& sector,
                               double rho0 = 4, double threshold = 1e-6,
                               std::size_t max_x = 64);
EllipticityReport elliptic_min(const SymbolSpec& s, GridPtr g,
                               const SpatialWindow& win,
                               const std::optional<MConicSector>& sector,
                               double rho0 = 4, double threshold = 1e-6);
EllipticityReport elliptic_min(const GridSymbol& a, double m,
                               const SpatialWindow& win,
                               const std::optional<MConicSector>& sector,
                               double rho0 = 4, double threshold = 1e-6);

struct CharDirection {
  int index = 0;
  double angle = 0;      // circle-angle parameter
  Freq point;            // on the M-sphere
  double magnitude = 0;  // |A_m(x0, point)|
  bool characteristic = false;
};

// Principal part A_m(x0, theta) on `count` directions; marks those below
// threshold * max. Throws std::invalid_argument on a zero principal part.
std::vector<CharDirection> char_directions(const SymbolSpec& s, GridPtr g,
                                           std::span<const double> x0,
                                           int count, double threshold = 0.1);
// Zeros of the principal part refined by bisection between sign changes of
// Re/Im along the direction circle.
std::vector<double> char_angles(const SymbolSpec& s, GridPtr g,
                                std::span<const double> x0, int count);

struct BoundednessReport {
  double max_ratio = 0;
  std::vector<double> ratios;
  std::string warning;
};
// max over battery of norm_at(s)(a(x,D)u) / norm_at(s+m)(u); r is the
// coefficient index when the symbol is rough.
BoundednessReport boundedness_probe(const SymbolSpec& s, double sreg,
                                    const std::vector<Field>& battery,
                                    const DyadicSystem& sys,
                                    std::optional<double> r = std::nullopt,
                                    double delta = 0);

// JSON form {"type": ..., ...}; field coefficients are file stems resolved
// against base (absolute stems are used as is).
SymbolSpec symbol_from_json(const nlohmann::json& j,
                            const std::filesystem::path& base);
nlohmann::json symbol_to_json(const SymbolSpec& s);

} // namespace qhm
