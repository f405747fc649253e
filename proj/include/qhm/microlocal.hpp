#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qhm/symbols.hpp"

namespace qhm {

// Spatial cutoff around a center. VonMises: exp(sum kappa_j (cos(x_j-c_j)-1)),
// smooth and periodic. Bump: 1 within radius/2, 0 beyond radius (periodic
// Euclidean distance), bump-integral bridge.
struct WindowSpec {
  enum class Profile { VonMises, Bump };
  Profile profile = Profile::VonMises;
  std::vector<double> center;
  std::vector<double> kappa;  // VonMises
  double radius = 0.5;        // Bump
};

Field window_field(GridPtr g, const WindowSpec& w);
WindowSpec von_mises(std::vector<double> center, std::vector<double> kappa);

// 0 for t <= 0, 1 for t >= 1, bump-integral bridge
double smoothstep(double t);

// psi(xi): 1 on the sector above eps0, 0 outside the doubled-radius sector
// or below eps0/2.
double cutoff_value(const MConicSector& s, const WeightVector& w,
                    std::span<const double> xi);
std::vector<double> microlocal_cutoff(const MConicSector& s, const Grid& g);

struct ProbeConfig {
  WindowSpec window;
  MConicSector sector;
  FitRange fit;
  int lift = 0;  // even order L: probes psi(D)(phi <D>^L u), index shifted by L
};

BesovEstimate probe(const Field& u, const ProbeConfig& cfg, const DyadicSystem& sys);
// Direction-free windowed probe with the same low cut: phi <D>^L u, |xi| > eps0.
BesovEstimate probe_point(const Field& u, const WindowSpec& win, double low_cut,
                          const DyadicSystem& sys, FitRange fit = {}, int lift = 0);

struct ScanOptions {
  int stride = 8;
  int directions = 32;
  double s = 0.5;
  double low_cut = 4;
  std::vector<double> kappa;  // empty: 40 / 20^{m_j - 1}
  int lift = 0;
  FitRange fit;
};

// Cells: x on the strided grid (axis 0 slowest), directions from the
// circle-angle parametrization, sector radius half the chord distance to the
// nearest neighbour direction.
struct WavefrontMap {
  std::vector<int> shape;                 // cells per axis
  std::vector<std::vector<double>> x;     // cell centers
  std::vector<double> angles;
  std::vector<Freq> points;
  std::vector<double> radii;
  std::vector<double> index;              // cell * directions + d; +inf sentinel
  std::vector<char> indicator;
  double s = 0;
  int directions = 0;
  double at(std::size_t cell, int d) const { return index[cell * directions + d]; }
  bool wf(std::size_t cell, int d) const { return indicator[cell * directions + d]; }
  std::vector<char> projection() const;  // per cell: any direction flagged
};

WavefrontMap wavefront_scan(const Field& u, const DyadicSystem& sys,
                            const ScanOptions& opt = {});

struct SingSuppMap {
  std::vector<int> shape;
  std::vector<std::vector<double>> x;
  std::vector<double> index;
  std::vector<char> indicator;
};
SingSuppMap singsupp_scan(const Field& u, const DyadicSystem& sys,
                          const ScanOptions& opt = {});

std::vector<double> scan_kappa(const WeightVector& w);

// --- parametrix -------------------------------------------------------------

struct EllipticityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParametrixConfig {
  WindowSpec window;     // phi_win
  MConicSector sector;   // psi
  int order = 1;         // J in {0, 1, 2}
  double rho0 = 4;
  double threshold = 1e-6;
  SpatialWindow region;  // where ellipticity is required (default: all)
  double interp_tol = 1e-10;
  // cap on x-nodes for b0; the largest axis is halved until it fits and the
  // lost x-resolution becomes part of the error A b0 - phi psi
  std::size_t max_nodes = 1024;
  bool force_interp = false;  // skip the rank-one shortcut
};

class Parametrix {
public:
  // Throws EllipticityError when a fails the lower bound on the support of psi.
  Parametrix(GridSymbol a, double m, ParametrixConfig cfg, SystemPtr sys);

  const EllipticityReport& ellipticity() const { return ell_; }
  const std::vector<int>& nodes() const { return nodes_; }
  bool nodes_capped() const { return capped_; }
  bool separable() const { return sep_b0_.has_value(); }
  int order() const { return cfg_.order; }

  Field apply_a(const Field& u) const;  // Op(a), projected
  Field apply_b0(const Field& u) const;
  Field apply_p(const Field& u) const;  // Op(phi_win psi) = phi_win psi(D)
  Field error(const Field& u) const;    // (Op(a)Op(b0) - Op(phi_win psi)) u
  Field apply(const Field& u, int J = -1) const;  // B_J u
  // Op(a) B_J u - psi(D)(phi_win u)
  Field residual(const Field& u, int J = -1) const;

  const Field& window() const { return phi_; }
  const std::vector<double>& psi() const { return psi_; }

private:
  GridSymbol a_;
  double m_;
  ParametrixConfig cfg_;
  SystemPtr sys_;
  EllipticityReport ell_;
  Field phi_;
  std::vector<double> psi_;
  std::optional<std::pair<Field, std::vector<cplx>>> sep_b0_;  // x and xi factors
  InterpSymbol interp_;
  std::vector<int> nodes_;
  bool capped_ = false;
};

// Lower bound of a on the support of psi (doubled sector above eps0/2).
EllipticityReport parametrix_ellipticity(const GridSymbol& a, double m,
                                         const ParametrixConfig& cfg);

struct ResidualReport {
  std::vector<double> field_index;
  std::vector<double> residual_index;  // +inf: beyond resolvable scale
  std::vector<double> gains;
  double mean_gain = 0;  // +inf when every residual is beyond resolution
  bool sentinel = false;
};

// index of (Op(a)B_J u - psi(D)(phi_win u)) minus index of u, over the battery
ResidualReport residual_order(const Parametrix& p, const std::vector<Field>& battery,
                              int J = -1);

// --- regularity bootstrap ---------------------------------------------------

struct BootstrapReport {
  std::optional<double> r;          // coefficient index used (nullopt: smooth)
  std::optional<double> r_measured;
  double m = 0, delta = 0, s = 0;
  double probe_u = 0, probe_f = 0;  // +inf for sentinel
  double global_u = 0;
  double term_bf = 0, term_natural = 0, term_remainder = 0;
  double identity_defect = 0;
  std::vector<int> nodes;           // x-nodes of b0 (empty: separable)
  bool nodes_capped = false;
  double expected = 0;              // min(probe_f + m, r + m)
  std::vector<std::string> hypothesis_failures;
  EllipticityReport ellipticity;
  bool pass = false;
  double tolerance = 0.2;
};

struct BootstrapConfig {
  ProbeConfig probe;          // regularity probe at (x0, theta0)
  ParametrixConfig parametrix;
  double delta = 0.4;
  double s = 0;
  double tolerance = 0.2;
  std::optional<double> coefficient_index;  // r to assume; default: measured
};

// A parametrix that cannot be built (ellipticity fails) is itemized as a
// hypothesis failure; the B-terms are then NaN and the probes still run.
BootstrapReport bootstrap_check(const SymbolSpec& A, const Field& u, const Field& f,
                                const BootstrapConfig& cfg, const SystemPtr& sys);

struct GainIdentity {
  Field value;        // <D>^{1/m*-2}u + sum_j Lambda_j(D) D_j u
  double defect = 0;  // sup |value - <D>^{1/m*} u|
};
GainIdentity gain_identity(const Field& u, const std::vector<Field>& partials,
                           double tol = 1e-8);

void to_json(nlohmann::json& j, const EllipticityReport& e);
void to_json(nlohmann::json& j, const BootstrapReport& r);
void to_json(nlohmann::json& j, const ResidualReport& r);

} // namespace qhm
