#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qhm/microlocal.hpp"

namespace qhm {

using MultiIndex = std::vector<int>;
using Zeta = std::span<const cplx>;
// callable of the sample point and the jet values at that point
using ZetaFn = std::function<cplx(std::span<const double> x, Zeta zeta)>;

// beta with beta.1/M <= order: by |beta|, then reverse lexicographic
std::vector<MultiIndex> jet_indices(const WeightVector& w, double order);
// D^beta u over jet_indices(w, order)
std::vector<Field> jet(const Field& u, double order);

struct CoefficientBundle {
  enum class Kind { QuasiLinear, FullyNonlinear };
  Kind kind = Kind::QuasiLinear;
  std::string id;
  WeightVector weight;
  int m = 0;
  std::vector<MultiIndex> zeta;  // jet_indices(weight, m - 1) or (weight, m)

  // quasi-linear: sum_alpha a_alpha(x, zeta) D^alpha u
  std::vector<MultiIndex> alpha;
  std::vector<ZetaFn> a;

  // fully nonlinear: F(x, zeta); partials optional (empty: differences)
  ZetaFn F;
  std::vector<ZetaFn> dF_dzeta;  // per zeta entry
  std::vector<ZetaFn> dF_dx;     // per axis
  bool finite_differences = true;

  int slot(std::span<const int> beta) const;  // position in zeta, -1 if absent
};

CoefficientBundle quasilinear_bundle(std::string id, WeightVector w, int m,
                                     std::vector<MultiIndex> alpha,
                                     std::vector<ZetaFn> a);
CoefficientBundle fully_nonlinear_bundle(std::string id, WeightVector w, int m,
                                         ZetaFn F, std::vector<ZetaFn> dF_dzeta = {},
                                         std::vector<ZetaFn> dF_dx = {});

// Wirtinger derivative d/dzeta_k by central differences with step
// 1e-6 (1 + |zeta_k|) along the real and imaginary axes; d/dx_j likewise.
cplx d_zeta(const CoefficientBundle& b, int k, std::span<const double> x, Zeta zeta);
cplx d_x(const CoefficientBundle& b, int j, std::span<const double> x, Zeta zeta);

struct PartialsCheck {
  double max_rel_zeta = 0;  // analytic vs difference, relative
  double max_rel_x = 0;
  std::size_t samples = 0;
};
// Random points x in the torus, zeta with unit-scale complex entries.
PartialsCheck check_partials(const CoefficientBundle& b, int samples, unsigned seed = 1);

// Left-hand side of the equation, pointwise, projected onto the M-ball.
Field evaluate(const CoefficientBundle& b, const Field& u);

// A(x, xi) = sum a_alpha(x, jet u) xi^alpha with field coefficients.
SymbolSpec linearize_quasilinear(const CoefficientBundle& b, const Field& u);

struct LinearizedEquation {
  SymbolSpec op;       // sum dF/dzeta_alpha(x, jet u) D^alpha
  Field rhs;           // d_j f - dF/dx_j(x, jet u)
  Field du;            // d_j u
  double defect = 0;   // sup|op(d_j u) - rhs| / scale
};
// Differentiated equation along axis j (0-based).
LinearizedEquation linearize_fully_nonlinear(const CoefficientBundle& b, const Field& u,
                                             const Field& f, int j);

// Principal part: terms with alpha.1/M = order.
SymbolSpec principal_part(const SymbolSpec& s, const WeightVector& w, double order);

struct ExpectedIndex {
  std::string quantity;
  double value = 0;
  std::string provenance;
};

struct ManufacturedCase {
  std::string id;
  std::string description;
  CoefficientBundle bundle;
  Field u, f;
  std::vector<double> x0;
  Freq theta0;
  double delta = 0.4;
  double s = 0;  // quasi-linear target index
  std::vector<ExpectedIndex> expected;
};

std::vector<std::string> case_ids();
CoefficientBundle bundle_by_id(const std::string& id);
// Canned case on an n x n grid; throws std::invalid_argument for unknown ids.
ManufacturedCase make_case(const std::string& id, int n);

// Manifest: JSON with bundle id and field stems relative to the manifest.
// f is recomputed from u on load; a mismatch above 1e-10 is a DataError.
void save_case(const ManufacturedCase& c, const std::filesystem::path& manifest);
ManufacturedCase load_case(const std::filesystem::path& manifest);

struct NonlinearConfig {
  ProbeConfig probe;  // regularity probe at (x0, theta0)
  ParametrixConfig parametrix;
  double delta = 0.4;
  double s = 0;
  double tolerance = 0.2;
};

// Probe window kappa_j = 5 / 10^{m_j-1}, sector radius 0.5, lift 4;
// parametrix window kappa_j = 1 / 4^{m_j-1} on the same sector.
NonlinearConfig case_config(const ManufacturedCase& c);

struct QuasilinearReport {
  std::string case_id;
  std::optional<double> r_measured;  // coefficient index
  double r = 0;                      // min(r_measured, global_u - m + 1)
  double m = 0, delta = 0, s = 0, sigma = 0;
  double global_u = 0;
  double jet_index = 0;              // min global index over the jet
  double probe_u = 0, probe_f = 0;
  bool reduced = false;              // r delta >= 1
  std::vector<std::string> notes;
  std::vector<std::string> hypothesis_failures;
  EllipticityReport principal;
  BootstrapReport bootstrap;
  bool pass = false;
};

QuasilinearReport verify_quasilinear(const ManufacturedCase& c, const NonlinearConfig& cfg,
                                     const SystemPtr& sys);

struct DerivativeCheck {
  int axis = 0;
  double defect = 0;  // chain-rule consistency
  double global_du = 0;
  double probe_du = 0;
  double probe_df = 0;
  BootstrapReport bootstrap;
  bool pass = false;  // probe_du >= r + m - tol
};

struct FullyNonlinearReport {
  std::string case_id;
  std::optional<double> r_measured;
  double r = 0;  // min(r_measured, global_u - m)
  double m = 0, delta = 0;
  double global_u = 0;
  double probe_u = 0;
  double probe_gain = 0;  // probe of the gain identity value + 1/m*
  double gain_defect = 0;
  double target_u = 0;    // r + m + 1/m*
  bool reduced = false;
  std::vector<std::string> notes;
  std::vector<std::string> hypothesis_failures;
  EllipticityReport principal;
  std::vector<DerivativeCheck> derivatives;
  bool pass = false;
};

FullyNonlinearReport verify_fully_nonlinear(const ManufacturedCase& c,
                                            const NonlinearConfig& cfg,
                                            const SystemPtr& sys);

void to_json(nlohmann::json& j, const QuasilinearReport& r);
void to_json(nlohmann::json& j, const FullyNonlinearReport& r);

} // namespace qhm
