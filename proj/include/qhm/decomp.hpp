#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qhm/field.hpp"

namespace qhm {

// phi = 1 on [0, 1/(2K)], 0 on [K, inf), monotone bump-integral bridge.
class CutoffProfile {
public:
  explicit CutoffProfile(double K = 2.0);
  double K() const { return K_; }
  double operator()(double t) const;
  double derivative(double t) const;

private:
  double K_;
};

CutoffProfile make_cutoff(double K);

// Normalized integral of exp(-1/(1-s^2)) from -1 to s, s in [-1, 1].
double bump_cdf(double s);
double bump_density(double s);

class DyadicSystem {
public:
  DyadicSystem(CutoffProfile profile, GridPtr grid);

  const CutoffProfile& profile() const { return profile_; }
  const GridPtr& grid() const { return grid_; }
  const WeightVector& weight() const { return grid_->weight(); }
  double K() const { return profile_.K(); }
  int h_max() const { return h_max_; }
  int shells() const { return h_max_ + 2; }
  // phi_h on the lattice, h in [-1, h_max]; the top shell is the remainder.
  const std::vector<double>& phi(int h) const { return phi_[h + 1]; }
  double phi_at(int h, double r) const;  // |xi|_M = r
  // crown C_h = [K^-1 2^{h-1}, K 2^{h+1}]; ball for h = -1
  std::pair<double, double> crown(int h) const;
  int default_lo() const { return 2; }
  int default_hi() const { return h_max_ - 1; }

private:
  CutoffProfile profile_;
  GridPtr grid_;
  int h_max_ = 0;
  std::vector<std::vector<double>> phi_;
};

using SystemPtr = std::shared_ptr<const DyadicSystem>;

// Largest shell index the grid supports: floor(log2(R / K)).
int shell_limit(const Grid& g, double K);
SystemPtr build_system(const CutoffProfile& profile, const WeightVector& w,
                       const std::vector<int>& shape);
SystemPtr build_system(const CutoffProfile& profile, GridPtr grid);

struct BlockSequence {
  std::vector<Field> blocks;  // h = -1 .. h_max
  SystemPtr sys;
  std::string source;
  const Field& at(int h) const { return blocks.at(h + 1); }
  Field sum() const;
};

BlockSequence dyadic_blocks(const Field& u, const SystemPtr& sys,
                            std::string source = {});

// sup norms of phi_h(D)u for h in [lo, hi]; other entries are -1.
std::vector<double> block_sups(const Field& u, const DyadicSystem& sys,
                               int lo = -1, int hi = -2);
// Same on a precomputed spectrum (FFT order) with an optional extra multiplier.
std::vector<double> block_sups_spec(const Grid& g, const std::vector<cplx>& spec,
                                    const DyadicSystem& sys, int lo, int hi,
                                    const std::vector<double>* extra = nullptr);

struct FitRange {
  int lo = 2;
  int hi = -1;  // -1: h_max - 1
};

struct EstimatorOptions {
  double zero_tol = 1e-12;   // relative to ref
  double resolvable = 8.0;   // local decay above this is beyond resolution
  double shift = 0.0;        // added to the fitted index (order lift)
};

struct BesovEstimate {
  std::vector<double> sups;  // index h + 1, -1 where not computed
  std::optional<double> index;
  bool beyond = false;  // beyond resolvable scale
  int lo = 0, hi = 0;
  double residual = 0;
  double slope = 0;
  std::string note;
  double norm_at(double s) const;
  double sup(int h) const { return sups.at(h + 1); }
  // sentinel compares as +infinity
  double index_or_inf() const;
};

BesovEstimate besov_estimate(const std::vector<double>& sups, int h_max,
                             FitRange fit = {}, EstimatorOptions opt = {},
                             double ref = -1);
BesovEstimate besov_estimate(const BlockSequence& bs, FitRange fit = {},
                             EstimatorOptions opt = {});
BesovEstimate besov_estimate(const Field& u, const DyadicSystem& sys,
                             FitRange fit = {}, EstimatorOptions opt = {});

void to_json(nlohmann::json& j, const BesovEstimate& e);

// ||D^alpha u|| / (R^{alpha.1/M} ||u||); throws DataError when the spectrum
// leaves the ball B^M_R.
double bernstein_ratio(const Field& u, std::span<const int> alpha, double R,
                       double tol = 1e-10);

// sum_{alpha.1/M = k} ||D^alpha u_h|| / (2^{hk} ||u_h||)
double block_derivative_equivalence(const Field& u_h, int h, int k);
std::vector<std::vector<int>> multi_indices_of_order(const WeightVector& w,
                                                     double k);
std::vector<std::vector<int>> multi_indices_up_to(const WeightVector& w,
                                                  double k);

enum class BlockSupport { Crown, Ball };

struct Synthesis {
  Field u;
  double block_norm = 0;  // sup_h 2^{rh} ||u_h||
  double field_norm = 0;  // norm_at(r) of the synthesized field
  double constant = 0;    // calibrated C
  bool certified = false;
};

// Calibrated constant for field_norm <= C block_norm, crown supports, K = 2.
inline constexpr double kSynthesisConstant = 8.0;
// Calibrated bound on norm_at ratios between K in {1.5, 2, 4}.
inline constexpr double kNormEquivalenceConstant = 4.0;

Synthesis synthesize_from_blocks(const std::vector<Field>& blocks, double r,
                                 BlockSupport support, const SystemPtr& sys,
                                 double tol = 1e-9);

Field meyer_apply(const std::vector<Field>& mult, const Field& u,
                  const DyadicSystem& sys);

struct ComposeOptions {
  bool subtract_f0 = false;
};
Field compose_smooth(const std::function<cplx(cplx)>& F, const Field& u,
                     ComposeOptions opt = {});

} // namespace qhm
