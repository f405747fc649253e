#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace qhm::cli {

inline constexpr int kOk = 0;
inline constexpr int kVerdictFail = 1;
inline constexpr int kUsage = 2;
inline constexpr int kDataError = 3;

inline constexpr const char* kReportSchema = "qhm.report/1";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Global {
  int threads = 0;
  unsigned long seed = 1;
  bool no_timestamp = false;
  bool verdict_exit = true;  // exit 1 on a failed verdict
  std::string report;        // empty: stdout
};

// Union of subcommand options; each subcommand binds the ones it reads.
struct Options {
  std::string input, symbol, output, out_dir, csv, case_id, manifest, save_case;
  double K = 2;
  int fit_lo = 2, fit_hi = -1;
  std::optional<double> expect;
  double expect_tol = 0.1;
  int grid = 128;
  std::vector<int> weight{1, 2};
  double delta = 0.4;
  std::optional<double> s;
  double tolerance = 0.2;
  int directions = 32, stride = 8, lift = 0;
  std::vector<double> window;  // center..., kappa...
  std::vector<double> sector;  // direction..., radius, eps0
  std::vector<double> region;  // center..., radius
  std::vector<double> x0;
  double rho0 = 4, threshold = 1e-6;
  int char_count = 0;
  int order = 1;
  int battery = 5;
};

int decompose(const Options& o, const Global& g);
int besov_index(const Options& o, const Global& g);
int apply(const Options& o, const Global& g);
int split(const Options& o, const Global& g);
int elliptic_check(const Options& o, const Global& g);
int wavefront(const Options& o, const Global& g);
int parametrix_check(const Options& o, const Global& g);
int nonlinear_demo(const Options& o, const Global& g);
int selftest(const Options& o, const Global& g);

} // namespace qhm::cli
