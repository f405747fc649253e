#include <cmath>
#include <fstream>
#include <numbers>

#include "qhm/nonlinear.hpp"

namespace qhm {

namespace {

const double kPi = std::numbers::pi;

// sum_{k < N/2} k^{-1-p} cos(k(x_axis - pi)) times 1 + c cos(x_other - pi):
// 1-D index p across x_axis = pi
Field series(GridPtr g, int axis, double p, double c) {
  int n = g->shape()[axis] / 2;
  std::vector<double> a(n);
  for (int k = 1; k < n; ++k)
    a[k] = std::pow(k, -1 - p);
  int other = 1 - axis;
  return Field::from_function(g, [a, n, axis, other, c](const double* x) {
    double s = 0;
    for (int k = 1; k < n; ++k)
      s += a[k] * std::cos(k * (x[axis] - kPi));
    return cplx(s * (1 + c * std::cos(x[other] - kPi)));
  });
}

Field smooth(GridPtr g) {
  return Field::from_function(
      g, [](const double* x) { return cplx(1 + 0.5 * std::cos(x[0]) * std::cos(x[1])); });
}

// x1 series of index p1 (wavefront along +-e1) plus an x2 series of 1-D
// index q, i.e. M-index q/2 under W = (1,2), which sets the global index
Field two_feature(GridPtr g, double p1, double q, double profile1 = 0.5) {
  return band_limit(smooth(g) + series(g, 0, p1, profile1) + series(g, 1, q, 0.5));
}

ZetaFn constant(cplx c) {
  return [c](std::span<const double>, Zeta) { return c; };
}

CoefficientBundle ql_aniso() {
  WeightVector w({1, 2});
  auto probe = quasilinear_bundle("ql-aniso", w, 2, {}, {});
  int s00 = probe.slot(std::vector<int>{0, 0});
  int s02 = probe.slot(std::vector<int>{0, 2});
  // (1 + u^2/2) D1^2 u + (1 + (D2^2 u)^2/10) D2^4 u
  return quasilinear_bundle(
      "ql-aniso", w, 2, {{2, 0}, {0, 4}},
      {[s00](std::span<const double>, Zeta z) { return 1.0 + 0.5 * z[s00] * z[s00]; },
       [s02](std::span<const double>, Zeta z) { return 1.0 + 0.1 * z[s02] * z[s02]; }});
}

// zeta_(2,0) + zeta_(0,4) + zeta_(0,0)^3
CoefficientBundle fnl_aniso() {
  WeightVector w({1, 2});
  auto zeta = jet_indices(w, 2);
  auto at = [&](std::vector<int> b) {
    for (std::size_t k = 0; k < zeta.size(); ++k)
      if (zeta[k] == b)
        return static_cast<int>(k);
    return -1;
  };
  int s20 = at({2, 0}), s04 = at({0, 4}), s00 = at({0, 0});
  ZetaFn F = [=](std::span<const double>, Zeta z) {
    return z[s20] + z[s04] + z[s00] * z[s00] * z[s00];
  };
  std::vector<ZetaFn> dz(zeta.size(), constant(0.0));
  dz[s20] = constant(1.0);
  dz[s04] = constant(1.0);
  dz[s00] = [s00](std::span<const double>, Zeta z) { return 3.0 * z[s00] * z[s00]; };
  return fully_nonlinear_bundle("fnl-aniso", w, 2, F, dz,
                                {constant(0.0), constant(0.0)});
}

// zeta_(0,4) + zeta_(0,2)^3: no xi_1^2 term, characteristic along e1
CoefficientBundle fnl_char() {
  WeightVector w({1, 2});
  auto zeta = jet_indices(w, 2);
  auto at = [&](std::vector<int> b) {
    for (std::size_t k = 0; k < zeta.size(); ++k)
      if (zeta[k] == b)
        return static_cast<int>(k);
    return -1;
  };
  int s04 = at({0, 4}), s02 = at({0, 2});
  ZetaFn F = [=](std::span<const double>, Zeta z) {
    return z[s04] + z[s02] * z[s02] * z[s02];
  };
  std::vector<ZetaFn> dz(zeta.size(), constant(0.0));
  dz[s04] = constant(1.0);
  dz[s02] = [s02](std::span<const double>, Zeta z) { return 3.0 * z[s02] * z[s02]; };
  return fully_nonlinear_bundle("fnl-char", w, 2, F, dz, {constant(0.0), constant(0.0)});
}

ExpectedIndex by_construction(std::string q, double v, std::string how) {
  return {std::move(q), v, "by construction: " + std::move(how)};
}

} // namespace

std::vector<std::string> case_ids() {
  return {"ql-aniso-1", "ql-aniso-2", "fnl-aniso-1", "fnl-char-1"};
}

CoefficientBundle bundle_by_id(const std::string& id) {
  if (id == "ql-aniso")
    return ql_aniso();
  if (id == "fnl-aniso")
    return fnl_aniso();
  if (id == "fnl-char")
    return fnl_char();
  throw std::invalid_argument("unknown bundle: " + id);
}

ManufacturedCase make_case(const std::string& id, int n) {
  auto g = make_grid({n, n}, WeightVector({1, 2}));
  ManufacturedCase c;
  c.id = id;
  c.x0 = {kPi, kPi};
  c.theta0 = {1, 0};
  if (id == "ql-aniso-1") {
    c.description = "quasi-linear, x1 series p=3.0 at x1=pi, x2 series q=3.8";
    c.bundle = ql_aniso();
    c.u = two_feature(g, 3.0, 3.8);
    c.delta = 0.4;
    c.s = 2.3;
    c.expected = {by_construction("global_u", 1.9, "x2 series index q/2"),
                  by_construction("r", 0.9, "global_u - (m - 1)"),
                  by_construction("probe_u", 3.0, "x1 series index"),
                  by_construction("probe_f", 1.0, "x1 series index - m")};
  } else if (id == "ql-aniso-2") {
    c.description = "quasi-linear with r > m*, x1 series p=4.6, x2 series q=7.0";
    c.bundle = ql_aniso();
    c.u = two_feature(g, 4.6, 7.0);
    c.delta = 0.45;  // r delta >= 1 for r near 2.5
    c.s = 4.2;
    c.expected = {by_construction("global_u", 3.5, "x2 series index q/2"),
                  by_construction("r", 2.5, "global_u - (m - 1)"),
                  by_construction("probe_u", 4.6, "x1 series index"),
                  by_construction("probe_f", 2.6, "x1 series index - m")};
  } else if (id == "fnl-aniso-1") {
    c.description = "fully nonlinear, x1 series p=4.6, x2 series q=6.4";
    c.bundle = fnl_aniso();
    c.u = two_feature(g, 4.6, 6.4);
    c.delta = 0.45;
    c.expected = {by_construction("global_u", 3.2, "x2 series index q/2"),
                  by_construction("r", 1.2, "global_u - m"),
                  by_construction("probe_du_1", 3.6, "x1 series index - 1"),
                  by_construction("probe_u", 4.6, "x1 series index"),
                  by_construction("target_u", 3.7, "r + m + 1/m*")};
  } else if (id == "fnl-char-1") {
    c.description = "characteristic along e1: the x1 series is invisible to F";
    c.bundle = fnl_char();
    c.u = two_feature(g, 3.3, 6.4, 0.0);
    c.delta = 0.45;
    c.expected = {by_construction("probe_du_1", 2.3, "x1 series index - 1, below r + m"),
                  by_construction("probe_u", 3.3, "x1 series index, below r + m + 1/m*")};
  } else {
    throw std::invalid_argument("unknown case: " + id);
  }
  c.f = evaluate(c.bundle, c.u);
  return c;
}

void save_case(const ManufacturedCase& c, const std::filesystem::path& manifest) {
  auto dir = manifest.parent_path();
  auto stem = manifest.stem().string();
  save_field(c.u, dir / (stem + "_u"));
  save_field(c.f, dir / (stem + "_f"));
  auto ex = nlohmann::json::array();
  for (const auto& e : c.expected)
    ex.push_back({{"quantity", e.quantity}, {"value", e.value}, {"provenance", e.provenance}});
  nlohmann::json j = {{"schema", "qhm.case/1"},
                      {"case", c.id},
                      {"description", c.description},
                      {"bundle", c.bundle.id},
                      {"u", stem + "_u"},
                      {"f", stem + "_f"},
                      {"x0", c.x0},
                      {"theta0", c.theta0},
                      {"delta", c.delta},
                      {"s", c.s},
                      {"expected", ex}};
  std::ofstream out(manifest);
  if (!out)
    throw DataError("cannot write " + manifest.string());
  out << j.dump(2) << "\n";
}

ManufacturedCase load_case(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in)
    throw DataError("cannot open " + manifest.string());
  ManufacturedCase c;
  try {
    auto j = nlohmann::json::parse(in);
    auto dir = manifest.parent_path();
    c.id = j.at("case").get<std::string>();
    c.description = j.value("description", "");
    c.bundle = bundle_by_id(j.at("bundle").get<std::string>());
    c.u = load_field(dir / j.at("u").get<std::string>());
    c.f = load_field(dir / j.at("f").get<std::string>());
    c.x0 = j.at("x0").get<std::vector<double>>();
    c.theta0 = j.at("theta0").get<std::vector<double>>();
    c.delta = j.value("delta", 0.4);
    c.s = j.value("s", 0.0);
    for (const auto& e : j.value("expected", nlohmann::json::array()))
      c.expected.push_back({e.at("quantity").get<std::string>(), e.at("value").get<double>(),
                            e.value("provenance", "")});
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed case manifest " + manifest.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }
  if (!(c.u.g() == c.f.g()) || !(c.u.g().weight() == c.bundle.weight))
    throw DataError(manifest.string() + ": grid or weight mismatch");
  if (c.x0.size() != c.theta0.size() || static_cast<int>(c.x0.size()) != c.u.g().dim())
    throw DataError(manifest.string() + ": x0/theta0 dimension mismatch");
  Field f = evaluate(c.bundle, c.u);
  double err = sup_norm(f - c.f) / std::max(1.0, sup_norm(f));
  if (err > 1e-10)
    throw DataError(manifest.string() + ": stored f differs from the recomputed f (" +
                    std::to_string(err) + ")");
  return c;
}

} // namespace qhm
