#include "commands.hpp"

#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>

#include "qhm/nonlinear.hpp"
#include "qhm/parallel.hpp"

#ifndef QHM_DEFAULT_DATA_DIR
#define QHM_DEFAULT_DATA_DIR "data"
#endif

namespace qhm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const double kPi = std::numbers::pi;

json num(double v) {
  if (std::isfinite(v))
    return v;
  return nullptr;
}

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int emit(const std::string& command, json config, json result, const Global& g,
         std::optional<bool> verdict = std::nullopt) {
  config["seed"] = g.seed;
  json j = {{"schema", kReportSchema},
            {"command", command},
            {"config", std::move(config)},
            {"result", std::move(result)},
            {"verdict", verdict ? json(*verdict ? "pass" : "fail") : json(nullptr)}};
  if (!g.no_timestamp)
    j["timestamp"] = utc_now();
  std::string text = j.dump(2) + "\n";
  if (g.report.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(g.report);
    if (!out)
      throw DataError("cannot write report " + g.report);
    out << text;
  }
  return verdict && !*verdict && g.verdict_exit ? kVerdictFail : kOk;
}

// relative paths fall back to QHM_DATA_DIR, then to the shipped data directory
fs::path resolve(const std::string& name) {
  fs::path p(name);
  auto exists = [](const fs::path& q) {
    return fs::exists(q) || fs::exists(fs::path(q).concat(".json"));
  };
  if (p.is_absolute() || exists(p))
    return p;
  if (const char* env = std::getenv("QHM_DATA_DIR"); env && *env)
    if (exists(fs::path(env) / p))
      return fs::path(env) / p;
  if (exists(fs::path(QHM_DEFAULT_DATA_DIR) / p))
    return fs::path(QHM_DEFAULT_DATA_DIR) / p;
  return p;
}

fs::path field_stem(const std::string& name) {
  fs::path p = resolve(name);
  if (p.extension() == ".json" || p.extension() == ".f64")
    p.replace_extension();
  return p;
}

Field read_field(const std::string& name) {
  if (name.empty())
    throw UsageError("--input is required");
  return load_field(field_stem(name));
}

SymbolSpec read_symbol(const std::string& name) {
  if (name.empty())
    throw UsageError("--symbol is required");
  fs::path p = resolve(name);
  std::ifstream in(p);
  if (!in)
    throw DataError("cannot open symbol " + p.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed symbol " + p.string() + ": " + e.what());
  }
  return symbol_from_json(j, p.parent_path());
}

WeightVector weight_of(const Options& o) {
  try {
    return WeightVector(o.weight);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--weight: ") + e.what());
  }
}

const Field* first_coefficient(const SymbolSpec& s) {
  for (const auto& t : s.terms)
    if (t.coeff)
      return &*t.coeff;
  for (const auto& c : s.children)
    if (auto f = first_coefficient(c))
      return f;
  return nullptr;
}

// grid of the symbol's coefficient fields, else --grid and --weight
GridPtr symbol_grid(const SymbolSpec& s, const Options& o) {
  if (s.kind == SymbolSpec::Kind::Grid)
    return s.grid->grid();
  if (auto f = first_coefficient(s))
    return f->grid();
  auto w = weight_of(o);
  if (o.grid < 8 || o.grid % 2)
    throw UsageError("--grid must be an even size >= 8");
  return make_grid(std::vector<int>(w.dim(), o.grid), w);
}

MConicSector sector_of(const std::vector<double>& v, const WeightVector& w) {
  int d = w.dim();
  if (static_cast<int>(v.size()) != d + 2)
    throw UsageError("--sector takes direction (" + std::to_string(d) +
                     " values), radius and eps0");
  Freq dir(v.begin(), v.begin() + d);
  return make_sector(w, dir, v[d], v[d + 1]);
}

WindowSpec window_of(const std::vector<double>& v, const WeightVector& w,
                     std::vector<double> center, std::vector<double> kappa) {
  int d = w.dim();
  if (!v.empty()) {
    if (static_cast<int>(v.size()) != 2 * d)
      throw UsageError("--window takes center and kappa (" + std::to_string(2 * d) +
                       " values)");
    center.assign(v.begin(), v.begin() + d);
    kappa.assign(v.begin() + d, v.end());
  }
  return von_mises(std::move(center), std::move(kappa));
}

SpatialWindow region_of(const std::vector<double>& v, int d) {
  SpatialWindow r;
  if (v.empty())
    return r;
  if (static_cast<int>(v.size()) != d + 1)
    throw UsageError("--region takes center and radius");
  r.center.assign(v.begin(), v.begin() + d);
  r.radius = v[d];
  return r;
}

// min coefficient index over every DiffPoly node of the tree
std::optional<double> coefficient_index(const SymbolSpec& s, const DyadicSystem& sys) {
  std::optional<double> r;
  auto merge = [&r](std::optional<double> v) {
    if (v)
      r = r ? std::min(*r, *v) : *v;
  };
  if (s.kind == SymbolSpec::Kind::DiffPoly)
    merge(coefficient_besov(s, sys).r);
  for (const auto& c : s.children)
    merge(coefficient_index(c, sys));
  return r;
}

json sector_json(const MConicSector& s) {
  return {{"center", s.center}, {"radius", s.radius}, {"eps0", s.low_cut}};
}

json window_json(const WindowSpec& w) { return {{"center", w.center}, {"kappa", w.kappa}}; }

SystemPtr system_for(const Options& o, const GridPtr& g) {
  if (!(o.K > 1))
    throw UsageError("--K must exceed 1");
  return build_system(make_cutoff(o.K), g);
}

FitRange fit_of(const Options& o) { return {o.fit_lo, o.fit_hi}; }

// fields singular across x1 = pi near (pi, pi); x2 modulation phases from the seed
std::vector<Field> battery(const GridPtr& g, int count, unsigned long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ph(0, 2 * kPi);
  auto vm = [](const double* x) {
    return std::exp(8 * (std::cos(x[0] - kPi) - 1) + 2 * (std::cos(x[1] - kPi) - 1));
  };
  std::vector<Field> b;
  for (int k = 0; k < count; ++k) {
    double s = 0.5 + 0.5 * (k % 4);
    double phase = ph(rng);
    b.push_back(band_limit(Field::from_function(g, [&](const double* x) {
      return cplx(vm(x) * std::pow(std::abs(std::sin((x[0] - kPi) / 2)), s) *
                  (1 + 0.3 * std::cos(3 * x[1] + phase)));
    })));
  }
  return b;
}

} // namespace

int decompose(const Options& o, const Global& g) {
  Field u = read_field(o.input);
  if (o.out_dir.empty())
    throw UsageError("--out-dir is required");
  auto sys = system_for(o, u.grid());
  auto bs = dyadic_blocks(u, sys, o.input);
  fs::create_directories(o.out_dir);
  json stems = json::array(), sups = json::array();
  for (int h = -1; h <= sys->h_max(); ++h) {
    std::string stem = "block_h" + std::to_string(h);
    save_field(bs.at(h), fs::path(o.out_dir) / stem);
    stems.push_back(stem);
    sups.push_back(sup_norm(bs.at(h)));
  }
  double defect = sup_norm(bs.sum() - u) / std::max(sup_norm(u), 1e-300);
  json manifest = {{"schema", "qhm.decompose/1"},
                   {"K", o.K},
                   {"weight", u.g().weight()},
                   {"shape", u.g().shape()},
                   {"h_max", sys->h_max()},
                   {"sups", sups},
                   {"blocks", stems}};
  std::ofstream(fs::path(o.out_dir) / "manifest.json") << manifest.dump(2) << "\n";
  json result = manifest;
  result["reconstruction_defect"] = defect;
  return emit("decompose", {{"input", o.input}, {"K", o.K}, {"out_dir", o.out_dir}}, result, g);
}

int besov_index(const Options& o, const Global& g) {
  Field u = read_field(o.input);
  auto sys = system_for(o, u.grid());
  auto e = besov_estimate(u, *sys, fit_of(o));
  json result = e;
  result["h_max"] = sys->h_max();
  result["weight"] = u.g().weight();
  std::optional<bool> verdict;
  if (o.expect) {
    verdict = e.index && std::abs(*e.index - *o.expect) <= o.expect_tol;
    result["expected"] = *o.expect;
  }
  json config = {{"input", o.input}, {"K", o.K}, {"fit", {o.fit_lo, o.fit_hi}}};
  if (o.expect)
    config["expect"] = {*o.expect, o.expect_tol};
  return emit("besov-index", config, result, g, verdict);
}

int apply(const Options& o, const Global& g) {
  SymbolSpec s = read_symbol(o.symbol);
  Field u = read_field(o.input);
  Field v = quantize(s, u);
  if (!o.output.empty()) {
    fs::path out(o.output);
    if (out.extension() == ".json" || out.extension() == ".f64")
      out.replace_extension();
    save_field(v, out);
  }
  auto sys = system_for(o, u.grid());
  json result = {{"order", num(quasi_order(s, u.g().weight()))},
                 {"sup_input", sup_norm(u)},
                 {"sup_output", sup_norm(v)},
                 {"index_input", num(besov_estimate(u, *sys).index_or_inf())},
                 {"index_output", num(besov_estimate(v, *sys).index_or_inf())}};
  return emit("apply",
              {{"symbol", o.symbol}, {"input", o.input}, {"output", o.output}, {"K", o.K}},
              result, g);
}

int split(const Options& o, const Global& g) {
  SymbolSpec s = read_symbol(o.symbol);
  GridPtr gp = symbol_grid(s, o);
  const WeightVector& w = gp->weight();
  if (!(o.delta > 0 && o.delta <= 1))
    throw UsageError("--delta must lie in (0, 1]");
  auto sys = system_for(o, gp);
  auto sp = split_sharp_natural(s, o.delta, sys);
  GridSymbol a = to_grid_symbol(s, gp);
  double m = quasi_order(s, w);

  // a_sharp + a_natural = a at seeded sample points
  std::mt19937_64 rng(g.seed);
  std::uniform_int_distribution<std::size_t> pick(0, gp->size() - 1);
  double defect = 0, scale = 0;
  for (int k = 0; k < 4096; ++k) {
    std::size_t ix = pick(rng), ixi = pick(rng);
    if (!gp->representable(ixi))
      continue;
    cplx av = a.at(ix, ixi);
    defect = std::max(defect, std::abs(sp.sharp.at(ix, ixi) + sp.natural.at(ix, ixi) - av));
    scale = std::max(scale, std::abs(av));
  }
  auto r = coefficient_index(s, *sys);
  json result = {{"order", num(m)},
                 {"coefficient_index", r ? json(*r) : json(nullptr)},
                 {"natural_order", r ? num(m - *r * o.delta) : json(nullptr)},
                 {"sum_defect", defect / std::max(scale, 1e-300)},
                 {"h_max", sys->h_max()}};
  SpatialWindow region = region_of(o.region, w.dim());
  std::optional<MConicSector> sector;
  if (!o.sector.empty())
    sector = sector_of(o.sector, w);
  auto ea = elliptic_min(a, m, region, sector, o.rho0, o.threshold);
  auto es = elliptic_min(sp.sharp, m, region, sector, o.rho0, o.threshold);
  result["elliptic_min_a"] = ea;
  result["elliptic_min_sharp"] = es;
  std::optional<bool> verdict;
  if (ea.pass) {
    verdict = es.c0 >= 0.5 * ea.c0;
    result["sharp_keeps_half"] = *verdict;
  }
  if (!o.input.empty()) {
    Field u = read_field(o.input);
    Field whole = quantize(s, u);
    Field parts = quantize(sp.sharp, u) + quantize(sp.natural, u);
    result["apply_defect"] = sup_norm(parts - whole) / std::max(sup_norm(whole), 1e-300);
  }
  json config = {{"symbol", o.symbol}, {"delta", o.delta}, {"K", o.K}, {"rho0", o.rho0},
                 {"grid", gp->shape()}, {"weight", w}};
  if (sector)
    config["sector"] = sector_json(*sector);
  return emit("split", config, result, g, verdict);
}

int elliptic_check(const Options& o, const Global& g) {
  SymbolSpec s = read_symbol(o.symbol);
  GridPtr gp = symbol_grid(s, o);
  const WeightVector& w = gp->weight();
  SpatialWindow region = region_of(o.region, w.dim());
  std::optional<MConicSector> sector;
  if (!o.sector.empty())
    sector = sector_of(o.sector, w);
  auto rep = elliptic_min(s, gp, region, sector, o.rho0, o.threshold);
  json result = {{"ellipticity", rep}};
  json config = {{"symbol", o.symbol}, {"rho0", o.rho0}, {"threshold", o.threshold},
                 {"grid", gp->shape()}, {"weight", w}};
  if (sector)
    config["sector"] = sector_json(*sector);
  if (!o.region.empty())
    config["region"] = o.region;
  if (o.char_count > 0) {
    std::vector<double> x0 = o.x0.empty() ? std::vector<double>(w.dim(), kPi) : o.x0;
    if (static_cast<int>(x0.size()) != w.dim())
      throw UsageError("--x0 needs one value per axis");
    json dirs = json::array();
    for (const auto& c : char_directions(s, gp, x0, o.char_count))
      if (c.characteristic)
        dirs.push_back({{"index", c.index}, {"angle", c.angle}, {"point", c.point},
                        {"magnitude", c.magnitude}});
    result["char_directions"] = dirs;
    result["char_angles"] = char_angles(s, gp, x0, o.char_count);
    config["x0"] = x0;
    config["directions"] = o.char_count;
  }
  return emit("elliptic-check", config, result, g, rep.pass);
}

int wavefront(const Options& o, const Global& g) {
  Field u = read_field(o.input);
  auto sys = system_for(o, u.grid());
  ScanOptions so;
  so.s = o.s.value_or(0.5);
  so.directions = o.directions;
  so.stride = o.stride;
  so.lift = o.lift;
  if (so.directions < 1 || so.stride < 1)
    throw UsageError("--directions and --stride must be positive");
  auto wf = wavefront_scan(u, *sys, so);
  auto ss = singsupp_scan(u, *sys, so);
  auto proj = wf.projection();
  std::size_t cells = proj.size(), flagged = 0, agree = 0;
  json list = json::array();
  for (std::size_t c = 0; c < cells; ++c) {
    agree += proj[c] == ss.indicator[c];
    for (int d = 0; d < wf.directions; ++d)
      if (wf.wf(c, d)) {
        ++flagged;
        list.push_back({{"cell", c}, {"x", wf.x[c]}, {"direction", d}});
      }
  }
  std::string csv = o.csv;
  if (csv.empty() && !g.report.empty())
    csv = fs::path(g.report).replace_extension(".csv").string();
  if (!csv.empty()) {
    std::ofstream out(csv);
    if (!out)
      throw DataError("cannot write " + csv);
    out << "x1,x2,direction,angle,index,indicator\n";
    char buf[128];
    for (std::size_t c = 0; c < cells; ++c)
      for (int d = 0; d < wf.directions; ++d) {
        double v = wf.at(c, d);
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%d,%.6f,", wf.x[c][0],
                      wf.x[c].size() > 1 ? wf.x[c][1] : 0.0, d, wf.angles[d]);
        out << buf << (std::isfinite(v) ? std::to_string(v) : "inf") << ","
            << int(wf.wf(c, d)) << "\n";
      }
  }
  json result = {{"cells", wf.shape},
                 {"directions", wf.directions},
                 {"angles", wf.angles},
                 {"flagged", flagged},
                 {"flagged_cells", list},
                 {"projection_cells", std::count(proj.begin(), proj.end(), 1)},
                 {"singsupp_cells", std::count(ss.indicator.begin(), ss.indicator.end(), 1)},
                 {"projection_agreement", agree == cells},
                 {"csv", csv.empty() ? json(nullptr) : json(csv)}};
  return emit("wavefront",
              {{"input", o.input}, {"s", so.s}, {"directions", so.directions},
               {"stride", so.stride}, {"lift", so.lift}, {"K", o.K}},
              result, g);
}

int parametrix_check(const Options& o, const Global& g) {
  SymbolSpec s = read_symbol(o.symbol);
  GridPtr gp = symbol_grid(s, o);
  const WeightVector& w = gp->weight();
  if (o.order < 0 || o.order > 2)
    throw UsageError("--order must be 0, 1 or 2");
  auto sys = system_for(o, gp);
  ParametrixConfig pc;
  std::vector<double> kb;
  for (int j = 0; j < w.dim(); ++j)
    kb.push_back(std::pow(0.25, w[j] - 1));
  pc.window = window_of(o.window, w, std::vector<double>(w.dim(), kPi), kb);
  pc.sector = sector_of(o.sector.empty() ? std::vector<double>{1, 0, 0.5, 4} : o.sector, w);
  pc.order = o.order;
  pc.rho0 = o.rho0;
  pc.threshold = o.threshold;
  double m = quasi_order(s, w);
  auto fields = battery(gp, o.battery, g.seed);
  json config = {{"symbol", o.symbol}, {"order", o.order}, {"rho0", o.rho0},
                 {"window", window_json(pc.window)}, {"sector", sector_json(pc.sector)},
                 {"battery", o.battery}, {"grid", gp->shape()}, {"weight", w}};
  json result = {{"symbol_order", num(m)}};
  try {
    Parametrix B(to_grid_symbol(s, gp), m, pc, sys);
    result["ellipticity"] = B.ellipticity();
    result["interp_nodes"] = B.nodes();
    json per = json::array();
    double gain = 0;
    for (int J = 0; J <= o.order; ++J) {
      auto r = residual_order(B, fields, J);
      per.push_back({{"J", J}, {"residual", r}});
      gain = r.mean_gain;
    }
    result["residuals"] = per;
    double need = 1.0 / w.m_star() - 0.15;
    result["required_gain"] = need;
    return emit("parametrix-check", config, result, g, gain >= need);
  } catch (const EllipticityError& e) {
    result["error"] = e.what();
    return emit("parametrix-check", config, result, g, false);
  }
}

int nonlinear_demo(const Options& o, const Global& g) {
  ManufacturedCase c;
  if (!o.manifest.empty()) {
    c = load_case(resolve(o.manifest));
  } else {
    if (o.case_id.empty())
      throw UsageError("--case or --manifest is required");
    if (o.grid < 32 || o.grid % 2)
      throw UsageError("--grid must be an even size >= 32");
    try {
      c = make_case(o.case_id, o.grid);
    } catch (const std::invalid_argument& e) {
      std::string ids;
      for (const auto& id : case_ids())
        ids += " " + id;
      throw UsageError(std::string(e.what()) + " (known:" + ids + ")");
    }
  }
  if (!o.save_case.empty())
    save_case(c, o.save_case);
  auto sys = build_system(make_cutoff(o.K), c.u.grid());
  auto cfg = case_config(c);
  cfg.delta = o.delta;
  cfg.s = o.s.value_or(c.s);
  cfg.tolerance = o.tolerance;
  json result;
  bool pass = false;
  if (c.bundle.kind == CoefficientBundle::Kind::QuasiLinear) {
    auto r = verify_quasilinear(c, cfg, sys);
    pass = r.pass && r.hypothesis_failures.empty();
    result = r;
  } else {
    auto r = verify_fully_nonlinear(c, cfg, sys);
    pass = r.pass && r.hypothesis_failures.empty();
    result = r;
  }
  json ex = json::array();
  for (const auto& e : c.expected)
    ex.push_back({{"quantity", e.quantity}, {"value", e.value}, {"provenance", e.provenance}});
  result["expected"] = ex;
  result["description"] = c.description;
  json config = {{"case", c.id},
                 {"manifest", o.manifest.empty() ? json(nullptr) : json(o.manifest)},
                 {"grid", c.u.g().shape()},
                 {"delta", cfg.delta},
                 {"s", cfg.s},
                 {"tolerance", cfg.tolerance},
                 {"K", o.K},
                 {"x0", c.x0},
                 {"theta0", c.theta0}};
  return emit("nonlinear-demo", config, result, g, pass);
}

int selftest(const Options& o, const Global& g) {
  json items = json::array();
  bool all = true;
  auto item = [&](std::string name, double value, double tol) {
    bool ok = value <= tol;
    all = all && ok;
    items.push_back({{"name", std::move(name)}, {"value", value}, {"tol", tol}, {"pass", ok}});
  };
  std::mt19937_64 rng(g.seed);
  std::normal_distribution<double> nrm;
  auto random_field = [&](const GridPtr& gp, double R) {
    std::vector<cplx> c(gp->size());
    for (std::size_t i = 0; i < c.size(); ++i)
      if (gp->mnorm()[i] <= R && gp->representable(i))
        c[i] = {nrm(rng), nrm(rng)};
    return real_part(Field::from_spectrum(gp, c));
  };

  for (auto m : {std::vector<int>{1, 2}, std::vector<int>{1, 1}}) {
    auto gp = make_grid({64, 64}, WeightVector(m));
    auto sys = build_system(make_cutoff(o.K), gp);
    std::string tag = m[1] == 2 ? "W=(1,2)" : "W=(1,1)";
    double part = 0;
    for (std::size_t k = 0; k < gp->size(); ++k) {
      double acc = 0;
      for (int h = -1; h <= sys->h_max(); ++h)
        acc += sys->phi(h)[k];
      part = std::max(part, std::abs(acc - 1));
    }
    item("partition sum " + tag, part, 1e-10);
    Field u = random_field(gp, gp->radius());
    item("dyadic reconstruction " + tag,
         sup_norm(dyadic_blocks(u, sys).sum() - u) / sup_norm(u), 1e-10);
    double dil = 0;
    std::uniform_real_distribution<double> ux(-20, 20), ut(0.1, 10);
    for (int k = 0; k < 200; ++k) {
      Freq xi = {ux(rng), ux(rng)};
      double t = ut(rng), n = m_norm(gp->weight(), xi);
      if (n > 0)
        dil = std::max(dil, std::abs(m_norm(gp->weight(), dilate(gp->weight(), t, xi)) - t * n) /
                                (t * n));
    }
    item("dilation identity " + tag, dil, 1e-12);
  }

  auto gp = make_grid({64, 64}, WeightVector({1, 2}));
  auto sys = build_system(make_cutoff(o.K), gp);
  Field coef = Field::from_function(gp, [](const double* x) {
    return cplx(1 + 0.3 * std::abs(std::sin(x[1] / 2)) + 0.2 * std::cos(x[0]));
  });
  auto A = SymbolSpec::diffpoly({term(1.0, {2, 0}), term(1.0, {0, 4}), term(coef, {0, 2})});
  Field u = random_field(gp, 0.5 * gp->radius());
  auto sp = split_sharp_natural(A, 0.4, sys);
  Field whole = quantize(A, u);
  item("split sum on fields",
       sup_norm(quantize(sp.sharp, u) + quantize(sp.natural, u) - whole) / sup_norm(whole),
       1e-10);
  std::vector<Field> partials = {derivative(u, std::vector<int>{1, 0}),
                                 derivative(u, std::vector<int>{0, 1})};
  item("gain identity", gain_identity(u, partials).defect / sup_norm(u), 1e-10);

  auto small = make_grid({32, 32}, WeightVector({1, 2}));
  Field cs = Field::from_function(small, [](const double* x) {
    return cplx(1 + 0.5 * std::sin(x[0]) * std::cos(x[1]));
  });
  auto B = SymbolSpec::diffpoly({term(cs, {2, 0}), term(1.0, {0, 4}), term(cs, {0, 1})});
  Field v = random_field(small, 0.5 * small->radius());
  Field q1 = quantize(B, v);
  Field q2 = quantize_direct(to_grid_symbol(B, small).to_dense(), v);
  item("dual-path quantization 32^2", sup_norm(q1 - q2) / sup_norm(q1), 1e-10);

  auto bundle = bundle_by_id("fnl-aniso");
  Field us = band_limit(Field::from_function(gp, [](const double* x) {
    return cplx(1 + 0.5 * std::cos(x[0]) * std::cos(x[1]));
  }));
  Field fs_ = evaluate(bundle, us);
  double chain = 0;
  for (int j = 0; j < 2; ++j)
    chain = std::max(chain, linearize_fully_nonlinear(bundle, us, fs_, j).defect);
  item("chain rule", chain, 1e-6);
  item("analytic partials", check_partials(bundle, 20, static_cast<unsigned>(g.seed)).max_rel_zeta,
       1e-6);

  return emit("selftest", {{"K", o.K}}, {{"checks", items}}, g, all);
}

} // namespace qhm::cli
