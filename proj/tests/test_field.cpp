#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "qhm/field.hpp"

using namespace qhm;

namespace {

Field random_field(GridPtr g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::vector<cplx> v(g->size());
  for (auto& c : v)
    c = {n(rng), n(rng)};
  return Field(g, v);
}

// band-limited real field with random modes |k_j| <= kmax
Field random_trig(GridPtr g, int kmax, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::vector<cplx> c(g->size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    bool ok = true;
    for (int j = 0; j < g->dim(); ++j)
      ok = ok && std::abs(g->freq(i, j)) <= kmax;
    if (ok)
      c[i] = {n(rng), n(rng)};
  }
  return real_part(Field::from_spectrum(g, c));
}

} // namespace

TEST_CASE("grid validation") {
  WeightVector w({1, 2});
  CHECK_THROWS_AS(Grid({63, 64}, w), std::invalid_argument);
  CHECK_THROWS_AS(Grid({6, 64}, w), std::invalid_argument);
  Grid g({16, 16}, w);
  CHECK(g.radius() == doctest::Approx(8));
  CHECK(g.freq(g.index_of_freq(std::vector<int>{-3, 5}), 0) == -3);
  CHECK(g.freq(g.index_of_freq(std::vector<int>{-3, 5}), 1) == 5);
}

TEST_CASE("spectrum conventions") {
  auto g = make_grid({16, 32}, WeightVector({1, 2}));
  Field one = Field::from_function(g, [](const double*) { return cplx(1); });
  const auto& c = one.spectrum();
  CHECK(std::abs(c[0] - 1.0) < 1e-15);
  double rest = 0;
  for (std::size_t i = 1; i < c.size(); ++i)
    rest = std::max(rest, std::abs(c[i]));
  CHECK(rest < 1e-15);

  Field mode = Field::from_function(
      g, [](const double* x) { return std::exp(cplx(0, 3 * x[0] - 5 * x[1])); });
  auto k = g->index_of_freq(std::vector<int>{3, -5});
  const auto& cm = mode.spectrum();
  for (std::size_t i = 0; i < cm.size(); ++i)
    CHECK(std::abs(cm[i] - (i == k ? 1.0 : 0.0)) < 1e-13);
}

TEST_CASE("round trip and Parseval") {
  auto g = make_grid({32, 16}, WeightVector({1, 1}));
  Field u = random_field(g, 4);
  Field back = Field::from_spectrum(g, u.spectrum());
  CHECK(sup_norm(back - u) <= 1e-12 * sup_norm(u));
  CHECK(spectral_l2(u) == doctest::Approx(l2_mean(u)).epsilon(1e-12));
  Field v(u);
  v.to_spectrum();
  CHECK(v.has_spectrum());
}

TEST_CASE("sup norm") {
  auto g = make_grid({16, 16}, WeightVector({1, 1}));
  Field c = Field::from_function(g, [](const double*) { return cplx(-2.5, 0); });
  CHECK(sup_norm(c) == 2.5);
  Field s = Field::from_function(g, [](const double* x) { return cplx(std::sin(x[0])); });
  CHECK(sup_norm(s) == doctest::Approx(1).epsilon(1e-15));
  Field r = random_field(g, 9);
  double brute = 0;
  for (std::size_t i = 0; i < r.size(); ++i)
    brute = std::max(brute, std::hypot(r[i].real(), r[i].imag()));
  CHECK(sup_norm(r) == doctest::Approx(brute).epsilon(1e-15));
}

TEST_CASE("spectral derivative against high-order finite differences") {
  auto g = make_grid({64, 64}, WeightVector({1, 2}));
  Field u = random_trig(g, 2, 21);
  // D_1 u = -i du/dx1; compare i D_1 u with an 8th-order stencil
  Field d = cplx(0, 1) * derivative(u, std::vector<int>{1, 0});
  const double h = 2 * M_PI / 64;
  const double cf[4] = {4.0 / 5, -1.0 / 5, 4.0 / 105, -1.0 / 280};
  double err = 0, scale = sup_norm(d);
  for (std::size_t i = 0; i < u.size(); ++i) {
    int a = g->coord(i, 0), b = g->coord(i, 1);
    double s = 0;
    for (int k = 1; k <= 4; ++k) {
      int p = (a + k) % 64, m = (a - k + 64) % 64;
      s += cf[k - 1] * (u[p * 64 + b].real() - u[m * 64 + b].real());
    }
    err = std::max(err, std::abs(s / h - d[i].real()));
  }
  CHECK(err / scale <= 1e-8);
}

TEST_CASE("field file round trip") {
  auto dir = std::filesystem::temp_directory_path() / "qhm_field_test";
  std::filesystem::create_directories(dir);
  auto g = make_grid({64, 64}, WeightVector({1, 2}));
  Field u = random_field(g, 5);
  save_field(u, dir / "u");
  Field v = load_field(dir / "u");
  for (std::size_t i = 0; i < u.size(); ++i) {
    CHECK(std::memcmp(&u.values()[i], &v.values()[i], sizeof(cplx)) == 0);
    if (std::memcmp(&u.values()[i], &v.values()[i], sizeof(cplx)))
      break;
  }
  Field r = real_part(u);
  save_field(r, dir / "r");
  CHECK(load_field(dir / "r").values() == r.values());

  // truncated payload
  std::filesystem::resize_file(dir / "u.f64", 1000);
  CHECK_THROWS_AS(load_field(dir / "u"), DataError);

  // corrupted payload byte
  save_field(u, dir / "c");
  {
    std::fstream f(dir / "c.f64", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(17);
    f.put('\x5a');
  }
  CHECK_THROWS_AS(load_field(dir / "c"), DataError);

  // odd N_j in header
  save_field(u, dir / "o");
  auto h = nlohmann::json::parse(std::ifstream(dir / "o.json"));
  h["shape"] = {63, 64};
  std::ofstream(dir / "o.json") << h.dump();
  CHECK_THROWS_AS(load_field(dir / "o"), DataError);

  std::ofstream(dir / "m.json") << "{not json";
  CHECK_THROWS_AS(load_field(dir / "m"), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("band limiting onto the representable M-ball") {
  auto g = make_grid({32, 32}, WeightVector({1, 2}));
  Field u = random_field(g, 8);
  Field b = band_limit(u);
  CHECK(is_band_limited(b, 1e-12));
  CHECK_FALSE(is_band_limited(u, 1e-12));
  CHECK(sup_norm(band_limit(b) - b) < 1e-12 * sup_norm(b));
}
