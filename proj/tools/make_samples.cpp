// Regenerates the sample data shipped in data/.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "qhm/nonlinear.hpp"

using namespace qhm;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  fs::path dir = argc > 1 ? argv[1] : "data";
  fs::create_directories(dir / "cases");
  WeightVector w({1, 2});

  auto g256 = make_grid({256, 256}, w);
  // |sin(x2/2)|: 1-D order 1 across x2 = 0, index 1/2 under W = (1,2)
  save_field(Field::from_function(g256,
                                  [](const double* x) {
                                    return cplx(std::abs(std::sin(0.5 * x[1])));
                                  }),
             dir / "x2_cusp");
  save_field(Field::from_function(g256,
                                  [](const double* x) {
                                    double s = std::sin(x[0]);
                                    return cplx(std::abs(s) < 1e-12 ? 0.0 : (s > 0 ? 1.0 : -1.0));
                                  }),
             dir / "square_wave");

  auto g128 = make_grid({128, 128}, w);
  save_field(Field::from_function(g128,
                                  [](const double* x) { return cplx(1 + 0.5 * std::sin(x[0])); }),
             dir / "coef_sin");
  nlohmann::json variable = {
      {"type", "product"},
      {"parts",
       {{{"type", "diffpoly"}, {"terms", {{{"coeff", "coef_sin"}, {"alpha", {0, 0}}}}}},
        {{"type", "weight-power"}, {"order", 2}}}}};
  std::ofstream(dir / "variable_elliptic.json") << variable.dump(2) << "\n";
  nlohmann::json aniso = {{"type", "diffpoly"},
                          {"terms",
                           {{{"const", 1}, {"alpha", {2, 0}}}, {{"const", 1}, {"alpha", {0, 4}}}}}};
  std::ofstream(dir / "aniso_laplace.json") << aniso.dump(2) << "\n";
  nlohmann::json parabola = {
      {"type", "diffpoly"},
      {"terms", {{{"const", 1}, {"alpha", {1, 0}}}, {{"const", -1}, {"alpha", {0, 2}}}}}};
  std::ofstream(dir / "parabola.json") << parabola.dump(2) << "\n";

  for (const auto& id : case_ids())
    save_case(make_case(id, 128), dir / "cases" / (id + ".json"));
  std::cout << "wrote samples to " << dir << "\n";
}
