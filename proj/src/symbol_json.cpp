#include <fstream>

#include "qhm/symbols.hpp"

namespace qhm {

namespace {

cplx parse_complex(const nlohmann::json& j) {
  if (j.is_number())
    return j.get<double>();
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  throw DataError("symbol: constant must be a number or [re, im]");
}

nlohmann::json complex_json(cplx c) {
  if (c.imag() == 0)
    return c.real();
  return {c.real(), c.imag()};
}

std::filesystem::path resolve(const std::string& stem,
                              const std::filesystem::path& base) {
  std::filesystem::path p(stem);
  return p.is_absolute() ? p : base / p;
}

GridSymbol load_grid_symbol(const nlohmann::json& j,
                            const std::filesystem::path& base) {
  auto shape = j.at("shape").get<std::vector<int>>();
  WeightVector w = j.at("weight").get<WeightVector>();
  auto g = make_grid(shape, w);
  auto path = resolve(j.at("file").get<std::string>(), base);
  path += ".f64";
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("grid symbol: cannot open " + path.string());
  std::size_t n = g->size() * g->size();
  std::vector<cplx> v(n);
  in.read(reinterpret_cast<char*>(v.data()), n * sizeof(cplx));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(cplx) || in.peek() != EOF)
    throw DataError("grid symbol: payload length does not match shape");
  if (j.contains("crc32")) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", crc32_bytes(v.data(), n * sizeof(cplx)));
    if (j["crc32"].get<std::string>() != buf)
      throw DataError("grid symbol: checksum mismatch");
  }
  return GridSymbol::dense(g, std::move(v));
}

} // namespace

SymbolSpec symbol_from_json(const nlohmann::json& j,
                            const std::filesystem::path& base) {
  if (!j.is_object() || !j.contains("type"))
    throw DataError("symbol: object with a \"type\" field expected");
  std::string type = j["type"].get<std::string>();
  SymbolSpec s;
  try {
    if (type == "weight-power") {
      s = SymbolSpec::weight_power(j.at("order").get<double>());
    } else if (type == "diffpoly") {
      std::vector<DiffTerm> terms;
      for (const auto& t : j.at("terms")) {
        DiffTerm d;
        d.alpha = t.at("alpha").get<std::vector<int>>();
        for (int a : d.alpha)
          if (a < 0)
            throw DataError("symbol: negative multi-index entry");
        if (t.contains("coeff")) {
          d.coeff_ref = t["coeff"].get<std::string>();
          d.coeff = load_field(resolve(d.coeff_ref, base));
        } else {
          d.constant = parse_complex(t.at("const"));
        }
        terms.push_back(std::move(d));
      }
      s = SymbolSpec::diffpoly(std::move(terms));
    } else if (type == "sum" || type == "product") {
      std::vector<SymbolSpec> parts;
      for (const auto& p : j.at("parts"))
        parts.push_back(symbol_from_json(p, base));
      s = type == "sum" ? SymbolSpec::sum(std::move(parts))
                        : SymbolSpec::product(std::move(parts));
    } else if (type == "grid") {
      s = SymbolSpec::from_grid(load_grid_symbol(j, base));
    } else {
      throw DataError("symbol: unknown type \"" + type + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("symbol: ") + e.what());
  }
  if (j.contains("declared_order"))
    s.declared_order = j["declared_order"].get<double>();
  if (j.contains("declared_delta"))
    s.declared_delta = j["declared_delta"].get<double>();
  return s;
}

nlohmann::json symbol_to_json(const SymbolSpec& s) {
  nlohmann::json j;
  switch (s.kind) {
  case SymbolSpec::Kind::WeightPower:
    j = {{"type", "weight-power"}, {"order", s.power}};
    break;
  case SymbolSpec::Kind::DiffPoly: {
    j = {{"type", "diffpoly"}, {"terms", nlohmann::json::array()}};
    for (const auto& t : s.terms) {
      nlohmann::json tj = {{"alpha", t.alpha}};
      if (t.coeff)
        tj["coeff"] = t.coeff_ref.empty() ? "<in-memory>" : t.coeff_ref;
      else
        tj["const"] = complex_json(t.constant);
      j["terms"].push_back(tj);
    }
    break;
  }
  case SymbolSpec::Kind::Sum:
  case SymbolSpec::Kind::Product:
    j = {{"type", s.kind == SymbolSpec::Kind::Sum ? "sum" : "product"},
         {"parts", nlohmann::json::array()}};
    for (const auto& c : s.children)
      j["parts"].push_back(symbol_to_json(c));
    break;
  case SymbolSpec::Kind::Grid:
    j = {{"type", "grid"},
         {"shape", s.grid->grid()->shape()},
         {"weight", s.grid->grid()->weight()}};
    break;
  }
  if (s.declared_order)
    j["declared_order"] = *s.declared_order;
  if (s.declared_delta != 0)
    j["declared_delta"] = s.declared_delta;
  return j;
}

} // namespace qhm
