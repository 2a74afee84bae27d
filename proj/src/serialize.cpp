#include "polychaos/serialize.hpp"

#include <algorithm>
#include <ostream>

#include "polychaos/error.hpp"
#include "polychaos/io.hpp"

namespace polychaos {

using nlohmann::json;

namespace {

double number(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw ConfigError(std::string("measure field '") + key + "' must be a number");
  return j.at(key).get<double>();
}

void check_version(const json& j, const char* what) {
  if (!j.contains("version") || j.at("version") != kArtifactVersion)
    throw ConfigError(std::string(what) + " artifact has an unsupported version");
}

}  // namespace

json measure_to_json(const MeasureDescriptor& m) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GaussianMeasure>)
          return {{"kind", "gaussian"}, {"mean", v.mean}, {"stddev", v.stddev}};
        else if constexpr (std::is_same_v<T, UniformMeasure>)
          return {{"kind", "uniform"}, {"lo", v.lo}, {"hi", v.hi}};
        else if constexpr (std::is_same_v<T, GammaMeasure>)
          return {{"kind", "gamma"}, {"shape", v.shape}};
        else if constexpr (std::is_same_v<T, BetaMeasure>)
          return {{"kind", "beta"}, {"p", v.p}, {"q", v.q}};
        else
          throw UnsupportedMeasure("custom measures have no serialized form");
      },
      m.value());
}

MeasureDescriptor measure_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
    throw ConfigError("measure needs a string 'kind'");
  const auto kind = j.at("kind").get<std::string>();
  try {
    if (kind == "gaussian") return MeasureDescriptor::gaussian(number(j, "mean"), number(j, "stddev"));
    if (kind == "uniform") return MeasureDescriptor::uniform(number(j, "lo"), number(j, "hi"));
    if (kind == "gamma") return MeasureDescriptor::gamma(number(j, "shape"));
    if (kind == "beta") return MeasureDescriptor::beta(number(j, "p"), number(j, "q"));
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  throw ConfigError("unknown measure kind '" + kind + "'");
}

json basis_to_json(const TotalDegreeBasis& basis) {
  json measures = json::array();
  for (const auto& f : basis.families()) measures.push_back(measure_to_json(f.measure()));
  json idx = json::array();
  for (const auto& a : basis.indices()) idx.push_back(a.exponents);
  return {{"version", kArtifactVersion}, {"id", basis.id()},     {"degree", basis.degree()},
          {"measures", measures},        {"indices", idx}};
}

TotalDegreeBasis basis_from_json(const json& j) {
  check_version(j, "basis");
  std::vector<PolynomialFamily> fams;
  const int d = j.at("degree").get<int>();
  for (const auto& m : j.at("measures")) fams.push_back(build_family(measure_from_json(m), d));
  TotalDegreeBasis basis(std::move(fams), d);
  if (basis.id() != j.at("id").get<std::string>())
    throw ConfigError("basis artifact id does not match its measures");
  std::size_t l = 0;
  for (const auto& e : j.at("indices")) {
    if (l >= basis.size() || basis.indices()[l].exponents != e.get<std::vector<int>>())
      throw ConfigError("basis artifact index list does not match the ordering");
    ++l;
  }
  if (l != basis.size()) throw ConfigError("basis artifact index list is incomplete");
  return basis;
}

json tensor_to_json(const TripleProductTensor& t) {
  json triples = json::array();
  for (const auto& e : t.entries())
    if (e.i <= e.j && e.j <= e.l) triples.push_back(json::array({e.i, e.j, e.l, e.value}));
  return {{"version", kArtifactVersion},
          {"basis", t.basis_id()},
          {"size", t.basis_size()},
          {"triples", triples}};
}

TripleProductTensor tensor_from_json(const json& j, const TotalDegreeBasis& basis) {
  check_version(j, "tensor");
  if (j.at("basis").get<std::string>() != basis.id() || j.at("size").get<std::size_t>() != basis.size())
    throw ConfigError("tensor artifact belongs to a different basis");
  std::vector<TripleProductTensor::Entry> entries;
  for (const auto& t : j.at("triples")) {
    std::uint32_t idx[3] = {t.at(0).get<std::uint32_t>(), t.at(1).get<std::uint32_t>(),
                            t.at(2).get<std::uint32_t>()};
    const double v = t.at(3).get<double>();
    std::sort(idx, idx + 3);
    do {
      entries.push_back({idx[0], idx[1], idx[2], v});
    } while (std::next_permutation(idx, idx + 3));
  }
  return TripleProductTensor(basis.size(), basis.id(), std::move(entries));
}

json pce_to_json(const PceVector& p) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(p.coeffs().size()));
  for (Eigen::Index r = 0; r < p.rows(); ++r)
    for (Eigen::Index c = 0; c < p.terms(); ++c) flat.push_back(p.coeffs()(r, c));
  return {{"basis", p.basis()->id()}, {"rows", p.rows()}, {"terms", p.terms()}, {"coefficients", flat}};
}

PceVector pce_from_json(const json& j, BasisPtr basis) {
  if (j.at("basis").get<std::string>() != basis->id())
    throw ConfigError("expansion belongs to a different basis");
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto terms = j.at("terms").get<Eigen::Index>();
  const auto flat = j.at("coefficients").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * terms)
    throw ConfigError("coefficient list length does not match rows x terms");
  Eigen::MatrixXd c(rows, terms);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index k = 0; k < terms; ++k) c(r, k) = flat[static_cast<std::size_t>(r * terms + k)];
  return PceVector(std::move(basis), std::move(c));
}

void write_csv(std::ostream& os, const PceVector& p) {
  os << "output";
  for (Eigen::Index l = 0; l < p.terms(); ++l) os << ",c" << l;
  os << '\n';
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    os << r;
    for (Eigen::Index l = 0; l < p.terms(); ++l) os << ',' << format_double(p.coeffs()(r, l));
    os << '\n';
  }
}

}  // namespace polychaos
