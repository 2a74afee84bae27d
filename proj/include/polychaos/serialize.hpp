#pragma once

// JSON and CSV forms of measures, bases, triple-product tables and PCE
// vectors. Basis and tensor files carry a format version and are checked
// against the basis id on load.

#include <iosfwd>

#include <nlohmann/json.hpp>

#include "polychaos/pce.hpp"

namespace polychaos {

inline constexpr int kArtifactVersion = 1;

/// Custom measures have no JSON form (UnsupportedMeasure).
nlohmann::json measure_to_json(const MeasureDescriptor& m);
/// Throws ConfigError on an unknown kind or bad parameters.
MeasureDescriptor measure_from_json(const nlohmann::json& j);

nlohmann::json basis_to_json(const TotalDegreeBasis& basis);
TotalDegreeBasis basis_from_json(const nlohmann::json& j);

nlohmann::json tensor_to_json(const TripleProductTensor& t);
/// Throws ConfigError when the version or the basis id does not match.
TripleProductTensor tensor_from_json(const nlohmann::json& j, const TotalDegreeBasis& basis);

/// {"basis": id, "rows": n, "terms": L+1, "coefficients": row-major}
nlohmann::json pce_to_json(const PceVector& p);
PceVector pce_from_json(const nlohmann::json& j, BasisPtr basis);

/// One row per output, one column per basis index.
void write_csv(std::ostream& os, const PceVector& p);

}  // namespace polychaos
