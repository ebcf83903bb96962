#pragma once

#include <json.hpp>

#include "topo/lattice.hpp"

namespace topo {

using Json = nlohmann::json;

/// Complex matrices are nested row-major lists of [re, im] pairs.
Json to_json(const CMatrix& m);
CMatrix complex_matrix_from_json(const Json& j);

Json to_json(const HoppingSpec& spec);
HoppingSpec spec_from_json(const Json& j);

Json to_json(const MagneticFlux& flux);
MagneticFlux flux_from_json(const Json& j, int dim);

Json to_json(const FiniteGeometry& geometry);
FiniteGeometry geometry_from_json(const Json& j);

Json to_json(const BoundaryTerm& term);
BoundaryTerm boundary_from_json(const Json& j);

Json read_json_file(const std::string& path);

}  // namespace topo
