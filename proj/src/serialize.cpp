#include "topo/serialize.hpp"

#include <fstream>

namespace topo {

namespace {

template <class T>
T require(const Json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

CMatrix optional_matrix(const Json& j, const char* key) {
  return j.contains(key) && !j.at(key).is_null() ? complex_matrix_from_json(j.at(key)) : CMatrix();
}

}  // namespace

Json to_json(const CMatrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back({m(i, k).real(), m(i, k).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

CMatrix complex_matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("complex matrix must be a non-empty list of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  CMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw ConfigError("ragged complex matrix");
    for (Eigen::Index k = 0; k < cols; ++k) {
      const Json& e = row.at(static_cast<std::size_t>(k));
      if (e.is_number()) {
        m(i, k) = e.get<double>();
      } else if (e.is_array() && e.size() == 2) {
        m(i, k) = Complex(e[0].get<double>(), e[1].get<double>());
      } else {
        throw ConfigError("complex entries are numbers or [re, im] pairs");
      }
    }
  }
  return m;
}

Json to_json(const HoppingSpec& spec) {
  Json hops = Json::array();
  for (const Hop& h : spec.hops) {
    Json e{{"displacement", h.displacement}, {"constant", to_json(h.constant)}};
    if (h.disorder.size() != 0) e["disorder"] = to_json(h.disorder);
    hops.push_back(std::move(e));
  }
  Json j{{"id", spec.id},
         {"dimension", spec.dimension},
         {"fiber_dim", spec.fiber_dim},
         {"disorder_amplitude", spec.disorder_amplitude},
         {"hops", hops}};
  if (spec.chiral_symmetry) j["chiral_symmetry"] = to_json(*spec.chiral_symmetry);
  return j;
}

HoppingSpec spec_from_json(const Json& j) {
  HoppingSpec s;
  s.id = j.value("id", std::string("model"));
  s.dimension = require<int>(j, "dimension");
  s.fiber_dim = require<int>(j, "fiber_dim");
  s.disorder_amplitude = j.value("disorder_amplitude", 0.0);
  for (const Json& h : require<Json>(j, "hops"))
    s.hops.push_back({require<Site>(h, "displacement"), complex_matrix_from_json(require<Json>(h, "constant")),
                      optional_matrix(h, "disorder")});
  if (j.contains("chiral_symmetry") && !j["chiral_symmetry"].is_null())
    s.chiral_symmetry = complex_matrix_from_json(j["chiral_symmetry"]);
  s.validate();
  return s;
}

Json to_json(const MagneticFlux& flux) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < flux.phi.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < flux.phi.cols(); ++k) row.push_back(flux.phi(i, k));
    rows.push_back(std::move(row));
  }
  return Json{{"phi", rows}};
}

MagneticFlux flux_from_json(const Json& j, int dim) {
  if (j.is_null()) return MagneticFlux::none(dim);
  if (j.is_number()) {
    if (dim < 2) throw ConfigError("scalar flux needs dimension >= 2");
    return MagneticFlux::planar(dim, 0, 1, j.get<double>());
  }
  const auto rows = require<std::vector<std::vector<double>>>(j, "phi");
  if (static_cast<int>(rows.size()) != dim) throw ConfigError("flux matrix has wrong dimension");
  MagneticFlux f = MagneticFlux::none(dim);
  for (int i = 0; i < dim; ++i) {
    if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != dim) throw ConfigError("flux matrix is not square");
    for (int k = 0; k < dim; ++k) f.phi(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  f.validate();
  return f;
}

Json to_json(const FiniteGeometry& g) {
  Json b = Json::array();
  for (Boundary c : g.boundary) b.push_back(c == Boundary::periodic ? "periodic" : "open");
  return Json{{"sides", g.sides}, {"boundary", b}, {"half_space", g.half_space}};
}

FiniteGeometry geometry_from_json(const Json& j) {
  FiniteGeometry g;
  g.sides = require<std::vector<int>>(j, "sides");
  for (const auto& s : require<std::vector<std::string>>(j, "boundary")) {
    if (s == "periodic") {
      g.boundary.push_back(Boundary::periodic);
    } else if (s == "open") {
      g.boundary.push_back(Boundary::open);
    } else {
      throw ConfigError("boundary must be 'periodic' or 'open', got '" + s + "'");
    }
  }
  g.half_space = j.value("half_space", false);
  g.validate();
  return g;
}

Json to_json(const BoundaryTerm& term) {
  Json terms = Json::array();
  for (const LayeredHop& t : term.terms) {
    Json e{{"from_layer", t.from_layer},
           {"to_layer", t.to_layer},
           {"edge_displacement", t.edge_displacement},
           {"constant", to_json(t.constant)}};
    if (t.disorder.size() != 0) e["disorder"] = to_json(t.disorder);
    terms.push_back(std::move(e));
  }
  return Json{{"terms", terms}};
}

BoundaryTerm boundary_from_json(const Json& j) {
  BoundaryTerm b;
  if (j.is_null()) return b;
  for (const Json& t : require<Json>(j, "terms"))
    b.terms.push_back({require<int>(t, "from_layer"), require<int>(t, "to_layer"), require<Site>(t, "edge_displacement"),
                       complex_matrix_from_json(require<Json>(t, "constant")), optional_matrix(t, "disorder")});
  return b;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace topo
