#include "topo/models.hpp"

#include <sstream>

namespace topo {

CMatrix pauli(int i) {
  const Complex I(0.0, 1.0);
  CMatrix s(2, 2);
  switch (i) {
    case 0: s << 1, 0, 0, 1; break;
    case 1: s << 0, 1, 1, 0; break;
    case 2: s << 0, -I, I, 0; break;
    case 3: s << 1, 0, 0, -1; break;
    default: throw PreconditionError("pauli index must be 0..3");
  }
  return s;
}

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

namespace models {

namespace {

Site unit(int dim, int axis) {
  Site e(static_cast<std::size_t>(dim), 0);
  e[static_cast<std::size_t>(axis)] = 1;
  return e;
}

std::string tag(const std::string& family, std::initializer_list<std::pair<const char*, double>> params) {
  std::ostringstream os;
  os << family;
  for (const auto& [k, v] : params) os << ';' << k << '=' << v;
  return os.str();
}

}  // namespace

HoppingSpec qwz(double m, double disorder) {
  const Complex I(0.0, 1.0);
  HoppingSpec s;
  s.id = tag("qwz", {{"m", m}, {"W", disorder}});
  s.dimension = 2;
  s.fiber_dim = 2;
  s.disorder_amplitude = disorder;
  s.hops.push_back({{0, 0}, m * pauli(3), pauli(0)});
  s.hops.push_back({unit(2, 0), 0.5 * (pauli(3) - I * pauli(1)), CMatrix()});
  s.hops.push_back({unit(2, 1), 0.5 * (pauli(3) - I * pauli(2)), CMatrix()});
  return s;
}

HoppingSpec ssh(double t1, double t2, double disorder) {
  HoppingSpec s;
  s.id = tag("ssh", {{"t1", t1}, {"t2", t2}, {"W", disorder}});
  s.dimension = 1;
  s.fiber_dim = 2;
  s.disorder_amplitude = disorder;
  CMatrix inter = CMatrix::Zero(2, 2);
  inter(1, 0) = t2;
  s.hops.push_back({{0}, t1 * pauli(1), pauli(1)});
  s.hops.push_back({{1}, inter, CMatrix()});
  s.chiral_symmetry = pauli(3);
  return s;
}

HoppingSpec hofstadter(double t, double disorder) {
  HoppingSpec s;
  s.id = tag("hofstadter", {{"t", t}, {"W", disorder}});
  s.dimension = 2;
  s.fiber_dim = 1;
  s.disorder_amplitude = disorder;
  const CMatrix one = CMatrix::Identity(1, 1);
  s.hops.push_back({{0, 0}, CMatrix::Zero(1, 1), one});
  s.hops.push_back({unit(2, 0), -t * one, CMatrix()});
  s.hops.push_back({unit(2, 1), -t * one, CMatrix()});
  return s;
}

HoppingSpec anderson(int dim, double t, double disorder) {
  if (dim < 1) throw ConfigError("anderson: dimension must be positive");
  HoppingSpec s;
  s.id = tag("anderson", {{"d", dim}, {"t", t}, {"W", disorder}});
  s.dimension = dim;
  s.fiber_dim = 1;
  s.disorder_amplitude = disorder;
  const CMatrix one = CMatrix::Identity(1, 1);
  s.hops.push_back({Site(static_cast<std::size_t>(dim), 0), CMatrix::Zero(1, 1), one});
  for (int i = 0; i < dim; ++i) s.hops.push_back({unit(dim, i), -t * one, CMatrix()});
  return s;
}

HoppingSpec chiral3d(double m, double disorder) {
  const Complex I(0.0, 1.0);
  const CMatrix g4 = kron(pauli(2), pauli(0));
  HoppingSpec s;
  s.id = tag("chiral3d", {{"m", m}, {"W", disorder}});
  s.dimension = 3;
  s.fiber_dim = 4;
  s.disorder_amplitude = disorder;
  s.hops.push_back({{0, 0, 0}, m * g4, g4});
  for (int i = 0; i < 3; ++i) s.hops.push_back({unit(3, i), 0.5 * (g4 - I * kron(pauli(1), pauli(i + 1))), CMatrix()});
  s.chiral_symmetry = kron(pauli(3), pauli(0));
  return s;
}

HoppingSpec atomic(int dim, const std::vector<double>& levels, double disorder) {
  if (levels.empty()) throw ConfigError("atomic: at least one level required");
  HoppingSpec s;
  s.id = "atomic";
  s.dimension = dim;
  s.fiber_dim = static_cast<int>(levels.size());
  s.disorder_amplitude = disorder;
  RVector diag = Eigen::Map<const RVector>(levels.data(), static_cast<Eigen::Index>(levels.size()));
  s.hops.push_back({Site(static_cast<std::size_t>(dim), 0), diag.cast<Complex>().asDiagonal(),
                    CMatrix::Identity(s.fiber_dim, s.fiber_dim)});
  return s;
}

}  // namespace models

std::map<std::string, double> model_defaults(const std::string& family) {
  if (family == "qwz") return {{"m", 1.0}, {"W", 0.0}};
  if (family == "ssh") return {{"t1", 0.0}, {"t2", 1.0}, {"W", 0.0}};
  if (family == "hofstadter") return {{"t", 1.0}, {"W", 0.0}};
  if (family == "anderson") return {{"d", 1.0}, {"t", 1.0}, {"W", 0.0}};
  if (family == "chiral3d") return {{"m", 2.0}, {"W", 0.0}};
  if (family == "atomic") return {{"d", 1.0}, {"level0", -1.0}, {"level1", 1.0}, {"W", 0.0}};
  throw ConfigError("unknown model family '" + family + "'");
}

HoppingSpec make_model(const std::string& family, const std::map<std::string, double>& params) {
  auto p = model_defaults(family);
  for (const auto& [k, v] : params) {
    if (!p.count(k)) throw ConfigError("model '" + family + "' has no parameter '" + k + "'");
    p[k] = v;
  }
  if (family == "qwz") return models::qwz(p["m"], p["W"]);
  if (family == "ssh") return models::ssh(p["t1"], p["t2"], p["W"]);
  if (family == "hofstadter") return models::hofstadter(p["t"], p["W"]);
  if (family == "anderson") return models::anderson(static_cast<int>(p["d"]), p["t"], p["W"]);
  if (family == "chiral3d") return models::chiral3d(p["m"], p["W"]);
  // atomic
  std::vector<double> levels{p["level0"], p["level1"]};
  return models::atomic(static_cast<int>(p["d"]), levels, p["W"]);
}

}  // namespace topo
