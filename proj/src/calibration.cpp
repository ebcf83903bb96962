#include "topo/calibration.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "topo/invariants.hpp"
#include "topo/lattice.hpp"
#include "topo/models.hpp"
#include "topo/spectral.hpp"

namespace topo {

namespace {

/// Magnetic Bloch matrix in the Landau gauge of hop_phase: kappa is the
/// momentum conjugate to the q-site magnetic cell along axis 1.
CMatrix magnetic_bloch(int p, int q, double kappa, double k2) {
  CMatrix h = CMatrix::Zero(q, q);
  const double phi = static_cast<double>(p) / q;
  for (int j = 0; j < q; ++j) {
    h(j, j) = -2.0 * std::cos(k2 - 2.0 * kPi * phi * j);
    if (q == 1) {
      h(0, 0) += -2.0 * std::cos(kappa);
      continue;
    }
    const int next = (j + 1) % q;
    const Complex t = next == 0 ? -std::polar(1.0, kappa) : Complex(-1.0);
    h(j, next) += t;
    h(next, j) += std::conj(t);
  }
  return h;
}

std::string fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Json content(const CalibrationRecord& r) {
  return Json{{"sign", r.sign},         {"real_space", r.real_space}, {"oracle", r.oracle},
              {"flux", r.flux},         {"size", r.size},             {"fermi_level", r.fermi_level}};
}

}  // namespace

double hofstadter_lowest_band_chern(int p, int q, int grid) {
  auto lowest = [&](int a, int b) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(magnetic_bloch(p, q, 2.0 * kPi * a / grid, 2.0 * kPi * b / grid));
    return CVector(es.eigenvectors().col(0));
  };
  std::vector<CVector> u(static_cast<std::size_t>(grid) * grid);
  for (int a = 0; a < grid; ++a)
    for (int b = 0; b < grid; ++b) u[static_cast<std::size_t>(a) * grid + b] = lowest(a, b);
  auto at = [&](int a, int b) -> const CVector& {
    return u[static_cast<std::size_t>((a + grid) % grid) * grid + (b + grid) % grid];
  };
  auto link = [](const CVector& x, const CVector& y) {
    const Complex o = x.dot(y);
    return o / std::abs(o);
  };
  double total = 0.0;
  for (int a = 0; a < grid; ++a)
    for (int b = 0; b < grid; ++b) {
      const Complex f = link(at(a, b), at(a + 1, b)) * link(at(a + 1, b), at(a + 1, b + 1)) *
                        std::conj(link(at(a, b + 1), at(a + 1, b + 1))) * std::conj(link(at(a, b), at(a, b + 1)));
      total += std::arg(f);
    }
  return total / (2.0 * kPi);
}

Json CalibrationRecord::to_json() const {
  Json j = content(*this);
  j["id"] = id;
  return j;
}

CalibrationRecord CalibrationRecord::from_json(const Json& j) {
  CalibrationRecord r;
  try {
    r.sign = j.at("sign").get<int>();
    r.real_space = j.at("real_space").get<double>();
    r.oracle = j.at("oracle").get<double>();
    r.flux = j.at("flux").get<double>();
    r.size = j.at("size").get<int>();
    r.fermi_level = j.at("fermi_level").get<double>();
    r.id = j.at("id").get<std::string>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("calibration record: ") + e.what());
  }
  if (r.sign != 1 && r.sign != -1) throw ConfigError("calibration record: sign must be +1 or -1");
  if (fnv1a(content(r).dump()) != r.id) throw ConfigError("calibration record: id does not match its content");
  return r;
}

CalibrationRecord calibrate_sign() {
  constexpr int p = 1;
  constexpr int q = 3;
  constexpr int grid = 48;
  CalibrationRecord r;
  r.flux = static_cast<double>(p) / q;

  // Fermi level: middle of the gap between the two lowest magnetic bands.
  double band0_max = -1e300;
  double band1_min = 1e300;
  for (int a = 0; a < grid; ++a)
    for (int b = 0; b < grid; ++b) {
      Eigen::SelfAdjointEigenSolver<CMatrix> es(magnetic_bloch(p, q, 2.0 * kPi * a / grid, 2.0 * kPi * b / grid),
                                                Eigen::EigenvaluesOnly);
      band0_max = std::max(band0_max, es.eigenvalues()(0));
      band1_min = std::min(band1_min, es.eigenvalues()(1));
    }
  if (!(band1_min > band0_max)) throw NumericalError("calibration: no gap above the lowest Hofstadter band");
  r.fermi_level = 0.5 * (band0_max + band1_min);
  r.oracle = hofstadter_lowest_band_chern(p, q, grid);

  const FiniteGeometry box = FiniteGeometry::box(2, r.size);
  const HoppingSpec spec = models::hofstadter();
  const FiniteModel model = build_bulk(spec, MagneticFlux::planar(2, 0, 1, r.flux), box, sample_disorder(0, box));
  const SpectralDecomposition dec = decompose(model);
  const FermiProjection proj = fermi_projection(dec, r.fermi_level);
  const InvariantResult ch = even_chern(proj.matrix, box, 1, central_region(box, r.size / 4));
  r.real_space = ch.raw;
  if (ch.deviation > 0.1 || ch.nearest == 0 || std::abs(std::lround(r.oracle)) != std::abs(ch.nearest))
    throw NumericalError("calibration reference run did not converge (real space " + std::to_string(ch.raw) +
                         ", oracle " + std::to_string(r.oracle) + ")");
  r.sign = (ch.nearest > 0) == (r.oracle > 0) ? 1 : -1;
  r.id = fnv1a(content(r).dump());
  return r;
}

CalibrationRecord load_or_calibrate(const std::string& path, std::ostream& warn) {
  std::ifstream in(path);
  if (in) {
    try {
      return CalibrationRecord::from_json(Json::parse(in));
    } catch (const std::exception& e) {
      warn << "warning: calibration record '" << path << "' unusable (" << e.what() << "); recalibrating\n";
    }
  }
  CalibrationRecord r = calibrate_sign();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write calibration record '" + path + "'");
  out << r.to_json().dump(2) << '\n';
  return r;
}

}  // namespace topo
