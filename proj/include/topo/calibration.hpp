#pragma once

#include <iosfwd>
#include <string>

#include "topo/serialize.hpp"

namespace topo {

/// Relates the sign of even_chern to a momentum-space reference on the
/// Hofstadter model at flux 1/3 with the Fermi level in the lowest gap.
struct CalibrationRecord {
  std::string id;          // FNV-1a hash of the numeric content
  int sign = 1;            // even_chern = sign * oracle
  double real_space = 0.0;
  double oracle = 0.0;
  double flux = 1.0 / 3.0;
  int size = 24;
  double fermi_level = 0.0;

  Json to_json() const;
  static CalibrationRecord from_json(const Json& j);
};

/// Momentum-space Chern number of the lowest band of the flux p/q Hofstadter
/// model (Fukui-Hatsugai-Suzuki lattice field strength on a grid x grid mesh).
double hofstadter_lowest_band_chern(int p, int q, int grid);

CalibrationRecord calibrate_sign();

/// Reads a stored record; if it is missing or corrupt, recalibrates, writes
/// it back and reports the reason on `warn`.
CalibrationRecord load_or_calibrate(const std::string& path, std::ostream& warn);

}  // namespace topo
