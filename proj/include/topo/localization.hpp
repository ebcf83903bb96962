#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topo/lattice.hpp"

namespace topo {

/// Disorder-averaged |<x,a|(H - z)^{-1}|y,b>|^s binned by the distance
/// |x - y| rounded to the nearest integer, y the central site.
struct MomentProfile {
  Complex z;
  double s = 0.5;
  int size = 0;  // linear size of the sample
  std::vector<int> distance;
  std::vector<double> mean;
  std::vector<double> stderr_mean;  // over seeds
  std::size_t samples = 0;          // number of seeds
  bool shifted = false;             // Im z was increased because H - z was singular
  double spectrum_distance = 0.0;   // min over seeds of dist(Re z, finite-sample spectrum)
  double spectrum_min = 0.0;
  double spectrum_max = 0.0;
};

MomentProfile resolvent_moments(const HoppingSpec& spec, const MagneticFlux& flux, const FiniteGeometry& geometry,
                                Complex z, double s, const std::vector<std::uint64_t>& seeds);

/// Least-squares fit log(mean) = log A - beta * distance.
struct DecayFit {
  Complex z;
  double s = 0.5;
  int size = 0;
  double amplitude = 0.0;
  double beta = 0.0;
  double beta_stderr = 0.0;
  double quality = 0.0;  // coefficient of determination, clamped to [0, 1]
  int dmin = 0;
  int dmax = 0;
  std::size_t bins = 0;
  std::size_t samples = 0;

  std::string to_json() const;
};

DecayFit fit_decay(const MomentProfile& profile, int dmin, int dmax);

enum class Localization { localized, not_established };

struct ClassifyOptions {
  double beta_threshold = 0.05;
  double min_quality = 0.8;
};

/// Fits at >= 2 sizes of the same energy; never answers "delocalized".
Localization classify_energy(const std::vector<DecayFit>& fits, const ClassifyOptions& options = {});

std::string to_string(Localization l);

void write_moments_csv(const MomentProfile& profile, const std::string& path);

}  // namespace topo
