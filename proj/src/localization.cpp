#include "topo/localization.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "topo/linalg.hpp"

namespace topo {

MomentProfile resolvent_moments(const HoppingSpec& spec, const MagneticFlux& flux, const FiniteGeometry& geometry,
                                Complex z, double s, const std::vector<std::uint64_t>& seeds) {
  if (!(s > 0.0 && s < 1.0)) throw ConfigError("fractional moment exponent s must lie in (0, 1)");
  if (z.imag() < 0.0) throw ConfigError("resolvent energy needs Im z >= 0");
  if (seeds.empty()) throw ConfigError("resolvent_moments needs at least one seed");
  geometry.validate();
  if (geometry.half_space) throw ConfigError("resolvent_moments runs on a box, not a slab");

  const int n = spec.fiber_dim;
  Site centre(geometry.sides.size());
  for (std::size_t i = 0; i < centre.size(); ++i) centre[i] = geometry.sides[i] / 2;
  const std::size_t source = geometry.index(centre);
  const std::size_t sites = geometry.num_sites();
  std::vector<int> bin_of(sites);
  int max_bin = 0;
  for (std::size_t a = 0; a < sites; ++a) {
    bin_of[a] = static_cast<int>(std::lround(geometry.distance(source, a)));
    max_bin = std::max(max_bin, bin_of[a]);
  }
  std::vector<std::size_t> bin_count(static_cast<std::size_t>(max_bin) + 1, 0);
  for (int b : bin_of) ++bin_count[static_cast<std::size_t>(b)];

  MomentProfile out;
  out.z = z;
  out.s = s;
  out.size = *std::max_element(geometry.sides.begin(), geometry.sides.end());
  out.samples = seeds.size();
  out.spectrum_distance = std::numeric_limits<double>::infinity();
  out.spectrum_min = std::numeric_limits<double>::infinity();
  out.spectrum_max = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> per_seed(seeds.size(), std::vector<double>(bin_count.size(), 0.0));

  for (std::size_t k = 0; k < seeds.size(); ++k) {
    const FiniteModel model = build_bulk(spec, flux, geometry, sample_disorder(seeds[k], geometry));
    const RVector ev = hermitian_eigenvalues(model.matrix);
    out.spectrum_min = std::min(out.spectrum_min, ev.minCoeff());
    out.spectrum_max = std::max(out.spectrum_max, ev.maxCoeff());
    out.spectrum_distance = std::min(out.spectrum_distance, (ev.array() - z.real()).abs().minCoeff());

    Complex zk = z;
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    CMatrix shifted = model.matrix;
    shifted.diagonal().array() -= zk;
    Eigen::PartialPivLU<CMatrix> lu(shifted);
    const auto pivots = lu.matrixLU().diagonal().cwiseAbs();
    if (pivots.minCoeff() < 1e-12 * scale) {
      zk += Complex(0.0, 1e-6 * scale);
      out.shifted = true;
      shifted = model.matrix;
      shifted.diagonal().array() -= zk;
      lu.compute(shifted);
    }
    CMatrix rhs = CMatrix::Zero(model.dimension(), n);
    for (int b = 0; b < n; ++b) rhs(static_cast<Eigen::Index>(source) * n + b, b) = 1.0;
    const CMatrix g = lu.solve(rhs);
    for (std::size_t a = 0; a < sites; ++a) {
      double acc = 0.0;
      for (int al = 0; al < n; ++al)
        for (int b = 0; b < n; ++b) acc += std::pow(std::abs(g(static_cast<Eigen::Index>(a) * n + al, b)), s);
      per_seed[k][static_cast<std::size_t>(bin_of[a])] += acc;
    }
    for (std::size_t b = 0; b < bin_count.size(); ++b)
      per_seed[k][b] /= static_cast<double>(bin_count[b]) * n * n;
  }

  const double m = static_cast<double>(seeds.size());
  for (std::size_t b = 0; b < bin_count.size(); ++b) {
    if (bin_count[b] == 0) continue;
    double sum = 0.0;
    for (const auto& v : per_seed) sum += v[b];
    const double mean = sum / m;
    double var = 0.0;
    for (const auto& v : per_seed) var += (v[b] - mean) * (v[b] - mean);
    out.distance.push_back(static_cast<int>(b));
    out.mean.push_back(mean);
    out.stderr_mean.push_back(seeds.size() > 1 ? std::sqrt(var / (m - 1.0) / m) : 0.0);
  }
  return out;
}

DecayFit fit_decay(const MomentProfile& profile, int dmin, int dmax) {
  if (dmin > dmax) throw ConfigError("fit window is empty");
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i < profile.distance.size(); ++i) {
    const int d = profile.distance[i];
    if (d < dmin || d > dmax || !(profile.mean[i] > 0.0)) continue;
    xs.push_back(d);
    ys.push_back(std::log(profile.mean[i]));
  }
  if (xs.size() < 5) throw ConfigError("fit_decay needs at least 5 positive bins in the window");
  const double m = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (intercept + slope * xs[i]);
    ss_res += r * r;
  }
  DecayFit fit;
  fit.z = profile.z;
  fit.s = profile.s;
  fit.size = profile.size;
  fit.amplitude = std::exp(intercept);
  fit.beta = -slope;
  fit.beta_stderr = std::sqrt(ss_res / std::max(1.0, m - 2.0) / sxx);
  // A flat profile has nothing to explain: no exponential decay is established.
  fit.quality = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 0.0;
  fit.dmin = dmin;
  fit.dmax = dmax;
  fit.bins = xs.size();
  fit.samples = profile.samples;
  return fit;
}

Localization classify_energy(const std::vector<DecayFit>& fits, const ClassifyOptions& opt) {
  if (fits.empty()) throw ConfigError("classify_energy needs fits");
  for (const DecayFit& f : fits) {
    if (std::abs(f.z - fits.front().z) > 1e-12) throw ConfigError("classify_energy: fits at different energies");
  }
  std::map<int, const DecayFit*> by_size;
  for (const DecayFit& f : fits) by_size[f.size] = &f;
  if (by_size.size() < 2) throw ConfigError("classify_energy needs fits at two or more system sizes");
  const DecayFit* prev = nullptr;
  for (const auto& [size, f] : by_size) {
    if (!(f->beta > opt.beta_threshold) || !(f->quality > opt.min_quality)) return Localization::not_established;
    if (prev) {
      const double sigma = std::hypot(prev->beta_stderr, f->beta_stderr);
      if (f->beta < prev->beta - 2.0 * sigma) return Localization::not_established;
    }
    prev = f;
  }
  return Localization::localized;
}

std::string to_string(Localization l) { return l == Localization::localized ? "localized" : "not_established"; }

std::string DecayFit::to_json() const {
  nlohmann::json j{{"z", {z.real(), z.imag()}},
                   {"s", s},
                   {"size", size},
                   {"amplitude", amplitude},
                   {"beta", beta},
                   {"beta_stderr", beta_stderr},
                   {"quality", quality},
                   {"window", {dmin, dmax}},
                   {"bins", bins},
                   {"samples", samples}};
  return j.dump();
}

void write_moments_csv(const MomentProfile& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "distance,mean_moment,stderr\n" << std::setprecision(17);
  for (std::size_t i = 0; i < p.distance.size(); ++i)
    out << p.distance[i] << ',' << p.mean[i] << ',' << p.stderr_mean[i] << '\n';
}

}  // namespace topo
