#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include <json.hpp>

#include "topo/localization.hpp"
#include "topo/models.hpp"

using namespace topo;

namespace {

/// Lyapunov exponent of the 1D Anderson chain -psi_{n+1} - psi_{n-1} + W omega_n psi_n = E psi_n,
/// omega uniform on [-1/2, 1/2], from a long transfer-matrix product.
double lyapunov(double w, double e, long steps, unsigned seed) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double a = 1.0, b = 0.0, sum = 0.0;
  for (long n = 0; n < steps; ++n) {
    const double c = (w * u(eng) - e) * a - b;
    b = a;
    a = c;
    const double norm = std::hypot(a, b);
    sum += std::log(norm);
    a /= norm;
    b /= norm;
  }
  return sum / static_cast<double>(steps);
}

MomentProfile synthetic(const std::function<double(int)>& f, int n) {
  MomentProfile p;
  p.z = Complex(0.0, 1e-3);
  p.size = 2 * n;
  p.samples = 1;
  for (int d = 0; d < n; ++d) {
    p.distance.push_back(d);
    p.mean.push_back(f(d));
    p.stderr_mean.push_back(0.0);
  }
  return p;
}

std::vector<std::uint64_t> seed_list(int n, std::uint64_t base = 100) {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < n; ++i) out.push_back(base + static_cast<std::uint64_t>(i));
  return out;
}

DecayFit chain_fit(const HoppingSpec& spec, int l, int seeds, Complex z = {0.0, 1e-3}, int dmax = -1) {
  const MomentProfile p =
      resolvent_moments(spec, MagneticFlux::none(1), FiniteGeometry::box(1, l), z, 0.5, seed_list(seeds));
  return fit_decay(p, 1, dmax > 0 ? dmax : l / 2 - 1);
}

}  // namespace

TEST_CASE("fit_decay on synthetic profiles") {
  const DecayFit e = fit_decay(synthetic([](int d) { return 3.0 * std::exp(-0.5 * d); }, 30), 1, 25);
  CHECK(std::abs(e.beta - 0.5) < 1e-6);
  CHECK(e.amplitude == doctest::Approx(3.0));
  CHECK(e.quality > 1.0 - 1e-9);
  CHECK(e.bins == 25);

  const DecayFit c = fit_decay(synthetic([](int) { return 0.7; }, 30), 1, 25);
  CHECK(std::abs(c.beta) < 1e-12);
  CHECK(c.quality == 0.0);

  // Non-positive bins are dropped, not fitted.
  const DecayFit holes = fit_decay(synthetic([](int d) { return d % 3 == 0 ? 0.0 : std::exp(-0.2 * d); }, 30), 1, 25);
  CHECK(std::abs(holes.beta - 0.2) < 1e-9);
  CHECK(holes.bins == 17);

  CHECK_THROWS_AS(fit_decay(synthetic([](int) { return 1.0; }, 30), 5, 4), ConfigError);
  CHECK_THROWS_AS(fit_decay(synthetic([](int) { return 1.0; }, 30), 1, 3), ConfigError);
  CHECK_THROWS_AS(fit_decay(synthetic([](int) { return 0.0; }, 30), 1, 25), ConfigError);

  const auto j = nlohmann::json::parse(e.to_json());
  CHECK(j.at("beta").get<double>() == doctest::Approx(0.5));
  CHECK(j.at("window").at(1).get<int>() == 25);
}

TEST_CASE("resolvent moments: atomic limit and argument checks") {
  const HoppingSpec atomic = models::atomic(1, {-1.0, 1.0});
  const FiniteGeometry box = FiniteGeometry::box(1, 21);
  const MomentProfile p = resolvent_moments(atomic, MagneticFlux::none(1), box, {0.0, 1e-3}, 0.5, {1, 2});
  REQUIRE(p.distance.front() == 0);
  CHECK(p.mean.front() > 0.0);
  for (std::size_t i = 1; i < p.mean.size(); ++i) CHECK(p.mean[i] == 0.0);
  CHECK(p.samples == 2);
  CHECK(p.spectrum_distance == doctest::Approx(1.0));

  const HoppingSpec chain = models::anderson(1, 1.0, 4.0);
  CHECK_THROWS_AS(resolvent_moments(chain, MagneticFlux::none(1), box, {0.0, 1e-3}, 1.0, {1}), ConfigError);
  CHECK_THROWS_AS(resolvent_moments(chain, MagneticFlux::none(1), box, {0.0, 1e-3}, 0.0, {1}), ConfigError);
  CHECK_THROWS_AS(resolvent_moments(chain, MagneticFlux::none(1), box, {0.0, -1e-3}, 0.5, {1}), ConfigError);
  CHECK_THROWS_AS(resolvent_moments(chain, MagneticFlux::none(1), box, {0.0, 1e-3}, 0.5, {}), ConfigError);
  CHECK_THROWS_AS(resolvent_moments(chain, MagneticFlux::none(1), FiniteGeometry::slab({}, 8), {0.0, 1e-3}, 0.5, {1}),
                  ConfigError);
}

TEST_CASE("resolvent moments: singular energy is shifted and flagged") {
  // A single-site chain at its own level.
  const HoppingSpec atomic = models::atomic(1, {0.0, 1.0});
  const MomentProfile p =
      resolvent_moments(atomic, MagneticFlux::none(1), FiniteGeometry::box(1, 5), {0.0, 0.0}, 0.5, {1});
  CHECK(p.shifted);
  for (double m : p.mean) CHECK(std::isfinite(m));
}

TEST_CASE("Anderson chain: decay rate against the Lyapunov exponent") {
  const double gamma = lyapunov(4.0, 0.0, 2000000, 11);
  // Weak-disorder estimate W^2 / 96 as a sanity bound on the oracle itself.
  REQUIRE(std::abs(gamma - 16.0 / 96.0) < 0.03);
  const DecayFit fit = chain_fit(models::anderson(1, 1.0, 4.0), 256, 50);
  CHECK(fit.beta > 0.0);
  CHECK(fit.quality > 0.9);
  // E|G|^s decays at most at rate s * gamma (Jensen), with equality as s -> 0.
  const double scale = fit.s * gamma;
  CHECK(fit.beta < 2.0 * scale);
  CHECK(fit.beta > 0.5 * scale);
}

TEST_CASE("Anderson chain: rate grows with disorder and is stable in the seed count") {
  const DecayFit w2 = chain_fit(models::anderson(1, 1.0, 2.0), 256, 40);
  const DecayFit w4 = chain_fit(models::anderson(1, 1.0, 4.0), 256, 40);
  const DecayFit w8 = chain_fit(models::anderson(1, 1.0, 8.0), 256, 40, {0.0, 1e-3}, 40);
  CHECK(w4.beta > w2.beta - 2.0 * std::hypot(w2.beta_stderr, w4.beta_stderr));
  CHECK(w8.beta > w4.beta - 2.0 * std::hypot(w4.beta_stderr, w8.beta_stderr));

  // Seed-to-seed uncertainty of the first estimate by jackknife.
  auto beta_of = [](const std::vector<std::uint64_t>& seeds) {
    const MomentProfile p = resolvent_moments(models::anderson(1, 1.0, 8.0), MagneticFlux::none(1),
                                              FiniteGeometry::box(1, 128), {0.0, 1e-3}, 0.5, seeds);
    return fit_decay(p, 1, 30).beta;
  };
  const std::vector<std::uint64_t> first = seed_list(20);
  const double beta20 = beta_of(first);
  std::vector<double> leave_one;
  for (std::size_t i = 0; i < first.size(); ++i) {
    std::vector<std::uint64_t> rest = first;
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
    leave_one.push_back(beta_of(rest));
  }
  double mean = 0.0;
  for (double v : leave_one) mean += v / static_cast<double>(leave_one.size());
  double var = 0.0;
  for (double v : leave_one) var += (v - mean) * (v - mean);
  const double n = static_cast<double>(leave_one.size());
  const double sigma = std::sqrt((n - 1.0) / n * var);
  const double beta40 = beta_of(seed_list(40));
  CHECK(std::abs(beta40 - beta20) < 2.0 * sigma);
}

TEST_CASE("classification") {
  SUBCASE("strong disorder is localized") {
    std::vector<DecayFit> fits;
    for (int l : {96, 128}) fits.push_back(chain_fit(models::anderson(1, 1.0, 8.0), l, 30, {0.0, 1e-3}, 30));
    CHECK(classify_energy(fits) == Localization::localized);
  }
  SUBCASE("clean metal is not established") {
    std::vector<DecayFit> fits;
    for (int l : {96, 128}) fits.push_back(chain_fit(models::anderson(1, 1.0, 0.0), l, 1));
    CHECK(fits.front().quality < 0.5);
    CHECK(classify_energy(fits) == Localization::not_established);
  }
  SUBCASE("mid-gap of a clean insulator is localized") {
    std::vector<DecayFit> fits;
    for (int l : {48, 64}) fits.push_back(chain_fit(models::ssh(0.5, 1.0), l, 1, {0.0, 1e-3}, 15));
    CHECK(classify_energy(fits) == Localization::localized);
  }
  SUBCASE("errors") {
    DecayFit f;
    f.size = 10;
    CHECK_THROWS_AS(classify_energy({}), ConfigError);
    CHECK_THROWS_AS(classify_energy({f, f}), ConfigError);
    DecayFit g = f;
    g.size = 20;
    g.z = Complex(0.5, 1e-3);
    CHECK_THROWS_AS(classify_energy({f, g}), ConfigError);
  }
  CHECK(to_string(Localization::localized) == "localized");
  CHECK(to_string(Localization::not_established) == "not_established");
}

TEST_CASE("mid-gap decay rate grows with the gap") {
  // SSH gaps 2|t2 - t1| = 0.6, 1.0, 1.4.
  double previous = 0.0;
  for (double t1 : {0.7, 0.5, 0.3}) {
    const DecayFit fit = chain_fit(models::ssh(t1, 1.0), 64, 1, {0.0, 1e-3}, 12);
    CHECK(fit.beta > 0.0);
    CHECK(fit.beta > previous);
    previous = fit.beta;
  }
}

TEST_CASE("moments CSV") {
  const auto path = std::filesystem::temp_directory_path() / "topo_moments_test.csv";
  const MomentProfile p = synthetic([](int d) { return std::exp(-0.1 * d); }, 6);
  write_moments_csv(p, path.string());
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "distance,mean_moment,stderr");
  CHECK(first.rfind("0,1,0", 0) == 0);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(write_moments_csv(p, "/nonexistent-dir/x.csv"), ConfigError);
}
