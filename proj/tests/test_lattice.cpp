#include <doctest.h>

#include <cmath>
#include <set>

#include "topo/lattice.hpp"
#include "topo/linalg.hpp"
#include "topo/models.hpp"

using namespace topo;

namespace {

HoppingSpec disordered_qwz() {
  HoppingSpec s = models::qwz(1.0, 2.0);
  // Give every hop a disorder coupling too, so covariance exercises hop terms.
  for (auto& h : s.hops)
    if (h.disorder.size() == 0) h.disorder = CMatrix::Identity(2, 2) * 0.3;
  return s;
}

}  // namespace

TEST_CASE("geometry indexing round trips") {
  const FiniteGeometry g = FiniteGeometry::box(3, 4);
  CHECK(g.num_sites() == 64);
  for (std::size_t i = 0; i < g.num_sites(); ++i) CHECK(g.index(g.site(i)) == i);
  // first axis slowest
  CHECK(g.index({1, 0, 0}) == 16);
  CHECK(g.index({0, 0, 1}) == 1);

  const FiniteGeometry t = FiniteGeometry::torus(1, 6);
  CHECK(t.locate({-1}).value() == 5);
  CHECK(t.displacement(0, 5, 0) == 1);
  CHECK(t.displacement(0, 0, 3) == -3);  // range [-L/2, L/2)
  CHECK_FALSE(FiniteGeometry::box(1, 6).locate({6}).has_value());

  const FiniteGeometry slab = FiniteGeometry::slab({5}, 3);
  CHECK(slab.half_space);
  CHECK(slab.depth() == 3);
  CHECK(slab.periodic(0));
  CHECK_FALSE(slab.periodic(1));

  FiniteGeometry bad = slab;
  bad.boundary.back() = Boundary::periodic;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(FiniteGeometry::box(2, 0).validate(), ConfigError);
}

TEST_CASE("disorder sampling") {
  const FiniteGeometry chain = FiniteGeometry::box(1, 4);
  const DisorderConfig a = sample_disorder(7, chain);
  const DisorderConfig b = sample_disorder(7, chain);
  REQUIRE(a.values.size() == 4);
  for (double v : a.values) {
    CHECK(v >= -0.5);
    CHECK(v <= 0.5);
  }
  CHECK(a.values == b.values);
  CHECK(sample_disorder(8, chain).values != a.values);

  SUBCASE("values depend on the site, not on the sample") {
    const DisorderConfig big = sample_disorder(7, FiniteGeometry::box(1, 9));
    for (int i = 0; i < 4; ++i) CHECK(big.values[static_cast<std::size_t>(i)] == a.values[static_cast<std::size_t>(i)]);
  }

  SUBCASE("strip") {
    const FiniteGeometry slab = FiniteGeometry::slab({3}, 10);
    const DisorderConfig zero = sample_disorder(3, slab, 0);
    for (std::size_t i = 0; i < slab.num_sites(); ++i)
      if (slab.site(i)[1] > 0) CHECK(zero.values[i] == 0.0);

    const DisorderConfig two = sample_disorder(3, slab, 2);
    std::set<int> random_layers;
    for (std::size_t i = 0; i < slab.num_sites(); ++i)
      if (two.values[i] != 0.0) random_layers.insert(slab.site(i)[1]);
    CHECK(random_layers == std::set<int>{0, 1, 2});

    CHECK_THROWS_AS(sample_disorder(3, chain, 1), ConfigError);
  }

  SUBCASE("empirical distribution") {
    const DisorderConfig d = sample_disorder(11, FiniteGeometry::box(2, 100));
    double mean = 0.0, second = 0.0;
    for (double v : d.values) {
      mean += v;
      second += v * v;
    }
    mean /= 1e4;
    second /= 1e4;
    CHECK(std::abs(mean) < 0.01);                 // 4 sigma of sqrt(1/12/1e4)
    CHECK(std::abs(second - 1.0 / 12.0) < 0.003);
  }
}

TEST_CASE("translation phases") {
  const MagneticFlux none = MagneticFlux::none(2);
  CHECK(translation_phase({3, -1}, {2, 5}, none) == Complex(1.0, 0.0));

  const MagneticFlux f = MagneticFlux::planar(2, 0, 1, 1.0 / 3.0);
  const Complex p = translation_phase({1, 0}, {0, 1}, f);
  CHECK(std::abs(p - std::polar(1.0, kPi / 3.0)) < 1e-15);
  CHECK(std::abs(translation_phase({0, 1}, {1, 0}, f) - std::conj(p)) < 1e-15);

  // 2-cocycle identity of the wedge phase.
  const std::vector<Site> pts{{1, 2}, {-3, 1}, {0, 4}, {2, -2}};
  for (const Site& x : pts)
    for (const Site& y : pts)
      for (const Site& z : pts) {
        const Site xy{x[0] + y[0], x[1] + y[1]}, yz{y[0] + z[0], y[1] + z[1]};
        const Complex lhs = translation_phase(x, y, f) * translation_phase(xy, z, f);
        const Complex rhs = translation_phase(x, yz, f) * translation_phase(y, z, f);
        CHECK(std::abs(lhs - rhs) < 1e-13);
      }

  RMatrix asym(2, 2);
  asym << 0.0, 0.5, 0.25, 0.0;
  CHECK_THROWS_AS(MagneticFlux{asym}.validate(), ConfigError);
}

TEST_CASE("magnetic translations obey the projective law") {
  const FiniteGeometry t = FiniteGeometry::torus(2, 6);
  const MagneticFlux f = MagneticFlux::planar(2, 0, 1, 1.0 / 3.0);
  const std::vector<Site> shifts{{1, 0}, {0, 1}, {1, 1}, {2, -1}};
  for (const Site& x : shifts)
    for (const Site& y : shifts) {
      const CMatrix lhs = magnetic_translation(t, 2, f, x) * magnetic_translation(t, 2, f, y);
      const CMatrix rhs =
          translation_phase(x, y, f) * magnetic_translation(t, 2, f, {x[0] + y[0], x[1] + y[1]});
      CHECK(max_abs(lhs - rhs) < 1e-13);
    }
}

TEST_CASE("commensurability on tori") {
  const MagneticFlux f = MagneticFlux::planar(2, 0, 1, 1.0 / 3.0);
  CHECK_NOTHROW(f.check_commensurate(FiniteGeometry::torus(2, 6)));
  CHECK_THROWS_AS(f.check_commensurate(FiniteGeometry::torus(2, 4)), ConfigError);
  CHECK_THROWS_AS(build_bulk(models::hofstadter(), f, FiniteGeometry::torus(2, 4),
                             sample_disorder(1, FiniteGeometry::torus(2, 4))),
                  ConfigError);
  // open axes carry no constraint
  CHECK_NOTHROW(f.check_commensurate(FiniteGeometry::box(2, 4)));
}

TEST_CASE("hopping spec validation") {
  HoppingSpec s = models::ssh(0.5, 1.0);
  CHECK_NOTHROW(s.validate());

  HoppingSpec backwards = s;
  backwards.hops.push_back({{-2}, CMatrix::Zero(2, 2), CMatrix()});
  CHECK_THROWS_AS(backwards.validate(), ConfigError);

  HoppingSpec dup = s;
  dup.hops.push_back(dup.hops.back());
  CHECK_THROWS_AS(dup.validate(), ConfigError);

  HoppingSpec broken = s;
  broken.hops.front().constant += 0.1 * pauli(3);  // diagonal term breaks J = sz
  CHECK_THROWS_AS(broken.validate(), ConfigError);

  HoppingSpec bad_j = s;
  bad_j.chiral_symmetry = 2.0 * pauli(3);
  CHECK_THROWS_AS(bad_j.validate(), ConfigError);

  HoppingSpec wide = models::anderson(1);
  CHECK_THROWS_AS(build_bulk(wide, MagneticFlux::none(1), FiniteGeometry::torus(1, 2),
                             sample_disorder(1, FiniteGeometry::torus(1, 2))),
                  ConfigError);
}

TEST_CASE("built matrices are Hermitian, local, deterministic and chiral") {
  const FiniteGeometry t = FiniteGeometry::torus(2, 8);
  const MagneticFlux f = MagneticFlux::planar(2, 0, 1, 0.25);
  const HoppingSpec spec = disordered_qwz();
  const FiniteModel a = build_bulk(spec, f, t, sample_disorder(5, t));
  const FiniteModel b = build_bulk(spec, f, t, sample_disorder(5, t));
  CHECK(a.dimension() == 2 * 64);
  CHECK(hermiticity_defect(a.matrix) <= 1e-14 * max_abs(a.matrix));
  CHECK(a.matrix == b.matrix);
  CHECK(a.provenance.seed == 5);

  for (std::size_t i = 0; i < t.num_sites(); ++i)
    for (std::size_t j = 0; j < t.num_sites(); ++j) {
      const Site x = t.site(i), y = t.site(j);
      const int dx = std::abs(t.displacement(0, x[0], y[0])), dy = std::abs(t.displacement(1, x[1], y[1]));
      if (std::max(dx, dy) > spec.range()) CHECK(max_abs(a.matrix.block(2 * i, 2 * j, 2, 2)) == 0.0);
    }

  const HoppingSpec ssh = models::ssh(0.7, 1.0, 1.0);
  const FiniteGeometry ring = FiniteGeometry::torus(1, 12);
  const FiniteModel m = build_bulk(ssh, MagneticFlux::none(1), ring, sample_disorder(9, ring));
  const CMatrix j = chiral_operator(ssh, ring.num_sites());
  CHECK(max_abs(j * m.matrix * j + m.matrix) < 1e-12);
  CHECK_THROWS_AS(chiral_operator(models::qwz(1.0), 4), PreconditionError);
}

TEST_CASE("covariance identity on a commensurate torus") {
  const FiniteGeometry t = FiniteGeometry::torus(2, 6);
  const MagneticFlux f = MagneticFlux::planar(2, 0, 1, 1.0 / 3.0);
  const HoppingSpec spec = disordered_qwz();
  const DisorderConfig omega = sample_disorder(2024, t);
  const FiniteModel h = build_bulk(spec, f, t, omega);
  for (int y1 = -2; y1 <= 2; ++y1)
    for (int y2 = -2; y2 <= 2; ++y2) {
      const Site y{y1, y2};
      const CMatrix u = magnetic_translation(t, spec.fiber_dim, f, y);
      const FiniteModel shifted = build_bulk(spec, f, t, shift_disorder(omega, y));
      CHECK(max_abs(shifted.matrix - u * h.matrix * u.adjoint()) < 1e-12);
    }
}

TEST_CASE("Hofstadter plaquette carries the flux") {
  const FiniteGeometry t = FiniteGeometry::torus(2, 6);
  const MagneticFlux f = MagneticFlux::planar(2, 0, 1, 1.0 / 3.0);
  const FiniteModel m = build_bulk(models::hofstadter(1.0), f, t, sample_disorder(1, t));
  const CMatrix& h = m.matrix;
  for (std::size_t i = 0; i < t.num_sites(); ++i) {
    const Site x = t.site(i);
    const auto at = [&](int a, int b) { return t.locate({x[0] + a, x[1] + b}).value(); };
    // oriented loop x -> x+e1 -> x+e1+e2 -> x+e2 -> x of the hopping amplitudes
    const Complex loop = h(i, at(1, 0)) * h(at(1, 0), at(1, 1)) * h(at(1, 1), at(0, 1)) * h(at(0, 1), i);
    CHECK(std::abs(std::abs(loop) - 1.0) < 1e-13);
    CHECK(std::abs(std::abs(std::arg(loop)) - 2.0 * kPi / 3.0) < 1e-12);
  }
}

TEST_CASE("dimerised SSH chain") {
  const HoppingSpec ssh = models::ssh(0.0, 1.0);
  const FiniteGeometry ring = FiniteGeometry::torus(1, 10);
  const FiniteModel m = build_bulk(ssh, MagneticFlux::none(1), ring, sample_disorder(1, ring));
  const RVector ev = hermitian_eigenvalues(m.matrix);
  for (Eigen::Index i = 0; i < 10; ++i) CHECK(ev(i) == doctest::Approx(-1.0).epsilon(1e-12));
  for (Eigen::Index i = 10; i < 20; ++i) CHECK(ev(i) == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("half-line edge mode") {
    for (int depth : {2, 5, 9}) {
      const FiniteGeometry g = FiniteGeometry::slab({}, depth);
      const FiniteModel half = build_halfspace(ssh, BoundaryTerm::none(), MagneticFlux::none(1), g,
                                               sample_disorder(1, g));
      const EigenSystem es = hermitian_eigensystem(half.matrix);
      // Zero modes sit on the unpaired A site of cell 0 and, on a finite
      // slab, on the B site of the last cell; only the former is at x_d = 0.
      int near = 0, zeros = 0;
      for (Eigen::Index k = 0; k < es.values.size(); ++k) {
        if (std::abs(es.values(k)) > 1e-12) continue;
        ++zeros;
        if (es.vectors.col(k).head(2).squaredNorm() > 0.5) ++near;
      }
      CHECK(zeros == 2);
      CHECK(near == 1);
    }
  }
}

TEST_CASE("half-space restriction") {
  const HoppingSpec spec = disordered_qwz();
  const FiniteGeometry slab = FiniteGeometry::slab({6}, 5);
  const FiniteGeometry cyl{{6, 5}, {Boundary::periodic, Boundary::open}, false};
  const DisorderConfig ws = sample_disorder(4, slab);
  const DisorderConfig wc = sample_disorder(4, cyl);
  REQUIRE(ws.values == wc.values);

  const FiniteModel dirichlet = build_halfspace(spec, BoundaryTerm::none(), MagneticFlux::none(2), slab, ws);
  const FiniteModel bulk = build_bulk(spec, MagneticFlux::none(2), cyl, wc);
  CHECK(dirichlet.matrix == bulk.matrix);

  const FiniteModel shifted =
      build_halfspace(spec, BoundaryTerm::surface_potential(2, 2, 0.7), MagneticFlux::none(2), slab, ws);
  const CMatrix diff = shifted.matrix - dirichlet.matrix;
  for (std::size_t i = 0; i < slab.num_sites(); ++i)
    for (std::size_t j = 0; j < slab.num_sites(); ++j) {
      const CMatrix block = diff.block(2 * i, 2 * j, 2, 2);
      if (i == j && slab.site(i)[1] == 0)
        CHECK(max_abs(block - 0.7 * CMatrix::Identity(2, 2)) < 1e-15);
      else
        CHECK(max_abs(block) == 0.0);
    }

  BoundaryTerm deep;
  deep.terms.push_back({0, 5, {0}, CMatrix::Identity(2, 2), CMatrix()});
  CHECK_THROWS_AS(build_halfspace(spec, deep, MagneticFlux::none(2), slab, ws), ConfigError);
  CHECK_THROWS_AS(build_halfspace(spec, BoundaryTerm::none(), MagneticFlux::none(2), cyl, wc), ConfigError);
}
