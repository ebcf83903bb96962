#pragma once

#include <map>
#include <string>
#include <vector>

#include "topo/lattice.hpp"

namespace topo {

/// Pauli matrices; pauli(0) is the identity.
CMatrix pauli(int i);
CMatrix kron(const CMatrix& a, const CMatrix& b);

namespace models {

/// Two-band Chern insulator on Z^2:
///   H(k) = sin k1 sx + sin k2 sy + (m + cos k1 + cos k2) sz.
/// Chern number is nonzero for 0 < |m| < 2. Disorder couples to the identity.
HoppingSpec qwz(double m, double disorder = 0.0);

/// SSH chain with intra-cell t1 and inter-cell t2, J = sz. The disorder
/// modulates the intra-cell bond (off-diagonal, chirality preserving).
HoppingSpec ssh(double t1, double t2, double disorder = 0.0);

/// Nearest-neighbour square lattice, single band. Combine with a planar flux.
HoppingSpec hofstadter(double t = 1.0, double disorder = 0.0);

/// Single-band cubic Anderson model: hopping -t, on-site W*omega.
HoppingSpec anderson(int dim, double t = 1.0, double disorder = 0.0);

/// Four-band chiral model on Z^3 with winding +-1 for 1 < |m| < 3:
///   H(k) = (m + sum cos k_i) G4 + sum sin k_i G_i,  G_i = tx s_i, G4 = ty, J = tz.
/// Disorder couples to G4.
HoppingSpec chiral3d(double m, double disorder = 0.0);

/// Atomic limit: diagonal on-site levels, no hopping, identity disorder coupling.
HoppingSpec atomic(int dim, const std::vector<double>& levels, double disorder = 0.0);

}  // namespace models

/// Named-family factory used by the CLI: unknown parameters are rejected,
/// missing ones take the family defaults.
HoppingSpec make_model(const std::string& family, const std::map<std::string, double>& params);

/// Default parameters of a family, so callers can list what is accepted.
std::map<std::string, double> model_defaults(const std::string& family);

}  // namespace topo
