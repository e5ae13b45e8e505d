#pragma once

// Shared generators and independent oracles for the test suites. Oracles are
// written from first principles (elementwise loops, JacobiSVD/FullPivLU,
// std::mt19937) so they do not share code paths with the library.

#include <algorithm>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "torsor/torsor.hpp"

namespace torsor_test {

using namespace torsor;

// Payload-level deviation: exact for cyclic, wrapped angle for so2, max-abs
// entry difference for so3. Unlike the geodesic distance this has no
// conditioning singularity, so it is the right measure for axiom checks.
inline double payload_residual(const GroupElement& a, const GroupElement& b) {
  switch (a.kind().tag()) {
    case GroupTag::Cyclic:
      return a.residue() == b.residue() ? 0.0 : 1.0;
    case GroupTag::SO2:
      return std::abs(std::remainder(a.theta() - b.theta(), 2.0 * torsor::kPi));
    case GroupTag::SO3:
      return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
  }
  return 1.0;
}

// Hand-built rotation about z, independent of rotation_about().
inline Eigen::Matrix3d rz(double theta) {
  Eigen::Matrix3d m;
  m << std::cos(theta), -std::sin(theta), 0.0, std::sin(theta), std::cos(theta), 0.0, 0.0, 0.0,
      1.0;
  return m;
}

inline std::vector<GroupKind> all_kinds() {
  return {GroupKind::cyclic(2), GroupKind::cyclic(5), GroupKind::so2(), GroupKind::so3()};
}

// Random spanning tree plus `extra` chords; random potentials and weights.
inline PotentialGraph random_graph(GroupKind kind, int num_vertices, int extra, Rng& rng) {
  std::vector<EdgeInput> edges;
  for (int v = 1; v < num_vertices; ++v) {
    const int parent = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(v)));
    edges.push_back({parent, v, random_element(kind, rng), rng.uniform(0.5, 2.0)});
  }
  auto has = [&edges](int a, int b) {
    for (const auto& e : edges)
      if ((e.u == a && e.v == b) || (e.u == b && e.v == a)) return true;
    return false;
  };
  for (int tries = 0; extra > 0 && tries < 100 * extra; ++tries) {
    const int a = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(num_vertices)));
    const int b = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(num_vertices)));
    if (a == b || has(a, b)) continue;
    edges.push_back({a, b, random_element(kind, rng), rng.uniform(0.5, 2.0)});
    --extra;
  }
  return PotentialGraph(kind, num_vertices, edges);
}

// Same topology process but potentials induced from random absolute states,
// so the result is consistent by construction. Returns the states too.
struct ConsistentGraph {
  PotentialGraph graph;
  std::vector<GroupElement> states;
};

inline ConsistentGraph random_consistent_graph(GroupKind kind, int num_vertices, int extra,
                                               Rng& rng) {
  std::vector<GroupElement> states;
  states.reserve(static_cast<std::size_t>(num_vertices));
  for (int v = 0; v < num_vertices; ++v) states.push_back(random_element(kind, rng));
  std::vector<EdgeTopo> edges;
  for (int v = 1; v < num_vertices; ++v) {
    const int parent = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(v)));
    edges.push_back({parent, v, rng.uniform(0.5, 2.0)});
  }
  auto has = [&edges](int a, int b) {
    for (const auto& e : edges)
      if ((e.u == a && e.v == b) || (e.u == b && e.v == a)) return true;
    return false;
  };
  for (int tries = 0; extra > 0 && tries < 100 * extra; ++tries) {
    const int a = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(num_vertices)));
    const int b = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(num_vertices)));
    if (a == b || has(a, b)) continue;
    edges.push_back({a, b, rng.uniform(0.5, 2.0)});
    --extra;
  }
  return {from_absolute_states(states, edges), std::move(states)};
}

inline Gauge random_gauge(GroupKind kind, int num_vertices, Rng& rng) {
  Gauge gamma;
  for (int v = 0; v < num_vertices; ++v) gamma.at.push_back(random_element(kind, rng));
  return gamma;
}

inline Eigen::MatrixXd random_features(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.gaussian();
  return m;
}

// A catalog of representations for property sweeps over one group kind.
inline std::vector<Representation> rep_catalog(GroupKind kind) {
  std::vector<Representation> reps;
  reps.push_back(Representation::trivial(kind, 1));
  reps.push_back(Representation::trivial(kind, 3));
  reps.push_back(Representation::standard(kind));
  if (kind.tag() == GroupTag::Cyclic) reps.push_back(Representation::regular(kind));
  reps.push_back(Representation::direct_sum(
      {Representation::standard(kind), Representation::trivial(kind, 2)}));
  return reps;
}

// Synchronization noise model: with probability p, replace an edge potential
// by a uniformly random element.
inline PotentialGraph corrupt(const PotentialGraph& g, double p, Rng& rng) {
  std::vector<EdgeInput> edges;
  for (const auto& e : g.edges()) {
    GroupElement psi = e.psi;
    if (rng.uniform() < p) psi = random_element(g.kind(), rng);
    edges.push_back({e.u, e.v, psi, e.weight});
  }
  return PotentialGraph(g.kind(), g.num_vertices(), edges);
}

// Rounds a feature-synchronization solution to cyclic group states: pick the
// residue whose action on the (normalized) reference row best matches each
// row; ties resolve to the smallest residue.
inline std::vector<GroupElement> round_features_to_states(const PotentialGraph& g,
                                                          const Representation& rep,
                                                          const Eigen::MatrixXd& values) {
  const int n = g.kind().order();
  Eigen::VectorXd ref = values.row(0).transpose();
  if (ref.norm() < 1e-12)
    ref = Eigen::VectorXd::Unit(rep.dim(), 0);
  else
    ref.normalize();
  std::vector<GroupElement> states;
  for (int v = 0; v < g.num_vertices(); ++v) {
    Eigen::VectorXd row = values.row(v).transpose();
    if (row.norm() >= 1e-12) row.normalize();
    int best_k = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
      const double err =
          (row - rep.matrix(GroupElement::cyclic(g.kind(), k)) * ref).squaredNorm();
      if (err < best - 1e-12) {
        best = err;
        best_k = k;
      }
    }
    states.push_back(GroupElement::cyclic(g.kind(), best_k));
  }
  return states;
}

// Independent commutant-dimension oracle: stack the intertwining constraints
// elementwise (row-major unknown ordering, explicit loops, JacobiSVD) and
// count the near-zero singular values.
inline int commutant_dimension_oracle(const Representation& rep_in,
                                      const Representation& rep_out) {
  std::vector<GroupElement> samples;
  const GroupKind kind = rep_in.group();
  if (kind.tag() == GroupTag::Cyclic) {
    for (int k = 0; k < kind.order(); ++k) samples.push_back(GroupElement::cyclic(kind, k));
  } else {
    std::mt19937 mt(987654321u);
    std::uniform_real_distribution<double> unif(-torsor::kPi, torsor::kPi);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 256; ++i) {
      if (kind.tag() == GroupTag::SO2) {
        samples.push_back(GroupElement::angle(unif(mt)));
      } else {
        Eigen::Vector4d q(gauss(mt), gauss(mt), gauss(mt), gauss(mt));
        q.normalize();
        const double w = q(0), x = q(1), y = q(2), z = q(3);
        Eigen::Matrix3d r;
        r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
        samples.push_back(GroupElement::rotation3(r));
      }
    }
  }
  const int din = rep_in.dim(), dout = rep_out.dim();
  const int unknowns = dout * din;  // K(a,b) at index a*din + b (row-major)
  Eigen::MatrixXd stacked(static_cast<int>(samples.size()) * unknowns, unknowns);
  int row = 0;
  for (const auto& g : samples) {
    const Eigen::MatrixXd rin = rep_in.matrix(g);
    const Eigen::MatrixXd rout = rep_out.matrix(g);
    for (int a = 0; a < dout; ++a)
      for (int b = 0; b < din; ++b) {
        // (K rin - rout K)(a,b) = sum_d K(a,d) rin(d,b) - sum_c rout(a,c) K(c,b)
        Eigen::RowVectorXd coeff = Eigen::RowVectorXd::Zero(unknowns);
        for (int d = 0; d < din; ++d) coeff(a * din + d) += rin(d, b);
        for (int c = 0; c < dout; ++c) coeff(c * din + b) -= rout(a, c);
        stacked.row(row++) = coeff;
      }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked);
  const Eigen::VectorXd sv = svd.singularValues();
  const double cutoff = 1e-10 * (sv.size() > 0 ? sv(0) : 0.0);
  int dim = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) <= cutoff) ++dim;
  dim += unknowns - static_cast<int>(sv.size());  // SVD of wide matrices (not here) guard
  return dim;
}

}  // namespace torsor_test
