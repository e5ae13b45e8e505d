#pragma once

// Vertex features under a representation of the structure group, the
// frustration functional, and transport/alignment utilities. Row v of the
// value matrix is the feature at vertex v.

#include <Eigen/Dense>

#include <algorithm>
#include <string>
#include <vector>

#include "torsor/errors.hpp"
#include "torsor/groups.hpp"
#include "torsor/potential_graph.hpp"

namespace torsor {

struct FeatureAssignment {
  Representation rep;
  Eigen::MatrixXd values;  // num_vertices x rep.dim()
};

inline void require_features_match(const PotentialGraph& g, const FeatureAssignment& f) {
  if (!(f.rep.group() == g.kind()))
    throw GroupKindMismatch("features over " + f.rep.group().str() + " on a " + g.kind().str() +
                            " graph");
  if (f.values.rows() != g.num_vertices())
    throw DimensionMismatch("feature rows " + std::to_string(f.values.rows()) + " != vertices " +
                            std::to_string(g.num_vertices()));
  if (f.values.cols() != f.rep.dim())
    throw DimensionMismatch("feature cols " + std::to_string(f.values.cols()) + " != rep dim " +
                            std::to_string(f.rep.dim()));
}

struct SectionCheck {
  bool is_section;
  double max_residual;
};

// max over edges of ||f_u - rho(psi_uv) f_v||_2; vacuously a section when
// there are no edges.
inline SectionCheck is_global_section(const PotentialGraph& g, const FeatureAssignment& f,
                                      double tol = 1e-9) {
  require_features_match(g, f);
  double worst = 0.0;
  for (const auto& e : g.edges()) {
    const Eigen::VectorXd r = f.values.row(e.u).transpose() -
                              f.rep.matrix(e.psi) * f.values.row(e.v).transpose();
    worst = std::max(worst, r.norm());
  }
  return SectionCheck{worst <= tol, worst};
}

// (1/vol) * sum_e w_e ||f_u - rho(psi_uv) f_v||^2 with vol = sum of weighted
// degrees. Gauge-invariant (the reps here are orthogonal) and zero exactly on
// global sections.
inline double frustration(const PotentialGraph& g, const FeatureAssignment& f) {
  require_features_match(g, f);
  if (g.num_edges() == 0) throw EmptyInput("frustration is undefined without edges");
  double s = 0.0;
  for (const auto& e : g.edges()) {
    const Eigen::VectorXd r = f.values.row(e.u).transpose() -
                              f.rep.matrix(e.psi) * f.values.row(e.v).transpose();
    s += e.weight * r.squaredNorm();
  }
  return s / g.volume();
}

// d frustration / d f_v = (2/vol) * sum_{u ~ v} w ( f_v - rho(psi_vu) f_u ).
inline Eigen::MatrixXd frustration_gradient(const PotentialGraph& g, const FeatureAssignment& f) {
  require_features_match(g, f);
  if (g.num_edges() == 0) throw EmptyInput("frustration is undefined without edges");
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(f.values.rows(), f.values.cols());
  const double scale = 2.0 / g.volume();
  for (const auto& e : g.edges()) {
    const Eigen::MatrixXd rho = f.rep.matrix(e.psi);
    const Eigen::VectorXd r = f.values.row(e.u).transpose() - rho * f.values.row(e.v).transpose();
    grad.row(e.u) += scale * e.weight * r.transpose();
    grad.row(e.v) -= scale * e.weight * (rho.transpose() * r).transpose();
  }
  return grad;
}

// f'_v = rho(gamma_v)^{-1} f_v, matching the potential action of apply_gauge.
inline FeatureAssignment apply_gauge_features(const FeatureAssignment& f, const Gauge& gamma) {
  if (static_cast<int>(gamma.at.size()) != f.values.rows())
    throw DimensionMismatch("gauge has " + std::to_string(gamma.at.size()) + " entries for " +
                            std::to_string(f.values.rows()) + " feature rows");
  FeatureAssignment out{f.rep, f.values};
  for (int v = 0; v < f.values.rows(); ++v) {
    if (!(gamma.at[v].kind() == f.rep.group()))
      throw GroupKindMismatch("gauge element kind " + gamma.at[v].kind().str() +
                              " under a rep over " + f.rep.group().str());
    out.values.row(v) =
        (f.rep.matrix(inverse(gamma.at[v])) * f.values.row(v).transpose()).transpose();
  }
  return out;
}

struct TransportResult {
  FeatureAssignment features;
  // Section residual of the result; ~0 exactly when g is consistent,
  // otherwise the output depends on the BFS tree and this reports by how much.
  double max_edge_residual;
};

// Spreads f_root over a connected graph along BFS tree edges:
// f_child = rho(psi_{child,parent}) f_parent.
inline TransportResult transport_from_root(const PotentialGraph& g, const Representation& rep,
                                           int root, const Eigen::VectorXd& f_root) {
  if (!(rep.group() == g.kind()))
    throw GroupKindMismatch("rep over " + rep.group().str() + " on a " + g.kind().str() + " graph");
  if (f_root.size() != rep.dim())
    throw DimensionMismatch("root feature size " + std::to_string(f_root.size()) +
                            " != rep dim " + std::to_string(rep.dim()));
  const detail::BfsTree t = detail::bfs_tree(g, root);
  if (static_cast<int>(t.order.size()) != g.num_vertices())
    throw Disconnected("transport_from_root needs a connected graph");
  FeatureAssignment f{rep, Eigen::MatrixXd::Zero(g.num_vertices(), rep.dim())};
  f.values.row(root) = f_root.transpose();
  for (int v : t.order) {
    if (t.parent[v] < 0) continue;
    f.values.row(v) =
        (rep.matrix(g.potential(v, t.parent[v])) * f.values.row(t.parent[v]).transpose())
            .transpose();
  }
  const double residual = is_global_section(g, f, 0.0).max_residual;
  return TransportResult{std::move(f), residual};
}

struct AlignResult {
  FeatureAssignment features;
  // Max over edges of distance(t_u * psi_uv, t_v) for the tree transports
  // t of the potentials; ~0 exactly when g is consistent, and otherwise
  // quantifies how path-dependent the alignment is.
  double max_holonomy_residual;
};

// Rewrites every feature in the reference vertex's frame:
// fhat_i = rho(t_i) f_i with t_r = id and t_child = t_parent * psi_{parent,child}
// along BFS shortest paths (lowest-id tie-breaking). Sections collapse to
// copies of f_r; row r itself is always unchanged.
inline AlignResult align_to_reference(const PotentialGraph& g, const FeatureAssignment& f,
                                      int r) {
  require_features_match(g, f);
  const detail::BfsTree t = detail::bfs_tree(g, r);
  if (static_cast<int>(t.order.size()) != g.num_vertices())
    throw Disconnected("align_to_reference needs a connected graph");
  std::vector<GroupElement> transport(g.num_vertices(), GroupElement::identity(g.kind()));
  for (int v : t.order)
    if (t.parent[v] >= 0) transport[v] = compose(transport[t.parent[v]], g.potential(t.parent[v], v));
  FeatureAssignment out{f.rep, Eigen::MatrixXd::Zero(f.values.rows(), f.values.cols())};
  out.values.row(r) = f.values.row(r);
  for (int v = 0; v < g.num_vertices(); ++v)
    if (v != r)
      out.values.row(v) = (f.rep.matrix(transport[v]) * f.values.row(v).transpose()).transpose();
  double worst = 0.0;
  for (const auto& e : g.edges())
    worst = std::max(worst, chordal_distance(compose(transport[e.u], e.psi), transport[e.v]));
  return AlignResult{std::move(out), worst};
}

enum class PoolMode { Mean, Max };

// Column-wise reduction over vertices. Mean pooling commutes with the rep
// action; max pooling does not and is provided for baselines only.
inline Eigen::VectorXd pool(const FeatureAssignment& f, PoolMode mode) {
  if (f.values.rows() == 0) throw EmptyInput("pool needs at least one vertex");
  switch (mode) {
    case PoolMode::Mean:
      return f.values.colwise().mean().transpose();
    case PoolMode::Max:
      return f.values.colwise().maxCoeff().transpose();
  }
  throw Unsupported("unknown pool mode");
}

}  // namespace torsor
