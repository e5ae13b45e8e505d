#pragma once

// Finite graphs carrying group-valued edge potentials. Edges are stored once
// in canonical orientation (u < v); querying the reverse orientation returns
// the inverse element, so antisymmetry holds by construction.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "torsor/errors.hpp"
#include "torsor/groups.hpp"

namespace torsor {

struct EdgeInput {
  int u;
  int v;
  GroupElement psi;  // oriented u -> v as given; re-oriented on storage
  double weight = 1.0;
};

struct EdgeTopo {
  int u;
  int v;
  double weight = 1.0;
};

class PotentialGraph {
 public:
  struct Edge {
    int u;
    int v;  // u < v
    GroupElement psi;
    double weight;
  };

  PotentialGraph(GroupKind kind, int num_vertices, const std::vector<EdgeInput>& inputs)
      : kind_(kind), n_(num_vertices), adj_(std::max(num_vertices, 0)), wdeg_(std::max(num_vertices, 0), 0.0) {
    if (num_vertices < 0) throw InvalidGraph("negative vertex count");
    edges_.reserve(inputs.size());
    for (const auto& in : inputs) {
      if (in.u < 0 || in.u >= n_ || in.v < 0 || in.v >= n_)
        throw InvalidGraph("edge (" + std::to_string(in.u) + ", " + std::to_string(in.v) +
                           ") out of range for " + std::to_string(n_) + " vertices");
      if (in.u == in.v) throw InvalidGraph("self-loop at vertex " + std::to_string(in.u));
      if (!(in.psi.kind() == kind_))
        throw GroupKindMismatch("edge potential kind " + in.psi.kind().str() +
                                " does not match graph kind " + kind_.str());
      if (!(in.weight > 0.0) || !std::isfinite(in.weight))
        throw InvalidGraph("edge weight must be finite and positive");
      const int a = std::min(in.u, in.v);
      const int b = std::max(in.u, in.v);
      if (!index_.emplace(key(a, b), static_cast<int>(edges_.size())).second)
        throw InvalidGraph("duplicate edge (" + std::to_string(a) + ", " + std::to_string(b) + ")");
      edges_.push_back(Edge{a, b, in.u < in.v ? in.psi : inverse(in.psi), in.weight});
      const int e = static_cast<int>(edges_.size()) - 1;
      adj_[a].emplace_back(b, e);
      adj_[b].emplace_back(a, e);
      wdeg_[a] += in.weight;
      wdeg_[b] += in.weight;
    }
    for (auto& list : adj_) std::sort(list.begin(), list.end());
  }

  const GroupKind& kind() const { return kind_; }
  int num_vertices() const { return n_; }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }

  bool has_edge(int u, int v) const {
    return index_.count(key(std::min(u, v), std::max(u, v))) > 0;
  }

  int edge_index(int u, int v) const {
    auto it = index_.find(key(std::min(u, v), std::max(u, v)));
    if (it == index_.end())
      throw NotAnEdge("(" + std::to_string(u) + ", " + std::to_string(v) + ") is not an edge");
    return it->second;
  }

  // psi_{uv} in the requested orientation.
  GroupElement potential(int u, int v) const {
    const Edge& e = edges_[edge_index(u, v)];
    return u == e.u ? e.psi : inverse(e.psi);
  }

  double edge_weight(int u, int v) const { return edges_[edge_index(u, v)].weight; }

  // (neighbor, edge index) pairs sorted by neighbor id.
  const std::vector<std::pair<int, int>>& neighbors(int v) const { return adj_.at(v); }

  double weighted_degree(int v) const { return wdeg_.at(v); }

  // Sum of weighted degrees = 2 * total edge weight.
  double volume() const {
    double s = 0.0;
    for (const auto& e : edges_) s += 2.0 * e.weight;
    return s;
  }

 private:
  static std::uint64_t key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  }

  GroupKind kind_;
  int n_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::pair<int, int>>> adj_;
  std::vector<double> wdeg_;
  std::unordered_map<std::uint64_t, int> index_;
};

// One group element per vertex, acting by psi'_uv = gamma_u^{-1} psi_uv gamma_v.
struct Gauge {
  std::vector<GroupElement> at;
};

namespace detail {

// Deterministic BFS from root: ascending neighbor ids. parent[v] = -1 for the
// root and for unreached vertices; order lists reached vertices.
struct BfsTree {
  std::vector<int> order;
  std::vector<int> parent;
};

inline BfsTree bfs_tree(const PotentialGraph& g, int root) {
  if (root < 0 || root >= g.num_vertices()) throw InvalidGraph("root out of range");
  BfsTree t;
  t.parent.assign(g.num_vertices(), -1);
  std::vector<char> seen(g.num_vertices(), 0);
  seen[root] = 1;
  t.order.push_back(root);
  for (std::size_t head = 0; head < t.order.size(); ++head) {
    const int p = t.order[head];
    for (const auto& [nb, e] : g.neighbors(p)) {
      (void)e;
      if (!seen[nb]) {
        seen[nb] = 1;
        t.parent[nb] = p;
        t.order.push_back(nb);
      }
    }
  }
  return t;
}

// Forest over all components; roots are the lowest unreached ids, ascending.
struct BfsForest {
  std::vector<int> order;      // concatenated component orders
  std::vector<int> parent;     // -1 at roots
  std::vector<int> component;  // component id per vertex
  int num_components = 0;
};

inline BfsForest bfs_forest(const PotentialGraph& g) {
  BfsForest f;
  f.parent.assign(g.num_vertices(), -1);
  f.component.assign(g.num_vertices(), -1);
  for (int r = 0; r < g.num_vertices(); ++r) {
    if (f.component[r] >= 0) continue;
    const int c = f.num_components++;
    BfsTree t = bfs_tree(g, r);
    for (int v : t.order) {
      if (f.component[v] >= 0) continue;  // unreachable marker never set twice
      f.component[v] = c;
      f.parent[v] = t.parent[v];
      f.order.push_back(v);
    }
  }
  return f;
}

// States with s_root = identity and s_child = psi_{child,parent} * s_parent
// along the forest; these satisfy every tree edge exactly.
inline std::vector<GroupElement> forest_states(const PotentialGraph& g, const BfsForest& f) {
  std::vector<GroupElement> s(g.num_vertices(), GroupElement::identity(g.kind()));
  for (int v : f.order)
    if (f.parent[v] >= 0) s[v] = compose(g.potential(v, f.parent[v]), s[f.parent[v]]);
  return s;
}

}  // namespace detail

// Consistent potentials from absolute states: psi_uv = s_u * s_v^{-1}.
inline PotentialGraph from_absolute_states(const std::vector<GroupElement>& states,
                                           const std::vector<EdgeTopo>& edges) {
  if (states.empty()) throw EmptyInput("from_absolute_states needs at least one state");
  const GroupKind kind = states.front().kind();
  std::vector<EdgeInput> inputs;
  inputs.reserve(edges.size());
  for (const auto& e : edges) {
    if (e.u < 0 || e.u >= static_cast<int>(states.size()) || e.v < 0 ||
        e.v >= static_cast<int>(states.size()))
      throw InvalidGraph("edge endpoint out of range of the state list");
    inputs.push_back(EdgeInput{e.u, e.v, compose(states[e.u], inverse(states[e.v])), e.weight});
  }
  return PotentialGraph(kind, static_cast<int>(states.size()), inputs);
}

inline void require_gauge_shape(const PotentialGraph& g, const Gauge& gamma) {
  if (static_cast<int>(gamma.at.size()) != g.num_vertices())
    throw DimensionMismatch("gauge has " + std::to_string(gamma.at.size()) + " entries for " +
                            std::to_string(g.num_vertices()) + " vertices");
  for (const auto& e : gamma.at)
    if (!(e.kind() == g.kind()))
      throw GroupKindMismatch("gauge element kind " + e.kind().str() + " on a " +
                              g.kind().str() + " graph");
}

inline PotentialGraph apply_gauge(const PotentialGraph& g, const Gauge& gamma) {
  require_gauge_shape(g, gamma);
  std::vector<EdgeInput> inputs;
  inputs.reserve(g.edges().size());
  for (const auto& e : g.edges())
    inputs.push_back(EdgeInput{
        e.u, e.v, compose(inverse(gamma.at[e.u]), compose(e.psi, gamma.at[e.v])), e.weight});
  return PotentialGraph(g.kind(), g.num_vertices(), inputs);
}

// Product psi_{v0 v1} * psi_{v1 v2} * ... over a closed walk.
inline GroupElement holonomy(const PotentialGraph& g, const std::vector<int>& cycle) {
  if (cycle.empty()) throw NotACycle("empty vertex sequence");
  if (cycle.front() != cycle.back())
    throw NotACycle("walk does not return to its start vertex");
  GroupElement h = GroupElement::identity(g.kind());
  for (std::size_t i = 0; i + 1 < cycle.size(); ++i) {
    if (!g.has_edge(cycle[i], cycle[i + 1]))
      throw NotACycle("(" + std::to_string(cycle[i]) + ", " + std::to_string(cycle[i + 1]) +
                      ") is not an edge");
    h = compose(h, g.potential(cycle[i], cycle[i + 1]));
  }
  return h;
}

struct ConsistencyResult {
  bool consistent;
  double max_residual;
  std::vector<GroupElement> states;             // transport witness; exact iff consistent
  std::optional<std::pair<int, int>> violation;  // first edge above tol, storage order
};

// Transport along a BFS forest, then check the residual
// chordal_distance(psi_uv * s_v, s_u) of every non-tree edge; tree edges are
// exact by construction and the non-tree edges generate the cycle space.
inline ConsistencyResult is_consistent(const PotentialGraph& g, double tol = 1e-9) {
  const detail::BfsForest f = detail::bfs_forest(g);
  ConsistencyResult res{true, 0.0, detail::forest_states(g, f), std::nullopt};
  std::vector<char> tree_edge(g.edges().size(), 0);
  for (int v = 0; v < g.num_vertices(); ++v)
    if (f.parent[v] >= 0) tree_edge[g.edge_index(v, f.parent[v])] = 1;
  for (std::size_t i = 0; i < g.edges().size(); ++i) {
    if (tree_edge[i]) continue;
    const auto& e = g.edges()[i];
    const double r = chordal_distance(compose(e.psi, res.states[e.v]), res.states[e.u]);
    res.max_residual = std::max(res.max_residual, r);
    if (r > tol && !res.violation) res.violation = std::make_pair(e.u, e.v);
  }
  res.consistent = !res.violation.has_value();
  return res;
}

namespace detail {

// Shortest-arc rotation taking unit vector b to unit vector a.
inline Eigen::Matrix3d rotation_between(const Eigen::Vector3d& b, const Eigen::Vector3d& a) {
  const double c = std::clamp(b.dot(a), -1.0, 1.0);
  Eigen::Vector3d axis = b.cross(a);
  const double s = axis.norm();
  if (s > 1e-12) return rotation_about(axis, std::atan2(s, c));
  if (c > 0.0) return Eigen::Matrix3d::Identity();
  // Antiparallel: rotate pi about any axis orthogonal to a.
  Eigen::Vector3d ortho = std::abs(a.x()) < 0.9 ? Eigen::Vector3d(1, 0, 0) : Eigen::Vector3d(0, 1, 0);
  return rotation_about(a.cross(ortho), kPi);
}

// Max conjugation residual of h over the constraint list h^{-1} a h = b.
inline double conjugacy_residual(const std::vector<GroupElement>& alphas,
                                 const std::vector<GroupElement>& betas,
                                 const GroupElement& h) {
  double worst = 0.0;
  for (std::size_t i = 0; i < alphas.size(); ++i)
    worst = std::max(worst,
                     chordal_distance(compose(inverse(h), compose(alphas[i], h)), betas[i]));
  return worst;
}

// Minimizes f over [lo, hi] by golden-section; f must be unimodal near the
// minimum, which holds for the smooth residuals searched here.
template <typename F>
inline double golden_minimize(F&& f, double lo, double hi, int iters) {
  constexpr double inv_phi = 0.6180339887498948482;
  double a = lo, b = hi;
  double c = b - (b - a) * inv_phi;
  double d = a + (b - a) * inv_phi;
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters; ++i) {
    if (fc < fd) {
      b = d; d = c; fd = fc;
      c = b - (b - a) * inv_phi;
      fc = f(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + (b - a) * inv_phi;
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

// Solves h^{-1} alpha_i h = beta_i over SO(3). Complete when the alpha axes
// span rank >= 1 away from angle 0/pi; otherwise best-effort (may return
// nullopt on a solvable instance, never a wrong h thanks to verification).
inline std::optional<GroupElement> solve_so3_conjugacy(const std::vector<GroupElement>& alphas,
                                                       const std::vector<GroupElement>& betas,
                                                       double tol) {
  // Rotation angles are conjugation invariants; reject early on mismatch.
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> solid;  // (a_axis, b_axis)
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> half;   // angle near pi: axis +- ambiguous
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    const auto [ta, ua] = angle_axis(alphas[i].matrix());
    const auto [tb, ub] = angle_axis(betas[i].matrix());
    if (std::abs(ta - tb) > std::max(tol, 1e-9) + 1e-6) return std::nullopt;
    if (ta < 1e-6) continue;  // near identity: no axis information
    if (kPi - ta < 1e-6) half.emplace_back(ua, ub);
    else solid.emplace_back(ua, ub);
  }

  const auto verified = [&](const Eigen::Matrix3d& m) -> std::optional<GroupElement> {
    const GroupElement h = GroupElement::rotation3(orthonormalized_rows(m));
    if (conjugacy_residual(alphas, betas, h) <= tol) return h;
    return std::nullopt;
  };

  const auto family_search = [&](const Eigen::Vector3d& axis,
                                 const Eigen::Matrix3d& h0) -> std::optional<GroupElement> {
    // Residual along h(t) = Rot(axis, t) * h0 is smooth in t; coarse scan
    // then golden refinement around the best sample.
    const auto residual_at = [&](double t) {
      const Eigen::Matrix3d m = rotation_about(axis, t) * h0;
      return conjugacy_residual(alphas, betas, GroupElement::rotation3(orthonormalized_rows(m)));
    };
    const int samples = 256;
    double best_t = 0.0, best_r = residual_at(0.0);
    for (int k = 1; k < samples; ++k) {
      const double t = 2.0 * kPi * k / samples;
      const double r = residual_at(t);
      if (r < best_r) { best_r = r; best_t = t; }
    }
    const double w = 2.0 * kPi / samples;
    const double t_min = golden_minimize(residual_at, best_t - w, best_t + w, 80);
    return verified(rotation_about(axis, t_min) * h0);
  };

  if (!solid.empty()) {
    // Wahba alignment of beta axes onto alpha axes.
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
    for (const auto& [a, b] : solid) m += a * b.transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
    const Eigen::Matrix3d h0 = svd.matrixU() * d * svd.matrixV().transpose();
    if (svd.singularValues()(1) > 1e-9) {
      if (auto h = verified(h0)) return h;
      return std::nullopt;  // axes span a plane: candidate is unique
    }
    // All informative axes parallel: one rotational degree of freedom left.
    return family_search(solid.front().first, rotation_between(solid.front().second,
                                                               solid.front().first));
  }

  if (!half.empty()) {
    // Only angle-pi constraints: axes defined up to sign; try both.
    const auto& [a1, b1] = half.front();
    for (const double sign : {1.0, -1.0}) {
      if (auto h = family_search(a1, rotation_between(sign * b1, a1))) return h;
    }
    return std::nullopt;
  }

  // Every constraint is near the identity; any rotation close enough works.
  return verified(Eigen::Matrix3d::Identity());
}

}  // namespace detail

// Finds gamma with gamma_u^{-1} psi^a_uv gamma_v = psi^b_uv for all edges, or
// nullopt. Exact for cyclic and so2; for so3 a returned gauge is always
// verified, while nullopt can in rare degenerate cases be a false negative.
inline std::optional<Gauge> are_gauge_equivalent(const PotentialGraph& a,
                                                 const PotentialGraph& b,
                                                 double tol = 1e-9) {
  if (!(a.kind() == b.kind()))
    throw GroupKindMismatch("graphs over " + a.kind().str() + " and " + b.kind().str());
  if (a.num_vertices() != b.num_vertices())
    throw TopologyMismatch("vertex counts differ: " + std::to_string(a.num_vertices()) + " vs " +
                           std::to_string(b.num_vertices()));
  auto edge_pairs = [](const PotentialGraph& g) {
    std::vector<std::pair<int, int>> p;
    p.reserve(g.edges().size());
    for (const auto& e : g.edges()) p.emplace_back(e.u, e.v);
    std::sort(p.begin(), p.end());
    return p;
  };
  if (edge_pairs(a) != edge_pairs(b)) throw TopologyMismatch("edge sets differ");

  // gamma_v = A_v * h_c * B_v along the BFS forest solves every tree edge for
  // any per-component root gauge h_c; non-tree edges constrain h_c by
  // h_c^{-1} alpha_e h_c = beta_e.
  const detail::BfsForest f = detail::bfs_forest(a);
  const GroupElement id = GroupElement::identity(a.kind());
  std::vector<GroupElement> A(a.num_vertices(), id), B(a.num_vertices(), id);
  std::vector<char> tree_edge(a.edges().size(), 0);
  for (int v : f.order) {
    const int p = f.parent[v];
    if (p < 0) continue;
    tree_edge[a.edge_index(v, p)] = 1;
    A[v] = compose(a.potential(v, p), A[p]);
    B[v] = compose(B[p], b.potential(p, v));
  }

  std::vector<std::vector<GroupElement>> alphas(f.num_components), betas(f.num_components);
  for (const auto& e : a.edges()) {
    if (tree_edge[a.edge_index(e.u, e.v)]) continue;
    const int c = f.component[e.u];
    alphas[c].push_back(compose(inverse(A[e.u]), compose(e.psi, A[e.v])));
    betas[c].push_back(compose(B[e.u], compose(b.potential(e.u, e.v), inverse(B[e.v]))));
  }

  std::vector<GroupElement> h(f.num_components, id);
  for (int c = 0; c < f.num_components; ++c) {
    if (alphas[c].empty()) continue;  // tree component: h free, keep identity
    switch (a.kind().tag()) {
      case GroupTag::Cyclic: {
        bool found = false;
        for (int k = 0; k < a.kind().order() && !found; ++k) {
          const GroupElement cand = GroupElement::cyclic(a.kind(), k);
          if (detail::conjugacy_residual(alphas[c], betas[c], cand) <= tol) {
            h[c] = cand;
            found = true;
          }
        }
        if (!found) return std::nullopt;
        break;
      }
      case GroupTag::SO2: {
        // Abelian: conjugation is trivial, constraints must already match.
        if (detail::conjugacy_residual(alphas[c], betas[c], id) > tol) return std::nullopt;
        break;
      }
      case GroupTag::SO3: {
        auto hc = detail::solve_so3_conjugacy(alphas[c], betas[c], tol);
        if (!hc) return std::nullopt;
        h[c] = *hc;
        break;
      }
    }
  }

  Gauge gamma{std::vector<GroupElement>(a.num_vertices(), id)};
  for (int v = 0; v < a.num_vertices(); ++v)
    gamma.at[v] = compose(A[v], compose(h[f.component[v]], B[v]));
  for (const auto& e : a.edges()) {
    const GroupElement lhs =
        compose(inverse(gamma.at[e.u]), compose(e.psi, gamma.at[e.v]));
    if (chordal_distance(lhs, b.potential(e.u, e.v)) > tol) return std::nullopt;
  }
  return gamma;
}

}  // namespace torsor
