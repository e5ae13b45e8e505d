#pragma once

// Group and feature synchronization over potential graphs. Group solvers
// recover per-vertex states minimizing sum_e w * d(g_u, psi_uv g_v)^2; the
// feature solver minimizes the frustration of a unit-norm assignment.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "torsor/errors.hpp"
#include "torsor/groups.hpp"
#include "torsor/potential_graph.hpp"
#include "torsor/rng.hpp"
#include "torsor/sheaf.hpp"

namespace torsor {

enum class SyncMethod { Tree, BruteForce, SpectralSO2, FeatureGradient };

struct SyncSolution {
  SyncMethod method;
  // Group solvers fill states; objective is sum_e w * d(g_u, psi_uv g_v)^2.
  std::vector<GroupElement> states;
  // Feature solver fills features; objective is the frustration value.
  std::optional<FeatureAssignment> features;
  double objective = 0.0;
  int iterations = 0;
};

inline double group_sync_objective(const PotentialGraph& g,
                                   const std::vector<GroupElement>& states) {
  if (static_cast<int>(states.size()) != g.num_vertices())
    throw DimensionMismatch("state count " + std::to_string(states.size()) + " != vertices " +
                            std::to_string(g.num_vertices()));
  double s = 0.0;
  for (const auto& e : g.edges()) {
    const double d = distance(states[e.u], compose(e.psi, states[e.v]));
    s += e.weight * d * d;
  }
  return s;
}

// Exact on consistent potentials; on inconsistent ones, satisfies every BFS
// tree edge and dumps all error onto non-tree edges.
inline SyncSolution solve_tree(const PotentialGraph& g, int root) {
  if (g.num_vertices() == 0) throw EmptyInput("solve_tree on an empty graph");
  const detail::BfsTree t = detail::bfs_tree(g, root);
  if (static_cast<int>(t.order.size()) != g.num_vertices())
    throw Disconnected("solve_tree needs a connected graph");
  std::vector<GroupElement> s(g.num_vertices(), GroupElement::identity(g.kind()));
  for (int v : t.order)
    if (t.parent[v] >= 0) s[v] = compose(g.potential(v, t.parent[v]), s[t.parent[v]]);
  SyncSolution out{SyncMethod::Tree, std::move(s), std::nullopt, 0.0, 0};
  out.objective = group_sync_objective(g, out.states);
  return out;
}

// Global optimum by exhaustive enumeration over cyclic states. Vertex 0 is
// pinned to the identity (the objective is invariant under global right
// multiplication); ties resolve to the lexicographically smallest assignment.
inline SyncSolution solve_brute_force(const PotentialGraph& g) {
  if (g.kind().tag() != GroupTag::Cyclic)
    throw Unsupported("solve_brute_force handles cyclic groups only");
  const int nv = g.num_vertices();
  if (nv == 0) throw EmptyInput("solve_brute_force on an empty graph");
  const int n = g.kind().order();
  double budget = 1.0;
  for (int v = 0; v < nv; ++v) {
    budget *= n;
    if (budget > 1e7)
      throw TooLarge("state space " + std::to_string(n) + "^" + std::to_string(nv) +
                     " exceeds the 1e7 budget");
  }

  std::vector<int> digits(nv, 0);  // digits[0] stays 0
  std::vector<int> best = digits;
  double best_obj = std::numeric_limits<double>::infinity();
  const auto objective = [&](const std::vector<int>& s) {
    double obj = 0.0;
    for (const auto& e : g.edges())
      if (s[e.u] != (e.psi.residue() + s[e.v]) % n) obj += e.weight;
    return obj;
  };
  for (;;) {
    const double obj = objective(digits);
    if (obj < best_obj) {
      best_obj = obj;
      best = digits;
    }
    int i = nv - 1;
    while (i >= 1 && digits[i] == n - 1) digits[i--] = 0;
    if (i < 1) break;
    ++digits[i];
  }

  SyncSolution out{SyncMethod::BruteForce, {}, std::nullopt, best_obj, 0};
  out.states.reserve(nv);
  for (int v = 0; v < nv; ++v) out.states.push_back(GroupElement::cyclic(g.kind(), best[v]));
  return out;
}

// Spectral angular synchronization: block power iteration (two columns, two
// operator applications per recorded iteration) on I + D^{-1/2} A_psi D^{-1/2}
// where A_psi carries w * Rot(psi_uv) blocks. The shift makes the operator
// PSD, so convergence also holds when lambda_min = -lambda_max (even rings).
// No general eigensolver is involved.
inline SyncSolution solve_spectral_so2(const PotentialGraph& g, int max_iters = 10000,
                                       double residual_tol = 1e-10,
                                       std::uint64_t seed = 0x5b1ce5u) {
  if (g.kind().tag() != GroupTag::SO2)
    throw Unsupported("solve_spectral_so2 handles so2 only");
  const int nv = g.num_vertices();
  if (nv == 0) throw EmptyInput("solve_spectral_so2 on an empty graph");
  if (static_cast<int>(detail::bfs_tree(g, 0).order.size()) != nv)
    throw Disconnected("solve_spectral_so2 needs a connected graph");
  if (nv == 1)
    return SyncSolution{SyncMethod::SpectralSO2, {GroupElement::identity(g.kind())}, std::nullopt,
                        0.0, 0};

  Eigen::MatrixXd s_op = Eigen::MatrixXd::Identity(2 * nv, 2 * nv);
  for (const auto& e : g.edges()) {
    const double scale =
        e.weight / std::sqrt(g.weighted_degree(e.u) * g.weighted_degree(e.v));
    const double c = std::cos(e.psi.theta()), sn = std::sin(e.psi.theta());
    Eigen::Matrix2d rot;
    rot << c, -sn, sn, c;
    s_op.block<2, 2>(2 * e.u, 2 * e.v) = scale * rot;
    s_op.block<2, 2>(2 * e.v, 2 * e.u) = scale * rot.transpose();
  }

  Rng rng(seed);
  Eigen::MatrixXd v(2 * nv, 2);
  for (int i = 0; i < v.rows(); ++i)
    for (int j = 0; j < 2; ++j) v(i, j) = rng.gaussian();
  const auto orthonormalize = [](Eigen::MatrixXd& m) {
    m.col(0).normalize();
    m.col(1) -= m.col(0).dot(m.col(1)) * m.col(0);
    m.col(1).normalize();
  };
  orthonormalize(v);

  int used = 0;
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iters; ++it) {
    v = s_op * (s_op * v).eval();
    orthonormalize(v);
    ++used;
    const Eigen::MatrixXd sv = s_op * v;
    const Eigen::Matrix2d h = v.transpose() * sv;
    residual = (sv - v * h).cwiseAbs().maxCoeff();
    if (residual <= residual_tol) break;
  }
  if (residual > residual_tol)
    throw ConvergenceFailure("spectral residual " + std::to_string(residual) + " after " +
                             std::to_string(used) + " iterations");

  // Top eigenvector of the converged 2x2 section, solved in closed form.
  const Eigen::MatrixXd sv = s_op * v;
  const Eigen::Matrix2d h = v.transpose() * sv;
  const double tr = h(0, 0) + h(1, 1);
  const double det = h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0);
  const double lam = tr / 2.0 + std::sqrt(std::max(tr * tr / 4.0 - det, 0.0));
  Eigen::Vector2d y(h(0, 1), lam - h(0, 0));
  if (y.norm() < 1e-12) y = Eigen::Vector2d(lam - h(1, 1), h(1, 0));
  if (y.norm() < 1e-12) y = Eigen::Vector2d(1, 0);
  const Eigen::VectorXd u = v * y.normalized();

  SyncSolution out{SyncMethod::SpectralSO2, {}, std::nullopt, 0.0, used};
  out.states.reserve(nv);
  for (int i = 0; i < nv; ++i) {
    const double x = u(2 * i), yy = u(2 * i + 1);
    out.states.push_back(GroupElement::angle(std::hypot(x, yy) > 1e-300 ? std::atan2(yy, x) : 0.0));
  }
  out.objective = group_sync_objective(g, out.states);
  return out;
}

// Minimizes frustration over unit-Frobenius-norm assignments by projected
// gradient descent with a fixed step below the Lipschitz bound; equivalent to
// power iteration on a PSD shift of the connection Laplacian, so the
// objective is non-increasing (asserted). Best of `restarts` seeded runs,
// ties to the lower restart index.
inline SyncSolution solve_feature_sync(const PotentialGraph& g, const Representation& rep,
                                       int restarts, std::uint64_t seed, int max_iters = 10000) {
  if (!(rep.group() == g.kind()))
    throw GroupKindMismatch("rep over " + rep.group().str() + " on a " + g.kind().str() +
                            " graph");
  if (g.num_edges() == 0) throw EmptyInput("solve_feature_sync needs at least one edge");
  if (restarts < 1) throw EmptyInput("solve_feature_sync needs restarts >= 1");

  double max_wdeg = 0.0;
  for (int vtx = 0; vtx < g.num_vertices(); ++vtx)
    max_wdeg = std::max(max_wdeg, g.weighted_degree(vtx));
  // grad = (2/vol) L f with lambda_max(L) <= 2 * max weighted degree.
  const double step = 0.45 * g.volume() / (2.0 * max_wdeg);

  std::optional<FeatureAssignment> best;
  double best_obj = std::numeric_limits<double>::infinity();
  int best_iters = 0;
  for (int r = 0; r < restarts; ++r) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    FeatureAssignment f{rep, Eigen::MatrixXd(g.num_vertices(), rep.dim())};
    for (int i = 0; i < f.values.rows(); ++i)
      for (int j = 0; j < f.values.cols(); ++j) f.values(i, j) = rng.gaussian();
    f.values /= f.values.norm();

    double obj = frustration(g, f);
    int used = 0;
    for (int it = 0; it < max_iters; ++it) {
      f.values -= step * frustration_gradient(g, f);
      f.values /= f.values.norm();
      const double next = frustration(g, f);
      ++used;
      if (next > obj * (1.0 + 1e-12) + 1e-18)
        throw ConvergenceFailure("projected gradient objective increased: " +
                                 std::to_string(obj) + " -> " + std::to_string(next));
      const double delta = obj - next;
      obj = next;
      if (delta <= 1e-14 * std::max(1.0, obj)) break;
    }
    if (obj < best_obj) {
      best_obj = obj;
      best = std::move(f);
      best_iters = used;
    }
  }
  return SyncSolution{SyncMethod::FeatureGradient, {}, std::move(best), best_obj, best_iters};
}

}  // namespace torsor
