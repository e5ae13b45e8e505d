#pragma once

// Desk-scale multi-view experiment: synthetic objects observed from random
// camera rotations, view graphs with relative-rotation potentials, descriptor
// pipelines with and without reference alignment, and frustration-regularized
// training of a linear per-view encoder.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "torsor/conv.hpp"
#include "torsor/errors.hpp"
#include "torsor/groups.hpp"
#include "torsor/potential_graph.hpp"
#include "torsor/rng.hpp"
#include "torsor/sheaf.hpp"

namespace torsor {

struct SyntheticObject {
  int class_id;
  Eigen::VectorXd canonical_feature;  // world-frame feature; classes >= 1.0 apart
  double instance_noise;
};

struct ViewInstance {
  SyntheticObject object;
  std::vector<GroupElement> cameras;  // R_i in so3
  PotentialGraph graph;               // psi_ij = R_i R_j^T, consistent by construction
  FeatureAssignment observed;         // rho(R_i) * base + gaussian(sigma_view)
};

enum class ViewTopology { Complete, Ring, Knn };

struct DatasetParams {
  int classes = 2;
  int instances_per_class = 2;
  int views = 4;
  ViewTopology topology = ViewTopology::Complete;
  int knn_k = 3;
  double sigma_view = 0.0;
  double sigma_object = 0.0;
  std::uint64_t seed = 1;
  Representation rep = Representation::standard(GroupKind::so3());
};

namespace detail {

inline std::vector<EdgeTopo> view_edges(const std::vector<GroupElement>& cameras,
                                        ViewTopology topology, int k) {
  const int n = static_cast<int>(cameras.size());
  std::vector<std::pair<int, int>> pairs;
  const auto add = [&](int a, int b) {
    if (a == b) return;
    const auto p = std::minmax(a, b);
    const auto pr = std::make_pair(p.first, p.second);
    if (std::find(pairs.begin(), pairs.end(), pr) == pairs.end()) pairs.push_back(pr);
  };
  switch (topology) {
    case ViewTopology::Complete:
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) add(i, j);
      break;
    case ViewTopology::Ring:
      for (int i = 0; i < n; ++i) add(i, (i + 1) % n);
      break;
    case ViewTopology::Knn: {
      if (k < 1) throw Unsupported("knn topology needs k >= 1");
      for (int i = 0; i < n; ++i) {
        std::vector<std::pair<double, int>> others;
        for (int j = 0; j < n; ++j)
          if (j != i) others.emplace_back(distance(cameras[i], cameras[j]), j);
        std::sort(others.begin(), others.end());
        for (int t = 0; t < std::min<int>(k, static_cast<int>(others.size())); ++t)
          add(i, others[t].second);
      }
      // Join components deterministically by the closest cross pair.
      std::vector<int> comp(n);
      for (int i = 0; i < n; ++i) comp[i] = i;
      const auto unite = [&](int a, int b) {
        const int ca = comp[a], cb = comp[b];
        for (int& c : comp)
          if (c == cb) c = ca;
      };
      for (const auto& [a, b] : pairs) unite(a, b);
      for (;;) {
        double best_d = -1.0;
        std::pair<int, int> best{-1, -1};
        for (int i = 0; i < n; ++i)
          for (int j = i + 1; j < n; ++j) {
            if (comp[i] == comp[j]) continue;
            const double d = distance(cameras[i], cameras[j]);
            if (best.first < 0 || d < best_d) {
              best_d = d;
              best = {i, j};
            }
          }
        if (best.first < 0) break;
        add(best.first, best.second);
        unite(best.first, best.second);
      }
      break;
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<EdgeTopo> out;
  out.reserve(pairs.size());
  for (const auto& [a, b] : pairs) out.push_back(EdgeTopo{a, b, 1.0});
  return out;
}

}  // namespace detail

// Deterministic for a given params.seed. Canonical class features are drawn
// until pairwise distances reach 1.0; cameras are fresh per instance.
inline std::vector<ViewInstance> generate_dataset(const DatasetParams& params) {
  if (params.classes < 1 || params.instances_per_class < 1 || params.views < 1)
    throw EmptyInput("dataset sizes must be >= 1");
  if (!(params.rep.group() == GroupKind::so3()))
    throw GroupKindMismatch("view graphs carry so3 potentials; rep must act on so3");
  if (params.sigma_view < 0.0 || params.sigma_object < 0.0)
    throw InvalidGraph("noise levels must be >= 0");

  Rng rng(params.seed);
  const int d = params.rep.dim();

  std::vector<Eigen::VectorXd> canonicals;
  double scale = 2.0;
  for (int c = 0; c < params.classes; ++c) {
    for (int tries = 1;; ++tries) {
      Eigen::VectorXd cand(d);
      for (int j = 0; j < d; ++j) cand(j) = scale * rng.gaussian();
      double closest = std::numeric_limits<double>::infinity();
      for (const auto& prev : canonicals) closest = std::min(closest, (cand - prev).norm());
      if (closest >= 1.0) {
        canonicals.push_back(std::move(cand));
        break;
      }
      if (tries % 100 == 0) scale *= 1.5;  // deterministic escape from crowding
    }
  }

  std::vector<ViewInstance> out;
  out.reserve(static_cast<std::size_t>(params.classes) * params.instances_per_class);
  for (int c = 0; c < params.classes; ++c) {
    for (int i = 0; i < params.instances_per_class; ++i) {
      std::vector<GroupElement> cameras;
      cameras.reserve(params.views);
      for (int v = 0; v < params.views; ++v)
        cameras.push_back(random_element(GroupKind::so3(), rng));

      Eigen::VectorXd base = canonicals[c];
      if (params.sigma_object > 0.0)
        for (int j = 0; j < d; ++j) base(j) += params.sigma_object * rng.gaussian();

      PotentialGraph graph = from_absolute_states(
          cameras, detail::view_edges(cameras, params.topology, params.knn_k));

      FeatureAssignment observed{params.rep, Eigen::MatrixXd(params.views, d)};
      for (int v = 0; v < params.views; ++v) {
        Eigen::VectorXd row = params.rep.matrix(cameras[v]) * base;
        if (params.sigma_view > 0.0)
          for (int j = 0; j < d; ++j) row(j) += params.sigma_view * rng.gaussian();
        observed.values.row(v) = row.transpose();
      }

      out.push_back(ViewInstance{SyntheticObject{c, canonicals[c], params.sigma_object},
                                 std::move(cameras), std::move(graph), std::move(observed)});
    }
  }
  return out;
}

// Pool of the raw layer output, no alignment: the rotation-dispersion baseline.
inline Eigen::VectorXd raw_descriptor(const ViewInstance& instance,
                                      const TorsorConvLayer& layer) {
  return pool(forward(layer, instance.graph, instance.observed), PoolMode::Mean);
}

// forward -> align_to_reference(r) -> mean pool. Gauge-transforming the
// instance changes the result by rho_out(gamma_r)^{-1} only.
inline Eigen::VectorXd descriptor_pipeline_a(const ViewInstance& instance,
                                             const TorsorConvLayer& layer, int r) {
  const FeatureAssignment f = forward(layer, instance.graph, instance.observed);
  return pool(align_to_reference(instance.graph, f, r).features, PoolMode::Mean);
}

// Descriptor rewritten in the world frame via the known reference camera,
// comparable across instances with different cameras.
inline Eigen::VectorXd world_descriptor(const ViewInstance& instance,
                                        const TorsorConvLayer& layer, int r) {
  return layer.basis.rep_out.matrix(inverse(instance.cameras.at(r))) *
         descriptor_pipeline_a(instance, layer, r);
}

struct TripletReport {
  double d_intra_raw = 0.0;
  double d_intra_aligned = 0.0;
  double d_inter_raw = 0.0;
  double d_inter_aligned = 0.0;
  double mean_triplet_raw = 0.0;
  double mean_triplet_aligned = 0.0;
  long long num_triplets = 0;
};

// Mean squared intra/inter distances and mean hinge triplet losses over all
// (anchor, positive, negative) triples, raw vs reference-aligned descriptors.
inline TripletReport triplet_gap_experiment(const std::vector<ViewInstance>& dataset,
                                            const TorsorConvLayer& layer, int r, double margin) {
  std::vector<Eigen::VectorXd> raw, aligned;
  raw.reserve(dataset.size());
  aligned.reserve(dataset.size());
  for (const auto& inst : dataset) {
    raw.push_back(raw_descriptor(inst, layer));
    aligned.push_back(world_descriptor(inst, layer, r));
  }

  TripletReport rep;
  long long intra = 0, inter = 0;
  for (std::size_t a = 0; a < dataset.size(); ++a) {
    for (std::size_t b = a + 1; b < dataset.size(); ++b) {
      const double dr = (raw[a] - raw[b]).squaredNorm();
      const double da = (aligned[a] - aligned[b]).squaredNorm();
      if (dataset[a].object.class_id == dataset[b].object.class_id) {
        rep.d_intra_raw += dr;
        rep.d_intra_aligned += da;
        ++intra;
      } else {
        rep.d_inter_raw += dr;
        rep.d_inter_aligned += da;
        ++inter;
      }
    }
  }
  if (intra == 0 || inter == 0)
    throw EmptyInput("triplet experiment needs >= 2 instances of some class and >= 2 classes");
  rep.d_intra_raw /= intra;
  rep.d_intra_aligned /= intra;
  rep.d_inter_raw /= inter;
  rep.d_inter_aligned /= inter;

  for (std::size_t a = 0; a < dataset.size(); ++a)
    for (std::size_t p = 0; p < dataset.size(); ++p) {
      if (p == a || dataset[p].object.class_id != dataset[a].object.class_id) continue;
      for (std::size_t n = 0; n < dataset.size(); ++n) {
        if (dataset[n].object.class_id == dataset[a].object.class_id) continue;
        rep.mean_triplet_raw +=
            std::max(0.0, (raw[a] - raw[p]).squaredNorm() -
                              (raw[a] - raw[n]).squaredNorm() + margin);
        rep.mean_triplet_aligned +=
            std::max(0.0, (aligned[a] - aligned[p]).squaredNorm() -
                              (aligned[a] - aligned[n]).squaredNorm() + margin);
        ++rep.num_triplets;
      }
    }
  rep.mean_triplet_raw /= static_cast<double>(rep.num_triplets);
  rep.mean_triplet_aligned /= static_cast<double>(rep.num_triplets);
  return rep;
}

struct TrainReport {
  double eta_initial = 0.0;
  double eta_final = 0.0;
  double task_initial = 0.0;
  double task_final = 0.0;
  double learning_rate = 0.0;
  double gradient_check_rel_err = 0.0;
  bool diverged = false;
  std::vector<std::pair<double, double>> curve;  // (task loss, mean frustration) per epoch
  Eigen::MatrixXd encoder;
};

namespace detail {

struct TrainObjective {
  const std::vector<ViewInstance>& dataset;
  std::vector<Eigen::VectorXd> prototypes;  // class id -> canonical feature
  double lambda;

  // Task: mean over instances of || mean_i rho(R_i)^{-1} E x_i - P_class ||^2.
  // Reg: lambda * mean frustration of rowwise-encoded features.
  std::pair<double, double> losses(const Eigen::MatrixXd& e) const {
    double task = 0.0, eta = 0.0;
    for (const auto& inst : dataset) {
      const Eigen::MatrixXd encoded = inst.observed.values * e.transpose();
      Eigen::VectorXd z = Eigen::VectorXd::Zero(e.rows());
      for (std::size_t i = 0; i < inst.cameras.size(); ++i)
        z += inst.observed.rep.matrix(inverse(inst.cameras[i])) * encoded.row(i).transpose();
      z /= static_cast<double>(inst.cameras.size());
      task += (z - prototypes[inst.object.class_id]).squaredNorm();
      eta += frustration(inst.graph, FeatureAssignment{inst.observed.rep, encoded});
    }
    const double m = static_cast<double>(dataset.size());
    return {task / m, eta / m};
  }

  double total(const Eigen::MatrixXd& e) const {
    const auto [task, eta] = losses(e);
    return task + lambda * eta;
  }

  Eigen::MatrixXd gradient(const Eigen::MatrixXd& e) const {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(e.rows(), e.cols());
    for (const auto& inst : dataset) {
      const int nviews = static_cast<int>(inst.cameras.size());
      const Eigen::MatrixXd encoded = inst.observed.values * e.transpose();
      std::vector<Eigen::MatrixXd> rho_inv(nviews);
      Eigen::VectorXd z = Eigen::VectorXd::Zero(e.rows());
      for (int i = 0; i < nviews; ++i) {
        rho_inv[i] = inst.observed.rep.matrix(inverse(inst.cameras[i]));
        z += rho_inv[i] * encoded.row(i).transpose();
      }
      z /= nviews;
      const Eigen::VectorXd resid = z - prototypes[inst.object.class_id];
      for (int i = 0; i < nviews; ++i)
        g += (2.0 / nviews) * (rho_inv[i].transpose() * resid) *
             inst.observed.values.row(i);
      const Eigen::MatrixXd eta_grad =
          frustration_gradient(inst.graph, FeatureAssignment{inst.observed.rep, encoded});
      g += lambda * eta_grad.transpose() * inst.observed.values;
    }
    return g / static_cast<double>(dataset.size());
  }
};

}  // namespace detail

// Full-batch gradient descent on task + lambda * frustration for a linear
// encoder E. lr <= 0 requests a step from a Lipschitz estimate (the objective
// is an exact quadratic in E, so Hessian-vector products are gradient
// differences and power iteration pins the largest curvature).
inline TrainReport train_with_frustration(const std::vector<ViewInstance>& dataset,
                                          double lambda, int epochs, double lr,
                                          std::uint64_t seed) {
  if (dataset.empty()) throw EmptyInput("train_with_frustration needs instances");
  if (lambda < 0.0) throw Unsupported("lambda must be >= 0");
  const int d = dataset.front().observed.rep.dim();

  detail::TrainObjective obj{dataset, {}, lambda};
  int max_class = 0;
  for (const auto& inst : dataset) max_class = std::max(max_class, inst.object.class_id);
  obj.prototypes.assign(max_class + 1, Eigen::VectorXd::Zero(d));
  for (const auto& inst : dataset) obj.prototypes[inst.object.class_id] = inst.object.canonical_feature;

  Rng rng(mix_seed(seed, 0xE));
  Eigen::MatrixXd e(d, d);
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) e(i, j) = rng.uniform(-s, s);

  TrainReport report;
  if (lr > 0.0) {
    report.learning_rate = lr;
  } else {
    // Power iteration on the (constant) Hessian via gradient differences.
    const Eigen::MatrixXd g0 = obj.gradient(Eigen::MatrixXd::Zero(d, d));
    Eigen::MatrixXd v(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) v(i, j) = rng.gaussian();
    v /= v.norm();
    double lip = 1.0;
    for (int it = 0; it < 60; ++it) {
      Eigen::MatrixXd hv = obj.gradient(v) - g0;
      lip = hv.norm();
      if (lip < 1e-300) break;
      v = hv / lip;
    }
    report.learning_rate = lip > 1e-300 ? 0.95 / lip : 1.0;
  }

  // Central-difference check of the analytic gradient at epoch 0.
  {
    const Eigen::MatrixXd ga = obj.gradient(e);
    Eigen::MatrixXd gfd(d, d);
    const double h = 1e-5;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        Eigen::MatrixXd ep = e, em = e;
        ep(i, j) += h;
        em(i, j) -= h;
        gfd(i, j) = (obj.total(ep) - obj.total(em)) / (2.0 * h);
      }
    report.gradient_check_rel_err = (ga - gfd).norm() / std::max(gfd.norm(), 1e-12);
  }

  report.curve.reserve(epochs);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto [task, eta] = obj.losses(e);
    if (!std::isfinite(task) || !std::isfinite(eta)) {
      report.diverged = true;
      break;
    }
    report.curve.emplace_back(task, eta);
    e -= report.learning_rate * obj.gradient(e);
  }
  const auto [task_final, eta_final] = obj.losses(e);
  if (!std::isfinite(task_final) || !std::isfinite(eta_final)) report.diverged = true;
  report.task_initial = report.curve.empty() ? task_final : report.curve.front().first;
  report.eta_initial = report.curve.empty() ? eta_final : report.curve.front().second;
  report.task_final = task_final;
  report.eta_final = eta_final;
  report.encoder = std::move(e);
  return report;
}

}  // namespace torsor
