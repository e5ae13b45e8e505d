#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace torsor;
using torsor_test::payload_residual;
using torsor_test::random_gauge;

namespace {

// Coefficients that make the layer kernel exactly the identity: project I
// onto the orthonormal commutant basis (I always lies in a self-commutant).
TorsorConvLayer identity_layer(const Representation& rep,
                               Nonlinearity nl = Nonlinearity::None, double bias = 0.0) {
  IntertwinerBasis basis = commutant_basis(rep, rep);
  std::vector<double> coeffs(basis.basis.size());
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(rep.dim(), rep.dim());
  for (std::size_t i = 0; i < basis.basis.size(); ++i)
    coeffs[i] = (basis.basis[i].array() * eye.array()).sum();
  return make_layer(std::move(basis), std::move(coeffs), nl, bias);
}

TorsorConvLayer random_layer(const Representation& rep, std::uint64_t seed) {
  IntertwinerBasis basis = commutant_basis(rep, rep);
  std::vector<double> coeffs = init_coefficients(basis, seed);
  return make_layer(std::move(basis), std::move(coeffs));
}

DatasetParams base_params() {
  DatasetParams p;
  p.classes = 2;
  p.instances_per_class = 2;
  p.views = 5;
  p.topology = ViewTopology::Complete;
  p.sigma_view = 0.0;
  p.seed = 21;
  return p;
}

}  // namespace

TEST_CASE("dataset generation is deterministic and class-separated") {
  const DatasetParams p = base_params();
  const auto a = generate_dataset(p);
  const auto b = generate_dataset(p);
  REQUIRE(a.size() == 4);
  REQUIRE(b.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].object.class_id == b[i].object.class_id);
    CHECK((a[i].object.canonical_feature.array() == b[i].object.canonical_feature.array()).all());
    CHECK((a[i].observed.values.array() == b[i].observed.values.array()).all());
    for (std::size_t v = 0; v < a[i].cameras.size(); ++v)
      CHECK(payload_residual(a[i].cameras[v], b[i].cameras[v]) == 0.0);
  }
  // Distinct classes keep canonical features >= 1 apart.
  CHECK((a[0].object.canonical_feature - a[2].object.canonical_feature).norm() >= 1.0);
  // Same class shares the canonical feature; different seeds differ.
  CHECK((a[0].object.canonical_feature.array() == a[1].object.canonical_feature.array()).all());
  DatasetParams p2 = p;
  p2.seed = 22;
  const auto c = generate_dataset(p2);
  CHECK(!(a[0].observed.values.array() == c[0].observed.values.array()).all());
}

TEST_CASE("noiseless instances are global sections with consistent potentials") {
  for (const ViewTopology topo :
       {ViewTopology::Complete, ViewTopology::Ring, ViewTopology::Knn}) {
    DatasetParams p = base_params();
    p.topology = topo;
    p.views = 6;
    p.knn_k = 2;
    p.seed = 31;
    for (const auto& inst : generate_dataset(p)) {
      CHECK(is_global_section(inst.graph, inst.observed, 1e-9).is_section);
      CHECK(is_consistent(inst.graph, 1e-9).consistent);
      // Antisymmetry: psi_uv composed with psi_vu is the identity.
      for (const auto& e : inst.graph.edges())
        CHECK(payload_residual(compose(e.psi, inverse(e.psi)),
                               identity(GroupKind::so3())) < 1e-12);
      // Potentials match the cameras they were built from.
      for (const auto& e : inst.graph.edges())
        CHECK(torsor_test::payload_residual(
                  e.psi, compose(inst.cameras[static_cast<std::size_t>(e.u)],
                                 inverse(inst.cameras[static_cast<std::size_t>(e.v)]))) <
              1e-12);
    }
  }

  // Triangle holonomy on the complete topology is the identity.
  DatasetParams p = base_params();
  p.views = 4;
  const auto data = generate_dataset(p);
  const GroupElement h = holonomy(data[0].graph, {0, 1, 2, 0});
  CHECK(distance(h, identity(GroupKind::so3())) <= 1e-12);

  // Wider features via a direct sum of standard copies stay sections.
  DatasetParams wide = base_params();
  wide.rep = Representation::direct_sum({Representation::standard(GroupKind::so3()),
                                         Representation::standard(GroupKind::so3())});
  for (const auto& inst : generate_dataset(wide))
    CHECK(is_global_section(inst.graph, inst.observed, 1e-9).is_section);
}

TEST_CASE("topologies produce the expected edge counts and stay connected") {
  DatasetParams p = base_params();
  p.views = 7;

  p.topology = ViewTopology::Complete;
  CHECK(generate_dataset(p)[0].graph.edges().size() == 21);

  p.topology = ViewTopology::Ring;
  CHECK(generate_dataset(p)[0].graph.edges().size() == 7);

  p.topology = ViewTopology::Knn;
  p.knn_k = 2;
  const auto data = generate_dataset(p);
  CHECK(data[0].graph.edges().size() >= 7);
  // Connected: transporting from a root reaches every view.
  Eigen::VectorXd seedvec = Eigen::VectorXd::Ones(3);
  CHECK_NOTHROW(
      transport_from_root(data[0].graph, p.rep, 0, seedvec));

  p.knn_k = 0;
  CHECK_THROWS_AS(generate_dataset(p), Unsupported);
}

TEST_CASE("noiseless descriptors with the identity kernel recover the canonical feature") {
  DatasetParams p = base_params();
  p.views = 6;
  p.seed = 41;
  const auto data = generate_dataset(p);
  const Representation rep = Representation::standard(GroupKind::so3());
  const TorsorConvLayer layer = identity_layer(rep);
  for (const auto& inst : data) {
    for (const int r : {0, 3}) {
      const Eigen::VectorXd z = descriptor_pipeline_a(inst, layer, r);
      const Eigen::VectorXd expected =
          rep.matrix(inst.cameras[static_cast<std::size_t>(r)]) *
          inst.object.canonical_feature;
      CHECK((z - expected).norm() <= 1e-9);
      CHECK((world_descriptor(inst, layer, r) - inst.object.canonical_feature).norm() <= 1e-9);
    }
  }

  // Same object seen through different cameras: world descriptors coincide,
  // with an arbitrary commutant kernel too (the kernel commutes with rho).
  const TorsorConvLayer any = random_layer(rep, 99);
  const Eigen::VectorXd z0 = world_descriptor(data[0], any, 2);
  const Eigen::VectorXd z1 = world_descriptor(data[1], any, 4);
  CHECK((z0 - z1).norm() <= 1e-9);
}

TEST_CASE("descriptor transforms by the reference gauge entry only") {
  DatasetParams p = base_params();
  p.views = 5;
  p.sigma_view = 0.05;  // the law holds for arbitrary features
  p.seed = 43;
  const auto data = generate_dataset(p);
  const Representation rep = Representation::standard(GroupKind::so3());
  Rng rng(7);
  for (const Nonlinearity nl : {Nonlinearity::None, Nonlinearity::NormRelu}) {
    const TorsorConvLayer layer =
        nl == Nonlinearity::None ? random_layer(rep, 55) : identity_layer(rep, nl, 0.2);
    for (const auto& inst : data) {
      const Gauge gamma = random_gauge(GroupKind::so3(), p.views, rng);
      const ViewInstance gauged{inst.object, inst.cameras,
                                apply_gauge(inst.graph, gamma),
                                apply_gauge_features(inst.observed, gamma)};
      const int r = 2;
      const Eigen::VectorXd base = descriptor_pipeline_a(inst, layer, r);
      const Eigen::VectorXd moved = descriptor_pipeline_a(gauged, layer, r);
      const Eigen::VectorXd expected =
          rep.matrix(gamma.at[static_cast<std::size_t>(r)]).transpose() * base;
      CHECK((moved - expected).norm() <= 1e-9);
    }
  }
}

TEST_CASE("noiseless triplet report collapses intra-class distances") {
  DatasetParams p = base_params();
  p.classes = 3;
  p.instances_per_class = 2;
  p.views = 5;
  p.seed = 47;
  const auto data = generate_dataset(p);
  const Representation rep = Representation::standard(GroupKind::so3());
  const TorsorConvLayer layer = identity_layer(rep);
  // Independent hinge-on-inter-only oracle from the canonical features: all
  // triples with anchor in class A and negative in class B contribute
  // max(0, margin - ||c_A - c_B||^2); anchors and positives collapse exactly.
  const auto hinge_oracle = [&](double margin) {
    double total = 0.0;
    long long count = 0;
    for (std::size_t a = 0; a < data.size(); ++a)
      for (std::size_t q = 0; q < data.size(); ++q) {
        if (q == a || data[q].object.class_id != data[a].object.class_id) continue;
        for (std::size_t n = 0; n < data.size(); ++n) {
          if (data[n].object.class_id == data[a].object.class_id) continue;
          const double inter2 = (data[a].object.canonical_feature -
                                 data[n].object.canonical_feature)
                                    .squaredNorm();
          total += std::max(0.0, margin - inter2);
          ++count;
        }
      }
    return std::make_pair(total / static_cast<double>(count), count);
  };

  const TripletReport rep_out = triplet_gap_experiment(data, layer, 0, 0.5);
  CHECK(rep_out.d_intra_aligned <= 1e-9);
  CHECK(rep_out.d_intra_raw > 1e-3);  // rotation dispersion keeps raw spread out
  CHECK(rep_out.d_inter_aligned > 0.9);
  CHECK(hinge_oracle(0.5).second == rep_out.num_triplets);
  CHECK(std::abs(rep_out.mean_triplet_aligned - hinge_oracle(0.5).first) <= 1e-9);
  // Classes are >= 1 apart and the margin is 0.5, so the aligned hinge is silent.
  CHECK(rep_out.mean_triplet_aligned == 0.0);

  // A margin above the class separations keeps the hinge active; the report
  // must still match the inter-only value.
  const TripletReport wide = triplet_gap_experiment(data, layer, 0, 50.0);
  CHECK(wide.mean_triplet_aligned > 0.0);
  CHECK(std::abs(wide.mean_triplet_aligned - hinge_oracle(50.0).first) <= 1e-9);

  CHECK_THROWS_AS(
      [&] {
        DatasetParams solo = p;
        solo.classes = 1;
        return triplet_gap_experiment(generate_dataset(solo), layer, 0, 0.5);
      }(),
      EmptyInput);
}

TEST_CASE("small view noise: aligned intra-class spread is far below raw") {
  DatasetParams p;
  p.classes = 5;
  p.instances_per_class = 4;
  p.views = 8;
  p.topology = ViewTopology::Complete;
  p.sigma_view = 0.01;
  p.seed = 53;
  const auto data = generate_dataset(p);
  const TorsorConvLayer layer = identity_layer(Representation::standard(GroupKind::so3()));
  const TripletReport rep_out = triplet_gap_experiment(data, layer, 0, 1.0);
  CHECK(rep_out.d_intra_aligned < 0.1 * rep_out.d_intra_raw);
}

TEST_CASE("frustration-regularized training drives the penalty down") {
  DatasetParams p = base_params();
  p.views = 4;
  p.seed = 59;
  const auto data = generate_dataset(p);

  const TrainReport report = train_with_frustration(data, 10.0, 500, 0.0, 61);
  CHECK_FALSE(report.diverged);
  CHECK(report.gradient_check_rel_err <= 1e-4);
  CHECK(report.eta_initial > 0.0);  // a random encoder does not commute with rho
  CHECK(report.eta_final <= 0.1 * report.eta_initial);
  CHECK(report.eta_final < report.eta_initial);
  CHECK(report.task_final < report.task_initial);
  CHECK(report.encoder.rows() == 3);
  CHECK(report.encoder.cols() == 3);
  REQUIRE(report.curve.size() == 500);
  // The chosen step keeps the combined quadratic objective monotone.
  for (std::size_t t = 1; t < report.curve.size(); ++t) {
    const double prev = report.curve[t - 1].first + 10.0 * report.curve[t - 1].second;
    const double cur = report.curve[t].first + 10.0 * report.curve[t].second;
    CHECK(cur <= prev + 1e-12);
  }

  // lambda = 0: eta is recorded but unconstrained; the task still trains.
  const TrainReport free = train_with_frustration(data, 0.0, 200, 0.0, 61);
  CHECK_FALSE(free.diverged);
  CHECK(free.task_final <= free.task_initial);

  // A reckless fixed step diverges and is reported with its history.
  const TrainReport wild = train_with_frustration(data, 10.0, 50, 1e9, 61);
  CHECK(wild.diverged);
  CHECK(wild.curve.size() <= 50);

  CHECK_THROWS_AS(train_with_frustration({}, 1.0, 10, 0.0, 1), EmptyInput);
  CHECK_THROWS_AS(train_with_frustration(data, -1.0, 10, 0.0, 1), Unsupported);
}

TEST_CASE("dataset parameter validation") {
  DatasetParams p = base_params();
  p.classes = 0;
  CHECK_THROWS_AS(generate_dataset(p), EmptyInput);
  p = base_params();
  p.views = 0;
  CHECK_THROWS_AS(generate_dataset(p), EmptyInput);
  p = base_params();
  p.sigma_view = -0.1;
  CHECK_THROWS_AS(generate_dataset(p), InvalidGraph);
  p = base_params();
  p.rep = Representation::standard(GroupKind::so2());
  CHECK_THROWS_AS(generate_dataset(p), GroupKindMismatch);
}
