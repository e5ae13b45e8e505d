// torsor CLI: file-format front end for consistency checks, frustration,
// synchronization, equivariant convolution, gauge transforms and the
// multi-view demo. Results go to stdout, diagnostics to stderr; exit codes:
// 0 success, 1 domain error, 2 usage error.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "torsor/torsor.hpp"

namespace {

std::string num(double x) { return torsor::format_double(x, 15); }

std::uint64_t default_seed() {
  if (const char* env = std::getenv("TORSOR_SEED")) {
    std::uint64_t v = 0;
    const std::string s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec == std::errc{} && res.ptr == s.data() + s.size()) return v;
    throw torsor::Error("TORSOR_SEED is not an unsigned integer: '" + s + "'");
  }
  return 0;
}

torsor::PotentialGraph load_graph_file(const std::string& path) {
  try {
    return torsor::load_graph(torsor::read_file(path));
  } catch (const torsor::ParseError& e) {
    throw torsor::ParseError(path + ": " + e.what());
  }
}

torsor::Nonlinearity parse_nonlinearity(const std::string& s, double& bias) {
  if (s == "none") return torsor::Nonlinearity::None;
  if (s == "relu") return torsor::Nonlinearity::PointwiseRelu;
  if (s.rfind("norm:", 0) == 0) {
    const std::string b = s.substr(5);
    const auto res = std::from_chars(b.data(), b.data() + b.size(), bias);
    if (res.ec != std::errc{} || res.ptr != b.data() + b.size())
      throw torsor::Error("bad norm bias in '--nonlinearity " + s + "'");
    return torsor::Nonlinearity::NormRelu;
  }
  throw torsor::Error("unknown nonlinearity '" + s + "' (use none|relu|norm:<b>)");
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty())
    std::cout << text;
  else
    torsor::write_file(out_path, text);
}

struct CheckArgs {
  std::string graph;
};

int run_check(const CheckArgs& a) {
  const torsor::PotentialGraph g = load_graph_file(a.graph);
  const torsor::ConsistencyResult res = torsor::is_consistent(g);
  std::cout << (res.consistent ? "consistent" : "inconsistent")
            << " max_residual=" << num(res.max_residual);
  if (res.violation)
    std::cout << " violation=" << res.violation->first << "," << res.violation->second;
  std::cout << "\n";
  return 0;
}

struct FrustrationArgs {
  std::string graph, features, rep;
};

int run_frustration(const FrustrationArgs& a) {
  const torsor::PotentialGraph g = load_graph_file(a.graph);
  const torsor::Representation rep = torsor::parse_rep_spec(a.rep, g.kind());
  const torsor::FeatureAssignment f{
      rep, torsor::load_features(torsor::read_file(a.features), g.num_vertices())};
  std::cout << num(torsor::frustration(g, f)) << "\n";
  return 0;
}

struct SyncArgs {
  std::string graph, method, rep, out;
  int root = 0;
  int restarts = 8;
  std::uint64_t seed = 0;
};

int run_sync(const SyncArgs& a) {
  const torsor::PotentialGraph g = load_graph_file(a.graph);
  std::optional<torsor::SyncSolution> sol;
  if (a.method == "tree") {
    sol = torsor::solve_tree(g, a.root);
  } else if (a.method == "brute") {
    sol = torsor::solve_brute_force(g);
  } else if (a.method == "spectral") {
    sol = torsor::solve_spectral_so2(g);
  } else if (a.method == "feature") {
    if (a.rep.empty()) {
      std::cerr << "error: --method feature requires --rep\n";
      return 2;
    }
    sol = torsor::solve_feature_sync(g, torsor::parse_rep_spec(a.rep, g.kind()), a.restarts,
                                     a.seed);
  } else {
    std::cerr << "error: unknown method '" << a.method
              << "' (use tree|brute|spectral|feature)\n";
    return 2;
  }
  std::cout << "method=" << a.method << "\n"
            << "objective=" << num(sol->objective) << "\n"
            << "iterations=" << sol->iterations << "\n";
  if (!a.out.empty()) {
    if (sol->features)
      torsor::write_file(a.out, torsor::save_features(sol->features->values));
    else
      torsor::write_file(a.out, torsor::save_states(sol->states, sol->objective));
  }
  return 0;
}

struct ConvArgs {
  std::string graph, features, kernel, nonlinearity = "none", out;
};

int run_conv(const ConvArgs& a) {
  const torsor::PotentialGraph g = load_graph_file(a.graph);
  const torsor::KernelFile kf = torsor::load_kernel(torsor::read_file(a.kernel), g.kind());
  double bias = 0.0;
  const torsor::Nonlinearity nl = parse_nonlinearity(a.nonlinearity, bias);
  const torsor::TorsorConvLayer layer = torsor::make_layer(
      torsor::commutant_basis(kf.rep_in, kf.rep_out), kf.coeffs, nl, bias);
  const torsor::FeatureAssignment f_in{
      kf.rep_in, torsor::load_features(torsor::read_file(a.features), g.num_vertices())};
  const torsor::FeatureAssignment f_out = torsor::forward(layer, g, f_in);
  emit(torsor::save_features(f_out.values), a.out);
  return 0;
}

struct GaugeArgs {
  std::string graph, gamma, out, features, rep, features_out;
};

int run_gauge(const GaugeArgs& a) {
  const torsor::PotentialGraph g = load_graph_file(a.graph);
  const torsor::Gauge gamma{
      torsor::load_states(torsor::read_file(a.gamma), g.kind(), g.num_vertices())};
  torsor::write_file(a.out, torsor::save_graph(torsor::apply_gauge(g, gamma)));
  if (!a.features.empty()) {
    if (a.rep.empty() || a.features_out.empty()) {
      std::cerr << "error: --features requires --rep and --features-out\n";
      return 2;
    }
    const torsor::FeatureAssignment f{
        torsor::parse_rep_spec(a.rep, g.kind()),
        torsor::load_features(torsor::read_file(a.features), g.num_vertices())};
    torsor::write_file(a.features_out,
                       torsor::save_features(torsor::apply_gauge_features(f, gamma).values));
  }
  return 0;
}

struct EquivArgs {
  std::string graph_a, graph_b;
  double tol = 1e-9;
};

int run_equiv(const EquivArgs& a) {
  const torsor::PotentialGraph ga = load_graph_file(a.graph_a);
  const torsor::PotentialGraph gb = load_graph_file(a.graph_b);
  const auto gauge = torsor::are_gauge_equivalent(ga, gb, a.tol);
  if (gauge)
    std::cout << torsor::save_states(gauge->at);
  else
    std::cout << "inequivalent\n";
  return 0;
}

struct DemoArgs {
  int classes = 5;
  int instances = 4;
  int views = 8;
  std::string topology = "complete";
  int knn_k = 3;
  double sigma = 0.01;
  double lambda = 10.0;
  double margin = 1.0;
  int epochs = 500;
  std::uint64_t seed = 0;
  int reference = 0;
  std::string trace;
};

int run_demo(const DemoArgs& a) {
  torsor::DatasetParams params;
  params.classes = a.classes;
  params.instances_per_class = a.instances;
  params.views = a.views;
  params.sigma_view = a.sigma;
  params.seed = a.seed;
  params.knn_k = a.knn_k;
  if (a.topology == "complete") params.topology = torsor::ViewTopology::Complete;
  else if (a.topology == "ring") params.topology = torsor::ViewTopology::Ring;
  else if (a.topology == "knn") params.topology = torsor::ViewTopology::Knn;
  else {
    std::cerr << "error: unknown topology '" << a.topology << "' (use complete|ring|knn)\n";
    return 2;
  }

  const auto dataset = torsor::generate_dataset(params);
  const torsor::IntertwinerBasis basis =
      torsor::commutant_basis(params.rep, params.rep);
  const torsor::TorsorConvLayer layer = torsor::make_layer(
      basis, torsor::init_coefficients(basis, torsor::mix_seed(a.seed, 0x11)));
  const torsor::TripletReport triplet =
      torsor::triplet_gap_experiment(dataset, layer, a.reference, a.margin);
  const torsor::TrainReport train =
      torsor::train_with_frustration(dataset, a.lambda, a.epochs, 0.0, a.seed);

  std::cout << "classes=" << a.classes << "\n"
            << "instances_per_class=" << a.instances << "\n"
            << "views=" << a.views << "\n"
            << "topology=" << a.topology << "\n"
            << "sigma_view=" << num(a.sigma) << "\n"
            << "seed=" << a.seed << "\n"
            << "margin=" << num(a.margin) << "\n"
            << "num_triplets=" << triplet.num_triplets << "\n"
            << "d_intra_raw=" << num(triplet.d_intra_raw) << "\n"
            << "d_intra_aligned=" << num(triplet.d_intra_aligned) << "\n"
            << "d_inter_raw=" << num(triplet.d_inter_raw) << "\n"
            << "d_inter_aligned=" << num(triplet.d_inter_aligned) << "\n"
            << "mean_triplet_raw=" << num(triplet.mean_triplet_raw) << "\n"
            << "mean_triplet_aligned=" << num(triplet.mean_triplet_aligned) << "\n"
            << "lambda=" << num(a.lambda) << "\n"
            << "epochs=" << a.epochs << "\n"
            << "learning_rate=" << num(train.learning_rate) << "\n"
            << "gradient_check_rel_err=" << num(train.gradient_check_rel_err) << "\n"
            << "task_initial=" << num(train.task_initial) << "\n"
            << "task_final=" << num(train.task_final) << "\n"
            << "eta_initial=" << num(train.eta_initial) << "\n"
            << "eta_final=" << num(train.eta_final) << "\n"
            << "diverged=" << (train.diverged ? 1 : 0) << "\n";

  if (!a.trace.empty()) {
    std::string tsv = "epoch\ttask_loss\teta\n";
    for (std::size_t i = 0; i < train.curve.size(); ++i)
      tsv += std::to_string(i) + "\t" + torsor::format_double(train.curve[i].first) + "\t" +
             torsor::format_double(train.curve[i].second) + "\n";
    torsor::write_file(a.trace, tsv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"torsor: group-valued edge potentials, synchronization and "
               "gauge-equivariant convolution on graphs"};
  app.require_subcommand(1);

  CheckArgs check_args;
  auto* check = app.add_subcommand("check", "consistency of a potential graph");
  check->add_option("graph", check_args.graph, "torsor-graph file")->required();

  FrustrationArgs fr_args;
  auto* fr = app.add_subcommand("frustration", "frustration of a feature assignment");
  fr->add_option("graph", fr_args.graph, "torsor-graph file")->required();
  fr->add_option("features", fr_args.features, "torsor-features file")->required();
  fr->add_option("--rep", fr_args.rep, "rep spec (trivial:<d>|standard|regular|sum:...)")
      ->required();

  SyncArgs sync_args;
  auto* sync = app.add_subcommand("sync", "group/feature synchronization");
  sync->add_option("graph", sync_args.graph, "torsor-graph file")->required();
  sync->add_option("--method", sync_args.method, "tree|brute|spectral|feature")->required();
  sync->add_option("--rep", sync_args.rep, "rep spec for --method feature");
  sync->add_option("--root", sync_args.root, "root vertex for --method tree");
  sync->add_option("--restarts", sync_args.restarts, "restarts for --method feature");
  sync->add_option("--seed", sync_args.seed, "rng seed (default TORSOR_SEED or 0)");
  sync->add_option("-o,--out", sync_args.out, "write states/features here");

  ConvArgs conv_args;
  auto* conv = app.add_subcommand("conv", "one torsor convolution layer forward pass");
  conv->add_option("graph", conv_args.graph, "torsor-graph file")->required();
  conv->add_option("features", conv_args.features, "torsor-features file")->required();
  conv->add_option("--kernel", conv_args.kernel, "torsor-kernel file")->required();
  conv->add_option("--nonlinearity", conv_args.nonlinearity, "none|relu|norm:<b>");
  conv->add_option("-o,--out", conv_args.out, "output features file (default stdout)");

  GaugeArgs gauge_args;
  auto* gauge = app.add_subcommand("gauge", "apply a gauge transformation");
  gauge->add_option("graph", gauge_args.graph, "torsor-graph file")->required();
  gauge->add_option("--gamma", gauge_args.gamma, "torsor-states file with the gauge")
      ->required();
  gauge->add_option("-o,--out", gauge_args.out, "transformed graph file")->required();
  gauge->add_option("--features", gauge_args.features, "co-transform these features");
  gauge->add_option("--rep", gauge_args.rep, "rep spec for --features");
  gauge->add_option("--features-out", gauge_args.features_out, "output for --features");

  EquivArgs equiv_args;
  auto* equiv = app.add_subcommand("equiv", "decide gauge equivalence of two graphs");
  equiv->add_option("graphA", equiv_args.graph_a, "torsor-graph file")->required();
  equiv->add_option("graphB", equiv_args.graph_b, "torsor-graph file")->required();
  equiv->add_option("--tol", equiv_args.tol, "verification tolerance");

  DemoArgs demo_args;
  auto* demo = app.add_subcommand("demo", "built-in experiments");
  auto* mv = demo->add_subcommand("multiview", "synthetic multi-view descriptor study");
  demo->require_subcommand(1);
  mv->add_option("--classes", demo_args.classes, "number of classes");
  mv->add_option("--instances", demo_args.instances, "instances per class");
  mv->add_option("--views", demo_args.views, "views per instance");
  mv->add_option("--topology", demo_args.topology, "complete|ring|knn");
  mv->add_option("--knn-k", demo_args.knn_k, "k for knn topology");
  mv->add_option("--sigma", demo_args.sigma, "view observation noise");
  mv->add_option("--lambda", demo_args.lambda, "frustration regularizer weight");
  mv->add_option("--margin", demo_args.margin, "triplet margin");
  mv->add_option("--epochs", demo_args.epochs, "training epochs");
  mv->add_option("--reference", demo_args.reference, "reference view index");
  mv->add_option("--seed", demo_args.seed, "rng seed (default TORSOR_SEED or 0)");
  mv->add_option("--trace", demo_args.trace, "write per-epoch TSV here");

  try {
    sync_args.seed = default_seed();
    demo_args.seed = default_seed();
    app.parse(argc, argv);
    if (check->parsed()) return run_check(check_args);
    if (fr->parsed()) return run_frustration(fr_args);
    if (sync->parsed()) return run_sync(sync_args);
    if (conv->parsed()) return run_conv(conv_args);
    if (gauge->parsed()) return run_gauge(gauge_args);
    if (equiv->parsed()) return run_equiv(equiv_args);
    if (demo->parsed()) return run_demo(demo_args);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const torsor::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
