// Command-line front end: lattice generation, clustering construction,
// clustering metrics, sweep execution, id compaction, and the verification
// suite.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rollout/rollout.hpp"

namespace {

using namespace rollout;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

InterferenceGraph load_graph_arg(const std::string& path, int lattice_side, bool undirected) {
  if (lattice_side > 0) return lattice(lattice_side);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file " + path);
  return load_edge_list(in, !undirected);
}

// Clustering spec strings: name=grid:BLOCK | name=random:K[:seed] |
// name=greedy:K[:seed[:sweeps]] | name=feature:PATH:K[:seed] | name=file:PATH
Clustering clustering_from_arg(const std::string& spec, const InterferenceGraph& g, int lattice_side) {
  const auto parts = split(spec, ':');
  const std::string& method = parts.at(0);
  if (method == "grid") {
    if (lattice_side <= 0) throw std::runtime_error("grid clustering needs --lattice");
    return grid_clustering(lattice_side, std::stoi(parts.at(1)));
  }
  if (method == "random") {
    Rng rng(parts.size() > 2 ? std::stoull(parts[2]) : 1);
    return random_balanced(g.n, std::stoi(parts.at(1)), rng);
  }
  if (method == "greedy") {
    Rng rng(parts.size() > 2 ? std::stoull(parts[2]) : 1);
    const int sweeps = parts.size() > 3 ? std::stoi(parts[3]) : 50;
    return greedy_min_cut(g, std::stoi(parts.at(1)), rng, sweeps);
  }
  if (method == "feature") {
    std::ifstream in(parts.at(1));
    if (!in) throw std::runtime_error("cannot open feature file " + parts.at(1));
    Rng rng(parts.size() > 3 ? std::stoull(parts[3]) : 1);
    return feature_clustering(load_features(in, g.n), std::stoi(parts.at(2)), rng);
  }
  if (method == "file") {
    std::ifstream in(parts.at(1));
    if (!in) throw std::runtime_error("cannot open clustering file " + parts.at(1));
    return load_clustering(in);
  }
  throw std::runtime_error("unknown clustering method '" + method + "'");
}

int cmd_lattice(int side, const std::string& out_path) {
  const InterferenceGraph g = lattice(side);
  if (out_path == "-") {
    save_edge_list(std::cout, g);
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    save_edge_list(out, g);
  }
  std::cerr << "lattice(" << side << "): n=" << g.n << " max in-degree=" << g.max_in_degree << "\n";
  return 0;
}

int cmd_metrics(const std::string& graph_path, int lattice_side, bool undirected, const std::string& model_path,
                const std::vector<std::string>& clustering_args) {
  const InterferenceGraph g = load_graph_arg(graph_path, lattice_side, undirected);
  json model_json = {{"type", "symmetric"}, {"beta", 3}, {"a", 1.0}, {"b", 0.0},
                     {"sigma", 0.0},        {"delta", 0.5}};
  if (!model_path.empty()) {
    std::ifstream in(model_path);
    if (!in) throw std::runtime_error("cannot open model file " + model_path);
    in >> model_json;
  }
  const OutcomesModel model = model_from_json(model_json, g);

  std::vector<NamedClustering> named;
  for (const auto& arg : clustering_args) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos) throw std::runtime_error("clustering spec must look like name=method:args");
    named.push_back({arg.substr(0, eq), clustering_from_arg(arg.substr(eq + 1), g, lattice_side)});
  }
  const auto rows = metrics_table(g, model, named);
  std::cout << "clustering\tvar_cluster_influence\tcut_effect\tcut_edges\n";
  for (const auto& r : rows)
    std::cout << r.name << '\t' << r.var_cluster_influence << '\t' << r.cut_eff << '\t' << r.cut_edge_count
              << '\n';
  std::cout << "tte\t" << tte(model) << '\n';
  return 0;
}

int cmd_cluster(const std::string& graph_path, int lattice_side, bool undirected, const std::string& method,
                int n_clusters, int block, const std::string& features_path, std::uint64_t seed, int sweeps,
                const std::string& out_path) {
  const InterferenceGraph g = load_graph_arg(graph_path, lattice_side, undirected);
  Clustering c;
  Rng rng(seed);
  if (method == "grid") {
    if (lattice_side <= 0) throw std::runtime_error("grid method needs --lattice");
    c = grid_clustering(lattice_side, block);
  } else if (method == "random") {
    c = random_balanced(g.n, n_clusters, rng);
  } else if (method == "greedy") {
    c = greedy_min_cut(g, n_clusters, rng, sweeps);
  } else if (method == "feature") {
    std::ifstream in(features_path);
    if (!in) throw std::runtime_error("cannot open feature file " + features_path);
    c = feature_clustering(load_features(in, g.n), n_clusters, rng, sweeps);
  } else {
    throw std::runtime_error("unknown method '" + method + "'");
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  save_clustering(out, c);
  std::cerr << "clusters=" << c.n_clusters << " cut_edges=" << cut_edges(g, c) << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_override) {
  ExperimentConfig config = load_config(config_path);
  if (!out_override.empty()) config.out_csv = out_override;
  const SweepOutput out = run_sweep(config);
  for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
  if (config.out_csv.empty())
    std::cout << out.csv;
  else
    std::cerr << "wrote " << config.out_csv << " (" << out.records.size() << " records)\n";
  return 0;
}

int cmd_compact(const std::string& in_path, const std::string& out_path, const std::string& map_path) {
  std::ifstream in(in_path);
  if (!in) throw std::runtime_error("cannot open " + in_path);
  const RemappedGraph remapped = load_edge_list_compact(in, true);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  save_edge_list(out, remapped.graph);
  std::ofstream map(map_path);
  if (!map) throw std::runtime_error("cannot write " + map_path);
  map << "# new_id old_id\n";
  for (std::size_t i = 0; i < remapped.original_id.size(); ++i) map << i << ' ' << remapped.original_id[i] << '\n';
  std::cerr << "compacted " << remapped.original_id.size() << " nodes\n";
  return 0;
}

int cmd_verify(bool full) {
  const VerifyReport report = verify(full);
  print_verify_report(std::cout, report);
  return report.all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staggered-rollout interference simulator"};
  app.require_subcommand(1);

  // lattice
  auto* lat = app.add_subcommand("lattice", "emit a side x side lattice as an edge list");
  int lat_side = 10;
  std::string lat_out = "-";
  lat->add_option("--side", lat_side, "lattice side length")->required();
  lat->add_option("--out", lat_out, "output path ('-' for stdout)");

  // metrics
  auto* met = app.add_subcommand("metrics", "clustering metrics table for a model");
  std::string met_graph, met_model;
  int met_lattice = 0;
  bool met_undirected = false;
  std::vector<std::string> met_clusterings;
  met->add_option("--graph", met_graph, "edge-list path");
  met->add_option("--lattice", met_lattice, "use a lattice of this side instead of --graph");
  met->add_flag("--undirected", met_undirected, "treat edge list as undirected");
  met->add_option("--model", met_model, "model JSON (defaults to the synthetic model, beta=3, no noise)");
  met->add_option("--clusterings", met_clusterings, "name=method:args specs")->expected(-1);

  // cluster
  auto* clu = app.add_subcommand("cluster", "build and save a clustering");
  std::string clu_graph, clu_method = "random", clu_features, clu_out;
  int clu_lattice = 0, clu_nc = 1, clu_block = 0, clu_sweeps = 50;
  bool clu_undirected = false;
  std::uint64_t clu_seed = 1;
  clu->add_option("--graph", clu_graph, "edge-list path");
  clu->add_option("--lattice", clu_lattice, "use a lattice of this side instead of --graph");
  clu->add_flag("--undirected", clu_undirected, "treat edge list as undirected");
  clu->add_option("--method", clu_method, "grid | random | greedy | feature")->required();
  clu->add_option("--nc", clu_nc, "number of clusters");
  clu->add_option("--block", clu_block, "block size for grid");
  clu->add_option("--features", clu_features, "feature file for the feature method");
  clu->add_option("--seed", clu_seed, "rng seed");
  clu->add_option("--sweeps", clu_sweeps, "local search passes");
  clu->add_option("--out", clu_out, "output clustering file")->required();

  // sweep
  auto* swp = app.add_subcommand("sweep", "run a configured experiment sweep");
  std::string swp_config, swp_out;
  swp->add_option("--config", swp_config, "experiment config JSON")->required();
  swp->add_option("--out", swp_out, "override the CSV output path");

  // verify
  auto* ver = app.add_subcommand("verify", "run the oracle/theory cross-check suite");
  bool ver_full = false;
  ver->add_flag("--full", ver_full, "larger instance counts");

  // compact
  auto* cmp = app.add_subcommand("compact", "relabel sparse node ids to dense 0-based ids");
  std::string cmp_in, cmp_out, cmp_map;
  cmp->add_option("--in", cmp_in, "input edge list")->required();
  cmp->add_option("--out", cmp_out, "output edge list")->required();
  cmp->add_option("--map", cmp_map, "mapping file (new_id old_id)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*lat) return cmd_lattice(lat_side, lat_out);
    if (*met) return cmd_metrics(met_graph, met_lattice, met_undirected, met_model, met_clusterings);
    if (*clu)
      return cmd_cluster(clu_graph, clu_lattice, clu_undirected, clu_method, clu_nc, clu_block, clu_features,
                         clu_seed, clu_sweeps, clu_out);
    if (*swp) return cmd_sweep(swp_config, swp_out);
    if (*ver) return cmd_verify(ver_full);
    if (*cmp) return cmd_compact(cmp_in, cmp_out, cmp_map);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
