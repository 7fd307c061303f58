#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rollout/harness.hpp"

namespace rollout {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Model (de)serialization.
// CoefficientModel: {"type":"coefficients","beta":B,"nodes":[{"id":i,"coeffs":[{"subset":[...],"c":v}]}]}
// SymmetricSynthModel spec: {"type":"symmetric","beta":B,"a":..,"b":..,"sigma":..,"delta":..,"gamma":[..],"seed":S}
// ---------------------------------------------------------------------------

inline json model_to_json(const CoefficientModel& m) {
  json nodes = json::array();
  for (int i = 0; i < m.n; ++i) {
    json coeffs = json::array();
    for (const auto& t : m.terms[static_cast<std::size_t>(i)])
      coeffs.push_back({{"subset", t.subset}, {"c", t.c}});
    nodes.push_back({{"id", i}, {"coeffs", std::move(coeffs)}});
  }
  return {{"type", "coefficients"}, {"beta", m.beta}, {"nodes", std::move(nodes)}};
}

inline json model_to_json(const SymmetricSynthModel& m) {
  return {{"type", "symmetric"}, {"beta", m.beta}, {"a", m.a},     {"b", m.b},
          {"sigma", m.sigma},    {"delta", m.delta}, {"gamma", m.gamma}, {"seed", m.seed}};
}

inline CoefficientModel coefficient_model_from_json(const json& j) {
  const int beta = j.at("beta").get<int>();
  const auto& nodes = j.at("nodes");
  const int n = static_cast<int>(nodes.size());
  std::vector<std::vector<CoefficientModel::Term>> terms(static_cast<std::size_t>(n));
  for (const auto& node : nodes) {
    const int id = node.at("id").get<int>();
    if (id < 0 || id >= n) throw std::invalid_argument("model json: node ids must be dense 0-based");
    auto& out = terms[static_cast<std::size_t>(id)];
    for (const auto& c : node.at("coeffs"))
      out.push_back({c.at("subset").get<std::vector<int>>(), c.at("c").get<double>()});
  }
  return CoefficientModel::from_terms(n, beta, std::move(terms));
}

// The symmetric form needs the graph to realize baselines and degrees.
inline OutcomesModel model_from_json(const json& j, const InterferenceGraph& graph) {
  const std::string type = j.value("type", "symmetric");
  if (type == "coefficients") return coefficient_model_from_json(j);
  if (type != "symmetric") throw std::invalid_argument("model json: unknown type '" + type + "'");
  const int beta = j.at("beta").get<int>();
  std::vector<double> gamma = j.contains("gamma") ? j.at("gamma").get<std::vector<double>>() : default_gamma(beta);
  return make_symmetric_model(graph, beta, j.value("a", 1.0), j.value("b", 0.0), j.value("sigma", 0.1),
                              j.value("delta", 0.5), std::move(gamma), j.value("seed", std::uint64_t{1}));
}

// DesignSpec json: {"kind":"unit_crd","p":..,"q":..,"steps":..,"clustering_file":..?}
// The clustering, when referenced, is loaded and returned alongside.
struct LoadedDesign {
  DesignSpec spec;
  std::unique_ptr<Clustering> clustering;  // owns the spec's clustering, when present
};

inline DesignKind design_kind_from_string(const std::string& s) {
  if (s == "one_stage" || s == "one_stage_crd") return DesignKind::one_stage_crd;
  if (s == "unit" || s == "unit_crd") return DesignKind::two_stage_unit_crd;
  if (s == "clustered" || s == "clustered_crd") return DesignKind::two_stage_clustered_crd;
  if (s == "bernoulli" || s == "unit_bernoulli") return DesignKind::two_stage_unit_bernoulli;
  throw std::invalid_argument("design json: unknown kind '" + s + "'");
}

inline LoadedDesign design_from_json(const json& j) {
  LoadedDesign out;
  out.spec.kind = design_kind_from_string(j.at("kind").get<std::string>());
  out.spec.p = j.at("p").get<double>();
  out.spec.q = out.spec.kind == DesignKind::one_stage_crd ? out.spec.p : j.at("q").get<double>();
  out.spec.steps = j.at("steps").get<int>();
  if (j.contains("clustering_file")) {
    std::ifstream in(j.at("clustering_file").get<std::string>());
    if (!in) throw std::runtime_error("design json: cannot open clustering file");
    out.clustering = std::make_unique<Clustering>(load_clustering(in));
    out.spec.clustering = out.clustering.get();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration.
// ---------------------------------------------------------------------------

struct ClusteringEntry {
  std::string name;
  std::string method;  // grid | random | greedy | feature | file | none
  int param = 0;       // grid block, or cluster count
  std::string path;    // feature or clustering file
  std::uint64_t seed = 1;
  int sweeps = 50;
};

struct DesignEntry {
  std::string name;
  std::string kind = "clustered";  // one_stage | unit | clustered | bernoulli
  double p = 0.0;
  double q = 0.0;
  int steps = 0;                        // 0: use the model order
  std::vector<std::string> estimators;  // empty: use the config-level list
};

struct ExperimentConfig {
  int lattice_side = 0;
  std::string graph_path;
  bool graph_directed = true;

  json model = {{"type", "symmetric"}, {"beta", 3}};

  std::vector<DesignEntry> designs;
  std::vector<ClusteringEntry> clusterings;

  std::string axis = "none";  // none | p | q
  std::vector<double> grid;

  long long replications = 1000;
  int n_outer = 200;
  int n_inner = 50;
  std::uint64_t base_seed = 1;
  std::vector<std::string> estimators = {"pi"};
  std::string out_csv;
  int threads = 0;
};

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  const auto& net = j.at("network");
  if (net.contains("lattice")) {
    c.lattice_side = net.at("lattice").get<int>();
  } else {
    c.graph_path = net.at("edge_list").get<std::string>();
    c.graph_directed = net.value("directed", true);
  }
  c.model = j.at("model");
  for (const auto& d : j.at("designs")) {
    DesignEntry e;
    e.kind = d.value("kind", std::string("clustered"));
    e.name = d.value("name", e.kind);
    e.p = d.at("p").get<double>();
    e.q = d.value("q", 0.0);
    e.steps = d.value("steps", 0);
    if (d.contains("estimators")) e.estimators = d.at("estimators").get<std::vector<std::string>>();
    c.designs.push_back(std::move(e));
  }
  if (j.contains("clusterings")) {
    for (const auto& cl : j.at("clusterings")) {
      ClusteringEntry e;
      e.method = cl.at("method").get<std::string>();
      e.name = cl.value("name", e.method);
      e.param = cl.value("block", cl.value("clusters", 0));
      e.path = cl.value("path", std::string{});
      e.seed = cl.value("seed", std::uint64_t{1});
      e.sweeps = cl.value("sweeps", 50);
      c.clusterings.push_back(std::move(e));
    }
  }
  c.axis = j.value("axis", std::string("none"));
  if (j.contains("grid")) c.grid = j.at("grid").get<std::vector<double>>();
  c.replications = j.value("replications", 1000LL);
  if (j.contains("decompose")) {
    c.n_outer = j.at("decompose").value("outer", 200);
    c.n_inner = j.at("decompose").value("inner", 50);
  }
  c.base_seed = j.value("seed", std::uint64_t{1});
  if (j.contains("estimators")) c.estimators = j.at("estimators").get<std::vector<std::string>>();
  c.out_csv = j.value("out", std::string{});
  c.threads = j.value("threads", 0);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json j;
  in >> j;
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Sweep driver: builds the graph, model, and clusterings, enumerates design
// points (axis value x design x clustering), snaps budgets onto the feasible
// grid, and runs each point. Deterministic given the config and base seed.
// ---------------------------------------------------------------------------

struct SweepContext {
  InterferenceGraph graph;
  OutcomesModel model{CoefficientModel{}};
  std::vector<NamedClustering> clusterings;
};

inline InterferenceGraph build_graph(const ExperimentConfig& c) {
  if (c.lattice_side > 0) return lattice(c.lattice_side);
  std::ifstream in(c.graph_path);
  if (!in) throw std::runtime_error("sweep: cannot open graph " + c.graph_path);
  return load_edge_list(in, c.graph_directed);
}

inline Clustering build_clustering(const ClusteringEntry& e, const ExperimentConfig& c,
                                   const InterferenceGraph& graph) {
  if (e.method == "grid") {
    if (c.lattice_side <= 0) throw std::invalid_argument("clustering: grid method needs a lattice network");
    return grid_clustering(c.lattice_side, e.param);
  }
  if (e.method == "random") {
    Rng rng(e.seed);
    return random_balanced(graph.n, e.param, rng);
  }
  if (e.method == "greedy") {
    Rng rng(e.seed);
    return greedy_min_cut(graph, e.param, rng, e.sweeps);
  }
  if (e.method == "feature") {
    std::ifstream in(e.path);
    if (!in) throw std::runtime_error("clustering: cannot open feature file " + e.path);
    Rng rng(e.seed);
    return feature_clustering(load_features(in, graph.n), e.param, rng, e.sweeps);
  }
  if (e.method == "file") {
    std::ifstream in(e.path);
    if (!in) throw std::runtime_error("clustering: cannot open clustering file " + e.path);
    return load_clustering(in);
  }
  throw std::invalid_argument("clustering: unknown method '" + e.method + "'");
}

inline SweepContext build_context(const ExperimentConfig& c) {
  SweepContext ctx;
  ctx.graph = build_graph(c);
  ctx.model = model_from_json(c.model, ctx.graph);
  for (const auto& e : c.clusterings) {
    if (e.method == "none") {
      ctx.clusterings.push_back({e.name, Clustering{}});
    } else {
      ctx.clusterings.push_back({e.name, build_clustering(e, c, ctx.graph)});
    }
  }
  return ctx;
}

// Snaps p so that p*n and p*n/steps come out integral (nearest, ties down).
inline double snap_p(double p, int n, int steps) {
  const double unit = static_cast<double>(steps) / n;
  long long k = static_cast<long long>(std::llround(p / unit));
  k = std::max<long long>(1, std::min<long long>(k, n / steps));
  return static_cast<double>(k) * unit;
}

struct SweepOutput {
  std::vector<SweepRecord> records;
  std::vector<std::string> warnings;
  std::string csv;
};

inline SweepOutput run_sweep(const ExperimentConfig& config) {
  if (config.designs.empty()) throw std::invalid_argument("sweep: no designs configured");
  const SweepContext ctx = build_context(config);
  const int n = ctx.graph.n;
  const int threads = resolve_threads(config.threads);

  std::vector<EstimatorSpec> estimators;
  for (const auto& s : config.estimators) estimators.push_back(parse_estimator(s));

  SweepOutput out;
  std::uint64_t point_index = 0;

  for (const auto& d : config.designs) {
    std::vector<EstimatorSpec> design_estimators = estimators;
    if (!d.estimators.empty()) {
      design_estimators.clear();
      for (const auto& s : d.estimators) design_estimators.push_back(parse_estimator(s));
    }
    const int steps = d.steps > 0 ? d.steps : model_beta(ctx.model);
    const bool clustered = d.kind == "clustered";
    std::vector<const NamedClustering*> rows;
    if (clustered) {
      for (const auto& nc : ctx.clusterings) rows.push_back(&nc);
      if (rows.empty()) throw std::invalid_argument("sweep: clustered design needs clusterings");
    } else {
      rows.push_back(nullptr);
    }

    std::vector<double> axis_values = config.axis == "none" ? std::vector<double>{0.0} : config.grid;
    if (axis_values.empty()) throw std::invalid_argument("sweep: axis set but grid empty");

    for (const auto* row : rows) {
      for (double axis_value : axis_values) {
        const std::uint64_t seed = derive_seed(config.base_seed, point_index++);
        DesignPoint point;
        point.design_name = d.name;
        point.steps = steps;
        const bool row_is_none = row == nullptr || (*row).clustering.n == 0;
        if (d.kind == "one_stage") {
          point.kind = DesignKind::one_stage_crd;
        } else if (d.kind == "bernoulli") {
          point.kind = DesignKind::two_stage_unit_bernoulli;
        } else if (d.kind == "unit" || (clustered && row_is_none)) {
          point.kind = DesignKind::two_stage_unit_crd;
        } else if (clustered) {
          point.kind = DesignKind::two_stage_clustered_crd;
          point.clustering = &row->clustering;
          point.clustering_name = row->name;
        } else {
          throw std::invalid_argument("sweep: unknown design kind '" + d.kind + "'");
        }
        if (row != nullptr && row_is_none) point.clustering_name = row->name;

        try {
          double p = config.axis == "p" ? axis_value : d.p;
          double q = config.axis == "q" ? axis_value : d.q;
          p = snap_p(p, n, steps);
          if (point.kind == DesignKind::one_stage_crd) {
            q = p;
          } else {
            if (q <= 0.0) throw std::invalid_argument("sweep: design needs q > 0");
            q = snap_q(point.kind, p, q, n, point.clustering ? point.clustering->n_clusters : 0);
          }
          point.p = p;
          point.q = q;

          PointResult res = run_point(ctx.graph, ctx.model, point, design_estimators, config.replications, seed,
                                      threads, config.n_outer, config.n_inner);
          for (auto& rec : res.records) out.records.push_back(std::move(rec));
        } catch (const std::exception& ex) {
          SweepRecord rec;
          rec.design = d.name;
          rec.clustering = point.clustering_name;
          rec.skipped = true;
          rec.skip_reason = ex.what();
          out.warnings.push_back("skipped point (design=" + d.name + ", clustering=" + point.clustering_name +
                                 ", axis=" + format_csv_double(axis_value) + "): " + ex.what());
          out.records.push_back(std::move(rec));
        }
      }
    }
  }

  out.csv = sweep_csv(out.records);
  if (!config.out_csv.empty()) {
    std::ofstream f(config.out_csv, std::ios::binary);
    if (!f) throw std::runtime_error("sweep: cannot write " + config.out_csv);
    f << out.csv;
  }
  return out;
}

}  // namespace rollout
