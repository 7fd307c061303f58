#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rollout/design.hpp"
#include "rollout/estimators.hpp"
#include "rollout/outcomes.hpp"
#include "rollout/theory.hpp"

namespace rollout {

// ---------------------------------------------------------------------------
// Rollout evaluation: turn one sampled realization into the observations the
// estimators consume.
// ---------------------------------------------------------------------------

inline RolloutObservations observe(const SymmetricSynthModel& m, const RolloutRealization& r) {
  const InterferenceGraph& g = *m.graph;
  RolloutObservations obs;
  obs.n = r.n;
  obs.sums.assign(static_cast<std::size_t>(r.steps) + 1, 0.0);

  std::vector<std::vector<int>> by_step(static_cast<std::size_t>(r.steps) + 1);
  for (int i = 0; i < r.n; ++i) {
    const int t = r.treat_time[static_cast<std::size_t>(i)];
    if (t != kNeverTreated) by_step[static_cast<std::size_t>(t)].push_back(i);
  }

  std::vector<int> treated_in_nbhd(static_cast<std::size_t>(r.n), 0);
  std::vector<std::uint8_t> z(static_cast<std::size_t>(r.n), 0);
  for (int t = 0; t <= r.steps; ++t) {
    if (t > 0) {
      for (int j : by_step[static_cast<std::size_t>(t)]) {
        z[static_cast<std::size_t>(j)] = 1;
        for (int i : g.out_nbrs[static_cast<std::size_t>(j)]) ++treated_in_nbhd[static_cast<std::size_t>(i)];
      }
    }
    double total = 0.0;
    for (int i = 0; i < r.n; ++i)
      total += m.node_outcome(i, treated_in_nbhd[static_cast<std::size_t>(i)], z[static_cast<std::size_t>(i)] != 0);
    obs.sums[static_cast<std::size_t>(t)] = total;
  }
  obs.final_z = std::move(z);
  obs.per_node_final.resize(static_cast<std::size_t>(r.n));
  for (int i = 0; i < r.n; ++i)
    obs.per_node_final[static_cast<std::size_t>(i)] =
        m.node_outcome(i, treated_in_nbhd[static_cast<std::size_t>(i)], obs.final_z[static_cast<std::size_t>(i)] != 0);
  return obs;
}

inline RolloutObservations observe(const CoefficientModel& m, const RolloutRealization& r) {
  RolloutObservations obs;
  obs.n = r.n;
  obs.sums.assign(static_cast<std::size_t>(r.steps) + 1, 0.0);
  for (int t = 0; t <= r.steps; ++t) {
    const auto z = r.z_at(t);
    const auto y = evaluate(m, z);
    double total = 0.0;
    for (double v : y) total += v;
    obs.sums[static_cast<std::size_t>(t)] = total;
    if (t == r.steps) {
      obs.final_z = z;
      obs.per_node_final = y;
    }
  }
  return obs;
}

inline RolloutObservations observe(const OutcomesModel& m, const RolloutRealization& r) {
  return std::visit([&r](const auto& mm) { return observe(mm, r); }, m);
}

// ---------------------------------------------------------------------------
// Estimator selection.
// ---------------------------------------------------------------------------

struct EstimatorSpec {
  enum class Type { pi, dm, dm_threshold, ht, hajek };
  Type type = Type::pi;
  double gamma = 0.0;  // dm_threshold only
  std::string label;
};

// Accepts "pi", "dm", "dm(0.75)", "ht", "hajek".
inline EstimatorSpec parse_estimator(const std::string& s) {
  EstimatorSpec e;
  e.label = s;
  if (s == "pi") {
    e.type = EstimatorSpec::Type::pi;
  } else if (s == "dm") {
    e.type = EstimatorSpec::Type::dm;
  } else if (s == "ht") {
    e.type = EstimatorSpec::Type::ht;
  } else if (s == "hajek") {
    e.type = EstimatorSpec::Type::hajek;
  } else if (s.size() > 4 && s.rfind("dm(", 0) == 0 && s.back() == ')') {
    e.type = EstimatorSpec::Type::dm_threshold;
    e.gamma = std::stod(s.substr(3, s.size() - 4));
    if (!(e.gamma >= 0.0 && e.gamma <= 1.0)) throw std::invalid_argument("estimator: dm threshold outside [0,1]");
  } else {
    throw std::invalid_argument("estimator: unknown name '" + s + "'");
  }
  return e;
}

// ---------------------------------------------------------------------------
// Design points and sweep records.
// ---------------------------------------------------------------------------

struct DesignPoint {
  std::string design_name;
  DesignKind kind = DesignKind::one_stage_crd;
  double p = 0.0;
  double q = 0.0;
  int steps = 1;
  const Clustering* clustering = nullptr;
  std::string clustering_name = "none";

  DesignSpec spec() const { return DesignSpec{kind, p, q, steps, clustering}; }
};

struct SweepRecord {
  std::string design;
  std::string estimator;
  std::string clustering;
  double p = 0.0, q = 0.0;
  int beta = 0;
  long long replications = 0;  // effective count after drops
  double tte_true = 0.0;
  double est_mean = 0.0, bias_emp = 0.0, var_emp = 0.0, mse_emp = 0.0;
  double bias_theory = 0.0;
  double var_bound = 0.0;
  double var_exact_beta1 = 0.0;
  double var_sampling = 0.0;
  double var_extrapolation = 0.0;
  long long dropped = 0;
  std::uint64_t seed = 0;
  bool skipped = false;
  std::string skip_reason;
};

// ROLLOUT_SIM_THREADS caps the worker count, whether the request came from a
// config value or from hardware concurrency.
inline int resolve_threads(int requested) {
  int threads = requested;
  if (threads <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    threads = hw == 0 ? 1 : static_cast<int>(hw);
  }
  if (const char* env = std::getenv("ROLLOUT_SIM_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) threads = std::min(threads, cap);
  }
  return threads;
}

namespace detail {

// Runs f(rep) for rep in [0, total) across a fixed block partition; results
// must land in preallocated slots so aggregation order stays deterministic.
template <typename F>
void parallel_for(long long total, int threads, F&& f) {
  threads = static_cast<int>(std::max<long long>(1, std::min<long long>(threads, total)));
  if (threads == 1) {
    for (long long i = 0; i < total; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  const long long chunk = (total + threads - 1) / threads;
  for (int w = 0; w < threads; ++w) {
    const long long lo = w * chunk, hi = std::min(total, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &f]() {
      for (long long i = lo; i < hi; ++i) f(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// One design point: R replications, all requested estimators at once, theory
// attachments from the closed forms.
// ---------------------------------------------------------------------------

struct PointResult {
  std::vector<SweepRecord> records;  // one per estimator
};

// Law-of-total-variance split via nested Monte Carlo for the PI estimator:
// outer draws of U, inner redraws of the rollout conditioned on U.
// Returns {extrapolation = E_U[Var_z], sampling = Var_U[E_z]}.
struct VarianceSplit {
  double extrapolation = 0.0;
  double sampling = 0.0;
};

inline VarianceSplit decompose_variance(const OutcomesModel& model, const DesignPoint& point, int n_outer,
                                        int n_inner, std::uint64_t seed, int threads) {
  if (n_outer < 2 || n_inner < 2) throw std::invalid_argument("decompose_variance: need n_outer, n_inner >= 2");
  const int n = model_n(model);
  const DesignSpec spec = point.spec();
  spec.validate(n);

  std::vector<double> within_mean(static_cast<std::size_t>(n_outer));
  std::vector<double> within_var(static_cast<std::size_t>(n_outer));
  detail::parallel_for(n_outer, threads, [&](long long o) {
    Rng outer_rng(derive_seed(seed ^ 0xA5A5A5A5ULL, static_cast<std::uint64_t>(o)));
    const StageOneDraw stage1 = sample_stage1(spec, n, outer_rng);
    double sum = 0.0, sum_sq = 0.0;
    for (int k = 0; k < n_inner; ++k) {
      Rng inner_rng(derive_seed(seed ^ 0x5A5A5A5AULL,
                                static_cast<std::uint64_t>(o) * static_cast<std::uint64_t>(n_inner) +
                                    static_cast<std::uint64_t>(k)));
      const RolloutRealization r = sample_stage2(spec, n, stage1, inner_rng);
      const RolloutObservations obs = observe(model, r);
      const double est = pi_two_stage(obs, point.p, point.q);
      sum += est;
      sum_sq += est * est;
    }
    const double mean = sum / n_inner;
    within_mean[static_cast<std::size_t>(o)] = mean;
    // Unbiased within-U sample variance.
    within_var[static_cast<std::size_t>(o)] = std::max(0.0, (sum_sq - n_inner * mean * mean) / (n_inner - 1));
  });

  VarianceSplit out;
  double acc = 0.0;
  for (double v : within_var) acc += v;
  out.extrapolation = acc / n_outer;

  double mean_of_means = 0.0;
  for (double v : within_mean) mean_of_means += v;
  mean_of_means /= n_outer;
  double between = 0.0;
  for (double v : within_mean) between += (v - mean_of_means) * (v - mean_of_means);
  between /= (n_outer - 1);
  // ANOVA correction: the between-mean variance overstates Var_U[E_z] by
  // E_U[Var_z]/n_inner; floor at zero.
  out.sampling = std::max(0.0, between - out.extrapolation / n_inner);
  return out;
}

inline PointResult run_point(const InterferenceGraph& graph, const OutcomesModel& model, const DesignPoint& point,
                             const std::vector<EstimatorSpec>& estimators, long long replications,
                             std::uint64_t point_seed, int threads, int n_outer = 0, int n_inner = 0) {
  if (replications < 1) throw std::invalid_argument("run_point: need at least one replication");
  const int n = model_n(model);
  if (graph.n != n) throw std::invalid_argument("run_point: graph/model size mismatch");
  const DesignSpec spec = point.spec();
  spec.validate(n);

  for (const auto& e : estimators)
    if ((e.type == EstimatorSpec::Type::ht || e.type == EstimatorSpec::Type::hajek) &&
        point.kind != DesignKind::one_stage_crd)
      throw std::invalid_argument(
          "run_point: " + e.label + " is defined only under the one-stage CRD design at budget p");

  const std::size_t n_est = estimators.size();
  std::vector<std::vector<double>> values(n_est);
  for (auto& v : values) v.assign(static_cast<std::size_t>(replications), detail::nan_value());

  detail::parallel_for(replications, threads, [&](long long rep) {
    Rng rng(derive_seed(point_seed, static_cast<std::uint64_t>(rep)));
    const RolloutRealization r = sample(spec, n, rng);
    const RolloutObservations obs = observe(model, r);
    for (std::size_t e = 0; e < n_est; ++e) {
      std::optional<double> est;
      switch (estimators[e].type) {
        case EstimatorSpec::Type::pi:
          est = pi_two_stage(obs, point.p, point.q);
          break;
        case EstimatorSpec::Type::dm:
          est = dm(obs.per_node_final, obs.final_z);
          break;
        case EstimatorSpec::Type::dm_threshold:
          est = dm_threshold(graph, obs.per_node_final, obs.final_z, estimators[e].gamma);
          break;
        case EstimatorSpec::Type::ht:
          est = ht(graph, obs.per_node_final, obs.final_z, point.p);
          break;
        case EstimatorSpec::Type::hajek:
          est = hajek(graph, obs.per_node_final, obs.final_z, point.p);
          break;
      }
      if (est) values[e][static_cast<std::size_t>(rep)] = *est;
    }
  });

  // Theory attachments shared by every estimator record; the closed forms
  // describe the PI estimator, so they are reported on its rows only.
  const double tte_true = tte(model);
  double bias_theory = detail::nan_value();
  double var_bound = detail::nan_value();
  double var_beta1 = detail::nan_value();
  const Clustering singles = point.clustering == nullptr ? singleton_clustering(n) : Clustering{};
  const Clustering& pi_for_theory = point.clustering == nullptr ? singles : *point.clustering;
  try {
    bias_theory = bias_closed(model, spec).closed_form;
  } catch (const std::exception&) {
  }
  if (point.kind != DesignKind::two_stage_unit_bernoulli) {
    try {
      var_bound = variance_upper_bound(model, graph, spec, pi_for_theory).total();
    } catch (const std::exception&) {
    }
    if (model_beta(model) == 1) {
      try {
        DesignSpec beta1_spec = spec;
        beta1_spec.kind = DesignKind::two_stage_clustered_crd;
        beta1_spec.clustering = &pi_for_theory;
        var_beta1 = var_exact_beta1(model, beta1_spec);
      } catch (const std::exception&) {
      }
    }
  }

  VarianceSplit split{detail::nan_value(), detail::nan_value()};
  if (n_outer >= 2 && n_inner >= 2)
    split = decompose_variance(model, point, n_outer, n_inner, point_seed ^ 0xDEC03ULL, threads);

  PointResult out;
  for (std::size_t e = 0; e < n_est; ++e) {
    SweepRecord rec;
    rec.design = point.design_name;
    rec.estimator = estimators[e].label;
    rec.clustering = point.clustering_name;
    rec.p = point.p;
    rec.q = point.q;
    rec.beta = model_beta(model);
    rec.tte_true = tte_true;
    rec.seed = point_seed;

    double sum = 0.0;
    long long kept = 0;
    for (double v : values[e])
      if (!std::isnan(v)) {
        sum += v;
        ++kept;
      }
    rec.replications = kept;
    rec.dropped = replications - kept;
    if (kept > 0) {
      rec.est_mean = sum / static_cast<double>(kept);
      double sq = 0.0;
      for (double v : values[e])
        if (!std::isnan(v)) sq += (v - rec.est_mean) * (v - rec.est_mean);
      rec.var_emp = sq / static_cast<double>(kept);
      rec.bias_emp = rec.est_mean - tte_true;
      rec.mse_emp = rec.bias_emp * rec.bias_emp + rec.var_emp;
    } else {
      rec.est_mean = rec.var_emp = rec.bias_emp = rec.mse_emp = detail::nan_value();
    }

    const bool is_pi = estimators[e].type == EstimatorSpec::Type::pi;
    rec.bias_theory = is_pi ? bias_theory : detail::nan_value();
    rec.var_bound = is_pi ? var_bound : detail::nan_value();
    rec.var_exact_beta1 = is_pi ? var_beta1 : detail::nan_value();
    rec.var_sampling = is_pi ? split.sampling : detail::nan_value();
    rec.var_extrapolation = is_pi ? split.extrapolation : detail::nan_value();
    out.records.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clustering metrics table (one row per clustering).
// ---------------------------------------------------------------------------

struct MetricsRow {
  std::string name;
  double var_cluster_influence = 0.0;
  double cut_eff = 0.0;
  long long cut_edge_count = 0;
};

struct NamedClustering {
  std::string name;
  Clustering clustering;
};

inline std::vector<MetricsRow> metrics_table(const InterferenceGraph& graph, const OutcomesModel& model,
                                             const std::vector<NamedClustering>& clusterings) {
  std::vector<MetricsRow> rows;
  for (const auto& nc : clusterings) {
    MetricsRow row;
    row.name = nc.name;
    const std::vector<double> bars = cluster_influence(model, nc.clustering);
    row.var_cluster_influence = var_hat(bars);
    row.cut_eff = cut_effect(model, nc.clustering);
    row.cut_edge_count = cut_edges(graph, nc.clustering);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV emission. Fixed column set, fixed formatting, so identical configs
// produce byte-identical files at any thread count.
// ---------------------------------------------------------------------------

inline const char* sweep_csv_header() {
  return "design,estimator,clustering,p,q,beta,R,tte_true,est_mean,bias_emp,var_emp,mse_emp,bias_theory,"
         "var_bound,var_exact_beta1,var_sampling,var_extrapolation,dropped,seed";
}

inline std::string format_csv_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string sweep_csv_row(const SweepRecord& r) {
  std::string out;
  out += r.design;
  out += ',';
  out += r.estimator;
  out += ',';
  out += r.clustering;
  out += ',';
  out += format_csv_double(r.p);
  out += ',';
  out += format_csv_double(r.q);
  out += ',';
  out += std::to_string(r.beta);
  out += ',';
  out += std::to_string(r.replications);
  out += ',';
  out += format_csv_double(r.tte_true);
  out += ',';
  out += format_csv_double(r.est_mean);
  out += ',';
  out += format_csv_double(r.bias_emp);
  out += ',';
  out += format_csv_double(r.var_emp);
  out += ',';
  out += format_csv_double(r.mse_emp);
  out += ',';
  out += format_csv_double(r.bias_theory);
  out += ',';
  out += format_csv_double(r.var_bound);
  out += ',';
  out += format_csv_double(r.var_exact_beta1);
  out += ',';
  out += format_csv_double(r.var_sampling);
  out += ',';
  out += format_csv_double(r.var_extrapolation);
  out += ',';
  out += std::to_string(r.dropped);
  out += ',';
  out += std::to_string(r.seed);
  return out;
}

inline std::string sweep_csv(const std::vector<SweepRecord>& records) {
  std::string out = sweep_csv_header();
  out += '\n';
  for (const auto& r : records) {
    if (r.skipped) continue;  // skipped points are reported on stderr, not in data
    out += sweep_csv_row(r);
    out += '\n';
  }
  return out;
}

}  // namespace rollout
