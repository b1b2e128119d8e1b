#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdm/coupling.hpp"
#include "mdm/disorder.hpp"
#include "mdm/graph.hpp"
#include "mdm/stats.hpp"

namespace mdm {

enum class Engine { automatic, enumeration, recursion, transfer, mcmc };

Engine parse_engine(const std::string& name);
std::string to_string(Engine engine);

struct ExperimentConfig {
  std::string graph = "strip:100x4";
  std::string edge_law = "gaussian:0,1";
  std::string vertex_law = "const:0";
  std::int64_t replicas = 1000;
  std::uint64_t seed = 0;
  Engine engine = Engine::automatic;
  std::vector<int> r_list{1, 2, 3, 4};
  /// Size ladder for scans: strip/cylinder lengths, grid/torus sides, path/cycle lengths.
  std::vector<int> sizes;
  double kappa = 0.1;
  double truncation_t = 0.0;
  /// Target edge; the most central edge when unset.
  std::optional<EdgeId> edge;
  int threads = 0;  // 0: hardware concurrency
  std::int64_t mcmc_sweeps = 2000;
  double fit_floor = 1e-12;
  /// Lower threshold for Var(F)/|E| in variance scans.
  double variance_floor = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Seed of replica i of a run with the given master seed.
std::uint64_t replica_seed(std::uint64_t master, std::int64_t replica);

int resolve_threads(int requested);

/// Runs f(i) for i in [0, n) on a worker pool and returns the results in index
/// order. The first exception thrown by any replica is rethrown.
template <class T, class F>
std::vector<T> run_replicas(std::int64_t n, int threads, F&& f) {
  std::vector<T> out(static_cast<std::size_t>(n));
  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        out[static_cast<std::size_t>(i)] = f(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
        return;
      }
    }
  };
  const int count = std::max(1, std::min<int>(resolve_threads(threads), static_cast<int>(std::max<std::int64_t>(n, 1))));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

/// Replaces the size parameter of a graph spec: strip/cylinder:LxW -> nxW,
/// grid/torus:WxH -> nxn, path/cycle:L -> n.
std::string resize_spec(const std::string& spec, int n);

/// Engine actually used for F on g: automatic picks transfer on strips, then
/// recursion. Throws ValidationError if the requested engine cannot compute
/// exact quantities on g.
Engine resolve_exact_engine(const WeightedGraph& g, Engine requested);
double free_energy(const WeightedGraph& g, const DisorderSample& s, Engine engine);

/// Edge minimizing the largest distance to a vertex (lowest id on ties).
EdgeId central_edge(const WeightedGraph& g);

struct ReplicaRecord {
  std::int64_t replica = 0;
  std::uint64_t seed = 0;
  double statistic = 0.0;
};

struct CltResult {
  StatSummary summary;
  std::vector<ReplicaRecord> records;
  Engine engine = Engine::automatic;
  /// Largest |difference| between the run's engine and an independent one on
  /// the first replicas, evaluated on a shrunken copy of the graph.
  double cross_check_error = 0.0;
  int cross_checked = 0;
};

CltResult run_free_energy_clt(const ExperimentConfig& cfg);
/// Lambda = <|M|> per replica.
CltResult run_dimer_clt(const ExperimentConfig& cfg);

struct DecayRow {
  int r = 0;
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t n = 0;
};

struct DecayResult {
  EdgeId edge = 0;
  std::vector<DecayRow> rows;
  std::optional<ExpFit> fit;
  /// |<1_e 1_e'> - <1_e><1_e'>| against dist(e, e') = R.
  std::vector<DecayRow> two_point_rows;
  std::vector<EdgeId> two_point_partners;
  std::optional<ExpFit> two_point_fit;
};

/// E|<1_e>_G - <1_e>_ball(e,R)| for R in cfg.r_list.
DecayResult correlation_decay_curve(const ExperimentConfig& cfg, bool with_two_point = true);

struct VarScanRow {
  int size = 0;
  std::int64_t edges = 0;
  std::int64_t vertices = 0;
  double var = 0.0;
  double std_error = 0.0;
  double upper_bound = 0.0;
  double per_edge = 0.0;
  bool bound_holds = false;
  bool above_floor = false;
};

struct VarScanResult {
  std::vector<VarScanRow> rows;
  /// max / min of Var(F)/|E| over the sizes.
  double band_ratio = 0.0;
};

VarScanResult variance_scan(const ExperimentConfig& cfg);

struct DimerBoundRow {
  int size = 0;
  std::int64_t edges = 0;
  double var_lambda = 0.0;
  double var_lambda_se = 0.0;
  double mean_gibbs_var = 0.0;
  double mean_gibbs_var_se = 0.0;
  double bound = 0.0;
  double combined_se = 0.0;
  bool holds = false;
  std::optional<double> ks;
};

/// Var(Lambda) against |E|^-1 (E GibbsVar|M|)^2 on cfg.graph, or on every size
/// of cfg.sizes when given. Throws ValidationError unless the edge law is Gaussian.
std::vector<DimerBoundRow> dimer_variance_lower_bound_check(const ExperimentConfig& cfg);

struct ClaimCheck {
  std::vector<EdgeId> matching;
  double gibbs_variance = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// GibbsVar|M| >= (1 + e^K)^-1 sum_{e in F} <1_e> for a matching F of edges
/// with gauged weight below K. Throws ValidationError if F is not such a matching.
ClaimCheck claim_inequality(const WeightedGraph& g, const DisorderSample& s, double k, const std::vector<EdgeId>& f);
/// Same with F a greedy matching of E_K in edge order.
ClaimCheck claim_inequality(const WeightedGraph& g, const DisorderSample& s, double k);

struct LocalityRow {
  int r = 0;
  double mean = 0.0;
  double std_error = 0.0;
  double mean_fourth = 0.0;
  double fourth_std_error = 0.0;
  std::int64_t n = 0;
};

struct LocalityResult {
  EdgeId edge = 0;
  std::vector<LocalityRow> rows;
  std::optional<ExpFit> fit;
  /// Replicas with |Delta_e F| > |w_e - w_e'|.
  std::int64_t pointwise_violations = 0;
  double max_ratio = 0.0;
};

/// |Delta_e F - Delta_e F_[e,R]| over replicas, with w_e' a fresh draw.
LocalityResult chatterjee_derivative_locality(const ExperimentConfig& cfg);

struct TruncationRow {
  int size = 0;
  std::int64_t vertices = 0;
  double level = 0.0;
  double value = 0.0;
  double std_error = 0.0;
  double truncated_fraction = 0.0;
};

/// n^-1 mean of ((F - mean F) - (F^t - mean F^t))^2 per size, with F^t the
/// free energy of the weights truncated at L = n^kappa.
std::vector<TruncationRow> truncation_comparison(const ExperimentConfig& cfg);

struct CouplingRow {
  int r = 0;
  Estimate estimate;
  std::uint64_t seed = 0;
  double marginal_gap = 0.0;
  std::int64_t region_edges = 0;
};

/// Disagreement probability for all-zero against greedy-maximal boundaries on
/// ball(e, R), R in cfg.r_list, on one disorder sample drawn from cfg.seed.
std::vector<CouplingRow> coupling_scan(const ExperimentConfig& cfg);

// CSV writers; the headers are fixed.
void write_clt_csv(const std::string& path, const std::vector<ReplicaRecord>& records);
void write_decay_csv(const std::string& path, const std::vector<DecayRow>& rows);
void write_locality_csv(const std::string& path, const std::vector<LocalityRow>& rows);
void write_varscan_csv(const std::string& path, const std::vector<VarScanRow>& rows);
void write_couple_csv(const std::string& path, const std::vector<CouplingRow>& rows);
void write_truncation_csv(const std::string& path, const std::vector<TruncationRow>& rows);

/// Shortest round-trip decimal form, locale independent.
std::string format_number(double v);

}  // namespace mdm
