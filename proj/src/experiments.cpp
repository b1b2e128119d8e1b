#include "mdm/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "mdm/error.hpp"
#include "mdm/exact_gibbs.hpp"
#include "mdm/rng.hpp"
#include "mdm/transfer_matrix.hpp"

namespace mdm {

namespace {

constexpr std::uint64_t kReplicaTag = 0x7265706c6963ULL;
constexpr std::uint64_t kResampleTag = 0x726573616d70ULL;
constexpr std::uint64_t kChainTag = 0x636861696eULL;
constexpr std::uint64_t kCouplingTag = 0x636f75706cULL;
constexpr std::uint64_t kSizeTag = 0x73697a65ULL;

// Slack for comparisons that hold exactly in real arithmetic.
constexpr double kRoundoff = 1e-10;

struct Laws {
  WeightDistribution edge;
  WeightDistribution vertex;
};

Laws parse_laws(const ExperimentConfig& cfg) {
  return {WeightDistribution::parse(cfg.edge_law), WeightDistribution::parse(cfg.vertex_law)};
}

std::vector<double> statistics(const std::vector<ReplicaRecord>& records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.statistic);
  return out;
}

std::optional<ExpFit> try_fit(const std::vector<DecayRow>& rows, double floor) {
  std::vector<double> r, v;
  for (const auto& row : rows) {
    r.push_back(row.r);
    v.push_back(row.mean);
  }
  try {
    return exp_fit(r, v, floor);
  } catch (const DegenerateError&) {
    return std::nullopt;
  }
}

std::optional<std::string> shrunken_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) return std::nullopt;
  const std::string kind = spec.substr(0, colon);
  if (kind == "grid" || kind == "torus") return resize_spec(spec, 4);
  if (kind == "strip" || kind == "cylinder" || kind == "path" || kind == "cycle") return resize_spec(spec, 12);
  return std::nullopt;
}

bool covers_graph(const WeightedGraph& g, const SubgraphView& view) {
  return view.vertex_count() == g.vertex_count() && view.edge_count() == g.edge_count();
}

std::vector<int> size_ladder(const ExperimentConfig& cfg) {
  if (!cfg.sizes.empty()) return cfg.sizes;
  return {0};  // 0: the configured graph as is
}

std::string spec_for_size(const ExperimentConfig& cfg, int size) {
  return size == 0 ? cfg.graph : resize_spec(cfg.graph, size);
}

double lambda_of(const WeightedGraph& g, const DisorderSample& s, Engine engine, std::uint64_t seed,
                 std::int64_t sweeps) {
  switch (engine) {
    case Engine::transfer: {
      const auto m = StripEngine(g, s).edge_marginals();
      double acc = 0.0;
      for (double p : m) acc += p;
      return acc;
    }
    case Engine::enumeration:
      return enumeration_summary(g, s).summary.dimer_mean;
    case Engine::mcmc: {
      ChainOptions opt;
      opt.sweeps = sweeps;
      opt.seed = derive_seed(seed, kChainTag);
      double acc = 0.0;
      run_chain(g, s, std::nullopt, opt, [&](const Matching& m) { acc += m.size(); });
      return acc / static_cast<double>(sweeps);
    }
    default:
      return gibbs_dimer_moments(g, s).mean;
  }
}

std::ofstream open_csv(const std::string& path, const char* header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << header << '\n';
  return out;
}

}  // namespace

Engine parse_engine(const std::string& name) {
  if (name == "auto" || name == "automatic") return Engine::automatic;
  if (name == "enum" || name == "enumeration") return Engine::enumeration;
  if (name == "recursion") return Engine::recursion;
  if (name == "transfer") return Engine::transfer;
  if (name == "mcmc") return Engine::mcmc;
  throw ValidationError("engine: expected auto, enum, recursion, transfer or mcmc, got '" + name + "'");
}

std::string to_string(Engine engine) {
  switch (engine) {
    case Engine::automatic: return "auto";
    case Engine::enumeration: return "enum";
    case Engine::recursion: return "recursion";
    case Engine::transfer: return "transfer";
    case Engine::mcmc: return "mcmc";
  }
  return "auto";
}

void ExperimentConfig::validate() const {
  if (replicas < 1) throw ValidationError("replicas must be >= 1");
  if (r_list.empty()) throw ValidationError("R list must not be empty");
  for (int r : r_list)
    if (r < 0) throw ValidationError("R values must be >= 0");
  for (int n : sizes)
    if (n < 1) throw ValidationError("sizes must be >= 1");
  if (!(kappa > 0.0)) throw ValidationError("kappa must be > 0");
  if (!(truncation_t >= 0.0 && truncation_t <= 1.0)) throw ValidationError("truncation t must lie in [0,1]");
  if (threads < 0) throw ValidationError("threads must be >= 0");
  if (mcmc_sweeps < 1) throw ValidationError("mcmc sweeps must be >= 1");
  parse_laws(*this);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j{{"graph", graph},           {"edge_law", edge_law},   {"vertex_law", vertex_law},
                   {"replicas", replicas},     {"seed", seed},           {"engine", mdm::to_string(engine)},
                   {"r_list", r_list},         {"sizes", sizes},         {"kappa", kappa},
                   {"truncation_t", truncation_t}, {"mcmc_sweeps", mcmc_sweeps}, {"fit_floor", fit_floor},
                   {"variance_floor", variance_floor}};
  j["edge"] = edge ? nlohmann::json(*edge) : nlohmann::json(nullptr);
  return j;
}

std::uint64_t replica_seed(std::uint64_t master, std::int64_t replica) {
  return derive_seed(master, kReplicaTag, static_cast<std::uint64_t>(replica));
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::string resize_spec(const std::string& spec, int n) {
  if (n < 1) throw ValidationError("size must be >= 1");
  const auto colon = spec.find(':');
  const std::string kind = colon == std::string::npos ? spec : spec.substr(0, colon);
  const std::string body = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "strip" || kind == "cylinder") {
    const auto x = body.find('x');
    if (x == std::string::npos) throw ValidationError(kind + " spec needs LxW");
    return kind + ":" + std::to_string(n) + "x" + body.substr(x + 1);
  }
  if (kind == "grid" || kind == "torus") return kind + ":" + std::to_string(n) + "x" + std::to_string(n);
  if (kind == "path" || kind == "cycle") return kind + ":" + std::to_string(n);
  throw ValidationError("graph spec '" + spec + "' has no size parameter to scan");
}

Engine resolve_exact_engine(const WeightedGraph& g, Engine requested) {
  switch (requested) {
    case Engine::automatic:
      if (g.strip() && g.strip()->rung_width <= kTransferWidthLimit) return Engine::transfer;
      if (g.vertex_count() <= kRecursionVertexLimit) return Engine::recursion;
      throw SizeError("no exact engine for '" + g.description + "': " + std::to_string(g.vertex_count()) +
                      " vertices and no strip layout");
    case Engine::transfer:
      if (!g.strip()) throw ValidationError("engine transfer needs a strip-layout graph, got '" + g.description + "'");
      return Engine::transfer;
    case Engine::mcmc:
      throw ValidationError("engine mcmc gives no exact free energy; use enum, recursion or transfer");
    default:
      return requested;
  }
}

double free_energy(const WeightedGraph& g, const DisorderSample& s, Engine engine) {
  switch (engine) {
    case Engine::transfer: return strip_log_partition(g, s);
    case Engine::enumeration: return log_partition_enumeration(g, s);
    case Engine::recursion: return log_partition(g, s);
    default: return free_energy(g, s, resolve_exact_engine(g, engine));
  }
}

EdgeId central_edge(const WeightedGraph& g) {
  if (g.edge_count() == 0) throw ValidationError("graph '" + g.description + "' has no edges");
  EdgeId best = 0;
  int best_ecc = kUnreachable;
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const auto dist = bfs_distances(g, {g.edge(e).u, g.edge(e).v});
    int ecc = 0;
    for (int d : dist)
      if (d != kUnreachable) ecc = std::max(ecc, d);
    if (ecc < best_ecc) {
      best_ecc = ecc;
      best = e;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

CltResult run_free_energy_clt(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto g = parse_graph_spec(cfg.graph);
  const auto laws = parse_laws(cfg);
  CltResult result;
  result.engine = resolve_exact_engine(g, cfg.engine);
  result.records = run_replicas<ReplicaRecord>(cfg.replicas, cfg.threads, [&](std::int64_t i) {
    const auto seed = replica_seed(cfg.seed, i);
    const auto s = sample_weights(g, laws.edge, laws.vertex, seed);
    return ReplicaRecord{i, seed, free_energy(g, s, result.engine)};
  });
  result.summary = summarize(statistics(result.records));

  if (const auto small = shrunken_spec(cfg.graph)) {
    const auto h = parse_graph_spec(*small);
    Engine other = Engine::automatic;
    if (result.engine != Engine::recursion && h.vertex_count() <= kRecursionVertexLimit) other = Engine::recursion;
    else if (result.engine == Engine::recursion && h.strip()) other = Engine::transfer;
    else if (result.engine == Engine::recursion && h.edge_count() <= kEnumerationEdgeLimit) other = Engine::enumeration;
    if (other != Engine::automatic) {
      for (std::int64_t i = 0; i < std::min<std::int64_t>(5, cfg.replicas); ++i) {
        const auto s = sample_weights(h, laws.edge, laws.vertex, replica_seed(cfg.seed, i));
        const double engine_value = free_energy(h, s, result.engine == Engine::transfer && !h.strip() ? Engine::recursion : result.engine);
        result.cross_check_error = std::max(result.cross_check_error, std::abs(engine_value - free_energy(h, s, other)));
        ++result.cross_checked;
      }
    }
  }
  return result;
}

CltResult run_dimer_clt(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto g = parse_graph_spec(cfg.graph);
  const auto laws = parse_laws(cfg);
  CltResult result;
  result.engine = cfg.engine == Engine::mcmc ? Engine::mcmc : resolve_exact_engine(g, cfg.engine);
  result.records = run_replicas<ReplicaRecord>(cfg.replicas, cfg.threads, [&](std::int64_t i) {
    const auto seed = replica_seed(cfg.seed, i);
    const auto s = sample_weights(g, laws.edge, laws.vertex, seed);
    return ReplicaRecord{i, seed, lambda_of(g, s, result.engine, seed, cfg.mcmc_sweeps)};
  });
  result.summary = summarize(statistics(result.records));

  if (const auto small = shrunken_spec(cfg.graph)) {
    const auto h = parse_graph_spec(*small);
    if (h.vertex_count() <= kRecursionVertexLimit) {
      const Engine mine = result.engine == Engine::transfer && !h.strip() ? Engine::recursion : result.engine;
      const Engine other = mine == Engine::recursion ? (h.strip() ? Engine::transfer : Engine::automatic) : Engine::recursion;
      if (other != Engine::automatic) {
        for (std::int64_t i = 0; i < std::min<std::int64_t>(5, cfg.replicas); ++i) {
          const auto seed = replica_seed(cfg.seed, i);
          const auto s = sample_weights(h, laws.edge, laws.vertex, seed);
          const double a = lambda_of(h, s, mine, seed, cfg.mcmc_sweeps);
          const double b = lambda_of(h, s, other, seed, cfg.mcmc_sweeps);
          result.cross_check_error = std::max(result.cross_check_error, std::abs(a - b));
          ++result.cross_checked;
        }
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

DecayResult correlation_decay_curve(const ExperimentConfig& cfg, bool with_two_point) {
  cfg.validate();
  const auto g = parse_graph_spec(cfg.graph);
  if (g.vertex_count() > kRecursionVertexLimit)
    throw SizeError("decay: graph exceeds " + std::to_string(kRecursionVertexLimit) + " vertices");
  const auto laws = parse_laws(cfg);
  DecayResult result;
  result.edge = cfg.edge ? *cfg.edge : central_edge(g);
  if (result.edge < 0 || result.edge >= g.edge_count()) throw ValidationError("decay: edge index out of range");
  const EdgeId e = result.edge;
  const Edge ed = g.edge(e);

  std::vector<SubgraphView> views;
  for (int r : cfg.r_list) views.push_back(ball(g, SiteIndex::edge(e), r));

  std::vector<int> distances;
  if (with_two_point) {
    for (int d : cfg.r_list) {
      if (d < 1) continue;
      for (EdgeId f = 0; f < g.edge_count(); ++f)
        if (site_distance(g, SiteIndex::edge(e), SiteIndex::edge(f)) == d) {
          distances.push_back(d);
          result.two_point_partners.push_back(f);
          break;
        }
    }
  }

  struct Sample {
    std::vector<double> gaps;
    std::vector<double> covariances;
  };
  const auto samples = run_replicas<Sample>(cfg.replicas, cfg.threads, [&](std::int64_t i) {
    const auto s = sample_weights(g, laws.edge, laws.vertex, replica_seed(cfg.seed, i));
    PartitionEngine full(g, s);
    const auto marg = full.marginals();
    Sample out;
    for (const auto& view : views) {
      if (covers_graph(g, view)) {
        out.gaps.push_back(0.0);
        continue;
      }
      PartitionEngine local(g, s, view.vertices(), view.edge_ids());
      out.gaps.push_back(std::abs(marg.edge[e] - local.marginals().edge[e]));
    }
    const double log_z = full.log_z();
    for (EdgeId f : result.two_point_partners) {
      const Edge fd = g.edge(f);
      const std::vector<Vertex> removed{ed.u, ed.v, fd.u, fd.v};
      const double joint = std::exp(s.edge_weights[e] + s.edge_weights[f] + full.log_z_without(removed) - log_z);
      out.covariances.push_back(std::abs(joint - marg.edge[e] * marg.edge[f]));
    }
    return out;
  });

  auto column = [&](std::size_t k, bool gaps) {
    std::vector<double> v;
    for (const auto& smp : samples) v.push_back(gaps ? smp.gaps[k] : smp.covariances[k]);
    return v;
  };
  for (std::size_t k = 0; k < views.size(); ++k) {
    const auto v = column(k, true);
    result.rows.push_back({cfg.r_list[k], mean_of(v), mean_stderr(v), cfg.replicas});
  }
  for (std::size_t k = 0; k < distances.size(); ++k) {
    const auto v = column(k, false);
    result.two_point_rows.push_back({distances[k], mean_of(v), mean_stderr(v), cfg.replicas});
  }
  result.fit = try_fit(result.rows, cfg.fit_floor);
  result.two_point_fit = try_fit(result.two_point_rows, cfg.fit_floor);
  return result;
}

// ---------------------------------------------------------------------------

VarScanResult variance_scan(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto laws = parse_laws(cfg);
  VarScanResult result;
  for (int size : size_ladder(cfg)) {
    const auto g = parse_graph_spec(spec_for_size(cfg, size));
    const Engine engine = resolve_exact_engine(g, cfg.engine);
    const std::uint64_t master = derive_seed(cfg.seed, kSizeTag, static_cast<std::uint64_t>(size));
    const auto f = run_replicas<double>(cfg.replicas, cfg.threads, [&](std::int64_t i) {
      return free_energy(g, sample_weights(g, laws.edge, laws.vertex, replica_seed(master, i)), engine);
    });
    VarScanRow row;
    row.size = size == 0 ? g.vertex_count() : size;
    row.edges = g.edge_count();
    row.vertices = g.vertex_count();
    row.var = variance_of(f);
    row.std_error = variance_stderr(f);
    row.upper_bound = 2.0 * (laws.edge.absolute_moment(2) * static_cast<double>(row.edges) +
                             laws.vertex.absolute_moment(2) * static_cast<double>(row.vertices));
    row.per_edge = row.edges > 0 ? row.var / static_cast<double>(row.edges) : 0.0;
    row.bound_holds = row.var <= row.upper_bound;
    row.above_floor = row.per_edge >= cfg.variance_floor;
    result.rows.push_back(row);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& row : result.rows) {
    lo = std::min(lo, row.per_edge);
    hi = std::max(hi, row.per_edge);
  }
  result.band_ratio = hi == 0.0 ? 1.0 : (lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity());
  return result;
}

// ---------------------------------------------------------------------------

std::vector<DimerBoundRow> dimer_variance_lower_bound_check(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto laws = parse_laws(cfg);
  if (!std::holds_alternative<Gaussian>(laws.edge.law()))
    throw ValidationError("dimer variance bound needs a Gaussian edge law, got '" + cfg.edge_law + "'");
  std::vector<DimerBoundRow> rows;
  for (int size : size_ladder(cfg)) {
    const auto g = parse_graph_spec(spec_for_size(cfg, size));
    const std::uint64_t master = derive_seed(cfg.seed, kSizeTag, static_cast<std::uint64_t>(size));
    struct Pair {
      double lambda = 0.0;
      double gibbs_var = 0.0;
    };
    const auto pairs = run_replicas<Pair>(cfg.replicas, cfg.threads, [&](std::int64_t i) {
      const auto s = sample_weights(g, laws.edge, laws.vertex, replica_seed(master, i));
      if (cfg.engine == Engine::enumeration) {
        const auto sum = enumeration_summary(g, s).summary;
        return Pair{sum.dimer_mean, sum.dimer_gibbs_variance};
      }
      const auto m = gibbs_dimer_moments(g, s);
      return Pair{m.mean, m.variance};
    });
    std::vector<double> lambda, gv;
    for (const auto& p : pairs) {
      lambda.push_back(p.lambda);
      gv.push_back(p.gibbs_var);
    }
    DimerBoundRow row;
    row.size = size == 0 ? g.vertex_count() : size;
    row.edges = g.edge_count();
    row.var_lambda = variance_of(lambda);
    row.var_lambda_se = variance_stderr(lambda);
    row.mean_gibbs_var = mean_of(gv);
    row.mean_gibbs_var_se = mean_stderr(gv);
    if (row.edges > 0) {
      const double e = static_cast<double>(row.edges);
      row.bound = row.mean_gibbs_var * row.mean_gibbs_var / e;
      const double dbound = 2.0 * row.mean_gibbs_var * row.mean_gibbs_var_se / e;
      row.combined_se = std::sqrt(row.var_lambda_se * row.var_lambda_se + dbound * dbound);
    }
    row.holds = row.var_lambda >= row.bound - 3.0 * row.combined_se;
    if (row.var_lambda > 0.0 && lambda.size() >= 8) row.ks = ks_statistic(lambda);
    rows.push_back(row);
  }
  return rows;
}

ClaimCheck claim_inequality(const WeightedGraph& g, const DisorderSample& s, double k, const std::vector<EdgeId>& f) {
  if (!is_matching(g, f)) throw ValidationError("claim: F is not a matching");
  for (EdgeId e : f) {
    const Edge& ed = g.edge(e);
    if (!(s.edge_weights[e] - s.vertex_weights[ed.u] - s.vertex_weights[ed.v] < k))
      throw ValidationError("claim: edge " + std::to_string(e) + " has gauged weight >= K");
  }
  const auto summary = gibbs_summary(g, s);
  ClaimCheck out;
  out.matching = f;
  out.gibbs_variance = summary.dimer_gibbs_variance;
  for (EdgeId e : f) out.rhs += summary.edge_marginals[e];
  out.rhs /= 1.0 + std::exp(k);
  out.holds = out.gibbs_variance >= out.rhs - kRoundoff;
  return out;
}

ClaimCheck claim_inequality(const WeightedGraph& g, const DisorderSample& s, double k) {
  Matching m(g);
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const Edge& ed = g.edge(e);
    if (s.edge_weights[e] - s.vertex_weights[ed.u] - s.vertex_weights[ed.v] < k && m.endpoints_free(e)) m.add(e);
  }
  return claim_inequality(g, s, k, m.edges());
}

// ---------------------------------------------------------------------------

LocalityResult chatterjee_derivative_locality(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto g = parse_graph_spec(cfg.graph);
  const auto laws = parse_laws(cfg);
  const Engine engine = resolve_exact_engine(g, cfg.engine);
  LocalityResult result;
  result.edge = cfg.edge ? *cfg.edge : central_edge(g);
  if (result.edge < 0 || result.edge >= g.edge_count()) throw ValidationError("locality: edge index out of range");
  const EdgeId e = result.edge;
  std::vector<SubgraphView> views;
  for (int r : cfg.r_list) views.push_back(ball(g, SiteIndex::edge(e), r));

  struct Sample {
    std::vector<double> errors;
    bool violation = false;
    double ratio = 0.0;
  };
  const auto samples = run_replicas<Sample>(cfg.replicas, cfg.threads, [&](std::int64_t i) {
    const auto seed = replica_seed(cfg.seed, i);
    const auto s = sample_weights(g, laws.edge, laws.vertex, seed);
    auto s2 = s;
    s2.edge_weights[e] = draw_site(laws.edge, derive_seed(seed, kResampleTag), SiteIndex::edge(e));
    const double delta = free_energy(g, s, engine) - free_energy(g, s2, engine);
    const double step = std::abs(s.edge_weights[e] - s2.edge_weights[e]);
    Sample out;
    out.violation = std::abs(delta) > step + kRoundoff;
    out.ratio = step > 0.0 ? std::abs(delta) / step : 0.0;
    for (const auto& view : views) {
      if (covers_graph(g, view)) {
        out.errors.push_back(0.0);
        continue;
      }
      const double local = subgraph_log_partition(view, s) - subgraph_log_partition(view, s2);
      out.errors.push_back(std::abs(delta - local));
    }
    return out;
  });

  for (const auto& smp : samples) {
    result.pointwise_violations += smp.violation;
    result.max_ratio = std::max(result.max_ratio, smp.ratio);
  }
  std::vector<DecayRow> fit_rows;
  for (std::size_t k = 0; k < views.size(); ++k) {
    std::vector<double> v, v4;
    for (const auto& smp : samples) {
      v.push_back(smp.errors[k]);
      v4.push_back(std::pow(smp.errors[k], 4));
    }
    result.rows.push_back({cfg.r_list[k], mean_of(v), mean_stderr(v), mean_of(v4), mean_stderr(v4), cfg.replicas});
    fit_rows.push_back({cfg.r_list[k], mean_of(v), 0.0, cfg.replicas});
  }
  result.fit = try_fit(fit_rows, cfg.fit_floor);
  return result;
}

// ---------------------------------------------------------------------------

std::vector<TruncationRow> truncation_comparison(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto laws = parse_laws(cfg);
  std::vector<TruncationRow> rows;
  for (int size : size_ladder(cfg)) {
    const auto g = parse_graph_spec(spec_for_size(cfg, size));
    const Engine engine = resolve_exact_engine(g, cfg.engine);
    const double n = static_cast<double>(g.vertex_count());
    const double level = std::pow(n, cfg.kappa);
    const std::uint64_t master = derive_seed(cfg.seed, kSizeTag, static_cast<std::uint64_t>(size));
    struct Pair {
      double f = 0.0;
      double ft = 0.0;
      double fraction = 0.0;
    };
    const auto pairs = run_replicas<Pair>(cfg.replicas, cfg.threads, [&](std::int64_t i) {
      const auto s = sample_weights(g, laws.edge, laws.vertex, replica_seed(master, i));
      const auto st = truncate_weights(s, level, cfg.truncation_t);
      std::size_t cut = 0;
      for (double w : s.edge_weights) cut += std::abs(w) > level;
      for (double w : s.vertex_weights) cut += std::abs(w) > level;
      const double sites = static_cast<double>(s.edge_weights.size() + s.vertex_weights.size());
      return Pair{free_energy(g, s, engine), free_energy(g, st, engine), sites > 0 ? cut / sites : 0.0};
    });
    std::vector<double> f, ft, frac;
    for (const auto& p : pairs) {
      f.push_back(p.f);
      ft.push_back(p.ft);
      frac.push_back(p.fraction);
    }
    const double mf = mean_of(f), mft = mean_of(ft);
    std::vector<double> sq;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double d = (f[i] - mf) - (ft[i] - mft);
      sq.push_back(d * d);
    }
    TruncationRow row;
    row.size = size == 0 ? g.vertex_count() : size;
    row.vertices = g.vertex_count();
    row.level = level;
    row.value = n > 0 ? mean_of(sq) / n : 0.0;
    row.std_error = n > 0 ? mean_stderr(sq) / n : 0.0;
    row.truncated_fraction = mean_of(frac);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<CouplingRow> coupling_scan(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto g = parse_graph_spec(cfg.graph);
  const auto laws = parse_laws(cfg);
  const auto s = sample_weights(g, laws.edge, laws.vertex, replica_seed(cfg.seed, 0));
  const EdgeId e = cfg.edge ? *cfg.edge : central_edge(g);
  if (e < 0 || e >= g.edge_count()) throw ValidationError("couple: edge index out of range");
  SamplerKind kind = SamplerKind::automatic;
  if (cfg.engine == Engine::mcmc) kind = SamplerKind::chain;
  else if (cfg.engine == Engine::enumeration) kind = SamplerKind::enumeration;
  else if (cfg.engine == Engine::recursion) kind = SamplerKind::recursion;
  else if (cfg.engine == Engine::transfer) throw ValidationError("couple: engine transfer cannot sample conditional measures");

  const auto n = static_cast<std::int64_t>(cfg.r_list.size());
  return run_replicas<CouplingRow>(n, cfg.threads, [&](std::int64_t k) {
    const int r = cfg.r_list[static_cast<std::size_t>(k)];
    const auto region = ball(g, SiteIndex::edge(e), r).edge_ids();
    const auto bc1 = BoundaryCondition::all_zero(g, region);
    const auto bc2 = BoundaryCondition::greedy_maximal(g, region);
    CouplingRow row;
    row.r = r;
    row.region_edges = static_cast<std::int64_t>(region.size());
    row.marginal_gap = std::abs(conditional_summary(g, s, bc1).edge_marginals[e] -
                                conditional_summary(g, s, bc2).edge_marginals[e]);
    CouplingOptions opt;
    opt.replicas = cfg.replicas;
    opt.seed = derive_seed(cfg.seed, kCouplingTag, static_cast<std::uint64_t>(r));
    opt.sampler = kind;
    opt.chain_sweeps = cfg.mcmc_sweeps;
    row.seed = opt.seed;
    row.estimate = disagreement_probability(g, s, e, r, bc1, bc2, opt);
    return row;
  });
}

// ---------------------------------------------------------------------------

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_clt_csv(const std::string& path, const std::vector<ReplicaRecord>& records) {
  auto out = open_csv(path, "replica,seed,statistic");
  for (const auto& r : records) out << r.replica << ',' << r.seed << ',' << format_number(r.statistic) << '\n';
}

void write_decay_csv(const std::string& path, const std::vector<DecayRow>& rows) {
  auto out = open_csv(path, "R,mean,stderr,n");
  for (const auto& r : rows) out << r.r << ',' << format_number(r.mean) << ',' << format_number(r.std_error) << ',' << r.n << '\n';
}

void write_locality_csv(const std::string& path, const std::vector<LocalityRow>& rows) {
  auto out = open_csv(path, "R,mean,stderr,n");
  for (const auto& r : rows) out << r.r << ',' << format_number(r.mean) << ',' << format_number(r.std_error) << ',' << r.n << '\n';
}

void write_varscan_csv(const std::string& path, const std::vector<VarScanRow>& rows) {
  auto out = open_csv(path, "size,var,stderr,upper_bound");
  for (const auto& r : rows)
    out << r.size << ',' << format_number(r.var) << ',' << format_number(r.std_error) << ',' << format_number(r.upper_bound)
        << '\n';
}

void write_couple_csv(const std::string& path, const std::vector<CouplingRow>& rows) {
  auto out = open_csv(path, "R,estimate,stderr,replicas,seed");
  for (const auto& r : rows)
    out << r.r << ',' << format_number(r.estimate.value) << ',' << format_number(r.estimate.std_error) << ','
        << r.estimate.replicas << ',' << r.seed << '\n';
}

void write_truncation_csv(const std::string& path, const std::vector<TruncationRow>& rows) {
  auto out = open_csv(path, "size,value,stderr,level");
  for (const auto& r : rows)
    out << r.size << ',' << format_number(r.value) << ',' << format_number(r.std_error) << ',' << format_number(r.level)
        << '\n';
}

}  // namespace mdm
