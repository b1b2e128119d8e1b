#include "mdm/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "mdm/error.hpp"
#include "mdm/rng.hpp"

namespace mdm {

namespace {

std::vector<std::uint8_t> edge_flags(int edge_count, const std::vector<EdgeId>& edges) {
  std::vector<std::uint8_t> flags(edge_count, 0);
  for (EdgeId e : edges) flags[e] = 1;
  return flags;
}

}  // namespace

ChainState initial_state(const WeightedGraph& g, std::optional<BoundaryCondition> boundary) {
  ChainState state{Matching(g), 0, std::move(boundary)};
  if (state.boundary) {
    state.boundary->validate(g);
    for (EdgeId e : state.boundary->present_edges()) state.current.add(e);
  }
  return state;
}

void heat_bath_update(Matching& m, const DisorderSample& s, EdgeId e, double u) {
  if (!m.endpoints_free(e)) {
    m.remove(e);
    return;
  }
  const Edge& ed = m.graph().edge(e);
  const double gauged = s.edge_weights[e] - s.vertex_weights[ed.u] - s.vertex_weights[ed.v];
  // u < e^a / (1 + e^a), written to stay finite for large |a|
  const bool present = gauged >= 0 ? u * (1.0 + std::exp(-gauged)) < 1.0 : u * (1.0 + std::exp(gauged)) < std::exp(gauged);
  if (present) m.add(e);
  else m.remove(e);
}

ChainState heat_bath_step(ChainState state, const DisorderSample& s, EdgeId e, double u) {
  if (state.boundary) {
    const auto& b = state.boundary->boundary;
    if (std::binary_search(b.begin(), b.end(), e)) return state;
  }
  heat_bath_update(state.current, s, e, u);
  return state;
}

namespace {

std::vector<EdgeId> scan_order(const WeightedGraph& g, const std::optional<BoundaryCondition>& boundary) {
  if (boundary) return boundary->region;
  std::vector<EdgeId> all(g.edge_count());
  for (EdgeId e = 0; e < g.edge_count(); ++e) all[e] = e;
  return all;
}

}  // namespace

double dimer_autocorrelation_time(const WeightedGraph& g, const DisorderSample& s,
                                  const std::optional<BoundaryCondition>& boundary, std::int64_t pilot_sweeps,
                                  std::uint64_t seed) {
  ChainState state = initial_state(g, boundary);
  const auto order = scan_order(g, boundary);
  SplitMix64 rng(seed);
  std::vector<double> series;
  series.reserve(pilot_sweeps);
  for (std::int64_t t = 0; t < pilot_sweeps; ++t) {
    for (EdgeId e : order) heat_bath_update(state.current, s, e, rng.uniform());
    series.push_back(state.current.size());
  }
  // discard the first half as warm-up, then batch means over the rest
  series.erase(series.begin(), series.begin() + static_cast<std::ptrdiff_t>(series.size() / 2));
  const std::size_t n = series.size();
  if (n < 16) return 1.0;
  const std::size_t batch = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n))));
  const std::size_t batches = n / batch;
  double mean = 0.0;
  for (std::size_t i = 0; i < batches * batch; ++i) mean += series[i];
  mean /= static_cast<double>(batches * batch);
  double var = 0.0, var_batch = 0.0;
  for (std::size_t i = 0; i < batches * batch; ++i) var += (series[i] - mean) * (series[i] - mean);
  var /= static_cast<double>(batches * batch - 1);
  for (std::size_t b = 0; b < batches; ++b) {
    double bm = 0.0;
    for (std::size_t i = 0; i < batch; ++i) bm += series[b * batch + i];
    bm /= static_cast<double>(batch);
    var_batch += (bm - mean) * (bm - mean);
  }
  var_batch /= static_cast<double>(batches - 1);
  if (var <= 0.0) return 1.0;
  return std::max(1.0, static_cast<double>(batch) * var_batch / var);
}

void run_chain(const WeightedGraph& g, const DisorderSample& s, const std::optional<BoundaryCondition>& boundary,
               const ChainOptions& options, const std::function<void(const Matching&)>& visit) {
  if (options.sweeps < 1) throw ValidationError("run_chain: sweeps must be >= 1");
  ChainState state = initial_state(g, boundary);
  const auto order = scan_order(g, boundary);
  std::int64_t burn_in = options.burn_in;
  if (burn_in < 0)
    burn_in = static_cast<std::int64_t>(
        std::ceil(10.0 * dimer_autocorrelation_time(g, s, boundary, 2000, derive_seed(options.seed, 0xb1))));
  SplitMix64 rng(options.seed);
  for (std::int64_t t = 0; t < burn_in + options.sweeps; ++t) {
    for (EdgeId e : order) heat_bath_update(state.current, s, e, rng.uniform());
    ++state.sweep_count;
    if (t >= burn_in) visit(state.current);
  }
}

// ---------------------------------------------------------------------------

ConditionalSampler::ConditionalSampler(const WeightedGraph& g, const DisorderSample& s, const BoundaryCondition& bc,
                                       SamplerKind kind, std::int64_t chain_sweeps)
    : graph_(&g), sample_(&s), bc_(bc), system_(condition(g, s, bc)), kind_(kind), chain_sweeps_(chain_sweeps) {
  if (kind_ == SamplerKind::automatic)
    kind_ = static_cast<int>(system_.edges.size()) <= kEnumerationEdgeLimit ? SamplerKind::enumeration
                                                                           : SamplerKind::recursion;
  if (kind_ == SamplerKind::recursion) {
    engine_.emplace(g, s, system_.vertices, system_.edges);
    engine_->log_z();
  } else if (kind_ == SamplerKind::enumeration) {
    if (static_cast<int>(system_.edges.size()) > kEnumerationEdgeLimit)
      throw SizeError("exact sampling: " + std::to_string(system_.edges.size()) +
                      " unforced edges exceeds the enumeration guard");
    std::vector<double> log_weights;
    Matching m(g);
    std::vector<EdgeId> chosen;
    const auto& edges = system_.edges;
    std::function<void(std::size_t)> walk = [&](std::size_t i) {
      if (i == edges.size()) {
        double lw = 0.0;
        for (EdgeId e : chosen) lw += s.edge_weights[e];
        for (Vertex x : system_.vertices)
          if (!m.is_matched(x)) lw += s.vertex_weights[x];
        log_weights.push_back(lw);
        configs_.push_back(chosen);
        return;
      }
      walk(i + 1);
      if (m.endpoints_free(edges[i])) {
        m.add(edges[i]);
        chosen.push_back(edges[i]);
        walk(i + 1);
        chosen.pop_back();
        m.remove(edges[i]);
      }
    };
    walk(0);
    const double log_z = log_sum_exp(log_weights);
    double acc = 0.0;
    for (double lw : log_weights) cdf_.push_back(acc += std::exp(lw - log_z));
  }
}

Matching ConditionalSampler::draw(SplitMix64& rng) {
  switch (kind_) {
    case SamplerKind::enumeration: {
      const double u = rng.uniform() * cdf_.back();
      const auto idx = std::min<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin(), cdf_.size() - 1);
      auto edges = configs_[idx];
      const auto present = bc_.present_edges();
      edges.insert(edges.end(), present.begin(), present.end());
      return Matching::from_edges(*graph_, edges);
    }
    case SamplerKind::recursion: {
      Matching m = engine_->sample(rng);
      for (EdgeId e : bc_.present_edges()) m.add(e);
      return m;
    }
    default: {
      ChainState state = initial_state(*graph_, bc_);
      for (std::int64_t t = 0; t < chain_sweeps_; ++t)
        for (EdgeId e : bc_.region) heat_bath_update(state.current, *sample_, e, rng.uniform());
      return state.current;
    }
  }
}

Matching exact_conditional_sample(const WeightedGraph& g, const DisorderSample& s, const BoundaryCondition& bc,
                                  std::uint64_t seed) {
  ConditionalSampler sampler(g, s, bc, SamplerKind::enumeration, 0);
  SplitMix64 rng(seed);
  return sampler.draw(rng);
}

// ---------------------------------------------------------------------------

DisagreementReport symmetric_difference_paths(const Matching& m1, const Matching& m2,
                                              const std::vector<EdgeId>& boundary) {
  const WeightedGraph& g = m1.graph();
  if (&g != &m2.graph()) throw ValidationError("symmetric difference: matchings live on different graphs");
  const auto on_boundary = edge_flags(g.edge_count(), boundary);
  std::vector<std::uint8_t> diff(g.edge_count(), 0), seen(g.edge_count(), 0);
  for (EdgeId e = 0; e < g.edge_count(); ++e) diff[e] = m1.contains(e) != m2.contains(e);

  // the other difference edge at vertex x, besides `from`
  auto next_at = [&](Vertex x, EdgeId from) {
    for (EdgeId f : g.incident(x))
      if (f != from && diff[f]) return f;
    return -1;
  };
  auto degree = [&](Vertex x) {
    int d = 0;
    for (EdgeId f : g.incident(x)) d += diff[f];
    return d;
  };

  DisagreementReport report;
  auto walk_from = [&](EdgeId start, Vertex toward) {
    DisagreementComponent comp;
    EdgeId e = start;
    Vertex x = toward;
    while (e >= 0 && !seen[e]) {
      seen[e] = 1;
      comp.edges.push_back(e);
      const EdgeId f = next_at(x, e);
      if (f >= 0 && f == start) comp.cycle = true;
      if (f >= 0 && !seen[f]) x = g.edge(f).other(x);
      e = f;
    }
    for (std::size_t i = 0; i + 1 < comp.edges.size(); ++i)
      if (m1.contains(comp.edges[i]) == m1.contains(comp.edges[i + 1])) comp.alternating = false;
    for (EdgeId f : comp.edges) comp.touches_boundary = comp.touches_boundary || on_boundary[f];
    report.reached_boundary = report.reached_boundary || comp.touches_boundary;
    report.max_path_length = std::max(report.max_path_length, static_cast<int>(comp.edges.size()));
    report.components.push_back(std::move(comp));
  };
  // paths: start at an endpoint of degree one
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    if (!diff[e] || seen[e]) continue;
    const Edge& ed = g.edge(e);
    if (degree(ed.u) == 1) walk_from(e, ed.v);
    else if (degree(ed.v) == 1) walk_from(e, ed.u);
  }
  // what remains are cycles
  for (EdgeId e = 0; e < g.edge_count(); ++e)
    if (diff[e] && !seen[e]) walk_from(e, g.edge(e).v);
  return report;
}

bool has_disagreement_path(const Matching& m1, const Matching& m2, EdgeId e, const std::vector<EdgeId>& boundary) {
  const WeightedGraph& g = m1.graph();
  const auto on_boundary = edge_flags(g.edge_count(), boundary);
  std::vector<std::uint8_t> visited(g.edge_count(), 0);
  std::deque<EdgeId> queue;
  auto push_neighbors = [&](EdgeId from) {
    for (Vertex x : {g.edge(from).u, g.edge(from).v}) {
      for (EdgeId f : g.incident(x)) {
        if (f == from || visited[f] || m1.contains(f) == m2.contains(f)) continue;
        visited[f] = 1;
        queue.push_back(f);
      }
    }
  };
  visited[e] = 1;
  push_neighbors(e);
  while (!queue.empty()) {
    const EdgeId f = queue.front();
    queue.pop_front();
    if (on_boundary[f]) return true;
    push_neighbors(f);
  }
  return false;
}

Estimate disagreement_probability(const WeightedGraph& g, const DisorderSample& s, EdgeId e, int radius,
                                  const BoundaryCondition& bc1, const BoundaryCondition& bc2,
                                  const CouplingOptions& options) {
  if (options.replicas < 1) throw ValidationError("disagreement: replicas must be >= 1");
  const auto region = ball(g, SiteIndex::edge(e), radius).edge_ids();
  if (bc1.region != region || bc2.region != region)
    throw ValidationError("disagreement: boundary conditions must be defined on the edges of ball(e, R)");
  bc1.validate(g);
  bc2.validate(g);
  Estimate est;
  est.replicas = options.replicas;
  if (bc1.boundary.empty()) return est;  // nothing to reach

  ConditionalSampler first(g, s, bc1, options.sampler, options.chain_sweeps);
  ConditionalSampler second(g, s, bc2, options.sampler, options.chain_sweeps);
  std::int64_t hits = 0;
  for (std::int64_t r = 0; r < options.replicas; ++r) {
    SplitMix64 rng1(derive_seed(options.seed, static_cast<std::uint64_t>(r), 1));
    SplitMix64 rng2(derive_seed(options.seed, static_cast<std::uint64_t>(r), options.common_random_numbers ? 1 : 2));
    const Matching m1 = first.draw(rng1);
    const Matching m2 = second.draw(rng2);
    hits += has_disagreement_path(m1, m2, e, bc1.boundary);
  }
  const double n = static_cast<double>(options.replicas);
  est.value = static_cast<double>(hits) / n;
  est.std_error = std::sqrt(est.value * (1.0 - est.value) / n);
  return est;
}

}  // namespace mdm
