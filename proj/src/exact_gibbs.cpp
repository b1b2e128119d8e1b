#include "mdm/exact_gibbs.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "mdm/error.hpp"

namespace mdm {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double top = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

double matching_log_weight(const DisorderSample& s, const Matching& m) {
  const WeightedGraph& g = m.graph();
  double total = 0.0;
  for (EdgeId e = 0; e < g.edge_count(); ++e)
    if (m.contains(e)) total += s.edge_weights[e];
  for (Vertex x = 0; x < g.vertex_count(); ++x)
    if (!m.is_matched(x)) total += s.vertex_weights[x];
  return total;
}

namespace {

void enumerate_from(EdgeId next, Matching& current, const std::function<void(const Matching&)>& visit) {
  const WeightedGraph& g = current.graph();
  if (next == g.edge_count()) {
    visit(current);
    return;
  }
  enumerate_from(next + 1, current, visit);
  if (current.endpoints_free(next)) {
    current.add(next);
    enumerate_from(next + 1, current, visit);
    current.remove(next);
  }
}

}  // namespace

void for_each_matching(const WeightedGraph& g, const std::function<void(const Matching&)>& visit) {
  if (g.edge_count() > kEnumerationEdgeLimit)
    throw SizeError("enumeration: " + std::to_string(g.edge_count()) + " edges exceeds the guard of " +
                    std::to_string(kEnumerationEdgeLimit));
  Matching current(g);
  enumerate_from(0, current, visit);
}

std::vector<Matching> enumerate_matchings(const WeightedGraph& g) {
  std::vector<Matching> out;
  for_each_matching(g, [&](const Matching& m) { out.push_back(m); });
  return out;
}

double log_partition_enumeration(const WeightedGraph& g, const DisorderSample& s) {
  std::vector<double> log_weights;
  for_each_matching(g, [&](const Matching& m) { log_weights.push_back(matching_log_weight(s, m)); });
  return log_sum_exp(log_weights);
}

EnumerationSummary enumeration_summary(const WeightedGraph& g, const DisorderSample& s) {
  const int m = g.edge_count();
  EnumerationSummary out;
  GibbsSummary& sum = out.summary;
  sum.log_z = log_partition_enumeration(g, s);
  sum.edge_marginals.assign(m, 0.0);
  sum.vertex_unmatched.assign(g.vertex_count(), 0.0);
  out.edge_two_point.assign(static_cast<std::size_t>(m) * m, 0.0);
  double second = 0.0;
  for_each_matching(g, [&](const Matching& mt) {
    const double p = std::exp(matching_log_weight(s, mt) - sum.log_z);
    const auto edges = mt.edges();
    for (EdgeId a : edges) {
      sum.edge_marginals[a] += p;
      for (EdgeId b : edges) out.edge_two_point[static_cast<std::size_t>(a) * m + b] += p;
    }
    for (Vertex x = 0; x < g.vertex_count(); ++x)
      if (!mt.is_matched(x)) sum.vertex_unmatched[x] += p;
    sum.dimer_mean += p * mt.size();
    second += p * mt.size() * mt.size();
  });
  sum.dimer_gibbs_variance = std::max(0.0, second - sum.dimer_mean * sum.dimer_mean);
  return out;
}

// ---------------------------------------------------------------------------
// PartitionEngine

std::size_t PartitionEngine::KeyHash::operator()(const Key& k) const noexcept {
  std::uint64_t h = 0;
  for (std::uint64_t word : k) h = mix64(h ^ word);
  return static_cast<std::size_t>(h);
}

PartitionEngine::PartitionEngine(const WeightedGraph& g, const DisorderSample& s)
    : PartitionEngine(g, s, [&] {
        std::vector<Vertex> v(g.vertex_count());
        std::iota(v.begin(), v.end(), 0);
        return v;
      }(), [&] {
        std::vector<EdgeId> e(g.edge_count());
        std::iota(e.begin(), e.end(), 0);
        return e;
      }()) {}

PartitionEngine::PartitionEngine(const WeightedGraph& g, const DisorderSample& s, const std::vector<Vertex>& vertices,
                                 const std::vector<EdgeId>& edges)
    : graph_(&g), local_vertex_(g.vertex_count(), -1), local_edge_(g.edge_count(), -1) {
  if (static_cast<int>(s.edge_weights.size()) != g.edge_count() ||
      static_cast<int>(s.vertex_weights.size()) != g.vertex_count())
    throw ValidationError("engine: disorder sample does not match the graph");
  std::vector<Vertex> sorted = vertices;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (static_cast<int>(sorted.size()) > kRecursionVertexLimit)
    throw SizeError("engine: " + std::to_string(sorted.size()) + " vertices exceeds the limit of " +
                    std::to_string(kRecursionVertexLimit));
  for (Vertex x : sorted) {
    local_vertex_[x] = static_cast<int>(parent_vertex_.size());
    parent_vertex_.push_back(x);
    vertex_weight_.push_back(s.vertex_weights[x]);
  }
  neighbors_.resize(parent_vertex_.size());
  for (EdgeId e : edges) {
    if (local_edge_[e] >= 0) continue;
    const Edge& ed = g.edge(e);
    const int a = local_vertex_[ed.u], b = local_vertex_[ed.v];
    if (a < 0 || b < 0) throw ValidationError("engine: edge " + std::to_string(e) + " leaves the vertex set");
    const int local = static_cast<int>(parent_edge_.size());
    local_edge_[e] = local;
    parent_edge_.push_back(e);
    edge_weight_.push_back(s.edge_weights[e]);
    neighbors_[a].push_back({b, local});
    neighbors_[b].push_back({a, local});
  }
}

PartitionEngine::Key PartitionEngine::full_key() const {
  Key key{};
  for (std::size_t i = 0; i < parent_vertex_.size(); ++i) key[i / 64] |= std::uint64_t{1} << (i % 64);
  return key;
}

int PartitionEngine::solve(const Key& key) {
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;

  int lowest = -1;
  for (int w = 0; w < 4; ++w) {
    if (key[w]) {
      lowest = w * 64 + std::countr_zero(key[w]);
      break;
    }
  }
  if (lowest < 0) {
    const int idx = static_cast<int>(nodes_.size());
    nodes_.push_back({0.0, 0.0, 0.0, static_cast<int>(parent_vertex_.size()), static_cast<int>(children_.size()), 0});
    memo_.emplace(key, idx);
    return idx;
  }

  auto has = [](const Key& k, int v) { return (k[v / 64] >> (v % 64)) & 1U; };
  auto drop = [](Key& k, int v) { k[v / 64] &= ~(std::uint64_t{1} << (v % 64)); };

  Key rest = key;
  drop(rest, lowest);
  std::vector<Child> local;
  local.reserve(neighbors_[lowest].size() + 1);
  local.push_back({-1, solve(rest), vertex_weight_[lowest]});
  for (const Neighbor& nb : neighbors_[lowest]) {
    if (!has(rest, nb.vertex)) continue;
    Key next = rest;
    drop(next, nb.vertex);
    local.push_back({nb.edge, solve(next), edge_weight_[nb.edge]});
  }

  double top = -std::numeric_limits<double>::infinity();
  for (const Child& c : local) top = std::max(top, c.log_weight + nodes_[c.node].log_z);
  double total = 0.0, m1 = 0.0, m2 = 0.0;
  for (const Child& c : local) {
    const Node& child = nodes_[c.node];
    const double p = std::exp(c.log_weight + child.log_z - top);
    const double k = c.local_edge >= 0 ? 1.0 : 0.0;
    total += p;
    m1 += p * (child.m1 + k);
    m2 += p * (child.m2 + 2.0 * k * child.m1 + k * k);
  }
  const int idx = static_cast<int>(nodes_.size());
  nodes_.push_back({top + std::log(total), m1 / total, m2 / total, lowest, static_cast<int>(children_.size()),
                    static_cast<int>(local.size())});
  children_.insert(children_.end(), local.begin(), local.end());
  memo_.emplace(key, idx);
  return idx;
}

double PartitionEngine::log_z() { return nodes_[solve(full_key())].log_z; }

double PartitionEngine::log_z_without(std::span<const Vertex> removed) {
  Key key = full_key();
  for (Vertex x : removed) {
    const int local = local_vertex_[x];
    if (local >= 0) key[local / 64] &= ~(std::uint64_t{1} << (local % 64));
  }
  return nodes_[solve(key)].log_z;
}

DimerMoments PartitionEngine::moments() {
  const Node& root = nodes_[solve(full_key())];
  return {root.log_z, root.m1, std::max(0.0, root.m2 - root.m1 * root.m1)};
}

PartitionEngine::Marginals PartitionEngine::marginals() {
  const int root = solve(full_key());
  Marginals out{std::vector<double>(graph_->edge_count(), 0.0), std::vector<double>(graph_->vertex_count(), 1.0)};
  for (Vertex x : parent_vertex_) out.vertex_unmatched[x] = 0.0;

  // Children always have a larger lowest vertex than their parent, so sorting
  // by lowest vertex is a topological order of the elimination DAG.
  std::vector<int> order(nodes_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return nodes_[a].lowest < nodes_[b].lowest; });
  std::vector<double> reach(nodes_.size(), 0.0);
  reach[root] = 1.0;
  for (int idx : order) {
    const Node& node = nodes_[idx];
    if (reach[idx] == 0.0 || node.child_count == 0) continue;
    for (int c = node.first_child; c < node.first_child + node.child_count; ++c) {
      const Child& ch = children_[c];
      const double q = reach[idx] * std::exp(ch.log_weight + nodes_[ch.node].log_z - node.log_z);
      reach[ch.node] += q;
      if (ch.local_edge >= 0) out.edge[parent_edge_[ch.local_edge]] += q;
      else out.vertex_unmatched[parent_vertex_[node.lowest]] += q;
    }
  }
  return out;
}

Matching PartitionEngine::sample(SplitMix64& rng) {
  Matching m(*graph_);
  int idx = solve(full_key());
  while (nodes_[idx].child_count > 0) {
    const Node& node = nodes_[idx];
    double u = rng.uniform();
    int chosen = node.first_child + node.child_count - 1;
    for (int c = node.first_child; c < node.first_child + node.child_count; ++c) {
      u -= std::exp(children_[c].log_weight + nodes_[children_[c].node].log_z - node.log_z);
      if (u < 0.0) {
        chosen = c;
        break;
      }
    }
    if (children_[chosen].local_edge >= 0) m.add(parent_edge_[children_[chosen].local_edge]);
    idx = children_[chosen].node;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Free functions

double log_partition(const WeightedGraph& g, const DisorderSample& s) { return PartitionEngine(g, s).log_z(); }

double edge_marginal(const WeightedGraph& g, const DisorderSample& s, EdgeId e) {
  PartitionEngine engine(g, s);
  const Edge& ed = g.edge(e);
  const std::array<Vertex, 2> removed{ed.u, ed.v};
  return std::exp(s.edge_weights[e] + engine.log_z_without(removed) - engine.log_z());
}

double vertex_unmatched_marginal(const WeightedGraph& g, const DisorderSample& s, Vertex x) {
  PartitionEngine engine(g, s);
  const std::array<Vertex, 1> removed{x};
  return std::exp(s.vertex_weights[x] + engine.log_z_without(removed) - engine.log_z());
}

double two_point(const WeightedGraph& g, const DisorderSample& s, SiteIndex a, SiteIndex b) {
  if (a == b) throw ValidationError("two_point: sites must differ");
  std::vector<Vertex> removed;
  double log_weight = 0.0;
  for (SiteIndex site : {a, b}) {
    if (site.is_edge()) {
      removed.push_back(g.edge(site.index).u);
      removed.push_back(g.edge(site.index).v);
    } else {
      removed.push_back(site.index);
    }
    log_weight += s.weight(site);
  }
  std::vector<Vertex> unique = removed;
  std::sort(unique.begin(), unique.end());
  if (std::adjacent_find(unique.begin(), unique.end()) != unique.end()) return 0.0;  // sites share a vertex
  PartitionEngine engine(g, s);
  return std::exp(log_weight + engine.log_z_without(removed) - engine.log_z());
}

GibbsSummary gibbs_summary(const WeightedGraph& g, const DisorderSample& s) {
  PartitionEngine engine(g, s);
  const DimerMoments mom = engine.moments();
  auto marg = engine.marginals();
  GibbsSummary out;
  out.log_z = mom.log_z;
  out.edge_marginals = std::move(marg.edge);
  out.vertex_unmatched = std::move(marg.vertex_unmatched);
  out.dimer_mean = mom.mean;
  out.dimer_gibbs_variance = mom.variance;
  return out;
}

DimerMoments gibbs_dimer_moments(const WeightedGraph& g, const DisorderSample& s) {
  return PartitionEngine(g, s).moments();
}

nlohmann::json to_json(const GibbsSummary& summary) {
  return {{"log_z", summary.log_z},
          {"edge_marginals", summary.edge_marginals},
          {"vertex_unmatched", summary.vertex_unmatched},
          {"dimer_mean", summary.dimer_mean},
          {"dimer_gibbs_variance", summary.dimer_gibbs_variance}};
}

// ---------------------------------------------------------------------------
// Boundary conditions

namespace {

std::vector<EdgeId> normalized(std::vector<EdgeId> region) {
  std::sort(region.begin(), region.end());
  region.erase(std::unique(region.begin(), region.end()), region.end());
  return region;
}

}  // namespace

BoundaryCondition BoundaryCondition::all_zero(const WeightedGraph& g, std::vector<EdgeId> region) {
  BoundaryCondition bc;
  bc.region = normalized(std::move(region));
  bc.boundary = edge_boundary(g, bc.region);
  bc.assignment.assign(bc.boundary.size(), 0);
  return bc;
}

BoundaryCondition BoundaryCondition::greedy_maximal(const WeightedGraph& g, std::vector<EdgeId> region) {
  BoundaryCondition bc = all_zero(g, std::move(region));
  std::vector<std::uint8_t> used(g.vertex_count(), 0);
  for (std::size_t i = 0; i < bc.boundary.size(); ++i) {
    const Edge& e = g.edge(bc.boundary[i]);
    if (used[e.u] || used[e.v]) continue;
    used[e.u] = used[e.v] = 1;
    bc.assignment[i] = 1;
  }
  return bc;
}

BoundaryCondition BoundaryCondition::random_admissible(const WeightedGraph& g, std::vector<EdgeId> region,
                                                       double density, SplitMix64& rng) {
  BoundaryCondition bc = all_zero(g, std::move(region));
  std::vector<std::size_t> order(bc.boundary.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::uint8_t> used(g.vertex_count(), 0);
  for (std::size_t i : order) {
    const Edge& e = g.edge(bc.boundary[i]);
    if (used[e.u] || used[e.v] || rng.uniform() >= density) continue;
    used[e.u] = used[e.v] = 1;
    bc.assignment[i] = 1;
  }
  return bc;
}

std::vector<EdgeId> BoundaryCondition::present_edges() const {
  std::vector<EdgeId> out;
  for (std::size_t i = 0; i < boundary.size(); ++i)
    if (assignment[i]) out.push_back(boundary[i]);
  return out;
}

bool BoundaryCondition::admissible(const WeightedGraph& g) const { return is_matching(g, present_edges()); }

void BoundaryCondition::validate(const WeightedGraph& g) const {
  for (EdgeId e : region)
    if (e < 0 || e >= g.edge_count()) throw ValidationError("boundary condition: region edge out of range");
  if (assignment.size() != boundary.size()) throw ValidationError("boundary condition: assignment length mismatch");
  if (normalized(region) != region || edge_boundary(g, region) != boundary)
    throw ValidationError("boundary condition: boundary is not the outer edge boundary of the region");
  if (!admissible(g)) throw ValidationError("boundary condition: present boundary edges do not form a matching");
}

ConditionedSystem condition(const WeightedGraph& g, const DisorderSample& s, const BoundaryCondition& bc) {
  bc.validate(g);
  std::vector<std::uint8_t> blocked(g.vertex_count(), 0), in_region(g.vertex_count(), 0);
  ConditionedSystem sys;
  for (EdgeId e : bc.present_edges()) {
    blocked[g.edge(e).u] = blocked[g.edge(e).v] = 1;
    sys.log_weight_offset += s.edge_weights[e];
  }
  for (EdgeId e : bc.region) in_region[g.edge(e).u] = in_region[g.edge(e).v] = 1;
  for (Vertex x = 0; x < g.vertex_count(); ++x)
    if (in_region[x] && !blocked[x]) sys.vertices.push_back(x);
  for (EdgeId e : bc.region)
    if (!blocked[g.edge(e).u] && !blocked[g.edge(e).v]) sys.edges.push_back(e);
  // outer endpoints of absent boundary edges are unmatched in the finite system
  std::vector<std::uint8_t> counted(g.vertex_count(), 0);
  for (EdgeId e : bc.boundary) {
    for (Vertex x : {g.edge(e).u, g.edge(e).v}) {
      if (!in_region[x] && !blocked[x] && !counted[x]) {
        counted[x] = 1;
        sys.log_weight_offset += s.vertex_weights[x];
      }
    }
  }
  return sys;
}

GibbsSummary conditional_summary(const WeightedGraph& g, const DisorderSample& s, const BoundaryCondition& bc) {
  const ConditionedSystem sys = condition(g, s, bc);
  PartitionEngine engine(g, s, sys.vertices, sys.edges);
  const DimerMoments mom = engine.moments();
  auto marg = engine.marginals();
  const auto present = bc.present_edges();
  for (EdgeId e : present) {
    marg.edge[e] = 1.0;
    marg.vertex_unmatched[g.edge(e).u] = marg.vertex_unmatched[g.edge(e).v] = 0.0;
  }
  GibbsSummary out;
  out.log_z = mom.log_z + sys.log_weight_offset;
  out.edge_marginals = std::move(marg.edge);
  out.vertex_unmatched = std::move(marg.vertex_unmatched);
  out.dimer_mean = mom.mean + static_cast<double>(present.size());
  out.dimer_gibbs_variance = mom.variance;
  return out;
}

// ---------------------------------------------------------------------------
// Derivatives, locality, gauge

double discrete_derivative(const WeightedGraph& g, const DisorderSample& s, SiteIndex site, double new_value) {
  if (s.weight(site) == new_value) return 0.0;
  DisorderSample moved = s;
  moved.set_weight(site, new_value);
  return log_partition(g, s) - log_partition(g, moved);
}

double subgraph_log_partition(const SubgraphView& view, const DisorderSample& s) {
  return PartitionEngine(*view.parent, s, view.vertices(), view.edge_ids()).log_z();
}

double local_free_energy(const WeightedGraph& g, const DisorderSample& s, SiteIndex site, int radius) {
  if (radius < 0) throw ValidationError("local_free_energy: R must be >= 0");
  return subgraph_log_partition(ball(g, site, radius), s);
}

DisorderSample gauge_transform(const DisorderSample& s) {
  DisorderSample out = s;
  const WeightedGraph& g = *s.graph;
  for (EdgeId e = 0; e < g.edge_count(); ++e)
    out.edge_weights[e] = s.edge_weights[e] - s.vertex_weights[g.edge(e).u] - s.vertex_weights[g.edge(e).v];
  std::fill(out.vertex_weights.begin(), out.vertex_weights.end(), 0.0);
  return out;
}

}  // namespace mdm
