#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdm/disorder.hpp"
#include "mdm/graph.hpp"
#include "mdm/matching.hpp"
#include "mdm/rng.hpp"

namespace mdm {

/// Edge-count guard for brute-force enumeration.
inline constexpr int kEnumerationEdgeLimit = 24;
/// Vertex-count limit of the elimination engine (bitset key width).
inline constexpr int kRecursionVertexLimit = 256;

/// Calls `visit` once for every matching of g, including the empty one.
/// Throws SizeError when g has more than kEnumerationEdgeLimit edges.
void for_each_matching(const WeightedGraph& g, const std::function<void(const Matching&)>& visit);
std::vector<Matching> enumerate_matchings(const WeightedGraph& g);

/// Log-weight of a matching: sum of its edge weights plus the vertex weights
/// of uncovered vertices.
double matching_log_weight(const DisorderSample& s, const Matching& m);

/// Log of sum_M exp(a_M) over a list of log-weights, stable for any range.
double log_sum_exp(std::span<const double> values);

struct GibbsSummary {
  double log_z = 0.0;
  std::vector<double> edge_marginals;
  std::vector<double> vertex_unmatched;
  double dimer_mean = 0.0;
  double dimer_gibbs_variance = 0.0;
};

nlohmann::json to_json(const GibbsSummary& summary);

/// log Z with the dimer-count mean and Gibbs variance.
struct DimerMoments {
  double log_z = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

/// Exact vertex-elimination engine on a subsystem of a graph: a vertex set
/// and a set of edges with both endpoints inside it. Recursion
///   Z(S) = e^{nu_x} Z(S - x) + sum_{y ~ x, y in S} e^{w_xy} Z(S - x - y),
/// x the lowest-index vertex of S, memoized on S, all in log space. Each memo
/// node also carries the first two moments of the dimer count, and the
/// recorded elimination DAG gives all marginals in one outward pass.
///
/// Not thread-safe; use one engine per thread.
class PartitionEngine {
 public:
  /// Whole graph.
  PartitionEngine(const WeightedGraph& g, const DisorderSample& s);
  /// Subsystem; edges with an endpoint outside `vertices` are rejected.
  PartitionEngine(const WeightedGraph& g, const DisorderSample& s, const std::vector<Vertex>& vertices,
                  const std::vector<EdgeId>& edges);

  double log_z();
  /// log Z of the subsystem with the given parent vertices deleted
  /// (with their incident edges). Vertices outside the subsystem are ignored.
  double log_z_without(std::span<const Vertex> removed);

  DimerMoments moments();

  /// Parent-indexed marginals; entries for sites outside the subsystem are 0
  /// (edges) and 1 (vertices).
  struct Marginals {
    std::vector<double> edge;
    std::vector<double> vertex_unmatched;
  };
  Marginals marginals();

  /// Exact draw from the Gibbs measure of the subsystem.
  Matching sample(SplitMix64& rng);

  bool contains_vertex(Vertex x) const { return local_vertex_[x] >= 0; }
  bool contains_edge(EdgeId e) const { return local_edge_[e] >= 0; }
  std::size_t memo_size() const { return nodes_.size(); }

 private:
  using Key = std::array<std::uint64_t, 4>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };
  struct Child {
    int local_edge;  // -1: lowest vertex left unmatched
    int node;
    double log_weight;
  };
  struct Node {
    double log_z;
    double m1;
    double m2;
    int lowest;
    int first_child;
    int child_count;
  };
  struct Neighbor {
    int vertex;
    int edge;
  };

  int solve(const Key& key);
  Key full_key() const;

  const WeightedGraph* graph_;
  std::vector<int> local_vertex_;
  std::vector<int> local_edge_;
  std::vector<Vertex> parent_vertex_;
  std::vector<EdgeId> parent_edge_;
  std::vector<double> edge_weight_;
  std::vector<double> vertex_weight_;
  std::vector<std::vector<Neighbor>> neighbors_;
  std::unordered_map<Key, int, KeyHash> memo_;
  std::vector<Node> nodes_;
  std::vector<Child> children_;
};

/// log Z by vertex elimination.
double log_partition(const WeightedGraph& g, const DisorderSample& s);
/// log Z by brute-force enumeration (guarded).
double log_partition_enumeration(const WeightedGraph& g, const DisorderSample& s);

/// <1{e in M}> = e^{w_e} Z(G - x - y) / Z(G).
double edge_marginal(const WeightedGraph& g, const DisorderSample& s, EdgeId e);
/// <1{x unmatched}> = e^{nu_x} Z(G - x) / Z(G).
double vertex_unmatched_marginal(const WeightedGraph& g, const DisorderSample& s, Vertex x);

/// Joint Gibbs probability: both edges in M, both vertices unmatched, or the
/// edge in M with the vertex unmatched. Throws ValidationError if a == b.
double two_point(const WeightedGraph& g, const DisorderSample& s, SiteIndex a, SiteIndex b);

GibbsSummary gibbs_summary(const WeightedGraph& g, const DisorderSample& s);
DimerMoments gibbs_dimer_moments(const WeightedGraph& g, const DisorderSample& s);

/// Brute-force summary plus the full edge two-point matrix (row-major |E|x|E|).
struct EnumerationSummary {
  GibbsSummary summary;
  std::vector<double> edge_two_point;
};
EnumerationSummary enumeration_summary(const WeightedGraph& g, const DisorderSample& s);

/// Region F with an assignment on its outer edge boundary.
struct BoundaryCondition {
  std::vector<EdgeId> region;
  std::vector<EdgeId> boundary;            // edge_boundary(region), ascending
  std::vector<std::uint8_t> assignment;    // parallel to boundary

  /// Free boundary: every boundary edge absent.
  static BoundaryCondition all_zero(const WeightedGraph& g, std::vector<EdgeId> region);
  /// Boundary edges switched on greedily in index order while admissible.
  static BoundaryCondition greedy_maximal(const WeightedGraph& g, std::vector<EdgeId> region);
  /// Boundary edges visited in random order, each switched on with
  /// probability `density` when admissible.
  static BoundaryCondition random_admissible(const WeightedGraph& g, std::vector<EdgeId> region, double density,
                                             SplitMix64& rng);

  std::vector<EdgeId> present_edges() const;
  bool admissible(const WeightedGraph& g) const;
  /// Throws ValidationError unless the boundary matches the region and the
  /// assignment is admissible.
  void validate(const WeightedGraph& g) const;
};

/// The subsystem left after conditioning: region edges whose endpoints are not
/// covered by a present boundary edge, on the vertices of the region minus the
/// covered ones.
struct ConditionedSystem {
  std::vector<Vertex> vertices;
  std::vector<EdgeId> edges;
  /// Contribution of the boundary edges and outer boundary vertices to log Z.
  double log_weight_offset = 0.0;
};
ConditionedSystem condition(const WeightedGraph& g, const DisorderSample& s, const BoundaryCondition& bc);

/// Gibbs quantities of the matchings of (V, F + boundary(F)) that agree with
/// the assignment on the boundary. Sites outside F + boundary(F) report edge
/// marginal 0 and unmatched probability 1.
GibbsSummary conditional_summary(const WeightedGraph& g, const DisorderSample& s, const BoundaryCondition& bc);

/// Delta_i F = F(s) - F(s with site i set to new_value).
double discrete_derivative(const WeightedGraph& g, const DisorderSample& s, SiteIndex site, double new_value);

/// log Z of ball(site, R) with the weights of s restricted to it.
double local_free_energy(const WeightedGraph& g, const DisorderSample& s, SiteIndex site, int radius);
/// Same, with the ball's own engine, for subsystems that are reused.
double subgraph_log_partition(const SubgraphView& view, const DisorderSample& s);

/// w_e -> w_e - nu_x - nu_y, nu -> 0. Leaves the Gibbs measure unchanged and
/// shifts log Z by -sum_x nu_x.
DisorderSample gauge_transform(const DisorderSample& s);

}  // namespace mdm
