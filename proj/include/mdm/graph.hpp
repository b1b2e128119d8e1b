#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace mdm {

using Vertex = int;
using EdgeId = int;

struct Edge {
  Vertex u;
  Vertex v;

  Vertex other(Vertex x) const { return x == u ? v : u; }
  bool touches(Vertex x) const { return x == u || x == v; }
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Column layout of a strip graph P_length x H, where H is a path or a cycle
/// on rung_width vertices. Vertex (column c, row r) has index c * rung_width + r.
struct StripLayout {
  int length = 0;
  int rung_width = 0;
  bool periodic_rung = false;

  Vertex vertex(int column, int row) const { return column * rung_width + row; }
};

/// Vertex or edge, the two kinds of sites carrying disorder.
struct SiteIndex {
  enum class Kind : std::uint8_t { vertex, edge };
  Kind kind;
  int index;

  static SiteIndex vertex(Vertex x) { return {Kind::vertex, x}; }
  static SiteIndex edge(EdgeId e) { return {Kind::edge, e}; }
  bool is_vertex() const { return kind == Kind::vertex; }
  bool is_edge() const { return kind == Kind::edge; }
  friend bool operator==(const SiteIndex&, const SiteIndex&) = default;
};

/// Distance between sites in different components.
inline constexpr int kUnreachable = std::numeric_limits<int>::max();

/// Finite simple graph with dense, stable vertex and edge indices. Immutable
/// after construction.
class WeightedGraph {
 public:
  WeightedGraph() = default;

  /// Throws ValidationError on self-loops, duplicate edges or out-of-range
  /// endpoints.
  WeightedGraph(int vertex_count, std::vector<Edge> edges);

  int vertex_count() const { return vertex_count_; }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(EdgeId e) const { return edges_[e]; }
  const std::vector<EdgeId>& incident(Vertex x) const { return incident_[x]; }
  int degree(Vertex x) const { return static_cast<int>(incident_[x].size()); }
  int max_degree() const { return max_degree_; }

  /// Index of the edge {u, v}, if present.
  std::optional<EdgeId> find_edge(Vertex u, Vertex v) const;
  bool adjacent_edges(EdgeId a, EdgeId b) const;

  const std::optional<StripLayout>& strip() const { return strip_; }
  /// Column of a vertex in the strip layout.
  int column_of(Vertex x) const { return x / strip_->rung_width; }
  int row_of(Vertex x) const { return x % strip_->rung_width; }

  std::string description;

 private:
  friend WeightedGraph build_strip(int, int, bool);
  friend WeightedGraph build_grid(int, int, bool);

  int vertex_count_ = 0;
  int max_degree_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<EdgeId>> incident_;
  std::optional<StripLayout> strip_;
};

/// Induced subgraph of a parent graph, stored as masks over the parent's
/// indices. Holds a pointer to the parent, which must outlive the view.
struct SubgraphView {
  const WeightedGraph* parent = nullptr;
  std::vector<bool> vertex_mask;
  std::vector<bool> edge_mask;

  int vertex_count() const;
  int edge_count() const;
  std::vector<Vertex> vertices() const;
  std::vector<EdgeId> edge_ids() const;
};

/// width x height lattice with 4-neighbour adjacency. Open grids are strips
/// of length `width` and rung width `height`, so the transfer engine applies.
WeightedGraph build_grid(int width, int height, bool periodic);
WeightedGraph build_strip(int length, int rung_width, bool periodic_rung);
WeightedGraph build_path(int n);
WeightedGraph build_cycle(int n);
/// Vertex-disjoint union; vertices and edges of `b` are shifted after `a`'s.
WeightedGraph disjoint_union(const WeightedGraph& a, const WeightedGraph& b);

/// Parses "grid:WxH", "torus:WxH", "strip:LxW", "cylinder:LxW", "cycle:N",
/// "path:N", or a path to a JSON file ending in ".json".
WeightedGraph parse_graph_spec(const std::string& spec);

nlohmann::json graph_to_json(const WeightedGraph& g);
WeightedGraph graph_from_json(const nlohmann::json& j);

/// BFS distances from a set of sources; kUnreachable where not reached.
std::vector<int> bfs_distances(const WeightedGraph& g, const std::vector<Vertex>& sources);

/// Induced subgraph on vertices within distance R of the center vertex, or of
/// either endpoint when the center is an edge.
SubgraphView ball(const WeightedGraph& g, SiteIndex center, int radius);

int site_distance(const WeightedGraph& g, SiteIndex a, SiteIndex b);

/// Psi_G(R) = max over vertices x of |V(ball(x, R))|.
int volume_growth(const WeightedGraph& g, int radius);

/// Outer edge boundary: edges outside `region` sharing a vertex with an edge in it.
std::vector<EdgeId> edge_boundary(const WeightedGraph& g, const std::vector<EdgeId>& region);

/// Largest finite vertex eccentricity over all vertices (0 for empty graphs).
int diameter(const WeightedGraph& g);

}  // namespace mdm
