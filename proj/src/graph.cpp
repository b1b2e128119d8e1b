#include "mdm/graph.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <fstream>
#include <set>

#include "mdm/error.hpp"

namespace mdm {

WeightedGraph::WeightedGraph(int vertex_count, std::vector<Edge> edges)
    : vertex_count_(vertex_count), edges_(std::move(edges)), incident_(vertex_count) {
  if (vertex_count < 0) throw ValidationError("graph: negative vertex count");
  std::set<std::pair<Vertex, Vertex>> seen;
  for (EdgeId e = 0; e < edge_count(); ++e) {
    const auto [u, v] = edges_[e];
    if (u < 0 || v < 0 || u >= vertex_count || v >= vertex_count)
      throw ValidationError("graph: edge " + std::to_string(e) + " has an out-of-range endpoint");
    if (u == v) throw ValidationError("graph: self-loop at vertex " + std::to_string(u));
    if (!seen.emplace(std::min(u, v), std::max(u, v)).second)
      throw ValidationError("graph: duplicate edge {" + std::to_string(u) + "," + std::to_string(v) + "}");
    incident_[u].push_back(e);
    incident_[v].push_back(e);
  }
  for (const auto& inc : incident_) max_degree_ = std::max(max_degree_, static_cast<int>(inc.size()));
}

std::optional<EdgeId> WeightedGraph::find_edge(Vertex u, Vertex v) const {
  for (EdgeId e : incident_[u])
    if (edges_[e].other(u) == v) return e;
  return std::nullopt;
}

bool WeightedGraph::adjacent_edges(EdgeId a, EdgeId b) const {
  if (a == b) return false;
  const Edge& ea = edges_[a];
  const Edge& eb = edges_[b];
  return eb.touches(ea.u) || eb.touches(ea.v);
}

int SubgraphView::vertex_count() const {
  return static_cast<int>(std::count(vertex_mask.begin(), vertex_mask.end(), true));
}

int SubgraphView::edge_count() const {
  return static_cast<int>(std::count(edge_mask.begin(), edge_mask.end(), true));
}

std::vector<Vertex> SubgraphView::vertices() const {
  std::vector<Vertex> out;
  for (Vertex x = 0; x < static_cast<int>(vertex_mask.size()); ++x)
    if (vertex_mask[x]) out.push_back(x);
  return out;
}

std::vector<EdgeId> SubgraphView::edge_ids() const {
  std::vector<EdgeId> out;
  for (EdgeId e = 0; e < static_cast<int>(edge_mask.size()); ++e)
    if (edge_mask[e]) out.push_back(e);
  return out;
}

WeightedGraph build_strip(int length, int rung_width, bool periodic_rung) {
  if (length < 1) throw ValidationError("strip: length must be >= 1");
  if (rung_width < 1) throw ValidationError("strip: rung width must be >= 1");
  StripLayout layout{length, rung_width, periodic_rung};
  std::vector<Edge> edges;
  for (int c = 0; c < length; ++c) {
    for (int r = 0; r + 1 < rung_width; ++r) edges.push_back({layout.vertex(c, r), layout.vertex(c, r + 1)});
    // a 2-cycle would duplicate the single rung edge
    if (periodic_rung && rung_width >= 3) edges.push_back({layout.vertex(c, rung_width - 1), layout.vertex(c, 0)});
    if (c + 1 < length)
      for (int r = 0; r < rung_width; ++r) edges.push_back({layout.vertex(c, r), layout.vertex(c + 1, r)});
  }
  WeightedGraph g(length * rung_width, std::move(edges));
  g.strip_ = layout;
  g.description = (periodic_rung ? "cylinder:" : "strip:") + std::to_string(length) + "x" + std::to_string(rung_width);
  return g;
}

WeightedGraph build_grid(int width, int height, bool periodic) {
  if (width < 1) throw ValidationError("grid: width must be >= 1");
  if (height < 1) throw ValidationError("grid: height must be >= 1");
  if (!periodic) {
    WeightedGraph g = build_strip(width, height, false);
    g.description = "grid:" + std::to_string(width) + "x" + std::to_string(height);
    return g;
  }
  auto id = [height](int x, int y) { return x * height + y; };
  std::vector<Edge> edges;
  for (int x = 0; x < width; ++x) {
    for (int y = 0; y < height; ++y) {
      if (y + 1 < height) edges.push_back({id(x, y), id(x, y + 1)});
      else if (height >= 3) edges.push_back({id(x, y), id(x, 0)});
      if (x + 1 < width) edges.push_back({id(x, y), id(x + 1, y)});
      else if (width >= 3) edges.push_back({id(x, y), id(0, y)});
    }
  }
  WeightedGraph g(width * height, std::move(edges));
  g.description = "torus:" + std::to_string(width) + "x" + std::to_string(height);
  return g;
}

WeightedGraph build_path(int n) {
  WeightedGraph g = build_strip(n, 1, false);
  g.description = "path:" + std::to_string(n);
  return g;
}

WeightedGraph build_cycle(int n) {
  if (n < 3) throw ValidationError("cycle: N must be >= 3");
  WeightedGraph g = build_strip(1, n, true);
  g.description = "cycle:" + std::to_string(n);
  return g;
}

WeightedGraph disjoint_union(const WeightedGraph& a, const WeightedGraph& b) {
  std::vector<Edge> edges = a.edges();
  const int shift = a.vertex_count();
  for (const Edge& e : b.edges()) edges.push_back({e.u + shift, e.v + shift});
  WeightedGraph g(a.vertex_count() + b.vertex_count(), std::move(edges));
  g.description = a.description + "+" + b.description;
  return g;
}

namespace {

int parse_positive(std::string_view text, const std::string& field) {
  int value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw ValidationError("graph spec: " + field + " is not an integer");
  if (value < 1) throw ValidationError("graph spec: " + field + " must be >= 1, got " + std::to_string(value));
  return value;
}

std::pair<int, int> parse_dims(std::string_view body, const std::string& kind, const char* first, const char* second) {
  const auto x = body.find('x');
  if (x == std::string_view::npos) throw ValidationError("graph spec: " + kind + " expects AxB");
  return {parse_positive(body.substr(0, x), kind + " " + first),
          parse_positive(body.substr(x + 1), kind + " " + second)};
}

}  // namespace

WeightedGraph parse_graph_spec(const std::string& spec) {
  if (spec.size() > 5 && spec.ends_with(".json")) {
    std::ifstream in(spec);
    if (!in) throw ValidationError("graph spec: cannot open " + spec);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError("graph spec: " + spec + ": " + ex.what());
    }
    return graph_from_json(j);
  }
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw ValidationError("graph spec: expected kind:args, got '" + spec + "'");
  const std::string kind = spec.substr(0, colon);
  const std::string_view body = std::string_view(spec).substr(colon + 1);
  if (kind == "grid" || kind == "torus") {
    auto [w, h] = parse_dims(body, kind, "width", "height");
    return build_grid(w, h, kind == "torus");
  }
  if (kind == "strip" || kind == "cylinder") {
    auto [l, w] = parse_dims(body, kind, "length", "width");
    return build_strip(l, w, kind == "cylinder");
  }
  if (kind == "path") return build_path(parse_positive(body, "path N"));
  if (kind == "cycle") {
    const int n = parse_positive(body, "cycle N");
    if (n < 3) throw ValidationError("graph spec: cycle N must be >= 3");
    return build_cycle(n);
  }
  throw ValidationError("graph spec: unknown kind '" + kind + "'");
}

nlohmann::json graph_to_json(const WeightedGraph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : g.edges()) edges.push_back({e.u, e.v});
  return {{"vertices", g.vertex_count()}, {"edges", std::move(edges)}};
}

WeightedGraph graph_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("vertices") || !j.contains("edges"))
    throw ValidationError("graph json: expected {\"vertices\": n, \"edges\": [[u,v],...]}");
  std::vector<Edge> edges;
  for (const auto& pair : j.at("edges")) {
    if (!pair.is_array() || pair.size() != 2) throw ValidationError("graph json: each edge must be [u,v]");
    edges.push_back({pair[0].get<int>(), pair[1].get<int>()});
  }
  WeightedGraph g(j.at("vertices").get<int>(), std::move(edges));
  g.description = "json";
  return g;
}

std::vector<int> bfs_distances(const WeightedGraph& g, const std::vector<Vertex>& sources) {
  std::vector<int> dist(g.vertex_count(), kUnreachable);
  std::deque<Vertex> queue;
  for (Vertex s : sources) {
    if (dist[s] != 0) {
      dist[s] = 0;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const Vertex x = queue.front();
    queue.pop_front();
    for (EdgeId e : g.incident(x)) {
      const Vertex y = g.edge(e).other(x);
      if (dist[y] == kUnreachable) {
        dist[y] = dist[x] + 1;
        queue.push_back(y);
      }
    }
  }
  return dist;
}

namespace {

std::vector<Vertex> site_vertices(const WeightedGraph& g, SiteIndex site) {
  if (site.is_vertex()) return {site.index};
  const Edge& e = g.edge(site.index);
  return {e.u, e.v};
}

}  // namespace

SubgraphView ball(const WeightedGraph& g, SiteIndex center, int radius) {
  const auto dist = bfs_distances(g, site_vertices(g, center));
  SubgraphView view{&g, std::vector<bool>(g.vertex_count()), std::vector<bool>(g.edge_count())};
  for (Vertex x = 0; x < g.vertex_count(); ++x) view.vertex_mask[x] = dist[x] <= radius;
  for (EdgeId e = 0; e < g.edge_count(); ++e)
    view.edge_mask[e] = view.vertex_mask[g.edge(e).u] && view.vertex_mask[g.edge(e).v];
  return view;
}

int site_distance(const WeightedGraph& g, SiteIndex a, SiteIndex b) {
  const auto dist = bfs_distances(g, site_vertices(g, a));
  int best = kUnreachable;
  for (Vertex x : site_vertices(g, b)) best = std::min(best, dist[x]);
  return best;
}

int volume_growth(const WeightedGraph& g, int radius) {
  int best = 0;
  for (Vertex x = 0; x < g.vertex_count(); ++x) {
    const auto dist = bfs_distances(g, {x});
    best = std::max(best, static_cast<int>(std::count_if(dist.begin(), dist.end(),
                                                         [radius](int d) { return d <= radius; })));
  }
  return best;
}

std::vector<EdgeId> edge_boundary(const WeightedGraph& g, const std::vector<EdgeId>& region) {
  std::vector<bool> in_region(g.edge_count()), touched(g.vertex_count());
  for (EdgeId e : region) {
    in_region[e] = true;
    touched[g.edge(e).u] = touched[g.edge(e).v] = true;
  }
  std::vector<EdgeId> boundary;
  for (EdgeId e = 0; e < g.edge_count(); ++e)
    if (!in_region[e] && (touched[g.edge(e).u] || touched[g.edge(e).v])) boundary.push_back(e);
  return boundary;
}

int diameter(const WeightedGraph& g) {
  int best = 0;
  for (Vertex x = 0; x < g.vertex_count(); ++x)
    for (int d : bfs_distances(g, {x}))
      if (d != kUnreachable) best = std::max(best, d);
  return best;
}

}  // namespace mdm
