#include "mdm/matching.hpp"

#include "mdm/error.hpp"

namespace mdm {

Matching::Matching(const WeightedGraph& g)
    : graph_(&g), member_(g.edge_count(), 0), cover_(g.vertex_count(), -1) {}

Matching Matching::from_edges(const WeightedGraph& g, const std::vector<EdgeId>& edges) {
  Matching m(g);
  for (EdgeId e : edges) {
    if (e < 0 || e >= g.edge_count()) throw ValidationError("matching: edge index out of range");
    if (m.contains(e)) continue;
    if (!m.endpoints_free(e)) throw ValidationError("matching: edge " + std::to_string(e) + " shares a vertex");
    m.add(e);
  }
  return m;
}

bool Matching::endpoints_free(EdgeId e) const {
  const Edge& ed = graph_->edge(e);
  return (cover_[ed.u] < 0 || cover_[ed.u] == e) && (cover_[ed.v] < 0 || cover_[ed.v] == e);
}

void Matching::add(EdgeId e) {
  if (member_[e]) return;
  const Edge& ed = graph_->edge(e);
  member_[e] = 1;
  cover_[ed.u] = cover_[ed.v] = e;
  ++size_;
}

void Matching::remove(EdgeId e) {
  if (!member_[e]) return;
  const Edge& ed = graph_->edge(e);
  member_[e] = 0;
  cover_[ed.u] = cover_[ed.v] = -1;
  --size_;
}

std::vector<EdgeId> Matching::edges() const {
  std::vector<EdgeId> out;
  out.reserve(size_);
  for (EdgeId e = 0; e < static_cast<int>(member_.size()); ++e)
    if (member_[e]) out.push_back(e);
  return out;
}

std::uint64_t Matching::bitmask() const {
  if (member_.size() > 64) throw SizeError("matching: bitmask needs at most 64 edges");
  std::uint64_t bits = 0;
  for (std::size_t e = 0; e < member_.size(); ++e)
    if (member_[e]) bits |= std::uint64_t{1} << e;
  return bits;
}

bool is_matching(const WeightedGraph& g, const std::vector<EdgeId>& edges) {
  std::vector<std::uint8_t> used(g.vertex_count(), 0);
  for (EdgeId e : edges) {
    const Edge& ed = g.edge(e);
    if (used[ed.u] || used[ed.v]) return false;
    used[ed.u] = used[ed.v] = 1;
  }
  return true;
}

}  // namespace mdm
