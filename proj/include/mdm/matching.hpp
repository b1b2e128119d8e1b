#pragma once

#include <cstdint>
#include <vector>

#include "mdm/graph.hpp"

namespace mdm {

/// A set of pairwise vertex-disjoint edges of a graph (a dimer configuration).
/// Keeps a per-vertex record of the covering edge so hard-core checks are O(1).
class Matching {
 public:
  Matching() = default;
  explicit Matching(const WeightedGraph& g);

  /// Throws ValidationError if two of the edges share a vertex.
  static Matching from_edges(const WeightedGraph& g, const std::vector<EdgeId>& edges);

  const WeightedGraph& graph() const { return *graph_; }
  bool contains(EdgeId e) const { return member_[e] != 0; }
  bool is_matched(Vertex x) const { return cover_[x] >= 0; }
  /// Edge covering x, or -1.
  EdgeId covering_edge(Vertex x) const { return cover_[x]; }
  int size() const { return size_; }
  bool empty() const { return size_ == 0; }

  /// Whether e could be added without violating the hard-core constraint,
  /// ignoring e itself.
  bool endpoints_free(EdgeId e) const;

  void add(EdgeId e);
  void remove(EdgeId e);

  std::vector<EdgeId> edges() const;
  /// Bit e set iff e is in the matching; requires |E| <= 64.
  std::uint64_t bitmask() const;

  friend bool operator==(const Matching& a, const Matching& b) { return a.member_ == b.member_; }

 private:
  const WeightedGraph* graph_ = nullptr;
  std::vector<std::uint8_t> member_;
  std::vector<EdgeId> cover_;
  int size_ = 0;
};

/// True iff no two of the edges share a vertex.
bool is_matching(const WeightedGraph& g, const std::vector<EdgeId>& edges);

}  // namespace mdm
