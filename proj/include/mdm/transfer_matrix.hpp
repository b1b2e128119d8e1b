#pragma once

#include <cstdint>
#include <vector>

#include "mdm/disorder.hpp"
#include "mdm/graph.hpp"

namespace mdm {

inline constexpr int kTransferWidthLimit = 20;

/// Column-by-column contraction for strip graphs P_L x H (H a path or cycle on
/// W vertices). The state is the set of rows whose vertex in the current
/// column is matched by a rail edge to the next column; each column operator
///   T_c(in, out) = g_c(rows not in in|out) * prod_{r in out} e^{w_rail(c,r)}
/// is rebuilt from that column's own weights, where g_c sums over matchings of
/// the rung restricted to the free rows, with e^{nu} per unmatched vertex.
///
/// Forward and backward vectors for every column boundary are cached, so any
/// single-site forced quantity costs one column contraction.
class StripEngine {
 public:
  /// Throws StructureError for graphs without a strip layout and SizeError for
  /// rung widths above kTransferWidthLimit. With `rescale` off, vectors are kept
  /// unnormalized (only safe for short strips with moderate weights).
  StripEngine(const WeightedGraph& g, const DisorderSample& s, bool rescale = true);

  double log_z() const { return log_z_; }
  double edge_marginal(EdgeId e) const;
  double vertex_unmatched(Vertex x) const;
  std::vector<double> edge_marginals() const;
  std::vector<double> vertex_unmatched_all() const;

 private:
  struct Vec {
    std::vector<double> values;
    double log_scale = 0.0;
  };

  std::vector<double> rung_table(int column, int forced_pair, int forced_free_row) const;
  double contract(int column, const std::vector<double>& rung_log, std::uint32_t required_out) const;
  void step_forward(int column, const Vec& in, Vec& out) const;
  void step_backward(int column, const Vec& next, Vec& out) const;
  std::uint32_t out_space(int column) const;

  const WeightedGraph* graph_;
  const DisorderSample* sample_;
  StripLayout layout_;
  bool rescale_;
  std::uint32_t full_;
  std::vector<std::vector<double>> rung_log_;  // log g_c per column
  std::vector<std::vector<double>> rail_log_;  // log rail factor per column and out-mask
  std::vector<std::pair<int, int>> rung_pairs_;     // row pairs joined by a rung edge
  std::vector<std::vector<EdgeId>> rung_edges_;     // per column, parallel to rung_pairs_
  std::vector<Vec> forward_;   // forward_[c]: incoming into column c
  std::vector<Vec> backward_;  // backward_[c]: completions of columns c.. given incoming
  double log_z_ = 0.0;
};

double strip_log_partition(const WeightedGraph& g, const DisorderSample& s);
double strip_edge_marginal(const WeightedGraph& g, const DisorderSample& s, EdgeId e);

}  // namespace mdm
