#include "mdm/transfer_matrix.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "mdm/error.hpp"

namespace mdm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double top = std::max(a, b);
  return top + std::log(std::exp(a - top) + std::exp(b - top));
}

// Iterates the submasks of `space` (including 0).
template <class F>
void for_each_submask(std::uint32_t space, F&& f) {
  for (std::uint32_t sub = space;; sub = (sub - 1) & space) {
    f(sub);
    if (sub == 0) break;
  }
}

}  // namespace

StripEngine::StripEngine(const WeightedGraph& g, const DisorderSample& s, bool rescale)
    : graph_(&g), sample_(&s), rescale_(rescale) {
  if (!g.strip()) throw StructureError("transfer: graph '" + g.description + "' has no strip layout");
  layout_ = *g.strip();
  const int width = layout_.rung_width, length = layout_.length;
  if (width > kTransferWidthLimit)
    throw SizeError("transfer: rung width " + std::to_string(width) + " exceeds " + std::to_string(kTransferWidthLimit));
  if (static_cast<int>(s.edge_weights.size()) != g.edge_count() ||
      static_cast<int>(s.vertex_weights.size()) != g.vertex_count())
    throw ValidationError("transfer: disorder sample does not match the graph");
  full_ = (std::uint32_t{1} << width) - 1;
  const std::size_t states = std::size_t{1} << width;

  for (int r = 0; r + 1 < width; ++r) rung_pairs_.emplace_back(r, r + 1);
  if (layout_.periodic_rung && width >= 3) rung_pairs_.emplace_back(width - 1, 0);

  rung_edges_.resize(length);
  rail_log_.assign(length, std::vector<double>(states, kNegInf));
  for (int c = 0; c < length; ++c) {
    for (auto [a, b] : rung_pairs_) rung_edges_[c].push_back(*g.find_edge(layout_.vertex(c, a), layout_.vertex(c, b)));
    if (c + 1 < length) {
      std::vector<double> rail(width);
      for (int r = 0; r < width; ++r) rail[r] = s.edge_weights[*g.find_edge(layout_.vertex(c, r), layout_.vertex(c + 1, r))];
      rail_log_[c][0] = 0.0;
      for (std::uint32_t out = 1; out < states; ++out) {
        const int r = std::countr_zero(out);
        rail_log_[c][out] = rail_log_[c][out & (out - 1)] + rail[r];
      }
    } else {
      rail_log_[c][0] = 0.0;
    }
    rung_log_.push_back(rung_table(c, -1, -1));
  }

  forward_.resize(length + 1);
  backward_.resize(length + 1);
  forward_[0].values.assign(states, 0.0);
  forward_[0].values[0] = 1.0;
  for (int c = 0; c < length; ++c) step_forward(c, forward_[c], forward_[c + 1]);
  backward_[length].values.assign(states, 0.0);
  backward_[length].values[0] = 1.0;
  for (int c = length - 1; c >= 0; --c) step_backward(c, backward_[c + 1], backward_[c]);
  log_z_ = std::log(forward_[length].values[0]) + forward_[length].log_scale;
}

std::uint32_t StripEngine::out_space(int column) const { return column + 1 < layout_.length ? full_ : 0U; }

std::vector<double> StripEngine::rung_table(int column, int forced_pair, int forced_free_row) const {
  const int width = layout_.rung_width;
  const std::size_t states = std::size_t{1} << width;
  std::vector<double> table(states, kNegInf);
  table[0] = 0.0;
  for (std::uint32_t free = 1; free < states; ++free) {
    const int x = std::countr_zero(free);
    const std::uint32_t rest = free & (free - 1);
    double acc = sample_->vertex_weights[layout_.vertex(column, x)] + table[rest];
    for (std::size_t k = 0; k < rung_pairs_.size(); ++k) {
      auto [a, b] = rung_pairs_[k];
      const int y = a == x ? b : (b == x ? a : -1);
      if (y < 0 || !((rest >> y) & 1U)) continue;
      acc = lse2(acc, sample_->edge_weights[rung_edges_[column][k]] + table[rest & ~(std::uint32_t{1} << y)]);
    }
    table[free] = acc;
  }
  if (forced_pair >= 0) {
    auto [a, b] = rung_pairs_[forced_pair];
    const std::uint32_t pair = (std::uint32_t{1} << a) | (std::uint32_t{1} << b);
    const double w = sample_->edge_weights[rung_edges_[column][forced_pair]];
    std::vector<double> forced(states, kNegInf);
    for (std::uint32_t free = 0; free < states; ++free)
      if ((free & pair) == pair) forced[free] = w + table[free & ~pair];
    return forced;
  }
  if (forced_free_row >= 0) {
    const std::uint32_t bit = std::uint32_t{1} << forced_free_row;
    const double nu = sample_->vertex_weights[layout_.vertex(column, forced_free_row)];
    std::vector<double> forced(states, kNegInf);
    for (std::uint32_t free = 0; free < states; ++free)
      if (free & bit) forced[free] = nu + table[free & ~bit];
    return forced;
  }
  return table;
}

void StripEngine::step_forward(int column, const Vec& in, Vec& out) const {
  const std::size_t states = std::size_t{1} << layout_.rung_width;
  const auto& rung = rung_log_[column];
  const auto& rail = rail_log_[column];
  const double rung_top = *std::max_element(rung.begin(), rung.end());
  const double rail_top = *std::max_element(rail.begin(), rail.end());
  std::vector<double> g(states), r(states);
  for (std::size_t m = 0; m < states; ++m) {
    g[m] = std::exp(rung[m] - rung_top);
    r[m] = std::exp(rail[m] - rail_top);
  }
  out.values.assign(states, 0.0);
  out.log_scale = in.log_scale + rung_top + rail_top;
  const std::uint32_t space = out_space(column);
  for (std::uint32_t a = 0; a < states; ++a) {
    const double fa = in.values[a];
    if (fa == 0.0) continue;
    for_each_submask(space & ~a, [&](std::uint32_t b) { out.values[b] += fa * g[full_ & ~(a | b)] * r[b]; });
  }
  const double top = *std::max_element(out.values.begin(), out.values.end());
  if (top < 1e-280) {
    // underflow of the shifted factors: redo this column in log space
    std::vector<double> lnew(states, kNegInf);
    for (std::uint32_t a = 0; a < states; ++a) {
      if (in.values[a] == 0.0) continue;
      const double la = std::log(in.values[a]);
      for_each_submask(space & ~a, [&](std::uint32_t b) { lnew[b] = lse2(lnew[b], la + rung[full_ & ~(a | b)] + rail[b]); });
    }
    const double ltop = *std::max_element(lnew.begin(), lnew.end());
    for (std::size_t m = 0; m < states; ++m) out.values[m] = std::exp(lnew[m] - ltop);
    out.log_scale = in.log_scale + ltop;
    return;
  }
  if (rescale_) {
    for (double& v : out.values) v /= top;
    out.log_scale += std::log(top);
  }
}

void StripEngine::step_backward(int column, const Vec& next, Vec& out) const {
  const std::size_t states = std::size_t{1} << layout_.rung_width;
  const auto& rung = rung_log_[column];
  const auto& rail = rail_log_[column];
  const double rung_top = *std::max_element(rung.begin(), rung.end());
  const double rail_top = *std::max_element(rail.begin(), rail.end());
  std::vector<double> g(states), r(states);
  for (std::size_t m = 0; m < states; ++m) {
    g[m] = std::exp(rung[m] - rung_top);
    r[m] = std::exp(rail[m] - rail_top);
  }
  out.values.assign(states, 0.0);
  out.log_scale = next.log_scale + rung_top + rail_top;
  const std::uint32_t space = out_space(column);
  for (std::uint32_t a = 0; a < states; ++a) {
    double acc = 0.0;
    for_each_submask(space & ~a, [&](std::uint32_t b) { acc += g[full_ & ~(a | b)] * r[b] * next.values[b]; });
    out.values[a] = acc;
  }
  const double top = *std::max_element(out.values.begin(), out.values.end());
  if (top < 1e-280) {
    std::vector<double> lnew(states, kNegInf);
    for (std::uint32_t a = 0; a < states; ++a) {
      for_each_submask(space & ~a, [&](std::uint32_t b) {
        if (next.values[b] > 0.0) lnew[a] = lse2(lnew[a], rung[full_ & ~(a | b)] + rail[b] + std::log(next.values[b]));
      });
    }
    const double ltop = *std::max_element(lnew.begin(), lnew.end());
    for (std::size_t m = 0; m < states; ++m) out.values[m] = std::exp(lnew[m] - ltop);
    out.log_scale = next.log_scale + ltop;
    return;
  }
  if (rescale_) {
    for (double& v : out.values) v /= top;
    out.log_scale += std::log(top);
  }
}

double StripEngine::contract(int column, const std::vector<double>& rung_log, std::uint32_t required_out) const {
  const std::size_t states = std::size_t{1} << layout_.rung_width;
  const Vec& f = forward_[column];
  const Vec& b = backward_[column + 1];
  const auto& rail = rail_log_[column];
  std::vector<double> terms;
  const std::uint32_t space = out_space(column);
  for (std::uint32_t a = 0; a < states; ++a) {
    if (f.values[a] == 0.0) continue;
    const double la = std::log(f.values[a]);
    for_each_submask(space & ~a, [&](std::uint32_t o) {
      if ((o & required_out) != required_out || b.values[o] == 0.0) return;
      const double t = la + rung_log[full_ & ~(a | o)] + rail[o] + std::log(b.values[o]);
      if (t != kNegInf) terms.push_back(t);
    });
  }
  if (terms.empty()) return kNegInf;
  const double top = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc) + f.log_scale + b.log_scale;
}

double StripEngine::edge_marginal(EdgeId e) const {
  const Edge& ed = graph_->edge(e);
  const int cu = graph_->column_of(ed.u), cv = graph_->column_of(ed.v);
  double forced;
  if (cu == cv) {
    const auto it = std::find(rung_edges_[cu].begin(), rung_edges_[cu].end(), e);
    forced = contract(cu, rung_table(cu, static_cast<int>(it - rung_edges_[cu].begin()), -1), 0);
  } else {
    forced = contract(std::min(cu, cv), rung_log_[std::min(cu, cv)], std::uint32_t{1} << graph_->row_of(ed.u));
  }
  return std::exp(forced - log_z_);
}

double StripEngine::vertex_unmatched(Vertex x) const {
  const int c = graph_->column_of(x);
  return std::exp(contract(c, rung_table(c, -1, graph_->row_of(x)), 0) - log_z_);
}

std::vector<double> StripEngine::edge_marginals() const {
  std::vector<double> out(graph_->edge_count());
  for (EdgeId e = 0; e < graph_->edge_count(); ++e) out[e] = edge_marginal(e);
  return out;
}

std::vector<double> StripEngine::vertex_unmatched_all() const {
  std::vector<double> out(graph_->vertex_count());
  for (Vertex x = 0; x < graph_->vertex_count(); ++x) out[x] = vertex_unmatched(x);
  return out;
}

double strip_log_partition(const WeightedGraph& g, const DisorderSample& s) { return StripEngine(g, s).log_z(); }

double strip_edge_marginal(const WeightedGraph& g, const DisorderSample& s, EdgeId e) {
  return StripEngine(g, s).edge_marginal(e);
}

}  // namespace mdm
