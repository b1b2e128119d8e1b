#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "mdm/graph.hpp"

namespace mdm {

struct Gaussian {
  double mean = 0.0;
  double stddev = 1.0;
};
struct Uniform {
  double lo = 0.0;
  double hi = 1.0;
};
/// Takes value v0 with probability p and v1 otherwise.
struct TwoPoint {
  double p = 0.5;
  double v0 = 0.0;
  double v1 = 1.0;
};
struct Constant {
  double value = 0.0;
};
/// Symmetric Pareto: random sign times scale * U^(-1/alpha). E|w|^k is
/// finite iff k < alpha.
struct SymmetricPareto {
  double alpha = 3.0;
  double scale = 1.0;
};

/// Law of a single site weight. Parsed from "gaussian:0,1", "uniform:-1,1",
/// "twopoint:0.5,-1,1", "const:0", "pareto:3,1".
class WeightDistribution {
 public:
  using Variant = std::variant<Gaussian, Uniform, TwoPoint, Constant, SymmetricPareto>;

  WeightDistribution() : law_(Constant{}) {}
  /// Throws ValidationError when parameters violate the law's constraints.
  WeightDistribution(Variant law);  // NOLINT(google-explicit-constructor)

  static WeightDistribution parse(const std::string& spec);
  std::string to_string() const;

  const Variant& law() const { return law_; }

  /// False exactly for point masses.
  bool non_degenerate() const;

  /// E|w|^k, closed form where available, quadrature otherwise. Returns +inf
  /// when the moment diverges.
  double absolute_moment(double k) const;

  template <class Rng>
  double sample(Rng& rng) const;

 private:
  Variant law_;
};

/// One realization of the edge weights w_e and vertex weights nu_x on a graph.
/// Site weights are drawn from per-site streams keyed by (seed, kind, index),
/// so any subset can be redrawn without touching the others.
struct DisorderSample {
  const WeightedGraph* graph = nullptr;
  std::vector<double> edge_weights;
  std::vector<double> vertex_weights;
  WeightDistribution edge_law;
  WeightDistribution vertex_law;
  std::uint64_t seed = 0;

  double weight(SiteIndex site) const {
    return site.is_edge() ? edge_weights[site.index] : vertex_weights[site.index];
  }
  void set_weight(SiteIndex site, double value) {
    (site.is_edge() ? edge_weights : vertex_weights)[site.index] = value;
  }
};

/// Zero-weight sample (the uniform measure on matchings).
DisorderSample zero_weights(const WeightedGraph& g);

/// Sample with explicitly given weights. Throws ValidationError on length
/// mismatch or non-finite values.
DisorderSample make_sample(const WeightedGraph& g, std::vector<double> edge_weights,
                           std::vector<double> vertex_weights);

DisorderSample sample_weights(const WeightedGraph& g, const WeightDistribution& edge_law,
                              const WeightDistribution& vertex_law, std::uint64_t seed);

/// w^t = w 1{|w| <= L} + t w 1{|w| > L} at every site.
DisorderSample truncate_weights(const DisorderSample& s, double level, double t);

/// Redraws the sites in `sites` from the sample's laws using seed2.
DisorderSample resample_subset(const DisorderSample& s, const std::vector<SiteIndex>& sites, std::uint64_t seed2);

/// Single-site draw from the per-site stream for (seed, site).
double draw_site(const WeightDistribution& law, std::uint64_t seed, SiteIndex site);

}  // namespace mdm

#include "mdm/disorder_inl.hpp"
