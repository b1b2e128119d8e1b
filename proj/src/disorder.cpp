#include "mdm/disorder.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "mdm/error.hpp"
#include "mdm/rng.hpp"

namespace mdm {

namespace {

void check_law(const WeightDistribution::Variant& law) {
  std::visit(detail::Overloaded{
                 [](const Gaussian& d) {
                   if (!(d.stddev >= 0.0) || !std::isfinite(d.mean) || !std::isfinite(d.stddev))
                     throw ValidationError("gaussian: stddev must be finite and >= 0");
                 },
                 [](const Uniform& d) {
                   if (!(d.lo <= d.hi) || !std::isfinite(d.lo) || !std::isfinite(d.hi))
                     throw ValidationError("uniform: need finite lo <= hi");
                 },
                 [](const TwoPoint& d) {
                   if (!(d.p >= 0.0 && d.p <= 1.0)) throw ValidationError("twopoint: p must lie in [0,1]");
                   if (!std::isfinite(d.v0) || !std::isfinite(d.v1)) throw ValidationError("twopoint: values must be finite");
                 },
                 [](const Constant& d) {
                   if (!std::isfinite(d.value)) throw ValidationError("const: value must be finite");
                 },
                 [](const SymmetricPareto& d) {
                   if (!(d.alpha > 0.0) || !(d.scale > 0.0)) throw ValidationError("pareto: alpha and scale must be > 0");
                 },
             },
             law);
}

std::vector<double> parse_numbers(std::string_view body, const std::string& kind) {
  std::vector<double> values;
  while (!body.empty()) {
    const auto comma = body.find(',');
    const std::string_view item = body.substr(0, comma);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size())
      throw ValidationError(kind + ": cannot parse number '" + std::string(item) + "'");
    values.push_back(v);
    if (comma == std::string_view::npos) break;
    body.remove_prefix(comma + 1);
  }
  return values;
}

// Simpson's rule for E|X|^k under N(mean, sd^2), split at the kink of |x|^k.
double gaussian_moment_quadrature(double mean, double sd, double k) {
  auto f = [&](double x) {
    const double z = (x - mean) / sd;
    return std::pow(std::abs(x), k) * std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
  };
  auto simpson = [&](double lo, double hi) {
    const int n = 4000;
    const double h = (hi - lo) / n;
    double acc = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
  };
  const double lo = mean - 12.0 * sd, hi = mean + 12.0 * sd;
  if (lo < 0.0 && hi > 0.0) return simpson(lo, 0.0) + simpson(0.0, hi);
  return simpson(lo, hi);
}

}  // namespace

WeightDistribution::WeightDistribution(Variant law) : law_(law) { check_law(law_); }

WeightDistribution WeightDistribution::parse(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw ValidationError("law spec: expected kind:params, got '" + spec + "'");
  const std::string kind = spec.substr(0, colon);
  const auto v = parse_numbers(std::string_view(spec).substr(colon + 1), kind);
  auto need = [&](std::size_t n) {
    if (v.size() != n)
      throw ValidationError("law spec: " + kind + " takes " + std::to_string(n) + " parameter(s), got " +
                            std::to_string(v.size()));
  };
  if (kind == "gaussian" || kind == "normal") {
    need(2);
    return WeightDistribution(Gaussian{v[0], v[1]});
  }
  if (kind == "uniform") {
    need(2);
    return WeightDistribution(Uniform{v[0], v[1]});
  }
  if (kind == "twopoint") {
    need(3);
    return WeightDistribution(TwoPoint{v[0], v[1], v[2]});
  }
  if (kind == "const" || kind == "constant") {
    need(1);
    return WeightDistribution(Constant{v[0]});
  }
  if (kind == "pareto") {
    need(2);
    return WeightDistribution(SymmetricPareto{v[0], v[1]});
  }
  throw ValidationError("law spec: unknown kind '" + kind + "'");
}

std::string WeightDistribution::to_string() const {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(17);
  std::visit(detail::Overloaded{
                 [&](const Gaussian& d) { out << "gaussian:" << d.mean << ',' << d.stddev; },
                 [&](const Uniform& d) { out << "uniform:" << d.lo << ',' << d.hi; },
                 [&](const TwoPoint& d) { out << "twopoint:" << d.p << ',' << d.v0 << ',' << d.v1; },
                 [&](const Constant& d) { out << "const:" << d.value; },
                 [&](const SymmetricPareto& d) { out << "pareto:" << d.alpha << ',' << d.scale; },
             },
             law_);
  return out.str();
}

bool WeightDistribution::non_degenerate() const {
  return std::visit(detail::Overloaded{
                        [](const Gaussian& d) { return d.stddev > 0.0; },
                        [](const Uniform& d) { return d.lo < d.hi; },
                        [](const TwoPoint& d) { return d.p > 0.0 && d.p < 1.0 && d.v0 != d.v1; },
                        [](const Constant&) { return false; },
                        [](const SymmetricPareto&) { return true; },
                    },
                    law_);
}

double WeightDistribution::absolute_moment(double k) const {
  return std::visit(
      detail::Overloaded{
          [k](const Gaussian& d) {
            if (d.stddev == 0.0) return std::pow(std::abs(d.mean), k);
            if (k == 2.0) return d.mean * d.mean + d.stddev * d.stddev;
            if (d.mean == 0.0)
              return std::pow(d.stddev, k) * std::pow(2.0, k / 2) * std::tgamma((k + 1) / 2) / std::sqrt(std::numbers::pi);
            return gaussian_moment_quadrature(d.mean, d.stddev, k);
          },
          [k](const Uniform& d) {
            if (d.lo == d.hi) return std::pow(std::abs(d.lo), k);
            auto antiderivative = [k](double x) { return std::copysign(std::pow(std::abs(x), k + 1) / (k + 1), x); };
            return (antiderivative(d.hi) - antiderivative(d.lo)) / (d.hi - d.lo);
          },
          [k](const TwoPoint& d) { return d.p * std::pow(std::abs(d.v0), k) + (1 - d.p) * std::pow(std::abs(d.v1), k); },
          [k](const Constant& d) { return std::pow(std::abs(d.value), k); },
          [k](const SymmetricPareto& d) {
            if (k >= d.alpha) return std::numeric_limits<double>::infinity();
            return d.alpha * std::pow(d.scale, k) / (d.alpha - k);
          },
      },
      law_);
}

DisorderSample zero_weights(const WeightedGraph& g) {
  return make_sample(g, std::vector<double>(g.edge_count(), 0.0), std::vector<double>(g.vertex_count(), 0.0));
}

DisorderSample make_sample(const WeightedGraph& g, std::vector<double> edge_weights, std::vector<double> vertex_weights) {
  if (static_cast<int>(edge_weights.size()) != g.edge_count() ||
      static_cast<int>(vertex_weights.size()) != g.vertex_count())
    throw ValidationError("disorder: weight array lengths do not match the graph");
  for (double w : edge_weights)
    if (!std::isfinite(w)) throw ValidationError("disorder: non-finite edge weight");
  for (double w : vertex_weights)
    if (!std::isfinite(w)) throw ValidationError("disorder: non-finite vertex weight");
  DisorderSample s;
  s.graph = &g;
  s.edge_weights = std::move(edge_weights);
  s.vertex_weights = std::move(vertex_weights);
  return s;
}

double draw_site(const WeightDistribution& law, std::uint64_t seed, SiteIndex site) {
  SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(site.kind), static_cast<std::uint64_t>(site.index)));
  return law.sample(rng);
}

DisorderSample sample_weights(const WeightedGraph& g, const WeightDistribution& edge_law,
                              const WeightDistribution& vertex_law, std::uint64_t seed) {
  DisorderSample s;
  s.graph = &g;
  s.edge_law = edge_law;
  s.vertex_law = vertex_law;
  s.seed = seed;
  s.edge_weights.resize(g.edge_count());
  s.vertex_weights.resize(g.vertex_count());
  for (EdgeId e = 0; e < g.edge_count(); ++e) s.edge_weights[e] = draw_site(edge_law, seed, SiteIndex::edge(e));
  for (Vertex x = 0; x < g.vertex_count(); ++x) s.vertex_weights[x] = draw_site(vertex_law, seed, SiteIndex::vertex(x));
  return s;
}

DisorderSample truncate_weights(const DisorderSample& s, double level, double t) {
  if (!(level > 0.0)) throw ValidationError("truncate: L must be > 0");
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("truncate: t must lie in [0,1]");
  DisorderSample out = s;
  auto apply = [level, t](double& w) {
    if (std::abs(w) > level) w *= t;
  };
  for (double& w : out.edge_weights) apply(w);
  for (double& w : out.vertex_weights) apply(w);
  return out;
}

DisorderSample resample_subset(const DisorderSample& s, const std::vector<SiteIndex>& sites, std::uint64_t seed2) {
  DisorderSample out = s;
  for (SiteIndex site : sites) {
    const int limit = site.is_edge() ? static_cast<int>(s.edge_weights.size()) : static_cast<int>(s.vertex_weights.size());
    if (site.index < 0 || site.index >= limit) throw ValidationError("resample: site index out of range");
    out.set_weight(site, draw_site(site.is_edge() ? s.edge_law : s.vertex_law, seed2, site));
  }
  return out;
}

}  // namespace mdm
