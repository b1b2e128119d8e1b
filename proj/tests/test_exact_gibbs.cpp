#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mdm/error.hpp"
#include "mdm/exact_gibbs.hpp"
#include "test_support.hpp"

using namespace mdm;
using doctest::Approx;

namespace {

WeightedGraph single_edge() { return build_path(2); }

}  // namespace

TEST_CASE("matching enumeration counts") {
  CHECK(enumerate_matchings(single_edge()).size() == 2);
  CHECK(enumerate_matchings(build_path(3)).size() == 3);
  const auto c4 = enumerate_matchings(build_cycle(4));
  CHECK(c4.size() == 7);
  int perfect = 0;
  for (const auto& m : c4) perfect += m.size() == 2;
  CHECK(perfect == 2);
  CHECK_THROWS_AS(enumerate_matchings(build_grid(5, 4, false)), SizeError);  // 31 edges
}

TEST_CASE("log partition closed forms") {
  const auto p2 = single_edge();
  CHECK(log_partition(p2, zero_weights(p2)) == Approx(std::log(2.0)));
  const double w0 = 0.7, a = -0.3, b = 1.1;
  const auto s = make_sample(p2, {w0}, {a, b});
  CHECK(log_partition(p2, s) == Approx(std::log(std::exp(a + b) + std::exp(w0))).epsilon(1e-14));
  CHECK(log_partition(build_path(4), zero_weights(build_path(4))) == Approx(std::log(5.0)));
  CHECK(log_partition(build_path(5), zero_weights(build_path(5))) == Approx(std::log(8.0)));
  // empty graph: only the empty matching with all vertices unmatched
  const WeightedGraph isolated(3, {});
  CHECK(log_partition(isolated, make_sample(isolated, {}, {0.5, 1.0, -2.0})) == Approx(-0.5));
}

TEST_CASE("zero-weight partition function counts matchings") {
  for (int n = 1; n <= 20; ++n) {
    const auto p = build_path(n);
    const double expected = std::log(testing::fibonacci(n + 1));
    CHECK(log_partition(p, zero_weights(p)) == Approx(expected).epsilon(1e-13));
  }
  const auto c4 = build_cycle(4);
  CHECK(std::exp(log_partition(c4, zero_weights(c4))) == Approx(7.0));
}

TEST_CASE("edge and vertex marginals") {
  const auto p2 = single_edge();
  CHECK(edge_marginal(p2, zero_weights(p2), 0) == Approx(0.5));
  CHECK(vertex_unmatched_marginal(p2, zero_weights(p2), 0) == Approx(0.5));
  const auto p3 = build_path(3);
  CHECK(edge_marginal(p3, zero_weights(p3), 0) == Approx(1.0 / 3));
  CHECK(edge_marginal(p3, zero_weights(p3), 1) == Approx(1.0 / 3));
  CHECK(vertex_unmatched_marginal(p3, zero_weights(p3), 1) == Approx(1.0 / 3));
  const auto c4 = build_cycle(4);
  for (EdgeId e = 0; e < 4; ++e) CHECK(edge_marginal(c4, zero_weights(c4), e) == Approx(2.0 / 7));
  const WeightedGraph with_isolated(3, {{0, 1}});
  CHECK(vertex_unmatched_marginal(with_isolated, zero_weights(with_isolated), 2) == Approx(1.0));
}

TEST_CASE("two-point functions") {
  const auto p4 = build_path(4);
  const auto z = zero_weights(p4);
  const EdgeId e01 = *p4.find_edge(0, 1), e12 = *p4.find_edge(1, 2), e23 = *p4.find_edge(2, 3);
  CHECK(two_point(p4, z, SiteIndex::edge(e01), SiteIndex::edge(e12)) == 0.0);
  CHECK(two_point(p4, z, SiteIndex::edge(e01), SiteIndex::edge(e23)) == Approx(0.2));
  CHECK(two_point(p4, z, SiteIndex::vertex(0), SiteIndex::edge(e01)) == 0.0);
  CHECK_THROWS_AS(two_point(p4, z, SiteIndex::edge(e01), SiteIndex::edge(e01)), ValidationError);

  SplitMix64 rng(3);
  const auto u = disjoint_union(build_cycle(5), build_grid(2, 3, false));
  const auto s = testing::random_sample(u, rng);
  const EdgeId a = 1, b = u.edge_count() - 2;
  CHECK(two_point(u, s, SiteIndex::edge(a), SiteIndex::edge(b)) ==
        Approx(edge_marginal(u, s, a) * edge_marginal(u, s, b)).epsilon(1e-12));
}

TEST_CASE("gibbs summaries") {
  const auto p2 = single_edge();
  auto sum = gibbs_summary(p2, zero_weights(p2));
  CHECK(sum.dimer_mean == Approx(0.5));
  CHECK(sum.dimer_gibbs_variance == Approx(0.25));

  const WeightedGraph empty(4, {});
  sum = gibbs_summary(empty, zero_weights(empty));
  CHECK(sum.dimer_mean == 0.0);
  CHECK(sum.dimer_gibbs_variance == 0.0);
  CHECK(sum.vertex_unmatched == std::vector<double>(4, 1.0));

  const auto c4 = build_cycle(4);
  sum = gibbs_summary(c4, zero_weights(c4));
  CHECK(sum.dimer_mean == Approx(8.0 / 7));
  CHECK(std::exp(sum.log_z) == Approx(7.0));
}

TEST_CASE("recursion engine matches enumeration on random graphs") {
  SplitMix64 rng(2718);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 12);
    const auto g = testing::random_graph(n, 1 + static_cast<int>(rng() % 4), 2 * n, rng);
    const auto s = testing::random_sample(g, rng, 2.0);
    const auto oracle = enumeration_summary(g, s);
    const auto sum = gibbs_summary(g, s);
    CHECK(sum.log_z == Approx(oracle.summary.log_z).epsilon(1e-12));
    CHECK(sum.dimer_mean == Approx(oracle.summary.dimer_mean).epsilon(1e-10));
    CHECK(sum.dimer_gibbs_variance == Approx(oracle.summary.dimer_gibbs_variance).epsilon(1e-10));
    const int m = g.edge_count();
    for (EdgeId e = 0; e < m; ++e) {
      CHECK(std::abs(sum.edge_marginals[e] - oracle.summary.edge_marginals[e]) < 1e-10);
      CHECK(std::abs(edge_marginal(g, s, e) - oracle.summary.edge_marginals[e]) < 1e-10);
      for (EdgeId f = 0; f < m; ++f) {
        if (e == f) continue;
        CHECK(std::abs(two_point(g, s, SiteIndex::edge(e), SiteIndex::edge(f)) -
                       oracle.edge_two_point[static_cast<std::size_t>(e) * m + f]) < 1e-10);
      }
    }
    // Gibbs variance of |M| is the sum of edge covariances
    double cov = 0.0;
    for (EdgeId e = 0; e < m; ++e)
      for (EdgeId f = 0; f < m; ++f)
        cov += oracle.edge_two_point[static_cast<std::size_t>(e) * m + f] -
               oracle.summary.edge_marginals[e] * oracle.summary.edge_marginals[f];
    CHECK(sum.dimer_gibbs_variance == Approx(cov).epsilon(1e-9));
    for (Vertex x = 0; x < n; ++x) {
      CHECK(std::abs(sum.vertex_unmatched[x] - oracle.summary.vertex_unmatched[x]) < 1e-10);
      double covered = 0.0;
      for (EdgeId e : g.incident(x)) covered += sum.edge_marginals[e];
      CHECK(std::abs(vertex_unmatched_marginal(g, s, x) - (1.0 - covered)) < 1e-10);
    }
  }
}

TEST_CASE("derivative identities by central differences") {
  SplitMix64 rng(99);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = testing::random_graph(9, 3, 20, rng);
    const auto s = testing::random_sample(g, rng);
    const auto sum = gibbs_summary(g, s);
    for (EdgeId e = 0; e < g.edge_count(); ++e) {
      auto plus = s, minus = s;
      plus.edge_weights[e] += h;
      minus.edge_weights[e] -= h;
      const double fd = (log_partition(g, plus) - log_partition(g, minus)) / (2 * h);
      CHECK(std::abs(fd - sum.edge_marginals[e]) < 1e-6);
    }
    for (Vertex x = 0; x < g.vertex_count(); ++x) {
      auto plus = s, minus = s;
      plus.vertex_weights[x] += h;
      minus.vertex_weights[x] -= h;
      const double fd = (log_partition(g, plus) - log_partition(g, minus)) / (2 * h);
      CHECK(std::abs(fd - sum.vertex_unmatched[x]) < 1e-6);
    }
    const double unmatched = std::accumulate(sum.vertex_unmatched.begin(), sum.vertex_unmatched.end(), 0.0);
    CHECK(std::abs(unmatched + 2 * sum.dimer_mean - g.vertex_count()) < 1e-9);
    CHECK(sum.dimer_mean == Approx(std::accumulate(sum.edge_marginals.begin(), sum.edge_marginals.end(), 0.0)));
  }
}

TEST_CASE("edge marginal increases with its weight") {
  SplitMix64 rng(5);
  const auto g = build_grid(3, 3, false);
  auto s = testing::random_sample(g, rng);
  double previous = 0.0;
  for (double w = -4.0; w <= 4.0; w += 0.5) {
    s.edge_weights[5] = w;
    const double p = edge_marginal(g, s, 5);
    CHECK(p > previous);
    CHECK(p < 1.0);
    previous = p;
  }
}

TEST_CASE("disjoint union factorizes") {
  SplitMix64 rng(8);
  const auto a = build_grid(3, 2, false);
  const auto b = build_cycle(5);
  const auto u = disjoint_union(a, b);
  const auto su = testing::random_sample(u, rng);
  const auto sa = make_sample(a, {su.edge_weights.begin(), su.edge_weights.begin() + a.edge_count()},
                              {su.vertex_weights.begin(), su.vertex_weights.begin() + a.vertex_count()});
  const auto sb = make_sample(b, {su.edge_weights.begin() + a.edge_count(), su.edge_weights.end()},
                              {su.vertex_weights.begin() + a.vertex_count(), su.vertex_weights.end()});
  CHECK(log_partition(u, su) == Approx(log_partition(a, sa) + log_partition(b, sb)).epsilon(1e-13));
}

TEST_CASE("conditional summaries") {
  SplitMix64 rng(21);
  const auto g = build_grid(3, 3, false);
  const auto s = testing::random_sample(g, rng);
  std::vector<EdgeId> all(g.edge_count());
  std::iota(all.begin(), all.end(), 0);
  const auto free = conditional_summary(g, s, BoundaryCondition::all_zero(g, all));
  const auto full = gibbs_summary(g, s);
  CHECK(free.log_z == Approx(full.log_z).epsilon(1e-13));
  for (EdgeId e = 0; e < g.edge_count(); ++e) CHECK(free.edge_marginals[e] == Approx(full.edge_marginals[e]));

  // all-zero boundary equals the free measure on the region's edges
  const auto view = ball(g, SiteIndex::edge(0), 0);
  const std::vector<EdgeId> region{0, 1, 2};
  const auto zero_bc = conditional_summary(g, s, BoundaryCondition::all_zero(g, region));
  std::vector<Vertex> touched;
  for (EdgeId e : region) touched.insert(touched.end(), {g.edge(e).u, g.edge(e).v});
  auto engine = PartitionEngine(g, s, touched, region);
  const auto marg = engine.marginals();
  for (EdgeId e : region) CHECK(zero_bc.edge_marginals[e] == Approx(marg.edge[e]));

  const auto p3 = build_path(3);
  BoundaryCondition bc = BoundaryCondition::all_zero(p3, {0});
  REQUIRE(bc.boundary == std::vector<EdgeId>{1});
  bc.assignment[0] = 1;
  const auto forced = conditional_summary(p3, zero_weights(p3), bc);
  CHECK(forced.edge_marginals[0] == 0.0);
  CHECK(forced.edge_marginals[1] == 1.0);
  CHECK(forced.dimer_mean == Approx(1.0));

  // inadmissible boundary
  const auto p5 = build_path(5);
  BoundaryCondition bad = BoundaryCondition::all_zero(p5, {*p5.find_edge(1, 2)});
  REQUIRE(bad.boundary.size() == 2);
  bad.assignment = {1, 1};
  CHECK(bad.admissible(p5));
  const auto star = WeightedGraph(4, {{0, 1}, {0, 2}, {0, 3}});
  BoundaryCondition clash = BoundaryCondition::all_zero(star, {0});
  clash.assignment.assign(clash.boundary.size(), 1);
  CHECK_FALSE(clash.admissible(star));
  CHECK_THROWS_AS(conditional_summary(star, zero_weights(star), clash), ValidationError);
}

TEST_CASE("conditional summary matches enumeration of consistent matchings") {
  SplitMix64 rng(404);
  const auto g = build_grid(4, 3, false);
  const auto s = testing::random_sample(g, rng);
  const std::vector<EdgeId> region = ball(g, SiteIndex::edge(7), 0).edge_ids();
  const auto bc = BoundaryCondition::greedy_maximal(g, region);
  const auto present = bc.present_edges();
  // brute force over matchings of region + boundary agreeing with bc
  std::vector<EdgeId> system = region;
  system.insert(system.end(), bc.boundary.begin(), bc.boundary.end());
  std::vector<double> log_weights;
  std::vector<std::vector<EdgeId>> configs;
  std::vector<std::uint8_t> in_system_vertex(g.vertex_count(), 0);
  for (EdgeId e : system) in_system_vertex[g.edge(e).u] = in_system_vertex[g.edge(e).v] = 1;
  const int k = static_cast<int>(region.size());
  for (std::uint32_t mask = 0; mask < (1U << k); ++mask) {
    std::vector<EdgeId> edges = present;
    for (int i = 0; i < k; ++i)
      if (mask >> i & 1U) edges.push_back(region[i]);
    if (!is_matching(g, edges)) continue;
    const auto m = Matching::from_edges(g, edges);
    double lw = 0.0;
    for (EdgeId e : edges) lw += s.edge_weights[e];
    for (Vertex x = 0; x < g.vertex_count(); ++x)
      if (in_system_vertex[x] && !m.is_matched(x)) lw += s.vertex_weights[x];
    log_weights.push_back(lw);
    configs.push_back(edges);
  }
  const double log_z = log_sum_exp(log_weights);
  const auto sum = conditional_summary(g, s, bc);
  CHECK(sum.log_z == Approx(log_z).epsilon(1e-13));
  for (EdgeId e : region) {
    double p = 0.0;
    for (std::size_t i = 0; i < configs.size(); ++i)
      if (std::find(configs[i].begin(), configs[i].end(), e) != configs[i].end()) p += std::exp(log_weights[i] - log_z);
    CHECK(sum.edge_marginals[e] == Approx(p).epsilon(1e-12));
  }
}

TEST_CASE("discrete derivative") {
  const auto p2 = single_edge();
  const auto s = make_sample(p2, {0.4}, {0.0, 0.0});
  CHECK(discrete_derivative(p2, s, SiteIndex::edge(0), 0.4) == 0.0);
  CHECK(discrete_derivative(p2, s, SiteIndex::edge(0), -1.3) ==
        Approx(std::log((1 + std::exp(0.4)) / (1 + std::exp(-1.3)))).epsilon(1e-14));

  // Delta_i F = integral over t in [w', w] of the site's marginal, by the
  // composite midpoint rule
  SplitMix64 rng(31);
  const auto g = build_grid(3, 2, false);
  const auto sg = testing::random_sample(g, rng);
  for (SiteIndex site : {SiteIndex::edge(3), SiteIndex::vertex(2)}) {
    const double from = sg.weight(site), to = from - 1.7;
    const int n = 4000;
    const double h = (from - to) / n;
    double integral = 0.0;
    auto moved = sg;
    for (int k = 0; k < n; ++k) {
      moved.set_weight(site, to + (k + 0.5) * h);
      integral += h * (site.is_edge() ? edge_marginal(g, moved, site.index)
                                      : vertex_unmatched_marginal(g, moved, site.index));
    }
    const double delta = discrete_derivative(g, sg, site, to);
    CHECK(std::abs(delta - integral) < 1e-8);
    CHECK(std::abs(delta) <= 1.7 + 1e-12);
  }
}

TEST_CASE("local free energy") {
  SplitMix64 rng(12);
  const auto p5 = build_path(5);
  const auto s = testing::random_sample(p5, rng);
  const EdgeId e = *p5.find_edge(2, 3);
  CHECK(local_free_energy(p5, s, SiteIndex::edge(e), 0) ==
        Approx(std::log(std::exp(s.vertex_weights[2] + s.vertex_weights[3]) + std::exp(s.edge_weights[e]))));
  CHECK(local_free_energy(p5, s, SiteIndex::edge(e), diameter(p5)) == Approx(log_partition(p5, s)).epsilon(1e-14));
  const auto g = build_grid(4, 4, false);
  const auto sg = testing::random_sample(g, rng);
  const double whole = log_partition(g, sg);
  for (int r = diameter(g); r < diameter(g) + 3; ++r)
    CHECK(local_free_energy(g, sg, SiteIndex::vertex(5), r) == Approx(whole).epsilon(1e-14));
}

TEST_CASE("gauge transform") {
  const auto p2 = single_edge();
  const double w = 0.9, a = 0.2, b = -0.5;
  const auto s = make_sample(p2, {w}, {a, b});
  const auto t = gauge_transform(s);
  CHECK(t.edge_weights[0] == Approx(w - a - b));
  CHECK(t.vertex_weights == std::vector<double>{0.0, 0.0});
  CHECK(edge_marginal(p2, t, 0) == Approx(std::exp(w) / (std::exp(a + b) + std::exp(w))).epsilon(1e-14));

  const auto zero_nu = make_sample(p2, {w}, {0.0, 0.0});
  CHECK(gauge_transform(zero_nu).edge_weights == zero_nu.edge_weights);

  SplitMix64 rng(77);
  const auto c4 = build_cycle(4);
  const auto sc = testing::random_sample(c4, rng);
  const auto tc = gauge_transform(sc);
  const double shift = std::accumulate(sc.vertex_weights.begin(), sc.vertex_weights.end(), 0.0);
  CHECK(std::abs(log_partition(c4, sc) - log_partition(c4, tc) - shift) < 1e-12);
  for (EdgeId e = 0; e < 4; ++e) CHECK(std::abs(edge_marginal(c4, sc, e) - edge_marginal(c4, tc, e)) < 1e-12);
  CHECK(std::abs(two_point(c4, sc, SiteIndex::edge(0), SiteIndex::edge(2)) -
                 two_point(c4, tc, SiteIndex::edge(0), SiteIndex::edge(2))) < 1e-12);
}

TEST_CASE("exact sampler reproduces marginals") {
  SplitMix64 rng(5150);
  const auto g = build_grid(3, 3, false);
  const auto s = testing::random_sample(g, rng);
  PartitionEngine engine(g, s);
  const auto marg = engine.marginals();
  std::vector<double> counts(g.edge_count(), 0.0);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) {
    const auto m = engine.sample(rng);
    for (EdgeId e : m.edges()) counts[e] += 1.0;
  }
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const double p = marg.edge[e];
    const double se = std::sqrt(p * (1 - p) / draws);
    CHECK(std::abs(counts[e] / draws - p) < 5 * se);
  }
}
