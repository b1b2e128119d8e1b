#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mdm/error.hpp"
#include "mdm/exact_gibbs.hpp"
#include "mdm/experiments.hpp"
#include "test_support.hpp"

using namespace mdm;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// E f(W) for W ~ N(0,1), Simpson on [-12, 12].
template <class F>
double gaussian_expectation(F f) {
  const int n = 20000;
  const double lo = -12, hi = 12, h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double wgt = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    acc += wgt * f(x) * std::exp(-x * x / 2) / std::sqrt(2 * std::numbers::pi);
  }
  return acc * h / 3;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mdm_test_" + name)).string();
}

}  // namespace

TEST_CASE("engine names and size specs") {
  CHECK(parse_engine("enum") == Engine::enumeration);
  CHECK(parse_engine("transfer") == Engine::transfer);
  CHECK(to_string(Engine::mcmc) == "mcmc");
  CHECK_THROWS_AS(parse_engine("fast"), ValidationError);
  CHECK(resize_spec("strip:100x4", 50) == "strip:50x4");
  CHECK(resize_spec("grid:5x5", 7) == "grid:7x7");
  CHECK(resize_spec("path:3", 9) == "path:9");
  CHECK_THROWS_AS(resize_spec("graph.json", 3), ValidationError);
}

TEST_CASE("config validation") {
  ExperimentConfig cfg;
  cfg.replicas = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.replicas = 1;
  cfg.r_list.clear();
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.r_list = {1};
  cfg.edge_law = "gaussian:0";
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.edge_law = "gaussian:0,1";
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.to_json()["engine"] == "auto");
}

TEST_CASE("central edge") {
  const auto g = build_grid(9, 9, false);
  const EdgeId e = central_edge(g);
  const auto dist = bfs_distances(g, {g.edge(e).u, g.edge(e).v});
  CHECK(*std::max_element(dist.begin(), dist.end()) == 8);
}

TEST_CASE("replica runner is order independent") {
  auto f = [](std::int64_t i) { return static_cast<double>(derive_seed(1, i) % 1000); };
  CHECK(run_replicas<double>(257, 1, f) == run_replicas<double>(257, 4, f));
  CHECK_THROWS_AS(run_replicas<double>(10, 3,
                                       [](std::int64_t i) -> double {
                                         if (i == 7) throw ValidationError("boom");
                                         return 0.0;
                                       }),
                  ValidationError);
}

TEST_CASE("free-energy CLT") {
  ExperimentConfig cfg;
  cfg.graph = "strip:30x3";
  cfg.replicas = 400;
  cfg.seed = 7;
  SUBCASE("constant law is flagged degenerate") {
    cfg.edge_law = "const:0.5";
    cfg.vertex_law = "const:0";
    const auto res = run_free_energy_clt(cfg);
    CHECK(res.summary.degenerate);
    CHECK_FALSE(res.summary.ks_distance.has_value());
    CHECK(res.summary.standardized_samples.empty());
  }
  SUBCASE("gaussian strip") {
    const auto res = run_free_energy_clt(cfg);
    CHECK(res.engine == Engine::transfer);
    REQUIRE(res.summary.ks_distance.has_value());
    CHECK(*res.summary.ks_distance < 0.08);
    CHECK(res.cross_checked == 5);
    CHECK(res.cross_check_error < 1e-9);
    cfg.threads = 3;
    const auto again = run_free_energy_clt(cfg);
    for (std::size_t i = 0; i < res.records.size(); ++i) {
      CHECK(again.records[i].statistic == res.records[i].statistic);
      CHECK(again.records[i].seed == res.records[i].seed);
    }
  }
  SUBCASE("engine mismatch") {
    cfg.engine = Engine::mcmc;
    CHECK_THROWS_AS(run_free_energy_clt(cfg), ValidationError);
    cfg.graph = "torus:4x4";
    cfg.engine = Engine::transfer;
    CHECK_THROWS_AS(run_free_energy_clt(cfg), ValidationError);
  }
}

TEST_CASE("dimer CLT") {
  SUBCASE("single edge pushforward") {
    ExperimentConfig cfg;
    cfg.graph = "path:2";
    cfg.replicas = 10000;
    cfg.seed = 3;
    const auto res = run_dimer_clt(cfg);
    // ten equiprobable bins of sigmoid(W)
    std::vector<double> cuts;
    for (int k = 1; k < 10; ++k) cuts.push_back(sigmoid(normal_quantile(k / 10.0)));
    std::vector<int> counts(10, 0);
    for (const auto& r : res.records) counts[std::upper_bound(cuts.begin(), cuts.end(), r.statistic) - cuts.begin()]++;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
    CHECK(chi2 < 21.67);  // 9 degrees of freedom, alpha = 0.01
  }
  SUBCASE("constant weights") {
    ExperimentConfig cfg;
    cfg.graph = "grid:3x3";
    cfg.edge_law = "const:0";
    cfg.replicas = 20;
    CHECK(run_dimer_clt(cfg).summary.degenerate);
  }
  SUBCASE("engines agree") {
    ExperimentConfig cfg;
    cfg.graph = "strip:10x3";
    cfg.replicas = 10;
    cfg.engine = Engine::transfer;
    const auto a = run_dimer_clt(cfg);
    cfg.engine = Engine::recursion;
    const auto b = run_dimer_clt(cfg);
    for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].statistic == doctest::Approx(b.records[i].statistic).epsilon(1e-10));
    CHECK(a.cross_check_error < 1e-9);
  }
  SUBCASE("mcmc with exact cross-check") {
    ExperimentConfig cfg;
    cfg.graph = "grid:6x6";
    cfg.engine = Engine::mcmc;
    cfg.replicas = 5;
    cfg.mcmc_sweeps = 20000;
    const auto res = run_dimer_clt(cfg);
    CHECK(res.cross_checked == 5);
    CHECK(res.cross_check_error < 0.1);
  }
}

TEST_CASE("correlation decay curve") {
  ExperimentConfig cfg;
  cfg.graph = "grid:5x5";
  cfg.edge_law = "uniform:-1,1";
  cfg.replicas = 60;
  cfg.r_list = {0, 1, 2, 3, 20};
  const auto res = correlation_decay_curve(cfg);
  REQUIRE(res.rows.size() == 5);
  CHECK(res.rows.back().mean == 0.0);
  CHECK(res.rows.back().std_error == 0.0);
  for (const auto& row : res.rows) CHECK(row.mean >= 0.0);
  CHECK(res.rows[0].mean > res.rows[2].mean);
  CHECK(res.fit.has_value());
  CHECK(res.fit->slope < 0);
  REQUIRE(res.two_point_rows.size() >= 3);
  CHECK(res.two_point_rows[0].mean > res.two_point_rows[2].mean);

  // two-point values match the exact engine
  const auto g = parse_graph_spec(cfg.graph);
  const auto s = sample_weights(g, WeightDistribution::parse(cfg.edge_law), WeightDistribution::parse(cfg.vertex_law),
                                replica_seed(cfg.seed, 0));
  const EdgeId f = res.two_point_partners[0];
  const double cov = two_point(g, s, SiteIndex::edge(res.edge), SiteIndex::edge(f)) -
                     edge_marginal(g, s, res.edge) * edge_marginal(g, s, f);
  cfg.replicas = 1;
  const auto one = correlation_decay_curve(cfg);
  CHECK(one.two_point_rows[0].mean == doctest::Approx(std::abs(cov)).epsilon(1e-9));
}

TEST_CASE("variance scan") {
  ExperimentConfig cfg;
  cfg.graph = "strip:10x3";
  cfg.sizes = {10, 20, 40};
  cfg.replicas = 300;
  SUBCASE("constant weights") {
    cfg.edge_law = "const:1";
    const auto res = variance_scan(cfg);
    for (const auto& row : res.rows) {
      CHECK(row.var == 0.0);
      CHECK(row.bound_holds);
    }
    CHECK(res.band_ratio == 1.0);
  }
  SUBCASE("gaussian strips") {
    cfg.vertex_law = "gaussian:0,0.5";
    const auto res = variance_scan(cfg);
    REQUIRE(res.rows.size() == 3);
    for (const auto& row : res.rows) {
      CHECK(row.bound_holds);
      CHECK(row.var > 0.0);
      CHECK(row.upper_bound == doctest::Approx(2.0 * (row.edges + 0.25 * row.vertices)));
    }
    CHECK(res.band_ratio < 2.0);
  }
}

TEST_CASE("dimer variance lower bound") {
  SUBCASE("single edge closed form") {
    ExperimentConfig cfg;
    cfg.graph = "path:2";
    cfg.replicas = 20000;
    cfg.seed = 11;
    const auto rows = dimer_variance_lower_bound_check(cfg);
    REQUIRE(rows.size() == 1);
    const double m1 = gaussian_expectation(sigmoid);
    const double m2 = gaussian_expectation([](double x) { return sigmoid(x) * sigmoid(x); });
    const double gv = gaussian_expectation([](double x) { return sigmoid(x) * (1 - sigmoid(x)); });
    CHECK(std::abs(rows[0].var_lambda - (m2 - m1 * m1)) < 4 * rows[0].var_lambda_se);
    CHECK(std::abs(rows[0].mean_gibbs_var - gv) < 4 * rows[0].mean_gibbs_var_se);
    CHECK(m2 - m1 * m1 >= gv * gv);
    CHECK(rows[0].holds);
  }
  SUBCASE("no edges") {
    ExperimentConfig cfg;
    cfg.graph = "path:1";
    cfg.replicas = 10;
    const auto rows = dimer_variance_lower_bound_check(cfg);
    CHECK(rows[0].var_lambda == 0.0);
    CHECK(rows[0].bound == 0.0);
    CHECK(rows[0].holds);
  }
  SUBCASE("non-gaussian law refused") {
    ExperimentConfig cfg;
    cfg.graph = "grid:3x3";
    cfg.edge_law = "uniform:-1,1";
    CHECK_THROWS_AS(dimer_variance_lower_bound_check(cfg), ValidationError);
  }
  SUBCASE("small grids") {
    ExperimentConfig cfg;
    cfg.graph = "grid:3x3";
    cfg.sizes = {3, 4};
    cfg.replicas = 400;
    for (const auto& row : dimer_variance_lower_bound_check(cfg)) CHECK(row.holds);
  }
}

TEST_CASE("claim inequality on small graphs") {
  SplitMix64 rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = testing::random_graph(2 + static_cast<int>(rng() % 9), 4, 20, rng);
    const auto s = testing::random_sample(g, rng, 2.0);
    for (double k : {-1.0, 0.0, 1.0, 3.0}) CHECK(claim_inequality(g, s, k).holds);
  }
  const auto g = build_path(3);
  const auto s = zero_weights(g);
  CHECK_THROWS_AS(claim_inequality(g, s, 1.0, {0, 1}), ValidationError);
  CHECK_THROWS_AS(claim_inequality(g, s, -1.0, {0}), ValidationError);
}

TEST_CASE("chatterjee derivative locality") {
  ExperimentConfig cfg;
  cfg.edge_law = "uniform:-1,1";
  cfg.replicas = 100;
  SUBCASE("single edge") {
    cfg.graph = "path:2";
    cfg.r_list = {0, 1, 2};
    const auto res = chatterjee_derivative_locality(cfg);
    for (const auto& row : res.rows) CHECK(row.mean == 0.0);
    CHECK(res.pointwise_violations == 0);
  }
  SUBCASE("grid") {
    cfg.graph = "grid:5x5";
    cfg.r_list = {0, 1, 2, 10};
    const auto res = chatterjee_derivative_locality(cfg);
    CHECK(res.pointwise_violations == 0);
    CHECK(res.max_ratio <= 1.0);
    CHECK(res.rows.back().mean == 0.0);
    CHECK(res.rows[0].mean > res.rows[2].mean);
    CHECK(res.rows[0].mean_fourth >= 0.0);
  }
}

TEST_CASE("truncation comparison") {
  ExperimentConfig cfg;
  cfg.graph = "strip:10x3";
  cfg.sizes = {10, 20};
  cfg.replicas = 50;
  SUBCASE("bounded law below the level") {
    cfg.edge_law = "uniform:-1,1";
    for (const auto& row : truncation_comparison(cfg)) {
      CHECK(row.value == 0.0);
      CHECK(row.truncated_fraction == 0.0);
    }
  }
  SUBCASE("t = 1") {
    cfg.edge_law = "pareto:3,1";
    cfg.truncation_t = 1.0;
    for (const auto& row : truncation_comparison(cfg)) CHECK(row.value == 0.0);
  }
  SUBCASE("heavy tail") {
    cfg.edge_law = "pareto:3,1";
    const auto rows = truncation_comparison(cfg);
    for (const auto& row : rows) {
      CHECK(row.value > 0.0);
      CHECK(row.truncated_fraction > 0.0);
      CHECK(row.level == doctest::Approx(std::pow(row.vertices, 0.1)));
    }
  }
}

TEST_CASE("coupling scan") {
  ExperimentConfig cfg;
  cfg.graph = "grid:7x7";
  cfg.edge_law = "uniform:-1,1";
  cfg.replicas = 2000;
  cfg.r_list = {1, 2};
  const auto rows = coupling_scan(cfg);
  REQUIRE(rows.size() == 2);
  for (const auto& row : rows) {
    CHECK(row.marginal_gap <= row.estimate.value + 3 * row.estimate.std_error);
    CHECK(row.estimate.replicas == 2000);
  }
  cfg.engine = Engine::transfer;
  CHECK_THROWS_AS(coupling_scan(cfg), ValidationError);
}

TEST_CASE("csv output is fixed and byte deterministic") {
  ExperimentConfig cfg;
  cfg.graph = "strip:8x2";
  cfg.replicas = 20;
  cfg.seed = 5;
  const auto a = temp_path("a.csv"), b = temp_path("b.csv");
  write_clt_csv(a, run_free_energy_clt(cfg).records);
  cfg.threads = 4;
  write_clt_csv(b, run_free_energy_clt(cfg).records);
  const auto text = slurp(a);
  CHECK(text == slurp(b));
  CHECK(text.rfind("replica,seed,statistic\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 21);

  write_decay_csv(a, {{1, 0.5, 0.01, 10}});
  CHECK(slurp(a) == "R,mean,stderr,n\n1,0.5,0.01,10\n");
  write_varscan_csv(a, {VarScanRow{50, 0, 0, 1.25, 0.5, 3, 0, true, true}});
  CHECK(slurp(a) == "size,var,stderr,upper_bound\n50,1.25,0.5,3\n");
  CouplingRow row;
  row.r = 2;
  row.estimate = {0.25, 0.125, 100};
  row.seed = 9;
  write_couple_csv(a, {row});
  CHECK(slurp(a) == "R,estimate,stderr,replicas,seed\n2,0.25,0.125,100,9\n");
  CHECK_THROWS_AS(write_decay_csv("/nonexistent/dir/x.csv", {}), std::runtime_error);
  std::filesystem::remove(a);
  std::filesystem::remove(b);

  CHECK(format_number(0.1) == "0.1");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}
