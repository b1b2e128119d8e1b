#include "mdm/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <variant>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "mdm/coupling.hpp"
#include "mdm/error.hpp"
#include "mdm/exact_gibbs.hpp"
#include "mdm/experiments.hpp"
#include "mdm/transfer_matrix.hpp"

namespace mdm {

namespace {

using nlohmann::json;

struct Flags {
  ExperimentConfig cfg;
  std::string engine = "auto";
  std::string config_path;
  std::string out;
  int edge = -1;
  std::int64_t samples = 1000;
  std::int64_t thin = 10;
  bool two_point = true;
};

// Runs one experiment; writes the CSV when csv is non-empty.
using Runner = std::function<json(const Flags&, const std::string& csv)>;

json fit_json(const std::optional<ExpFit>& fit) {
  if (!fit) return nullptr;
  return {{"slope", fit->slope}, {"intercept", fit->intercept}, {"r2", fit->r2}, {"points", fit->points}};
}

json decay_rows_json(const std::vector<DecayRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) out.push_back({{"R", r.r}, {"mean", r.mean}, {"stderr", r.std_error}, {"n", r.n}});
  return out;
}

json clt_json(const CltResult& res) {
  return {{"engine", to_string(res.engine)},
          {"summary", to_json(res.summary, false)},
          {"cross_check_error", res.cross_check_error},
          {"cross_checked", res.cross_checked}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out.flush()) throw std::runtime_error("write failed: " + path);
}

Engine exact_or_recursion(const WeightedGraph& g, Engine requested) {
  if (requested == Engine::automatic && g.vertex_count() <= kRecursionVertexLimit) return Engine::recursion;
  return requested == Engine::enumeration ? requested : resolve_exact_engine(g, requested);
}

json run_gibbs(const Flags& f, const std::string& csv) {
  const auto& cfg = f.cfg;
  const auto g = parse_graph_spec(cfg.graph);
  const auto s = sample_weights(g, WeightDistribution::parse(cfg.edge_law), WeightDistribution::parse(cfg.vertex_law), cfg.seed);
  GibbsSummary summary;
  json variance = nullptr, log_z = nullptr;
  Engine engine = cfg.engine;
  if (engine == Engine::mcmc) {
    ChainOptions opt;
    opt.sweeps = cfg.mcmc_sweeps;
    opt.seed = cfg.seed;
    summary.edge_marginals.assign(g.edge_count(), 0.0);
    std::vector<std::int64_t> counts(g.edge_count(), 0);
    run_chain(g, s, std::nullopt, opt, [&](const Matching& m) {
      for (EdgeId e : m.edges()) ++counts[e];
    });
    for (EdgeId e = 0; e < g.edge_count(); ++e)
      summary.edge_marginals[e] = static_cast<double>(counts[e]) / static_cast<double>(cfg.mcmc_sweeps);
    summary.vertex_unmatched.assign(g.vertex_count(), 1.0);
    for (EdgeId e = 0; e < g.edge_count(); ++e) {
      summary.vertex_unmatched[g.edge(e).u] -= summary.edge_marginals[e];
      summary.vertex_unmatched[g.edge(e).v] -= summary.edge_marginals[e];
    }
  } else {
    engine = exact_or_recursion(g, engine);
    if (engine == Engine::transfer) {
      const StripEngine tm(g, s);
      summary.log_z = tm.log_z();
      for (EdgeId e = 0; e < g.edge_count(); ++e) summary.edge_marginals.push_back(tm.edge_marginal(e));
      for (Vertex x = 0; x < g.vertex_count(); ++x) summary.vertex_unmatched.push_back(tm.vertex_unmatched(x));
    } else {
      summary = engine == Engine::enumeration ? enumeration_summary(g, s).summary : gibbs_summary(g, s);
      variance = summary.dimer_gibbs_variance;
    }
    log_z = summary.log_z;
  }
  summary.dimer_mean = 0.0;
  for (double p : summary.edge_marginals) summary.dimer_mean += p;

  if (!csv.empty()) {
    std::string text = "kind,index,marginal\n";
    for (EdgeId e = 0; e < g.edge_count(); ++e)
      text += "edge," + std::to_string(e) + "," + format_number(summary.edge_marginals[e]) + "\n";
    for (Vertex x = 0; x < g.vertex_count(); ++x)
      text += "vertex," + std::to_string(x) + "," + format_number(summary.vertex_unmatched[x]) + "\n";
    write_text(csv, text);
  }
  return {{"graph", g.description},
          {"vertices", g.vertex_count()},
          {"edges", g.edge_count()},
          {"engine", to_string(engine)},
          {"log_z", log_z},
          {"edge_marginals", summary.edge_marginals},
          {"vertex_unmatched", summary.vertex_unmatched},
          {"dimer_mean", summary.dimer_mean},
          {"dimer_gibbs_variance", variance}};
}

json run_sample(const Flags& f, const std::string& csv) {
  const auto& cfg = f.cfg;
  if (f.samples < 1) throw ValidationError("samples must be >= 1");
  if (f.thin < 1) throw ValidationError("thin must be >= 1");
  const auto g = parse_graph_spec(cfg.graph);
  const auto s = sample_weights(g, WeightDistribution::parse(cfg.edge_law), WeightDistribution::parse(cfg.vertex_law), cfg.seed);
  Engine engine = cfg.engine;
  if (engine == Engine::automatic)
    engine = g.vertex_count() <= kRecursionVertexLimit ? Engine::recursion : Engine::mcmc;
  if (engine != Engine::recursion && engine != Engine::mcmc)
    throw ValidationError("engine: sample supports recursion or mcmc, got " + to_string(engine));

  std::vector<Matching> draws;
  draws.reserve(static_cast<std::size_t>(f.samples));
  if (engine == Engine::recursion) {
    PartitionEngine exact(g, s);
    for (std::int64_t k = 0; k < f.samples; ++k) {
      SplitMix64 rng(replica_seed(cfg.seed, k));
      draws.push_back(exact.sample(rng));
    }
  } else {
    ChainOptions opt;
    opt.sweeps = f.samples * f.thin;
    opt.seed = cfg.seed;
    std::int64_t t = 0;
    run_chain(g, s, std::nullopt, opt, [&](const Matching& m) {
      if (++t % f.thin == 0) draws.push_back(m);
    });
  }

  std::vector<double> freq(g.edge_count(), 0.0);
  double mean_size = 0.0;
  std::string text = "sample,size,edges\n";
  for (std::size_t k = 0; k < draws.size(); ++k) {
    const auto edges = draws[k].edges();
    std::string ids;
    for (EdgeId e : edges) {
      freq[e] += 1.0;
      ids += (ids.empty() ? "" : " ") + std::to_string(e);
    }
    mean_size += static_cast<double>(edges.size());
    text += std::to_string(k) + "," + std::to_string(edges.size()) + "," + ids + "\n";
  }
  const double n = static_cast<double>(draws.size());
  for (double& p : freq) p /= n;
  if (!csv.empty()) write_text(csv, text);

  json out{{"graph", g.description}, {"engine", to_string(engine)}, {"samples", draws.size()},
           {"mean_size", mean_size / n}, {"edge_frequencies", freq}};
  if (engine == Engine::mcmc) out["thin"] = f.thin;
  if (g.vertex_count() <= kRecursionVertexLimit) {
    const auto exact = gibbs_summary(g, s);
    double worst = 0.0;
    for (EdgeId e = 0; e < g.edge_count(); ++e) worst = std::max(worst, std::abs(freq[e] - exact.edge_marginals[e]));
    out["exact_edge_marginals"] = exact.edge_marginals;
    out["max_marginal_error"] = worst;
  }
  return out;
}

json run_couple(const Flags& f, const std::string& csv) {
  const auto rows = coupling_scan(f.cfg);
  if (!csv.empty()) write_couple_csv(csv, rows);
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"R", r.r},
                   {"estimate", r.estimate.value},
                   {"stderr", r.estimate.std_error},
                   {"replicas", r.estimate.replicas},
                   {"seed", r.seed},
                   {"marginal_gap", r.marginal_gap},
                   {"region_edges", r.region_edges},
                   {"bound_holds", r.marginal_gap <= r.estimate.value + 3 * r.estimate.std_error}});
  return {{"rows", out}};
}

json run_decay(const Flags& f, const std::string& csv) {
  const auto res = correlation_decay_curve(f.cfg, f.two_point);
  if (!csv.empty()) write_decay_csv(csv, res.rows);
  json out{{"edge", res.edge}, {"rows", decay_rows_json(res.rows)}, {"fit", fit_json(res.fit)}};
  if (f.two_point) {
    out["two_point_rows"] = decay_rows_json(res.two_point_rows);
    out["two_point_partners"] = res.two_point_partners;
    out["two_point_fit"] = fit_json(res.two_point_fit);
  }
  return out;
}

json run_clt_free_energy(const Flags& f, const std::string& csv) {
  const auto res = run_free_energy_clt(f.cfg);
  if (!csv.empty()) write_clt_csv(csv, res.records);
  return clt_json(res);
}

json run_clt_dimer(const Flags& f, const std::string& csv) {
  const auto res = run_dimer_clt(f.cfg);
  if (!csv.empty()) write_clt_csv(csv, res.records);
  json out = clt_json(res);
  if (std::holds_alternative<Gaussian>(WeightDistribution::parse(f.cfg.edge_law).law())) {
    json rows = json::array();
    for (const auto& r : dimer_variance_lower_bound_check(f.cfg))
      rows.push_back({{"size", r.size},
                      {"edges", r.edges},
                      {"var_lambda", r.var_lambda},
                      {"var_lambda_stderr", r.var_lambda_se},
                      {"mean_gibbs_variance", r.mean_gibbs_var},
                      {"mean_gibbs_variance_stderr", r.mean_gibbs_var_se},
                      {"bound", r.bound},
                      {"combined_stderr", r.combined_se},
                      {"holds", r.holds},
                      {"ks_distance", r.ks ? json(*r.ks) : json(nullptr)}});
    out["lower_bound_check"] = rows;
  }
  return out;
}

json run_varscan(const Flags& f, const std::string& csv) {
  const auto res = variance_scan(f.cfg);
  if (!csv.empty()) write_varscan_csv(csv, res.rows);
  json rows = json::array();
  for (const auto& r : res.rows)
    rows.push_back({{"size", r.size},
                    {"edges", r.edges},
                    {"vertices", r.vertices},
                    {"var", r.var},
                    {"stderr", r.std_error},
                    {"upper_bound", r.upper_bound},
                    {"var_per_edge", r.per_edge},
                    {"bound_holds", r.bound_holds},
                    {"above_floor", r.above_floor}});
  return {{"rows", rows}, {"band_ratio", res.band_ratio}};
}

json run_truncate(const Flags& f, const std::string& csv) {
  const auto rows = truncation_comparison(f.cfg);
  if (!csv.empty()) write_truncation_csv(csv, rows);
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"size", r.size},
                   {"vertices", r.vertices},
                   {"level", r.level},
                   {"value", r.value},
                   {"stderr", r.std_error},
                   {"truncated_fraction", r.truncated_fraction}});
  return {{"rows", out}};
}

json run_locality(const Flags& f, const std::string& csv) {
  const auto res = chatterjee_derivative_locality(f.cfg);
  if (!csv.empty()) write_locality_csv(csv, res.rows);
  json rows = json::array();
  for (const auto& r : res.rows)
    rows.push_back({{"R", r.r},
                    {"mean", r.mean},
                    {"stderr", r.std_error},
                    {"mean_fourth", r.mean_fourth},
                    {"fourth_stderr", r.fourth_std_error},
                    {"n", r.n}});
  return {{"edge", res.edge},
          {"rows", rows},
          {"fit", fit_json(res.fit)},
          {"pointwise_violations", res.pointwise_violations},
          {"max_ratio", res.max_ratio}};
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Option values as they were resolved, keyed like the config file.
std::map<std::string, std::string> echo_options(const CLI::App& sub) {
  std::map<std::string, std::string> echo;
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string& key = opt->get_single_name();
    if (key == "help" || key == "config" || key == "out") continue;
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
      if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    }
    echo[key] = value;
  }
  return echo;
}

void apply_config(CLI::App& sub, const std::string& path) {
  for (const auto& [key, value] : read_config_file(path)) {
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config" || key == "help")
      throw ValidationError("config: unknown key '" + key + "' for " + sub.get_name());
    if (opt->count() > 0 || value.empty()) continue;  // command line wins; empty keeps the default
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ValidationError("config: " + key + ": " + e.what());
    }
  }
}

void add_common(CLI::App& sub, Flags& f, bool with_replicas) {
  sub.add_option("--graph", f.cfg.graph, "grid:WxH, torus:WxH, strip:LxW, cylinder:LxW, path:N, cycle:N or a .json file");
  sub.add_option("--edge-law", f.cfg.edge_law, "edge weight law: gaussian:m,s uniform:a,b twopoint:p,a,b pareto:alpha,scale const:c");
  sub.add_option("--vertex-law", f.cfg.vertex_law, "vertex weight law, same forms as --edge-law");
  sub.add_option("--seed", f.cfg.seed, "master seed; an entropy seed is drawn and recorded when omitted");
  sub.add_option("--engine", f.engine, "auto|enum|recursion|transfer|mcmc");
  sub.add_option("--threads", f.cfg.threads, "worker threads, 0 = available parallelism");
  sub.add_option("--sweeps", f.cfg.mcmc_sweeps, "heat-bath sweeps for the mcmc engine");
  if (with_replicas) sub.add_option("--replicas", f.cfg.replicas, "disorder replicas");
  sub.add_option("--config", f.config_path, "key=value file; command-line flags take precedence");
  sub.add_option("--out", f.out, "CSV output path; the JSON summary goes next to it with a .json extension");
}

void add_r_list(CLI::App& sub, Flags& f) {
  sub.add_option("--R", f.cfg.r_list, "comma-separated radii")->delimiter(',');
  sub.add_option("--edge", f.edge, "target edge id, -1 = most central edge");
  sub.add_option("--fit-floor", f.cfg.fit_floor, "values at or below this are left out of the exponential fit");
}

void add_sizes(CLI::App& sub, Flags& f) {
  sub.add_option("--sizes", f.cfg.sizes, "comma-separated size ladder applied to --graph")->delimiter(',');
}

}  // namespace

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config: " + path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ValidationError("config: " + path + ":" + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, trim(line.substr(eq + 1))).second)
      throw ValidationError("config: " + path + ": duplicate key '" + key + "'");
  }
  return out;
}

std::string git_blob_hash(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("sha1 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Disordered monomer-dimer model: exact Gibbs computation, sampling, coupling and experiments", "mdm"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough(false);

  Flags f;
  std::map<CLI::App*, Runner> runners;
  auto add = [&](const char* name, const char* help, Runner run, bool replicas) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(*sub, f, replicas);
    runners[sub] = std::move(run);
    return sub;
  };

  add("gibbs", "exact log Z and one-point marginals for one disorder draw (CSV: kind,index,marginal)", run_gibbs, false);
  auto* sample = add("sample", "draw matchings for one disorder draw (CSV: sample,size,edges)", run_sample, false);
  sample->add_option("--samples", f.samples, "number of matchings");
  sample->add_option("--thin", f.thin, "sweeps between recorded chain states");
  auto* couple = add("couple", "disagreement probability of the boundary coupling (CSV: R,estimate,stderr,replicas,seed)",
                     run_couple, true);
  add_r_list(*couple, f);
  auto* decay = add("decay", "E|<1_e>_G - <1_e>_ball(e,R)| against R (CSV: R,mean,stderr,n)", run_decay, true);
  add_r_list(*decay, f);
  decay->add_flag("!--no-two-point", f.two_point, "skip the two-point covariance curve");
  add("clt-free-energy", "free-energy fluctuations over replicas (CSV: replica,seed,statistic)", run_clt_free_energy, true);
  auto* dimer = add("clt-dimer", "dimer-count fluctuations over replicas (CSV: replica,seed,statistic)", run_clt_dimer, true);
  add_sizes(*dimer, f);
  auto* varscan = add("varscan", "Var(F) against system size (CSV: size,var,stderr,upper_bound)", run_varscan, true);
  add_sizes(*varscan, f);
  varscan->add_option("--variance-floor", f.cfg.variance_floor, "lower threshold for Var(F)/|E|");
  auto* truncate = add("truncate", "truncated against untruncated free energy (CSV: size,value,stderr,level)", run_truncate, true);
  add_sizes(*truncate, f);
  truncate->add_option("--kappa", f.cfg.kappa, "truncation level exponent, L = n^kappa");
  truncate->add_option("--t", f.cfg.truncation_t, "interpolation parameter in [0,1]");
  auto* locality = add("derivative-locality", "local approximation error of the resampling derivative (CSV: R,mean,stderr,n)",
                       run_locality, true);
  add_r_list(*locality, f);

  CLI::App* sub = nullptr;
  try {
    app.parse(argc, argv);
    sub = app.get_subcommands().front();
    if (!f.config_path.empty()) apply_config(*sub, f.config_path);
  } catch (const CLI::CallForHelp&) {
    // top-level help covers every subcommand
    std::cout << (app.get_subcommands().empty() ? app.help("", CLI::AppFormatMode::All) : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    CLI::Option* seed_opt = sub->get_option("--seed");
    const bool entropy = seed_opt->count() == 0;
    if (entropy) {
      seed_opt->add_result(std::to_string(entropy_seed()));
      seed_opt->run_callback();
    }
    f.cfg.engine = parse_engine(f.engine);
    if (f.edge < -1) throw ValidationError("edge must be >= 0 (or -1 for the central edge)");
    if (f.edge >= 0) f.cfg.edge = f.edge;
    f.cfg.validate();

    std::string csv, summary_path;
    if (!f.out.empty()) {
      std::filesystem::path p(f.out);
      if (p.extension() == ".json") throw ValidationError("out: the CSV path must not end in .json");
      csv = f.out;
      summary_path = p.replace_extension(".json").string();
    }

    const auto echo = echo_options(*sub);
    json inputs{{"subcommand", sub->get_name()}, {"config", echo}};
    if (f.cfg.graph.ends_with(".json")) {
      std::ifstream in(f.cfg.graph, std::ios::binary);
      std::ostringstream bytes;
      bytes << in.rdbuf();
      inputs["graph_file"] = bytes.str();
    }

    std::cerr << "mdm " << sub->get_name() << ": graph " << f.cfg.graph << ", seed " << f.cfg.seed
              << (entropy ? " (entropy)" : "") << "\n";
    json results = runners.at(sub)(f, csv);

    json outputs = json::array();
    if (!csv.empty()) outputs.push_back(csv);
    if (!summary_path.empty()) outputs.push_back(summary_path);
    json manifest{{"subcommand", sub->get_name()},
                  {"config", echo},
                  {"resolved", f.cfg.to_json()},
                  {"seed_source", entropy ? "entropy" : "flag"},
                  {"timestamp", utc_timestamp()},
                  {"outputs", outputs},
                  {"content_hash", git_blob_hash(inputs.dump())}};
    manifest["resolved"]["threads"] = resolve_threads(f.cfg.threads);
    const json doc{{"manifest", manifest}, {"results", results}};
    const std::string text = doc.dump(2) + "\n";
    if (!summary_path.empty()) write_text(summary_path, text);
    std::cout << text;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "mdm " << sub->get_name() << ": done in " << secs << " s\n";
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace mdm
