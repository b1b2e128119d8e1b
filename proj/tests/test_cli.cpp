#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mdm/cli.hpp"
#include "mdm/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mdm_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Run run(const std::string& args, const fs::path& dir) {
  const std::string cmd = "cd '" + dir.string() + "' && '" MDM_BINARY "' " + args + " > stdout.txt 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "stdout.txt");
  r.err = slurp(dir / "stderr.txt");
  return r;
}

}  // namespace

TEST_CASE("gibbs on the zero-weight three-vertex path") {
  const auto dir = scratch_dir("gibbs");
  const auto r = run("gibbs --graph path:3 --edge-law const:0 --vertex-law const:0", dir);
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(std::abs(j["results"]["log_z"].get<double>() - std::log(3.0)) < 1e-12);
  for (double p : j["results"]["edge_marginals"]) CHECK(std::abs(p - 1.0 / 3) < 1e-12);
  CHECK(j["manifest"]["seed_source"] == "entropy");
  CHECK(j["manifest"]["outputs"].empty());
}

TEST_CASE("exit codes") {
  const auto dir = scratch_dir("exit");
  auto r = run("gibbs --graph grid:0x5", dir);
  CHECK(r.code == 1);
  CHECK(r.err.find("width") != std::string::npos);
  r = run("gibbs --graph path:3 --no-such-flag 1", dir);
  CHECK(r.code == 1);
  CHECK(r.err.find("--graph") != std::string::npos);  // usage text
  CHECK(run("frobnicate", dir).code == 1);
  CHECK(run("gibbs --edge-law gaussian:0", dir).code == 1);
  CHECK(run("clt-free-energy --graph strip:5x2 --replicas 0", dir).code == 1);
  // enumeration refuses a graph beyond its size guard at run time
  CHECK(run("gibbs --graph grid:6x6 --engine enum --seed 1", dir).code == 2);
}

TEST_CASE("help lists every subcommand") {
  const auto dir = scratch_dir("help");
  const auto r = run("--help", dir);
  REQUIRE(r.code == 0);
  for (const char* sub : {"gibbs", "sample", "couple", "decay", "clt-free-energy", "clt-dimer", "varscan", "truncate",
                          "derivative-locality"})
    CHECK(r.out.find(sub) != std::string::npos);
  CHECK(r.out.find("--edge-law") != std::string::npos);
}

TEST_CASE("clt-free-energy writes CSV and summary and reruns byte-identically") {
  const auto dir = scratch_dir("clt");
  const std::string args = "clt-free-energy --graph strip:100x4 --replicas 2000 --seed 7 --engine transfer --out run.csv";
  auto r = run(args, dir);
  REQUIRE(r.code == 0);
  const std::string csv = slurp(dir / "run.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2001);
  CHECK(csv.rfind("replica,seed,statistic\n", 0) == 0);
  const auto j = json::parse(slurp(dir / "run.json"));
  for (const auto& f : j["manifest"]["outputs"]) CHECK(fs::exists(dir / f.get<std::string>()));
  CHECK(j["manifest"]["content_hash"].get<std::string>().size() == 40);
  CHECK(j["results"]["summary"]["n"] == 2000);

  r = run(args, dir);
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "run.csv") == csv);
  CHECK(json::parse(slurp(dir / "run.json"))["manifest"]["content_hash"] == j["manifest"]["content_hash"]);
}

TEST_CASE("config file round-trips through the summary echo") {
  const auto dir = scratch_dir("config");
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "# decay run\n"
           "graph = grid:5x5\n"
           "edge-law=uniform:-1,1\n"
           "replicas=20\n"
           "seed=11\n"
           "R=1,2\n";
  }
  auto r = run("decay --config run.cfg --replicas 10 --out a.csv", dir);
  REQUIRE(r.code == 0);
  const auto echo = json::parse(r.out)["manifest"]["config"];
  CHECK(echo["graph"] == "grid:5x5");
  CHECK(echo["edge-law"] == "uniform:-1,1");
  CHECK(echo["replicas"] == "10");  // flag beats file
  CHECK(echo["seed"] == "11");
  CHECK(echo["R"] == "1,2");
  CHECK(json::parse(r.out)["results"]["rows"].size() == 2);

  {
    std::ofstream cfg(dir / "echo.cfg");
    for (const auto& [k, v] : echo.items()) cfg << k << "=" << v.get<std::string>() << "\n";
  }
  r = run("decay --config echo.cfg --out b.csv", dir);
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(json::parse(r.out)["manifest"]["config"] == echo);

  {
    std::ofstream cfg(dir / "bad.cfg");
    cfg << "colour=blue\n";
  }
  CHECK(run("decay --config bad.cfg", dir).code == 1);
}

TEST_CASE("config reader and content hash") {
  const auto dir = scratch_dir("reader");
  {
    std::ofstream cfg(dir / "x.cfg");
    cfg << "\n# comment\n a = 1 \nb=x=y\n";
  }
  const auto m = mdm::read_config_file((dir / "x.cfg").string());
  CHECK(m.size() == 2);
  CHECK(m.at("a") == "1");
  CHECK(m.at("b") == "x=y");
  {
    std::ofstream cfg(dir / "dup.cfg");
    cfg << "a=1\na=2\n";
  }
  CHECK_THROWS_AS(mdm::read_config_file((dir / "dup.cfg").string()), mdm::ValidationError);
  CHECK_THROWS_AS(mdm::read_config_file((dir / "missing.cfg").string()), mdm::ValidationError);
  // git hash-object of "hello\n"
  CHECK(mdm::git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}
