#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "crt/cli.hpp"
#include "crt/csv_io.hpp"
#include "crt/pipeline.hpp"
#include "crt/power.hpp"
#include "crt/scenario_io.hpp"

using namespace crt;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run crt_run(std::vector<std::string> args) {
  args.insert(args.begin(), "crt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("crt_cli_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("exit codes of the binary") {
  const std::string bin = CRT_BINARY;
  CHECK(shell(bin + " --help") == 0);
  CHECK(shell(bin + " power --pairs 16 --m 2700 --pi0 0.01 --km 0.4") == 0);
  CHECK(shell(bin + " power --pairs 16 --m 2700 --pi0 0.01") == 2);
  CHECK(shell(bin) == 2);
  CHECK(shell(bin + " analyze --data /nonexistent/dir") == 1);
}

TEST_CASE("power summary") {
  const auto r = crt_run({"power", "--pairs", "16", "--m", "2700", "--pi0", "0.01", "--km", "0.4"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("detectable reduction 0.39") != std::string::npos);

  const auto t = crt_run({"power", "--pairs", "16", "--m", "2700", "--pi0", "0.01", "--km", "0.4", "--km-reduced", "0.35"});
  CHECK(t.code == 0);
  CHECK(t.out.find("dropping one pair at km 0.35") != std::string::npos);

  CHECK(crt_run({"power", "--pairs", "16", "--m", "2700", "--pi0", "1.5", "--km", "0.4"}).code == 2);
  CHECK(crt_run({"power", "--pairs", "2", "--m", "2700", "--pi0", "0.01", "--km", "0.4"}).code == 1);
  CHECK(crt_run({"power", "--pairs", "16", "--m", "2700", "--pi0", "0.01", "--km", "0.4", "--grid", "rho=0:1:1"}).code ==
        2);
}

TEST_CASE("power grid") {
  const auto r =
      crt_run({"power", "--pairs", "16", "--m", "2700", "--pi0", "0.01", "--km", "0.4", "--grid", "km=0.2:0.4:0.05"});
  REQUIRE(r.code == 0);
  const auto table = parse_csv(r.out);
  REQUIRE(table.rows.size() == 5);
  const auto km = table.column("km");
  const auto red = table.column("detectable_reduction");
  for (const auto& row : table.rows) {
    PowerSpec s;
    s.pairs = 16;
    s.m = 2700;
    s.pi0 = 0.01;
    s.km = parse_double(row[km]);
    CHECK(parse_double(row[red]) == detectable_reduction(s));
  }
  CHECK(parse_double(table.rows.front()[km]) == doctest::Approx(0.2));
  CHECK(parse_double(table.rows.back()[km]) == doctest::Approx(0.4));

  const auto two = crt_run({"power", "--pairs", "16", "--m", "2700", "--pi0", "0.01", "--km", "0.4", "--grid",
                            "pairs=4:6:1", "--grid", "km=0.2:0.3:0.1"});
  REQUIRE(two.code == 0);
  const auto t2 = parse_csv(two.out);
  REQUIRE(t2.rows.size() == 6);
  CHECK(t2.rows[0][t2.column("pairs")] == "4");
  CHECK(t2.rows[1][t2.column("pairs")] == "4");
  CHECK(t2.rows[2][t2.column("pairs")] == "5");
}

TEST_CASE("match") {
  TempDir dir("match");
  {
    std::ofstream f(dir / "communities.csv");
    f << "id,region,E4,E7\n1,A,0,5\n2,A,10,5\n3,A,1,5\n4,A,11,5\n5,B,3,1\n6,B,4,2\n";
  }
  const auto r = crt_run({"match", "--communities", (dir / "communities.csv").string()});
  REQUIRE(r.code == 0);
  const auto table = parse_csv(r.out);
  REQUIRE(table.rows.size() == 3);
  CHECK(table.rows[0][table.column("id_1")] == "1");
  CHECK(table.rows[0][table.column("id_2")] == "3");
  CHECK(table.rows[1][table.column("id_1")] == "2");
  CHECK(table.rows[1][table.column("id_2")] == "4");
  CHECK(table.rows[2][table.column("region")] == "B");

  REQUIRE(crt_run({"match", "--communities", (dir / "communities.csv").string(), "--out", (dir / "pairs.csv").string()})
              .code == 0);
  const auto read = read_pairing_csv(dir / "pairs.csv");
  const auto lib = optimal_pairs_within_region(read_communities_csv(dir / "communities.csv"), kMatchVars);
  CHECK(read.pairs == lib.pairs);
  CHECK(read.regions == lib.regions);

  CHECK(crt_run({"match", "--communities", (dir / "communities.csv").string(), "--vars", "E9"}).code == 1);
}

TEST_CASE("simulate is byte-identical across runs") {
  TempDir a("sim_a"), b("sim_b");
  REQUIRE(crt_run({"simulate", "--seed", "5", "--replicate", "3", "--out", a.path.string()}).code == 0);
  REQUIRE(crt_run({"simulate", "--seed", "5", "--replicate", "3", "--out", b.path.string()}).code == 0);
  for (const auto* name : {"communities.csv", "individuals.csv", "pairs.csv", "truth.json"}) {
    CAPTURE(name);
    CHECK(slurp(a / name) == slurp(b / name));
    CHECK(!slurp(a / name).empty());
  }
  REQUIRE(crt_run({"simulate", "--seed", "5", "--replicate", "4", "--out", b.path.string()}).code == 0);
  CHECK(slurp(a / "individuals.csv") != slurp(b / "individuals.csv"));

  REQUIRE(crt_run({"simulate", "--seed", "5", "--null", "--out", b.path.string()}).code == 0);
  const auto truth = nlohmann::json::parse(slurp(b / "truth.json"));
  CHECK(truth.at("ratio").get<double>() == 1.0);
}

TEST_CASE("analyze matches the library") {
  TempDir dir("analyze");
  const auto cfg = load_scenario("scenario_a");
  REQUIRE(crt_run({"simulate", "--seed", "9", "--replicate", "2", "--out", dir.path.string()}).code == 0);
  const auto data = simulate_trial(cfg, 9, 2);

  for (const std::string est : {"adaptive", "unadjusted", "drop-pair", "break-match"}) {
    CAPTURE(est);
    const auto r = crt_run(
        {"analyze", "--data", dir.path.string(), "--estimator", est, "--out", (dir / (est + ".json")).string()});
    REQUIRE(r.code == 0);
    AnalysisOptions opts;
    opts.estimator = parse_estimator(est);
    const auto lib = to_json(analyze(data.communities, data.individuals, opts));
    CHECK(nlohmann::json::parse(slurp(dir / (est + ".json"))) == lib);
  }

  const auto tm = crt_run({"analyze", "--data", dir.path.string(), "--estimator", "tmle", "--q-var", "baseline_prevalence", "--g-var",
                           "none", "--out", (dir / "tmle.json").string()});
  REQUIRE(tm.code == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "tmle.json"));
  CHECK(j.at("selected_q_var") == kBaselinePrevalence);
  CHECK(j.at("selected_g_var").is_null());

  CHECK(crt_run({"analyze", "--data", dir.path.string(), "--estimator", "magic"}).code == 2);
  CHECK(crt_run({"analyze", "--data", dir.path.string(), "--estimator", "tmle", "--q-var", "nope"}).code == 1);
}

TEST_CASE("analyze output is byte-identical across runs") {
  TempDir dir("analyze_det");
  REQUIRE(crt_run({"simulate", "--seed", "4", "--scale", "0.25", "--out", dir.path.string()}).code == 0);
  const auto a = crt_run({"analyze", "--data", dir.path.string(), "--out", (dir / "a.json").string()});
  const auto b = crt_run({"analyze", "--data", dir.path.string(), "--out", (dir / "b.json").string()});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
}

TEST_CASE("replicate: single replicate equals a direct analysis") {
  TempDir dir("rep1");
  REQUIRE(crt_run({"replicate", "--reps", "1", "--seed", "6", "--scale", "0.25", "--estimators", "unadjusted",
                   "--out", (dir / "r.json").string()})
              .code == 0);
  auto cfg = load_scenario("scenario_a");
  cfg.size_scale = 0.25;
  const auto data = simulate_trial(cfg, 6, 0);
  AnalysisOptions opts;
  opts.estimator = Estimator::unadjusted;
  const auto e = analyze(data.communities, data.individuals, opts);
  const auto j = nlohmann::json::parse(slurp(dir / "r.json"));
  CHECK(j.at("mean_true_ratio").get<double>() == data.truth.ratio);
  const auto& s = j.at("estimators").at(0);
  CHECK(s.at("mean_ratio").get<double>() == e.ratio);
  CHECK(s.at("mean_se").get<double>() == e.log_se);
}

TEST_CASE("replicate is identical across thread counts") {
  TempDir dir("rep_threads");
  const std::vector<std::string> base{"replicate", "--reps", "6", "--seed", "3", "--scale", "0.25", "--estimators",
                                      "unadjusted,adaptive,drop-pair"};
  auto with = [&](const std::string& threads, const std::string& tag) {
    auto args = base;
    args.insert(args.end(), {"--threads", threads, "--out", (dir / (tag + ".json")).string(), "--rows",
                             (dir / (tag + ".csv")).string()});
    return crt_run(args);
  };
  const auto one = with("1", "one");
  const auto three = with("3", "three");
  const auto again = with("1", "again");
  REQUIRE(one.code == 0);
  CHECK(one.out == three.out);
  CHECK(slurp(dir / "one.json") == slurp(dir / "three.json"));
  CHECK(slurp(dir / "one.csv") == slurp(dir / "three.csv"));
  CHECK(slurp(dir / "one.json") == slurp(dir / "again.json"));

  CHECK(crt_run({"replicate", "--reps", "2", "--estimators", "bogus"}).code == 2);
  CHECK(crt_run({"replicate", "--reps", "0"}).code == 2);
}

TEST_CASE("scenario dump round-trips") {
  TempDir dir("scenario");
  for (const auto* name : {"scenario_a", "scenario_b", "null"}) {
    CAPTURE(name);
    const auto path = (dir / (std::string(name) + ".json")).string();
    REQUIRE(crt_run({"scenario", name, "--out", path}).code == 0);
    const auto reread = crt_run({"scenario", path});
    REQUIRE(reread.code == 0);
    CHECK(reread.out == slurp(path));
  }
  CHECK(crt_run({"scenario", "no_such_preset"}).code == 1);
}
