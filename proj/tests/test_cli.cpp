#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <catch_amalgamated.hpp>

#include "pvot/cli.hpp"
#include "pvot/dgp.hpp"
#include "pvot/random.hpp"

using namespace pvot;
using Catch::Matchers::ContainsSubstring;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "pvot");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::parse_and_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pvot_cli_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path write_sample(const std::filesystem::path& dir, dgp::DgpKind kind, std::size_t n) {
  auto rng = make_stream(123, 0);
  const auto path = dir / (std::string(dgp::to_string(kind)) + ".csv");
  dgp::write_sample_csv(path, dgp::gen_sample(dgp::make_spec(kind), n, rng));
  return path;
}

}  // namespace

TEST_CASE("usage errors exit 1", "[cli]") {
  CHECK(run({}).code == cli::kExitUsage);
  const auto unknown = run({"mc", "--bogus-flag"});
  CHECK(unknown.code == cli::kExitUsage);
  CHECK_THAT(unknown.err, ContainsSubstring("--bogus-flag"));
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"test-funcform"}).code == cli::kExitUsage);
  const auto bad_key = run({"mc", "--set", "experiment.nope=1", "--out", scratch_dir("badkey").string()});
  CHECK(bad_key.code == cli::kExitUsage);
  CHECK_THAT(bad_key.err, ContainsSubstring("experiment.nope"));
  CHECK(run({"mc", "--preset", "no-such-preset"}).code == cli::kExitUsage);
  CHECK(run({"test-break", "--data", "x.csv", "--grid", "0.1:0.9"}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);
  CHECK(run({"--version"}).code == cli::kExitOk);
}

TEST_CASE("data file errors exit 2 and name the token", "[cli]") {
  const auto dir = scratch_dir("data_errors");
  const auto missing = run({"test-funcform", "--data", (dir / "absent.csv").string(), "--out", dir.string()});
  CHECK(missing.code == cli::kExitRuntime);
  CHECK_THAT(missing.err, ContainsSubstring("absent.csv"));

  std::ofstream(dir / "bad.csv") << "t,y,x1\n1,0.5,1.0\n2,oops,2.0\n";
  const auto malformed = run({"test-funcform", "--data", (dir / "bad.csv").string(), "--out", dir.string()});
  CHECK(malformed.code == cli::kExitRuntime);
  CHECK_THAT(malformed.err, ContainsSubstring("oops"));
}

TEST_CASE("test-funcform prints reports and writes csvs", "[cli]") {
  const auto dir = scratch_dir("funcform");
  const auto data = write_sample(dir, dgp::DgpKind::IidQuadratic, 150);
  const auto r = run({"test-funcform", "--data", data.string(), "--levels", ".01,.05,.10", "--bootstrap", "100",
                      "--grid", "0.0001:1:10", "--out", (dir / "out").string()});
  INFO(r.err);
  REQUIRE(r.code == cli::kExitOk);
  CHECK_THAT(r.out, ContainsSubstring("pvot"));
  CHECK_THAT(r.out, ContainsSubstring("occupation="));
  CHECK_THAT(r.out, ContainsSubstring("icm"));
  CHECK(std::filesystem::exists(dir / "out" / "pvalue_path.csv"));
  CHECK(std::filesystem::exists(dir / "out" / "reports.csv"));
  CHECK(std::filesystem::exists(dir / "out" / "manifest.ini"));
  CHECK(slurp(dir / "out" / "pvalue_path.csv").find("lambda,stat,pvalue") != std::string::npos);

  const auto again = run({"test-funcform", "--data", data.string(), "--levels", ".01,.05,.10", "--bootstrap", "100",
                          "--grid", "0.0001:1:10", "--out", (dir / "out2").string(), "--threads", "2"});
  REQUIRE(again.code == cli::kExitOk);
  CHECK(slurp(dir / "out" / "reports.csv") == slurp(dir / "out2" / "reports.csv"));
  CHECK(slurp(dir / "out" / "pvalue_path.csv") == slurp(dir / "out2" / "pvalue_path.csv"));
}

TEST_CASE("test-break runs on an autoregressive sample", "[cli]") {
  const auto dir = scratch_dir("break");
  const auto data = write_sample(dir, dgp::DgpKind::Ar1, 200);
  const auto r = run({"test-break", "--data", data.string(), "--out", (dir / "out").string()});
  INFO(r.err);
  REQUIRE(r.code == cli::kExitOk);
  CHECK_THAT(r.out, ContainsSubstring("test-break"));
  CHECK(std::filesystem::exists(dir / "out" / "reports.csv"));
}

TEST_CASE("test-garch reuses a cached reference table", "[cli][cache]") {
  const auto dir = scratch_dir("garch");
  const auto data = write_sample(dir, dgp::DgpKind::Garch, 100);
  const std::vector<std::string> args{"test-garch", "--data", data.string(), "--grid", "0.01:0.99:0.05",
                                      "--truncation", "1000", "--draws", "500", "--cache", (dir / "ref").string(),
                                      "--out", (dir / "out").string()};
  const auto first = run(args);
  INFO(first.err);
  REQUIRE(first.code == cli::kExitOk);
  CHECK_THAT(first.out, ContainsSubstring("simulated"));
  const auto second = run(args);
  REQUIRE(second.code == cli::kExitOk);
  CHECK_THAT(second.out, ContainsSubstring("loaded from cache"));

  const auto listed = run({"cache", "list", "--cache", (dir / "ref").string()});
  CHECK(listed.code == cli::kExitOk);
  CHECK_THAT(listed.out, ContainsSubstring("ref_"));
  const auto cleared = run({"cache", "clear", "--cache", (dir / "ref").string()});
  CHECK(cleared.code == cli::kExitOk);
  CHECK_THAT(cleared.out, ContainsSubstring("removed 2"));
  CHECK(run({"cache", "list"}).code == (std::getenv("PVOT_CACHE_DIR") ? cli::kExitOk : cli::kExitUsage));
}

TEST_CASE("mc writes outputs and reruns from its manifest", "[cli]") {
  const auto dir = scratch_dir("mc");
  const std::vector<std::string> sets{"--set", "experiment.replications=100", "--set", "experiment.n=50",
                                      "--set", "funcform.dgps=iid_linear", "--set", "funcform.bootstrap=0",
                                      "--set", "grid.points=10"};
  std::vector<std::string> args{"mc", "--preset", "desk-funcform", "--seed", "42", "--out", (dir / "a").string()};
  args.insert(args.end(), sets.begin(), sets.end());
  const auto r = run(args);
  INFO(r.err);
  REQUIRE(r.code == cli::kExitOk);
  REQUIRE(std::filesystem::exists(dir / "a" / "mc_summary.csv"));
  REQUIRE(std::filesystem::exists(dir / "a" / "manifest.ini"));

  const auto replay = run({"mc", "--config", (dir / "a" / "manifest.ini").string(), "--threads", "2", "--out",
                           (dir / "b").string()});
  INFO(replay.err);
  REQUIRE(replay.code == cli::kExitOk);
  CHECK(slurp(dir / "a" / "mc_summary.csv") == slurp(dir / "b" / "mc_summary.csv"));
}
