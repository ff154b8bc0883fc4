#include <catch2/catch.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

const std::string kCli = TEMSIM_CLI_PATH;
const std::string kScenarioDir = TEMSIM_SCENARIO_DIR;
const std::string kDataDir = TEMSIM_TEST_DATA_DIR;

int run_cli(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("cli: validate exit codes") {
  CHECK(run_cli("validate " + kScenarioDir + "/minimal.json") == 0);
  CHECK(run_cli("validate " + kDataDir + "/bad_dangling_feeder.json") == 1);
  CHECK(run_cli("validate " + kDataDir + "/no_such_file.json") == 2);
}

TEST_CASE("cli: run writes the full output set") {
  TempDir dir("temsim_cli_run");
  REQUIRE(run_cli("run " + kScenarioDir + "/minimal.json --out " + dir.path.string()) == 0);
  for (const char* f : {"ledger.csv", "contracts.csv", "ancillary.csv", "l3_trades.csv",
                        "violations.csv", "summary.json", "run_meta.json"}) {
    CHECK(std::filesystem::exists(dir.path / f));
  }
}

TEST_CASE("cli: seed override echoed in run metadata") {
  TempDir dir("temsim_cli_seed");
  REQUIRE(run_cli("run " + kScenarioDir + "/minimal.json --seed 99 --out " + dir.path.string()) ==
          0);
  const auto meta = slurp(dir.path / "run_meta.json");
  CHECK(meta.find("\"seed\": 99") != std::string::npos);
}

TEST_CASE("cli: --no-l3 leaves the trade log empty") {
  TempDir dir("temsim_cli_nol3");
  REQUIRE(run_cli("run " + kScenarioDir + "/desk_shortfall.json --no-l3 --out " +
                  dir.path.string()) == 0);
  const auto trades = slurp(dir.path / "l3_trades.csv");
  CHECK(trades == "slot_start,seller,buyer,quantity_kwh,payment\n");
}

TEST_CASE("cli: reruns into fresh directories are byte-identical") {
  TempDir a("temsim_cli_idem_a"), b("temsim_cli_idem_b");
  REQUIRE(run_cli("run " + kScenarioDir + "/minimal.json --out " + a.path.string()) == 0);
  REQUIRE(run_cli("run " + kScenarioDir + "/minimal.json --out " + b.path.string()) == 0);
  for (const char* f : {"ledger.csv", "contracts.csv", "ancillary.csv", "l3_trades.csv",
                        "violations.csv", "summary.json", "run_meta.json"}) {
    CHECK(slurp(a.path / f) == slurp(b.path / f));
  }
}

TEST_CASE("cli: compare of identical runs shows zero deltas") {
  TempDir a("temsim_cli_cmp_a"), b("temsim_cli_cmp_b");
  REQUIRE(run_cli("run " + kScenarioDir + "/minimal.json --out " + a.path.string()) == 0);
  REQUIRE(run_cli("run " + kScenarioDir + "/minimal.json --out " + b.path.string()) == 0);
  const auto out = (a.path / "cmp.json").string();
  REQUIRE(run_cli("compare " + a.path.string() + " " + b.path.string() + " --out " + out) == 0);
  const auto cmp = slurp(out);
  CHECK(cmp.find("\"penalty_delta\": 0") != std::string::npos);
  CHECK(cmp.find("\"cost_delta\": 0") != std::string::npos);
}

TEST_CASE("cli: compare rejects mismatched agent sets") {
  TempDir a("temsim_cli_mismatch_a"), b("temsim_cli_mismatch_b");
  REQUIRE(run_cli("run " + kScenarioDir + "/minimal.json --out " + a.path.string()) == 0);
  REQUIRE(run_cli("run " + kScenarioDir + "/desk.json --out " + b.path.string()) == 0);
  CHECK(run_cli("compare " + a.path.string() + " " + b.path.string()) == 1);
}

TEST_CASE("cli: compare with a missing directory is an io error") {
  TempDir a("temsim_cli_missing_a");
  REQUIRE(run_cli("run " + kScenarioDir + "/minimal.json --out " + a.path.string()) == 0);
  CHECK(run_cli("compare " + a.path.string() + " /tmp/temsim_does_not_exist_dir") == 2);
}

TEST_CASE("cli: report prints the summary") {
  TempDir a("temsim_cli_report");
  REQUIRE(run_cli("run " + kScenarioDir + "/minimal.json --out " + a.path.string()) == 0);
  CHECK(run_cli("report " + a.path.string()) == 0);
  CHECK(run_cli("report /tmp/temsim_does_not_exist_dir") == 2);
}
