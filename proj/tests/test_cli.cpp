#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sys/wait.h>

#include <json.hpp>

#include "hrc/app_config.hpp"
#include "hrc/human_model.hpp"

using namespace hrc;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status;
  std::string out;
};

Result run_cli(const std::string& args) {
  const std::string cmd = std::string(HRCSIM_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int raw = pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "hrc_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("experiment writes the report, runs and comparisons") {
  const auto dir = scratch("experiment");
  const auto r = run_cli("experiment --subjects 80 --seed 7 --out " + dir.string());
  INFO(r.out);
  REQUIRE(r.status == 0);
  for (const char* f : {"report.json", "runs.csv", "comparisons.csv"}) CHECK(fs::exists(dir / f));
  const auto report = nlohmann::json::parse(read_file(dir / "report.json"));
  CHECK(report["plan"]["n_subjects"] == 80);
  CHECK(report["plan"]["seed"] == 7);
  CHECK(report["runs"].size() == 240);
  const auto csv = read_file(dir / "runs.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 241);
  CHECK(r.out.find("total_time") != std::string::npos);
}

TEST_CASE("simulate output is reproducible") {
  const auto dir = scratch("simulate");
  const std::string args = "simulate --policy adaptive --subjects 5 --seed 3 --out ";
  REQUIRE(run_cli(args + (dir / "a.json").string()).status == 0);
  REQUIRE(run_cli(args + (dir / "b.json").string()).status == 0);
  const auto a = read_file(dir / "a.json");
  CHECK(a == read_file(dir / "b.json"));
  const auto doc = nlohmann::json::parse(a);
  CHECK(doc["runs"].size() == 5);
  CHECK(doc["runs"][0]["policy"] == "adaptive");
  CHECK(doc["runs"][0]["metrics"]["per_cycle"].size() == 5);
}

TEST_CASE("calibrate hits the target total time") {
  const auto dir = scratch("calibrate");
  const auto r = run_cli("calibrate --target-total 317 --out " + (dir / "cal.json").string() + " --config-out " +
                         (dir / "cfg.json").string());
  INFO(r.out);
  REQUIRE(r.status == 0);
  const auto cal = nlohmann::json::parse(read_file(dir / "cal.json"));
  CHECK(cal["achieved_error"].get<double>() <= 0.10);
  CHECK(cal["within_tolerance"] == true);
  const auto cfg = load_config(dir / "cfg.json");
  CHECK(cfg.setup.population.pop_mean_place_b == cal["pop_mean_place_b"].get<double>());
}

TEST_CASE("unreachable calibration target fails but reports the best attempt") {
  const auto dir = scratch("calibrate_bad");
  const auto r = run_cli("calibrate --target-total 10 --subjects 20 --out " + (dir / "cal.json").string());
  CHECK(r.status != 0);
  CHECK(r.out.find("hrcsim: error:") != std::string::npos);
  const auto cal = nlohmann::json::parse(read_file(dir / "cal.json"));
  CHECK(cal["within_tolerance"] == false);
}

TEST_CASE("replay runs a trace file under a chosen policy") {
  const auto dir = scratch("replay");
  const auto trace = generate_trace(HumanProfile{"S001"}, TaskConfig{}, 12);
  write_file(dir / "trace.json", trace_to_json(trace));
  const auto r = run_cli("replay --trace " + (dir / "trace.json").string() + " --policy timing --out " +
                         (dir / "rec.json").string() + " --events " + (dir / "ev.jsonl").string());
  INFO(r.out);
  REQUIRE(r.status == 0);
  const auto rec = nlohmann::json::parse(read_file(dir / "rec.json"));
  CHECK(rec["policy"] == "timing");
  CHECK(rec["subject_id"] == "S001");
  const auto log = parse_jsonl(read_file(dir / "ev.jsonl"));
  CHECK(to_ms(derive_metrics(log, TaskConfig{}).total_time) == rec["metrics"]["total_time_ms"].get<std::int64_t>());
}

TEST_CASE("bad input exits nonzero") {
  CHECK(run_cli("experiment --frobnicate --out /tmp/x").status != 0);
  CHECK(run_cli("simulate --policy psychic").status != 0);
  CHECK(run_cli("").status != 0);
  const auto dir = scratch("badcfg");
  write_file(dir / "cfg.json", R"({"task": {"cycles_total": 0}})");
  const auto r = run_cli("simulate --config " + (dir / "cfg.json").string());
  CHECK(r.status != 0);
  CHECK(r.out.find("cycles_total") != std::string::npos);
}
