#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "hrc/app_config.hpp"
#include "hrc/experiment.hpp"
#include "hrc/ws_server.hpp"

namespace fs = std::filesystem;
using namespace hrc;

namespace {

AppConfig config_or_default(const std::string& path) { return path.empty() ? AppConfig{} : load_config(path); }

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-")
    std::cout << text << (text.ends_with('\n') ? "" : "\n");
  else
    write_file(out, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human-robot collaborative assembly simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out;
  std::string policy_name = "adaptive";
  int subjects = 1;
  std::uint64_t seed = 1;
  int threads = 0;

  auto* simulate = app.add_subcommand("simulate", "Run sampled subjects under one policy");
  simulate->add_option("--policy", policy_name, "timing|sensor|adaptive")
      ->check(CLI::IsMember({"timing", "sensor", "adaptive"}));
  simulate->add_option("--subjects", subjects, "Number of simulated subjects")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", seed, "Base seed");
  simulate->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
  simulate->add_option("--out", out, "Output JSON file (default stdout)");

  std::string crn = "on";
  std::string out_dir;
  auto* experiment = app.add_subcommand("experiment", "Within-subject comparison of all three policies");
  experiment->add_option("--subjects", subjects, "Number of simulated subjects")->check(CLI::PositiveNumber);
  experiment->add_option("--seed", seed, "Base seed");
  experiment->add_option("--crn", crn, "on: one trace per subject shared by all policies; off: independent traces")
      ->check(CLI::IsMember({"on", "off"}));
  experiment->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
  experiment->add_option("--out", out_dir, "Output directory")->required();
  experiment->add_option("--threads", threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);

  CalibrationTarget target;
  std::string config_out;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Fit the population mean placement time to a target");
  calibrate_cmd->add_option("--target-total", target.target_total_time, "Target mean total time (s)")
      ->check(CLI::PositiveNumber);
  calibrate_cmd->add_option("--tolerance", target.tolerance, "Allowed relative error");
  calibrate_cmd->add_option("--subjects", target.n_subjects, "Simulated subjects per evaluation")
      ->check(CLI::PositiveNumber);
  calibrate_cmd->add_option("--seed", target.seed, "Seed shared by every evaluation");
  calibrate_cmd->add_flag("--fit-weights", target.fit_weights, "Also fit the adaptive outer weights");
  calibrate_cmd->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
  calibrate_cmd->add_option("--out", out, "Output JSON file (default stdout)");
  calibrate_cmd->add_option("--config-out", config_out, "Write the calibrated run config here");
  calibrate_cmd->add_option("--threads", threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);

  ServerOptions server;
  std::string session_dir = "sessions";
  auto* serve = app.add_subcommand("serve", "Host live sessions over websocket");
  serve->add_option("--port", server.port, "TCP port");
  serve->add_option("--address", server.address, "Bind address");
  serve->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
  serve->add_option("--sessions-dir", session_dir, "Where completed sessions are written");
  serve->add_option("--timeout", server.inactivity_timeout, "Inactivity timeout (s)")->check(CLI::PositiveNumber);

  std::string trace_path;
  auto* replay = app.add_subcommand("replay", "Replay a recorded or generated trace under a policy");
  replay->add_option("--trace", trace_path, "Trace JSON")->required()->check(CLI::ExistingFile);
  replay->add_option("--policy", policy_name, "timing|sensor|adaptive")
      ->required()
      ->check(CLI::IsMember({"timing", "sensor", "adaptive"}));
  replay->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
  replay->add_option("--out", out, "Output JSON file (default stdout)");
  std::string events_out;
  replay->add_option("--events", events_out, "Also write the event log (JSON lines)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      const auto cfg = config_or_default(config_path);
      const auto policy = policy_from_string(policy_name);
      nlohmann::ordered_json doc;
      doc["policy"] = policy_name;
      doc["seed"] = seed;
      doc["subjects"] = subjects;
      doc["config"] = setup_to_json(cfg.setup);
      auto runs = nlohmann::ordered_json::array();
      for (int s = 0; s < subjects; ++s) {
        const auto profile = sample_subject(cfg.setup.population, subject_profile_seed(seed, s), subject_label(s));
        const auto trace_seed = subject_trace_seed(seed, s, 0);
        const auto trace = generate_trace(profile, cfg.setup.task, trace_seed);
        const auto record = simulate_run(cfg.setup, policy, trace, trace_seed);
        runs.push_back(nlohmann::ordered_json::parse(run_record_to_json(record)));
      }
      doc["runs"] = runs;
      emit(out, doc.dump(2));
    } else if (*experiment) {
      auto cfg = config_or_default(config_path);
      if (experiment->count("--subjects")) cfg.plan.n_subjects = subjects;
      if (experiment->count("--seed")) cfg.plan.seed = seed;
      if (experiment->count("--crn")) cfg.plan.crn = crn == "on" ? CrnMode::shared_trace : CrnMode::independent_traces;
      if (experiment->count("--threads")) cfg.plan.threads = threads;
      const auto report = run_experiment(cfg.plan, cfg.setup);
      const fs::path dir(out_dir);
      write_file(dir / "report.json", report_to_json(report));
      write_file(dir / "runs.csv", runs_csv(report));
      write_file(dir / "comparisons.csv", comparisons_csv(report));
      for (const auto& c : report.comparisons)
        std::cout << to_string(c.measure) << ": " << to_string(c.policy_b) << " vs " << to_string(c.policy_a) << " "
                  << c.pct_diff << "% lower, p=" << c.p_value << (c.significant ? " *" : "") << "\n";
      if (report.aborted) {
        std::cerr << "hrcsim: experiment aborted: " << report.abort_reason << "\n";
        return 1;
      }
    } else if (*calibrate_cmd) {
      auto cfg = config_or_default(config_path);
      try {
        const auto result = calibrate(target, cfg.setup, threads);
        emit(out, calibration_to_json(target, result));
        if (!config_out.empty()) {
          cfg.setup.population.pop_mean_place_b = result.pop_mean_place_b;
          cfg.setup.policies.adaptive.initial_weights = result.weights;
          write_file(config_out, config_to_json(cfg));
        }
      } catch (const CalibrationError& ex) {
        emit(out, calibration_to_json(target, ex.best()));
        throw;
      }
    } else if (*serve) {
      const auto cfg = config_or_default(config_path);
      server.setup = cfg.setup;
      server.out_dir = fs::path(session_dir);
      server.stop_on_signal = true;
      WsServer ws(server);
      std::cerr << "hrcsim: listening on ws://" << server.address << ":" << ws.port() << "\n";
      ws.run();
    } else if (*replay) {
      const auto cfg = config_or_default(config_path);
      const auto trace = trace_from_json(read_file(trace_path));
      validate_trace(trace, cfg.setup.task).require();
      std::uint64_t trace_seed = 0;
      if (const auto* sampled = std::get_if<SampledProvenance>(&trace.provenance)) trace_seed = sampled->seed;
      const auto record = simulate_run(cfg.setup, policy_from_string(policy_name), trace, trace_seed);
      emit(out, run_record_to_json(record));
      if (!events_out.empty()) write_file(events_out, to_jsonl(record.event_log));
    }
  } catch (const std::exception& ex) {
    std::cerr << "hrcsim: error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
