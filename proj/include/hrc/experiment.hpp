#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hrc/core_model.hpp"
#include "hrc/human_model.hpp"
#include "hrc/policies.hpp"

namespace hrc {

enum class CrnMode { shared_trace, independent_traces };

std::string_view to_string(CrnMode mode);
CrnMode crn_from_string(std::string_view name);

struct ExperimentPlan {
  int n_subjects = 80;
  CrnMode crn = CrnMode::shared_trace;
  std::uint64_t seed = 1;
  int replications = 1;
  int threads = 0;            // 0: hardware concurrency
  bool keep_records = false;  // retain full RunRecords (event logs) in the report
};

struct ExperimentSetup {
  TaskConfig task;
  PopulationModel population;
  PolicyConfigs policies;
  bool secondary_during_placement = true;
};

Validation validate_plan(const ExperimentPlan& plan);

// Batch runs of one subject under one policy with a sampled trace.
std::uint64_t subject_profile_seed(std::uint64_t base, int subject);
std::uint64_t subject_trace_seed(std::uint64_t base, int subject, int round);
std::string subject_label(int subject);

RunRecord simulate_run(const ExperimentSetup& setup, PolicyKind policy, const HumanTrace& trace, std::uint64_t seed);

struct RunSummary {
  std::string subject_id;
  int subject = 0;
  PolicyKind policy = PolicyKind::timing;
  int round = 0;  // position of this policy in the subject's random order
  int replication = 0;
  std::uint64_t trace_seed = 0;
  Seconds total_time = 0.0;
  Seconds human_idle = 0.0;
  Seconds robot_idle = 0.0;
  Seconds total_idle = 0.0;
};

struct PolicyStats {
  PolicyKind policy = PolicyKind::timing;
  double mean_total_time = 0.0;
  double sd_total_time = 0.0;
  double mean_total_idle = 0.0;
  double sd_total_idle = 0.0;
  double mean_human_idle = 0.0;
  double mean_robot_idle = 0.0;
};

enum class Measure { total_time, total_idle };
std::string_view to_string(Measure m);

// policy_a is the pair member with the larger mean (the baseline), so pct_diff
// is the reduction achieved by policy_b relative to policy_a.
struct Comparison {
  Measure measure = Measure::total_time;
  PolicyKind policy_a = PolicyKind::timing;
  PolicyKind policy_b = PolicyKind::adaptive;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double mean_diff = 0.0;
  double pct_diff = 0.0;
  double pct_diff_mean_of_ratios = 0.0;
  double p_value_raw = 1.0;
  double p_value = 1.0;  // Holm-adjusted over the three pairs of this measure
  bool significant = false;
};

struct ExperimentReport {
  ExperimentPlan plan;
  ExperimentSetup setup;
  std::vector<std::array<PolicyKind, 3>> policy_orders;
  std::vector<RunSummary> runs;  // ordered by (subject, policy)
  std::vector<PolicyStats> stats;
  std::vector<Comparison> comparisons;
  std::vector<RunRecord> records;  // only with plan.keep_records
  bool aborted = false;
  std::string abort_reason;

  const PolicyStats& stats_for(PolicyKind p) const;
  const Comparison& comparison(Measure m, PolicyKind x, PolicyKind y) const;
};

ExperimentReport run_experiment(const ExperimentPlan& plan, const ExperimentSetup& setup);

// Recomputes stats and comparisons from report.runs.
void summarize(ExperimentReport& report);

std::string report_to_json(const ExperimentReport& report);
std::string runs_csv(const ExperimentReport& report);
std::string comparisons_csv(const ExperimentReport& report);

// ---- paired permutation test ------------------------------------------------

enum class Sided { one, two };
enum class PermutationMethod { automatic, exact, monte_carlo };

struct PermutationOptions {
  PermutationMethod method = PermutationMethod::automatic;
  std::size_t resamples = 100000;
  std::uint64_t seed = 0x5eed5eedULL;
  int exact_limit = 20;  // automatic: enumerate all sign flips up to this n
};

// Sign-flip test of a zero-mean null on paired differences. One-sided tests
// the alternative mean > 0.
double paired_test(std::span<const double> diffs, Sided sided, const PermutationOptions& opts = {});

std::vector<double> holm_adjust(std::span<const double> p_values);

// ---- calibration ----------------------------------------------------------------

struct CalibrationTarget {
  Seconds target_total_time = 317.0;
  double tolerance = 0.10;
  PolicyKind policy = PolicyKind::sensor;
  int n_subjects = 500;
  std::uint64_t seed = 2024;
  bool fit_weights = false;
  Seconds search_min = 0.5;
  Seconds search_max = 8.0;
};

struct CalibrationResult {
  Seconds pop_mean_place_b = 0.0;
  Weights weights;
  Seconds achieved_mean = 0.0;
  double achieved_error = 0.0;  // |achieved - target| / target
  bool within_tolerance = false;
  double weight_fit_error = 0.0;  // mean relative n = 0 prediction error (fit_weights only)
  int evaluations = 0;
};

class CalibrationError : public Error {
 public:
  CalibrationError(const std::string& what, CalibrationResult best) : Error(what), best_(best) {}
  const CalibrationResult& best() const { return best_; }

 private:
  CalibrationResult best_;
};

// Mean total_time of `policy` over n sampled subjects (one trace each).
Seconds mean_total_time(const ExperimentSetup& setup, PolicyKind policy, int n_subjects, std::uint64_t seed,
                        int threads = 0);

CalibrationResult calibrate(const CalibrationTarget& target, const ExperimentSetup& setup, int threads = 0);

std::string calibration_to_json(const CalibrationTarget& target, const CalibrationResult& result);

}  // namespace hrc
