#include "hrc/app_config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

namespace hrc {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void only_keys(const json& j, std::string_view section, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) throw Error("config: section '" + std::string(section) + "' must be an object");
  for (const auto& [k, _] : j.items()) {
    bool known = false;
    for (auto key : keys) known = known || key == k;
    if (!known) throw Error("config: unknown key '" + std::string(section) + "." + k + "'");
  }
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_task(const json& j, ExperimentSetup& s) {
  only_keys(j, "task",
            {"cycles_total", "cubes_b_per_cycle", "place_a_duration", "handover_prep_duration",
             "secondary_unit_duration", "buffer_capacity", "secondary_during_placement"});
  auto& t = s.task;
  take(j, "cycles_total", t.cycles_total);
  take(j, "cubes_b_per_cycle", t.cubes_b_per_cycle);
  take(j, "place_a_duration", t.place_a_duration);
  take(j, "handover_prep_duration", t.handover_prep_duration);
  take(j, "secondary_unit_duration", t.secondary_unit_duration);
  take(j, "buffer_capacity", t.buffer_capacity);
  take(j, "secondary_during_placement", s.secondary_during_placement);
}

void read_population(const json& j, PopulationModel& p) {
  only_keys(j, "human_population",
            {"pop_mean_place_b", "pop_sd", "cv_mean", "cv_sd", "drift_mean", "drift_sd", "mean_place_a",
             "fetch_reaction"});
  take(j, "pop_mean_place_b", p.pop_mean_place_b);
  take(j, "pop_sd", p.pop_sd);
  take(j, "cv_mean", p.cv_mean);
  take(j, "cv_sd", p.cv_sd);
  take(j, "drift_mean", p.drift_mean);
  take(j, "drift_sd", p.drift_sd);
  take(j, "mean_place_a", p.mean_place_a);
  take(j, "fetch_reaction", p.fetch_reaction);
}

void read_policies(const json& j, PolicyConfigs& p) {
  only_keys(j, "policies", {"timing", "sensor", "adaptive"});
  if (j.contains("timing")) {
    only_keys(j["timing"], "policies.timing", {"interval"});
    take(j["timing"], "interval", p.timing.interval);
  }
  if (j.contains("sensor")) {
    only_keys(j["sensor"], "policies.sensor", {"trigger_pick_index"});
    take(j["sensor"], "trigger_pick_index", p.sensor.trigger_pick_index);
  }
  if (j.contains("adaptive")) {
    const auto& a = j["adaptive"];
    only_keys(a, "policies.adaptive", {"weights", "bands", "step", "adjust_inner"});
    auto& w = p.adaptive.initial_weights;
    if (a.contains("weights")) {
      const auto v = a["weights"].get<std::vector<double>>();
      if (v.size() != 6) throw Error("config: policies.adaptive.weights needs 6 entries (alpha..theta)");
      w = Weights{v[0], v[1], v[2], v[3], v[4], v[5]};
    }
    auto& c = p.adaptive.controller;
    if (a.contains("bands")) {
      const auto v = a["bands"].get<std::vector<double>>();
      if (v.size() != 2) throw Error("config: policies.adaptive.bands needs [small, large]");
      c.small_band = v[0];
      c.large_band = v[1];
    }
    take(a, "step", c.step);
    take(a, "adjust_inner", c.adjust_inner);
  }
}

void read_plan(const json& j, ExperimentPlan& p) {
  only_keys(j, "experiment", {"n_subjects", "crn", "seed", "replications", "threads"});
  take(j, "n_subjects", p.n_subjects);
  if (j.contains("crn")) p.crn = crn_from_string(j["crn"].get<std::string>());
  take(j, "seed", p.seed);
  take(j, "replications", p.replications);
  take(j, "threads", p.threads);
}

}  // namespace

AppConfig parse_config(std::string_view text) {
  AppConfig cfg;
  try {
    const auto j = json::parse(text);
    only_keys(j, "(root)", {"task", "human_population", "policies", "experiment"});
    if (j.contains("task")) read_task(j["task"], cfg.setup);
    if (j.contains("human_population")) read_population(j["human_population"], cfg.setup.population);
    if (j.contains("policies")) read_policies(j["policies"], cfg.setup.policies);
    if (j.contains("experiment")) read_plan(j["experiment"], cfg.plan);
  } catch (const json::exception& ex) {
    throw Error(std::string("config: ") + ex.what());
  }
  Validation v;
  for (const auto& part : {validate_config(cfg.setup.task), validate_population(cfg.setup.population),
                           validate_policies(cfg.setup.policies, cfg.setup.task), validate_plan(cfg.plan)})
    v.violations.insert(v.violations.end(), part.violations.begin(), part.violations.end());
  v.require();
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

ojson setup_to_json(const ExperimentSetup& s) {
  ojson j;
  j["task"] = {{"cycles_total", s.task.cycles_total},
               {"cubes_b_per_cycle", s.task.cubes_b_per_cycle},
               {"place_a_duration", s.task.place_a_duration},
               {"handover_prep_duration", s.task.handover_prep_duration},
               {"secondary_unit_duration", s.task.secondary_unit_duration},
               {"buffer_capacity", s.task.buffer_capacity},
               {"secondary_during_placement", s.secondary_during_placement}};
  const auto& p = s.population;
  j["human_population"] = {{"pop_mean_place_b", p.pop_mean_place_b}, {"pop_sd", p.pop_sd},
                           {"cv_mean", p.cv_mean},                   {"cv_sd", p.cv_sd},
                           {"drift_mean", p.drift_mean},             {"drift_sd", p.drift_sd},
                           {"mean_place_a", p.mean_place_a},         {"fetch_reaction", p.fetch_reaction}};
  const auto& a = s.policies.adaptive;
  j["policies"] = {{"timing", {{"interval", s.policies.timing.interval}}},
                   {"sensor", {{"trigger_pick_index", s.policies.sensor.trigger_pick_index}}},
                   {"adaptive",
                    {{"weights", a.initial_weights.all()},
                     {"bands", {a.controller.small_band, a.controller.large_band}},
                     {"step", a.controller.step},
                     {"adjust_inner", a.controller.adjust_inner}}}};
  return j;
}

std::string config_to_json(const AppConfig& cfg) {
  auto j = setup_to_json(cfg.setup);
  j["experiment"] = {{"n_subjects", cfg.plan.n_subjects},
                     {"crn", to_string(cfg.plan.crn)},
                     {"seed", cfg.plan.seed},
                     {"replications", cfg.plan.replications},
                     {"threads", cfg.plan.threads}};
  return j.dump(2);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace hrc
