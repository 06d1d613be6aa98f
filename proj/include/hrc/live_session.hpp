#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hrc/engine.hpp"
#include "hrc/experiment.hpp"

namespace hrc {

enum class SessionStatus { waiting, running, complete, aborted };
std::string_view to_string(SessionStatus s);

struct SessionOptions {
  ExperimentSetup setup;
  std::optional<std::filesystem::path> out_dir;  // persist artifacts here on completion
  Seconds inactivity_timeout = 120.0;
};

struct PersistedArtifacts {
  std::filesystem::path record;
  std::filesystem::path trace;
  std::filesystem::path events;
};

// One interactive run driven by a remote human. All times are session-relative
// server seconds supplied by the transport; client timestamps are never read.
// Every call returns the outbound frames in send order.
class LiveSession {
 public:
  LiveSession(std::string session_id, SessionOptions opts);

  std::vector<std::string> handle(std::string_view frame, Seconds now);

  // Processes robot events due by `now` and the inactivity timeout.
  std::vector<std::string> tick(Seconds now);

  // Earliest session time at which tick() has something to do.
  std::optional<Seconds> next_wakeup() const;

  const std::string& id() const { return id_; }
  SessionStatus status() const { return status_; }
  const Engine* engine() const { return engine_.get(); }
  const std::optional<RunRecord>& result() const { return result_; }
  const std::optional<PersistedArtifacts>& artifacts() const { return artifacts_; }

 private:
  std::string state_frame(Seconds now) const;
  std::string error_frame(std::string_view code, std::string_view msg, Seconds now) const;
  void drain(std::vector<std::string>& out);
  void finish(std::vector<std::string>& out, Seconds now);
  Seconds engine_time(Seconds now) const { return quantize(now - start_offset_); }

  std::string id_;
  SessionOptions opts_;
  SessionStatus status_ = SessionStatus::waiting;
  std::unique_ptr<Engine> engine_;
  Seconds start_offset_ = 0.0;
  Seconds last_activity_ = 0.0;
  std::size_t events_sent_ = 0;
  std::size_t predictions_sent_ = 0;
  std::optional<RunRecord> result_;
  std::optional<PersistedArtifacts> artifacts_;
};

}  // namespace hrc
