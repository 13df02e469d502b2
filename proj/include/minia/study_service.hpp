#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "minia/study.hpp"

namespace httplib {
class Server;
}

namespace minia {

/// Asset file names carry no method or figure names, so stimuli stay blind.
std::string stimulus_asset_name(const std::string& figure_id, const std::string& method_id);
std::string reference_asset_name(const std::string& figure_id);

/// Transport-independent core of the study server. Every mutation goes
/// through one exclusive lock; progress reads share it.
class StudyService {
 public:
  struct Reply {
    int status = 200;
    nlohmann::json body;  // null for bodiless replies (204)
  };

  /// No study loaded: every trial and progress request answers 409.
  StudyService() = default;
  /// Replays the response log and then the issue journal kept next to it
  /// (log path + ".issued"), so sessions come back exactly as they were.
  /// Duplicates are skipped; orphans throw OrphanTrialId, since they mean
  /// the log belongs to another plan.
  StudyService(std::vector<TrialPlan> plan, const std::filesystem::path& log_path, std::uint64_t seed = 0);

  static std::filesystem::path journal_path(const std::filesystem::path& log_path);

  Reply get_trial(const std::optional<std::string>& participant);
  /// body: {"trial_id", "participant", "choice": "left"|"right"}
  Reply post_response(const std::string& body);
  Reply progress() const;

  /// Copy of the scheduler state, for tests and diagnostics.
  std::map<std::string, SessionState> sessions() const;
  std::vector<std::size_t> coverage() const;

 private:
  nlohmann::json trial_payload(const IssuedTrial& trial) const;

  mutable std::shared_mutex mutex_;
  std::unique_ptr<Scheduler> scheduler_;
  std::unique_ptr<ResponseLog> log_;
  std::unique_ptr<IssueJournal> journal_;
};

/// HTTP binding: GET /api/trial, POST /api/response, GET /api/progress,
/// static /assets and an optional UI bundle at /.
class StudyHttpServer {
 public:
  StudyHttpServer(StudyService& service, const std::filesystem::path& assets_dir,
                  const std::optional<std::filesystem::path>& ui_dir = std::nullopt);
  ~StudyHttpServer();
  StudyHttpServer(const StudyHttpServer&) = delete;
  StudyHttpServer& operator=(const StudyHttpServer&) = delete;

  /// Binds (port 0 picks a free port), serves on a background thread, returns the port.
  int start(const std::string& host, int port);
  void listen_blocking(const std::string& host, int port);
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace minia
