#include "minia/study_service.hpp"

#include <chrono>
#include <map>
#include <mutex>

#include <httplib.h>

#include "minia/codec.hpp"
#include "minia/error.hpp"

namespace minia {

using json = nlohmann::json;

std::string stimulus_asset_name(const std::string& figure_id, const std::string& method_id) {
  return sha256_hex("stimulus\x1f" + figure_id + "\x1f" + method_id).substr(0, 16) + ".png";
}

std::string reference_asset_name(const std::string& figure_id) {
  return sha256_hex("reference\x1f" + figure_id).substr(0, 16) + ".png";
}

namespace {

StudyService::Reply error_reply(int status, std::string_view code, const std::string& message) {
  return {status, json{{"error", code}, {"message", message}}};
}

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace

StudyService::StudyService(std::vector<TrialPlan> plan, const std::filesystem::path& log_path, std::uint64_t seed)
    : scheduler_(std::make_unique<Scheduler>(std::move(plan), seed)) {
  for (const auto& r : read_response_log(log_path)) {
    if (scheduler_->replay(r) == Scheduler::ReplayResult::orphan) {
      throw Error(ErrorCode::OrphanTrialId, "log response for trial " + r.trial_id + " is not in the plan");
    }
  }
  for (const auto& issue : read_issue_journal(journal_path(log_path))) {
    scheduler_->replay_issue(issue.participant, issue.trial_id);
  }
  log_ = std::make_unique<ResponseLog>(log_path);
  journal_ = std::make_unique<IssueJournal>(journal_path(log_path));
}

std::filesystem::path StudyService::journal_path(const std::filesystem::path& log_path) {
  std::filesystem::path p = log_path;
  p += ".issued";
  return p;
}

json StudyService::trial_payload(const IssuedTrial& t) const {
  return json{{"trial_id", t.plan.trial_id},
              {"reference_image_url", "/assets/" + reference_asset_name(t.plan.figure_id)},
              {"left_render_url", "/assets/" + stimulus_asset_name(t.plan.figure_id, t.left_method)},
              {"right_render_url", "/assets/" + stimulus_asset_name(t.plan.figure_id, t.right_method)}};
}

StudyService::Reply StudyService::get_trial(const std::optional<std::string>& participant) {
  std::unique_lock lock(mutex_);
  if (!scheduler_) return error_reply(409, "StudyNotLoaded", "no study plan is loaded");
  if (!participant || participant->empty()) return error_reply(400, "MissingParticipant", "participant is required");
  const auto& sessions = scheduler_->sessions();
  const auto known = sessions.find(*participant);
  const bool already_holding = known != sessions.end() && known->second.outstanding.has_value();
  const auto issued = scheduler_->issue(*participant);
  if (!issued) return {204, nullptr};
  if (!already_holding) {
    try {
      journal_->append(*participant, issued->plan.trial_id);
    } catch (const Error& e) {
      return error_reply(500, "IoError", e.what());
    }
  }
  return {200, trial_payload(*issued)};
}

StudyService::Reply StudyService::post_response(const std::string& body) {
  const json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return error_reply(400, "BadRequest", "body must be a JSON object");
  auto field = [&](const char* key) -> std::optional<std::string> {
    if (!doc.contains(key) || !doc[key].is_string()) return std::nullopt;
    return doc[key].get<std::string>();
  };
  const auto trial_id = field("trial_id");
  const auto participant = field("participant");
  const auto choice_text = field("choice");
  if (!trial_id || !participant || participant->empty()) {
    return error_reply(400, "BadRequest", "trial_id and participant are required");
  }
  const auto choice = choice_text ? parse_choice(*choice_text) : std::nullopt;
  if (!choice) return error_reply(400, "BadChoice", "choice must be \"left\" or \"right\"");

  std::unique_lock lock(mutex_);
  if (!scheduler_) return error_reply(409, "StudyNotLoaded", "no study plan is loaded");
  const auto outcome = scheduler_->validate_submission(*participant, *trial_id, *choice, now_ms());
  if (const auto* rejection = std::get_if<Scheduler::Rejection>(&outcome)) {
    if (*rejection == Scheduler::Rejection::unknown_trial) {
      return error_reply(404, "UnknownTrial", "no trial " + *trial_id + " in the plan");
    }
    return error_reply(409, "NotOutstanding", "trial " + *trial_id + " is not outstanding for this participant");
  }
  const auto& response = std::get<TrialResponse>(outcome);
  try {
    log_->append(response);  // durable before the state change and the ack
  } catch (const Error& e) {
    return error_reply(500, "IoError", e.what());
  }
  scheduler_->commit(response);
  return {200, json{{"ok", true}, {"trial_id", response.trial_id}}};
}

StudyService::Reply StudyService::progress() const {
  std::shared_lock lock(mutex_);
  if (!scheduler_) return error_reply(409, "StudyNotLoaded", "no study plan is loaded");
  const auto counts = scheduler_->coverage();
  const auto& plan = scheduler_->plan();
  json per_trial = json::object();
  std::map<std::size_t, std::size_t> histogram;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    per_trial[plan[i].trial_id] = counts[i];
    ++histogram[counts[i]];
  }
  json hist = json::array();
  for (const auto& [responses, trials] : histogram) hist.push_back({{"responses", responses}, {"trials", trials}});
  return {200, json{{"answered", scheduler_->answered_total()},
                    {"total", plan.size()},
                    {"participants", scheduler_->sessions().size()},
                    {"coverage", per_trial},
                    {"histogram", hist}}};
}

std::map<std::string, SessionState> StudyService::sessions() const {
  std::shared_lock lock(mutex_);
  return scheduler_ ? scheduler_->sessions() : std::map<std::string, SessionState>{};
}

std::vector<std::size_t> StudyService::coverage() const {
  std::shared_lock lock(mutex_);
  return scheduler_ ? scheduler_->coverage() : std::vector<std::size_t>{};
}

// ---------------------------------------------------------------------------
// HTTP binding

namespace {

void send(httplib::Response& res, const StudyService::Reply& reply) {
  res.status = reply.status;
  if (!reply.body.is_null()) res.set_content(reply.body.dump(), "application/json");
}

}  // namespace

StudyHttpServer::StudyHttpServer(StudyService& service, const std::filesystem::path& assets_dir,
                                 const std::optional<std::filesystem::path>& ui_dir)
    : server_(std::make_unique<httplib::Server>()) {
  server_->Get("/api/trial", [&service](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> participant;
    if (req.has_param("participant")) participant = req.get_param_value("participant");
    send(res, service.get_trial(participant));
  });
  server_->Post("/api/response", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.post_response(req.body));
  });
  server_->Get("/api/progress",
               [&service](const httplib::Request&, httplib::Response& res) { send(res, service.progress()); });
  if (!server_->set_mount_point("/assets", assets_dir.string())) {
    throw Error(ErrorCode::IoError, "assets directory not found: " + assets_dir.string());
  }
  if (ui_dir && !server_->set_mount_point("/", ui_dir->string())) {
    throw Error(ErrorCode::IoError, "UI directory not found: " + ui_dir->string());
  }
}

StudyHttpServer::~StudyHttpServer() { stop(); }

int StudyHttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void StudyHttpServer::listen_blocking(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
}

void StudyHttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace minia
