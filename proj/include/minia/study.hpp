#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace minia {

struct PlanFigure {
  std::string figure_id;
  std::string dataset_id;
};

/// One scheduled 2AFC comparison. method_a < method_b lexicographically.
struct TrialPlan {
  std::string trial_id;
  std::string figure_id;
  std::string dataset_id;
  std::string method_a;
  std::string method_b;
  int repetition = 0;

  bool operator==(const TrialPlan&) const = default;
};

enum class Choice { left, right };

struct TrialResponse {
  std::string trial_id;
  std::string participant_id;
  std::string left_method;
  std::string right_method;
  Choice choice = Choice::left;
  std::int64_t timestamp_ms = 0;

  const std::string& chosen_method() const { return choice == Choice::left ? left_method : right_method; }
  bool operator==(const TrialResponse&) const = default;
};

std::optional<Choice> parse_choice(std::string_view text);
std::string_view to_string(Choice choice) noexcept;

void to_json(nlohmann::json& j, const TrialPlan& plan);
void from_json(const nlohmann::json& j, TrialPlan& plan);
void to_json(nlohmann::json& j, const TrialResponse& response);
void from_json(const nlohmann::json& j, TrialResponse& response);

/// Every (figure, unordered method pair) once; when repetitions_target exceeds
/// that count, the surplus trials are dealt round-robin over the pairs in a
/// seed-dependent order, so coverage never differs by more than one.
/// Throws TooFewMethods for fewer than two distinct methods, EmptyInput for no figures.
std::vector<TrialPlan> generate_plan(std::span<const PlanFigure> figures, std::span<const std::string> methods,
                                     std::size_t repetitions_target = 0, std::uint64_t seed = 0);

std::vector<TrialPlan> read_plan(const std::filesystem::path& path);
void write_plan(const std::vector<TrialPlan>& plan, const std::filesystem::path& path);

/// Append-only newline-delimited JSON log; each append is fsync'ed before returning.
class ResponseLog {
 public:
  explicit ResponseLog(const std::filesystem::path& path);
  ~ResponseLog();
  ResponseLog(const ResponseLog&) = delete;
  ResponseLog& operator=(const ResponseLog&) = delete;

  void append(const TrialResponse& response);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

/// Append-only record of issued trials, {"participant", "trial_id"} per
/// line, so outstanding trials survive a restart. fsync'ed like the log.
class IssueJournal {
 public:
  explicit IssueJournal(const std::filesystem::path& path);
  ~IssueJournal();
  IssueJournal(const IssueJournal&) = delete;
  IssueJournal& operator=(const IssueJournal&) = delete;

  void append(const std::string& participant, const std::string& trial_id);

 private:
  int fd_ = -1;
};

struct IssueRecord {
  std::string participant;
  std::string trial_id;
};
/// Missing file reads as empty; MalformedFile with byte offset otherwise.
std::vector<IssueRecord> read_issue_journal(const std::filesystem::path& path);

/// Reads a response log; a missing file is an empty log. Malformed lines
/// throw MalformedFile with their byte offset.
std::vector<TrialResponse> read_response_log(const std::filesystem::path& path);

/// Splits a log into first responses per (trial, participant) and the later
/// duplicates, which analysis ignores.
struct DedupedResponses {
  std::vector<TrialResponse> kept;
  std::vector<TrialResponse> duplicates;
};
DedupedResponses dedupe_responses(std::span<const TrialResponse> responses);

struct IssuedTrial {
  TrialPlan plan;
  std::string left_method;
  std::string right_method;

  bool operator==(const IssuedTrial&) const = default;
};

struct SessionState {
  std::set<std::string> answered;          // trial ids
  std::optional<std::string> outstanding;  // issued, not yet answered

  bool operator==(const SessionState&) const = default;
};

/// Least-answered-first trial scheduler.
///
/// issue() hands a participant the trial they have not answered with the
/// fewest accepted responses, then the fewest participants currently holding
/// it, then the smallest seeded hash of (trial, participant), and keeps
/// returning it until it is answered. Because responses come first, no trial
/// is issued at count c while the participant could still take one below c.
/// Left/right placement is a seeded hash of (trial, participant).
class Scheduler {
 public:
  explicit Scheduler(std::vector<TrialPlan> plan, std::uint64_t seed = 0);

  enum class ReplayResult { accepted, duplicate, orphan };
  /// Applies a logged response without outstanding-trial checks.
  ReplayResult replay(const TrialResponse& response);

  /// Re-establishes an outstanding trial read back from the issue journal.
  /// Ignored when the trial is unknown or already answered by the participant.
  void replay_issue(const std::string& participant, const std::string& trial_id);

  /// nullopt once the participant has answered every trial.
  std::optional<IssuedTrial> issue(const std::string& participant);

  enum class Rejection { unknown_trial, not_outstanding };
  /// Builds the response a submission would record, without changing state.
  std::variant<TrialResponse, Rejection> validate_submission(const std::string& participant,
                                                             const std::string& trial_id, Choice choice,
                                                             std::int64_t timestamp_ms) const;
  /// Records a response built by validate_submission and clears the outstanding trial.
  void commit(const TrialResponse& response);

  const std::vector<TrialPlan>& plan() const { return plan_; }
  const TrialPlan* find_trial(const std::string& trial_id) const;
  std::size_t response_count(const std::string& trial_id) const;
  std::size_t answered_total() const { return answered_total_; }
  const std::map<std::string, SessionState>& sessions() const { return sessions_; }
  /// Accepted responses per trial, in plan order.
  std::vector<std::size_t> coverage() const { return counts_; }

 private:
  IssuedTrial place_sides(std::size_t trial_index, const std::string& participant) const;
  std::string hash_key(std::string_view purpose, const std::string& trial_id, const std::string& participant) const;

  std::vector<TrialPlan> plan_;
  std::uint64_t seed_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> outstanding_;
  std::map<std::string, SessionState> sessions_;
  std::size_t answered_total_ = 0;
};

/// Scheduler view of a fresh process: plan plus replayed log, then issue().
std::optional<IssuedTrial> next_trial(const std::string& participant, const std::vector<TrialPlan>& plan,
                                      std::span<const TrialResponse> log, std::uint64_t seed = 0);

struct WinRow {
  std::string method_id;
  std::size_t wins = 0;
  std::size_t total = 0;
  double win_pct() const { return total == 0 ? 0.0 : static_cast<double>(wins) / static_cast<double>(total); }
};

struct WinTable {
  std::vector<WinRow> rows;  // sorted by method id
  const WinRow* find(const std::string& method) const;
};

/// Wins per method: a method wins a trial when the chosen side carries it.
/// Optional dataset filter. Throws OrphanTrialId for responses outside the plan.
WinTable win_table(std::span<const TrialResponse> responses, const std::vector<TrialPlan>& plan,
                   const std::optional<std::string>& dataset_id = std::nullopt);

/// One decimal, as a percentage: 489/585 -> "83.6".
std::string format_win_pct(double fraction);

struct ConcordanceResult {
  double w = 0.0;
  double chi_square = 0.0;
  int degrees_of_freedom = 0;
  double p_value = 1.0;
  int raters = 0;
  int items = 0;
  std::vector<std::vector<double>> per_rater_rankings;  // raters x items, rank 1 = best
  std::vector<std::string> rater_ids;
  std::vector<std::string> item_ids;
  /// The chi-square approximation is classically trusted for more than 7 items.
  bool small_sample_approximation = false;
};

/// Average ranks, largest value first (rank 1), ties share the mean rank.
std::vector<double> average_ranks_descending(std::span<const double> values);

/// Kendall's W with tie correction from a complete rank matrix.
/// Throws InsufficientRaters for fewer than 2 rows, InvalidArgument for
/// fewer than 2 columns or ragged rows. When every rater ties every item the
/// statistic is 0/0 and W is reported as 0.
ConcordanceResult concordance_from_rankings(const std::vector<std::vector<double>>& rankings);

/// Concordance of raters ranking methods by their own win rates. A method a
/// rater never saw counts as a 1/2 win rate.
ConcordanceResult kendalls_w(std::span<const TrialResponse> responses, const std::vector<TrialPlan>& plan,
                             std::span<const std::string> methods,
                             const std::optional<std::string>& dataset_id = std::nullopt);

/// Win tables and W per dataset and pooled, plus duplicate accounting.
nlohmann::json analyze_study(std::span<const TrialResponse> log, const std::vector<TrialPlan>& plan);

}  // namespace minia
