#include "minia/study.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include <fcntl.h>
#include <unistd.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>

#include "minia/codec.hpp"
#include "minia/error.hpp"

namespace minia {

using json = nlohmann::json;

std::optional<Choice> parse_choice(std::string_view text) {
  if (text == "left") return Choice::left;
  if (text == "right") return Choice::right;
  return std::nullopt;
}

std::string_view to_string(Choice choice) noexcept { return choice == Choice::left ? "left" : "right"; }

void to_json(json& j, const TrialPlan& p) {
  j = json{{"trial_id", p.trial_id},     {"figure_id", p.figure_id}, {"dataset_id", p.dataset_id},
           {"method_a", p.method_a},     {"method_b", p.method_b},   {"repetition", p.repetition}};
}

void from_json(const json& j, TrialPlan& p) {
  j.at("trial_id").get_to(p.trial_id);
  j.at("figure_id").get_to(p.figure_id);
  p.dataset_id = j.value("dataset_id", std::string());
  j.at("method_a").get_to(p.method_a);
  j.at("method_b").get_to(p.method_b);
  p.repetition = j.value("repetition", 0);
}

void to_json(json& j, const TrialResponse& r) {
  j = json{{"trial_id", r.trial_id},
           {"participant_id", r.participant_id},
           {"left_method", r.left_method},
           {"right_method", r.right_method},
           {"choice", to_string(r.choice)},
           {"timestamp", r.timestamp_ms}};
}

void from_json(const json& j, TrialResponse& r) {
  j.at("trial_id").get_to(r.trial_id);
  j.at("participant_id").get_to(r.participant_id);
  j.at("left_method").get_to(r.left_method);
  j.at("right_method").get_to(r.right_method);
  const auto choice = parse_choice(j.at("choice").get<std::string>());
  if (!choice) throw Error(ErrorCode::InvalidArgument, "choice must be left or right");
  r.choice = *choice;
  j.at("timestamp").get_to(r.timestamp_ms);
}

// ---------------------------------------------------------------------------
// plan

std::vector<TrialPlan> generate_plan(std::span<const PlanFigure> figures, std::span<const std::string> methods,
                                     std::size_t repetitions_target, std::uint64_t seed) {
  std::vector<std::string> sorted(methods.begin(), methods.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::InvalidArgument, "duplicate method id");
  }
  if (sorted.size() < 2) throw Error(ErrorCode::TooFewMethods, "a pairwise study needs at least two methods");
  if (figures.empty()) throw Error(ErrorCode::EmptyInput, "a study needs at least one figure");
  std::set<std::string> seen;
  for (const auto& f : figures) {
    if (!seen.insert(f.figure_id).second) throw Error(ErrorCode::InvalidArgument, "duplicate figure id " + f.figure_id);
  }

  auto make = [](const PlanFigure& f, const std::string& a, const std::string& b, int rep) {
    TrialPlan t{"", f.figure_id, f.dataset_id, a, b, rep};
    t.trial_id = sha256_hex(fmt::format("{}\x1f{}\x1f{}\x1f{}", f.figure_id, a, b, rep)).substr(0, 16);
    return t;
  };

  std::vector<TrialPlan> plan;
  for (const auto& f : figures)
    for (std::size_t i = 0; i < sorted.size(); ++i)
      for (std::size_t j = i + 1; j < sorted.size(); ++j) plan.push_back(make(f, sorted[i], sorted[j], 0));

  const std::size_t base = plan.size();
  if (repetitions_target > base) {
    std::vector<std::pair<std::string, std::size_t>> order;
    for (std::size_t k = 0; k < base; ++k) {
      order.emplace_back(sha256_hex(fmt::format("{}\x1f{}", seed, plan[k].trial_id)), k);
    }
    std::sort(order.begin(), order.end());
    std::vector<TrialPlan> extra;
    for (std::size_t k = 0; k < repetitions_target - base; ++k) {
      const TrialPlan& src = plan[order[k % base].second];
      const PlanFigure fig{src.figure_id, src.dataset_id};
      extra.push_back(make(fig, src.method_a, src.method_b, static_cast<int>(1 + k / base)));
    }
    plan.insert(plan.end(), extra.begin(), extra.end());
    // keep figure-major order with repetitions adjacent
    std::map<std::string, std::size_t> figure_rank;
    for (std::size_t i = 0; i < figures.size(); ++i) figure_rank[figures[i].figure_id] = i;
    std::stable_sort(plan.begin(), plan.end(), [&](const TrialPlan& x, const TrialPlan& y) {
      return std::make_tuple(figure_rank[x.figure_id], x.method_a, x.method_b, x.repetition) <
             std::make_tuple(figure_rank[y.figure_id], y.method_a, y.method_b, y.repetition);
    });
  }
  return plan;
}

std::vector<TrialPlan> read_plan(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot open plan " + path.string());
  json doc = json::parse(is, nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) throw Error(ErrorCode::MalformedFile, "plan must be a JSON array", 0);
  try {
    return doc.get<std::vector<TrialPlan>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("plan entry: ") + e.what(), 0);
  }
}

void write_plan(const std::vector<TrialPlan>& plan, const std::filesystem::path& path) {
  const std::string text = json(plan).dump(2) + "\n";
  {
    const auto tmp = path.string() + ".tmp";
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoError, "cannot write " + tmp);
    os << text;
    os.close();
    if (!os) throw Error(ErrorCode::IoError, "write failed for " + tmp);
    std::filesystem::rename(tmp, path);
  }
}

// ---------------------------------------------------------------------------
// log

namespace {

// A crash mid-append can leave an unterminated last line. It was never
// acknowledged, so it is cut off before new records are appended.
int open_append(const std::filesystem::path& path) {
  const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  off_t end = ::lseek(fd, 0, SEEK_END);
  off_t keep = end;
  char ch = '\n';
  while (keep > 0 && ::pread(fd, &ch, 1, keep - 1) == 1 && ch != '\n') --keep;
  if (keep != end && ::ftruncate(fd, keep) != 0) {
    ::close(fd);
    throw Error(ErrorCode::IoError, "cannot trim torn record in " + path.string());
  }
  return fd;
}

void append_line(int fd, const std::string& line) {
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoError, "append failed");
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) throw Error(ErrorCode::IoError, "fsync failed");
}

// Calls fn(json) for every non-blank line; failures carry the line's byte offset.
template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn fn) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return;
  const std::string name = path.filename().string();
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(is, line)) {
    const std::uint64_t at = offset;
    offset += line.size() + 1;
    if (line.empty() || line == "\r") continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() && is.eof()) break;  // torn, unacknowledged tail
    if (doc.is_discarded()) throw Error(ErrorCode::MalformedFile, name + ": line is not JSON", at);
    try {
      fn(doc);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::MalformedFile, name + ": " + e.what(), at);
    }
  }
}

}  // namespace

ResponseLog::ResponseLog(const std::filesystem::path& path) : path_(path), fd_(open_append(path)) {}

ResponseLog::~ResponseLog() {
  if (fd_ >= 0) ::close(fd_);
}

void ResponseLog::append(const TrialResponse& response) { append_line(fd_, json(response).dump() + "\n"); }

std::vector<TrialResponse> read_response_log(const std::filesystem::path& path) {
  std::vector<TrialResponse> out;
  for_each_json_line(path, [&](const json& doc) { out.push_back(doc.get<TrialResponse>()); });
  return out;
}

IssueJournal::IssueJournal(const std::filesystem::path& path) : fd_(open_append(path)) {}

IssueJournal::~IssueJournal() {
  if (fd_ >= 0) ::close(fd_);
}

void IssueJournal::append(const std::string& participant, const std::string& trial_id) {
  append_line(fd_, json{{"participant", participant}, {"trial_id", trial_id}}.dump() + "\n");
}

std::vector<IssueRecord> read_issue_journal(const std::filesystem::path& path) {
  std::vector<IssueRecord> out;
  for_each_json_line(path, [&](const json& doc) {
    out.push_back({doc.at("participant").get<std::string>(), doc.at("trial_id").get<std::string>()});
  });
  return out;
}

DedupedResponses dedupe_responses(std::span<const TrialResponse> responses) {
  DedupedResponses out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : responses) {
    if (seen.insert({r.trial_id, r.participant_id}).second) out.kept.push_back(r);
    else out.duplicates.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// scheduler

Scheduler::Scheduler(std::vector<TrialPlan> plan, std::uint64_t seed)
    : plan_(std::move(plan)), seed_(seed), counts_(plan_.size(), 0), outstanding_(plan_.size(), 0) {
  for (std::size_t i = 0; i < plan_.size(); ++i) {
    if (!index_.emplace(plan_[i].trial_id, i).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate trial id " + plan_[i].trial_id);
    }
  }
}

std::string Scheduler::hash_key(std::string_view purpose, const std::string& trial_id,
                                const std::string& participant) const {
  return sha256_hex(fmt::format("{}\x1f{}\x1f{}\x1f{}", purpose, seed_, trial_id, participant));
}

const TrialPlan* Scheduler::find_trial(const std::string& trial_id) const {
  auto it = index_.find(trial_id);
  return it == index_.end() ? nullptr : &plan_[it->second];
}

std::size_t Scheduler::response_count(const std::string& trial_id) const {
  auto it = index_.find(trial_id);
  return it == index_.end() ? 0 : counts_[it->second];
}

Scheduler::ReplayResult Scheduler::replay(const TrialResponse& response) {
  auto it = index_.find(response.trial_id);
  if (it == index_.end()) return ReplayResult::orphan;
  auto& session = sessions_[response.participant_id];
  if (!session.answered.insert(response.trial_id).second) return ReplayResult::duplicate;
  ++counts_[it->second];
  ++answered_total_;
  return ReplayResult::accepted;
}

IssuedTrial Scheduler::place_sides(std::size_t trial_index, const std::string& participant) const {
  const TrialPlan& t = plan_[trial_index];
  const bool swap = (std::stoi(hash_key("side", t.trial_id, participant).substr(0, 2), nullptr, 16) & 1) != 0;
  return IssuedTrial{t, swap ? t.method_b : t.method_a, swap ? t.method_a : t.method_b};
}

std::optional<IssuedTrial> Scheduler::issue(const std::string& participant) {
  auto& session = sessions_[participant];
  if (session.outstanding) return place_sides(index_.at(*session.outstanding), participant);

  std::optional<std::size_t> best;
  std::pair<std::size_t, std::size_t> best_load;
  std::string best_key;
  for (std::size_t i = 0; i < plan_.size(); ++i) {
    if (session.answered.count(plan_[i].trial_id)) continue;
    const std::pair load{counts_[i], outstanding_[i]};
    if (best && load > best_load) continue;
    std::string key = hash_key("order", plan_[i].trial_id, participant);
    if (!best || load < best_load || key < best_key) {
      best = i;
      best_load = load;
      best_key = std::move(key);
    }
  }
  if (!best) return std::nullopt;
  session.outstanding = plan_[*best].trial_id;
  ++outstanding_[*best];
  return place_sides(*best, participant);
}

void Scheduler::replay_issue(const std::string& participant, const std::string& trial_id) {
  auto it = index_.find(trial_id);
  if (it == index_.end()) return;
  auto& session = sessions_[participant];
  if (session.answered.count(trial_id)) return;
  if (session.outstanding) --outstanding_[index_.at(*session.outstanding)];
  session.outstanding = trial_id;
  ++outstanding_[it->second];
}

std::variant<TrialResponse, Scheduler::Rejection> Scheduler::validate_submission(const std::string& participant,
                                                                                 const std::string& trial_id,
                                                                                 Choice choice,
                                                                                 std::int64_t timestamp_ms) const {
  auto it = index_.find(trial_id);
  if (it == index_.end()) return Rejection::unknown_trial;
  auto session = sessions_.find(participant);
  if (session == sessions_.end() || session->second.outstanding != trial_id) return Rejection::not_outstanding;
  const IssuedTrial issued = place_sides(it->second, participant);
  return TrialResponse{trial_id, participant, issued.left_method, issued.right_method, choice, timestamp_ms};
}

void Scheduler::commit(const TrialResponse& response) {
  auto& session = sessions_[response.participant_id];
  if (session.outstanding == response.trial_id) {
    --outstanding_[index_.at(response.trial_id)];
    session.outstanding.reset();
  }
  replay(response);
}

std::optional<IssuedTrial> next_trial(const std::string& participant, const std::vector<TrialPlan>& plan,
                                      std::span<const TrialResponse> log, std::uint64_t seed) {
  Scheduler scheduler(plan, seed);
  for (const auto& r : log) scheduler.replay(r);
  return scheduler.issue(participant);
}

// ---------------------------------------------------------------------------
// analysis

namespace {

std::map<std::string, const TrialPlan*> plan_index(const std::vector<TrialPlan>& plan) {
  std::map<std::string, const TrialPlan*> index;
  for (const auto& t : plan) index.emplace(t.trial_id, &t);
  return index;
}

const TrialPlan& lookup(const std::map<std::string, const TrialPlan*>& index, const TrialResponse& r) {
  auto it = index.find(r.trial_id);
  if (it == index.end()) throw Error(ErrorCode::OrphanTrialId, "response for unknown trial " + r.trial_id);
  const TrialPlan& t = *it->second;
  const bool matches = (r.left_method == t.method_a && r.right_method == t.method_b) ||
                       (r.left_method == t.method_b && r.right_method == t.method_a);
  if (!matches) throw Error(ErrorCode::InvalidArgument, "response sides do not match the plan for " + r.trial_id);
  return t;
}

// rank 1 + (number strictly better) + (number tied) / 2, with better(i, j) and tied(i, j)
template <typename Better, typename Tied>
std::vector<double> ranks_by(std::size_t n, Better better, Tied tied) {
  std::vector<double> ranks(n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (better(j, i)) ranks[i] += 1.0;
      else if (tied(i, j)) ranks[i] += 0.5;
    }
  return ranks;
}

}  // namespace

const WinRow* WinTable::find(const std::string& method) const {
  for (const auto& r : rows)
    if (r.method_id == method) return &r;
  return nullptr;
}

WinTable win_table(std::span<const TrialResponse> responses, const std::vector<TrialPlan>& plan,
                   const std::optional<std::string>& dataset_id) {
  const auto index = plan_index(plan);
  std::map<std::string, WinRow> rows;
  for (const auto& t : plan) {
    if (dataset_id && t.dataset_id != *dataset_id) continue;
    rows[t.method_a].method_id = t.method_a;
    rows[t.method_b].method_id = t.method_b;
  }
  for (const auto& r : responses) {
    const TrialPlan& t = lookup(index, r);
    if (dataset_id && t.dataset_id != *dataset_id) continue;
    ++rows[r.left_method].total;
    ++rows[r.right_method].total;
    ++rows[r.chosen_method()].wins;
  }
  WinTable table;
  for (auto& [id, row] : rows) {
    row.method_id = id;
    table.rows.push_back(row);
  }
  return table;
}

std::string format_win_pct(double fraction) { return fmt::format("{:.1f}", 100.0 * fraction); }

std::vector<double> average_ranks_descending(std::span<const double> values) {
  return ranks_by(
      values.size(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; },
      [&](std::size_t a, std::size_t b) { return values[a] == values[b]; });
}

ConcordanceResult concordance_from_rankings(const std::vector<std::vector<double>>& rankings) {
  const int m = static_cast<int>(rankings.size());
  if (m < 2) throw Error(ErrorCode::InsufficientRaters, "concordance needs at least two raters");
  const int n = static_cast<int>(rankings.front().size());
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "concordance needs at least two items");
  for (const auto& row : rankings) {
    if (static_cast<int>(row.size()) != n) throw Error(ErrorCode::InvalidArgument, "ragged rank matrix");
  }

  std::vector<double> rank_sums(n, 0.0);
  double tie_total = 0.0;
  for (const auto& row : rankings) {
    for (int j = 0; j < n; ++j) rank_sums[j] += row[j];
    std::map<double, int> groups;
    for (double r : row) ++groups[r];
    for (const auto& [rank, t] : groups) tie_total += static_cast<double>(t) * t * t - t;
  }
  const double mean_sum = m * (n + 1) / 2.0;
  double s = 0.0;
  for (double r : rank_sums) s += (r - mean_sum) * (r - mean_sum);
  const double md = m;
  const double nd = n;
  const double denominator = md * md * (nd * nd * nd - nd) - md * tie_total;

  ConcordanceResult out;
  out.raters = m;
  out.items = n;
  out.per_rater_rankings = rankings;
  out.w = denominator > 0.0 ? std::clamp(12.0 * s / denominator, 0.0, 1.0) : 0.0;
  out.degrees_of_freedom = n - 1;
  out.chi_square = md * (nd - 1.0) * out.w;
  const boost::math::chi_squared dist(out.degrees_of_freedom);
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.chi_square));
  out.small_sample_approximation = n <= 7;
  return out;
}

ConcordanceResult kendalls_w(std::span<const TrialResponse> responses, const std::vector<TrialPlan>& plan,
                             std::span<const std::string> methods, const std::optional<std::string>& dataset_id) {
  if (methods.size() < 2) throw Error(ErrorCode::TooFewMethods, "concordance needs at least two methods");
  const auto index = plan_index(plan);
  std::map<std::string, std::size_t> method_col;
  for (std::size_t j = 0; j < methods.size(); ++j) method_col[methods[j]] = j;

  struct Tally {
    std::vector<long long> wins, totals;
  };
  std::map<std::string, Tally> raters;
  for (const auto& r : responses) {
    const TrialPlan& t = lookup(index, r);
    if (dataset_id && t.dataset_id != *dataset_id) continue;
    auto& tally = raters[r.participant_id];
    if (tally.wins.empty()) {
      tally.wins.assign(methods.size(), 0);
      tally.totals.assign(methods.size(), 0);
    }
    for (const auto* m : {&r.left_method, &r.right_method}) {
      auto it = method_col.find(*m);
      if (it != method_col.end()) ++tally.totals[it->second];
    }
    if (auto it = method_col.find(r.chosen_method()); it != method_col.end()) ++tally.wins[it->second];
  }

  std::vector<std::vector<double>> rankings;
  std::vector<std::string> ids;
  for (const auto& [rater, tally] : raters) {
    // exact rational comparison of win rates; unseen methods sit at 1/2
    auto num = [&](std::size_t j) { return tally.totals[j] == 0 ? 1LL : tally.wins[j]; };
    auto den = [&](std::size_t j) { return tally.totals[j] == 0 ? 2LL : tally.totals[j]; };
    rankings.push_back(ranks_by(
        methods.size(), [&](std::size_t a, std::size_t b) { return num(a) * den(b) > num(b) * den(a); },
        [&](std::size_t a, std::size_t b) { return num(a) * den(b) == num(b) * den(a); }));
    ids.push_back(rater);
  }
  if (rankings.size() < 2) throw Error(ErrorCode::InsufficientRaters, "concordance needs at least two raters");
  ConcordanceResult out = concordance_from_rankings(rankings);
  out.rater_ids = std::move(ids);
  out.item_ids.assign(methods.begin(), methods.end());
  return out;
}

namespace {

json concordance_json(const ConcordanceResult& c) {
  return json{{"w", c.w},
              {"chi_square", c.chi_square},
              {"degrees_of_freedom", c.degrees_of_freedom},
              {"p_value", c.p_value},
              {"raters", c.raters},
              {"items", c.items},
              {"rater_ids", c.rater_ids},
              {"item_ids", c.item_ids},
              {"per_rater_rankings", c.per_rater_rankings},
              {"ranking_rule", "per-rater win rate, descending, average ranks for ties; unseen methods at 1/2"},
              {"p_value_method", "chi-square approximation"},
              {"small_sample_approximation", c.small_sample_approximation}};
}

json win_table_json(const WinTable& table) {
  json rows = json::array();
  std::vector<WinRow> sorted = table.rows;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const WinRow& a, const WinRow& b) { return a.win_pct() > b.win_pct(); });
  for (const auto& r : sorted) {
    rows.push_back({{"method_id", r.method_id},
                    {"wins", r.wins},
                    {"total", r.total},
                    {"win_pct", r.win_pct()},
                    {"win_pct_text", format_win_pct(r.win_pct())}});
  }
  return rows;
}

}  // namespace

json analyze_study(std::span<const TrialResponse> log, const std::vector<TrialPlan>& plan) {
  const auto deduped = dedupe_responses(log);
  std::set<std::string> datasets;
  std::set<std::string> method_set;
  for (const auto& t : plan) {
    datasets.insert(t.dataset_id);
    method_set.insert(t.method_a);
    method_set.insert(t.method_b);
  }
  const std::vector<std::string> methods(method_set.begin(), method_set.end());

  auto section = [&](const std::optional<std::string>& dataset) {
    json out;
    const WinTable table = win_table(deduped.kept, plan, dataset);
    out["win_table"] = win_table_json(table);
    std::size_t trials = 0;
    for (const auto& r : table.rows) trials += r.total;
    out["trials"] = trials / 2;
    try {
      out["concordance"] = concordance_json(kendalls_w(deduped.kept, plan, methods, dataset));
    } catch (const Error& e) {
      out["concordance"] = json{{"error", e.what()}};
    }
    return out;
  };

  json doc;
  doc["responses"] = log.size();
  doc["duplicates"] = deduped.duplicates.size();
  doc["duplicate_responses"] = deduped.duplicates;
  doc["participants"] = [&] {
    std::set<std::string> ids;
    for (const auto& r : deduped.kept) ids.insert(r.participant_id);
    return ids.size();
  }();
  doc["per_dataset"] = json::object();
  for (const auto& d : datasets) doc["per_dataset"][d] = section(d);
  doc["pooled"] = section(std::nullopt);
  return doc;
}

}  // namespace minia
