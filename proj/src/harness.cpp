#include "minia/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "minia/error.hpp"
#include "minia/image.hpp"
#include "minia/mesh.hpp"
#include "minia/orient.hpp"
#include "minia/study_service.hpp"

namespace minia {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void invalid(const std::string& message) { throw Error(ErrorCode::ManifestInvalid, message); }

std::string now_iso8601() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Axis axis_from_char(const std::string& s) {
  if (s == "x") return Axis::x;
  if (s == "y") return Axis::y;
  if (s == "z") return Axis::z;
  throw Error(ErrorCode::MalformedFile, "bad view axis " + s);
}

}  // namespace

// ---------------------------------------------------------------------------
// manifest

std::vector<std::string> DatasetManifest::methods() const {
  std::set<std::string> all;
  for (const auto& f : figures)
    for (const auto& [method, path] : f.meshes) all.insert(method);
  return {all.begin(), all.end()};
}

const ManifestFigure* DatasetManifest::find_figure(const std::string& figure_id) const {
  for (const auto& f : figures)
    if (f.figure_id == figure_id) return &f;
  return nullptr;
}

json render_config_to_json(const RenderConfig& c) {
  return json{{"resolution", c.resolution},
              {"margin_fraction", c.margin_fraction},
              {"background_gray", c.background_gray},
              {"albedo", c.albedo},
              {"ambient", c.ambient},
              {"light_direction", {c.light_direction.x(), c.light_direction.y(), c.light_direction.z()}}};
}

RenderConfig render_config_from_json(const json& overrides, RenderConfig c) {
  if (!overrides.is_object()) throw Error(ErrorCode::InvalidArgument, "render_config must be an object");
  try {
    for (const auto& [key, value] : overrides.items()) {
      if (key == "resolution") c.resolution = value.get<int>();
      else if (key == "margin_fraction") c.margin_fraction = value.get<double>();
      else if (key == "background_gray") c.background_gray = value.get<std::uint8_t>();
      else if (key == "albedo") c.albedo = value.get<double>();
      else if (key == "ambient") c.ambient = value.get<double>();
      else if (key == "light_direction") {
        const auto v = value.get<std::vector<double>>();
        if (v.size() != 3) throw Error(ErrorCode::InvalidArgument, "light_direction needs 3 components");
        c.light_direction = Vec3(v[0], v[1], v[2]);
      } else {
        throw Error(ErrorCode::InvalidArgument, "unknown render_config key " + key);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("render_config: ") + e.what());
  }
  c.validate();
  return c;
}

DatasetManifest parse_manifest(const json& doc, const fs::path& base_dir, bool check_paths) {
  if (!doc.is_object()) invalid("manifest must be a JSON object");
  DatasetManifest m;
  auto resolve = [&](const json& v, const std::string& what) {
    if (!v.is_string() || v.get<std::string>().empty()) invalid(what + " must be a non-empty string");
    fs::path p = v.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    p = p.lexically_normal();
    if (check_paths && !fs::exists(p)) invalid(what + " does not exist: " + p.string());
    return p;
  };

  if (!doc.contains("dataset_id") || !doc["dataset_id"].is_string()) invalid("dataset_id missing");
  m.dataset_id = doc["dataset_id"].get<std::string>();
  if (doc.contains("render_config")) {
    try {
      m.render_config = render_config_from_json(doc["render_config"]);
    } catch (const Error& e) {
      invalid(e.what());
    }
  }
  if (!doc.contains("figures") || !doc["figures"].is_array()) invalid("figures must be an array");
  if (doc["figures"].empty()) invalid("manifest lists no figures");

  std::set<std::string> ids;
  for (const auto& f : doc["figures"]) {
    if (!f.is_object() || !f.contains("figure_id") || !f["figure_id"].is_string()) invalid("figure without figure_id");
    ManifestFigure fig;
    fig.figure_id = f["figure_id"].get<std::string>();
    if (!ids.insert(fig.figure_id).second) invalid("duplicate figure id " + fig.figure_id);
    if (!f.contains("reference_path")) invalid("figure " + fig.figure_id + " has no reference_path");
    fig.reference_path = resolve(f["reference_path"], "reference of " + fig.figure_id);
    if (!f.contains("meshes") || !f["meshes"].is_object() || f["meshes"].empty()) {
      invalid("figure " + fig.figure_id + " lists no methods");
    }
    for (const auto& [method, path] : f["meshes"].items()) {
      if (method.empty()) invalid("empty method id in " + fig.figure_id);
      fig.meshes.emplace_back(method, resolve(path, fig.figure_id + "/" + method));
    }
    std::sort(fig.meshes.begin(), fig.meshes.end());
    m.figures.push_back(std::move(fig));
  }
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) invalid("cannot open manifest " + path.string());
  json doc = json::parse(is, nullptr, false);
  if (doc.is_discarded()) invalid("manifest is not valid JSON: " + path.string());
  return parse_manifest(doc, fs::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------
// report serialization

namespace {

json record_to_json(const MetricRecord& r) {
  return json{{"figure_id", r.figure_id},
              {"method_id", r.method_id},
              {"silhouette_iou", r.silhouette_iou},
              {"lpips", r.lpips},
              {"clip_score", r.clip_score},
              {"depth_range_ratio", r.depth_range_ratio},
              {"is_watertight", r.is_watertight},
              {"orientation_index", r.orientation_index},
              {"view_axis", std::string(1, axis_name(r.view_axis))}};
}

MetricRecord record_from_json(const json& j) {
  MetricRecord r;
  j.at("figure_id").get_to(r.figure_id);
  j.at("method_id").get_to(r.method_id);
  j.at("silhouette_iou").get_to(r.silhouette_iou);
  j.at("lpips").get_to(r.lpips);
  j.at("clip_score").get_to(r.clip_score);
  j.at("depth_range_ratio").get_to(r.depth_range_ratio);
  j.at("is_watertight").get_to(r.is_watertight);
  j.at("orientation_index").get_to(r.orientation_index);
  r.view_axis = axis_from_char(j.at("view_axis").get<std::string>());
  return r;
}

json row_to_json(const AggregateRow& r) {
  return json{{"method_id", r.method_id},
              {"dataset_id", r.dataset_id},
              {"mean_iou", r.mean_iou},
              {"mean_lpips", r.mean_lpips},
              {"mean_clip", r.mean_clip},
              {"mean_depth_ratio", r.mean_depth_ratio},
              {"watertight_pct", r.watertight_pct},
              {"figure_count", r.figure_count},
              {"error_count", r.error_count}};
}

AggregateRow row_from_json(const json& j) {
  AggregateRow r;
  j.at("method_id").get_to(r.method_id);
  j.at("dataset_id").get_to(r.dataset_id);
  j.at("mean_iou").get_to(r.mean_iou);
  j.at("mean_lpips").get_to(r.mean_lpips);
  j.at("mean_clip").get_to(r.mean_clip);
  j.at("mean_depth_ratio").get_to(r.mean_depth_ratio);
  j.at("watertight_pct").get_to(r.watertight_pct);
  j.at("figure_count").get_to(r.figure_count);
  r.error_count = j.value("error_count", std::size_t{0});
  return r;
}

}  // namespace

json report_to_json(const Report& report) {
  json doc;
  doc["metadata"] = report.metadata;
  doc["records"] = json::array();
  for (const auto& r : report.records) doc["records"].push_back(record_to_json(r));
  doc["errors"] = json::array();
  for (const auto& e : report.errors) {
    doc["errors"].push_back(
        {{"figure_id", e.figure_id}, {"method_id", e.method_id}, {"code", e.code}, {"message", e.message}});
  }
  doc["aggregates"] = json::array();
  for (const auto& r : report.aggregates) doc["aggregates"].push_back(row_to_json(r));
  if (report.study) doc["study"] = *report.study;
  return doc;
}

Report report_from_json(const json& doc) {
  try {
    Report report;
    report.metadata = doc.at("metadata");
    if (!report.metadata.is_object()) throw Error(ErrorCode::MalformedFile, "report metadata must be an object", 0);
    for (const auto& r : doc.at("records")) report.records.push_back(record_from_json(r));
    for (const auto& e : doc.at("errors")) {
      report.errors.push_back({e.at("figure_id").get<std::string>(), e.at("method_id").get<std::string>(),
                               e.at("code").get<std::string>(), e.at("message").get<std::string>()});
    }
    for (const auto& r : doc.at("aggregates")) report.aggregates.push_back(row_from_json(r));
    if (doc.contains("study") && !doc["study"].is_null()) report.study = doc["study"];
    return report;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("report: ") + e.what(), 0);
  }
}

std::string report_body(const Report& report) {
  json doc = report_to_json(report);
  doc["metadata"].erase("generated_at");
  return doc.dump(2);
}

void write_report(const Report& report, const fs::path& path) {
  const std::string text = report_to_json(report).dump(2) + "\n";
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    os << text;
    os.flush();
    if (!os) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot move report into place: " + ec.message());
}

Report read_report(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot open report " + path.string());
  json doc = json::parse(is, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::MalformedFile, "report is not valid JSON", 0);
  return report_from_json(doc);
}

double report_consistency_error(const Report& report) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (report.records.empty()) return report.aggregates.empty() ? 0.0 : inf;
  const std::string dataset = report.metadata.value("dataset_id", std::string());
  const auto expected = aggregate(report.records, dataset);
  if (expected.size() != report.aggregates.size()) return inf;
  double worst = 0.0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& a = expected[i];
    const auto& b = report.aggregates[i];
    if (a.method_id != b.method_id || a.figure_count != b.figure_count) return inf;
    for (double d : {a.mean_iou - b.mean_iou, a.mean_lpips - b.mean_lpips, a.mean_clip - b.mean_clip,
                     a.mean_depth_ratio - b.mean_depth_ratio, a.watertight_pct - b.watertight_pct}) {
      worst = std::max(worst, std::abs(d));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// evaluation

namespace {

struct FigureOutcome {
  std::vector<MetricRecord> records;
  std::vector<FigureError> errors;
};

FigureError describe(const ManifestFigure& fig, const std::string& method) {
  FigureError e{fig.figure_id, method, "internal", "unknown failure"};
  try {
    throw;
  } catch (const Error& err) {
    e.code = std::string(to_string(err.code()));
    e.message = err.what();
  } catch (const std::exception& err) {
    e.message = err.what();
  } catch (...) {
  }
  return e;
}

FigureOutcome evaluate_manifest_figure(const ManifestFigure& fig, const RenderConfig& config, ScorerPool& pool) {
  FigureOutcome out;
  ReferenceImage reference;
  try {
    reference.rgba = read_png(fig.reference_path);
  } catch (...) {
    for (const auto& [method, path] : fig.meshes) out.errors.push_back(describe(fig, method));
    return out;
  }
  for (const auto& [method, path] : fig.meshes) {
    try {
      TriangleMesh mesh = load_mesh(path, method, fig.figure_id);
      auto lease = pool.acquire();
      MetricRecord record = evaluate_figure(mesh, reference, config, *lease);
      record.figure_id = fig.figure_id;
      record.method_id = method;
      out.records.push_back(std::move(record));
    } catch (...) {
      out.errors.push_back(describe(fig, method));
    }
  }
  return out;
}

}  // namespace

Report run_eval(const DatasetManifest& manifest, ScorerPool& pool, const EvalOptions& options) {
  const std::size_t n = manifest.figures.size();
  std::vector<FigureOutcome> outcomes(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      outcomes[i] = evaluate_manifest_figure(manifest.figures[i], manifest.render_config, pool);
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < jobs; ++t) threads.emplace_back(worker);
  }

  Report report;
  for (auto& o : outcomes) {
    std::move(o.records.begin(), o.records.end(), std::back_inserter(report.records));
    std::move(o.errors.begin(), o.errors.end(), std::back_inserter(report.errors));
  }
  if (!report.records.empty()) report.aggregates = aggregate(report.records, manifest.dataset_id);
  for (auto& row : report.aggregates) {
    row.error_count = static_cast<std::size_t>(std::count_if(
        report.errors.begin(), report.errors.end(), [&](const FigureError& e) { return e.method_id == row.method_id; }));
  }

  const ModelIds& models = pool.model_ids();
  report.metadata = json{{"tool_version", kToolVersion},
                         {"generated_at", options.generated_at.empty() ? now_iso8601() : options.generated_at},
                         {"dataset_id", manifest.dataset_id},
                         {"render_config", render_config_to_json(manifest.render_config)},
                         {"scorer", {{"clip", models.clip}, {"lpips", models.lpips}, {"preprocessing", models.preprocessing}}},
                         {"aggregation", "arithmetic_mean"},
                         {"figure_count", n},
                         {"methods", manifest.methods()}};
  return report;
}

int exit_code_for(const Report& report) { return report.errors.empty() ? 0 : 1; }

// ---------------------------------------------------------------------------
// tables

std::optional<TableFormat> parse_table_format(std::string_view name) {
  if (name == "text") return TableFormat::text;
  if (name == "json") return TableFormat::json;
  if (name == "csv") return TableFormat::csv;
  return std::nullopt;
}

std::vector<TableRow> table_rows(const Report& report) {
  std::map<std::string, double> wins;
  bool has_study = false;
  if (report.study && report.study->is_object()) {
    const json& s = *report.study;
    const std::string dataset = report.metadata.value("dataset_id", std::string());
    const json* section = nullptr;
    if (s.contains("per_dataset") && s["per_dataset"].contains(dataset)) section = &s["per_dataset"][dataset];
    else if (s.contains("pooled")) section = &s["pooled"];
    if (section && section->contains("win_table") && !(*section)["win_table"].empty()) {
      has_study = true;
      for (const auto& w : (*section)["win_table"]) wins[w.at("method_id").get<std::string>()] = w.at("win_pct").get<double>();
    }
  }
  std::vector<TableRow> rows;
  for (const auto& a : report.aggregates) {
    TableRow r{a.method_id, a.mean_iou, a.mean_lpips, a.mean_clip, a.mean_depth_ratio, a.watertight_pct, std::nullopt,
               a.figure_count};
    if (has_study) r.win_fraction = wins.count(a.method_id) ? wins[a.method_id] : 0.0;
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

struct Column {
  const char* title;
  bool higher_is_better;
  std::function<std::optional<double>(const TableRow&)> value;
  std::function<std::string(double)> format;
};

std::string fixed3(double v) { return fmt::format("{:.3f}", v); }
std::string whole_pct(double v) { return fmt::format("{}%", static_cast<long long>(std::lround(100.0 * v))); }
std::string one_decimal_pct(double v) { return fmt::format("{:.1f}%", 100.0 * v); }

std::vector<Column> columns_for(bool with_win) {
  // depth ratio has no preferred direction; the largest is marked, as is customary for volumetric expansion
  std::vector<Column> cols{
      {"IoU", true, [](const TableRow& r) { return std::optional(r.iou); }, fixed3},
      {"LPIPS", false, [](const TableRow& r) { return std::optional(r.lpips); }, fixed3},
      {"CLIP", true, [](const TableRow& r) { return std::optional(r.clip); }, fixed3},
      {"DepthR", true, [](const TableRow& r) { return std::optional(r.depth_ratio); }, fixed3},
      {"WT%", true, [](const TableRow& r) { return std::optional(r.watertight_fraction); }, whole_pct},
  };
  if (with_win) cols.push_back({"Win%", true, [](const TableRow& r) { return r.win_fraction; }, one_decimal_pct});
  return cols;
}

// Methods holding the best and second-best displayed value of a column; ties are joined with '/'.
std::pair<std::string, std::string> podium(const std::vector<TableRow>& rows, const Column& col) {
  std::map<std::string, std::vector<std::string>> by_text;
  std::vector<std::pair<double, std::string>> shown;
  for (const auto& r : rows) {
    const auto v = col.value(r);
    if (!v) continue;
    const std::string text = col.format(*v);
    if (by_text[text].empty()) shown.emplace_back(std::stod(text), text);
    by_text[text].push_back(r.method_id);
  }
  std::sort(shown.begin(), shown.end(), [&](const auto& a, const auto& b) {
    return col.higher_is_better ? a.first > b.first : a.first < b.first;
  });
  auto names = [&](std::size_t k) {
    if (k >= shown.size()) return std::string("-");
    std::string out;
    for (const auto& m : by_text[shown[k].second]) out += (out.empty() ? "" : "/") + m;
    return out;
  };
  return {names(0), names(1)};
}

}  // namespace

std::string render_table(const Report& report, TableFormat format) {
  const auto rows = table_rows(report);
  const bool with_win = !rows.empty() && rows.front().win_fraction.has_value();
  const auto cols = columns_for(with_win);
  const std::string dataset = report.metadata.value("dataset_id", std::string());

  if (format == TableFormat::csv) {
    std::string out = "dataset_id,method,iou,lpips,clip,depth_ratio,watertight_fraction,figure_count";
    if (with_win) out += ",win_fraction";
    out += "\n";
    for (const auto& r : rows) {
      out += fmt::format("{},{},{},{},{},{},{},{}", dataset, r.method_id, r.iou, r.lpips, r.clip, r.depth_ratio,
                         r.watertight_fraction, r.figure_count);
      if (with_win) out += fmt::format(",{}", *r.win_fraction);
      out += "\n";
    }
    return out;
  }

  if (format == TableFormat::json) {
    json doc{{"dataset_id", dataset}, {"columns", json::array()}, {"rows", json::array()}, {"best", json::object()},
             {"second", json::object()}};
    for (const auto& c : cols) doc["columns"].push_back(c.title);
    for (const auto& r : rows) {
      json row{{"method", r.method_id}};
      for (const auto& c : cols) row[c.title] = c.format(*c.value(r));
      doc["rows"].push_back(row);
    }
    for (const auto& c : cols) {
      const auto [first, second] = podium(rows, c);
      doc["best"][c.title] = first;
      doc["second"][c.title] = second;
    }
    return doc.dump(2) + "\n";
  }

  std::string out = fmt::format("dataset {}\nmethod", dataset);
  for (const auto& c : cols) out += fmt::format(" {}", c.title);
  out += "\n";
  for (const auto& r : rows) {
    out += r.method_id;
    for (const auto& c : cols) out += " " + c.format(*c.value(r));
    out += "\n";
  }
  std::string best = "best";
  std::string second = "second";
  for (const auto& c : cols) {
    const auto [first, next] = podium(rows, c);
    best += " " + first;
    second += " " + next;
  }
  return out + best + "\n" + second + "\n";
}

std::vector<TableRow> parse_csv_table(std::string_view csv) {
  std::istringstream is{std::string(csv)};
  std::string line;
  std::uint64_t offset = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : s) {
      if (ch == ',') {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    parts.push_back(cur);
    return parts;
  };
  if (!std::getline(is, line)) throw Error(ErrorCode::MalformedFile, "empty table", 0);
  const auto header = split(line);
  offset += line.size() + 1;
  const bool with_win = header.size() == 9 && header[8] == "win_fraction";
  if (header.size() < 8 || header[1] != "method") throw Error(ErrorCode::MalformedFile, "unexpected csv header", 0);

  std::vector<TableRow> rows;
  while (std::getline(is, line)) {
    const std::uint64_t at = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) throw Error(ErrorCode::MalformedFile, "wrong number of csv fields", at);
    try {
      TableRow r;
      r.method_id = f[1];
      r.iou = std::stod(f[2]);
      r.lpips = std::stod(f[3]);
      r.clip = std::stod(f[4]);
      r.depth_ratio = std::stod(f[5]);
      r.watertight_fraction = std::stod(f[6]);
      r.figure_count = std::stoul(f[7]);
      if (with_win) r.win_fraction = std::stod(f[8]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::MalformedFile, "bad number in csv row", at);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// study stimuli

std::vector<TrialPlan> prepare_study(std::span<const DatasetManifest> manifests, ScorerPool& pool,
                                     const fs::path& assets_dir, std::size_t trials_target, std::uint64_t seed) {
  std::set<std::string> method_set;
  for (const auto& m : manifests)
    for (const auto& id : m.methods()) method_set.insert(id);
  const std::vector<std::string> methods(method_set.begin(), method_set.end());

  std::vector<PlanFigure> figures;
  std::set<std::string> seen;
  for (const auto& m : manifests) {
    for (const auto& f : m.figures) {
      if (!seen.insert(f.figure_id).second) invalid("figure id " + f.figure_id + " appears in two manifests");
      if (f.meshes.size() != methods.size()) invalid("figure " + f.figure_id + " does not list every study method");
      figures.push_back({f.figure_id, m.dataset_id});
    }
  }
  auto plan = generate_plan(figures, methods, trials_target, seed);

  fs::create_directories(assets_dir);
  for (const auto& m : manifests) {
    for (const auto& f : m.figures) {
      ReferenceImage reference{read_png(f.reference_path)};
      fs::copy_file(f.reference_path, assets_dir / reference_asset_name(f.figure_id),
                    fs::copy_options::overwrite_existing);
      for (const auto& [method, path] : f.meshes) {
        const TriangleMesh mesh = load_mesh(path, method, f.figure_id);
        auto lease = pool.acquire();
        const auto orientation = detect_orientation(mesh, reference, m.render_config, *lease);
        write_file(assets_dir / stimulus_asset_name(f.figure_id, method),
                   encode_png(orientation.winner_render().shaded));
      }
    }
  }
  return plan;
}

}  // namespace minia
