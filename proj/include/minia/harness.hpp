#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "minia/metrics.hpp"
#include "minia/raster.hpp"
#include "minia/scorer.hpp"
#include "minia/study.hpp"

namespace minia {

inline constexpr const char* kToolVersion = "0.1.0";

struct ManifestFigure {
  std::string figure_id;
  std::filesystem::path reference_path;
  std::vector<std::pair<std::string, std::filesystem::path>> meshes;  // (method id, path), sorted by method
};

/// JSON manifest:
///   {"dataset_id": "...", "render_config": {...overrides},
///    "figures": [{"figure_id": "...", "reference_path": "ref.png",
///                 "meshes": {"MethodA": "a.obj", ...}}]}
/// Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  std::string dataset_id;
  RenderConfig render_config;
  std::vector<ManifestFigure> figures;

  std::vector<std::string> methods() const;  // sorted union
  const ManifestFigure* find_figure(const std::string& figure_id) const;
};

/// Throws ManifestInvalid for schema errors, duplicate figure ids, figures
/// without methods and paths that do not exist (when check_paths is set).
DatasetManifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                               bool check_paths = true);
DatasetManifest load_manifest(const std::filesystem::path& path);

nlohmann::json render_config_to_json(const RenderConfig& config);
/// Applies the keys present in `overrides` on top of `base`. Unknown keys throw InvalidArgument.
RenderConfig render_config_from_json(const nlohmann::json& overrides, RenderConfig base = {});

struct Report {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<MetricRecord> records;  // manifest order: figure, then method
  std::vector<FigureError> errors;
  std::vector<AggregateRow> aggregates;
  std::optional<nlohmann::json> study;
};

nlohmann::json report_to_json(const Report& report);
Report report_from_json(const nlohmann::json& doc);

/// The serialized report with metadata.generated_at removed; identical inputs
/// give identical bodies.
std::string report_body(const Report& report);

void write_report(const Report& report, const std::filesystem::path& path);  // temp file + rename
Report read_report(const std::filesystem::path& path);

/// Largest absolute difference between the embedded aggregate rows and rows
/// recomputed from the embedded records; +inf when row sets differ.
double report_consistency_error(const Report& report);

struct EvalOptions {
  std::size_t jobs = 1;
  /// ISO-8601 timestamp for metadata.generated_at; empty means now, or
  /// SOURCE_DATE_EPOCH when that variable is set.
  std::string generated_at;
};

/// Evaluates every (figure, method) of the manifest with up to `jobs` figure
/// workers sharing the pool. Failures become error entries; records keep
/// manifest order whatever the scheduling.
Report run_eval(const DatasetManifest& manifest, ScorerPool& pool, const EvalOptions& options = {});

/// Error entries present means a partial run.
int exit_code_for(const Report& report);

enum class TableFormat { text, json, csv };
std::optional<TableFormat> parse_table_format(std::string_view name);

/// One row per method, columns IoU, LPIPS, CLIP, depth ratio, WT%, plus
/// Win% when the report carries study results. Text rows read
/// "Method 0.557 0.431 0.744 0.190 53%"; the best and second-best method
/// per column follow in "best" and "second" rows.
std::string render_table(const Report& report, TableFormat format);

struct TableRow {
  std::string method_id;
  double iou = 0.0;
  double lpips = 0.0;
  double clip = 0.0;
  double depth_ratio = 0.0;
  double watertight_fraction = 0.0;
  std::optional<double> win_fraction;
  std::size_t figure_count = 0;
};

std::vector<TableRow> table_rows(const Report& report);
/// Inverse of the csv rendering. Throws MalformedFile.
std::vector<TableRow> parse_csv_table(std::string_view csv);

/// Builds a pairwise study over the manifests: renders every (figure, method)
/// in its detected orientation into assets_dir under anonymized names, copies
/// each reference alongside, and returns the trial plan. Every figure must
/// list the same methods (ManifestInvalid otherwise).
std::vector<TrialPlan> prepare_study(std::span<const DatasetManifest> manifests, ScorerPool& pool,
                                     const std::filesystem::path& assets_dir, std::size_t trials_target = 0,
                                     std::uint64_t seed = 0);

}  // namespace minia
