#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "fixtures.hpp"
#include "minia/error.hpp"
#include "minia/harness.hpp"
#include "minia/study_service.hpp"

using namespace minia;
namespace fx = minia::fixtures;
using json = nlohmann::json;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no minia::Error thrown");
  return ErrorCode::IoError;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

const std::vector<std::string> kThree = {"Alpha", "Beta", "Gamma"};

ScorerPool stub_pool(std::size_t n = 1) {
  return ScorerPool([] { return std::make_unique<StubScorer>(); }, n);
}

}  // namespace

TEST_CASE("manifest parsing resolves paths and validates structure") {
  fx::TempDir dir;
  const auto path = fx::write_synthetic_dataset(dir.path(), "ds", 2, kThree, 64);
  const auto m = load_manifest(path);
  CHECK(m.dataset_id == "ds");
  CHECK(m.render_config.resolution == 64);
  REQUIRE(m.figures.size() == 2);
  CHECK(m.methods() == kThree);
  CHECK(m.figures[0].reference_path == dir.path() / "ds_0.png");
  CHECK(m.figures[0].meshes.size() == 3);
  CHECK(m.figures[0].meshes[0].first == "Alpha");
  CHECK(m.find_figure("ds_1") == &m.figures[1]);
  CHECK(m.find_figure("nope") == nullptr);

  const json good = json::parse(fx::read_text(path));
  auto broken = [&](auto&& edit) {
    json doc = good;
    edit(doc);
    return code_of([&] { parse_manifest(doc, dir.path()); });
  };
  CHECK(broken([](json& d) { d.erase("dataset_id"); }) == ErrorCode::ManifestInvalid);
  CHECK(broken([](json& d) { d["figures"] = json::array(); }) == ErrorCode::ManifestInvalid);
  CHECK(broken([](json& d) { d["figures"][1]["figure_id"] = "ds_0"; }) == ErrorCode::ManifestInvalid);
  CHECK(broken([](json& d) { d["figures"][0]["meshes"] = json::object(); }) == ErrorCode::ManifestInvalid);
  CHECK(broken([](json& d) { d["figures"][0]["meshes"]["Alpha"] = "missing.obj"; }) == ErrorCode::ManifestInvalid);
  CHECK(broken([](json& d) { d["figures"][0]["reference_path"] = "missing.png"; }) == ErrorCode::ManifestInvalid);
  CHECK(broken([](json& d) { d["figures"][0].erase("reference_path"); }) == ErrorCode::ManifestInvalid);
  CHECK(broken([](json& d) { d["render_config"]["glossiness"] = 2; }) == ErrorCode::ManifestInvalid);
  CHECK(broken([](json& d) { d["render_config"]["resolution"] = 4; }) == ErrorCode::ManifestInvalid);
  CHECK(broken([](json& d) { d = json::array(); }) == ErrorCode::ManifestInvalid);

  json missing_file = good;
  missing_file["figures"][0]["meshes"]["Alpha"] = "missing.obj";
  CHECK(parse_manifest(missing_file, dir.path(), false).figures[0].meshes[0].second == dir.path() / "missing.obj");
  CHECK(code_of([&] { load_manifest(dir / "absent.json"); }) == ErrorCode::ManifestInvalid);
  fx::write_text(dir / "garbage.json", "{");
  CHECK(code_of([&] { load_manifest(dir / "garbage.json"); }) == ErrorCode::ManifestInvalid);
}

TEST_CASE("render config json") {
  RenderConfig c;
  c.resolution = 300;
  c.ambient = 0.1;
  c.light_direction = Vec3(1, 2, 3);
  const auto back = render_config_from_json(render_config_to_json(c));
  CHECK(back.resolution == 300);
  CHECK(back.ambient == 0.1);
  CHECK(back.light_direction == Vec3(1, 2, 3));
  CHECK(render_config_from_json(json{{"margin_fraction", 0.1}}).margin_fraction == 0.1);
  CHECK(render_config_from_json(json::object()).resolution == 512);
  CHECK(code_of([] { render_config_from_json(json{{"zoom", 1}}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("run_eval: 2 figures x 3 methods") {
  fx::TempDir dir;
  const auto manifest = load_manifest(fx::write_synthetic_dataset(dir.path(), "ds", 2, kThree, 96));
  auto pool = stub_pool();
  const auto report = run_eval(manifest, pool, {1, "2024-01-01T00:00:00Z"});
  REQUIRE(report.records.size() == 6);
  CHECK(report.errors.empty());
  REQUIRE(report.aggregates.size() == 3);
  CHECK(exit_code_for(report) == 0);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(report.records[i].figure_id == "ds_" + std::to_string(i / 3));
    CHECK(report.records[i].method_id == kThree[i % 3]);
  }
  for (const auto& row : report.aggregates) {
    CHECK(row.figure_count == 2);
    CHECK(row.error_count == 0);
    CHECK(row.dataset_id == "ds");
  }
  // Alpha is the relief itself: it should match its reference closely
  CHECK(report.records[0].silhouette_iou >= 0.95);
  CHECK(report.aggregates[0].mean_iou > report.aggregates[1].mean_iou);
  CHECK(report.aggregates[0].watertight_pct == 1.0);  // the relief is closed
  CHECK(report.aggregates[2].watertight_pct == 0.0);  // the open box is not

  const auto& md = report.metadata;
  CHECK(md["tool_version"] == kToolVersion);
  CHECK(md["generated_at"] == "2024-01-01T00:00:00Z");
  CHECK(md["dataset_id"] == "ds");
  CHECK(md["scorer"]["clip"] == "stub");
  CHECK(md["aggregation"] == "arithmetic_mean");
  CHECK(md["render_config"]["resolution"] == 96);
  CHECK(md["methods"] == kThree);
  CHECK(report_consistency_error(report) <= 1e-12);
}

TEST_CASE("run_eval isolates a broken mesh") {
  fx::TempDir dir;
  const auto path = fx::write_synthetic_dataset(dir.path(), "ds", 2, kThree, 64);
  fx::write_text(dir / "ds_1_Beta.obj", "v 0 0 0\nf 1 2 3\n");
  auto pool = stub_pool();
  const auto report = run_eval(load_manifest(path), pool, {2, "t"});
  CHECK(report.records.size() == 5);
  REQUIRE(report.errors.size() == 1);
  CHECK(report.errors[0].figure_id == "ds_1");
  CHECK(report.errors[0].method_id == "Beta");
  CHECK(report.errors[0].code == "MalformedFile");
  CHECK_FALSE(report.errors[0].message.empty());
  std::size_t counted = 0;
  for (const auto& row : report.aggregates) {
    counted += row.figure_count;
    CHECK(row.error_count == (row.method_id == "Beta" ? 1u : 0u));
  }
  CHECK(counted == 5);
  CHECK(exit_code_for(report) == 1);

  // a method whose every figure fails keeps its error entries but has no row
  fx::write_text(dir / "ds_0_Beta.obj", "garbage\n");
  const auto worse = run_eval(load_manifest(path), pool, {1, "t"});
  CHECK(worse.errors.size() == 2);
  CHECK(worse.aggregates.size() == 2);
}

TEST_CASE("run_eval: unreadable reference fails every method of that figure") {
  fx::TempDir dir;
  const auto path = fx::write_synthetic_dataset(dir.path(), "ds", 2, kThree, 64);
  fx::write_text(dir / "ds_0.png", "not a png");
  auto pool = stub_pool();
  const auto report = run_eval(load_manifest(path), pool, {1, "t"});
  CHECK(report.records.size() == 3);
  CHECK(report.errors.size() == 3);
}

TEST_CASE("report bodies are identical across reruns and worker counts") {
  fx::TempDir dir;
  const auto manifest = load_manifest(fx::write_synthetic_dataset(dir.path(), "ds", 4, kThree, 64));
  auto pool1 = stub_pool(1);
  auto pool3 = stub_pool(3);
  const auto a = run_eval(manifest, pool1, {1, "2024-01-01T00:00:00Z"});
  const auto b = run_eval(manifest, pool1, {1, "2030-06-01T12:00:00Z"});
  const auto c = run_eval(manifest, pool3, {4, ""});
  CHECK(report_body(a) == report_body(b));
  CHECK(report_body(a) == report_body(c));
  CHECK(report_body(a).find("generated_at") == std::string::npos);
}

TEST_CASE("generated_at honours SOURCE_DATE_EPOCH") {
  fx::TempDir dir;
  const auto manifest = load_manifest(fx::write_synthetic_dataset(dir.path(), "ds", 1, {"Alpha", "Beta"}, 48));
  auto pool = stub_pool();
  ::setenv("SOURCE_DATE_EPOCH", "86400", 1);
  const auto report = run_eval(manifest, pool);
  ::unsetenv("SOURCE_DATE_EPOCH");
  CHECK(report.metadata["generated_at"] == "1970-01-02T00:00:00Z");
}

TEST_CASE("report file round trip and consistency") {
  fx::TempDir dir;
  auto report = fx::table_fixture_report();
  report.errors.push_back({"fig9", "SF3D", "EmptyMesh", "no faces"});
  report.study = json{{"pooled", {{"win_table", json::array()}}}};
  write_report(report, dir / "out" / "report.json");
  CHECK(std::distance(std::filesystem::directory_iterator(dir / "out"), std::filesystem::directory_iterator()) == 1);
  const auto back = read_report(dir / "out" / "report.json");
  CHECK(report_body(back) == report_body(report));
  CHECK(back.records.size() == report.records.size());
  CHECK(back.errors.size() == 1);
  CHECK(back.study.has_value());
  CHECK(report_consistency_error(back) <= 1e-12);

  auto tampered = back;
  tampered.aggregates[0].mean_iou += 1e-6;
  CHECK(report_consistency_error(tampered) >= 1e-7);
  tampered.aggregates.pop_back();
  CHECK(std::isinf(report_consistency_error(tampered)));

  fx::write_text(dir / "bad.json", "{\"records\": []}");
  CHECK(code_of([&] { read_report(dir / "bad.json"); }) == ErrorCode::MalformedFile);
}

TEST_CASE("text table rows and the best and second markers") {
  const auto report = fx::table_fixture_report();
  const auto text = render_table(report, TableFormat::text);
  const auto rows = lines(text);
  REQUIRE(rows.size() == 2 + 7 + 2);
  CHECK(rows[0] == "dataset monteprandone");
  CHECK(rows[1] == "method IoU LPIPS CLIP DepthR WT%");
  CHECK(std::find(rows.begin(), rows.end(), "Hi3DGen 0.557 0.431 0.744 0.190 53%") != rows.end());
  CHECK(std::find(rows.begin(), rows.end(), "SF3D 0.751 0.395 0.724 0.234 0%") != rows.end());
  CHECK(std::find(rows.begin(), rows.end(), "SAM3D 0.594 0.437 0.730 0.048 68%") != rows.end());
  CHECK(std::find(rows.begin(), rows.end(), "TRELLIS 0.572 0.457 0.716 0.041 39%") != rows.end());
  CHECK(std::find(rows.begin(), rows.end(), "Wonder3D 0.348 0.522 0.677 0.513 16%") != rows.end());
  // bold and underlined entries of the source table
  CHECK(rows[9] == "best SF3D SF3D Hi3DGen Wonder3D SAM3D");
  CHECK(rows[10] == "second SPAR3D SPAR3D SAM3D TripoSR Hi3DGen");
}

TEST_CASE("ties on the displayed value share a marker") {
  Report r;
  r.metadata = {{"dataset_id", "d"}};
  r.aggregates = {{"A", "d", 0.5001, 0.2, 0.1, 0.1, 1.0, 1, 0}, {"B", "d", 0.4999, 0.3, 0.1, 0.2, 0.0, 1, 0},
                  {"C", "d", 0.4, 0.1, 0.0, 0.0, 0.5, 1, 0}};
  const auto rows = lines(render_table(r, TableFormat::text));
  CHECK(rows[5] == "best A/B C A/B B A");
  CHECK(rows[6] == "second C A C A C");
}

TEST_CASE("win column appears only with study results") {
  auto report = fx::table_fixture_report();
  CHECK(lines(render_table(report, TableFormat::text))[1].find("Win%") == std::string::npos);
  CHECK(render_table(report, TableFormat::csv).find("win_fraction") == std::string::npos);
  report.study = json{{"per_dataset", {{"vatican", {{"win_table", json::array()}}}}}, {"pooled", {{"win_table", json::array()}}}};
  CHECK(lines(render_table(report, TableFormat::text))[1].find("Win%") == std::string::npos);

  report.study = json{{"per_dataset",
                       {{"monteprandone",
                         {{"win_table", {{{"method_id", "Hi3DGen"}, {"win_pct", 489.0 / 585}},
                                         {{"method_id", "TripoSR"}, {"win_pct", 403.0 / 569}}}}}}}}};
  const auto rows = lines(render_table(report, TableFormat::text));
  CHECK(rows[1] == "method IoU LPIPS CLIP DepthR WT% Win%");
  CHECK(std::find(rows.begin(), rows.end(), "Hi3DGen 0.557 0.431 0.744 0.190 53% 83.6%") != rows.end());
  CHECK(std::find(rows.begin(), rows.end(), "TripoSR 0.459 0.547 0.721 0.371 0% 70.8%") != rows.end());
  CHECK(std::find(rows.begin(), rows.end(), "SF3D 0.751 0.395 0.724 0.234 0% 0.0%") != rows.end());
  CHECK(rows.back().substr(rows.back().rfind(' ') + 1) == "TripoSR");
}

TEST_CASE("csv round trip and json table") {
  auto report = fx::table_fixture_report();
  for (bool with_study : {false, true}) {
    if (with_study) {
      report.study = json{{"pooled", {{"win_table", {{{"method_id", "SF3D"}, {"win_pct", 267.0 / 564}}}}}}};
    }
    const auto csv = render_table(report, TableFormat::csv);
    const auto parsed = parse_csv_table(csv);
    const auto expected = table_rows(report);
    REQUIRE(parsed.size() == expected.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      CHECK(parsed[i].method_id == expected[i].method_id);
      CHECK(parsed[i].iou == expected[i].iou);
      CHECK(parsed[i].lpips == expected[i].lpips);
      CHECK(parsed[i].clip == expected[i].clip);
      CHECK(parsed[i].depth_ratio == expected[i].depth_ratio);
      CHECK(parsed[i].watertight_fraction == expected[i].watertight_fraction);
      CHECK(parsed[i].figure_count == expected[i].figure_count);
      CHECK(parsed[i].win_fraction == expected[i].win_fraction);
    }
  }
  CHECK(code_of([] { parse_csv_table(""); }) == ErrorCode::MalformedFile);
  CHECK(code_of([] { parse_csv_table("a,b\n"); }) == ErrorCode::MalformedFile);
  CHECK(code_of([] {
          parse_csv_table("dataset_id,method,iou,lpips,clip,depth_ratio,watertight_fraction,figure_count\nd,A,x,1,1,1,1,1\n");
        }) == ErrorCode::MalformedFile);

  const auto doc = json::parse(render_table(fx::table_fixture_report(), TableFormat::json));
  CHECK(doc["dataset_id"] == "monteprandone");
  CHECK(doc["rows"].size() == 7);
  CHECK(doc["best"]["CLIP"] == "Hi3DGen");
  CHECK(parse_table_format("csv") == TableFormat::csv);
  CHECK_FALSE(parse_table_format("xml").has_value());
}

TEST_CASE("the fixture reproduces aggregate IoU 0.751 for SF3D") {
  const auto report = fx::table_fixture_report();
  const auto rows = table_rows(report);
  const auto sf3d = std::find_if(rows.begin(), rows.end(), [](const TableRow& r) { return r.method_id == "SF3D"; });
  REQUIRE(sf3d != rows.end());
  char shown[16];
  std::snprintf(shown, sizeof shown, "%.3f", sf3d->iou);
  CHECK(std::string(shown) == "0.751");
  CHECK(sf3d->figure_count == 38);
}

TEST_CASE("prepare_study writes anonymized assets") {
  fx::TempDir dir;
  const auto m1 = load_manifest(fx::write_synthetic_dataset(dir / "a", "monte", 2, kThree, 64));
  const auto m2 = load_manifest(fx::write_synthetic_dataset(dir / "b", "vat", 1, kThree, 64));
  auto pool = stub_pool();
  const std::vector<DatasetManifest> both = {m1, m2};
  const auto plan = prepare_study(both, pool, dir / "assets", 0, 3);
  CHECK(plan.size() == 3 * 3);
  for (const auto& fig : {"monte_0", "monte_1", "vat_0"}) {
    CHECK(std::filesystem::exists(dir / "assets" / reference_asset_name(fig)));
    for (const auto& m : kThree) {
      const auto asset = dir / "assets" / stimulus_asset_name(fig, m);
      REQUIRE(std::filesystem::exists(asset));
      CHECK(read_png(asset).width == 64);
      CHECK(asset.filename().string().find(m) == std::string::npos);
    }
  }
  std::set<std::string> datasets;
  for (const auto& t : plan) datasets.insert(t.dataset_id);
  CHECK(datasets == std::set<std::string>{"monte", "vat"});
  CHECK(prepare_study(both, pool, dir / "assets2", 20, 3).size() == 20);

  const auto m3 = load_manifest(fx::write_synthetic_dataset(dir / "c", "other", 1, {"Alpha", "Beta"}, 64));
  const std::vector<DatasetManifest> uneven = {m1, m3};
  CHECK(code_of([&] { prepare_study(uneven, pool, dir / "assets3"); }) == ErrorCode::ManifestInvalid);
}
