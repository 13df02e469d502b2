// minia: evaluation harness, orientation debugging and 2AFC study tooling.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "minia/error.hpp"
#include "minia/harness.hpp"
#include "minia/orient.hpp"
#include "minia/scorer_http.hpp"
#include "minia/scorer_wire.hpp"
#include "minia/study.hpp"
#include "minia/study_service.hpp"

namespace {

using namespace minia;
using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitFatal = 2;

struct ScorerFlags {
  std::string selector = "stub";
  int timeout_ms = 30000;
  std::size_t connections = 1;
};

void add_scorer_flags(CLI::App* cmd, ScorerFlags& flags) {
  cmd->add_option("--scorer", flags.selector, "stub | stub-constant | sidecar | http:URL")->capture_default_str();
  cmd->add_option("--timeout-ms", flags.timeout_ms, "per-request scorer timeout")->capture_default_str();
}

ScorerPool make_pool(const ScorerFlags& flags) {
  return ScorerPool(scorer_factory(flags.selector, std::chrono::milliseconds(flags.timeout_ms)),
                    std::max<std::size_t>(flags.connections, 1));
}

void write_text(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    os << text;
  }
  fs::rename(tmp, path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image-to-3D evaluation harness and pairwise preference study tools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate every (figure, method) of a manifest");
  fs::path eval_manifest, eval_out;
  ScorerFlags eval_scorer;
  eval->add_option("--manifest", eval_manifest, "dataset manifest (JSON)")->required();
  eval->add_option("--out", eval_out, "report path")->required();
  eval->add_option("--jobs", eval_scorer.connections, "parallel figure workers")->capture_default_str();
  add_scorer_flags(eval, eval_scorer);

  // table
  auto* table = app.add_subcommand("table", "render a report's aggregate table");
  fs::path table_report;
  std::string table_format = "text";
  table->add_option("--report", table_report, "report path")->required();
  table->add_option("--format", table_format, "text | json | csv")
      ->check(CLI::IsMember({"text", "json", "csv"}))
      ->capture_default_str();

  // orient-debug
  auto* debug = app.add_subcommand("orient-debug", "dump all orientation candidates for one figure and method");
  fs::path debug_manifest, debug_out;
  std::string debug_figure, debug_method;
  ScorerFlags debug_scorer;
  debug->add_option("--manifest", debug_manifest)->required();
  debug->add_option("--figure", debug_figure)->required();
  debug->add_option("--method", debug_method)->required();
  debug->add_option("--out", debug_out, "output directory")->required();
  add_scorer_flags(debug, debug_scorer);

  // study
  auto* study = app.add_subcommand("study", "pairwise preference study");
  study->require_subcommand(1);

  auto* plan_cmd = study->add_subcommand("plan", "generate the trial plan and pre-render stimuli");
  std::vector<fs::path> plan_manifests;
  fs::path plan_out, plan_assets;
  std::size_t plan_trials = 0;
  std::uint64_t plan_seed = 0;
  ScorerFlags plan_scorer;
  plan_cmd->add_option("--manifest", plan_manifests, "one or more dataset manifests")->required();
  plan_cmd->add_option("--out", plan_out, "plan path")->required();
  plan_cmd->add_option("--assets", plan_assets, "stimulus directory")->required();
  plan_cmd->add_option("--trials", plan_trials, "total trials; extra repetitions are spread evenly");
  plan_cmd->add_option("--seed", plan_seed)->capture_default_str();
  add_scorer_flags(plan_cmd, plan_scorer);

  auto* serve_cmd = study->add_subcommand("serve", "serve trials over HTTP");
  fs::path serve_plan, serve_log, serve_assets;
  std::optional<fs::path> serve_ui;
  std::string serve_host = "0.0.0.0";
  int serve_port = 8080;
  std::uint64_t serve_seed = 0;
  serve_cmd->add_option("--plan", serve_plan)->required();
  serve_cmd->add_option("--log", serve_log)->required();
  serve_cmd->add_option("--assets", serve_assets)->required();
  serve_cmd->add_option("--ui", serve_ui, "participant UI bundle directory");
  serve_cmd->add_option("--host", serve_host)->capture_default_str();
  serve_cmd->add_option("--port", serve_port)->capture_default_str();
  serve_cmd->add_option("--seed", serve_seed)->capture_default_str();

  auto* analyze_cmd = study->add_subcommand("analyze", "win rates and rater concordance");
  fs::path analyze_plan, analyze_log;
  std::optional<fs::path> analyze_report, analyze_out;
  analyze_cmd->add_option("--plan", analyze_plan)->required();
  analyze_cmd->add_option("--log", analyze_log)->required();
  analyze_cmd->add_option("--report", analyze_report, "embed the results into this report");
  analyze_cmd->add_option("--out", analyze_out, "write the analysis here instead of stdout");

  // reference scorer endpoint used by tests and dry runs
  auto* stub = app.add_subcommand("stub-scorer", "serve the deterministic stub scorer");
  stub->group("");
  std::string stub_mode = "pixel";
  std::optional<int> stub_http;
  stub->add_option("--mode", stub_mode)->check(CLI::IsMember({"pixel", "constant"}))->capture_default_str();
  stub->add_option("--http", stub_http, "serve POST /score on this port instead of stdio");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*eval) {
      const auto manifest = load_manifest(eval_manifest);
      auto pool = make_pool(eval_scorer);
      const Report report = run_eval(manifest, pool, {eval_scorer.connections, ""});
      write_report(report, eval_out);
      for (const auto& e : report.errors) {
        std::cerr << fmt::format("error {}/{}: {} {}\n", e.figure_id, e.method_id, e.code, e.message);
      }
      std::cerr << fmt::format("{} records, {} errors -> {}\n", report.records.size(), report.errors.size(),
                               eval_out.string());
      return exit_code_for(report);
    }

    if (*table) {
      const Report report = read_report(table_report);
      std::cout << render_table(report, *parse_table_format(table_format));
      return 0;
    }

    if (*debug) {
      const auto manifest = load_manifest(debug_manifest);
      const auto* figure = manifest.find_figure(debug_figure);
      if (!figure) throw Error(ErrorCode::InvalidArgument, "no figure " + debug_figure + " in the manifest");
      auto it = std::find_if(figure->meshes.begin(), figure->meshes.end(),
                             [&](const auto& m) { return m.first == debug_method; });
      if (it == figure->meshes.end()) throw Error(ErrorCode::InvalidArgument, "no method " + debug_method);
      const TriangleMesh mesh = load_mesh(it->second, debug_method, debug_figure);
      ReferenceImage reference{read_png(figure->reference_path)};
      auto pool = make_pool(debug_scorer);
      auto lease = pool.acquire();
      const auto result = detect_orientation(mesh, reference, manifest.render_config, *lease);
      dump_orientation_debug(result, debug_out);
      std::cout << orientation_to_json(result).dump(2) << "\n";
      return 0;
    }

    if (*plan_cmd) {
      std::vector<DatasetManifest> manifests;
      for (const auto& p : plan_manifests) manifests.push_back(load_manifest(p));
      auto pool = make_pool(plan_scorer);
      const auto plan = prepare_study(manifests, pool, plan_assets, plan_trials, plan_seed);
      write_plan(plan, plan_out);
      std::cerr << fmt::format("{} trials -> {}, stimuli in {}\n", plan.size(), plan_out.string(),
                               plan_assets.string());
      return 0;
    }

    if (*serve_cmd) {
      StudyService service(read_plan(serve_plan), serve_log, serve_seed);
      StudyHttpServer server(service, serve_assets, serve_ui);
      std::cerr << fmt::format("serving study on {}:{}\n", serve_host, serve_port);
      server.listen_blocking(serve_host, serve_port);
      return 0;
    }

    if (*analyze_cmd) {
      const auto plan = read_plan(analyze_plan);
      const json analysis = analyze_study(read_response_log(analyze_log), plan);
      if (analyze_report) {
        Report report = read_report(*analyze_report);
        report.study = analysis;
        write_report(report, *analyze_report);
      }
      if (analyze_out) write_text(*analyze_out, analysis.dump(2) + "\n");
      else std::cout << analysis.dump(2) << "\n";
      return 0;
    }

    if (*stub) {
      StubScorer scorer(stub_mode == "constant" ? StubScorer::Mode::constant : StubScorer::Mode::pixel);
      if (stub_http) {
        ScorerHttpServer server(scorer);
        server.listen_blocking("127.0.0.1", *stub_http);
      } else {
        serve_stdio(scorer, std::cin, std::cout);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << fmt::format("fatal: {}: {}\n", to_string(e.code()), e.what());
    return kExitFatal;
  } catch (const std::exception& e) {
    std::cerr << fmt::format("fatal: {}\n", e.what());
    return kExitFatal;
  }
  return 0;
}
