// Command-line front end over the bevfuse C API.
#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <string>

#include "bevfuse/bevfuse.h"

namespace {

struct EngineDeleter {
  void operator()(bf_engine* e) const { bf_engine_free(e); }
};
using Engine = std::unique_ptr<bf_engine, EngineDeleter>;

const char* status_name(bf_status s) {
  switch (s) {
    case BF_OK: return "ok";
    case BF_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case BF_ERR_IO: return "io";
    case BF_ERR_PARSE: return "parse";
    case BF_ERR_NUMERIC: return "numeric";
    case BF_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

int fail(const bf_engine* e, bf_status s) {
  std::fprintf(stderr, "{\"error\":{\"code\":%d,\"kind\":\"%s\",\"message\":\"%s\"}}\n",
               static_cast<int>(s), status_name(s),
               json_escape(bf_engine_last_error(e)).c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bevfuse: BEV fusion, trajectory forecasting and planning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", bf_version());

  std::string config_path;
  app.add_option("--config", config_path, "Experiment config JSON")
      ->check(CLI::ExistingFile);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene corpus");
  std::uint64_t seed = 1;
  int count = 8;
  std::string out_dir;
  synth->add_option("--seed", seed, "Base scene seed");
  synth->add_option("--count", count, "Number of scenes");
  synth->add_option("--out", out_dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Run the three-stage training schedule");
  std::string scene_dir, resume;
  train->add_option("--scenes", scene_dir, "Scene directory")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--resume", resume, "Checkpoint to resume from");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a scene set");
  std::string checkpoint;
  bool oracle = false;
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint JSON");
  eval->add_option("--scenes", scene_dir, "Scene directory")->required();
  eval->add_option("--out", out_dir, "Output directory")->required();
  eval->add_flag("--oracle", oracle, "Ground-truth passthrough instead of a model");

  auto* optimize = app.add_subcommand("optimize", "Newton-optimize a plan against occupancy");
  std::string plan_path, occ_path, out_path;
  optimize->add_option("--plan", plan_path, "Plan JSON")->required();
  optimize->add_option("--occupancy", occ_path, "Occupancy JSON")->required();
  optimize->add_option("--out", out_path, "Optimized plan output path")->required();

  auto* report = app.add_subcommand("report", "Render metric CSV and PNG plots");
  std::string report_path, forecast_path, scene_path;
  report->add_option("--report", report_path, "Report JSON");
  report->add_option("--scene", scene_path, "Scene JSON");
  report->add_option("--forecast", forecast_path, "Forecast JSON overlay");
  report->add_option("--plan", plan_path, "Plan JSON overlay");
  report->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", app.help().c_str());
    std::fprintf(stderr, "{\"error\":{\"code\":2,\"kind\":\"usage\",\"message\":\"%s\"}}\n",
                 json_escape(e.what()).c_str());
    return 2;
  }

  Engine engine(bf_engine_new());
  if (!engine) {
    std::fprintf(stderr, "{\"error\":{\"code\":5,\"kind\":\"internal\",\"message\":\"engine allocation failed\"}}\n");
    return 1;
  }
  if (!config_path.empty()) {
    const bf_status s = bf_engine_load_config(engine.get(), config_path.c_str());
    if (s != BF_OK) return fail(engine.get(), s);
  }

  bf_status s = BF_OK;
  if (*synth) {
    s = bf_synth(engine.get(), seed, count, out_dir.c_str());
  } else if (*train) {
    s = bf_train(engine.get(), scene_dir.c_str(), out_dir.c_str(),
                 resume.empty() ? nullptr : resume.c_str());
  } else if (*eval) {
    s = bf_eval(engine.get(), checkpoint.empty() ? nullptr : checkpoint.c_str(),
                scene_dir.c_str(), out_dir.c_str(), oracle ? 1 : 0);
  } else if (*optimize) {
    s = bf_optimize(engine.get(), plan_path.c_str(), occ_path.c_str(),
                    out_path.c_str());
  } else if (*report) {
    s = bf_report(engine.get(), report_path.empty() ? nullptr : report_path.c_str(),
                  scene_path.empty() ? nullptr : scene_path.c_str(),
                  forecast_path.empty() ? nullptr : forecast_path.c_str(),
                  plan_path.empty() ? nullptr : plan_path.c_str(), out_dir.c_str());
  }
  if (s != BF_OK) return fail(engine.get(), s);
  return 0;
}
