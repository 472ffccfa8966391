#include "bevfuse/bevfuse.h"

#include <cstring>
#include <nlohmann/json.hpp>
#include <string>

#include "train/config.hpp"
#include "train/fsio.hpp"
#include "train/pipeline.hpp"

using bevfuse::train::ExperimentConfig;

struct bf_engine {
  ExperimentConfig cfg = bevfuse::train::config_defaults();
  std::string last_error;
};

namespace {

const char* kVersion = "0.1.0";

template <typename Fn>
bf_status guard(bf_engine* e, Fn&& fn) {
  if (!e) return BF_ERR_INVALID_ARGUMENT;
  e->last_error.clear();
  try {
    fn();
    return BF_OK;
  } catch (const bevfuse::train::IoError& ex) {
    e->last_error = ex.what();
    return BF_ERR_IO;
  } catch (const nlohmann::json::exception& ex) {
    e->last_error = ex.what();
    return BF_ERR_PARSE;
  } catch (const std::invalid_argument& ex) {
    e->last_error = ex.what();
    return BF_ERR_INVALID_ARGUMENT;
  } catch (const std::runtime_error& ex) {
    e->last_error = ex.what();
    return BF_ERR_NUMERIC;
  } catch (const std::exception& ex) {
    e->last_error = ex.what();
    return BF_ERR_INTERNAL;
  }
}

std::string opt(const char* s) { return s ? std::string(s) : std::string(); }

}  // namespace

extern "C" {

const char* bf_version(void) { return kVersion; }

bf_engine* bf_engine_new(void) {
  try {
    return new bf_engine();
  } catch (...) {
    return nullptr;
  }
}

void bf_engine_free(bf_engine* e) { delete e; }

const char* bf_engine_last_error(const bf_engine* e) {
  return e ? e->last_error.c_str() : "";
}

bf_status bf_engine_load_config(bf_engine* e, const char* path) {
  return guard(e, [&] {
    if (!path) throw std::invalid_argument("config path is null");
    e->cfg = bevfuse::train::load_config_file(path);
  });
}

bf_status bf_engine_set_config(bf_engine* e, const char* json_text) {
  return guard(e, [&] {
    if (!json_text) throw std::invalid_argument("config text is null");
    e->cfg = bevfuse::train::parse_config_text(json_text);
  });
}

bf_status bf_engine_config_dump(const bf_engine* e, char* buf, size_t cap,
                                size_t* needed) {
  if (!e) return BF_ERR_INVALID_ARGUMENT;
  const std::string dump = bevfuse::train::config_to_json(e->cfg).dump(2);
  if (needed) *needed = dump.size() + 1;
  if (buf && cap > 0) {
    const size_t n = std::min(cap - 1, dump.size());
    std::memcpy(buf, dump.data(), n);
    buf[n] = '\0';
  }
  return BF_OK;
}

bf_status bf_synth(bf_engine* e, uint64_t seed, int count, const char* out_dir) {
  return guard(e, [&] {
    if (!out_dir) throw std::invalid_argument("output directory is null");
    bevfuse::train::run_synth(e->cfg, seed, count, out_dir);
  });
}

bf_status bf_train(bf_engine* e, const char* scene_dir, const char* out_dir,
                   const char* resume_checkpoint) {
  return guard(e, [&] {
    if (!scene_dir || !out_dir)
      throw std::invalid_argument("scene and output directories are required");
    bevfuse::train::run_train(e->cfg, scene_dir, out_dir, opt(resume_checkpoint));
  });
}

bf_status bf_eval(bf_engine* e, const char* checkpoint, const char* scene_dir,
                  const char* out_dir, int oracle) {
  return guard(e, [&] {
    if (!scene_dir || !out_dir)
      throw std::invalid_argument("scene and output directories are required");
    bevfuse::train::run_eval(e->cfg, opt(checkpoint), scene_dir, out_dir,
                             oracle != 0);
  });
}

bf_status bf_optimize(bf_engine* e, const char* plan_path,
                      const char* occupancy_path, const char* out_path) {
  return guard(e, [&] {
    if (!plan_path || !occupancy_path || !out_path)
      throw std::invalid_argument("plan, occupancy and output paths are required");
    bevfuse::train::run_optimize(e->cfg, plan_path, occupancy_path, out_path);
  });
}

bf_status bf_report(bf_engine* e, const char* report_path,
                    const char* scene_path, const char* forecast_path,
                    const char* plan_path, const char* out_dir) {
  return guard(e, [&] {
    if (!out_dir) throw std::invalid_argument("output directory is null");
    bevfuse::train::run_report(opt(report_path), opt(scene_path),
                               opt(forecast_path), opt(plan_path), out_dir);
  });
}

}  // extern "C"
