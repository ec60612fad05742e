#pragma once

#include "controller.hpp"
#include "plant.hpp"

namespace rd {

// Full run configuration with defaults materialized. Loaded from JSON with a
// strict schema: unknown keys anywhere are rejected so typos cannot silently
// fall back to defaults.
struct RunConfig {
  uint64_t seed = 1;
  std::string out = "runs/out";

  PlantParams plant;

  struct Collect {
    std::vector<double> payloads{0.0, 0.2, 0.4};
    int episodes_per_payload = 3;
    double duration_s = 60.0;
    double full_duration_s = 300.0;
  } collect;

  struct DatasetCfg {
    int64_t S = 8;
    int64_t L = 10;
    int64_t stride = 1;
  } dataset;

  struct Train {
    int64_t steps = 5000;
    int64_t batch = 256;
    double lr = 2e-4;
    int K = 20;
  } train;

  ControllerGains controller;

  struct Tracking {
    std::vector<double> speeds{0.5, 1.0};
    std::vector<double> payloads{0.3, 0.5};
    int trials = 10;
  } tracking;

  struct Eval {
    double payload = 0.1;
    int seeds = 10;
    double duration_s = 30.0;
  } eval;
};

// Parses and validates a config file. Missing file or malformed JSON names
// the path; unknown or mistyped keys name the offending key.
RunConfig load_config(const std::string& path);
RunConfig config_from_json_text(const std::string& text, const std::string& ctx);

// Canonical JSON dump with every field materialized, keys sorted.
std::string resolved_config(const RunConfig& c);

// FNV-1a 64-bit hash of the resolved dump, as fixed-width hex. Stamped on
// every emitted table so outputs can be traced to their exact configuration.
std::string config_hash(const RunConfig& c);

// Writes resolved_config beside the run outputs (creates the directory).
void write_resolved_config(const RunConfig& c, const std::string& dir);

}  // namespace rd
