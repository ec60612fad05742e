// Exercises the shared-library surface the way an embedding would: only
// resdiff.h, no core headers. Covers handle lifecycles, error-code mapping,
// and one small end-to-end pipeline through every command.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <resdiff.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string last_err() { return rd_last_error(); }

// Desk-scale gains; the plant reference diagonal mirrors into the controller.
const char* kPipeConfig = R"({
  "seed": 11,
  "plant": {"M_bar": [2, 2, 2, 0.02, 0.02, 0.02, 0.01, 0.01]},
  "controller": {
    "Lambda": [2, 2, 3.5, 1.5, 1.5, 1.2, 0.02, 0.02],
    "Phi": [1, 1, 1.5, 1.1, 1.1, 1.0, 0.4, 0.4],
    "nu": 20.0
  },
  "collect": {"payloads": [0.0, 0.3], "episodes_per_payload": 1, "duration_s": 6.0},
  "dataset": {"S": 4, "L": 6, "stride": 2},
  "train": {"steps": 60, "batch": 16, "lr": 0.001, "K": 12},
  "tracking": {"speeds": [0.5], "payloads": [0.3], "trials": 1},
  "eval": {"payload": 0.1, "seeds": 2, "duration_s": 5.0}
})";

struct ConfigHandle {
  rd_config* c = nullptr;
  ~ConfigHandle() { rd_config_free(c); }
};

struct ModelHandle {
  rd_model* m = nullptr;
  ~ModelHandle() { rd_model_free(m); }
};

std::string hash_of(const rd_config* c) {
  char buf[17];
  REQUIRE(rd_config_hash(c, buf, sizeof buf) == RD_OK);
  return buf;
}

}  // namespace

TEST_CASE("version and status names") {
  REQUIRE(rd_version() != nullptr);
  CHECK(std::strlen(rd_version()) >= 5);
  CHECK(std::string(rd_status_name(RD_OK)) == "ok");
  CHECK(std::string(rd_status_name(RD_ERR_PARSE)) == "parse");
  CHECK(std::string(rd_status_name(RD_ERR_DIVERGED)) == "diverged");
  CHECK(std::string(rd_status_name(static_cast<rd_status>(99))) == "unknown");
}

TEST_CASE("config parse, resolve, hash, and overrides") {
  ConfigHandle h;
  REQUIRE(rd_config_parse("{}", "defaults", &h.c) == RD_OK);
  CHECK(last_err().empty());

  const char* resolved = rd_config_resolved(h.c);
  REQUIRE(resolved != nullptr);
  const json j = json::parse(resolved);
  CHECK(j.at("seed").get<uint64_t>() == 1);
  CHECK(j.contains("plant"));
  CHECK(j.contains("controller"));
  CHECK(j.at("dataset").at("L").get<int64_t>() == 10);

  const std::string h0 = hash_of(h.c);
  CHECK(h0.size() == 16);
  CHECK(h0.find_first_not_of("0123456789abcdef") == std::string::npos);

  // A short buffer is rejected before anything is written.
  char tiny[8];
  CHECK(rd_config_hash(h.c, tiny, sizeof tiny) == RD_ERR_INVALID_ARGUMENT);

  REQUIRE(rd_config_set_seed(h.c, 123) == RD_OK);
  const std::string h1 = hash_of(h.c);
  CHECK(h1 != h0);
  REQUIRE(rd_config_set_out(h.c, "elsewhere") == RD_OK);
  const std::string h2 = hash_of(h.c);
  CHECK(h2 != h1);

  // The resolved dump reparses to the same configuration.
  ConfigHandle again;
  REQUIRE(rd_config_parse(rd_config_resolved(h.c), "roundtrip", &again.c) ==
          RD_OK);
  CHECK(hash_of(again.c) == h2);
}

TEST_CASE("failures carry codes and messages") {
  rd_config* c = nullptr;

  CHECK(rd_config_load("/nonexistent/nowhere.json", &c) == RD_ERR_IO);
  CHECK(last_err().find("/nonexistent/nowhere.json") != std::string::npos);

  CHECK(rd_config_parse("{ nope", "badctx", &c) == RD_ERR_PARSE);
  CHECK(last_err().find("badctx") != std::string::npos);

  CHECK(rd_config_parse(R"({"sed": 1})", "typo", &c) == RD_ERR_PARSE);
  CHECK(last_err().find("sed") != std::string::npos);

  CHECK(rd_config_parse(
            R"({"controller": {"Mbar": [1, 1, 1, 1, 1, 1, 1, 1]}})", "mismatch",
            &c) == RD_ERR_PARSE);
  CHECK(last_err().find("Mbar") != std::string::npos);

  CHECK(rd_config_parse(nullptr, "x", &c) == RD_ERR_INVALID_ARGUMENT);
  CHECK(rd_config_load("whatever", nullptr) == RD_ERR_INVALID_ARGUMENT);

  rd_model* m = nullptr;
  CHECK(rd_model_open("/nonexistent/model.ckpt", &m) == RD_ERR_IO);

  ConfigHandle h;
  REQUIRE(rd_config_parse("{}", "x", &h.c) == RD_OK);
  CHECK(rd_run_eval_tracking(h.c, "warp-drive", nullptr) ==
        RD_ERR_INVALID_ARGUMENT);
  CHECK(rd_run_eval_tracking(h.c, "proposed", nullptr) ==
        RD_ERR_INVALID_ARGUMENT);
  CHECK(last_err().find("checkpoint") != std::string::npos);
  CHECK(rd_run_diagnose(h.c, nullptr, 1) == RD_ERR_INVALID_ARGUMENT);
  CHECK(rd_run_train(h.c, nullptr, "mlp") == RD_ERR_INVALID_ARGUMENT);

  // Success clears the message.
  CHECK(rd_config_set_seed(h.c, 5) == RD_OK);
  CHECK(last_err().empty());
}

TEST_CASE("zero model needs no history") {
  ModelHandle z;
  REQUIRE(rd_model_zero(&z.m) == RD_OK);
  CHECK(std::string(rd_model_name(z.m)) == "asmc");
  CHECK(rd_model_history(z.m) == 0);
  double out[8] = {1, 1, 1, 1, 1, 1, 1, 1};
  REQUIRE(rd_model_predict(z.m, nullptr, nullptr, nullptr, 0, 7, out) ==
          RD_OK);
  for (double v : out) CHECK(v == 0.0);

  CHECK(rd_model_name(nullptr) == nullptr);
  CHECK(rd_model_history(nullptr) == -1);
}

TEST_CASE("pipeline commands produce their artifacts") {
  const fs::path base = fs::temp_directory_path() / "resdiff_capi_pipe";
  fs::remove_all(base);
  fs::create_directories(base);

  ConfigHandle h;
  REQUIRE(rd_config_parse(kPipeConfig, "pipe", &h.c) == RD_OK);

  // collect, twice: the manifest is byte-identical on a rerun.
  const fs::path data = base / "data";
  REQUIRE(rd_config_set_out(h.c, data.c_str()) == RD_OK);
  REQUIRE(rd_run_collect(h.c, 0) == RD_OK);
  REQUIRE(fs::exists(data / "manifest.json"));
  REQUIRE(fs::exists(data / "ep_000.csv"));
  REQUIRE(fs::exists(data / "ep_001.csv"));
  REQUIRE(fs::exists(data / "config.resolved.json"));
  const std::string manifest1 = slurp(data / "manifest.json");
  REQUIRE(rd_run_collect(h.c, 0) == RD_OK);
  CHECK(slurp(data / "manifest.json") == manifest1);
  const json manifest = json::parse(manifest1);
  CHECK(manifest.at("records").get<int64_t>() == 2 * 600);

  // train the regressor and the conditioned diffusion model
  const fs::path mdir = base / "mlp";
  REQUIRE(rd_config_set_out(h.c, mdir.c_str()) == RD_OK);
  REQUIRE(rd_run_train(h.c, data.c_str(), "mlp") == RD_OK);
  const fs::path mlp_ckpt = mdir / "mlp.ckpt";
  REQUIRE(fs::exists(mlp_ckpt));
  REQUIRE(fs::exists(mdir / "train_curve.csv"));
  const json msum = json::parse(slurp(mdir / "train_summary.json"));
  CHECK(msum.at("reload_bitexact").get<bool>());
  CHECK(msum.at("model").get<std::string>() == "mlp");

  const fs::path pdir = base / "prop";
  REQUIRE(rd_config_set_out(h.c, pdir.c_str()) == RD_OK);
  REQUIRE(rd_run_train(h.c, data.c_str(), "proposed") == RD_OK);
  const fs::path prop_ckpt = pdir / "proposed.ckpt";
  REQUIRE(fs::exists(prop_ckpt));

  // open checkpoints through the C surface
  ModelHandle mlp, prop;
  REQUIRE(rd_model_open(mlp_ckpt.c_str(), &mlp.m) == RD_OK);
  CHECK(std::string(rd_model_name(mlp.m)) == "mlp");
  CHECK(rd_model_history(mlp.m) == 7);  // L + 1
  REQUIRE(rd_model_open(prop_ckpt.c_str(), &prop.m) == RD_OK);
  CHECK(std::string(rd_model_name(prop.m)) == "diffusion");
  CHECK(rd_model_history(prop.m) == 7);

  // prediction: seed-deterministic, seed-sensitive, row-count checked
  std::vector<double> chi(7 * 8), chid(7 * 8), tau(7 * 8);
  for (int i = 0; i < 7 * 8; ++i) {
    chi[static_cast<size_t>(i)] = 0.01 * i;
    chid[static_cast<size_t>(i)] = 0.002 * i;
    tau[static_cast<size_t>(i)] = 0.1;
  }
  double a[8], b[8], d[8];
  REQUIRE(rd_model_predict(prop.m, chi.data(), chid.data(), tau.data(), 7, 42,
                           a) == RD_OK);
  REQUIRE(rd_model_predict(prop.m, chi.data(), chid.data(), tau.data(), 7, 42,
                           b) == RD_OK);
  REQUIRE(rd_model_predict(prop.m, chi.data(), chid.data(), tau.data(), 7, 43,
                           d) == RD_OK);
  bool same = true, differs = false;
  for (int j = 0; j < 8; ++j) {
    same = same && a[j] == b[j];
    differs = differs || a[j] != d[j];
  }
  CHECK(same);
  CHECK(differs);  // a fresh seed draws a fresh sample
  CHECK(rd_model_predict(prop.m, chi.data(), chid.data(), tau.data(), 3, 42,
                         a) == RD_ERR_INVALID_ARGUMENT);

  // eval-model: reference rows plus one row per checkpoint, hash-stamped
  const fs::path edir = base / "eval";
  REQUIRE(rd_config_set_out(h.c, edir.c_str()) == RD_OK);
  const std::string ehash = hash_of(h.c);
  const char* cks[2] = {mlp_ckpt.c_str(), prop_ckpt.c_str()};
  REQUIRE(rd_run_eval_model(h.c, cks, 2) == RD_OK);
  const std::string table = slurp(edir / "model_rmse.csv");
  CHECK(table.find("oracle") != std::string::npos);
  CHECK(table.find("zero") != std::string::npos);
  CHECK(table.find("mlp") != std::string::npos);
  CHECK(table.find("diffusion") != std::string::npos);
  CHECK(table.find(ehash) != std::string::npos);

  // eval-tracking with the no-model baseline under desk gains
  const fs::path tdir = base / "track";
  REQUIRE(rd_config_set_out(h.c, tdir.c_str()) == RD_OK);
  REQUIRE(rd_run_eval_tracking(h.c, "asmc", nullptr) == RD_OK);
  REQUIRE(fs::exists(tdir / "tracking.csv"));
  REQUIRE(fs::exists(tdir / "trace_p0.3_v0.5.csv"));
  const json tsum = json::parse(slurp(tdir / "tracking_summary.json"));
  REQUIRE(tsum.at("cells").size() == 1);
  CHECK(tsum.at("cells")[0].at("completed").get<int>() == 1);
  CHECK(tsum.at("cells")[0].at("model").get<std::string>() == "asmc");

  // selector/checkpoint kind mismatch is rejected before any work
  CHECK(rd_run_eval_tracking(h.c, "proposed", mlp_ckpt.c_str()) ==
        RD_ERR_INVALID_ARGUMENT);
  CHECK(last_err().find("does not match") != std::string::npos);

  // diagnose on the conditioned model
  const fs::path ddir = base / "diag";
  REQUIRE(rd_config_set_out(h.c, ddir.c_str()) == RD_OK);
  const char* dks[1] = {prop_ckpt.c_str()};
  REQUIRE(rd_run_diagnose(h.c, dks, 1) == RD_OK);
  REQUIRE(fs::exists(ddir / "embedding.csv"));
  REQUIRE(fs::exists(ddir / "error_hist.csv"));
  const json dsum = json::parse(slurp(ddir / "diagnose_summary.json"));
  REQUIRE(dsum.at("models").size() == 1);
  CHECK(dsum.at("models")[0].at("name").get<std::string>() == "diffusion");
  CHECK(dsum.at("models")[0].at("pc1_ratio").get<double>() <= 1.0);

  fs::remove_all(base);
}

TEST_CASE("tracking divergence reports and maps to its status") {
  const fs::path base = fs::temp_directory_path() / "resdiff_capi_div";
  fs::remove_all(base);

  // Factory-default gains are tuned for the hardware-scale reference model
  // and lose the desk-scale joints; the run must fail loudly, not quietly.
  ConfigHandle h;
  REQUIRE(rd_config_parse(
              R"({"tracking": {"speeds": [0.5], "payloads": [0.3], "trials": 1}})",
              "div", &h.c) == RD_OK);
  REQUIRE(rd_config_set_out(h.c, base.c_str()) == RD_OK);
  REQUIRE(rd_run_eval_tracking(h.c, "asmc", nullptr) == RD_ERR_DIVERGED);
  CHECK(last_err().find("diverged") != std::string::npos);

  REQUIRE(fs::exists(base / "failure.json"));
  REQUIRE(fs::exists(base / "failure_ticks.csv"));
  const json f = json::parse(slurp(base / "failure.json"));
  CHECK(!f.at("note").get<std::string>().empty());
  CHECK(f.at("ticks_kept").get<int64_t>() <= 100);
  CHECK(f.at("ticks_kept").get<int64_t>() >= 1);

  fs::remove_all(base);
}
