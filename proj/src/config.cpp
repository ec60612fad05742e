#include "config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

namespace rd {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& ctx) {
  require(j.is_object(), ErrCode::parse, "config: " + ctx + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    require(allowed.count(it.key()) > 0, ErrCode::parse,
            "config: unknown key '" + ctx + it.key() + "'");
}

double get_num(const json& j, const std::string& key, double fallback,
               const std::string& ctx) {
  if (!j.contains(key)) return fallback;
  require(j.at(key).is_number(), ErrCode::parse,
          "config: '" + ctx + key + "' must be a number");
  return j.at(key).get<double>();
}

int64_t get_int(const json& j, const std::string& key, int64_t fallback,
                const std::string& ctx) {
  if (!j.contains(key)) return fallback;
  require(j.at(key).is_number_integer(), ErrCode::parse,
          "config: '" + ctx + key + "' must be an integer");
  return j.at(key).get<int64_t>();
}

std::vector<double> get_vec(const json& j, const std::string& key,
                            std::vector<double> fallback, size_t exact_len,
                            const std::string& ctx) {
  if (!j.contains(key)) return fallback;
  const json& a = j.at(key);
  require(a.is_array(), ErrCode::parse,
          "config: '" + ctx + key + "' must be an array");
  require(exact_len == 0 || a.size() == exact_len, ErrCode::parse,
          "config: '" + ctx + key + "' must have " +
              std::to_string(exact_len) + " entries");
  require(!a.empty(), ErrCode::parse,
          "config: '" + ctx + key + "' must not be empty");
  std::vector<double> out;
  for (const auto& v : a) {
    require(v.is_number(), ErrCode::parse,
            "config: '" + ctx + key + "' entries must be numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

void fill_vec8(const json& j, const std::string& key, Vec8& v,
               const std::string& ctx) {
  if (!j.contains(key)) return;
  const auto vals = get_vec(j, key, {}, 8, ctx);
  for (int i = 0; i < 8; ++i) v[i] = vals[static_cast<size_t>(i)];
}

json vec_json(const double* v, int n) {
  json a = json::array();
  for (int i = 0; i < n; ++i) a.push_back(v[i]);
  return a;
}

}  // namespace

RunConfig config_from_json_text(const std::string& text,
                                const std::string& ctx) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrCode::parse, "config: " + ctx + ": " + e.what());
  }
  check_keys(j, {"seed", "out", "plant", "collect", "dataset", "train",
                 "controller", "tracking", "eval"},
             "");

  RunConfig c;
  if (j.contains("seed")) {
    require(j.at("seed").is_number_unsigned() || j.at("seed").is_number_integer(),
            ErrCode::parse, "config: 'seed' must be an integer");
    const int64_t s = j.at("seed").get<int64_t>();
    require(s >= 0, ErrCode::parse, "config: 'seed' must be nonnegative");
    c.seed = static_cast<uint64_t>(s);
  }
  if (j.contains("out")) {
    require(j.at("out").is_string(), ErrCode::parse,
            "config: 'out' must be a string");
    c.out = j.at("out").get<std::string>();
  }

  if (j.contains("plant")) {
    const json& p = j.at("plant");
    check_keys(p,
               {"m_b", "m1", "m2", "l1", "l2", "lc1", "lc2", "I1", "I2", "J",
                "g0", "D_lin", "D_quad", "tau_w", "sigma_w", "M_bar", "dt"},
               "plant.");
    auto& pp = c.plant;
    pp.m_b = get_num(p, "m_b", pp.m_b, "plant.");
    pp.m1 = get_num(p, "m1", pp.m1, "plant.");
    pp.m2 = get_num(p, "m2", pp.m2, "plant.");
    pp.l1 = get_num(p, "l1", pp.l1, "plant.");
    pp.l2 = get_num(p, "l2", pp.l2, "plant.");
    pp.lc1 = get_num(p, "lc1", pp.lc1, "plant.");
    pp.lc2 = get_num(p, "lc2", pp.lc2, "plant.");
    pp.I1 = get_num(p, "I1", pp.I1, "plant.");
    pp.I2 = get_num(p, "I2", pp.I2, "plant.");
    if (p.contains("J")) {
      const auto v = get_vec(p, "J", {}, 3, "plant.");
      for (int i = 0; i < 3; ++i) pp.J[i] = v[static_cast<size_t>(i)];
    }
    pp.g0 = get_num(p, "g0", pp.g0, "plant.");
    fill_vec8(p, "D_lin", pp.D_lin, "plant.");
    fill_vec8(p, "D_quad", pp.D_quad, "plant.");
    pp.tau_w = get_num(p, "tau_w", pp.tau_w, "plant.");
    pp.sigma_w = get_num(p, "sigma_w", pp.sigma_w, "plant.");
    fill_vec8(p, "M_bar", pp.M_bar_diag, "plant.");
    pp.dt = get_num(p, "dt", pp.dt, "plant.");
    require(pp.dt > 0.0, ErrCode::parse, "config: 'plant.dt' must be positive");
  }

  if (j.contains("collect")) {
    const json& p = j.at("collect");
    check_keys(p, {"payloads", "episodes_per_payload", "duration_s",
                   "full_duration_s"},
               "collect.");
    c.collect.payloads =
        get_vec(p, "payloads", c.collect.payloads, 0, "collect.");
    c.collect.episodes_per_payload = static_cast<int>(get_int(
        p, "episodes_per_payload", c.collect.episodes_per_payload, "collect."));
    c.collect.duration_s =
        get_num(p, "duration_s", c.collect.duration_s, "collect.");
    c.collect.full_duration_s =
        get_num(p, "full_duration_s", c.collect.full_duration_s, "collect.");
    require(c.collect.episodes_per_payload > 0 && c.collect.duration_s > 0.0,
            ErrCode::parse, "config: collect sizes must be positive");
  }

  if (j.contains("dataset")) {
    const json& p = j.at("dataset");
    check_keys(p, {"S", "L", "stride"}, "dataset.");
    c.dataset.S = get_int(p, "S", c.dataset.S, "dataset.");
    c.dataset.L = get_int(p, "L", c.dataset.L, "dataset.");
    c.dataset.stride = get_int(p, "stride", c.dataset.stride, "dataset.");
    require(c.dataset.S >= 1 && c.dataset.L >= 1 && c.dataset.stride >= 1,
            ErrCode::parse, "config: dataset dims must be positive");
  }

  if (j.contains("train")) {
    const json& p = j.at("train");
    check_keys(p, {"steps", "batch", "lr", "K"}, "train.");
    c.train.steps = get_int(p, "steps", c.train.steps, "train.");
    c.train.batch = get_int(p, "batch", c.train.batch, "train.");
    c.train.lr = get_num(p, "lr", c.train.lr, "train.");
    c.train.K = static_cast<int>(get_int(p, "K", c.train.K, "train."));
    require(c.train.steps >= 1 && c.train.batch >= 1 && c.train.lr > 0.0 &&
                c.train.K >= 1,
            ErrCode::parse, "config: train settings must be positive");
  }

  // Mbar is both the residual definition and the control-law reference
  // model; the controller section mirrors the plant value unless it names
  // the same diagonal explicitly.
  c.controller.Mbar = c.plant.M_bar_diag;
  if (j.contains("controller")) {
    const json& p = j.at("controller");
    check_keys(p, {"Phi", "Lambda", "Mbar", "nu", "sigma0", "varpi"},
               "controller.");
    fill_vec8(p, "Phi", c.controller.Phi, "controller.");
    fill_vec8(p, "Lambda", c.controller.Lambda, "controller.");
    fill_vec8(p, "Mbar", c.controller.Mbar, "controller.");
    c.controller.nu = get_num(p, "nu", c.controller.nu, "controller.");
    c.controller.sigma0 =
        get_num(p, "sigma0", c.controller.sigma0, "controller.");
    c.controller.varpi = get_num(p, "varpi", c.controller.varpi, "controller.");
    c.controller.validate();
  }
  require((c.controller.Mbar.array() == c.plant.M_bar_diag.array()).all(),
          ErrCode::parse,
          "config: 'controller.Mbar' must equal 'plant.M_bar' (one reference "
          "model defines the residual and the control law)");

  if (j.contains("tracking")) {
    const json& p = j.at("tracking");
    check_keys(p, {"speeds", "payloads", "trials"}, "tracking.");
    c.tracking.speeds = get_vec(p, "speeds", c.tracking.speeds, 0, "tracking.");
    c.tracking.payloads =
        get_vec(p, "payloads", c.tracking.payloads, 0, "tracking.");
    c.tracking.trials = static_cast<int>(
        get_int(p, "trials", c.tracking.trials, "tracking."));
    require(c.tracking.trials > 0, ErrCode::parse,
            "config: 'tracking.trials' must be positive");
  }

  if (j.contains("eval")) {
    const json& p = j.at("eval");
    check_keys(p, {"payload", "seeds", "duration_s"}, "eval.");
    c.eval.payload = get_num(p, "payload", c.eval.payload, "eval.");
    c.eval.seeds = static_cast<int>(get_int(p, "seeds", c.eval.seeds, "eval."));
    c.eval.duration_s = get_num(p, "duration_s", c.eval.duration_s, "eval.");
    require(c.eval.seeds > 0 && c.eval.duration_s > 0.0, ErrCode::parse,
            "config: eval settings must be positive");
  }

  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrCode::io, "config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return config_from_json_text(text, path);
}

std::string resolved_config(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out"] = c.out;

  json p;
  p["m_b"] = c.plant.m_b;
  p["m1"] = c.plant.m1;
  p["m2"] = c.plant.m2;
  p["l1"] = c.plant.l1;
  p["l2"] = c.plant.l2;
  p["lc1"] = c.plant.lc1;
  p["lc2"] = c.plant.lc2;
  p["I1"] = c.plant.I1;
  p["I2"] = c.plant.I2;
  p["J"] = vec_json(c.plant.J.data(), 3);
  p["g0"] = c.plant.g0;
  p["D_lin"] = vec_json(c.plant.D_lin.data(), 8);
  p["D_quad"] = vec_json(c.plant.D_quad.data(), 8);
  p["tau_w"] = c.plant.tau_w;
  p["sigma_w"] = c.plant.sigma_w;
  p["M_bar"] = vec_json(c.plant.M_bar_diag.data(), 8);
  p["dt"] = c.plant.dt;
  j["plant"] = p;

  json col;
  col["payloads"] = vec_json(c.collect.payloads.data(),
                             static_cast<int>(c.collect.payloads.size()));
  col["episodes_per_payload"] = c.collect.episodes_per_payload;
  col["duration_s"] = c.collect.duration_s;
  col["full_duration_s"] = c.collect.full_duration_s;
  j["collect"] = col;

  json d;
  d["S"] = c.dataset.S;
  d["L"] = c.dataset.L;
  d["stride"] = c.dataset.stride;
  j["dataset"] = d;

  json t;
  t["steps"] = c.train.steps;
  t["batch"] = c.train.batch;
  t["lr"] = c.train.lr;
  t["K"] = c.train.K;
  j["train"] = t;

  json g;
  g["Phi"] = vec_json(c.controller.Phi.data(), 8);
  g["Lambda"] = vec_json(c.controller.Lambda.data(), 8);
  g["Mbar"] = vec_json(c.controller.Mbar.data(), 8);
  g["nu"] = c.controller.nu;
  g["sigma0"] = c.controller.sigma0;
  g["varpi"] = c.controller.varpi;
  j["controller"] = g;

  json tr;
  tr["speeds"] = vec_json(c.tracking.speeds.data(),
                          static_cast<int>(c.tracking.speeds.size()));
  tr["payloads"] = vec_json(c.tracking.payloads.data(),
                            static_cast<int>(c.tracking.payloads.size()));
  tr["trials"] = c.tracking.trials;
  j["tracking"] = tr;

  json ev;
  ev["payload"] = c.eval.payload;
  ev["seeds"] = c.eval.seeds;
  ev["duration_s"] = c.eval.duration_s;
  j["eval"] = ev;

  return j.dump(2);
}

std::string config_hash(const RunConfig& c) {
  const std::string s = resolved_config(c);
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

void write_resolved_config(const RunConfig& c, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/config.resolved.json";
  std::ofstream out(path);
  require(out.good(), ErrCode::io, "config: cannot write " + path);
  out << resolved_config(c) << "\n";
  require(out.good(), ErrCode::io, "config: failed writing " + path);
}

}  // namespace rd
