#include "params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace rd::nn {

Tensor& ParamStore::emplace(const std::string& name, Tensor t) {
  require(!contains(name), ErrCode::contract, "parameter redeclared: " + name);
  Entry e;
  e.name = name;
  e.m = Tensor::zeros(t.shape);
  e.v = Tensor::zeros(t.shape);
  e.value = std::move(t);
  entries_.push_back(std::move(e));
  index_[name] = entries_.size() - 1;
  return entries_.back().value;
}

Tensor& ParamStore::declare(const std::string& name, std::vector<int64_t> shape, int64_t fan_in,
                            Rng& rng) {
  require(fan_in > 0, ErrCode::invalid_argument, "fan_in must be positive for " + name);
  Tensor t(std::move(shape));
  double bound = std::sqrt(1.0 / double(fan_in));
  for (double& x : t.v) x = rng.uniform(-bound, bound);
  return emplace(name, std::move(t));
}

Tensor& ParamStore::declare_const(const std::string& name, std::vector<int64_t> shape,
                                  double value) {
  return emplace(name, Tensor::full(std::move(shape), value));
}

ParamStore::Entry& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  require(it != index_.end(), ErrCode::contract, "unknown parameter: " + name);
  return entries_[it->second];
}

const ParamStore::Entry& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), ErrCode::contract, "unknown parameter: " + name);
  return entries_[it->second];
}

int64_t ParamStore::total_params() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

void adam_step(ParamStore& store, const GradMap& grads, const AdamConfig& cfg, int64_t t) {
  require(t >= 1, ErrCode::invalid_argument, "adam step index must start at 1");
  double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
  double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
  for (size_t i = 0; i < store.size(); ++i) {
    auto& e = store.entry(i);
    auto it = grads.find(e.name);
    require(it != grads.end(), ErrCode::contract, "missing gradient for parameter " + e.name);
    const Tensor& g = it->second;
    require(g.same_shape(e.value), ErrCode::contract, "gradient shape mismatch for " + e.name);
    for (int64_t j = 0; j < g.numel(); ++j) {
      double gj = g.v[size_t(j)];
      require(std::isfinite(gj), ErrCode::numeric, "non-finite gradient for " + e.name);
      double& m = e.m.v[size_t(j)];
      double& v = e.v.v[size_t(j)];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * gj;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * gj * gj;
      double mhat = m / bc1;
      double vhat = v / bc2;
      e.value.v[size_t(j)] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void save_checkpoint(const std::string& path, std::string header_json, const ParamStore& store) {
  nlohmann::json j = nlohmann::json::parse(header_json);
  nlohmann::json manifest = nlohmann::json::array();
  for (size_t i = 0; i < store.size(); ++i) {
    const auto& e = store.entry(i);
    manifest.push_back({{"name", e.name}, {"shape", e.value.shape}});
  }
  j["params"] = manifest;
  j["format"] = "rdck-1";
  std::string line = j.dump();
  require(line.find('\n') == std::string::npos, ErrCode::internal, "checkpoint header has newline");

  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrCode::io, "cannot open " + path + " for writing");
  out << line << "\n";
  for (size_t i = 0; i < store.size(); ++i) {
    const auto& e = store.entry(i);
    out.write(reinterpret_cast<const char*>(e.value.v.data()),
              std::streamsize(e.value.v.size() * sizeof(double)));
  }
  require(out.good(), ErrCode::io, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrCode::io, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrCode::integrity,
          "checkpoint missing header: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    fail(ErrCode::parse, "checkpoint header parse error in " + path + ": " + e.what());
  }
  require(j.value("format", "") == std::string("rdck-1"), ErrCode::version,
          "unsupported checkpoint format in " + path);
  require(j.contains("params") && j["params"].is_array(), ErrCode::integrity,
          "checkpoint header lacks parameter manifest: " + path);

  Checkpoint ck;
  for (const auto& entry : j["params"]) {
    std::string name = entry.at("name").get<std::string>();
    std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.v.data()), std::streamsize(t.v.size() * sizeof(double)));
    require(in.gcount() == std::streamsize(t.v.size() * sizeof(double)), ErrCode::integrity,
            "checkpoint blob truncated at parameter " + name + " in " + path);
    require(t.all_finite(), ErrCode::integrity, "non-finite parameter values in " + path);
    ck.store.declare_const(name, t.shape, 0.0);
    ck.store.at(name).value = std::move(t);
  }
  char extra;
  require(!in.read(&extra, 1), ErrCode::integrity, "trailing bytes in checkpoint " + path);
  j.erase("params");
  ck.header_json = j.dump();
  return ck;
}

}  // namespace rd::nn
