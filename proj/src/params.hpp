#pragma once

#include <map>
#include <optional>

#include "tensor.hpp"

namespace rd::nn {

// Named parameters with Adam state. Declaration order is the serialization
// order of checkpoints, so it must be deterministic.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor m;  // Adam first moment
    Tensor v;  // Adam second moment
  };

  // Initializes uniformly in +/- sqrt(1/fan_in).
  Tensor& declare(const std::string& name, std::vector<int64_t> shape, int64_t fan_in, Rng& rng);
  Tensor& declare_const(const std::string& name, std::vector<int64_t> shape, double value);

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;
  size_t size() const { return entries_.size(); }
  Entry& entry(size_t i) { return entries_[i]; }
  const Entry& entry(size_t i) const { return entries_[i]; }
  int64_t total_params() const;

 private:
  Tensor& emplace(const std::string& name, Tensor t);
  std::vector<Entry> entries_;
  std::map<std::string, size_t> index_;
};

using GradMap = std::map<std::string, Tensor>;

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam step; t counts steps from 1. Every declared
// parameter must have a gradient entry.
void adam_step(ParamStore& store, const GradMap& grads, const AdamConfig& cfg, int64_t t);

// Checkpoint format: one line of JSON (architecture and bookkeeping, plus the
// parameter manifest appended by the writer), then the raw little-endian f64
// blob in declaration order.
void save_checkpoint(const std::string& path, std::string header_json, const ParamStore& store);

struct Checkpoint {
  std::string header_json;
  ParamStore store;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rd::nn
