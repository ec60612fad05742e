#include "dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

namespace rd {

using nlohmann::json;

Eigen::VectorXd Normalizer::norm_state(const Vec8& chi, const Vec8& chi_dot) const {
  Eigen::VectorXd z(16);
  for (int i = 0; i < 8; ++i) {
    z[i] = (chi[i] - state_mean[i]) / state_std[i];
    z[8 + i] = (chi_dot[i] - state_mean[8 + i]) / state_std[8 + i];
  }
  return z;
}

Vec8 Normalizer::norm_tau(const Vec8& tau) const {
  return (tau - tau_mean).cwiseQuotient(tau_std);
}

Vec8 Normalizer::norm_h(const Vec8& h) const {
  return (h - h_mean).cwiseQuotient(h_std);
}

Vec8 Normalizer::denorm_h(const Vec8& z) const {
  return z.cwiseProduct(h_std) + h_mean;
}

int64_t segment_count(int64_t n_steps, int64_t S, int64_t L, int64_t stride) {
  require(S >= 1 && L >= 1 && stride >= 1 && stride <= S, ErrCode::contract,
          "segment: invalid window parameters");
  if (n_steps < S + L) return 0;
  return (n_steps - S - L) / stride + 1;
}

std::vector<SegmentRef> segment_episode(int episode, int64_t n_steps, int64_t S,
                                        int64_t L, int64_t stride) {
  const int64_t n = segment_count(n_steps, S, L, stride);
  std::vector<SegmentRef> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) out.push_back({episode, L + i * stride});
  return out;
}

void split_episodes(Dataset& ds) {
  const int n = static_cast<int>(ds.episodes.size());
  require(n >= 1, ErrCode::contract, "split: no episodes");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(ds.seed, "split"));
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[static_cast<int>(rng.uniform_int(i + 1))]);

  int n_val = 0, n_test = 0;
  if (n >= 3) {
    n_val = std::max<int>(1, static_cast<int>(std::floor(0.15 * n)));
    n_test = std::max<int>(1, static_cast<int>(std::floor(0.15 * n)));
  } else if (n == 2) {
    n_test = 1;
  }
  const int n_train = n - n_val - n_test;

  ds.train.clear();
  ds.val.clear();
  ds.test.clear();
  for (int i = 0; i < n; ++i) {
    const int ep = order[i];
    auto refs = segment_episode(ep, ds.episodes[static_cast<size_t>(ep)].size(),
                                ds.S, ds.L, ds.stride);
    auto& dst = (i < n_train) ? ds.train
                : (i < n_train + n_val) ? ds.val
                                        : ds.test;
    dst.insert(dst.end(), refs.begin(), refs.end());
  }
}

Normalizer fit_normalizer(const Dataset& ds, const std::vector<SegmentRef>& refs) {
  require(!refs.empty(), ErrCode::contract, "normalizer: empty training split");
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(32), s2 = Eigen::VectorXd::Zero(32);
  int64_t n = 0;
  for (const SegmentRef& ref : refs) {
    const Episode& ep = ds.episodes[static_cast<size_t>(ref.episode)];
    for (int64_t u = ref.start; u < ref.start + ds.S; ++u) {
      const StepRecord& st = ep.steps[static_cast<size_t>(u)];
      for (int i = 0; i < 8; ++i) {
        s1[i] += st.chi[i];
        s2[i] += st.chi[i] * st.chi[i];
        s1[8 + i] += st.chi_dot[i];
        s2[8 + i] += st.chi_dot[i] * st.chi_dot[i];
        s1[16 + i] += st.tau[i];
        s2[16 + i] += st.tau[i] * st.tau[i];
        s1[24 + i] += st.H[i];
        s2[24 + i] += st.H[i] * st.H[i];
      }
      ++n;
    }
  }
  Normalizer nm;
  auto finish = [&](int off, int len, Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
    for (int i = 0; i < len; ++i) {
      const double m = s1[off + i] / static_cast<double>(n);
      const double var = std::max(0.0, s2[off + i] / static_cast<double>(n) - m * m);
      mean[i] = m;
      sd[i] = std::max(1e-8, std::sqrt(var));
    }
  };
  finish(0, 16, nm.state_mean, nm.state_std);
  Eigen::VectorXd tm(8), tsd(8), hm(8), hsd(8);
  finish(16, 8, tm, tsd);
  finish(24, 8, hm, hsd);
  nm.tau_mean = tm;
  nm.tau_std = tsd;
  nm.h_mean = hm;
  nm.h_std = hsd;
  return nm;
}

Dataset build_dataset(std::vector<Episode> episodes, int64_t S, int64_t L,
                      int64_t stride, uint64_t seed) {
  Dataset ds;
  ds.S = S;
  ds.L = L;
  ds.stride = stride;
  ds.seed = seed;
  ds.episodes = std::move(episodes);
  split_episodes(ds);
  ds.norm = fit_normalizer(ds, ds.train);
  return ds;
}

Batch make_batch(const Dataset& ds, const std::vector<SegmentRef>& refs,
                 const std::vector<int64_t>& picks) {
  const int64_t B = static_cast<int64_t>(picks.size());
  require(B > 0, ErrCode::contract, "batch: empty");
  Batch b;
  b.hist = nn::Tensor::zeros({B, ds.L + 1, 24});
  b.cond = nn::Tensor::zeros({B, 24});
  b.target = nn::Tensor::zeros({B, ds.S, 8});
  for (int64_t j = 0; j < B; ++j) {
    const SegmentRef& ref = refs.at(static_cast<size_t>(picks[static_cast<size_t>(j)]));
    const Episode& ep = ds.episodes[static_cast<size_t>(ref.episode)];
    for (int64_t i = 0; i <= ds.L; ++i) {
      const int64_t u = ref.start - ds.L + i;
      const StepRecord& st = ep.steps[static_cast<size_t>(u)];
      const Eigen::VectorXd z = ds.norm.norm_state(st.chi, st.chi_dot);
      const Vec8 tp = ds.norm.norm_tau(
          u >= 1 ? ep.steps[static_cast<size_t>(u - 1)].tau : Vec8::Zero());
      double* row = b.hist.v.data() + (j * (ds.L + 1) + i) * 24;
      for (int c = 0; c < 16; ++c) row[c] = z[c];
      for (int c = 0; c < 8; ++c) row[16 + c] = tp[c];
    }
    std::copy(b.hist.v.begin() + static_cast<int64_t>((j * (ds.L + 1) + ds.L) * 24),
              b.hist.v.begin() + static_cast<int64_t>((j * (ds.L + 1) + ds.L + 1) * 24),
              b.cond.v.begin() + j * 24);
    for (int64_t i = 0; i < ds.S; ++i) {
      const StepRecord& st = ep.steps[static_cast<size_t>(ref.start + i)];
      const Vec8 h = ds.norm.norm_h(st.H);
      double* row = b.target.v.data() + (j * ds.S + i) * 8;
      for (int c = 0; c < 8; ++c) row[c] = h[c];
    }
  }
  return b;
}

namespace {

json vec_to_json(const double* v, int n) {
  json a = json::array();
  for (int i = 0; i < n; ++i) a.push_back(v[i]);
  return a;
}

void json_to_vec(const json& a, double* v, int n, const std::string& what) {
  require(a.is_array() && static_cast<int>(a.size()) == n, ErrCode::integrity,
          "manifest: bad " + what);
  for (int i = 0; i < n; ++i) v[i] = a[static_cast<size_t>(i)].get<double>();
}

std::string episode_file(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ep_%03d.csv", i);
  return buf;
}

json refs_to_json(const std::vector<SegmentRef>& refs) {
  // Splits are stored as episode id lists; refs are rebuilt on load.
  std::set<int> eps;
  for (const auto& r : refs) eps.insert(r.episode);
  json a = json::array();
  for (int e : eps) a.push_back(e);
  return a;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& ds) {
  ensure_dir(dir);
  json man;
  man["format"] = "rdds-1";
  man["S"] = ds.S;
  man["L"] = ds.L;
  man["stride"] = ds.stride;
  man["seed"] = ds.seed;
  json eps = json::array();
  std::set<std::string> regimes;
  for (size_t i = 0; i < ds.episodes.size(); ++i) {
    const Episode& ep = ds.episodes[i];
    write_episode_csv(dir + "/" + episode_file(static_cast<int>(i)), ep);
    json e;
    e["file"] = episode_file(static_cast<int>(i));
    e["seed"] = ep.seed;
    e["payload"] = ep.payload;
    e["family"] = ep.family;
    e["schedule"] = ep.schedule;
    e["steps"] = ep.size();
    e["dt"] = ep.dt;
    eps.push_back(e);
    for (const auto& st : ep.steps) regimes.insert(st.regime);
  }
  man["episodes"] = eps;
  man["splits"] = {{"train", refs_to_json(ds.train)},
                   {"val", refs_to_json(ds.val)},
                   {"test", refs_to_json(ds.test)}};
  man["normalizer"] = {
      {"state_mean", vec_to_json(ds.norm.state_mean.data(), 16)},
      {"state_std", vec_to_json(ds.norm.state_std.data(), 16)},
      {"tau_mean", vec_to_json(ds.norm.tau_mean.data(), 8)},
      {"tau_std", vec_to_json(ds.norm.tau_std.data(), 8)},
      {"h_mean", vec_to_json(ds.norm.h_mean.data(), 8)},
      {"h_std", vec_to_json(ds.norm.h_std.data(), 8)}};
  man["regimes"] = json(std::vector<std::string>(regimes.begin(), regimes.end()));
  write_file(dir + "/manifest.json", man.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  json man;
  try {
    man = json::parse(read_file(dir + "/manifest.json"));
  } catch (const json::exception& e) {
    fail(ErrCode::parse, std::string("manifest: ") + e.what());
  }
  require(man.value("format", "") == std::string("rdds-1"), ErrCode::version,
          "manifest: unknown schema version");
  Dataset ds;
  ds.S = man.at("S").get<int64_t>();
  ds.L = man.at("L").get<int64_t>();
  ds.stride = man.at("stride").get<int64_t>();
  ds.seed = man.at("seed").get<uint64_t>();

  const json& eps = man.at("episodes");
  for (size_t i = 0; i < eps.size(); ++i) {
    const json& e = eps[i];
    Episode ep = read_episode_csv(dir + "/" + e.at("file").get<std::string>());
    require(ep.size() == e.at("steps").get<int64_t>(), ErrCode::integrity,
            "episode " + e.at("file").get<std::string>() +
                ": step count does not match manifest");
    ep.seed = e.at("seed").get<uint64_t>();
    ep.payload = e.at("payload").get<double>();
    ep.family = e.at("family").get<std::string>();
    ep.schedule = e.at("schedule").get<std::string>();
    if (ep.size() < 2) ep.dt = e.at("dt").get<double>();
    ds.episodes.push_back(std::move(ep));
  }

  auto load_split = [&](const char* name, std::vector<SegmentRef>& dst) {
    for (const json& v : man.at("splits").at(name)) {
      const int e = v.get<int>();
      require(e >= 0 && e < static_cast<int>(ds.episodes.size()),
              ErrCode::integrity, "manifest: split episode out of range");
      auto refs = segment_episode(e, ds.episodes[static_cast<size_t>(e)].size(),
                                  ds.S, ds.L, ds.stride);
      dst.insert(dst.end(), refs.begin(), refs.end());
    }
  };
  load_split("train", ds.train);
  load_split("val", ds.val);
  load_split("test", ds.test);

  const json& nm = man.at("normalizer");
  json_to_vec(nm.at("state_mean"), ds.norm.state_mean.data(), 16, "state_mean");
  json_to_vec(nm.at("state_std"), ds.norm.state_std.data(), 16, "state_std");
  json_to_vec(nm.at("tau_mean"), ds.norm.tau_mean.data(), 8, "tau_mean");
  json_to_vec(nm.at("tau_std"), ds.norm.tau_std.data(), 8, "tau_std");
  json_to_vec(nm.at("h_mean"), ds.norm.h_mean.data(), 8, "h_mean");
  json_to_vec(nm.at("h_std"), ds.norm.h_std.data(), 8, "h_std");
  return ds;
}

}  // namespace rd
