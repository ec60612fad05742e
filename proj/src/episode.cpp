#include "episode.hpp"

#include <cmath>

namespace rd {

namespace {

std::vector<std::string> episode_header() {
  std::vector<std::string> h;
  h.push_back("t");
  const char* blocks[] = {"chi", "chid", "tau", "H", "chidd"};
  for (const char* b : blocks)
    for (int i = 0; i < 8; ++i) h.push_back(std::string(b) + "_" + std::to_string(i));
  h.push_back("m_p");
  h.push_back("regime");
  return h;
}

}  // namespace

void write_episode_csv(const std::string& path, const Episode& ep) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(ep.steps.size());
  for (const StepRecord& s : ep.steps) {
    std::vector<std::string> row;
    row.reserve(43);
    row.push_back(fmt_g17(s.t));
    const Vec8* blocks[] = {&s.chi, &s.chi_dot, &s.tau, &s.H, &s.chi_ddot};
    for (const Vec8* b : blocks)
      for (int i = 0; i < 8; ++i) row.push_back(fmt_g17((*b)[i]));
    row.push_back(fmt_g17(s.m_p));
    row.push_back(s.regime);
    rows.push_back(std::move(row));
  }
  write_csv(path, episode_header(), rows);
}

Episode read_episode_csv(const std::string& path) {
  CsvTable tab = read_csv(path);
  const std::vector<std::string> want = episode_header();
  require(tab.header == want, ErrCode::parse,
          "episode " + path + ": unexpected header");
  Episode ep;
  ep.steps.reserve(tab.rows.size());
  for (size_t r = 0; r < tab.rows.size(); ++r) {
    const auto& row = tab.rows[r];
    const std::string where = path + ":" + std::to_string(r + 2);
    require(row.size() == 43, ErrCode::parse, where + ": expected 43 columns");
    StepRecord s;
    size_t c = 0;
    s.t = parse_double_strict(row[c++], where);
    Vec8* blocks[] = {&s.chi, &s.chi_dot, &s.tau, &s.H, &s.chi_ddot};
    for (Vec8* b : blocks)
      for (int i = 0; i < 8; ++i) (*b)[i] = parse_double_strict(row[c++], where);
    s.m_p = parse_double_strict(row[c++], where);
    s.regime = row[c++];
    require(std::isfinite(s.t) && s.chi.allFinite() && s.chi_dot.allFinite() &&
                s.tau.allFinite() && s.H.allFinite() && s.chi_ddot.allFinite() &&
                std::isfinite(s.m_p),
            ErrCode::integrity, where + ": non-finite value");
    ep.steps.push_back(std::move(s));
  }
  if (ep.steps.size() >= 2) {
    ep.dt = ep.steps[1].t - ep.steps[0].t;
    require(ep.dt > 0, ErrCode::integrity, path + ": time not increasing");
    for (size_t i = 1; i < ep.steps.size(); ++i) {
      const double d = ep.steps[i].t - ep.steps[i - 1].t;
      require(std::fabs(d - ep.dt) < 1e-9, ErrCode::integrity,
              path + ":" + std::to_string(i + 2) + ": non-uniform dt");
    }
  }
  return ep;
}

}  // namespace rd
