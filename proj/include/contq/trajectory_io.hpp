// Copyright 2026 The contq Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contq/envsim.hpp"
#include "contq/errors.hpp"

namespace contq {

/// Decimal text with 17 significant digits; strtod reads it back exactly.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ContractError("parse_double: bad number '" + s + "'");
  return v;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw ContractError("cannot open " + path.string() + " for writing");
  return os;
}

}  // namespace detail

/// Writes columns k, t, x0.., a0.., r. The final row k = K carries only the
/// terminal state; its action and reward cells are empty.
template <class Env>
void write_trajectory_csv(std::ostream& os, const Trajectory<Env>& traj) {
  traj.validate();
  const auto d = traj.states.front().size();
  const auto m = traj.actions.front().size();
  os << "k,t";
  for (Eigen::Index i = 0; i < d; ++i) os << ",x" << i;
  for (Eigen::Index i = 0; i < m; ++i) os << ",a" << i;
  os << ",r\n";
  const int K = traj.steps();
  for (int k = 0; k <= K; ++k) {
    os << k << ',' << format_double(traj.times[k]);
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << format_double(traj.states[k](i));
    for (Eigen::Index i = 0; i < m; ++i) os << ',' << (k < K ? format_double(traj.actions[k](i)) : "");
    os << ',' << (k < K ? format_double(traj.rewards[k]) : "") << '\n';
  }
}

template <class Env>
Trajectory<Env> read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ContractError("read_trajectory_csv: missing header");
  const auto header = detail::split_csv_line(line);
  int d = 0, m = 0;
  for (const auto& h : header) {
    if (!h.empty() && h[0] == 'x') ++d;
    if (!h.empty() && h[0] == 'a') ++m;
  }
  if (d == 0 || m == 0 || header.size() != static_cast<std::size_t>(3 + d + m))
    throw ContractError("read_trajectory_csv: unexpected header");
  Trajectory<Env> traj;
  bool terminal_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (terminal_seen) throw ContractError("read_trajectory_csv: rows after the terminal row");
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw ContractError("read_trajectory_csv: ragged row");
    if (std::stoll(cells[0]) != static_cast<long long>(traj.times.size()))
      throw ContractError("read_trajectory_csv: step index out of order");
    traj.times.push_back(parse_double(cells[1]));
    typename Env::State x(d);
    for (int i = 0; i < d; ++i) x(i) = parse_double(cells[2 + i]);
    traj.states.push_back(std::move(x));
    if (cells[2 + d].empty()) {
      terminal_seen = true;
      continue;
    }
    typename Env::Action a(m);
    for (int i = 0; i < m; ++i) a(i) = parse_double(cells[2 + d + i]);
    traj.actions.push_back(std::move(a));
    traj.rewards.push_back(parse_double(cells[2 + d + m]));
  }
  if (!terminal_seen) throw ContractError("read_trajectory_csv: missing terminal row");
  traj.validate();
  return traj;
}

/// Sidecar with the run configuration, seed and the fields the CSV omits.
template <class Env>
nlohmann::json trajectory_sidecar(const Trajectory<Env>& traj, const nlohmann::json& config, std::uint64_t seed) {
  nlohmann::json j{{"config", config},
                   {"seed", seed},
                   {"steps", traj.steps()},
                   {"dt", traj.dt()},
                   {"off_policy", traj.off_policy},
                   {"state_dim", traj.states.front().size()},
                   {"action_dim", traj.actions.front().size()}};
  j["terminal_payoff"] = traj.terminal_payoff ? nlohmann::json(format_double(*traj.terminal_payoff)) : nlohmann::json(nullptr);
  return j;
}

/// Writes <stem>.csv and <stem>.json.
template <class Env>
void save_trajectory(const std::filesystem::path& stem, const Trajectory<Env>& traj, const nlohmann::json& config,
                     std::uint64_t seed) {
  auto csv = detail::open_out(std::filesystem::path(stem.string() + ".csv"));
  write_trajectory_csv(csv, traj);
  auto js = detail::open_out(std::filesystem::path(stem.string() + ".json"));
  js << trajectory_sidecar(traj, config, seed).dump(2) << '\n';
}

template <class Env>
struct LoadedTrajectory {
  Trajectory<Env> traj;
  nlohmann::json config;
  std::uint64_t seed = 0;
};

template <class Env>
LoadedTrajectory<Env> load_trajectory(const std::filesystem::path& stem) {
  std::ifstream csv(std::filesystem::path(stem.string() + ".csv"));
  std::ifstream js(std::filesystem::path(stem.string() + ".json"));
  if (!csv || !js) throw ContractError("load_trajectory: missing files for " + stem.string());
  LoadedTrajectory<Env> out{read_trajectory_csv<Env>(csv), {}, 0};
  const auto side = nlohmann::json::parse(js);
  out.config = side.at("config");
  out.seed = side.at("seed").get<std::uint64_t>();
  out.traj.off_policy = side.at("off_policy").get<bool>();
  if (!side.at("terminal_payoff").is_null())
    out.traj.terminal_payoff = parse_double(side.at("terminal_payoff").get<std::string>());
  return out;
}

/// Parameter or reward trace: header row, then one row per record.
inline void write_trace_csv(const std::filesystem::path& path, const std::vector<std::string>& columns,
                            const std::vector<std::vector<double>>& rows) {
  auto os = detail::open_out(path);
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_double(row[i]);
    os << '\n';
  }
}

}  // namespace contq
