// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Monte Carlo laboratory: a truth table (V, s) is held fixed, estimate
// vectors are drawn as V + s * g with independent standard normal g, and each
// rule is scored by regret and by the lower confidence bound it reports.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "riskaware/bootstrap.hpp"
#include "riskaware/csv.hpp"
#include "riskaware/error.hpp"
#include "riskaware/estimates.hpp"
#include "riskaware/parallel.hpp"
#include "riskaware/rng.hpp"
#include "riskaware/rules.hpp"

namespace riskaware::simlab {

struct SimRule {
  enum class Kind { EWM, PoLeCe, Control, RW };
  Kind kind = Kind::EWM;
  double k = 0.0;  // RW only

  std::string name() const {
    switch (kind) {
      case Kind::EWM: return "EWM";
      case Kind::PoLeCe: return "PoLeCe";
      case Kind::Control: return "Control";
      case Kind::RW: return "RW(" + csv::format(k) + ")";
    }
    return "?";
  }

  /// "ewm", "polece", "control" or "rw:<k>".
  static SimRule parse(std::string_view s) {
    const auto t = csv::trim(s);
    if (t == "ewm") return {Kind::EWM, 0.0};
    if (t == "polece") return {Kind::PoLeCe, 0.0};
    if (t == "control") return {Kind::Control, 0.0};
    if (t.substr(0, 3) == "rw:") {
      const double k = csv::to_double(t.substr(3), "rw k");
      require(k >= 0.0 && std::isfinite(k), ErrorCode::InvalidArgument, "rw k must be >= 0");
      return {Kind::RW, k};
    }
    fail(ErrorCode::InvalidArgument, "unknown rule '" + std::string(t) + "'");
  }
};

struct SimDesign {
  explicit SimDesign(EstimateTable t) : truth(std::move(t)) {}

  EstimateTable truth;
  std::optional<std::size_t> control_index;
  std::size_t replications = 10000;
  double alpha = 0.05;
  bootstrap::BootstrapConfig bootstrap;  // alpha is overridden by the design alpha
  std::vector<SimRule> rules = {{SimRule::Kind::EWM, 0.0}, {SimRule::Kind::PoLeCe, 0.0}};
  std::uint64_t seed = 0;
  unsigned threads = 0;

  void validate() const {
    require(replications >= 1, ErrorCode::InvalidArgument, "replications must be >= 1");
    require(alpha > 0.0 && alpha <= 0.5, ErrorCode::InvalidArgument, "alpha must lie in (0, 0.5]");
    require(!control_index || *control_index < truth.size(), ErrorCode::InvalidArgument, "control index out of range");
    require(!rules.empty(), ErrorCode::InvalidArgument, "no rules to run");
    for (const auto& r : rules) {
      require(r.kind != SimRule::Kind::Control || control_index.has_value(), ErrorCode::InvalidArgument,
              "the control rule needs a control policy");
    }
    require((truth.se().array() >= 0.0).all(), ErrorCode::NegativeSE, "truth risks must be >= 0");
  }
};

struct RuleStats {
  std::string name;
  double avg_regret_pct = 0.0;
  double median_regret_pct = 0.0;
  double p95_regret_pct = 0.0;
  double avg_lcb_pct = 0.0;
};

struct SimResult {
  std::vector<RuleStats> rules;
  double v_max = 0.0;
  double q_hat = 0.0;
  double sigma_bar = 0.0;       // max_pi s(pi)
  double sigma_low_best = 0.0;  // min s(pi) over the best policies
  double coverage = 0.0;        // share of replications with V(PoLeCe pick) >= its LCB
  std::size_t replications = 0;
  std::uint64_t seed = 0;
  std::size_t draws = 0;
  double alpha = 0.05;
};

namespace detail {

inline EstimateTable identity_truth(const EstimateTable& truth) {
  return EstimateTable::make(truth.labels(), truth.v_hat(), truth.se(),
                             Matrix::Identity(static_cast<Eigen::Index>(truth.size()),
                                              static_cast<Eigen::Index>(truth.size())),
                             truth.known_flags(), truth.meta());
}

inline Vector draw_estimates(const EstimateTable& truth, std::uint64_t seed, rng::Domain domain, std::size_t r) {
  rng::NormalStream g(seed, domain, r);
  Vector v = truth.v_hat();
  for (Eigen::Index j = 0; j < v.size(); ++j) v[j] += truth.se()[j] * g.next();
  return v;
}

inline std::vector<Eigen::Index> best_set(const Vector& v) {
  const double v_max = v.maxCoeff();
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < v.size(); ++j)
    if (v[j] == v_max) out.push_back(j);
  return out;
}

inline double relative(double x, double v_max) { return 100.0 * x / std::abs(v_max); }

}  // namespace detail

/// Regret % = 100 (V_max - V(pick)) / |V_max|; LCB % = 100 (LCB(pick) - V_max) / |V_max|,
/// where LCB(pick) = V*(pick) - q s(pick) with the design's single q.
inline SimResult run_sim(const SimDesign& design) {
  design.validate();
  const auto& truth = design.truth;
  const Vector& v = truth.v_hat();
  const Vector& s = truth.se();
  const double v_max = v.maxCoeff();
  require(v_max != 0.0, ErrorCode::InvalidArgument, "V_max = 0: relative regret is undefined");

  auto cfg = design.bootstrap;
  cfg.alpha = design.alpha;
  cfg.threads = design.threads;
  const double q = bootstrap::quantile_finite(detail::identity_truth(truth), cfg).q_hat;

  const std::size_t nr = design.rules.size();
  const std::size_t reps = design.replications;
  std::vector<double> regret(nr * reps), lcb(nr * reps);
  std::vector<char> covered(reps, 0);

  parallel_for(
      reps,
      [&](std::size_t r) {
        const Vector est = detail::draw_estimates(truth, design.seed, rng::Domain::Simulation, r);
        const Eigen::Index polece = rules::argmax_rw(est, s, q);
        covered[r] = v[polece] >= est[polece] - q * s[polece];
        for (std::size_t i = 0; i < nr; ++i) {
          const auto& rule = design.rules[i];
          Eigen::Index pick = 0;
          switch (rule.kind) {
            case SimRule::Kind::EWM: pick = rules::argmax_rw(est, s, 0.0); break;
            case SimRule::Kind::PoLeCe: pick = polece; break;
            case SimRule::Kind::Control: pick = static_cast<Eigen::Index>(*design.control_index); break;
            case SimRule::Kind::RW: pick = rules::argmax_rw(est, s, rule.k); break;
          }
          regret[i * reps + r] = detail::relative(v_max - v[pick], v_max);
          lcb[i * reps + r] = detail::relative(est[pick] - q * s[pick] - v_max, v_max);
        }
      },
      design.threads);

  SimResult res;
  res.v_max = v_max;
  res.q_hat = q;
  res.sigma_bar = s.maxCoeff();
  res.sigma_low_best = std::numeric_limits<double>::infinity();
  for (auto j : detail::best_set(v)) res.sigma_low_best = std::min(res.sigma_low_best, s[j]);
  res.replications = reps;
  res.seed = design.seed;
  res.draws = cfg.draws;
  res.alpha = design.alpha;
  std::size_t hits = 0;
  for (char c : covered) hits += c != 0;
  res.coverage = static_cast<double>(hits) / static_cast<double>(reps);

  for (std::size_t i = 0; i < nr; ++i) {
    RuleStats st;
    st.name = design.rules[i].name();
    std::vector<double> reg(regret.begin() + static_cast<std::ptrdiff_t>(i * reps),
                            regret.begin() + static_cast<std::ptrdiff_t>((i + 1) * reps));
    double sum_r = 0.0, sum_l = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      sum_r += reg[r];
      sum_l += lcb[i * reps + r];
    }
    st.avg_regret_pct = sum_r / static_cast<double>(reps);
    st.avg_lcb_pct = sum_l / static_cast<double>(reps);
    st.median_regret_pct = bootstrap::upper_order_statistic(reg, 0.5);
    st.p95_regret_pct = bootstrap::upper_order_statistic(std::move(reg), 0.05);
    res.rules.push_back(std::move(st));
  }
  return res;
}

struct BoundCheck {
  double beta = 0.05;
  std::vector<double> ks;
  std::vector<double> violation_frequency;  // per k
  std::vector<double> bound;                // per k
  double q_best = 0.0;                      // (1 - beta) quantile of the max over the best set
  double q_all = 0.0;                       // (1 - beta) quantile of the max over every policy
  double sigma_bar = 0.0;
  double sigma_low_best = 0.0;
};

/// Frequency with which the realized regret of RW(k) exceeds
///   s_low (q_best + k) + s_bar (q_all - k)_+.
/// The quantiles come from direct simulation of independent standard normals.
inline BoundCheck regret_bound_check(const SimDesign& design, double beta, const std::vector<double>& ks,
                                     std::size_t quantile_draws = 200000) {
  design.validate();
  require(beta > 0.0 && beta <= 0.5, ErrorCode::InvalidArgument, "beta must lie in (0, 0.5]");
  require(!ks.empty(), ErrorCode::InvalidArgument, "no k values");
  require(quantile_draws >= 1000, ErrorCode::InvalidArgument, "at least 1000 quantile draws are required");
  for (double k : ks) require(k >= 0.0 && std::isfinite(k), ErrorCode::InvalidArgument, "k must be >= 0");
  const auto& truth = design.truth;
  const Vector& v = truth.v_hat();
  const Vector& s = truth.se();
  const double v_max = v.maxCoeff();
  const auto best = detail::best_set(v);
  const auto p = static_cast<Eigen::Index>(truth.size());

  std::vector<double> max_best(quantile_draws), max_all(quantile_draws);
  parallel_for(
      quantile_draws,
      [&](std::size_t b) {
        rng::NormalStream g(design.seed, rng::Domain::RegretQuantile, b);
        Vector z(p);
        for (Eigen::Index j = 0; j < p; ++j) z[j] = s[j] > 0.0 ? g.next() : 0.0;
        double mb = -std::numeric_limits<double>::infinity();
        for (auto j : best) mb = std::max(mb, z[j]);
        max_best[b] = mb;
        max_all[b] = z.maxCoeff();
      },
      design.threads);

  BoundCheck out;
  out.beta = beta;
  out.ks = ks;
  out.q_best = bootstrap::upper_order_statistic(std::move(max_best), beta);
  out.q_all = bootstrap::upper_order_statistic(std::move(max_all), beta);
  out.sigma_bar = s.maxCoeff();
  out.sigma_low_best = std::numeric_limits<double>::infinity();
  for (auto j : best) out.sigma_low_best = std::min(out.sigma_low_best, s[j]);
  for (double k : ks) {
    out.bound.push_back(out.sigma_low_best * (out.q_best + k) + out.sigma_bar * std::max(0.0, out.q_all - k));
  }

  const std::size_t reps = design.replications;
  std::vector<std::vector<char>> violated(ks.size(), std::vector<char>(reps, 0));
  parallel_for(
      reps,
      [&](std::size_t r) {
        const Vector est = detail::draw_estimates(truth, design.seed, rng::Domain::Simulation, r);
        for (std::size_t i = 0; i < ks.size(); ++i) {
          const double regret = v_max - v[rules::argmax_rw(est, s, ks[i])];
          violated[i][r] = regret > out.bound[i] * (1.0 + 1e-12) + 1e-300;
        }
      },
      design.threads);
  for (const auto& vi : violated) {
    std::size_t c = 0;
    for (char x : vi) c += x != 0;
    out.violation_frequency.push_back(static_cast<double>(c) / static_cast<double>(reps));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Design files: flat key = value lines, '#' comments.
//   truth = path.csv          (relative to the design file)
//   control = <label>         (optional)
//   replications = 10000
//   alpha = 0.05
//   draws = 100000
//   seed = 0
//   rules = ewm, polece, control, rw:1.5

inline SimDesign load_design(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = csv::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    require(eq != std::string_view::npos, ErrorCode::ParseError,
            path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key(csv::trim(t.substr(0, eq)));
    require(kv.emplace(key, std::string(csv::trim(t.substr(eq + 1)))).second, ErrorCode::ParseError,
            path + ": duplicate key '" + key + "'");
  }
  static const std::vector<std::string> known = {"truth", "control", "replications", "alpha", "draws", "seed", "rules", "threads"};
  for (const auto& [k, _] : kv) {
    require(std::find(known.begin(), known.end(), k) != known.end(), ErrorCode::ParseError,
            path + ": unknown key '" + k + "'");
  }
  require(kv.count("truth") == 1, ErrorCode::ParseError, path + ": missing key 'truth'");

  std::filesystem::path truth_path(kv["truth"]);
  if (truth_path.is_relative()) truth_path = std::filesystem::path(path).parent_path() / truth_path;
  SimDesign d(load_estimates(truth_path.string()));
  if (kv.count("control")) {
    const auto idx = d.truth.index_of(kv["control"]);
    require(idx.has_value(), ErrorCode::InvalidArgument, path + ": unknown control label '" + kv["control"] + "'");
    d.control_index = *idx;
  }
  auto as_size = [&](const std::string& key) {
    const auto v = csv::to_int(kv[key], key);
    require(v >= 0, ErrorCode::InvalidArgument, key + " must be >= 0");
    return static_cast<std::size_t>(v);
  };
  if (kv.count("replications")) d.replications = as_size("replications");
  if (kv.count("alpha")) d.alpha = csv::to_double(kv["alpha"], "alpha");
  if (kv.count("draws")) d.bootstrap.draws = as_size("draws");
  if (kv.count("seed")) d.seed = as_size("seed");
  if (kv.count("threads")) d.threads = static_cast<unsigned>(as_size("threads"));
  d.bootstrap.seed = d.seed;
  if (kv.count("rules")) {
    d.rules.clear();
    std::string item;
    std::istringstream ss(kv["rules"]);
    while (std::getline(ss, item, ',')) d.rules.push_back(SimRule::parse(item));
  } else if (d.control_index) {
    d.rules.push_back({SimRule::Kind::Control, 0.0});
  }
  d.validate();
  return d;
}

/// One row per rule, Table-4 style columns.
inline void write_result(std::ostream& out, const SimResult& res) {
  csv::write_row(out, {"rule", "avg_regret_pct", "median_regret_pct", "p95_regret_pct", "avg_lcb_pct"});
  for (const auto& r : res.rules) {
    csv::write_row(out, {r.name, csv::format(r.avg_regret_pct), csv::format(r.median_regret_pct),
                         csv::format(r.p95_regret_pct), csv::format(r.avg_lcb_pct)});
  }
}

}  // namespace riskaware::simlab
