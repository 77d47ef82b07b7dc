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

// Selection rules: EWM (k = 0), RW(k) maximizing V(pi) - k s(pi), and PoLeCe,
// the RW rule whose k is the bootstrap sup-quantile so that the maximized
// objective is a lower confidence bound on delivered welfare.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "riskaware/bootstrap.hpp"
#include "riskaware/conic.hpp"
#include "riskaware/csv.hpp"
#include "riskaware/error.hpp"
#include "riskaware/estimates.hpp"

namespace riskaware::rules {

enum class Rule { EWM, RW, PoLeCe };

struct SelectionReport {
  Rule rule = Rule::EWM;
  std::variant<std::size_t, Allocation> chosen;
  double v_hat = 0.0;
  double s_hat = 0.0;
  double k_used = 0.0;
  double lcb = 0.0;  // v_hat - k_used * s_hat
  std::optional<double> q_hat;
  std::optional<double> band_lcb;  // v_hat - q_hat * s_hat, the uniform-band bound
  std::optional<double> alpha;
  std::optional<std::size_t> draws;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> warnings;

  bool finite() const { return std::holds_alternative<std::size_t>(chosen); }
  std::size_t index() const { return std::get<std::size_t>(chosen); }
  const Allocation& allocation() const { return std::get<Allocation>(chosen); }

  std::string rule_name() const {
    switch (rule) {
      case Rule::EWM: return "EWM";
      case Rule::RW: return "RW(" + csv::format(k_used) + ")";
      case Rule::PoLeCe: return "PoLeCe(" + csv::format(alpha.value_or(0.05)) + ")";
    }
    return "?";
  }

  /// Weights over the table's programs (a vertex for finite selections).
  Vector weights(std::size_t programs) const {
    if (finite()) return Allocation::vertex(static_cast<Eigen::Index>(programs), static_cast<Eigen::Index>(index())).weights();
    return allocation().weights();
  }
};

/// Attaches the uniform band computed with critical value q.
inline void attach_band(SelectionReport& r, double q_hat) {
  r.q_hat = q_hat;
  r.band_lcb = r.v_hat - q_hat * r.s_hat;
}

/// argmax_j v_j - k se_j; ties go to the smaller se, then the smaller index.
inline Eigen::Index argmax_rw(const Vector& v, const Vector& se, double k) {
  Eigen::Index best = 0;
  double best_obj = v[0] - k * se[0];
  for (Eigen::Index j = 1; j < v.size(); ++j) {
    const double obj = v[j] - k * se[j];
    if (obj > best_obj || (obj == best_obj && se[j] < se[best])) {
      best = j;
      best_obj = obj;
    }
  }
  return best;
}

inline SelectionReport select_rw_finite(const EstimateTable& table, double k) {
  require(table.size() >= 1, ErrorCode::EmptyInput, "empty table");
  require(k >= 0.0 && std::isfinite(k), ErrorCode::InvalidArgument, "k must be finite and >= 0");
  const auto& v = table.v_hat();
  const auto& se = table.se();
  const Eigen::Index best = argmax_rw(v, se, k);
  SelectionReport r;
  r.rule = k == 0.0 ? Rule::EWM : Rule::RW;
  r.chosen = static_cast<std::size_t>(best);
  r.v_hat = v[best];
  r.s_hat = se[best];
  r.k_used = k;
  r.lcb = r.v_hat - k * r.s_hat;
  return r;
}

inline SelectionReport select_rw_polytope(const EstimateTable& table, const Polytope& space, double k,
                                          const conic::InnerOptions& opt = {}) {
  require(k >= 0.0 && std::isfinite(k), ErrorCode::InvalidArgument, "k must be finite and >= 0");
  require(static_cast<std::size_t>(space.size()) == table.size(), ErrorCode::DimensionMismatch,
          "polytope dimension does not match table");
  const conic::Problem problem(table.covariance(), space);
  auto sol = problem.solve(table.v_hat(), k, opt);
  if (!sol.converged) {
    fail(ErrorCode::SolverFailure, "inner solver stopped with gap " + csv::format(sol.gap) + " at k = " + csv::format(k));
  }
  SelectionReport r;
  r.rule = k == 0.0 ? Rule::EWM : Rule::RW;
  r.v_hat = policy_value(table, sol.pi_star);
  r.s_hat = policy_risk(table, sol.pi_star);
  r.k_used = k;
  r.lcb = r.v_hat - k * r.s_hat;
  r.chosen = std::move(sol.pi_star);
  return r;
}

inline SelectionReport select_rw(const EstimateTable& table, const PolicySpace& space, double k) {
  if (const auto* poly = std::get_if<Polytope>(&space)) return select_rw_polytope(table, *poly, k);
  return select_rw_finite(table, k);
}

inline SelectionReport select_ewm(const EstimateTable& table, const PolicySpace& space) {
  return select_rw(table, space, 0.0);
}

/// PoLeCe with a precomputed critical value (one bootstrap run can serve the
/// selection and the uniform band).
inline SelectionReport select_polece(const EstimateTable& table, const PolicySpace& space,
                                     const bootstrap::QuantileResult& q, double alpha) {
  auto r = select_rw(table, space, q.q_hat);
  r.rule = Rule::PoLeCe;
  attach_band(r, q.q_hat);
  r.alpha = alpha;
  r.draws = q.draws_used;
  r.seed = q.seed;
  r.warnings = q.warnings;
  return r;
}

inline SelectionReport select_polece(const EstimateTable& table, const PolicySpace& space,
                                     const bootstrap::BootstrapConfig& cfg) {
  return select_polece(table, space, bootstrap::quantile(table, space, cfg), cfg.alpha);
}

/// LV[j] = v_hat[j] - q_hat * se[j]
inline Vector lcb_all(const EstimateTable& table, double q_hat) {
  require(q_hat >= 0.0 && std::isfinite(q_hat), ErrorCode::InvalidArgument, "q_hat must be finite and >= 0");
  return table.v_hat() - q_hat * table.se();
}

}  // namespace riskaware::rules
