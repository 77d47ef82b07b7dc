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

// JSON views of selection results. Weights appear twice: rounded shares keyed
// by program label, and the raw vector in table order.

#include <cmath>
#include <string>

#include <json.hpp>

#include "riskaware/bootstrap.hpp"
#include "riskaware/estimates.hpp"
#include "riskaware/rules.hpp"

namespace riskaware::report {

using json = nlohmann::ordered_json;

/// Rounded to 4 decimals; -0 becomes +0.
inline double share(double w) { return std::round(w * 1e4) / 1e4 + 0.0; }

inline json weights_json(const EstimateTable& table, const Vector& w) {
  json shares = json::object();
  json raw = json::array();
  for (std::size_t j = 0; j < table.size(); ++j) {
    const double x = w[static_cast<Eigen::Index>(j)];
    shares[table.labels()[j]] = share(x);
    raw.push_back(x);
  }
  return json{{"weights", shares}, {"weights_raw", raw}};
}

inline json selection_json(const EstimateTable& table, const rules::SelectionReport& r) {
  json j;
  j["rule"] = r.rule_name();
  j["estimated_value"] = r.v_hat;
  j["estimated_risk"] = r.s_hat;
  j["k"] = r.k_used;
  j["objective"] = r.lcb;
  if (r.band_lcb) j["lcb"] = *r.band_lcb;
  if (r.q_hat) j["q_hat"] = *r.q_hat;
  if (r.finite()) j["chosen"] = table.labels()[r.index()];
  const auto w = weights_json(table, r.weights(table.size()));
  j["weights"] = w["weights"];
  j["weights_raw"] = w["weights_raw"];
  j["warnings"] = r.warnings;
  return j;
}

inline json quantile_json(const bootstrap::QuantileResult& q) {
  return json{{"q_hat", q.q_hat},
              {"draws_used", q.draws_used},
              {"clamped_fraction", q.clamped_fraction},
              {"failed_draws", q.failed_draws},
              {"seed", q.seed},
              {"warnings", q.warnings}};
}

}  // namespace riskaware::report
