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

// Efficient decision frontier: the monotonically nondecreasing, concave upper
// envelope of (risk, value) pairs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "riskaware/error.hpp"
#include "riskaware/estimates.hpp"
#include "riskaware/parallel.hpp"
#include "riskaware/rules.hpp"

namespace riskaware::frontier {

struct FrontierPoint {
  double risk = 0.0;
  double value = 0.0;
  std::variant<std::size_t, Allocation> policy;
  std::optional<double> k;  // generating penalty (polytope sweep only)
};

struct Frontier {
  std::vector<FrontierPoint> points;  // ascending risk
};

namespace detail {

// Is the slope (p1 -> p) strictly larger than (p1 -> p2)? Both risk gaps are
// positive, so the comparison is done by cross-multiplication.
inline bool bulges(const FrontierPoint& p1, const FrontierPoint& p2, const FrontierPoint& p) {
  return (p.value - p1.value) * (p2.risk - p1.risk) > (p2.value - p1.value) * (p.risk - p1.risk);
}

}  // namespace detail

/// Sort by ascending risk (ties: descending value), drop exact duplicates,
/// skip points below the running frontier value, and pop middle points that
/// would make the frontier convex.
inline Frontier frontier_finite(std::vector<FrontierPoint> points) {
  require(!points.empty(), ErrorCode::EmptyInput, "frontier needs at least one point");
  for (const auto& p : points) {
    require(std::isfinite(p.risk) && std::isfinite(p.value), ErrorCode::InvalidArgument, "non-finite frontier point");
    require(p.risk >= 0.0, ErrorCode::InvalidArgument, "risk must be >= 0");
  }
  std::stable_sort(points.begin(), points.end(), [](const FrontierPoint& a, const FrontierPoint& b) {
    if (a.risk != b.risk) return a.risk < b.risk;
    return a.value > b.value;
  });
  points.erase(std::unique(points.begin(), points.end(),
                           [](const FrontierPoint& a, const FrontierPoint& b) {
                             return a.risk == b.risk && a.value == b.value;
                           }),
               points.end());

  Frontier out;
  auto& f = out.points;
  for (auto& p : points) {
    if (!f.empty() && p.value < f.back().value) continue;
    while (f.size() >= 2 && detail::bulges(f[f.size() - 2], f.back(), p)) f.pop_back();
    f.push_back(std::move(p));
  }
  return out;
}

/// Finite menu: one point per row, (se, estimate).
inline Frontier frontier_finite(const EstimateTable& table) {
  std::vector<FrontierPoint> pts;
  for (std::size_t j = 0; j < table.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    pts.push_back({table.se()[i], table.v_hat()[i], j, std::nullopt});
  }
  return frontier_finite(std::move(pts));
}

/// 200 log-spaced values over [q/50, 5q], plus k = 0 and k = q, descending.
inline std::vector<double> default_k_grid(double q_hat, std::size_t count = 200) {
  require(q_hat > 0.0 && std::isfinite(q_hat), ErrorCode::InvalidArgument, "q_hat must be positive");
  require(count >= 2, ErrorCode::InvalidArgument, "grid needs at least two points");
  std::vector<double> grid;
  const double lo = std::log(q_hat / 50.0);
  const double hi = std::log(5.0 * q_hat);
  for (std::size_t i = 0; i < count; ++i) {
    grid.push_back(std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1)));
  }
  grid.push_back(q_hat);
  grid.push_back(0.0);
  std::sort(grid.begin(), grid.end(), std::greater<>());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

/// Solves RW(k) for every k in the grid and keeps the envelope.
inline Frontier frontier_polytope(const EstimateTable& table, const Polytope& space, const std::vector<double>& k_grid) {
  require(!k_grid.empty(), ErrorCode::EmptyInput, "k grid is empty");
  std::vector<FrontierPoint> pts(k_grid.size());
  parallel_for(k_grid.size(), [&](std::size_t i) {
    auto r = rules::select_rw_polytope(table, space, k_grid[i]);
    pts[i] = FrontierPoint{r.s_hat, r.v_hat, std::move(r.chosen), k_grid[i]};
  });
  return frontier_finite(std::move(pts));
}

/// Frontier value at a given risk: linear interpolation between frontier
/// points, flat after the last point, undefined (nullopt) before the first.
inline std::optional<double> envelope(const Frontier& f, double risk) {
  const auto& p = f.points;
  if (p.empty() || risk < p.front().risk) return std::nullopt;
  if (risk >= p.back().risk) return p.back().value;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (risk <= p[i].risk) {
      const double w = (risk - p[i - 1].risk) / (p[i].risk - p[i - 1].risk);
      return p[i - 1].value + w * (p[i].value - p[i - 1].value);
    }
  }
  return p.back().value;
}

}  // namespace riskaware::frontier
