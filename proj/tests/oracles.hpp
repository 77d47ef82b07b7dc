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

// Brute-force reference computations shared by the unit and acceptance tests.
// Nothing here calls into the library's solvers.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

namespace oracle {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// 0.95 quantile of the max of p independent standard normals.
inline double max_normal_quantile(double level, int p) { return normal_quantile(std::pow(level, 1.0 / p)); }

struct Box {
  Vector lower, upper;
};

// Visits every grid point of {sum pi = 1, lower <= pi <= upper} for J = 2 or 3
// restricted to a window around `center` (half-width `radius`, spacing `step`).
inline void for_each_grid_point(const Box& box, const Vector& center, double radius, double step,
                                const std::function<void(const Vector&)>& visit) {
  const auto j = box.lower.size();
  auto lo = [&](Eigen::Index i) { return std::max(box.lower[i], center[i] - radius); };
  auto hi = [&](Eigen::Index i) { return std::min(box.upper[i], center[i] + radius); };
  Vector pi(j);
  if (j == 2) {
    const double a = std::max(lo(0), 1.0 - hi(1));
    const double b = std::min(hi(0), 1.0 - lo(1));
    if (a > b) return;
    const auto n = static_cast<long>(std::ceil((b - a) / step));
    for (long i = 0; i <= n; ++i) {
      pi[0] = std::min(b, a + static_cast<double>(i) * step);
      pi[1] = 1.0 - pi[0];
      visit(pi);
    }
    return;
  }
  const auto n0 = static_cast<long>(std::ceil((hi(0) - lo(0)) / step));
  for (long i = 0; i <= n0; ++i) {
    pi[0] = std::min(hi(0), lo(0) + static_cast<double>(i) * step);
    const double a = std::max(lo(1), 1.0 - pi[0] - hi(2));
    const double b = std::min(hi(1), 1.0 - pi[0] - lo(2));
    if (a > b) continue;
    const auto n1 = static_cast<long>(std::ceil((b - a) / step));
    for (long k = 0; k <= n1; ++k) {
      pi[1] = std::min(b, a + static_cast<double>(k) * step);
      pi[2] = 1.0 - pi[0] - pi[1];
      visit(pi);
    }
  }
}

/// Maximizes a function over the feasible set by a full grid followed by two
/// zoomed grids around the incumbent. Suitable for concave and quasi-concave
/// objectives in J = 2, 3.
inline std::pair<double, Vector> grid_maximize(const Box& box, const std::function<double(const Vector&)>& f,
                                               double coarse_step = 0.002) {
  double best = -std::numeric_limits<double>::infinity();
  Vector arg = box.lower;
  auto visit = [&](const Vector& pi) {
    const double v = f(pi);
    if (v > best) {
      best = v;
      arg = pi;
    }
  };
  const Vector mid = Vector::Constant(box.lower.size(), 0.5);
  for_each_grid_point(box, mid, 1.0, coarse_step, visit);
  double step = coarse_step;
  for (int level = 0; level < 2; ++level) {
    const Vector c = arg;
    const double radius = 2.0 * step;
    step /= 50.0;
    for_each_grid_point(box, c, radius, step, visit);
  }
  return {best, arg};
}

/// Minimizes sum (pi - v)^2 over the grid (same zoom scheme).
inline std::pair<double, Vector> grid_projection(const Box& box, const Vector& v) {
  auto res = grid_maximize(box, [&](const Vector& pi) { return -(pi - v).squaredNorm(); });
  return {-res.first, res.second};
}

struct Point {
  double risk, value;
  bool operator==(const Point& o) const { return risk == o.risk && value == o.value; }
};

/// Upper-right hull by exhaustive checks: drop points beaten in value by a
/// point earlier in (risk asc, value desc) order, then drop points strictly
/// below any segment between two survivors.
inline std::vector<Point> brute_force_frontier(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.risk != b.risk ? a.risk < b.risk : a.value > b.value;
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  std::vector<Point> f;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dominated = false;
    for (std::size_t q = 0; q < i; ++q) dominated = dominated || pts[q].value > pts[i].value;
    if (!dominated) f.push_back(pts[i]);
  }
  std::vector<Point> out;
  for (std::size_t m = 0; m < f.size(); ++m) {
    bool below = false;
    for (std::size_t a = 0; a < m && !below; ++a) {
      for (std::size_t b = m + 1; b < f.size() && !below; ++b) {
        below = (f[m].value - f[a].value) * (f[b].risk - f[a].risk) < (f[b].value - f[a].value) * (f[m].risk - f[a].risk);
      }
    }
    if (!below) out.push_back(f[m]);
  }
  return out;
}

/// Random correlation matrix from a Gaussian factor.
inline Matrix random_correlation(std::mt19937_64& rng, int p) {
  std::normal_distribution<double> n;
  Matrix a(p, p + 2);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) a(i, j) = n(rng);
  Matrix c = a * a.transpose();
  const Vector d = c.diagonal().cwiseSqrt().cwiseInverse();
  c = d.asDiagonal() * c * d.asDiagonal();
  c.diagonal().setOnes();
  return c;
}

struct ConicInstance {
  Vector z;
  Matrix sigma;
  Box box;
  double t = 0.0;
};

/// Random inner-problem instance: se in [0.1, 1], random correlation, simplex
/// or a random feasible box, t in [0, 3].
inline ConicInstance random_conic_instance(std::mt19937_64& rng, int j) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n;
  ConicInstance c;
  Vector se(j);
  c.z.resize(j);
  for (int i = 0; i < j; ++i) {
    se[i] = 0.1 + 0.9 * u(rng);
    c.z[i] = 0.3 + n(rng);
  }
  c.sigma = se.asDiagonal() * random_correlation(rng, j) * se.asDiagonal();
  c.box.lower = Vector::Zero(j);
  c.box.upper = Vector::Ones(j);
  if (u(rng) < 0.5) {
    for (int i = 0; i < j; ++i) {
      c.box.lower[i] = u(rng) * 0.6 / j;
      c.box.upper[i] = 0.55 + 0.45 * u(rng);
    }
  }
  c.t = 3.0 * u(rng);
  return c;
}

inline double inner_objective(const ConicInstance& c, const Vector& pi, double t) {
  return pi.dot(c.z) - t * std::sqrt(std::max(0.0, pi.dot(c.sigma * pi)));
}

}  // namespace oracle
