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

// Inner concave program  max_{pi in Pi} pi'z - t * sqrt(pi' Sigma pi)  over the
// simplex-box polytope, and the root t* of f(t) = 0 where f is its value.
// f is convex and strictly decreasing with f'(t) = -sqrt(pi*(t)' Sigma pi*(t)),
// so Newton iterates started left of the root stay left of it.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "riskaware/error.hpp"
#include "riskaware/estimates.hpp"

namespace riskaware::conic {

struct InnerOptions {
  double tol = 1e-7;
  int max_iter = 50000;
};

struct RootOptions {
  InnerOptions inner{};
  double tol = 1e-6;
  int max_iter = 100;
};

struct InnerSolution {
  Allocation pi_star;
  double objective = 0.0;
  double risk_at_opt = 0.0;
  int iterations = 0;
  double gap = 0.0;  // certified bound on optimum - objective
  bool converged = true;
  bool regularized = false;  // Sigma was singular and received a ridge
  double lipschitz = 0.0;    // last accepted step constant, reusable as a warm start
};

struct RootResult {
  std::optional<double> t_star;  // empty: f(0) < 0, no nonnegative root
  double residual = 0.0;
  Allocation pi_at_root;
  int iterations = 0;
  int inner_iterations = 0;
  bool regularized = false;

  bool has_root() const { return t_star.has_value(); }
};

namespace detail {

// argmin_pi sum_j d_j (pi_j - v_j)^2 over {sum pi = 1, a <= pi <= b}.
// pi_j(tau) = clamp(v_j - tau / d_j, a_j, b_j); h(tau) = sum_j pi_j(tau) is
// piecewise linear and nonincreasing with breakpoints d_j (v_j - b_j) and
// d_j (v_j - a_j). The dual variable tau is located by bisection over the
// sorted breakpoints and then solved exactly on the bracketing linear piece.
template <typename Weight>
Vector project_weighted(const Vector& v, const Polytope& space, Weight d) {
  const Eigen::Index n = v.size();
  const auto& a = space.lower;
  const auto& b = space.upper;
  auto h = [&](double tau) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) s += std::clamp(v[j] - tau / d(j), a[j], b[j]);
    return s;
  };

  std::vector<double> bp;
  bp.reserve(static_cast<std::size_t>(2 * n));
  for (Eigen::Index j = 0; j < n; ++j) {
    bp.push_back(d(j) * (v[j] - b[j]));
    bp.push_back(d(j) * (v[j] - a[j]));
  }
  std::sort(bp.begin(), bp.end());

  // h(bp.front()) = sum b >= 1 and h(bp.back()) = sum a <= 1.
  std::size_t lo = 0, hi = bp.size() - 1;
  double h_lo = h(bp[lo]);
  double h_hi = h(bp[hi]);
  if (h_lo <= 1.0) {
    hi = lo;
    h_hi = h_lo;
  } else if (h_hi >= 1.0) {
    lo = hi;
    h_lo = h_hi;
  }
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    const double hm = h(bp[mid]);
    if (hm >= 1.0) {
      lo = mid;
      h_lo = hm;
    } else {
      hi = mid;
      h_hi = hm;
    }
  }
  double tau = bp[lo];
  if (hi != lo && h_lo != h_hi) tau = bp[lo] + (h_lo - 1.0) / (h_lo - h_hi) * (bp[hi] - bp[lo]);

  Vector out(n);
  for (Eigen::Index j = 0; j < n; ++j) out[j] = std::clamp(v[j] - tau / d(j), a[j], b[j]);
  // Put the rounding residual on a free coordinate so sum(pi) = 1 to ~1 ulp.
  const double residual = 1.0 - out.sum();
  if (residual != 0.0) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double cand = out[j] + residual;
      if (cand >= a[j] && cand <= b[j] && out[j] > a[j] && out[j] < b[j]) {
        out[j] = cand;
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Euclidean projection onto {sum pi = 1, a <= pi <= b}.
inline Vector project_simplex_box(const Vector& v, const Polytope& space) {
  require(v.size() == space.size(), ErrorCode::DimensionMismatch, "projection input length");
  return detail::project_weighted(v, space, [](Eigen::Index) { return 1.0; });
}

/// Projection in the metric diag(d), d > 0.
inline Vector project_simplex_box(const Vector& v, const Polytope& space, const Vector& d) {
  require(v.size() == space.size() && d.size() == v.size(), ErrorCode::DimensionMismatch,
          "projection input length");
  return detail::project_weighted(v, space, [&d](Eigen::Index j) { return d[j]; });
}

/// Exact maximizer of pi'z over the polytope: fill lower bounds, then give the
/// remaining mass to the largest z_j first (ties to the smaller index).
inline Vector linear_maximizer(const Vector& z, const Polytope& space) {
  const Eigen::Index n = z.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return z[i] > z[j]; });
  Vector pi = space.lower;
  double remaining = 1.0 - pi.sum();
  for (Eigen::Index j : order) {
    if (remaining <= 0.0) break;
    const double add = std::min(space.upper[j] - space.lower[j], remaining);
    pi[j] += add;
    remaining -= add;
  }
  return pi;
}

/// Validated covariance + polytope pair, reusable across many (z, t) solves.
/// Immutable after construction; `solve` and `find_root` are safe to call
/// concurrently.
class Problem {
 public:
  Problem(const Matrix& sigma, Polytope space) : space_(std::move(space)) {
    space_.validate();
    const Eigen::Index n = space_.size();
    require(sigma.rows() == n && sigma.cols() == n, ErrorCode::DimensionMismatch, "covariance size");
    require(sigma.allFinite(), ErrorCode::InvalidArgument, "covariance has non-finite entries");
    const double scale = std::max(1.0, sigma.diagonal().cwiseAbs().maxCoeff());
    require((sigma - sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale, ErrorCode::InvalidArgument,
            "covariance must be symmetric");
    sigma_ = (sigma + sigma.transpose()) / 2.0;
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma_, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues()(0);
    const double trace = sigma_.trace();
    require(lmin >= -1e-8 * scale, ErrorCode::InvalidArgument, "covariance is not positive semidefinite");
    const double ridge = trace > 0.0 ? 1e-10 * trace / static_cast<double>(n) : 1e-10;
    if (lmin < ridge) {
      sigma_.diagonal().array() += ridge;
      regularized_ = true;
    }
    // Jacobi metric for the gradient steps.
    metric_ = sigma_.diagonal();
    diameter_ = std::min(std::sqrt(2.0), (space_.upper - space_.lower).norm());
  }

  const Matrix& sigma() const { return sigma_; }
  const Polytope& space() const { return space_; }
  bool regularized() const { return regularized_; }

  double risk(const Vector& pi) const { return std::sqrt(std::max(0.0, pi.dot(sigma_ * pi))); }

  InnerSolution solve(const Vector& z, double t, const InnerOptions& opt = {},
                      const Vector* warm = nullptr, double warm_lipschitz = 0.0) const {
    require(z.size() == space_.size(), ErrorCode::DimensionMismatch, "z length does not match polytope");
    require(t >= 0.0 && std::isfinite(t), ErrorCode::InvalidArgument, "t must be finite and >= 0");
    require(opt.tol > 0.0, ErrorCode::InvalidArgument, "tolerance must be positive");
    InnerSolution out;
    out.regularized = regularized_;

    if (t == 0.0 || space_.size() == 1) {
      Vector pi = linear_maximizer(z, space_);
      out.risk_at_opt = risk(pi);
      out.objective = pi.dot(z) - t * out.risk_at_opt;
      out.pi_star = Allocation(std::move(pi));
      return out;
    }

    Vector x = warm ? project_simplex_box(*warm, space_) : linear_maximizer(z, space_);
    Vector sx = sigma_ * x;
    double rx = std::sqrt(std::max(x.dot(sx), 0.0));
    double gx = x.dot(z) - t * rx;

    double lip = warm_lipschitz > 0.0 ? warm_lipschitz : t / std::max(rx, 1e-300);
    lip = std::max(lip, 1e-12);

    Vector y = x, x_prev = x;
    double theta = 1.0;
    Vector sy, grad, x_new, sxn, step;
    double best_gap = std::numeric_limits<double>::infinity();

    int it = 0;
    for (; it < opt.max_iter; ++it) {
      sy.noalias() = sigma_ * y;
      const double ry = std::sqrt(std::max(y.dot(sy), 0.0));
      const double gy = y.dot(z) - t * ry;
      grad = z - (t / ry) * sy;

      double gnew = 0.0, rnew = 0.0;
      for (int bt = 0; bt < 200; ++bt) {
        x_new = project_simplex_box(y + grad.cwiseQuotient(metric_) / lip, space_, metric_);
        step = x_new - y;
        sxn.noalias() = sigma_ * x_new;
        rnew = std::sqrt(std::max(x_new.dot(sxn), 0.0));
        gnew = x_new.dot(z) - t * rnew;
        const double model = gy + grad.dot(step) - 0.5 * lip * step.dot(metric_.cwiseProduct(step));
        if (gnew >= model - 1e-15 * (1.0 + std::abs(gy))) break;
        lip *= 2.0;
      }

      // Gradient mapping G = lip * D * (x_new - y) certifies
      // g* - g(x_new) <= |G| |y - x*|, and |y - x*| <= |step| + diam.
      const double step_norm = step.norm();
      const double gap = lip * metric_.cwiseProduct(step).norm() * (diameter_ + step_norm);
      if (gnew >= gx) {
        x_prev = x;
        x = x_new;
        sx = sxn;
        rx = rnew;
        gx = gnew;
        best_gap = gap;
      }
      if (gap <= opt.tol * (1.0 + std::abs(gnew))) {
        best_gap = std::min(best_gap, gap);
        ++it;
        break;
      }

      if (gnew < gx) {
        // function-value restart: drop momentum and retry from the best point
        theta = 1.0;
        y = x;
        continue;
      }
      if (face_newton(z, t, x, sx, rx, gx)) {
        // polished on the current face; momentum is stale
        x_prev = x;
        y = x;
        theta = 1.0;
        continue;
      }
      const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
      y = x + ((theta - 1.0) / theta_next) * (x - x_prev);
      theta = theta_next;
      lip *= 0.9;
    }

    out.iterations = it;
    out.gap = best_gap;
    out.converged = best_gap <= opt.tol * (1.0 + std::abs(gx));
    out.objective = gx;
    out.risk_at_opt = rx;
    out.lipschitz = lip;
    out.pi_star = Allocation(std::move(x));
    return out;
  }

  std::pair<double, double> f_and_derivative(const Vector& z, double t, const InnerOptions& opt = {}) const {
    const auto s = solve(z, t, opt);
    return {s.objective, -s.risk_at_opt};
  }

  /// Safeguarded Newton on f(t) = 0 within a bracket f(t_lo) >= 0 >= f(t_hi).
  RootResult find_root(const Vector& z, const RootOptions& opt = {}) const {
    require(opt.tol > 0.0, ErrorCode::InvalidArgument, "root tolerance must be positive");
    RootResult res;
    res.regularized = regularized_;

    InnerSolution cur = solve(z, 0.0, opt.inner);
    const double f0 = cur.objective;
    if (f0 < 0.0) {
      res.residual = -f0;
      res.pi_at_root = cur.pi_star;
      return res;
    }
    if (f0 <= opt.tol) {
      res.t_star = 0.0;
      res.residual = f0;
      res.pi_at_root = cur.pi_star;
      return res;
    }

    double t_lo = 0.0;
    double t_hi = 2.0 * f0 / std::sqrt(sigma_.diagonal().minCoeff());
    bool hi_checked = false;
    double t_cur = 0.0, f_cur = f0, d_cur = -cur.risk_at_opt;
    double width_prev = std::numeric_limits<double>::infinity();
    double width_prev2 = std::numeric_limits<double>::infinity();

    for (int k = 0; k < opt.max_iter; ++k) {
      double t_next = d_cur < 0.0 ? t_cur - f_cur / d_cur : std::numeric_limits<double>::infinity();

      if (!(t_next < t_hi) && !hi_checked) {
        auto s_hi = solve(z, t_hi, opt.inner, &cur.pi_star.weights());
        res.inner_iterations += s_hi.iterations;
        if (s_hi.objective > 0.0) {
          t_lo = t_hi;
          t_hi *= 2.0;
          t_cur = t_lo;
          f_cur = s_hi.objective;
          d_cur = -s_hi.risk_at_opt;
          cur = std::move(s_hi);
          continue;
        }
        hi_checked = true;
      }
      const double width = t_hi - t_lo;
      const bool stalled = hi_checked && width > 0.5 * width_prev2;
      if (!(t_next > t_lo && t_next < t_hi) || stalled) t_next = 0.5 * (t_lo + t_hi);
      width_prev2 = width_prev;
      width_prev = width;

      auto s = solve(z, t_next, opt.inner, &cur.pi_star.weights(), cur.lipschitz);
      res.inner_iterations += s.iterations;
      res.iterations = k + 1;
      t_cur = t_next;
      f_cur = s.objective;
      d_cur = -s.risk_at_opt;
      cur = std::move(s);

      if (std::abs(f_cur) <= opt.tol) {
        res.t_star = t_cur;
        res.residual = std::abs(f_cur);
        res.pi_at_root = cur.pi_star;
        return res;
      }
      if (f_cur > 0.0) {
        t_lo = t_cur;
      } else {
        t_hi = t_cur;
        hi_checked = true;
      }
      if (t_hi - t_lo <= 1e-15 * std::max(1.0, t_hi)) {
        res.t_star = t_cur;
        res.residual = std::abs(f_cur);
        res.pi_at_root = cur.pi_star;
        return res;
      }
    }
    fail(ErrorCode::IterationLimit, "root finding did not converge");
  }

 private:
  // Newton step on the face {d : d_j = 0 off the free set, sum d = 0} with a
  // feasibility-limited backtracking line search. Returns true on ascent.
  bool face_newton(const Vector& z, double t, Vector& x, Vector& sx, double& rx, double& gx) const {
    const Eigen::Index n = x.size();
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (x[j] > space_.lower[j] + 1e-12 && x[j] < space_.upper[j] - 1e-12) free.push_back(j);
    }
    const auto m = static_cast<Eigen::Index>(free.size());
    if (m < 2 || rx <= 0.0) return false;

    const Vector grad = z - (t / rx) * sx;
    Matrix kkt = Matrix::Zero(m + 1, m + 1);
    Vector rhs = Vector::Zero(m + 1);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index k = 0; k < m; ++k) {
        const auto fi = free[static_cast<std::size_t>(i)];
        const auto fk = free[static_cast<std::size_t>(k)];
        kkt(i, k) = -t * (sigma_(fi, fk) / rx - sx[fi] * sx[fk] / (rx * rx * rx));
      }
      kkt(i, m) = 1.0;
      kkt(m, i) = 1.0;
      rhs[i] = -grad[free[static_cast<std::size_t>(i)]];
    }
    const Eigen::PartialPivLU<Matrix> lu(kkt);
    const Vector sol = lu.solve(rhs);
    if (!sol.allFinite()) return false;

    Vector d = Vector::Zero(n);
    double alpha_max = 1.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto j = free[static_cast<std::size_t>(i)];
      d[j] = sol[i];
      if (d[j] > 0.0) alpha_max = std::min(alpha_max, (space_.upper[j] - x[j]) / d[j]);
      if (d[j] < 0.0) alpha_max = std::min(alpha_max, (space_.lower[j] - x[j]) / d[j]);
    }
    if (grad.dot(d) <= 0.0) return false;

    double alpha = alpha_max;
    for (int bt = 0; bt < 30; ++bt, alpha *= 0.5) {
      Vector cand = x + alpha * d;
      for (Eigen::Index j = 0; j < n; ++j) cand[j] = std::clamp(cand[j], space_.lower[j], space_.upper[j]);
      Vector sc = sigma_ * cand;
      const double rc = std::sqrt(std::max(cand.dot(sc), 0.0));
      const double gc = cand.dot(z) - t * rc;
      if (gc > gx) {
        x = std::move(cand);
        sx = std::move(sc);
        rx = rc;
        gx = gc;
        return true;
      }
    }
    return false;
  }

  Matrix sigma_;
  Polytope space_;
  bool regularized_ = false;
  Vector metric_;
  double diameter_ = 0.0;
};

// Free-function forms.

inline InnerSolution solve_inner(const Vector& z, const Matrix& sigma, const Polytope& space, double t,
                                 double tol = 1e-7) {
  InnerOptions opt;
  opt.tol = tol;
  return Problem(sigma, space).solve(z, t, opt);
}

inline std::pair<double, double> f_and_derivative(const Vector& z, const Matrix& sigma, const Polytope& space,
                                                  double t) {
  return Problem(sigma, space).f_and_derivative(z, t);
}

inline RootResult find_root(const Vector& z, const Matrix& sigma, const Polytope& space, double tol = 1e-6) {
  RootOptions opt;
  opt.tol = tol;
  return Problem(sigma, space).find_root(z, opt);
}

}  // namespace riskaware::conic
