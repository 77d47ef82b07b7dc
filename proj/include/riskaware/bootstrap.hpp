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

// Gaussian-bootstrap critical values: the (1 - alpha) quantile of the
// supremum of the studentized Gaussian process, over a finite policy menu
// or over a simplex-box allocation polytope.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "riskaware/conic.hpp"
#include "riskaware/error.hpp"
#include "riskaware/estimates.hpp"
#include "riskaware/parallel.hpp"
#include "riskaware/rng.hpp"

namespace riskaware::bootstrap {

struct BootstrapConfig {
  double alpha = 0.05;
  std::size_t draws = 100000;
  std::uint64_t seed = 0;
  double clamp_report_threshold = 0.10;
  unsigned threads = 0;  // 0: hardware concurrency; never affects results

  void validate() const {
    require(alpha > 0.0 && alpha <= 0.5, ErrorCode::InvalidArgument, "alpha must lie in (0, 0.5]");
    require(draws >= 1000, ErrorCode::InvalidArgument, "at least 1000 bootstrap draws are required");
    require(clamp_report_threshold >= 0.0 && clamp_report_threshold <= 1.0, ErrorCode::InvalidArgument,
            "clamp report threshold must lie in [0, 1]");
  }
};

struct QuantileResult {
  double q_hat = 0.0;
  std::size_t draws_used = 0;
  double clamped_fraction = 0.0;  // polytope only: draws with no nonnegative root
  std::size_t failed_draws = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// Value at rank ceil((1 - alpha) B) among B draws, no interpolation.
inline double upper_order_statistic(std::vector<double> values, double alpha) {
  require(!values.empty(), ErrorCode::EmptyInput, "no draws");
  const auto b = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil((1.0 - alpha) * b - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

/// Pivoted Cholesky: returns L (p x r) with L L' = corr, r = numerical rank.
/// The input is validated like an estimate table's, but factored unjittered.
inline Matrix gaussian_factor(const Matrix& corr) {
  bool jittered = false;
  try {
    EstimateTable::validate_correlation(corr, jittered);
  } catch (const Error& e) {
    fail(ErrorCode::FactorizationFailure, e.what());
  }
  Matrix a = (corr + corr.transpose()) / 2.0;
  a.diagonal().setOnes();
  const Eigen::Index p = a.rows();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) perm[static_cast<std::size_t>(i)] = i;

  Matrix l = Matrix::Zero(p, p);  // rows in original order
  Vector diag = a.diagonal();
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < p; ++k) {
    Eigen::Index piv = k;
    for (Eigen::Index i = k + 1; i < p; ++i) {
      if (diag[perm[static_cast<std::size_t>(i)]] > diag[perm[static_cast<std::size_t>(piv)]]) piv = i;
    }
    std::swap(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(piv)]);
    const Eigen::Index pk = perm[static_cast<std::size_t>(k)];
    const double d = diag[pk];
    if (d <= 1e-12) {
      if (d < -kPsdTolerance) fail(ErrorCode::FactorizationFailure, "correlation is indefinite");
      break;
    }
    const double root = std::sqrt(d);
    l(pk, k) = root;
    for (Eigen::Index i = k + 1; i < p; ++i) {
      const Eigen::Index pi = perm[static_cast<std::size_t>(i)];
      double v = a(pi, pk);
      for (Eigen::Index c = 0; c < k; ++c) v -= l(pi, c) * l(pk, c);
      l(pi, k) = v / root;
      diag[pi] -= l(pi, k) * l(pi, k);
    }
    ++rank;
  }
  return l.leftCols(std::max<Eigen::Index>(rank, 1));
}

namespace detail {

inline Vector standard_normals(std::uint64_t seed, std::size_t draw, Eigen::Index dim) {
  rng::NormalStream stream(seed, rng::Domain::Bootstrap, draw);
  Vector g(dim);
  for (Eigen::Index i = 0; i < dim; ++i) g[i] = stream.next();
  return g;
}

}  // namespace detail

/// Sup over a finite menu: max_j (L g)_j with L L' = C. Entries with se = 0
/// have a studentized error of exactly 0.
inline std::vector<double> sup_draws_finite(const EstimateTable& table, const BootstrapConfig& cfg) {
  cfg.validate();
  const Matrix l = gaussian_factor(table.corr());
  const Eigen::Index p = l.rows();
  const Eigen::Index r = l.cols();
  std::vector<double> sup(cfg.draws);
  constexpr std::size_t kChunk = 512;
  const std::size_t chunks = (cfg.draws + kChunk - 1) / kChunk;
  parallel_for(
      chunks,
      [&](std::size_t c) {
        const std::size_t begin = c * kChunk;
        const std::size_t end = std::min(cfg.draws, begin + kChunk);
        const auto m = static_cast<Eigen::Index>(end - begin);
        Matrix g(r, m);
        for (Eigen::Index b = 0; b < m; ++b) g.col(b) = detail::standard_normals(cfg.seed, begin + static_cast<std::size_t>(b), r);
        Matrix z = l * g;
        for (Eigen::Index j = 0; j < p; ++j) {
          if (table.se()[j] == 0.0) z.row(j).setZero();
        }
        for (Eigen::Index b = 0; b < m; ++b) sup[begin + static_cast<std::size_t>(b)] = z.col(b).maxCoeff();
      },
      cfg.threads);
  return sup;
}

inline QuantileResult quantile_finite(const EstimateTable& table, const BootstrapConfig& cfg) {
  QuantileResult res;
  res.q_hat = upper_order_statistic(sup_draws_finite(table, cfg), cfg.alpha);
  res.draws_used = cfg.draws;
  res.seed = cfg.seed;
  return res;
}

struct PolytopeDraws {
  std::vector<double> sup;
  std::size_t clamped = 0;
  std::size_t failed = 0;
};

/// Per draw: z = diag(se) L g, sup = t*(z) from the conic root, or 0 when
/// f(0) < 0 (clamped). Draws whose root search fails are recorded as +inf.
inline PolytopeDraws sup_draws_polytope(const EstimateTable& table, const Polytope& space,
                                        const BootstrapConfig& cfg) {
  cfg.validate();
  require(static_cast<std::size_t>(space.size()) == table.size(), ErrorCode::DimensionMismatch,
          "polytope dimension does not match table");
  const Matrix l = gaussian_factor(table.corr());
  const Matrix factor = table.se().asDiagonal() * l;
  const conic::Problem problem(table.covariance(), space);

  PolytopeDraws out;
  out.sup.resize(cfg.draws);
  std::vector<std::uint8_t> status(cfg.draws, 0);  // 1 clamped, 2 failed
  parallel_for(
      cfg.draws,
      [&](std::size_t b) {
        const Vector z = factor * detail::standard_normals(cfg.seed, b, l.cols());
        try {
          const auto root = problem.find_root(z);
          if (root.has_root()) {
            out.sup[b] = *root.t_star;
          } else {
            out.sup[b] = 0.0;
            status[b] = 1;
          }
        } catch (const Error&) {
          out.sup[b] = std::numeric_limits<double>::infinity();
          status[b] = 2;
        }
      },
      cfg.threads);
  for (auto s : status) {
    if (s == 1) ++out.clamped;
    if (s == 2) ++out.failed;
  }
  return out;
}

inline QuantileResult quantile_polytope(const EstimateTable& table, const Polytope& space,
                                        const BootstrapConfig& cfg) {
  auto draws = sup_draws_polytope(table, space, cfg);
  const auto b = static_cast<double>(cfg.draws);
  if (static_cast<double>(draws.failed) > 0.001 * b) {
    fail(ErrorCode::SolverFailure, "root search failed on " + std::to_string(draws.failed) + " of " +
                                       std::to_string(cfg.draws) + " bootstrap draws");
  }
  QuantileResult res;
  res.q_hat = upper_order_statistic(std::move(draws.sup), cfg.alpha);
  res.draws_used = cfg.draws;
  res.clamped_fraction = static_cast<double>(draws.clamped) / b;
  res.failed_draws = draws.failed;
  res.seed = cfg.seed;
  if (res.clamped_fraction > cfg.clamp_report_threshold) {
    res.warnings.push_back("clamped fraction " + csv::format(res.clamped_fraction) +
                           " exceeds report threshold; draws with a negative supremum were set to 0");
  }
  if (draws.failed > 0) {
    res.warnings.push_back(std::to_string(draws.failed) + " draws failed and were counted as +inf");
  }
  return res;
}

inline QuantileResult quantile(const EstimateTable& table, const PolicySpace& space, const BootstrapConfig& cfg) {
  if (const auto* poly = std::get_if<Polytope>(&space)) return quantile_polytope(table, *poly, cfg);
  return quantile_finite(table, cfg);
}

}  // namespace riskaware::bootstrap
