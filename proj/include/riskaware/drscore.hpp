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

// Doubly-robust welfare scores from randomized-trial micro-data over a finite
// class of treatment policies pi(t | x), x a discrete covariate cell.
//
//   Levels:      psi = sum_t g(t,X) pi(t|X) + H [Y - g(T,X)],  H = pi(T|X) / p(T|X)
//   AddedValue:  psi = sum_t (g(t,X) - g(0,X)) pi(t|X) + H [Y - g(T,X)],
//                H = pi(T|X) / p(T|X) - 1{T = 0} / p(0|X)
//
// g is a cross-fitted weighted cell mean; propensities are the known
// randomization probabilities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "riskaware/csv.hpp"
#include "riskaware/error.hpp"
#include "riskaware/estimates.hpp"
#include "riskaware/parallel.hpp"

namespace riskaware::drscore {

struct Unit {
  Unit() = default;
  Unit(double y_, std::uint32_t t_, std::uint32_t x_, double weight_ = 1.0,
       std::optional<std::uint32_t> cluster_ = std::nullopt)
      : y(y_), t(t_), x(x_), weight(weight_), cluster(cluster_) {}

  double y = 0.0;
  std::uint32_t t = 0;
  std::uint32_t x = 0;
  double weight = 1.0;
  std::optional<std::uint32_t> cluster;
};

class ScoreDataset {
 public:
  /// propensity(x, t) = p(t | x); cells x treatments.
  static ScoreDataset make(std::vector<Unit> units, Matrix propensity) {
    ScoreDataset d;
    d.units_ = std::move(units);
    d.propensity_ = std::move(propensity);
    d.validate();
    return d;
  }

  const std::vector<Unit>& units() const { return units_; }
  const Matrix& propensity() const { return propensity_; }
  std::size_t cells() const { return static_cast<std::size_t>(propensity_.rows()); }
  std::size_t treatments() const { return static_cast<std::size_t>(propensity_.cols()); }
  std::size_t size() const { return units_.size(); }
  bool clustered() const { return !units_.empty() && units_.front().cluster.has_value(); }

 private:
  void validate() const {
    require(!units_.empty(), ErrorCode::EmptyInput, "dataset has no units");
    require(propensity_.rows() >= 1 && propensity_.cols() >= 1, ErrorCode::EmptyInput, "empty propensity table");
    const bool has_cluster = units_.front().cluster.has_value();
    for (const auto& u : units_) {
      require(std::isfinite(u.y), ErrorCode::InvalidArgument, "non-finite outcome");
      require(u.x < cells() && u.t < treatments(), ErrorCode::InvalidArgument,
              "unit (t=" + std::to_string(u.t) + ", x=" + std::to_string(u.x) + ") outside the propensity table");
      require(u.weight >= 0.0 && std::isfinite(u.weight), ErrorCode::InvalidArgument, "weights must be >= 0");
      require(u.cluster.has_value() == has_cluster, ErrorCode::InvalidArgument,
              "cluster ids must be given for all units or none");
      require(propensity_(u.x, u.t) > 0.0, ErrorCode::OverlapViolation,
              "p(t=" + std::to_string(u.t) + " | x=" + std::to_string(u.x) + ") = 0 for an observed unit");
    }
    for (Eigen::Index x = 0; x < propensity_.rows(); ++x) {
      const auto row = propensity_.row(x);
      require((row.array() >= 0.0).all() && row.allFinite(), ErrorCode::InvalidArgument,
              "propensities must be finite and >= 0");
      const double s = row.sum();
      require(s == 0.0 || std::abs(s - 1.0) <= 1e-9, ErrorCode::InvalidArgument,
              "propensities in cell " + std::to_string(x) + " sum to " + csv::format(s));
    }
  }

  std::vector<Unit> units_;
  Matrix propensity_;
};

/// Micro-data `y,t,x[,weight][,cluster]` and propensities `x,t,p`.
inline ScoreDataset load_dataset(const std::string& micro_path, const std::string& propensity_path,
                                 std::size_t cells, std::size_t treatments) {
  require(cells >= 1 && treatments >= 1, ErrorCode::InvalidArgument, "cells and treatments must be >= 1");
  const auto doc = csv::read_file(micro_path);
  require(!doc.rows.empty(), ErrorCode::EmptyInput, micro_path + ": no header");
  const auto& h = doc.rows.front();
  auto col = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < h.size(); ++i)
      if (h[i] == name) return i;
    return std::nullopt;
  };
  const auto cy = col("y"), ct = col("t"), cx = col("x"), cw = col("weight"), cc = col("cluster");
  require(cy && ct && cx, ErrorCode::MissingColumn, micro_path + ": need columns y,t,x");

  std::unordered_map<std::string, std::uint32_t> cluster_ids;
  std::vector<Unit> units;
  for (std::size_t i = 1; i < doc.rows.size(); ++i) {
    const auto& r = doc.rows[i];
    require(r.size() == h.size(), ErrorCode::DimensionMismatch, micro_path + ": ragged row " + std::to_string(i));
    Unit u;
    u.y = csv::to_double(r[*cy], "y");
    const auto t = csv::to_int(r[*ct], "t");
    const auto x = csv::to_int(r[*cx], "x");
    require(t >= 0 && static_cast<std::size_t>(t) < treatments, ErrorCode::InvalidArgument,
            micro_path + ": treatment id out of range at row " + std::to_string(i));
    require(x >= 0 && static_cast<std::size_t>(x) < cells, ErrorCode::InvalidArgument,
            micro_path + ": cell id out of range at row " + std::to_string(i));
    u.t = static_cast<std::uint32_t>(t);
    u.x = static_cast<std::uint32_t>(x);
    if (cw) u.weight = csv::to_double(r[*cw], "weight");
    if (cc) {
      const auto [it, inserted] = cluster_ids.emplace(r[*cc], static_cast<std::uint32_t>(cluster_ids.size()));
      u.cluster = it->second;
    }
    units.push_back(u);
  }

  Matrix prop = Matrix::Zero(static_cast<Eigen::Index>(cells), static_cast<Eigen::Index>(treatments));
  const auto pdoc = csv::read_file(propensity_path);
  require(!pdoc.rows.empty(), ErrorCode::EmptyInput, propensity_path + ": no header");
  const auto& ph = pdoc.rows.front();
  require(ph.size() == 3 && ph[0] == "x" && ph[1] == "t" && ph[2] == "p", ErrorCode::MissingColumn,
          propensity_path + ": header must be x,t,p");
  for (std::size_t i = 1; i < pdoc.rows.size(); ++i) {
    const auto& r = pdoc.rows[i];
    require(r.size() == 3, ErrorCode::DimensionMismatch, propensity_path + ": rows need 3 fields");
    const auto x = csv::to_int(r[0], "x");
    const auto t = csv::to_int(r[1], "t");
    require(x >= 0 && static_cast<std::size_t>(x) < cells && t >= 0 && static_cast<std::size_t>(t) < treatments,
            ErrorCode::InvalidArgument, propensity_path + ": (x, t) out of range at row " + std::to_string(i));
    prop(x, t) = csv::to_double(r[2], "p");
  }
  return ScoreDataset::make(std::move(units), std::move(prop));
}

// ---------------------------------------------------------------------------
// Policy classes

class PolicyClass {
 public:
  enum class Kind { Deterministic, Listed };

  /// All |T|^|X| deterministic maps in mixed-radix order, cell 0 most
  /// significant. Labels read "x0=t|x1=t'|...".
  static PolicyClass enumerate(std::size_t cells, std::size_t treatments, std::size_t cap = 1'000'000) {
    require(cells >= 1 && treatments >= 1, ErrorCode::InvalidArgument, "cells and treatments must be >= 1");
    std::size_t count = 1;
    for (std::size_t c = 0; c < cells; ++c) {
      require(count <= cap / treatments, ErrorCode::CapExceeded,
              std::to_string(treatments) + "^" + std::to_string(cells) + " policies exceed the cap of " +
                  std::to_string(cap));
      count *= treatments;
    }
    PolicyClass pc;
    pc.kind_ = Kind::Deterministic;
    pc.cells_ = cells;
    pc.treatments_ = treatments;
    pc.assign_.reserve(count);
    pc.labels_.reserve(count);
    std::vector<std::uint32_t> digits(cells, 0);
    for (std::size_t m = 0; m < count; ++m) {
      std::size_t rest = m;
      for (std::size_t c = cells; c-- > 0;) {
        digits[c] = static_cast<std::uint32_t>(rest % treatments);
        rest /= treatments;
      }
      std::string label;
      for (std::size_t c = 0; c < cells; ++c) {
        if (c) label += '|';
        label += 'x' + std::to_string(c) + '=' + std::to_string(digits[c]);
      }
      pc.assign_.push_back(digits);
      pc.labels_.push_back(std::move(label));
    }
    return pc;
  }

  /// Explicit pi(t|x) tables, each cells x treatments with rows summing to 1.
  static PolicyClass listed(std::vector<Matrix> tables, std::vector<std::string> labels) {
    require(!tables.empty(), ErrorCode::EmptyInput, "no listed policies");
    require(tables.size() == labels.size(), ErrorCode::DimensionMismatch, "policy labels");
    PolicyClass pc;
    pc.kind_ = Kind::Listed;
    pc.cells_ = static_cast<std::size_t>(tables.front().rows());
    pc.treatments_ = static_cast<std::size_t>(tables.front().cols());
    for (const auto& m : tables) {
      require(static_cast<std::size_t>(m.rows()) == pc.cells_ && static_cast<std::size_t>(m.cols()) == pc.treatments_,
              ErrorCode::DimensionMismatch, "listed policy tables must share a shape");
      require((m.array() >= 0.0).all() && m.allFinite(), ErrorCode::InvalidArgument, "policy probabilities must be >= 0");
      for (Eigen::Index x = 0; x < m.rows(); ++x) {
        require(std::abs(m.row(x).sum() - 1.0) <= 1e-9, ErrorCode::InvalidArgument,
                "policy probabilities must sum to 1 in every cell");
      }
    }
    pc.tables_ = std::move(tables);
    pc.labels_ = std::move(labels);
    return pc;
  }

  Kind kind() const { return kind_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t cells() const { return cells_; }
  std::size_t treatments() const { return treatments_; }
  const std::vector<std::string>& labels() const { return labels_; }

  double prob(std::size_t policy, std::size_t x, std::size_t t) const {
    if (kind_ == Kind::Deterministic) return assign_[policy][x] == t ? 1.0 : 0.0;
    return tables_[policy](static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(t));
  }

  /// Assigned treatment per cell (deterministic classes only).
  const std::vector<std::uint32_t>& assignment(std::size_t policy) const {
    require(kind_ == Kind::Deterministic, ErrorCode::InvalidArgument, "listed policies have no assignment");
    return assign_[policy];
  }

 private:
  Kind kind_ = Kind::Deterministic;
  std::size_t cells_ = 0;
  std::size_t treatments_ = 0;
  std::vector<std::vector<std::uint32_t>> assign_;
  std::vector<Matrix> tables_;
  std::vector<std::string> labels_;
};

inline PolicyClass enumerate_policies(std::size_t cells, std::size_t treatments, std::size_t cap = 1'000'000) {
  return PolicyClass::enumerate(cells, treatments, cap);
}

// ---------------------------------------------------------------------------
// Cross-fitted regression

struct CrossFit {
  std::vector<std::uint32_t> fold;  // per unit
  Matrix g;                         // n x |T|: g(t, X_i) from the fold excluding unit i
  std::size_t fallbacks = 0;        // (unit, t) predictions that used a coarser mean
  std::vector<std::string> flags;
};

/// Folds are stratified on (t, x) cells: the r-th unit of a cell, in input
/// order, goes to fold r mod K. A cell that is empty in a training fold falls
/// back to that fold's treatment-level mean, then to its overall mean.
inline CrossFit fit_regression(const ScoreDataset& data, std::size_t folds = 2) {
  require(folds >= 2, ErrorCode::InvalidArgument, "cross-fitting needs at least 2 folds");
  const auto& units = data.units();
  const std::size_t n = units.size();
  const std::size_t nx = data.cells();
  const std::size_t nt = data.treatments();
  require(n >= 1, ErrorCode::EmptyInput, "empty dataset");

  CrossFit out;
  out.fold.resize(n);
  std::vector<std::size_t> seen(nx * nt, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = seen[units[i].x * nt + units[i].t];
    out.fold[i] = static_cast<std::uint32_t>(r % folds);
    ++r;
  }

  out.g.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nt));
  std::vector<std::size_t> cell_fallbacks(folds, 0), treatment_fallbacks(folds, 0);
  for (std::size_t k = 0; k < folds; ++k) {
    std::vector<double> swy(nx * nt, 0.0), sw(nx * nt, 0.0), twy(nt, 0.0), tw(nt, 0.0);
    double all_wy = 0.0, all_w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (out.fold[i] == k) continue;
      const auto& u = units[i];
      swy[u.x * nt + u.t] += u.weight * u.y;
      sw[u.x * nt + u.t] += u.weight;
      twy[u.t] += u.weight * u.y;
      tw[u.t] += u.weight;
      all_wy += u.weight * u.y;
      all_w += u.weight;
    }
    if (all_w == 0.0) {
      // Degenerate training fold: fall back to the full-sample mean.
      for (const auto& u : units) {
        all_wy += u.weight * u.y;
        all_w += u.weight;
      }
    }
    const double overall = all_w > 0.0 ? all_wy / all_w : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (out.fold[i] != k) continue;
      for (std::size_t t = 0; t < nt; ++t) {
        const std::size_t c = units[i].x * nt + t;
        double v;
        if (sw[c] > 0.0) {
          v = swy[c] / sw[c];
        } else if (tw[t] > 0.0) {
          v = twy[t] / tw[t];
          ++out.fallbacks;
          ++cell_fallbacks[k];
        } else {
          v = overall;
          ++out.fallbacks;
          ++treatment_fallbacks[k];
        }
        out.g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = v;
      }
    }
  }
  for (std::size_t k = 0; k < folds; ++k) {
    if (cell_fallbacks[k])
      out.flags.push_back("fold " + std::to_string(k) + ": " + std::to_string(cell_fallbacks[k]) +
                          " predictions used the treatment-level mean (empty training cell)");
    if (treatment_fallbacks[k])
      out.flags.push_back("fold " + std::to_string(k) + ": " + std::to_string(treatment_fallbacks[k]) +
                          " predictions used the overall mean (treatment absent from training fold)");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scores

enum class Mode { Levels, AddedValue };

struct ScoreMatrix {
  Matrix psi;  // n x p
  Mode mode = Mode::Levels;
  std::vector<std::uint32_t> fold;
  std::vector<std::string> labels;
  std::vector<bool> valid;          // false: overlap violation for that policy
  std::vector<std::string> errors;  // per policy, empty when valid
  Vector weights;
  std::vector<std::uint32_t> clusters;  // empty when unclustered
};

/// Riesz representer H_i(pi) for one policy.
inline Vector representer(const ScoreDataset& data, const PolicyClass& policies, std::size_t policy,
                          Mode mode = Mode::Levels, std::uint32_t control = 0) {
  const auto& units = data.units();
  const auto& p = data.propensity();
  Vector h(static_cast<Eigen::Index>(units.size()));
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& u = units[i];
    double v = policies.prob(policy, u.x, u.t) / p(u.x, u.t);
    if (mode == Mode::AddedValue && u.t == control) v -= 1.0 / p(u.x, control);
    h[static_cast<Eigen::Index>(i)] = v;
  }
  return h;
}

inline ScoreMatrix compute_scores(const ScoreDataset& data, const PolicyClass& policies, const CrossFit& g,
                                  Mode mode = Mode::Levels, std::uint32_t control = 0) {
  const auto& units = data.units();
  const auto& prop = data.propensity();
  const std::size_t n = units.size();
  require(policies.cells() == data.cells() && policies.treatments() == data.treatments(),
          ErrorCode::DimensionMismatch, "policy class shape does not match the dataset");
  require(static_cast<std::size_t>(g.g.rows()) == n && static_cast<std::size_t>(g.g.cols()) == data.treatments(),
          ErrorCode::DimensionMismatch, "regression does not match the dataset");
  if (mode == Mode::AddedValue) {
    require(control < data.treatments(), ErrorCode::InvalidArgument, "control id out of range");
    std::vector<bool> cell_present(data.cells(), false);
    for (const auto& u : units) cell_present[u.x] = true;
    for (std::size_t x = 0; x < data.cells(); ++x) {
      require(!cell_present[x] || prop(static_cast<Eigen::Index>(x), control) > 0.0, ErrorCode::OverlapViolation,
              "added-value scores need p(control | x) > 0 in cell " + std::to_string(x));
    }
  }

  ScoreMatrix out;
  out.mode = mode;
  out.fold = g.fold;
  out.labels = policies.labels();
  out.psi.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(policies.size()));
  out.valid.assign(policies.size(), true);
  out.errors.assign(policies.size(), std::string());
  out.weights.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out.weights[static_cast<Eigen::Index>(i)] = units[i].weight;
  if (data.clustered()) {
    for (const auto& u : units) out.clusters.push_back(*u.cluster);
  }

  std::vector<bool> cell_present(data.cells(), false);
  for (const auto& u : units) cell_present[u.x] = true;

  parallel_for(policies.size(), [&](std::size_t j) {
    const auto col = static_cast<Eigen::Index>(j);
    for (std::size_t x = 0; x < data.cells() && out.valid[j]; ++x) {
      if (!cell_present[x]) continue;
      for (std::size_t t = 0; t < data.treatments(); ++t) {
        if (policies.prob(j, x, t) > 0.0 && !(prop(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(t)) > 0.0)) {
          out.valid[j] = false;
          out.errors[j] = "OverlapViolation: policy puts mass on (t=" + std::to_string(t) + ", x=" +
                          std::to_string(x) + ") with p = 0";
          break;
        }
      }
    }
    if (!out.valid[j]) {
      out.psi.col(col).setConstant(std::numeric_limits<double>::quiet_NaN());
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& u = units[i];
      const auto row = static_cast<Eigen::Index>(i);
      double regression = 0.0;
      for (std::size_t t = 0; t < data.treatments(); ++t) {
        const double w = policies.prob(j, u.x, t);
        if (w != 0.0) regression += w * g.g(row, static_cast<Eigen::Index>(t));
      }
      double h = policies.prob(j, u.x, u.t) / prop(u.x, u.t);
      if (mode == Mode::AddedValue) {
        regression -= g.g(row, static_cast<Eigen::Index>(control));
        if (u.t == control) h -= 1.0 / prop(u.x, control);
      }
      out.psi(row, col) = regression + h * (u.y - g.g(row, static_cast<Eigen::Index>(u.t)));
    }
  });
  return out;
}

/// Column means, (clustered) standard errors and sample correlation.
/// Weighted mean m = sum w psi / W; with cluster sums u_g = sum_{i in g} w_i (psi_i - m),
/// Cov = G / (G - 1) * sum_g u_g u_g' / W^2. Unclustered data treat each unit as a cluster.
/// Policies flagged invalid are dropped and listed in the table notes.
inline EstimateTable to_estimate_table(const ScoreMatrix& m) {
  require(m.psi.cols() >= 1 && m.psi.rows() >= 1, ErrorCode::EmptyInput, "empty score matrix");
  std::vector<Eigen::Index> keep;
  TableMeta meta;
  for (std::size_t j = 0; j < m.valid.size(); ++j) {
    if (m.valid[j]) {
      keep.push_back(static_cast<Eigen::Index>(j));
    } else {
      meta.notes.push_back("dropped " + m.labels[j] + " (" + m.errors[j] + ")");
    }
  }
  require(!keep.empty(), ErrorCode::OverlapViolation, "every policy violates overlap");
  const auto p = static_cast<Eigen::Index>(keep.size());
  const Eigen::Index n = m.psi.rows();

  Matrix psi(n, p);
  for (Eigen::Index c = 0; c < p; ++c) psi.col(c) = m.psi.col(keep[static_cast<std::size_t>(c)]);

  const double total_w = m.weights.sum();
  require(total_w > 0.0, ErrorCode::InsufficientUnits, "all weights are zero");
  const Vector mean = (psi.transpose() * m.weights) / total_w;

  std::map<std::uint32_t, Eigen::Index> cluster_row;
  std::vector<Eigen::Index> unit_cluster(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (m.weights[i] == 0.0) {
      unit_cluster[static_cast<std::size_t>(i)] = -1;
      continue;
    }
    const std::uint32_t key = m.clusters.empty() ? static_cast<std::uint32_t>(i) : m.clusters[static_cast<std::size_t>(i)];
    const auto [it, inserted] = cluster_row.emplace(key, static_cast<Eigen::Index>(cluster_row.size()));
    unit_cluster[static_cast<std::size_t>(i)] = it->second;
  }
  const auto groups = static_cast<Eigen::Index>(cluster_row.size());
  require(groups >= 2, ErrorCode::InsufficientUnits, "need at least 2 effective units or clusters");

  Matrix u = Matrix::Zero(groups, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto gi = unit_cluster[static_cast<std::size_t>(i)];
    if (gi < 0) continue;
    u.row(gi) += m.weights[i] * (psi.row(i) - mean.transpose());
  }
  const double g = static_cast<double>(groups);
  Matrix cov = (u.transpose() * u) * (g / (g - 1.0)) / (total_w * total_w);
  cov = (cov + cov.transpose()).eval() / 2.0;

  Vector se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  std::vector<bool> known(static_cast<std::size_t>(p), false);
  Matrix corr = Matrix::Identity(p, p);
  for (Eigen::Index a = 0; a < p; ++a) {
    if (se[a] == 0.0) known[static_cast<std::size_t>(a)] = true;
    for (Eigen::Index b = 0; b < a; ++b) {
      if (se[a] > 0.0 && se[b] > 0.0) {
        const double r = std::clamp(cov(a, b) / (se[a] * se[b]), -1.0, 1.0);
        corr(a, b) = r;
        corr(b, a) = r;
      }
    }
  }
  std::vector<std::string> labels;
  for (auto j : keep) labels.push_back(m.labels[static_cast<std::size_t>(j)]);
  meta.n = static_cast<double>(n);
  meta.notes.insert(meta.notes.begin(), std::string("scores: ") + (m.mode == Mode::Levels ? "levels" : "added-value"));
  return EstimateTable::make(std::move(labels), mean, se, corr, std::move(known), std::move(meta));
}

}  // namespace riskaware::drscore
