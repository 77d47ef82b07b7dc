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

// Welfare estimates, their standard errors and correlation, plus the
// policy spaces and allocations they are evaluated on.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "riskaware/csv.hpp"
#include "riskaware/error.hpp"

namespace riskaware {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kPsdTolerance = 1e-8;
inline constexpr double kCorrelationJitter = 1e-8;
inline constexpr double kAllocationTolerance = 1e-9;

struct TableMeta {
  std::optional<double> n;  // notional sample size, informational only
  std::vector<std::string> notes;
};

class EstimateTable {
 public:
  /// Validates and builds a table. A missing correlation means identity.
  /// `known` flags entries whose se may be exactly zero.
  static EstimateTable make(std::vector<std::string> labels, Vector v_hat, Vector se,
                            std::optional<Matrix> corr = std::nullopt, std::vector<bool> known = {},
                            TableMeta meta = {}) {
    const auto p = static_cast<Eigen::Index>(labels.size());
    require(p >= 1, ErrorCode::EmptyInput, "estimate table needs at least one row");
    require(v_hat.size() == p && se.size() == p, ErrorCode::DimensionMismatch,
            "labels, estimates and se must have the same length");
    if (known.empty()) known.assign(labels.size(), false);
    require(known.size() == labels.size(), ErrorCode::DimensionMismatch, "known flags length");

    std::unordered_set<std::string> seen;
    for (const auto& l : labels) {
      require(!l.empty(), ErrorCode::InvalidArgument, "empty label");
      require(seen.insert(l).second, ErrorCode::DuplicateLabel, "duplicate label '" + l + "'");
    }
    for (Eigen::Index j = 0; j < p; ++j) {
      require(std::isfinite(v_hat[j]), ErrorCode::InvalidArgument, "non-finite estimate for " + labels[j]);
      require(std::isfinite(se[j]), ErrorCode::NegativeSE, "non-finite se for " + labels[j]);
      require(se[j] >= 0.0, ErrorCode::NegativeSE, "negative se for " + labels[j]);
      require(se[j] > 0.0 || known[j], ErrorCode::NegativeSE,
              "zero se for " + labels[j] + " without a known-value flag");
    }

    EstimateTable t;
    t.labels_ = std::move(labels);
    t.v_hat_ = std::move(v_hat);
    t.se_ = std::move(se);
    t.known_ = std::move(known);
    t.meta_ = std::move(meta);
    if (corr) {
      t.corr_ = validate_correlation(*corr, t.jittered_);
    } else {
      t.corr_ = Matrix::Identity(p, p);
    }
    return t;
  }

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const Vector& v_hat() const { return v_hat_; }
  const Vector& se() const { return se_; }
  const Matrix& corr() const { return corr_; }
  bool known(std::size_t j) const { return known_[j]; }
  const std::vector<bool>& known_flags() const { return known_; }
  const TableMeta& meta() const { return meta_; }
  bool jittered() const { return jittered_; }

  bool identity_correlation() const { return corr_.isIdentity(0.0); }

  /// diag(se) * corr * diag(se)
  Matrix covariance() const { return se_.asDiagonal() * corr_ * se_.asDiagonal(); }

  std::optional<std::size_t> index_of(const std::string& label) const {
    const auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - labels_.begin());
  }

  /// Symmetric, unit diagonal, entries in [-1, 1], PSD. Slightly negative
  /// eigenvalues (>= -1e-8) are repaired by jitter plus renormalization.
  static Matrix validate_correlation(const Matrix& c, bool& jittered) {
    jittered = false;
    require(c.rows() == c.cols(), ErrorCode::DimensionMismatch, "correlation must be square");
    const auto p = c.rows();
    for (Eigen::Index i = 0; i < p; ++i) {
      require(std::abs(c(i, i) - 1.0) <= 1e-10, ErrorCode::InvalidCorrelation, "correlation diagonal must be 1");
      for (Eigen::Index j = 0; j < p; ++j) {
        require(std::isfinite(c(i, j)) && std::abs(c(i, j)) <= 1.0 + 1e-12, ErrorCode::InvalidCorrelation,
                "correlation entries must lie in [-1, 1]");
        require(std::abs(c(i, j) - c(j, i)) <= 1e-10, ErrorCode::InvalidCorrelation,
                "correlation must be symmetric");
      }
    }
    Matrix out = (c + c.transpose()) / 2.0;
    out.diagonal().setOnes();
    const double lambda_min = Eigen::SelfAdjointEigenSolver<Matrix>(out, Eigen::EigenvaluesOnly).eigenvalues()(0);
    if (lambda_min < -kPsdTolerance) {
      fail(ErrorCode::NonPSDCorrelation,
           "correlation has eigenvalue " + csv::format(lambda_min) + " below -1e-8");
    }
    if (lambda_min < 0.0) {
      out.diagonal().array() += kCorrelationJitter;
      out /= 1.0 + kCorrelationJitter;
      out.diagonal().setOnes();
      jittered = true;
    }
    return out;
  }

 private:
  EstimateTable() = default;

  std::vector<std::string> labels_;
  Vector v_hat_;
  Vector se_;
  Matrix corr_;
  std::vector<bool> known_;
  TableMeta meta_;
  bool jittered_ = false;
};

// ---------------------------------------------------------------------------
// Policy spaces

struct FiniteSpace {
  std::size_t size = 1;
};

/// {pi : sum pi = 1, lower <= pi <= upper}
struct Polytope {
  Vector lower;
  Vector upper;

  static Polytope simplex(Eigen::Index programs) {
    require(programs >= 1, ErrorCode::InfeasiblePolytope, "polytope needs at least one program");
    return Polytope{Vector::Zero(programs), Vector::Ones(programs)};
  }

  static Polytope make(Vector lower, Vector upper) {
    Polytope p{std::move(lower), std::move(upper)};
    p.validate();
    return p;
  }

  Eigen::Index size() const { return lower.size(); }

  void validate() const {
    require(lower.size() == upper.size() && lower.size() >= 1, ErrorCode::InfeasiblePolytope,
            "polytope bounds must be nonempty and of equal length");
    for (Eigen::Index j = 0; j < lower.size(); ++j) {
      require(0.0 <= lower[j] && lower[j] <= upper[j] && upper[j] <= 1.0, ErrorCode::InfeasiblePolytope,
              "need 0 <= a_j <= b_j <= 1 at index " + std::to_string(j));
    }
    require(lower.sum() <= 1.0 + kAllocationTolerance && upper.sum() >= 1.0 - kAllocationTolerance,
            ErrorCode::InfeasiblePolytope, "need sum(a) <= 1 <= sum(b)");
  }

  bool contains(const Vector& pi, double tol = kAllocationTolerance) const {
    if (pi.size() != size()) return false;
    if (std::abs(pi.sum() - 1.0) > tol) return false;
    for (Eigen::Index j = 0; j < pi.size(); ++j) {
      if (pi[j] < lower[j] - tol || pi[j] > upper[j] + tol) return false;
    }
    return true;
  }
};

using PolicySpace = std::variant<FiniteSpace, Polytope>;

/// Investment shares over programs.
class Allocation {
 public:
  Allocation() = default;
  explicit Allocation(Vector weights) : weights_(std::move(weights)) {}

  static Allocation vertex(Eigen::Index programs, Eigen::Index j) {
    Vector w = Vector::Zero(programs);
    w[j] = 1.0;
    return Allocation(std::move(w));
  }

  const Vector& weights() const { return weights_; }
  Eigen::Index size() const { return weights_.size(); }
  double operator[](Eigen::Index j) const { return weights_[j]; }

 private:
  Vector weights_;
};

// ---------------------------------------------------------------------------
// Value and risk

inline double policy_value(const EstimateTable& table, const Allocation& pi) {
  require(static_cast<std::size_t>(pi.size()) == table.size(), ErrorCode::DimensionMismatch,
          "allocation length does not match table");
  return pi.weights().dot(table.v_hat());
}

/// sqrt(pi' diag(se) C diag(se) pi)
inline double policy_risk(const EstimateTable& table, const Allocation& pi) {
  require(static_cast<std::size_t>(pi.size()) == table.size(), ErrorCode::DimensionMismatch,
          "allocation length does not match table");
  const Vector w = pi.weights().cwiseProduct(table.se());
  const double q = w.dot(table.corr() * w);
  return std::sqrt(std::max(0.0, q));
}

// ---------------------------------------------------------------------------
// CSV ingestion
//
//   # n = 1200            (optional metadata)
//   label,estimate,se[,known]
//   A,1.0,0.5
//   [correlation]          (optional p x p block, row order as above)
//   1,0.2
//   0.2,1

inline constexpr std::string_view kCorrelationMarker = "[correlation]";

namespace detail {

inline Matrix parse_matrix(const std::vector<std::vector<std::string>>& rows, std::size_t begin,
                           std::size_t p, const std::string& where) {
  require(rows.size() - begin == p, ErrorCode::DimensionMismatch,
          where + ": correlation block must have " + std::to_string(p) + " rows");
  Matrix c(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < p; ++i) {
    const auto& r = rows[begin + i];
    require(r.size() == p, ErrorCode::DimensionMismatch,
            where + ": correlation row " + std::to_string(i) + " must have " + std::to_string(p) + " entries");
    for (std::size_t j = 0; j < p; ++j) c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = csv::to_double(r[j], "correlation");
  }
  return c;
}

inline void parse_meta(const std::vector<std::string>& comments, TableMeta& meta) {
  for (const auto& c : comments) {
    std::string_view v = c;
    if (v.size() > 1 && v.substr(0, 1) == "n") {
      auto rest = csv::trim(v.substr(1));
      if (!rest.empty() && (rest.front() == '=' || rest.front() == ':')) {
        meta.n = csv::to_double(rest.substr(1), "n");
        continue;
      }
    }
    if (v.substr(0, 5) == "note:") {
      meta.notes.emplace_back(csv::trim(v.substr(5)));
    }
  }
}

}  // namespace detail

inline EstimateTable parse_estimates(const csv::Document& doc, const std::string& where = "estimates",
                                     std::optional<Matrix> corr = std::nullopt) {
  require(!doc.rows.empty(), ErrorCode::EmptyInput, where + ": no header");
  const auto& header = doc.rows.front();
  auto col = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };
  const auto c_label = col("label");
  const auto c_est = col("estimate");
  const auto c_se = col("se");
  const auto c_known = col("known");
  require(c_label.has_value(), ErrorCode::MissingColumn, where + ": missing column 'label'");
  require(c_est.has_value(), ErrorCode::MissingColumn, where + ": missing column 'estimate'");
  require(c_se.has_value(), ErrorCode::MissingSE, where + ": missing column 'se'");

  std::size_t end = doc.rows.size();
  for (std::size_t i = 1; i < doc.rows.size(); ++i) {
    if (doc.rows[i].size() == 1 && doc.rows[i][0] == kCorrelationMarker) {
      end = i;
      break;
    }
  }
  std::vector<std::string> labels;
  std::vector<double> est, se;
  std::vector<bool> known;
  for (std::size_t i = 1; i < end; ++i) {
    const auto& r = doc.rows[i];
    require(r.size() == header.size(), ErrorCode::DimensionMismatch,
            where + ": row " + std::to_string(i) + " has " + std::to_string(r.size()) + " fields, expected " +
                std::to_string(header.size()));
    labels.push_back(r[*c_label]);
    est.push_back(csv::to_double(r[*c_est], "estimate"));
    require(!csv::trim(r[*c_se]).empty(), ErrorCode::MissingSE, where + ": empty se for " + r[*c_label]);
    se.push_back(csv::to_double(r[*c_se], "se"));
    known.push_back(c_known ? csv::to_int(r[*c_known], "known") != 0 : false);
  }
  const std::size_t p = labels.size();
  if (end < doc.rows.size()) {
    require(!corr.has_value(), ErrorCode::InvalidArgument,
            where + ": correlation given both inline and as a separate file");
    corr = detail::parse_matrix(doc.rows, end + 1, p, where);
  }
  TableMeta meta;
  detail::parse_meta(doc.comments, meta);
  return EstimateTable::make(std::move(labels), Eigen::Map<Vector>(est.data(), static_cast<Eigen::Index>(p)),
                             Eigen::Map<Vector>(se.data(), static_cast<Eigen::Index>(p)), std::move(corr),
                             std::move(known), std::move(meta));
}

inline Matrix load_correlation(const std::string& path, std::size_t p) {
  const auto doc = csv::read_file(path);
  return detail::parse_matrix(doc.rows, 0, p, path);
}

/// Estimates from an already parsed document; an optional companion
/// correlation file holds a p x p matrix in the same row order.
inline EstimateTable read_estimates(const csv::Document& doc, const std::string& where,
                                    const std::optional<std::string>& corr_path) {
  std::optional<Matrix> corr;
  if (corr_path) {
    std::size_t p = 0;
    for (std::size_t i = 1; i < doc.rows.size(); ++i) {
      if (doc.rows[i].size() == 1 && doc.rows[i][0] == kCorrelationMarker) break;
      ++p;
    }
    corr = load_correlation(*corr_path, p);
  }
  return parse_estimates(doc, where, std::move(corr));
}

/// Reads `label,estimate,se` CSV.
inline EstimateTable load_estimates(const std::string& path, const std::optional<std::string>& corr_path = {}) {
  return read_estimates(csv::read_file(path), path, corr_path);
}

inline void write_estimates(std::ostream& out, const EstimateTable& table,
                            const std::vector<std::string>& header_comments = {}) {
  for (const auto& c : header_comments) out << "# " << c << '\n';
  if (table.meta().n) out << "# n = " << csv::format(*table.meta().n) << '\n';
  for (const auto& note : table.meta().notes) out << "# note: " << note << '\n';
  const bool any_known = std::any_of(table.known_flags().begin(), table.known_flags().end(), [](bool b) { return b; });
  std::vector<std::string> header{"label", "estimate", "se"};
  if (any_known) header.emplace_back("known");
  csv::write_row(out, header);
  for (std::size_t j = 0; j < table.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    std::vector<std::string> row{table.labels()[j], csv::format(table.v_hat()[i]), csv::format(table.se()[i])};
    if (any_known) row.emplace_back(table.known(j) ? "1" : "0");
    csv::write_row(out, row);
  }
  if (!table.identity_correlation()) {
    out << kCorrelationMarker << '\n';
    for (Eigen::Index i = 0; i < table.corr().rows(); ++i) {
      std::vector<std::string> row;
      for (Eigen::Index j = 0; j < table.corr().cols(); ++j) row.push_back(csv::format(table.corr()(i, j)));
      csv::write_row(out, row);
    }
  }
}

inline void save_estimates(const std::string& path, const EstimateTable& table,
                           const std::vector<std::string>& header_comments = {}) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  write_estimates(out, table, header_comments);
}

/// Per-program bounds file: `label,lower,upper`; labels not listed keep [0, 1].
inline Polytope load_bounds(const std::string& path, const EstimateTable& table) {
  const auto doc = csv::read_file(path);
  require(!doc.rows.empty(), ErrorCode::EmptyInput, path + ": no header");
  const auto& h = doc.rows.front();
  require(h.size() == 3 && h[0] == "label" && h[1] == "lower" && h[2] == "upper", ErrorCode::MissingColumn,
          path + ": header must be label,lower,upper");
  auto poly = Polytope::simplex(static_cast<Eigen::Index>(table.size()));
  for (std::size_t i = 1; i < doc.rows.size(); ++i) {
    const auto& r = doc.rows[i];
    require(r.size() == 3, ErrorCode::DimensionMismatch, path + ": bounds rows need 3 fields");
    const auto idx = table.index_of(r[0]);
    require(idx.has_value(), ErrorCode::InvalidArgument, path + ": unknown label '" + r[0] + "'");
    poly.lower[static_cast<Eigen::Index>(*idx)] = csv::to_double(r[1], "lower");
    poly.upper[static_cast<Eigen::Index>(*idx)] = csv::to_double(r[2], "upper");
  }
  poly.validate();
  return poly;
}

}  // namespace riskaware
