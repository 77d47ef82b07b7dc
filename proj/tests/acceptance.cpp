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

// Acceptance run: one PASS/FAIL line per criterion at its stated tolerance.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "riskaware/bootstrap.hpp"
#include "riskaware/conic.hpp"
#include "riskaware/drscore.hpp"
#include "riskaware/frontier.hpp"
#include "riskaware/rules.hpp"
#include "riskaware/simlab.hpp"

namespace {

using namespace riskaware;
using Clock = std::chrono::steady_clock;

struct Check {
  std::ostringstream detail;
  bool ok = true;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << "  miss: " << what << '\n';
    }
  }
  void near(double got, double want, double tol, const std::string& what) {
    const bool pass = std::abs(got - want) <= tol;
    detail << "  " << (pass ? "ok  " : "MISS") << "  " << what << " = " << got << " (target " << want << " +/- " << tol
           << ")\n";
    ok = ok && pass;
  }
  void at_most(double got, double cap, const std::string& what) {
    const bool pass = got <= cap;
    detail << "  " << (pass ? "ok  " : "MISS") << "  " << what << " = " << got << " (<= " << cap << ")\n";
    ok = ok && pass;
  }
  void at_least(double got, double floor, const std::string& what) {
    const bool pass = got >= floor;
    detail << "  " << (pass ? "ok  " : "MISS") << "  " << what << " = " << got << " (>= " << floor << ")\n";
    ok = ok && pass;
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double weight(const EstimateTable& t, const rules::SelectionReport& r, const std::string& label) {
  return r.allocation()[static_cast<Eigen::Index>(*t.index_of(label))];
}

void table_reproduction(Check& c, const std::string& file, double budget_seconds,
                        const std::function<void(Check&, const EstimateTable&, const rules::SelectionReport&,
                                                 const rules::SelectionReport&)>& targets) {
  const auto t0 = Clock::now();
  const auto table = load_estimates(std::string(RISKAWARE_DATA_DIR) + "/" + file);
  bootstrap::BootstrapConfig cfg;
  cfg.draws = 200000;
  cfg.seed = 7;
  const PolicySpace space = Polytope::simplex(static_cast<Eigen::Index>(table.size()));
  const auto q = bootstrap::quantile(table, space, cfg);
  const auto polece = rules::select_polece(table, space, q, cfg.alpha);
  auto ewm = rules::select_ewm(table, space);
  rules::attach_band(ewm, q.q_hat);
  c.detail << "  q_hat = " << q.q_hat << '\n';
  targets(c, table, polece, ewm);
  c.at_most(seconds_since(t0), budget_seconds, "runtime seconds");
}

void criterion1(Check& c) {
  table_reproduction(c, "adult.csv", 60.0, [](Check& c, const EstimateTable& t, const auto& pol, const auto& ewm) {
    c.near(pol.v_hat, 1.17, 0.01, "PoLeCe value");
    c.near(*pol.band_lcb, 1.04, 0.03, "PoLeCe LCB");
    const std::string ohie = "Oregon Health Insurance Experiment (Provided to Single Adults)";
    const std::string jtpa = "Job Training Partnership Act, Adults";
    c.near(weight(t, pol, ohie), 0.97, 0.03, "weight OHIE");
    c.near(weight(t, pol, jtpa), 0.03, 0.03, "weight JTPA Adults");
    double other = 0.0;
    for (const auto& l : t.labels())
      if (l != ohie && l != jtpa) other = std::max(other, weight(t, pol, l));
    c.at_most(other, 0.01, "largest other weight");
    c.near(ewm.v_hat, 1.39, 1e-9, "EWM value");
    c.near(*ewm.band_lcb, -2.06, 0.05, "EWM LCB");
  });
}

void criterion2(Check& c) {
  table_reproduction(c, "youth.csv", 60.0, [](Check& c, const EstimateTable& t, const auto& pol, const auto& ewm) {
    c.near(pol.v_hat, 1.64, 0.01, "PoLeCe value");
    c.near(*pol.band_lcb, 0.78, 0.03, "PoLeCe LCB");
    c.near(weight(t, pol, "Head Start Impact Study"), 0.52, 0.03, "weight Head Start");
    c.near(weight(t, pol, "Wisconsin Scholar Grant to Low-Income College Students"), 0.48, 0.03, "weight Wisconsin");
    c.near(ewm.v_hat, 1.84, 1e-9, "EWM value");
    c.near(*ewm.band_lcb, 0.51, 0.05, "EWM LCB");
  });
}

void criterion3(Check& c) {
  const auto t0 = Clock::now();
  for (int p : {1, 5, 50}) {
    std::vector<std::string> labels;
    for (int i = 0; i < p; ++i) labels.push_back("p" + std::to_string(i));
    const auto table = EstimateTable::make(labels, Vector::Zero(p), Vector::Ones(p));
    bootstrap::BootstrapConfig cfg;
    cfg.draws = 400000;
    cfg.seed = 11;
    const auto q = bootstrap::quantile_finite(table, cfg);
    c.near(q.q_hat, oracle::max_normal_quantile(0.95, p), 0.02, "q_hat p=" + std::to_string(p));
  }
  c.at_most(seconds_since(t0), 10.0, "runtime seconds");
}

void criterion4(Check& c) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  double worst_root = 0.0, worst_inner = 0.0;
  int root_sign_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int j = 2 + trial % 2;
    const auto inst = oracle::random_conic_instance(rng, j);
    const auto poly = Polytope::make(inst.box.lower, inst.box.upper);
    const auto root = conic::find_root(inst.z, inst.sigma, poly);
    const auto [ratio, arg_r] = oracle::grid_maximize(
        inst.box, [&](const Vector& p) { return p.dot(inst.z) / std::sqrt(p.dot(inst.sigma * p)); });
    if (ratio < 0.0) {
      root_sign_mismatch += root.has_root();
    } else if (!root.has_root()) {
      ++root_sign_mismatch;
    } else {
      worst_root = std::max(worst_root, std::abs(*root.t_star - ratio));
    }
    const auto inner = conic::solve_inner(inst.z, inst.sigma, poly, inst.t);
    const auto [best, arg_i] = oracle::grid_maximize(inst.box, [&](const Vector& p) { return oracle::inner_objective(inst, p, inst.t); });
    worst_inner = std::max(worst_inner, std::abs(inner.objective - best));
  }
  c.at_most(root_sign_mismatch, 0, "root existence disagreements");
  c.at_most(worst_root, 5e-3, "max |t* - ratio oracle|");
  c.at_most(worst_inner, 1e-4, "max |inner objective - grid optimum|");
  c.at_most(seconds_since(t0), 60.0, "runtime seconds");
}

void criterion5(Check& c) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> size(1, 200), small(0, 15);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<oracle::Point> pts(static_cast<std::size_t>(size(rng)));
    for (auto& p : pts) {
      if (trial % 2 == 0) {
        p = {static_cast<double>(small(rng)), static_cast<double>(small(rng))};
      } else {
        p.risk = u(rng);
        p.value = std::sqrt(p.risk) + 0.2 * u(rng);
      }
    }
    std::vector<frontier::FrontierPoint> in;
    for (std::size_t i = 0; i < pts.size(); ++i) in.push_back({pts[i].risk, pts[i].value, i, std::nullopt});
    std::vector<oracle::Point> got;
    for (const auto& p : frontier::frontier_finite(in).points) got.push_back({p.risk, p.value});
    mismatches += got != oracle::brute_force_frontier(pts);
  }
  c.at_most(mismatches, 0, "point sets differing from the brute-force hull (of 500)");
}

simlab::SimDesign make_design(Vector v, Vector s, std::size_t reps) {
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < v.size(); ++i) labels.push_back("p" + std::to_string(i));
  simlab::SimDesign d(EstimateTable::make(labels, std::move(v), std::move(s)));
  d.replications = reps;
  d.bootstrap.draws = 200000;
  d.seed = 17;
  return d;
}

void criterion6(Check& c) {
  const auto t0 = Clock::now();
  Vector v(20), s(20);
  for (int i = 0; i < 20; ++i) {
    v[i] = 1.0 - 0.015 * i;
    s[i] = 0.02 + 0.04 * ((i * 7) % 11);
  }
  const auto r = simlab::run_sim(make_design(v, s, 10000));
  c.at_least(r.coverage, 0.93, "coverage of V(PoLeCe pick) >= LCB");
  c.at_most(seconds_since(t0), 300.0, "runtime seconds");
}

void criterion7(Check& c) {
  const auto r = simlab::run_sim(make_design(Vector{{1.0, 0.99}}, Vector{{0.5, 0.01}}, 10000));
  const auto& ewm = r.rules[0];
  const auto& pol = r.rules[1];
  const bool tail = pol.p95_regret_pct < ewm.p95_regret_pct;
  const bool lcb = pol.avg_lcb_pct > ewm.avg_lcb_pct;
  c.detail << "  " << (tail ? "ok  " : "MISS") << "  p95 regret %: PoLeCe " << pol.p95_regret_pct << " vs EWM "
           << ewm.p95_regret_pct << " (PoLeCe strictly below)\n";
  c.detail << "  " << (lcb ? "ok  " : "MISS") << "  avg LCB %: PoLeCe " << pol.avg_lcb_pct << " vs EWM " << ewm.avg_lcb_pct
           << " (PoLeCe strictly above)\n";
  c.detail << "        avg regret %: PoLeCe " << pol.avg_regret_pct << ", EWM " << ewm.avg_regret_pct << '\n';
  c.ok = tail && lcb;
}

void criterion8(Check& c) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.01, 2.0);

  int rw_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int p = 1 + trial % 40;
    std::vector<std::string> labels;
    Vector v(p), s(p);
    for (int i = 0; i < p; ++i) {
      labels.push_back("m" + std::to_string(i));
      v[i] = std::round(4.0 * n(rng)) / 4.0;  // coarse values create ties
      s[i] = u(rng);
    }
    const auto t = EstimateTable::make(labels, v, s);
    rw_mismatch += rules::select_rw(t, FiniteSpace{t.size()}, 0.0).index() != rules::select_ewm(t, FiniteSpace{t.size()}).index();
  }
  c.at_most(rw_mismatch, 0, "RW(0) vs EWM disagreements (of 1000 menus)");

  int monotone_violations = 0;
  std::vector<double> grid;
  for (int i = 0; i <= 24; ++i) grid.push_back(0.25 * i);
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 2 + trial % 7;
    auto inst = oracle::random_conic_instance(rng, p);
    std::vector<std::string> labels;
    for (int i = 0; i < p; ++i) labels.push_back("a" + std::to_string(i));
    const Vector se = inst.sigma.diagonal().cwiseSqrt();
    const Vector d = se.cwiseInverse();
    const Matrix corr = d.asDiagonal() * inst.sigma * d.asDiagonal();
    const auto t = EstimateTable::make(labels, inst.z, se, corr);
    const auto poly = Polytope::make(inst.box.lower, inst.box.upper);
    double pv = std::numeric_limits<double>::infinity(), ps = pv;
    for (double k : grid) {
      const auto r = rules::select_rw(t, poly, k);
      monotone_violations += r.v_hat > pv + 1e-6 || r.s_hat > ps + 1e-6;
      pv = r.v_hat;
      ps = r.s_hat;
    }
  }
  c.at_most(monotone_violations, 0, "value/risk increases along k (100 polytopes x 25 k)");

  // DR scores on a synthetic trial.
  std::vector<drscore::Unit> units;
  Matrix counts = Matrix::Zero(4, 3);
  std::uniform_int_distribution<std::uint32_t> cell(0, 3), treat(0, 2), cluster(0, 59);
  for (int i = 0; i < 600; ++i) {
    drscore::Unit a{n(rng) + 0.3, treat(rng), cell(rng), 0.5 + u(rng), cluster(rng)};
    a.y += 0.2 * a.t * a.x;
    counts(a.x, a.t) += 1;
    units.push_back(a);
  }
  Matrix prop = counts;
  for (int x = 0; x < 4; ++x) prop.row(x) /= counts.row(x).sum();
  const auto pc = drscore::enumerate_policies(4, 3);
  double worst_rep = 0.0;
  {
    std::vector<drscore::Unit> unweighted = units;
    for (auto& a : unweighted) a.weight = 1.0;
    const auto data = drscore::ScoreDataset::make(unweighted, prop);
    for (std::size_t j = 0; j < pc.size(); ++j) worst_rep = std::max(worst_rep, std::abs(drscore::representer(data, pc, j).mean() - 1.0));
  }
  c.at_most(worst_rep, 1e-9, "max |mean H(pi) - 1| over 81 policies");

  const double a = -1.7, b = 3.2;
  double worst_mean = 0.0, worst_se = 0.0;
  for (auto mode : {drscore::Mode::Levels, drscore::Mode::AddedValue}) {
    auto transformed = units;
    for (auto& x : transformed) x.y = a * x.y + b;
    const auto d0 = drscore::ScoreDataset::make(units, prop);
    const auto d1 = drscore::ScoreDataset::make(transformed, prop);
    const auto t0 = drscore::to_estimate_table(drscore::compute_scores(d0, pc, drscore::fit_regression(d0), mode));
    const auto t1 = drscore::to_estimate_table(drscore::compute_scores(d1, pc, drscore::fit_regression(d1), mode));
    const double shift = mode == drscore::Mode::Levels ? b : 0.0;
    for (Eigen::Index j = 0; j < t0.v_hat().size(); ++j) {
      const double scale = 1.0 + std::abs(t0.v_hat()[j]);
      worst_mean = std::max(worst_mean, std::abs(t1.v_hat()[j] - (a * t0.v_hat()[j] + shift)) / scale);
      worst_se = std::max(worst_se, std::abs(t1.se()[j] - std::abs(a) * t0.se()[j]) / (1.0 + t0.se()[j]));
    }
  }
  c.at_most(worst_mean, 1e-12, "affine equivariance of V_hat (relative)");
  c.at_most(worst_se, 1e-12, "affine equivariance of s_hat (relative)");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"1 adult allocation reproduction", criterion1},
      {"2 youth allocation reproduction", criterion2},
      {"3 quantile oracle (identity correlation)", criterion3},
      {"4 conic oracle equivalence", criterion4},
      {"5 frontier oracle equivalence", criterion5},
      {"6 PoLeCe coverage", criterion6},
      {"7 regret-constant property (two-policy truth)", criterion7},
      {"8 identity and invariance suite", criterion8},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Check c;
    try {
      run(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail << "  exception: " << e.what() << '\n';
    }
    std::cout << (c.ok ? "PASS" : "FAIL") << "  criterion " << name << '\n' << c.detail.str() << std::flush;
    failed += !c.ok;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed\n";
  return failed;
}
