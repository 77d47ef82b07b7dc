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

// riskaware: risk-aware policy selection from estimate tables.
//
//   riskaware select    [opts] estimates.csv        Panel summary, report JSON, LCB table
//   riskaware frontier  [opts] estimates.csv        Efficient decision frontier CSV
//   riskaware quantile  [opts] estimates.csv        Sup-quantile of the studentized errors
//   riskaware scores    [opts] micro.csv prop.csv   Doubly-robust estimate table
//   riskaware simulate  [opts] design.cfg           Regret and LCB statistics
//
// An input path of "-" reads standard input. Failures print a JSON error
// object on stderr and exit with status 2.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "riskaware/bootstrap.hpp"
#include "riskaware/csv.hpp"
#include "riskaware/drscore.hpp"
#include "riskaware/error.hpp"
#include "riskaware/estimates.hpp"
#include "riskaware/frontier.hpp"
#include "riskaware/report_json.hpp"
#include "riskaware/rules.hpp"
#include "riskaware/simlab.hpp"
#include "riskaware/version.hpp"

namespace {

using namespace riskaware;
using json = nlohmann::ordered_json;

struct Common {
  double alpha = 0.05;
  std::size_t draws = 100000;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string space = "finite";
  std::optional<std::string> bounds;
  std::optional<std::string> corr;
  std::optional<std::string> out;

  bootstrap::BootstrapConfig bootstrap() const {
    bootstrap::BootstrapConfig cfg;
    cfg.alpha = alpha;
    cfg.draws = draws;
    cfg.seed = seed;
    cfg.threads = threads;
    return cfg;
  }
};

void add_common(CLI::App* cmd, Common& c, bool with_space) {
  cmd->add_option("--alpha", c.alpha, "Confidence level parameter")->capture_default_str();
  cmd->add_option("--draws", c.draws, "Bootstrap draws B")->capture_default_str();
  cmd->add_option("--seed", c.seed, "RNG seed")->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker threads (0: all cores)");
  cmd->add_option("--out", c.out, "Output file");
  if (with_space) {
    cmd->add_option("--space", c.space, "Policy space")->check(CLI::IsMember({"finite", "simplex"}))->capture_default_str();
    cmd->add_option("--bounds", c.bounds, "Per-program bounds CSV (label,lower,upper); simplex only");
    cmd->add_option("--corr", c.corr, "Correlation matrix CSV");
  }
}

std::string read_input(const std::string& path) {
  if (path == "-") return std::string(std::istreambuf_iterator<char>(std::cin), {});
  return csv::read_text(path);
}

std::string sha256_hex(const std::vector<std::string>& contents) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  require(ctx != nullptr, ErrorCode::IoError, "cannot allocate digest context");
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const auto& c : contents) EVP_DigestUpdate(ctx, c.data(), c.size());
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

struct Repro {
  std::uint64_t seed = 0;
  std::size_t draws = 0;
  double alpha = 0.05;
  std::string input_hash;

  std::vector<std::string> lines() const {
    return {std::string("tool = riskaware ") + kVersion, "seed = " + std::to_string(seed),
            "draws = " + std::to_string(draws), "alpha = " + csv::format(alpha), "input_sha256 = " + input_hash};
  }
  json to_json() const {
    return json{{"tool", std::string("riskaware ") + kVersion},
                {"seed", seed},
                {"draws", draws},
                {"alpha", alpha},
                {"input_sha256", input_hash}};
  }
};

void write_comment_header(std::ostream& out, const Repro& r) {
  for (const auto& l : r.lines()) out << "# " << l << '\n';
}

// Writes to the file (checked) or to stdout when no path is given.
template <class Fn>
void emit(const std::optional<std::string>& path, Fn&& fn) {
  if (!path || *path == "-") {
    fn(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream f(*path);
  require(static_cast<bool>(f), ErrorCode::IoError, "cannot write " + *path);
  fn(f);
  f.close();
  require(!f.fail(), ErrorCode::IoError, "failed writing " + *path);
}

struct Loaded {
  EstimateTable table;
  PolicySpace space;
  Repro repro;
};

Loaded load(const Common& c, const std::string& path) {
  require(!c.bounds || c.space == "simplex", ErrorCode::InvalidArgument, "--bounds requires --space simplex");
  std::vector<std::string> contents{read_input(path)};
  std::istringstream in(contents.front());
  auto table = read_estimates(csv::parse(in), path, c.corr);
  if (c.corr) contents.push_back(csv::read_text(*c.corr));
  PolicySpace space = FiniteSpace{table.size()};
  if (c.space == "simplex") {
    if (c.bounds) {
      contents.push_back(csv::read_text(*c.bounds));
      space = load_bounds(*c.bounds, table);
    } else {
      space = Polytope::simplex(static_cast<Eigen::Index>(table.size()));
    }
  }
  Repro r{c.seed, c.draws, c.alpha, sha256_hex(contents)};
  return {std::move(table), std::move(space), std::move(r)};
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// ---------------------------------------------------------------------------

struct SelectArgs {
  Common common;
  std::string input;
  std::string rule = "all";
  double k = 0.0;
  std::optional<std::string> lcb_out;
};

void print_panels(std::ostream& out, const EstimateTable& table, const std::vector<rules::SelectionReport>& reports,
                  const bootstrap::QuantileResult& q) {
  std::size_t width = 28;
  for (const auto& l : table.labels()) width = std::max(width, l.size() + 2);
  out << "q_hat = " << fixed(q.q_hat) << "  (alpha " << csv::format(reports.empty() ? 0.05 : reports.front().alpha.value_or(0.05))
      << ")\n\n";
  out << "Panel A. Estimated value and lower confidence bound\n";
  out << std::left << std::setw(static_cast<int>(width)) << "";
  for (const auto& r : reports) out << std::right << std::setw(14) << r.rule_name();
  out << '\n' << std::left << std::setw(static_cast<int>(width)) << "Estimated value";
  for (const auto& r : reports) out << std::right << std::setw(14) << fixed(r.v_hat);
  out << '\n' << std::left << std::setw(static_cast<int>(width)) << "LCB";
  for (const auto& r : reports) out << std::right << std::setw(14) << fixed(r.band_lcb.value_or(r.lcb));
  out << "\n\nPanel B. Selected policy\n";
  for (std::size_t j = 0; j < table.size(); ++j) {
    out << std::left << std::setw(static_cast<int>(width)) << table.labels()[j];
    for (const auto& r : reports) {
      out << std::right << std::setw(14) << fixed(report::share(r.weights(table.size())[static_cast<Eigen::Index>(j)]));
    }
    out << '\n';
  }
  for (const auto& w : q.warnings) out << "warning: " << w << '\n';
}

int cmd_select(const SelectArgs& a) {
  const auto [table, space, repro] = load(a.common, a.input);
  const auto cfg = a.common.bootstrap();
  const auto q = bootstrap::quantile(table, space, cfg);

  std::vector<rules::SelectionReport> reports;
  auto with_band = [&](rules::SelectionReport r) {
    rules::attach_band(r, q.q_hat);
    r.alpha = cfg.alpha;
    return r;
  };
  if (a.rule == "all" || a.rule == "ewm") reports.push_back(with_band(rules::select_ewm(table, space)));
  if (a.rule == "rw") reports.push_back(with_band(rules::select_rw(table, space, a.k)));
  if (a.rule == "all" || a.rule == "polece") reports.push_back(rules::select_polece(table, space, q, cfg.alpha));

  print_panels(std::cout, table, reports, q);

  if (a.common.out) {
    json doc = repro.to_json();
    doc["space"] = a.common.space;
    doc["quantile"] = report::quantile_json(q);
    doc["selections"] = json::array();
    for (const auto& r : reports) doc["selections"].push_back(report::selection_json(table, r));
    emit(a.common.out, [&](std::ostream& o) { o << doc.dump(2) << '\n'; });
  }
  if (a.lcb_out) {
    const Vector lcb = rules::lcb_all(table, q.q_hat);
    emit(a.lcb_out, [&](std::ostream& o) {
      write_comment_header(o, repro);
      o << "# q_hat = " << csv::format(q.q_hat) << '\n';
      csv::write_row(o, {"label", "estimate", "se", "lcb"});
      for (std::size_t j = 0; j < table.size(); ++j) {
        const auto i = static_cast<Eigen::Index>(j);
        csv::write_row(o, {table.labels()[j], csv::format(table.v_hat()[i]), csv::format(table.se()[i]), csv::format(lcb[i])});
      }
    });
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct FrontierArgs {
  Common common;
  std::string input;
  std::size_t grid = 200;
};

int cmd_frontier(const FrontierArgs& a) {
  const auto [table, space, repro] = load(a.common, a.input);
  const auto cfg = a.common.bootstrap();
  const auto q = bootstrap::quantile(table, space, cfg);
  const auto ewm = rules::select_ewm(table, space);
  const auto polece = rules::select_polece(table, space, q, cfg.alpha);

  frontier::Frontier f;
  if (std::holds_alternative<Polytope>(space)) {
    f = q.q_hat > 0.0 ? frontier::frontier_polytope(table, std::get<Polytope>(space), frontier::default_k_grid(q.q_hat, a.grid))
                      : frontier::frontier_polytope(table, std::get<Polytope>(space), {0.0});
  } else {
    f = frontier::frontier_finite(table);
  }

  // The frontier point closest to a selection, if it lies on the frontier.
  auto locate = [&](const rules::SelectionReport& r) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < f.points.size(); ++i) {
      const auto& p = f.points[i];
      if (r.finite() && std::holds_alternative<std::size_t>(p.policy) && std::get<std::size_t>(p.policy) == r.index()) return i;
      const double d = std::abs(p.risk - r.s_hat) + std::abs(p.value - r.v_hat);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (r.finite() || best_d > 1e-6 * (1.0 + std::abs(r.v_hat) + r.s_hat)) return std::nullopt;
    return best;
  };
  const auto at_ewm = locate(ewm);
  const auto at_polece = locate(polece);

  emit(a.common.out, [&](std::ostream& o) {
    write_comment_header(o, repro);
    o << "# space = " << a.common.space << '\n';
    o << "# q_hat = " << csv::format(q.q_hat) << '\n';
    csv::write_row(o, {"risk", "value", "k", "weights_json", "marker"});
    for (std::size_t i = 0; i < f.points.size(); ++i) {
      const auto& p = f.points[i];
      const Vector w = std::holds_alternative<std::size_t>(p.policy)
                           ? Allocation::vertex(static_cast<Eigen::Index>(table.size()),
                                                static_cast<Eigen::Index>(std::get<std::size_t>(p.policy)))
                                 .weights()
                           : std::get<Allocation>(p.policy).weights();
      std::string marker;
      if (at_ewm == i) marker = "EWM";
      if (at_polece == i) marker += marker.empty() ? "PoLeCe" : ";PoLeCe";
      csv::write_row(o, {csv::format(p.risk), csv::format(p.value), p.k ? csv::format(*p.k) : std::string(),
                         report::weights_json(table, w)["weights"].dump(), marker});
    }
  });
  return 0;
}

// ---------------------------------------------------------------------------

struct QuantileArgs {
  Common common;
  std::string input;
};

int cmd_quantile(const QuantileArgs& a) {
  const auto [table, space, repro] = load(a.common, a.input);
  const auto q = bootstrap::quantile(table, space, a.common.bootstrap());
  std::cout << csv::format(q.q_hat) << '\n';
  for (const auto& w : q.warnings) std::cerr << "warning: " << w << '\n';
  if (a.common.out) {
    json doc = repro.to_json();
    doc["space"] = a.common.space;
    doc["quantile"] = report::quantile_json(q);
    emit(a.common.out, [&](std::ostream& o) { o << doc.dump(2) << '\n'; });
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct ScoresArgs {
  Common common;
  std::string micro;
  std::string propensity;
  std::size_t cells = 0;
  std::size_t treatments = 0;
  std::string mode = "levels";
  std::uint32_t control = 0;
  std::size_t folds = 2;
  std::size_t cap = 1'000'000;
};

int cmd_scores(const ScoresArgs& a) {
  const auto data = drscore::load_dataset(a.micro, a.propensity, a.cells, a.treatments);
  const auto policies = drscore::enumerate_policies(a.cells, a.treatments, a.cap);
  const auto g = drscore::fit_regression(data, a.folds);
  const auto mode = a.mode == "levels" ? drscore::Mode::Levels : drscore::Mode::AddedValue;
  const auto scores = drscore::compute_scores(data, policies, g, mode, a.control);
  const auto table = drscore::to_estimate_table(scores);
  const Repro repro{a.common.seed, a.common.draws, a.common.alpha,
                    sha256_hex({csv::read_text(a.micro), csv::read_text(a.propensity)})};
  auto header = repro.lines();
  header.push_back("folds = " + std::to_string(a.folds));
  for (const auto& f : g.flags) header.push_back("note: " + f);
  emit(a.common.out, [&](std::ostream& o) { write_estimates(o, table, header); });
  for (const auto& f : g.flags) std::cerr << "warning: " << f << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string design;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replications;
  std::optional<std::size_t> draws;
  std::optional<unsigned> threads;
  std::optional<double> bound_beta;
  std::vector<double> bound_k;
};

int cmd_simulate(const SimulateArgs& a) {
  auto d = simlab::load_design(a.design);
  if (a.seed) d.seed = d.bootstrap.seed = *a.seed;
  if (a.replications) d.replications = *a.replications;
  if (a.draws) d.bootstrap.draws = *a.draws;
  if (a.threads) d.threads = *a.threads;
  const auto res = simlab::run_sim(d);
  std::optional<simlab::BoundCheck> bound;
  if (a.bound_beta) {
    bound = simlab::regret_bound_check(d, *a.bound_beta, a.bound_k.empty() ? std::vector<double>{0.0, res.q_hat} : a.bound_k);
  }

  std::string truth_text;
  {
    std::ifstream cfg(a.design);
    truth_text = std::string(std::istreambuf_iterator<char>(cfg), {});
  }
  std::vector<std::string> contents{truth_text};
  {
    std::ostringstream t;
    write_estimates(t, d.truth);
    contents.push_back(t.str());
  }
  const Repro repro{d.seed, d.bootstrap.draws, d.alpha, sha256_hex(contents)};

  emit(a.out, [&](std::ostream& o) {
    write_comment_header(o, repro);
    o << "# replications = " << res.replications << '\n';
    o << "# v_max = " << csv::format(res.v_max) << '\n';
    o << "# q_hat = " << csv::format(res.q_hat) << '\n';
    o << "# sigma_bar = " << csv::format(res.sigma_bar) << '\n';
    o << "# sigma_low_best = " << csv::format(res.sigma_low_best) << '\n';
    o << "# polece_coverage = " << csv::format(res.coverage) << '\n';
    if (bound) {
      o << "# bound_beta = " << csv::format(bound->beta) << '\n';
      o << "# bound_q_best = " << csv::format(bound->q_best) << '\n';
      o << "# bound_q_all = " << csv::format(bound->q_all) << '\n';
      for (std::size_t i = 0; i < bound->ks.size(); ++i) {
        o << "# bound_violation k=" << csv::format(bound->ks[i]) << " rhs=" << csv::format(bound->bound[i])
          << " frequency=" << csv::format(bound->violation_frequency[i]) << '\n';
      }
    }
    simlab::write_result(o, res);
  });
  return 0;
}

std::string public_code(ErrorCode c) {
  if (c == ErrorCode::NegativeSE || c == ErrorCode::MissingSE) return "NegativeOrMissingSE";
  return std::string(code_name(c));
}

int report_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-aware policy selection with uniform confidence bounds"};
  app.set_version_flag("--version", std::string("riskaware ") + kVersion);
  app.require_subcommand(1);

  SelectArgs sel;
  auto* c_sel = app.add_subcommand("select", "Select a policy under EWM, RW(k) and PoLeCe");
  add_common(c_sel, sel.common, true);
  c_sel->add_option("input", sel.input, "Estimates CSV")->required();
  c_sel->add_option("--rule", sel.rule, "Rule to report")->check(CLI::IsMember({"all", "ewm", "rw", "polece"}))->capture_default_str();
  c_sel->add_option("--k", sel.k, "Risk penalty for --rule rw")->check(CLI::NonNegativeNumber);
  c_sel->add_option("--lcb-out", sel.lcb_out, "Per-policy LCB CSV");

  FrontierArgs fr;
  auto* c_fr = app.add_subcommand("frontier", "Efficient decision frontier");
  add_common(c_fr, fr.common, true);
  c_fr->add_option("input", fr.input, "Estimates CSV")->required();
  c_fr->add_option("--grid", fr.grid, "Penalty grid size (simplex)")->capture_default_str();

  QuantileArgs qu;
  auto* c_qu = app.add_subcommand("quantile", "Bootstrap sup-quantile");
  add_common(c_qu, qu.common, true);
  c_qu->add_option("input", qu.input, "Estimates CSV")->required();

  ScoresArgs sc;
  auto* c_sc = app.add_subcommand("scores", "Doubly-robust estimate table from micro-data");
  add_common(c_sc, sc.common, false);
  c_sc->add_option("micro", sc.micro, "Micro-data CSV (y,t,x[,weight][,cluster])")->required();
  c_sc->add_option("propensity", sc.propensity, "Propensity CSV (x,t,p)")->required();
  c_sc->add_option("--cells", sc.cells, "Number of covariate cells")->required();
  c_sc->add_option("--treatments", sc.treatments, "Number of treatments")->required();
  c_sc->add_option("--mode", sc.mode, "Score mode")->check(CLI::IsMember({"levels", "added"}))->capture_default_str();
  c_sc->add_option("--control", sc.control, "Control treatment id (added mode)")->capture_default_str();
  c_sc->add_option("--folds", sc.folds, "Cross-fitting folds")->capture_default_str();
  c_sc->add_option("--cap", sc.cap, "Maximum policy count")->capture_default_str();

  SimulateArgs si;
  auto* c_si = app.add_subcommand("simulate", "Regret and LCB statistics for a simulation design");
  c_si->add_option("design", si.design, "Design file (key = value)")->required();
  c_si->add_option("--out", si.out, "Result CSV");
  c_si->add_option("--seed", si.seed, "Override the design seed");
  c_si->add_option("--replications", si.replications, "Override the replication count");
  c_si->add_option("--draws", si.draws, "Override the bootstrap draws");
  c_si->add_option("--threads", si.threads, "Worker threads (0: all cores)");
  c_si->add_option("--bound-beta", si.bound_beta, "Also check the regret bound at this beta");
  c_si->add_option("--bound-k", si.bound_k, "Penalties for the regret bound check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("UsageError", e.what());
  }

  try {
    if (*c_sel) return cmd_select(sel);
    if (*c_fr) return cmd_frontier(fr);
    if (*c_qu) return cmd_quantile(qu);
    if (*c_sc) return cmd_scores(sc);
    if (*c_si) return cmd_simulate(si);
  } catch (const Error& e) {
    return report_error(public_code(e.code()), e.what());
  } catch (const std::exception& e) {
    return report_error("InternalError", e.what());
  }
  return 2;
}
