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

#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "riskaware/frontier.hpp"

namespace {

using namespace riskaware;

std::vector<oracle::Point> run(const std::vector<oracle::Point>& pts) {
  std::vector<frontier::FrontierPoint> in;
  for (std::size_t i = 0; i < pts.size(); ++i) in.push_back({pts[i].risk, pts[i].value, i, std::nullopt});
  std::vector<oracle::Point> out;
  for (const auto& p : frontier::frontier_finite(in).points) out.push_back({p.risk, p.value});
  return out;
}

TEST(Frontier, DominatedSecondPoint) {
  EXPECT_EQ(run({{1, 5}, {2, 3}}), (std::vector<oracle::Point>{{1, 5}}));
}

TEST(Frontier, ConvexKinkPopped) {
  EXPECT_EQ(run({{1, 1}, {2, 2}, {3, 4}}), (std::vector<oracle::Point>{{1, 1}, {3, 4}}));
}

TEST(Frontier, CollinearPointsRetained) {
  EXPECT_EQ(run({{0, 0}, {1, 1}, {2, 2}}), (std::vector<oracle::Point>{{0, 0}, {1, 1}, {2, 2}}));
}

TEST(Frontier, DuplicatesAndEqualRisk) {
  EXPECT_EQ(run({{1, 2}, {1, 2}, {1, 1}, {2, 3}}), (std::vector<oracle::Point>{{1, 2}, {2, 3}}));
}

TEST(Frontier, AdultMenuEndsAtEwmVertex) {
  const auto t = load_estimates(RISKAWARE_DATA_DIR "/adult.csv");
  const auto f = frontier::frontier_finite(t);
  EXPECT_EQ(std::get<std::size_t>(f.points.back().policy), 0u);  // Holistic Wrap-around, 1.39 (1.11)
  EXPECT_EQ(f.points.front().risk, 0.02);
}

TEST(Frontier, MatchesBruteForceOnIntegerGrid) {
  // Small integer coordinates: many duplicates, ties and collinear triples.
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> c(0, 12);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<oracle::Point> pts(1 + trial % 60);
    for (auto& p : pts) p = {static_cast<double>(c(rng)), static_cast<double>(c(rng) - 4)};
    EXPECT_EQ(run(pts), oracle::brute_force_frontier(pts)) << "trial " << trial;
  }
}

TEST(Frontier, MatchesBruteForceOnContinuousPoints) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<oracle::Point> pts(1 + trial * 2);
    for (auto& p : pts) {
      p.risk = u(rng);
      p.value = p.risk + 0.3 * n(rng);
    }
    EXPECT_EQ(run(pts), oracle::brute_force_frontier(pts));
  }
}

TEST(Frontier, InvariantsIdempotenceAndPermutation) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<oracle::Point> pts(50);
    for (auto& p : pts) p = {u(rng), std::sqrt(u(rng)) + u(rng)};
    const auto f = run(pts);
    for (std::size_t i = 1; i < f.size(); ++i) {
      EXPECT_LT(f[i - 1].risk, f[i].risk);
      EXPECT_LE(f[i - 1].value, f[i].value);
    }
    for (std::size_t i = 2; i < f.size(); ++i) {
      EXPECT_LE((f[i].value - f[i - 1].value) * (f[i - 1].risk - f[i - 2].risk),
                (f[i - 1].value - f[i - 2].value) * (f[i].risk - f[i - 1].risk));
    }
    EXPECT_EQ(run(f), f);
    auto shuffled = pts;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(run(shuffled), f);

    std::vector<frontier::FrontierPoint> fp;
    for (const auto& p : f) fp.push_back({p.risk, p.value, std::size_t{0}, std::nullopt});
    const frontier::Frontier ff{fp};
    for (const auto& p : pts) {
      const auto env = frontier::envelope(ff, p.risk);
      if (env) {
        EXPECT_LE(p.value, *env + 1e-12);
      }
    }
  }
}

TEST(Frontier, EmptyInputRejected) {
  EXPECT_THROW(frontier::frontier_finite(std::vector<frontier::FrontierPoint>{}), Error);
}

TEST(KGrid, ShapeAndEndpoints) {
  const auto g = frontier::default_k_grid(3.0);
  EXPECT_EQ(g.back(), 0.0);
  EXPECT_NEAR(g.front(), 15.0, 1e-12);
  EXPECT_TRUE(std::find(g.begin(), g.end(), 3.0) != g.end());
  EXPECT_TRUE(std::is_sorted(g.rbegin(), g.rend()));
  EXPECT_EQ(g.size(), 202u);
}

TEST(FrontierPolytope, SingleZeroIsEwm) {
  const auto t = load_estimates(RISKAWARE_DATA_DIR "/adult.csv");
  const auto f = frontier::frontier_polytope(t, Polytope::simplex(8), {0.0});
  ASSERT_EQ(f.points.size(), 1u);
  EXPECT_EQ(f.points[0].value, 1.39);
}

TEST(FrontierPolytope, TwoAssetEndpoints) {
  // v1 > v2 and s1 > s2 with independent errors: the left end approaches the
  // minimum-variance mix s2^2 / (s1^2 + s2^2), the right end is vertex 1.
  const double s1 = 0.6, s2 = 0.2;
  const auto t = EstimateTable::make({"a", "b"}, Vector{{1.0, 0.5}}, Vector{{s1, s2}});
  std::vector<double> grid;
  for (int i = 0; i <= 400; ++i) grid.push_back(i * 0.5);
  const auto f = frontier::frontier_polytope(t, Polytope::simplex(2), grid);
  const auto& left = std::get<Allocation>(f.points.front().policy);
  EXPECT_NEAR(left[0], s2 * s2 / (s1 * s1 + s2 * s2), 5e-3);
  EXPECT_NEAR(std::get<Allocation>(f.points.back().policy)[0], 1.0, 1e-12);
  for (std::size_t i = 1; i < f.points.size(); ++i) EXPECT_LT(f.points[i - 1].risk, f.points[i].risk);
}

TEST(FrontierPolytope, ContainsPoLeCeAllocation) {
  const auto t = load_estimates(RISKAWARE_DATA_DIR "/adult.csv");
  const double q = 3.18;
  const auto target = rules::select_rw(t, Polytope::simplex(8), q);
  const auto f = frontier::frontier_polytope(t, Polytope::simplex(8), frontier::default_k_grid(q, 60));
  double best = 1.0;
  for (const auto& p : f.points) best = std::min(best, (std::get<Allocation>(p.policy).weights() - target.allocation().weights()).norm());
  EXPECT_LT(best, 1e-4);
}

}  // namespace
