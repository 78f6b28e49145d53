#include <gtest/gtest.h>

#include "fairkit/compare.hpp"

using namespace fairkit;

namespace {

EvaluatedModel model(const std::string& id, double phi, double pi) {
  EvaluatedModel m;
  m.id = id;
  m.metrics.set("dp_diff", phi);
  m.metrics.set("accuracy", pi);
  return m;
}

}  // namespace

TEST(Tradeoff, SpotValues) {
  EXPECT_NEAR(tradeoff_score(0.8, 0.0), 0.8888888889, 1e-4);
  EXPECT_EQ(tradeoff_score(0.7, 1.0), 0.0);
  EXPECT_EQ(tradeoff_score(0.7, -1.0), 0.0);
  EXPECT_NEAR(tradeoff_score(0.875, 0.2), 0.8358, 1e-4);
  EXPECT_EQ(tradeoff_score(0.0, 1.0), 0.0);
}

TEST(Tradeoff, MatchesTheClosedForm) {
  for (double beta : {0.5, 1.0, 2.0}) {
    for (double pi : {0.1, 0.5, 0.9}) {
      for (double phi : {-0.3, 0.0, 0.4}) {
        const double f = 1 - std::abs(phi);
        const double expected = (1 + beta * beta) * f * pi / (beta * beta * f + pi);
        EXPECT_NEAR(tradeoff_score(pi, phi, beta), expected, 1e-15);
      }
    }
  }
}

TEST(Tradeoff, Errors) {
  auto kind = [](auto f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return std::string();
  };
  EXPECT_EQ(kind([] { tradeoff_score(0.5, 0.1, 0.0); }), "BadBeta");
  EXPECT_EQ(kind([] { tradeoff_score(0.5, 0.1, -1.0); }), "BadBeta");
  EXPECT_EQ(kind([] { tradeoff_score(1.5, 0.1); }), "BadInput");
}

TEST(ConstrainedBest, PicksTheBestFeasibleModel) {
  const std::vector<EvaluatedModel> ms{model("a", 0.03, 0.85), model("b", 0.07, 0.90)};
  const auto best = constrained_best(ms, "dp_diff", "accuracy", 0.05);
  ASSERT_TRUE(best.id.has_value());
  EXPECT_EQ(*best.id, "a");
  EXPECT_EQ(best.feasible, (std::vector<std::string>{"a"}));
}

TEST(ConstrainedBest, EmptyFeasibleSet) {
  const std::vector<EvaluatedModel> ms{model("a", 0.03, 0.85), model("b", 0.07, 0.90)};
  const auto best = constrained_best(ms, "dp_diff", "accuracy", 0.01);
  EXPECT_FALSE(best.id.has_value());
  EXPECT_TRUE(best.feasible.empty());
}

TEST(ConstrainedBest, TiesGoToTheSmallerId) {
  const std::vector<EvaluatedModel> ms{model("z", -0.01, 0.8), model("m", 0.02, 0.8)};
  EXPECT_EQ(*constrained_best(ms, "dp_diff", "accuracy", 0.05).id, "m");
}

TEST(ConstrainedBest, MissingMetric) {
  std::vector<EvaluatedModel> ms{model("a", 0.01, 0.8)};
  ms[0].metrics.set("pp_diff", std::nullopt);
  try {
    constrained_best(ms, "eopp_diff", "accuracy", 0.05);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "MissingMetric");
  }
  EXPECT_THROW(constrained_best(ms, "pp_diff", "accuracy", 0.05), Error);
}

TEST(ConstrainedBest, RatioMetricsUseDistanceFromOne) {
  EvaluatedModel a;
  a.id = "a";
  a.metrics.set("dp_ratio", 0.97);
  a.metrics.set("accuracy", 0.8);
  EXPECT_EQ(*constrained_best({a}, "dp_ratio", "accuracy", 0.05).id, "a");
}

TEST(Pareto, Examples) {
  EXPECT_EQ(pareto_frontier({model("x", 0.2, 0.5)}, "dp_diff", "accuracy"), (std::vector<std::string>{"x"}));
  const std::vector<EvaluatedModel> ms{model("c", 0.03, 0.8), model("a", 0.01, 0.7), model("b", 0.02, 0.9)};
  EXPECT_EQ(pareto_frontier(ms, "dp_diff", "accuracy"), (std::vector<std::string>{"a", "b"}));
  const std::vector<EvaluatedModel> dup{model("q", 0.01, 0.7), model("p", -0.01, 0.7)};
  EXPECT_EQ(pareto_frontier(dup, "dp_diff", "accuracy"), (std::vector<std::string>{"p"}));
}

TEST(Compare, ReportAndTable) {
  const std::vector<EvaluatedModel> ms{model("lin", 0.15, 0.84), model("lin_dp", 0.004, 0.82),
                                       model("tree", 0.04, 0.80)};
  const auto rep = compare_models(ms, "dp_diff", "accuracy", 0.05);
  EXPECT_EQ(*rep.winner, "lin_dp");
  EXPECT_EQ(*rep.best_tradeoff, "lin_dp");
  EXPECT_EQ(rep.frontier, (std::vector<std::string>{"lin_dp", "lin"}));
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_FALSE(rep.rows[0].feasible);
  EXPECT_FALSE(rep.rows[2].on_frontier);
  EXPECT_NEAR(*rep.rows[1].tradeoff, tradeoff_score(0.82, 0.004), 1e-15);
  const auto j = to_json(rep);
  EXPECT_EQ(j["winner"], "lin_dp");
  const auto table = to_table(rep);
  EXPECT_NE(table.find("lin_dp"), std::string::npos);
}
