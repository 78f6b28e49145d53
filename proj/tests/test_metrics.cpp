#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fairkit/fftree.hpp"
#include "fairkit/metrics.hpp"
#include "fairkit/random.hpp"
#include "test_util.hpp"

using namespace fairkit;

namespace {

// Rows of (y, yhat) pairs laid out per group.
struct Rows {
  std::vector<int> y, yhat, s;
  void add(int group, int yy, int yh, int count) {
    for (int i = 0; i < count; ++i) {
      y.push_back(yy);
      yhat.push_back(yh);
      s.push_back(group);
    }
  }
};

FeatureMatrix matrix(std::vector<std::vector<double>> rows) {
  FeatureMatrix m;
  for (std::size_t c = 0; c < rows.front().size(); ++c) m.names.push_back("x" + std::to_string(c));
  m.rows = rows.size();
  for (const auto& r : rows) m.data.insert(m.data.end(), r.begin(), r.end());
  return m;
}

}  // namespace

TEST(GroupConfusion, PerfectPredictionHasNoErrors) {
  const std::vector<int> y{1, 0, 1, 1, 0}, s{0, 0, 1, 1, 1};
  const auto gc = group_confusion(y, y, s);
  ASSERT_EQ(gc.size(), 2u);
  for (const auto& c : gc.cells) {
    EXPECT_EQ(c.fp, 0);
    EXPECT_EQ(c.fn, 0);
  }
}

TEST(GroupConfusion, SingleGroupAndDoubledWeights) {
  const std::vector<int> y{1, 0, 1, 0}, yh{1, 1, 0, 0}, s{3, 3, 3, 3};
  const auto gc = group_confusion(y, yh, s);
  ASSERT_EQ(gc.size(), 1u);
  const std::vector<double> w(4, 2.0);
  const auto g2 = group_confusion(y, yh, s, w);
  EXPECT_EQ(g2.cells[0].tp, 2 * gc.cells[0].tp);
  EXPECT_EQ(g2.cells[0].fp, 2 * gc.cells[0].fp);
  EXPECT_EQ(g2.cells[0].tn, 2 * gc.cells[0].tn);
  EXPECT_EQ(g2.cells[0].fn, 2 * gc.cells[0].fn);
}

TEST(GroupConfusion, LengthMismatch) {
  const std::vector<int> y{1, 0}, yh{1}, s{0, 1};
  try {
    group_confusion(y, yh, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "LengthMismatch");
  }
}

TEST(GapMetrics, DemographicParityExample) {
  Rows r;
  r.add(0, 1, 1, 8);
  r.add(0, 0, 0, 2);
  r.add(1, 1, 1, 6);
  r.add(1, 0, 0, 4);
  const auto g = group_metric_difference(GapKind::DP, group_confusion(r.y, r.yhat, r.s));
  EXPECT_TRUE(g.signed_binary);
  EXPECT_NEAR(*g.value, 0.2, 1e-15);
}

TEST(GapMetrics, EqualOpportunityExample) {
  Rows r;
  r.add(0, 1, 1, 4);
  r.add(0, 1, 0, 1);
  r.add(1, 1, 1, 3);
  r.add(1, 1, 0, 3);
  const auto g = group_metric_difference(GapKind::EOPP, group_confusion(r.y, r.yhat, r.s));
  EXPECT_NEAR(*g.value, 0.2 - 0.5, 1e-15);
  EXPECT_NEAR(std::abs(*g.value), 0.3, 1e-15);
}

TEST(GapMetrics, SwappingGroupsNegatesSignedGap) {
  Rows r;
  r.add(0, 1, 1, 8);
  r.add(0, 0, 0, 2);
  r.add(1, 1, 1, 6);
  r.add(1, 0, 0, 4);
  std::vector<int> swapped;
  for (int v : r.s) swapped.push_back(1 - v);
  for (auto k : {GapKind::DP, GapKind::ACC, GapKind::EOPP}) {
    const auto a = group_metric_difference(k, group_confusion(r.y, r.yhat, r.s));
    const auto b = group_metric_difference(k, group_confusion(r.y, r.yhat, swapped));
    if (a.value) {
      EXPECT_DOUBLE_EQ(*a.value, -*b.value);
    }
  }
}

TEST(GapMetrics, UndefinedRateIsFlaggedNotZeroed) {
  Rows r;
  r.add(0, 1, 1, 3);
  r.add(1, 0, 0, 3);
  const auto g = group_metric_difference(GapKind::EOPP, group_confusion(r.y, r.yhat, r.s));
  EXPECT_FALSE(g.value.has_value());
  ASSERT_EQ(g.flags.size(), 1u);
  EXPECT_NE(g.flags[0].find("UndefinedRate(1"), std::string::npos);
}

TEST(GapMetrics, MulticlassTakesMaxPairwise) {
  Rows r;
  r.add(0, 1, 1, 9);
  r.add(0, 0, 0, 1);
  r.add(1, 1, 1, 5);
  r.add(1, 0, 0, 5);
  r.add(2, 1, 1, 2);
  r.add(2, 0, 0, 8);
  const auto g = group_metric_difference(GapKind::DP, group_confusion(r.y, r.yhat, r.s));
  EXPECT_FALSE(g.signed_binary);
  EXPECT_NEAR(*g.value, 0.7, 1e-12);
}

TEST(GapMetrics, ConstantScalingOfWeightsChangesNothing) {
  Rng rng(17);
  std::bernoulli_distribution coin(0.5);
  std::vector<int> y, yh, s;
  for (int i = 0; i < 300; ++i) {
    y.push_back(coin(rng));
    yh.push_back(coin(rng));
    s.push_back(coin(rng));
  }
  const std::vector<double> w(300, 3.5);
  for (auto k : {GapKind::DP, GapKind::EOPP, GapKind::PE, GapKind::EODDS, GapKind::PP, GapKind::SUFF_NEG,
                 GapKind::ACC}) {
    const auto a = group_metric_difference(k, group_confusion(y, yh, s));
    const auto b = group_metric_difference(k, group_confusion(y, yh, s, w));
    EXPECT_NEAR(*a.value, *b.value, 1e-12) << to_string(k);
  }
}

TEST(Cdp, ConstantStratumEqualsUnconditional) {
  Rows r;
  r.add(0, 1, 1, 8);
  r.add(0, 0, 0, 2);
  r.add(1, 1, 1, 6);
  r.add(1, 0, 0, 4);
  const std::vector<int> st(r.s.size(), 0);
  const auto c = cdp_difference(r.yhat, r.s, st);
  EXPECT_NEAR(*c.mean, 0.2, 1e-15);
  EXPECT_NEAR(*c.max, 0.2, 1e-15);
}

TEST(Cdp, OpposingStrataAverageAbsoluteGaps) {
  std::vector<int> yh, s, st;
  auto add = [&](int stratum, int group, int pos, int neg) {
    for (int i = 0; i < pos; ++i) {
      yh.push_back(1);
      s.push_back(group);
      st.push_back(stratum);
    }
    for (int i = 0; i < neg; ++i) {
      yh.push_back(0);
      s.push_back(group);
      st.push_back(stratum);
    }
  };
  add(0, 0, 6, 4);
  add(0, 1, 4, 6);
  add(1, 0, 4, 6);
  add(1, 1, 6, 4);
  const auto c = cdp_difference(yh, s, st);
  EXPECT_NEAR(*c.mean, 0.2, 1e-15);
  EXPECT_NEAR(*c.max, 0.2, 1e-15);
  ASSERT_EQ(c.table.size(), 2u);
  EXPECT_NEAR(*c.table[0].gap, 0.2, 1e-15);
  EXPECT_NEAR(*c.table[1].gap, 0.2, 1e-15);
}

TEST(Cdp, ConditioningOnThePredictionGivesZero) {
  Rng rng(3);
  std::bernoulli_distribution coin(0.4);
  std::vector<int> yh, s;
  for (int i = 0; i < 200; ++i) {
    yh.push_back(coin(rng));
    s.push_back(coin(rng));
  }
  const auto c = cdp_difference(yh, s, yh);
  EXPECT_EQ(*c.mean, 0.0);
  EXPECT_EQ(*c.max, 0.0);
}

TEST(Consistency, ConstantPredictionsAreFullyConsistent) {
  const auto x = matrix({{0, 1}, {2, 3}, {4, 1}, {1, 1}, {5, 5}, {3, 2}, {7, 1}});
  const std::vector<int> yh(7, 1);
  EXPECT_DOUBLE_EQ(consistency(x, yh, 3), 1.0);
}

TEST(Consistency, MutualNearestNeighboursWithOppositeLabels) {
  const auto x = matrix({{0.0}, {0.1}});
  const std::vector<int> yh{0, 1};
  EXPECT_DOUBLE_EQ(consistency(x, yh, 1), 0.0);
}

TEST(Consistency, RandomLabelsMatchTheIndependenceOracle) {
  // With labels independent of X, E|yhat_i - mean_k| follows from the binomial
  // law of neighbour labels; the 1 - 2p(1-p) shortcut is the k = 1 limit and
  // is within 0.05 for k = 5 at p = 0.3.
  Rng rng(29);
  std::normal_distribution<double> z;
  std::bernoulli_distribution coin(0.3);
  std::vector<std::vector<double>> rows;
  std::vector<int> yh;
  for (int i = 0; i < 1000; ++i) {
    rows.push_back({z(rng), z(rng), z(rng)});
    yh.push_back(coin(rng));
  }
  const double p = 0.3;
  const int k = 5;
  double expected_gap = 0;
  for (int m = 0; m <= k; ++m) {
    const double pm = std::tgamma(k + 1) / (std::tgamma(m + 1) * std::tgamma(k - m + 1)) * std::pow(p, m) *
                      std::pow(1 - p, k - m);
    const double frac = static_cast<double>(m) / k;
    expected_gap += pm * (p * (1 - frac) + (1 - p) * frac);
  }
  const double c = consistency(standardize(matrix(rows)), yh, k);
  EXPECT_NEAR(c, 1 - expected_gap, 0.03);
  EXPECT_NEAR(c, 1 - 2 * p * (1 - p), 0.05);
}

TEST(Consistency, TooFewRows) {
  const auto x = matrix({{0.0}, {1.0}});
  const std::vector<int> yh{0, 1};
  try {
    consistency(x, yh, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "TooFewRows");
  }
}

TEST(SimilarityDisparity, Examples) {
  const std::vector<int> s{1, 0};
  EXPECT_DOUBLE_EQ(similarity_disparity(matrix({{1.0}, {1.0}}), std::vector<int>{1, 1}, s), 0.0);
  EXPECT_DOUBLE_EQ(similarity_disparity(matrix({{1.0}, {1.0}}), std::vector<int>{1, 0}, s), 1.0);
  const double near = similarity_disparity(matrix({{1.0}, {1.5}}), std::vector<int>{1, 0}, s);
  const double far = similarity_disparity(matrix({{1.0}, {3.0}}), std::vector<int>{1, 0}, s);
  EXPECT_NEAR(near, std::exp(-0.5), 1e-15);
  EXPECT_LT(far, near);
  try {
    similarity_disparity(matrix({{1.0}, {2.0}}), std::vector<int>{1, 0}, std::vector<int>{0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "EmptyGroup");
  }
}

TEST(ScoreBalance, Examples) {
  const std::vector<int> y{1, 1, 1, 1, 0, 0}, s{0, 0, 1, 1, 0, 1};
  const std::vector<double> constant(6, 0.4);
  EXPECT_EQ(*score_balance(constant, y, s, 1).gap, 0.0);
  const std::vector<double> sc{0.6, 0.8, 0.5, 0.5, 0.1, 0.2};
  const auto pos = score_balance(sc, y, s, 1);
  EXPECT_NEAR(*pos.values[0], 0.7, 1e-15);
  EXPECT_NEAR(*pos.gap, 0.2, 1e-15);
  std::vector<double> perfect(y.begin(), y.end());
  EXPECT_EQ(*score_balance(perfect, y, s, 1).gap, 0.0);
  EXPECT_EQ(*score_balance(perfect, y, s, 0).gap, 0.0);
}

TEST(ScoreBalance, MissingClassIsFlagged) {
  const std::vector<int> y{1, 1, 0}, s{0, 0, 1};
  const std::vector<double> sc{0.5, 0.5, 0.5};
  const auto b = score_balance(sc, y, s, 1);
  EXPECT_FALSE(b.values[1].has_value());
  EXPECT_FALSE(b.gap.has_value());
  EXPECT_EQ(b.flags.size(), 1u);
}

TEST(Calibration, PerfectScoresAreCalibrated) {
  const std::vector<int> y{1, 0, 1, 0, 1}, s{0, 0, 1, 1, 1};
  std::vector<double> sc(y.begin(), y.end());
  const auto c = calibration_within_groups(sc, y, s, 10);
  EXPECT_EQ(*c.within_gap[0], 0.0);
  EXPECT_EQ(*c.within_gap[1], 0.0);
  EXPECT_EQ(*c.cross_group_gap, 0.0);
}

TEST(Calibration, ConstantScoreAgainstBaseRates) {
  std::vector<int> y, s;
  for (int i = 0; i < 10; ++i) {
    y.push_back(i < 9 ? 1 : 0);
    s.push_back(0);
  }
  for (int i = 0; i < 10; ++i) {
    y.push_back(i < 5 ? 1 : 0);
    s.push_back(1);
  }
  const std::vector<double> sc(20, 0.7);
  const auto c = calibration_within_groups(sc, y, s, 10);
  EXPECT_NEAR(*c.within_gap[0], 0.2, 1e-12);
  EXPECT_NEAR(*c.within_gap[1], 0.2, 1e-12);
  EXPECT_NEAR(*c.cross_group_gap, 0.4, 1e-12);

  std::vector<int> y7;
  for (int g = 0; g < 2; ++g) {
    for (int i = 0; i < 10; ++i) y7.push_back(i < 7 ? 1 : 0);
  }
  const auto c7 = calibration_within_groups(sc, y7, s, 10);
  EXPECT_NEAR(*c7.within_gap[0], 0.0, 1e-12);
  EXPECT_NEAR(*c7.cross_group_gap, 0.0, 1e-12);
}

TEST(Calibration, BinsPartitionTheUnitInterval) {
  const std::vector<int> y{1, 0}, s{0, 0};
  const std::vector<double> sc{1.0, 1.4};
  const auto c = calibration_within_groups(sc, y, s, 4);
  EXPECT_EQ(c.clamped, 1u);
  ASSERT_EQ(c.bins[0].size(), 4u);
  EXPECT_EQ(c.bins[0].front().lo, 0.0);
  EXPECT_EQ(c.bins[0].back().hi, 1.0);
  EXPECT_EQ(c.bins[0].back().weight, 2.0);
  EXPECT_THROW(calibration_within_groups(sc, y, s, 1), Error);
}

TEST(Auc, Examples) {
  const std::vector<int> y{0, 1, 0, 1, 1, 0}, s{0, 0, 0, 1, 1, 1};
  std::vector<double> perfect(y.begin(), y.end());
  const auto g = auc_by_group(perfect, y, s);
  EXPECT_EQ(*g.values[0], 1.0);
  EXPECT_EQ(*g.values[1], 1.0);
  std::vector<double> anti;
  for (int v : y) anti.push_back(1.0 - v);
  EXPECT_EQ(*auc(anti, y), 0.0);
  const std::vector<double> tied(6, 0.5);
  EXPECT_EQ(*auc(tied, y), 0.5);
  const std::vector<int> all_pos{1, 1};
  EXPECT_FALSE(auc(std::vector<double>{0.1, 0.2}, all_pos).has_value());
}

TEST(Auc, MatchesPairCountingOracle) {
  Rng rng(41);
  std::uniform_int_distribution<int> level(0, 9);
  std::bernoulli_distribution coin(0.4);
  std::vector<double> sc;
  std::vector<int> y;
  for (int i = 0; i < 150; ++i) {
    sc.push_back(level(rng) / 10.0);
    y.push_back(coin(rng));
  }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < sc.size(); ++i) {
    for (std::size_t j = 0; j < sc.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      den += 1;
      num += sc[i] > sc[j] ? 1.0 : (sc[i] == sc[j] ? 0.5 : 0.0);
    }
  }
  EXPECT_NEAR(*auc(sc, y), num / den, 1e-12);
}

TEST(Auc, RandomScoresNearOneHalf) {
  Rng rng(43);
  std::uniform_real_distribution<double> u;
  std::bernoulli_distribution coin(0.5);
  std::vector<double> sc;
  std::vector<int> y, s;
  for (int i = 0; i < 4000; ++i) {
    sc.push_back(u(rng));
    y.push_back(coin(rng));
    s.push_back(i % 2);
  }
  const auto g = auc_by_group(sc, y, s);
  EXPECT_NEAR(*g.values[0], 0.5, 0.05);
  EXPECT_NEAR(*g.values[1], 0.5, 0.05);
}

TEST(FlipSensitivity, Examples) {
  std::vector<double> x;
  std::vector<int> s, y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(i % 7);
    s.push_back(i % 2);
    y.push_back(i % 3 == 0);
  }
  const auto ds = fktest::make_dataset({{"x", x}}, s, y);
  Predictor ignores{"ignores", {"x", "S"}, [](std::span<const double> v) { return v[0] > 3 ? 0.9 : 0.1; }, {}};
  Predictor copies{"copies", {"x", "S"}, [](std::span<const double> v) { return v[1]; }, {}};
  EXPECT_EQ(flip_sensitivity(ignores, ds, "S", 0.5), 0.0);
  EXPECT_EQ(flip_sensitivity(copies, ds, "S", 0.5), 1.0);
}

TEST(FlipSensitivity, FairTreeNeverUsesTheSensitiveColumn) {
  Rng rng(7);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> f1, f2;
  std::vector<int> s, y;
  for (int i = 0; i < 400; ++i) {
    s.push_back(coin(rng));
    f1.push_back(coin(rng));
    f2.push_back(s.back() == 1 ? coin(rng) : 1.0);
    y.push_back(coin(rng) ? static_cast<int>(f1.back()) : s.back());
  }
  const auto ds = fktest::make_dataset({{"f1", f1}, {"f2", f2}}, s, y).with_role("S", Role::sensitive, true);
  const auto m = fit(ds, {parse_constraint("DP:0.1:S")}, GrowthConfig{});
  EXPECT_EQ(flip_sensitivity(as_predictor(m), ds, "S", 0.5), 0.0);
}

TEST(FlipSensitivity, NonBinarySensitive) {
  const auto ds = fktest::make_dataset({{"x", {1, 2, 3}}}, {0, 1, 2}, {0, 1, 0}, {}, "S", 3);
  Predictor p{"p", {"x"}, [](std::span<const double>) { return 0.5; }, {}};
  try {
    flip_sensitivity(p, ds, "S", 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "NonBinarySensitive");
  }
}

TEST(EightyPercent, Examples) {
  auto with_pprs = [](double a, double b) {
    Rows r;
    r.add(0, 1, 1, static_cast<int>(a * 10));
    r.add(0, 0, 0, 10 - static_cast<int>(a * 10));
    r.add(1, 1, 1, static_cast<int>(b * 10));
    r.add(1, 0, 0, 10 - static_cast<int>(b * 10));
    return eighty_percent_check(group_confusion(r.y, r.yhat, r.s));
  };
  const auto e = with_pprs(0.8, 0.6);
  EXPECT_NEAR(*e.ratio, 0.75, 1e-15);
  EXPECT_FALSE(e.pass);
  const auto eq = with_pprs(0.5, 0.5);
  EXPECT_EQ(*eq.ratio, 1.0);
  EXPECT_TRUE(eq.pass);
  const auto zero = with_pprs(0.0, 0.5);
  EXPECT_FALSE(zero.ratio.has_value());
  EXPECT_EQ(zero.flags.size(), 1u);
}

TEST(Incompatibility, EqualBaseRatesAreSatisfiable) {
  Rows r;
  r.add(0, 1, 1, 3);
  r.add(0, 0, 0, 2);
  r.add(1, 1, 1, 6);
  r.add(1, 0, 0, 4);
  const auto rep = incompatibility_report(r.y, r.s);
  ASSERT_EQ(rep.pairs.size(), 3u);
  for (const auto& p : rep.pairs) EXPECT_TRUE(p.jointly_satisfiable) << p.pair;
}

// The perfect predictor, constant predictor and random confusion tables.
TEST(MetricSuite, ConstantPredictor) {
  Rng rng(5);
  std::normal_distribution<double> z;
  std::bernoulli_distribution coin(0.5);
  std::vector<double> x1, x2;
  std::vector<int> s, y;
  for (int i = 0; i < 300; ++i) {
    x1.push_back(z(rng));
    x2.push_back(z(rng));
    s.push_back(coin(rng));
    y.push_back(coin(rng));
  }
  const std::vector<int> ones(300, 1);
  const auto ds = fktest::make_dataset({{"x1", x1}, {"x2", x2}}, s, y);
  EvaluateOptions opt;
  opt.sensitive = "S";
  const auto rep = evaluate_predictions(ds, ones, {}, opt);
  EXPECT_EQ(*rep.get("consistency"), 1.0);
  EXPECT_EQ(*rep.get("dp_diff"), 0.0);
}

TEST(MetricSuite, PerfectPredictorWithUnequalBaseRates) {
  Rows r;
  r.add(0, 1, 1, 6);
  r.add(0, 0, 0, 4);
  r.add(1, 1, 1, 4);
  r.add(1, 0, 0, 6);
  const auto dp = group_metric_difference(GapKind::DP, group_confusion(r.y, r.y, r.s));
  EXPECT_NEAR(*dp.value, 0.2, 1e-15);
  const auto rep = incompatibility_report(r.y, r.s);
  EXPECT_DOUBLE_EQ(rep.base_rate_gap, std::abs(*dp.value));
  ASSERT_EQ(rep.pairs.size(), 3u);
  for (const auto& p : rep.pairs) EXPECT_FALSE(p.jointly_satisfiable) << p.pair;
}

TEST(MetricSuite, EqualizedOddsIsMaxOfItsParts) {
  Rng rng(11);
  std::uniform_int_distribution<int> count(1, 30);
  for (int trial = 0; trial < 100; ++trial) {
    GroupConfusion gc;
    gc.codes = {0, 1};
    gc.names = {"0", "1"};
    for (int g = 0; g < 2; ++g) {
      gc.cells.push_back({static_cast<double>(count(rng)), static_cast<double>(count(rng)),
                          static_cast<double>(count(rng)), static_cast<double>(count(rng))});
    }
    const double pe = std::abs(*group_metric_difference(GapKind::PE, gc).value);
    const double eopp = std::abs(*group_metric_difference(GapKind::EOPP, gc).value);
    const double eodds = std::abs(*group_metric_difference(GapKind::EODDS, gc).value);
    EXPECT_DOUBLE_EQ(eodds, std::max(pe, eopp)) << trial;
  }
}

TEST(Report, JsonRoundTrip) {
  MetricsReport r;
  r.meta["model_id"] = "m";
  r.set("dp_diff", 0.125);
  r.set("pp_diff", std::nullopt);
  r.flags.push_back("UndefinedRate(1,PP)");
  const auto back = metrics_report_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(*back.get("dp_diff"), 0.125);
  EXPECT_FALSE(back.get("pp_diff").has_value());
  EXPECT_EQ(back.flags, r.flags);
  EXPECT_NE(to_table(r).find("undefined"), std::string::npos);
  EXPECT_THROW(back.get("nope"), Error);
}
