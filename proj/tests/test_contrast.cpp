#include <gtest/gtest.h>

#include "fairkit/biasgen.hpp"
#include "fairkit/contrast.hpp"
#include "test_util.hpp"

using namespace fairkit;

namespace {

TabularDataset biased(bool measurement, std::uint64_t seed, std::size_t n = 20000) {
  BiasSpec s;
  s.n = n;
  s.seed = seed;
  (measurement ? s.beta_m_Y : s.beta_h_R) = 1.5;
  return project_view(generate(s), false, false, measurement ? LabelView::proxy_Y : LabelView::true_Y, false);
}

RuleContrast contrast(std::vector<std::pair<std::size_t, double>> count_prior) {
  RuleContrast rc;
  rc.rule.origin = "0";
  std::vector<OptRate> priors;
  for (std::size_t g = 0; g < count_prior.size(); ++g) {
    const auto [count, prior] = count_prior[g];
    rc.groups.push_back({std::to_string(g), static_cast<double>(count), count, prior});
    priors.push_back(prior);
  }
  double lo = 1, hi = 0;
  for (auto p : priors) {
    lo = std::min(lo, *p);
    hi = std::max(hi, *p);
  }
  rc.delta_prior = hi - lo;
  return rc;
}

}  // namespace

TEST(Trace, OneSurrogatePerGroupWithSensibleRules) {
  const auto ds = biased(false, 31);
  const auto t = trace(ds, "A");
  ASSERT_EQ(t.surrogates.size(), 2u);
  EXPECT_EQ(t.groups, (std::vector<std::string>{"0", "1"}));
  for (const auto& q : t.quality) {
    EXPECT_GE(q.accuracy, 0.80) << q.group;
    EXPECT_LE(q.leaves, 8u);
  }
  EXPECT_GE(t.rules.size(), 2u);
  EXPECT_LE(t.rules.size(), 16u);
  for (const auto& r : t.rules) {
    EXPECT_GT(r.pos_rate, 0.5);
    for (const auto& c : r.conditions) EXPECT_NE(c.feature, "A");
  }
}

TEST(Trace, ConstantLabelGroupYieldsAtMostTheRoot) {
  std::vector<double> x;
  std::vector<int> s, y;
  for (int i = 0; i < 200; ++i) {
    x.push_back(i % 17);
    s.push_back(i % 2);
    y.push_back(i % 2 == 0 ? 1 : static_cast<int>(i % 17 > 8));
  }
  const auto t = trace(fktest::make_dataset({{"x", x}}, s, y), "S");
  std::size_t from_zero = 0;
  for (const auto& r : t.rules) from_zero += r.origin == "0";
  EXPECT_EQ(from_zero, 1u);
  EXPECT_EQ(t.surrogates[0].nodes.size(), 1u);
}

TEST(Trace, GroupTooSmall) {
  const auto ds = fktest::make_dataset({{"x", {1, 2, 3, 4}}}, {0, 1, 0, 1}, {0, 1, 1, 0});
  try {
    trace(ds, "S");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "GroupTooSmall");
  }
}

TEST(GContrast, OwnGroupPriorIsTheLeafRate) {
  const auto ds = biased(false, 32, 5000);
  const auto t = trace(ds, "A");
  const auto cs = g_contrast(t.rules, ds, "A");
  ASSERT_EQ(cs.size(), t.rules.size());
  for (const auto& c : cs) {
    for (const auto& g : c.groups) {
      if (g.group == c.rule.origin) {
        EXPECT_NEAR(*g.prior, c.rule.pos_rate, 1e-12);
        EXPECT_NEAR(g.size, c.rule.support, 1e-9);
      }
    }
  }
}

TEST(GContrast, UnsatisfiedRuleHasUndefinedPrior) {
  const auto ds = fktest::make_dataset({{"x", {1, 2, 3, 10, 11, 12}}}, {0, 0, 0, 1, 1, 1}, {1, 0, 1, 1, 1, 0});
  DecisionRule r;
  r.origin = "0";
  r.conditions = {{"x", false, 5.0}};
  const auto cs = g_contrast({r}, ds, "S");
  EXPECT_NEAR(*cs[0].groups[0].prior, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(cs[0].groups[1].size, 0.0);
  EXPECT_FALSE(cs[0].groups[1].prior.has_value());
  EXPECT_FALSE(cs[0].delta_prior.has_value());
  EXPECT_EQ(cs[0].flags.size(), 1u);
  r.conditions = {{"nope", true, 0.0}};
  try {
    g_contrast({r}, ds, "S");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "UnknownColumn");
  }
}

TEST(Worldview, ThresholdClassification) {
  const std::vector<RuleContrast> cs{contrast({{100, 0.70}, {100, 0.72}}), contrast({{100, 0.80}, {300, 0.60}}),
                                     contrast({{5, 0.90}, {100, 0.20}})};
  const auto rep = evaluate_worldview(cs, 0.05, 10);
  EXPECT_EQ(rep.evidence,
            (std::vector<Evidence>{Evidence::WYSIWYG, Evidence::WAE, Evidence::undefined}));
  EXPECT_NEAR(rep.share_wysiwyg, 200.0 / 705.0, 1e-12);
  EXPECT_NEAR(rep.share_wae, 400.0 / 705.0, 1e-12);
  EXPECT_NE(rep.summary[0].find("dominant worldview is WAE"), std::string::npos);
  EXPECT_NE(to_text(rep).find("WYSIWYG"), std::string::npos);
  EXPECT_EQ(to_json(rep)["counts"]["undefined"], 1);
}

TEST(Worldview, AllWithinThresholdSuggestsWysiwyg) {
  const auto rep = evaluate_worldview({contrast({{50, 0.6}, {50, 0.62}})});
  EXPECT_NE(rep.summary[0].find("suggests following only WYSIWYG"), std::string::npos);
}

TEST(Worldview, EmptyListHasNoEvidence) {
  const auto rep = evaluate_worldview({});
  EXPECT_EQ(rep.share_wysiwyg, 0.0);
  EXPECT_EQ(rep.share_wae, 0.0);
  EXPECT_NE(rep.summary[0].find("no evidence"), std::string::npos);
  EXPECT_THROW(evaluate_worldview({}, 1.0), Error);
}

TEST(Worldview, MeasurementBiasIsSeparatedAsWae) {
  const auto ds = biased(true, 6);
  const auto cs = g_contrast(trace(ds, "A").rules, ds, "A");
  const auto rep = evaluate_worldview(cs, 0.05, 10);
  ASSERT_GT(rep.n_wae + rep.n_wysiwyg, 0u);
  EXPECT_GE(static_cast<double>(rep.n_wae) / static_cast<double>(rep.n_wae + rep.n_wysiwyg), 0.8);
  double max_dp = 0;
  for (const auto& c : cs) {
    if (c.delta_prior) max_dp = std::max(max_dp, *c.delta_prior);
  }
  EXPECT_GE(max_dp, 0.15);
}

TEST(Worldview, HistoricalBiasIsMostlyWysiwyg) {
  const auto ds = biased(false, 5);
  const auto rep = evaluate_worldview(g_contrast(trace(ds, "A").rules, ds, "A"), 0.05, 10);
  EXPECT_GT(rep.share_wysiwyg, rep.share_wae);
}
