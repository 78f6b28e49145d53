#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "fairkit/metrics.hpp"
#include "fairkit/mitigate.hpp"
#include "fairkit/random.hpp"
#include "test_util.hpp"

using namespace fairkit;

namespace {

// n_{s,y} counts laid out as rows with a constant dummy feature.
TabularDataset from_counts(const std::vector<std::array<int, 2>>& counts) {
  std::vector<int> s, y;
  std::vector<double> x;
  for (std::size_t g = 0; g < counts.size(); ++g) {
    for (int v = 0; v < 2; ++v) {
      for (int i = 0; i < counts[g][static_cast<std::size_t>(v)]; ++i) {
        s.push_back(static_cast<int>(g));
        y.push_back(v);
        x.push_back(static_cast<double>(x.size() % 5));
      }
    }
  }
  return fktest::make_dataset({{"x", x}}, s, y, {}, "S", static_cast<int>(counts.size()));
}

double group_rate(std::span<const int> v, std::span<const int> s, int g) {
  double n = 0, p = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (s[i] != g) continue;
    n += 1;
    p += v[i];
  }
  return p / n;
}

struct Fraction {
  long long num, den;
};

Fraction reduce(long long a, long long b) {
  const long long g = std::gcd(a, b);
  return {a / g, b / g};
}

}  // namespace

TEST(Reweigh, FormulaExample) {
  // P(S=1) = .5, P(Y=1) = .6, P(S=1,Y=1) = .2.
  const auto r = reweigh(from_counts({{1, 4}, {3, 2}}), "S");
  EXPECT_DOUBLE_EQ(r.table.at(1, 1), 1.5);
}

TEST(Reweigh, IndependentDataGetsUnitWeights) {
  const auto r = reweigh(from_counts({{3, 6}, {2, 4}}), "S");
  for (std::size_t g = 0; g < 2; ++g) {
    for (int v = 0; v < 2; ++v) EXPECT_DOUBLE_EQ(r.table.at(g, v), 1.0);
  }
}

TEST(Reweigh, ExactFactorizationOnRandomTables) {
  Rng rng(101);
  std::uniform_int_distribution<int> cnt(1, 40);
  std::uniform_int_distribution<int> groups(2, 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::array<int, 2>> counts(static_cast<std::size_t>(groups(rng)));
    for (auto& c : counts) c = {cnt(rng), cnt(rng)};
    const auto ds = from_counts(counts);
    const auto r = reweigh(ds, "S");
    long long n = 0, ny[2] = {0, 0};
    for (const auto& c : counts) {
      n += c[0] + c[1];
      ny[0] += c[0];
      ny[1] += c[1];
    }
    for (std::size_t g = 0; g < counts.size(); ++g) {
      const long long ns = counts[g][0] + counts[g][1];
      for (int v = 0; v < 2; ++v) {
        const long long nsy = counts[g][static_cast<std::size_t>(v)];
        // (ns/n)(ny/n) / (nsy/n) as a reduced fraction.
        const auto w = reduce(ns * ny[v], n * nsy);
        EXPECT_EQ(r.table.at(g, v), static_cast<double>(w.num) / static_cast<double>(w.den));
        // Weighted cell mass w * nsy equals ns * ny / n exactly.
        EXPECT_EQ(w.num * nsy * n, w.den * ns * ny[v]) << trial;
      }
    }
    // Weighted-label DP is zero: every group has the same weighted positive rate.
    const auto y = r.dataset.labels();
    const auto& s = r.dataset.column("S").codes;
    const auto gc = group_confusion(y, y, s, r.dataset.weights());
    const auto ref = *gc.cells[0].ppr();
    for (const auto& c : gc.cells) EXPECT_NEAR(*c.ppr(), ref, 1e-12);
  }
}

TEST(Reweigh, EmptyCellIsAnError) {
  try {
    reweigh(from_counts({{0, 3}, {2, 2}}), "S");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "EmptyCell");
  }
}

TEST(Massage, WorkedExample) {
  // Group 0 has 8/10 positives, group 1 has 4/10.
  const auto ds = from_counts({{2, 8}, {6, 4}});
  std::vector<double> rank(ds.n_rows());
  for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = static_cast<double>(i) / static_cast<double>(rank.size());
  const auto out = massage(ds, "S", rank);
  EXPECT_EQ(out.m, 2u);
  EXPECT_EQ(out.deprived, "1");
  const auto y = out.dataset.labels();
  const auto& s = out.dataset.column("S").codes;
  EXPECT_DOUBLE_EQ(group_rate(y, s, 0), 0.6);
  EXPECT_DOUBLE_EQ(group_rate(y, s, 1), 0.6);
  // The highest-ranked negatives of group 1 were promoted.
  for (auto r : out.promoted) EXPECT_GE(r, 12u);
}

TEST(Massage, EqualRatesAreLeftAlone) {
  const auto ds = from_counts({{5, 5}, {3, 3}});
  const std::vector<double> rank(ds.n_rows(), 0.5);
  const auto out = massage(ds, "S", rank);
  EXPECT_EQ(out.m, 0u);
  EXPECT_EQ(out.dataset, ds);
}

TEST(Massage, GapBoundedByInverseGroupSize) {
  Rng rng(7);
  std::uniform_int_distribution<int> cnt(1, 60);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 50; ++trial) {
    const auto ds = from_counts({{cnt(rng), cnt(rng)}, {cnt(rng), cnt(rng)}});
    std::vector<double> rank(ds.n_rows());
    for (auto& v : rank) v = u(rng);
    const auto out = massage(ds, "S", rank);
    const auto y = out.dataset.labels();
    const auto& s = out.dataset.column("S").codes;
    const double n0 = static_cast<double>(std::count(s.begin(), s.end(), 0));
    const double n1 = static_cast<double>(s.size()) - n0;
    EXPECT_LE(std::abs(group_rate(y, s, 0) - group_rate(y, s, 1)), 1.0 / std::min(n0, n1) + 1e-12) << trial;
  }
}

TEST(Massage, NonBinarySensitive) {
  const auto ds = from_counts({{2, 2}, {2, 2}, {2, 2}});
  const std::vector<double> rank(ds.n_rows(), 0.5);
  try {
    massage(ds, "S", rank);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "NonBinarySensitive");
  }
}

TEST(Suppress, ThresholdOneIsFtu) {
  std::vector<int> s, y;
  std::vector<double> a, b;
  for (int i = 0; i < 40; ++i) {
    s.push_back(i % 2);
    y.push_back(i % 3 == 0);
    a.push_back(i % 2 + 0.1 * (i % 4));
    b.push_back(i % 5);
  }
  const auto ds = fktest::make_dataset({{"a", a}, {"b", b}}, s, y);
  const auto loose = suppress(ds, "S", 1.0);
  EXPECT_EQ(loose.dropped, (std::vector<std::string>{"S"}));
  EXPECT_EQ(loose.dataset, ftu(ds, "S"));
  const auto tight = suppress(ds, "S", 0.15);
  EXPECT_EQ(tight.dropped, (std::vector<std::string>{"S", "a"}));
  EXPECT_TRUE(tight.dataset.column("S").schema.role == Role::sensitive);
}

TEST(Suppress, ExactCopyIsAlwaysDropped) {
  std::vector<int> s, y;
  std::vector<double> copy;
  for (int i = 0; i < 20; ++i) {
    s.push_back(i % 2);
    y.push_back(i % 3 == 0);
    copy.push_back(i % 2);
  }
  const auto out = suppress(fktest::make_dataset({{"copy", copy}}, s, y), "S", 0.999);
  EXPECT_EQ(out.dropped.back(), "copy");
  EXPECT_EQ(out.warnings.size(), 1u);
}

TEST(Ftu, RemovesTheSensitiveInput) {
  const auto ds = fktest::make_dataset({{"x", {1, 2, 3, 4}}}, {0, 1, 0, 1}, {0, 1, 1, 0})
                      .with_role("S", Role::sensitive, true);
  EXPECT_EQ(ds.model_inputs().size(), 2u);
  const auto f = ftu(ds, "S");
  EXPECT_EQ(f.model_inputs(), (std::vector<std::string>{"x"}));
  const auto m = fit_linear_score(f);
  EXPECT_EQ(flip_sensitivity(as_predictor(m), f, "S", 0.5), 0.0);
}

TEST(Resample, MatchesProductOfMarginals) {
  const auto ds = from_counts({{300, 2700}, {1500, 1500}});
  const auto out = resample(ds, "S", 9);
  const auto t = reweigh(out, "S").table;
  // Row counts: n P(s) P(y) with P(Y=0) = .3 and P(Y=1) = .7.
  for (std::size_t g = 0; g < 2; ++g) {
    EXPECT_EQ(t.counts[g][0], 900u);
    EXPECT_EQ(t.counts[g][1], 2100u);
  }
  EXPECT_EQ(resample(ds, "S", 9), out);
  EXPECT_NE(resample(ds, "S", 10), out);
}

TEST(Resample, IndependentDataUnchangedInSize) {
  const auto ds = from_counts({{30, 60}, {20, 40}});
  EXPECT_EQ(resample(ds, "S", 1).n_rows(), ds.n_rows());
}

TEST(Linear, SeparablePairIsFitted) {
  const auto ds = fktest::make_dataset({{"x", {0.0, 1.0}}}, {}, {0, 1});
  const auto m = fit_linear_score(ds);
  EXPECT_LT(m.score(std::vector<double>{0.0}), 0.5);
  EXPECT_GT(m.score(std::vector<double>{1.0}), 0.5);
}

TEST(Linear, IndependentLabelsGiveTheBaseRate) {
  Rng rng(3);
  std::normal_distribution<double> z;
  std::bernoulli_distribution coin(0.3);
  std::vector<double> x;
  std::vector<int> y;
  for (int i = 0; i < 2000; ++i) {
    x.push_back(z(rng));
    y.push_back(coin(rng));
  }
  const auto ds = fktest::make_dataset({{"x", x}}, {}, y);
  const auto m = fit_linear_score(ds);
  const double base = static_cast<double>(std::count(y.begin(), y.end(), 1)) / 2000.0;
  for (double v : {-1.0, 0.0, 1.0}) EXPECT_NEAR(m.score(std::vector<double>{v}), base, 0.05);
}

TEST(Linear, LossNeverIncreases) {
  Rng rng(4);
  std::normal_distribution<double> z;
  std::vector<double> a, b;
  std::vector<int> y;
  for (int i = 0; i < 500; ++i) {
    a.push_back(z(rng));
    b.push_back(3 * z(rng) + 10);
    y.push_back(a.back() + 0.2 * b.back() + z(rng) > 2 ? 1 : 0);
  }
  const auto m = fit_linear_score(fktest::make_dataset({{"a", a}, {"b", b}}, {}, y));
  ASSERT_GT(m.loss_history.size(), 10u);
  for (std::size_t i = 1; i < m.loss_history.size(); ++i) EXPECT_LE(m.loss_history[i], m.loss_history[i - 1] + 1e-12);
}

TEST(Linear, JsonRoundTrip) {
  const auto ds = fktest::make_dataset({{"x", {0.0, 1.0, 2.0, 3.0}}}, {}, {0, 0, 1, 1});
  const auto m = fit_linear_score(ds);
  const auto back = linear_from_json(nlohmann::json::parse(to_json(m).dump()));
  for (double v : {0.0, 1.5, 3.0}) {
    EXPECT_DOUBLE_EQ(back.score(std::vector<double>{v}), m.score(std::vector<double>{v}));
  }
}

TEST(ThresholdPolicy, WorkedDpExample) {
  const std::vector<double> sc{0.9, 0.8, 0.7, 0.6, 0.85, 0.5, 0.4, 0.3};
  const std::vector<int> s{0, 0, 0, 0, 1, 1, 1, 1};
  PolicyOptions opt;
  opt.target_rate = 0.5;
  const auto pol = fit_threshold_policy(PolicyKind::DP, sc, {}, s, {"0", "1"}, {}, {}, opt);
  EXPECT_GT(pol.thresholds.at("0"), 0.7);
  EXPECT_LT(pol.thresholds.at("0"), 0.8);
  EXPECT_GT(pol.thresholds.at("1"), 0.4);
  EXPECT_LT(pol.thresholds.at("1"), 0.5);
  EXPECT_EQ(pol.achieved_gap, 0.0);
  const auto d = apply_policy(pol, sc, s, {"0", "1"});
  EXPECT_EQ(group_rate(d, s, 0), 0.5);
  EXPECT_EQ(group_rate(d, s, 1), 0.5);
}

TEST(ThresholdPolicy, IdenticalDistributionsShareThresholds) {
  std::vector<double> sc;
  std::vector<int> s;
  for (int g = 0; g < 2; ++g) {
    for (int i = 0; i < 20; ++i) {
      sc.push_back(0.025 + 0.05 * i);
      s.push_back(g);
    }
  }
  const auto pol = fit_threshold_policy(PolicyKind::DP, sc, {}, s, {"0", "1"});
  EXPECT_EQ(pol.thresholds.at("0"), pol.thresholds.at("1"));
  EXPECT_EQ(pol.achieved_gap, 0.0);
}

TEST(ThresholdPolicy, ReappliedDpGapIsTheFittedGap) {
  Rng rng(21);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> sc;
    std::vector<int> s;
    for (int i = 0; i < 301; ++i) {
      s.push_back(u(rng) < 0.4 ? 1 : 0);
      sc.push_back(s.back() ? u(rng) * 0.8 : 0.2 + 0.8 * u(rng));
    }
    const auto pol = fit_threshold_policy(PolicyKind::DP, sc, {}, s, {"0", "1"});
    const auto d = apply_policy(pol, sc, s, {"0", "1"});
    const double gap = std::abs(group_rate(d, s, 0) - group_rate(d, s, 1));
    EXPECT_DOUBLE_EQ(gap, pol.achieved_gap) << trial;
    EXPECT_LE(gap, pol.epsilon + 1e-12);
  }
}

TEST(ThresholdPolicy, EoppEqualizesTruePositiveRates) {
  Rng rng(22);
  std::uniform_real_distribution<double> u;
  std::vector<double> sc;
  std::vector<int> s, y;
  for (int i = 0; i < 2000; ++i) {
    s.push_back(i % 2);
    y.push_back(u(rng) < 0.5 ? 1 : 0);
    sc.push_back(std::clamp(0.3 * y.back() + 0.5 * u(rng) + 0.2 * s.back(), 0.0, 1.0));
  }
  const auto pol = fit_threshold_policy(PolicyKind::EOPP, sc, y, s, {"0", "1"});
  const auto d = apply_policy(pol, sc, s, {"0", "1"});
  const auto g = group_metric_difference(GapKind::EOPP, group_confusion(y, d, s));
  EXPECT_LE(std::abs(*g.value), pol.epsilon + 1e-12);
  EXPECT_THROW(fit_threshold_policy(PolicyKind::EOPP, sc, {}, s, {"0", "1"}), Error);
}

TEST(ThresholdPolicy, ApplyExamples) {
  const std::vector<double> sc{0.1, 0.5, 0.9, 0.3};
  const std::vector<int> s{0, 1, 0, 1};
  ThresholdPolicy zero;
  zero.thresholds = {{"0", 0.0}, {"1", 0.0}};
  EXPECT_EQ(apply_policy(zero, sc, s, {"0", "1"}), (std::vector<int>{1, 1, 1, 1}));
  ThresholdPolicy eo;
  eo.kind = PolicyKind::EODDS;
  eo.mixed = {{"0", {0.0, 0.4, 0.0}}, {"1", {0.0, 0.4, 0.0}}};
  EXPECT_EQ(apply_policy(eo, sc, s, {"0", "1"}), (std::vector<int>{0, 1, 1, 0}));
  eo.mixed = {{"0", {0.0, 0.95, 0.5}}, {"1", {0.0, 0.95, 0.5}}};
  EXPECT_EQ(apply_policy(eo, sc, s, {"0", "1"}, {}, {}, 3), apply_policy(eo, sc, s, {"0", "1"}, {}, {}, 3));
  EXPECT_THROW(apply_policy(zero, sc, std::vector<int>{0, 2, 0, 1}, {"0", "1", "2"}), Error);
}

TEST(ThresholdPolicy, JsonRoundTrip) {
  ThresholdPolicy p;
  p.kind = PolicyKind::EODDS;
  p.sensitive = "sex";
  p.mixed = {{"F", {0.2, 0.6, 0.25}}};
  p.achieved_gap = 0.001;
  EXPECT_EQ(policy_from_json(nlohmann::json::parse(to_json(p).dump())), p);
  EXPECT_EQ(parse_policy_kind("EOPP"), PolicyKind::EOPP);
  EXPECT_THROW(parse_policy_kind("dp2"), Error);
}
