// One PASS/FAIL line per acceptance criterion.  Exit status is non-zero if
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "fairkit/biasgen.hpp"
#include "fairkit/compare.hpp"
#include "fairkit/experiments.hpp"
#include "fairkit/fftree.hpp"
#include "fairkit/metrics.hpp"
#include "fairkit/mitigate.hpp"
#include "fairkit/monitor.hpp"
#include "fairkit/random.hpp"
#include "test_util.hpp"
#include "tree_oracle.hpp"

using namespace fairkit;
namespace ex = fairkit::experiments;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// Adult cross-validation is shared by criteria 1 to 3.
const ex::AdultCvResult& adult() {
  static const ex::AdultCvResult r = [] {
    const auto dir = fktest::source_path("data/adult/");
    const auto raw = load_csv(dir + "adult.csv", load_schema(dir + "schema.json"));
    return ex::run_adult_cv(raw, ex::AdultCvConfig{});
  }();
  return r;
}

const ex::DeltaResult& at_delta(double d) {
  for (const auto& r : adult().deltas) {
    if (std::abs(r.delta - d) < 1e-12) return r;
  }
  fail("MissingMetric", "delta not run");
}

Verdict criterion1() {
  const auto& a = at_delta(0.05);
  const auto& b = at_delta(0.20);
  double worst = 0;
  for (const auto& r : adult().deltas) worst = std::max(worst, r.max_seconds);
  const bool ok = a.median_dp <= 0.08 && a.median_accuracy >= 0.78 && b.median_accuracy >= 0.81 && worst <= 300;
  return {ok, "delta=0.05 DP " + fmt(a.median_dp) + " acc " + fmt(a.median_accuracy) + "; delta=0.20 acc " +
                  fmt(b.median_accuracy) + "; slowest fold " + fmt(worst, 1) + "s"};
}

Verdict criterion2() {
  const double a05 = at_delta(0.05).median_accuracy;
  const double a10 = at_delta(0.10).median_accuracy;
  const double a15 = at_delta(0.15).median_accuracy;
  const bool ok = a10 - a05 >= -0.005 && a15 - a10 >= -0.005;
  return {ok, "acc " + fmt(a05) + " / " + fmt(a10) + " / " + fmt(a15)};
}

Verdict criterion3() {
  bool ok = adult().zero_delta_invariant_ok;
  const auto& z = adult().zero_delta_compliance;
  ok = ok && z.audit_pass && z.no_sensitive_split && z.flip == 0.0 && z.prune_preserves;
  std::size_t checked = 1, pruned = z.nodes_pruned;
  for (const auto& r : adult().deltas) {
    ok = ok && r.all_compliant;
    checked += r.folds.size();
    for (const auto& f : r.folds) pruned += f.compliance.nodes_pruned;
  }
  // Synthetic historical-bias data with A exposed to the learner.
  BiasSpec spec;
  spec.n = 5000;
  spec.seed = 77;
  spec.beta_h_R = 1.5;
  const auto ds = project_view(generate(spec), false, false, LabelView::true_Y, true);
  bool syn_invariant = true;
  for (double delta : {0.0, 0.02, 0.05, 0.1}) {
    const auto m = fit(ds, {{GapKind::DP, "A", delta}}, GrowthConfig{});
    const auto c = ex::check_compliance(m, ds, "A", true);
    ok = ok && c.audit_pass && c.no_sensitive_split && c.flip == 0.0 && c.prune_preserves;
    ++checked;
    pruned += c.nodes_pruned;
    if (delta == 0.0) syn_invariant = ex::dp_threshold_invariant(m, ds, "A");
  }
  ok = ok && syn_invariant;
  return {ok, std::to_string(checked) + " trees audited, " + std::to_string(pruned) +
                  " prunes re-audited; delta=0 threshold invariance adult " +
                  (adult().zero_delta_invariant_ok ? "yes" : "no") + ", synthetic " + (syn_invariant ? "yes" : "no")};
}

Verdict criterion4() {
  std::mt19937_64 gen(991);
  GrowthConfig g;
  g.max_depth = 8;
  g.min_samples_leaf = 1;
  g.min_samples_split = 2;
  const int trials = 25;
  int matched = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t n = 20 + gen() % 181;
    const std::size_t d = 1 + gen() % 8;
    std::vector<std::string> names;
    for (std::size_t f = 0; f < d; ++f) names.push_back("x" + std::to_string(f));
    std::vector<std::vector<int>> x(d, std::vector<int>(n));
    std::vector<int> y(n), s(n);
    std::bernoulli_distribution coin(0.5), noise(0.25);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t f = 0; f < d; ++f) x[f][r] = coin(gen);
      int v = x[d - 1][r] | (d > 1 ? x[0][r] : 0);
      y[r] = noise(gen) ? 1 - v : v;
      s[r] = coin(gen);
    }
    std::vector<std::pair<std::string, std::vector<double>>> feats;
    for (std::size_t f = 0; f < d; ++f) feats.push_back({names[f], std::vector<double>(x[f].begin(), x[f].end())});
    const auto ds = fktest::make_dataset(feats, s, y);
    const auto model = fit(ds, {}, g);
    const auto root = fktest::grow(x, names, y, all_rows(ds), 0, g.max_depth);
    std::vector<const fktest::OracleNode*> flat;
    fktest::flatten(*root, flat);
    bool same = flat.size() == model.nodes.size();
    for (std::size_t i = 0; same && i < flat.size(); ++i) {
      const auto& a = *flat[i];
      const auto& b = model.nodes[i];
      same = a.leaf == b.leaf && a.n == b.n && std::abs(a.rate - b.pos_rate) < 1e-12 &&
             (a.leaf || (a.feature == b.feature && b.threshold == 0.5));
    }
    matched += same;
  }
  return {matched == trials, std::to_string(matched) + "/" + std::to_string(trials) + " datasets node-for-node equal"};
}

Verdict criterion5() {
  const auto r = ex::run_mitigation_interaction();
  using IR = ex::InteractionResult;
  const auto& hu = IR::find(r.historical, "unmitigated");
  const auto& hf = IR::find(r.historical, "ftu");
  const auto& ht = IR::find(r.historical, "thresh-dp");
  const auto& mf = IR::find(r.measurement, "ftu");
  const auto& mt = IR::find(r.measurement, "thresh-dp");
  const auto& me = IR::find(r.measurement, "thresh-eopp");
  const bool a = std::abs(hu.dp) > 0.10 && std::abs(std::abs(hf.dp) - std::abs(hu.dp)) <= 0.05 &&
                 std::abs(ht.dp) < 0.02 && ht.tpr_gap > hu.tpr_gap;
  const bool b = std::abs(mf.dp) < 0.05 && std::abs(mt.dp) < 0.05 && std::abs(me.dp) > 0.05;
  return {a && b && r.seconds <= 120,
          "historical |DP| unmitigated " + fmt(std::abs(hu.dp)) + " ftu " + fmt(std::abs(hf.dp)) + " thresh " +
              fmt(std::abs(ht.dp)) + " (TPR gap " + fmt(hu.tpr_gap) + " -> " + fmt(ht.tpr_gap) +
              "); measurement |DP| vs Y ftu " + fmt(std::abs(mf.dp)) + " thresh-dp " + fmt(std::abs(mt.dp)) +
              " thresh-eopp " + fmt(std::abs(me.dp)) + "; " + fmt(r.seconds, 1) + "s"};
}

TabularDataset from_counts(const std::vector<std::array<int, 2>>& counts) {
  std::vector<int> s, y;
  std::vector<double> x;
  for (std::size_t g = 0; g < counts.size(); ++g) {
    for (int v = 0; v < 2; ++v) {
      for (int i = 0; i < counts[g][static_cast<std::size_t>(v)]; ++i) {
        s.push_back(static_cast<int>(g));
        y.push_back(v);
        x.push_back(static_cast<double>(i % 3));
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

Verdict criterion6() {
  Rng rng(606);
  std::uniform_int_distribution<int> cnt(1, 50), groups(2, 4);
  std::uniform_real_distribution<double> u;
  int reweigh_ok = 0;
  for (int t = 0; t < 50; ++t) {
    std::vector<std::array<int, 2>> counts(static_cast<std::size_t>(groups(rng)));
    for (auto& c : counts) c = {cnt(rng), cnt(rng)};
    const auto r = reweigh(from_counts(counts), "S");
    long long n = 0, ny[2] = {0, 0};
    for (const auto& c : counts) {
      n += c[0] + c[1];
      ny[0] += c[0];
      ny[1] += c[1];
    }
    bool ok = true;
    for (std::size_t g = 0; g < counts.size(); ++g) {
      const long long ns = counts[g][0] + counts[g][1];
      for (int v = 0; v < 2; ++v) {
        const long long nsy = counts[g][static_cast<std::size_t>(v)];
        long long num = ns * ny[v], den = n * nsy;
        const long long k = std::gcd(num, den);
        num /= k;
        den /= k;
        ok = ok && r.table.at(g, v) == static_cast<double>(num) / static_cast<double>(den);
        ok = ok && num * nsy * n == den * ns * ny[v];
      }
    }
    reweigh_ok += ok;
  }
  int massage_ok = 0;
  for (int t = 0; t < 50; ++t) {
    const auto ds = from_counts({{cnt(rng), cnt(rng)}, {cnt(rng), cnt(rng)}});
    std::vector<double> rank(ds.n_rows());
    for (auto& v : rank) v = u(rng);
    const auto out = massage(ds, "S", rank);
    const auto y = out.dataset.labels();
    const auto& s = out.dataset.column("S").codes;
    const double n0 = static_cast<double>(std::count(s.begin(), s.end(), 0));
    const double n1 = static_cast<double>(s.size()) - n0;
    massage_ok += std::abs(group_rate(y, s, 0) - group_rate(y, s, 1)) <= 1.0 / std::min(n0, n1) + 1e-12;
  }
  int thresh_ok = 0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> sc;
    std::vector<int> s;
    for (int i = 0; i < 400; ++i) {
      s.push_back(u(rng) < 0.35 ? 1 : 0);
      sc.push_back(s.back() ? 0.7 * u(rng) : 0.3 + 0.7 * u(rng));
    }
    const auto pol = fit_threshold_policy(PolicyKind::DP, sc, {}, s, {"0", "1"});
    const auto d = apply_policy(pol, sc, s, {"0", "1"});
    thresh_ok += std::abs(group_rate(d, s, 0) - group_rate(d, s, 1)) == pol.achieved_gap;
  }
  const double t1 = tradeoff_score(0.8, 0.0), t2 = tradeoff_score(0.8, 1.0), t3 = tradeoff_score(0.875, 0.2);
  const bool spots = std::abs(t1 - 0.8889) < 1e-4 && t2 == 0.0 && std::abs(t3 - 0.8358) < 1e-4;
  return {reweigh_ok == 50 && massage_ok == 50 && thresh_ok == 20 && spots,
          "reweigh " + std::to_string(reweigh_ok) + "/50, massage " + std::to_string(massage_ok) + "/50, thresh-dp " +
              std::to_string(thresh_ok) + "/20, tradeoff " + fmt(t1) + " / " + fmt(t2) + " / " + fmt(t3)};
}

Verdict criterion7() {
  Rng rng(707);
  std::normal_distribution<double> z;
  std::bernoulli_distribution coin(0.5);
  std::vector<double> x1, x2;
  std::vector<int> s, y;
  for (int i = 0; i < 400; ++i) {
    x1.push_back(z(rng));
    x2.push_back(z(rng));
    s.push_back(coin(rng));
    y.push_back(coin(rng));
  }
  const auto ds = fktest::make_dataset({{"x1", x1}, {"x2", x2}}, s, y);
  EvaluateOptions opt;
  opt.sensitive = "S";
  const std::vector<int> ones(y.size(), 1);
  const auto rep = evaluate_predictions(ds, ones, {}, opt);
  const bool constant = *rep.get("consistency") == 1.0 && *rep.get("dp_diff") == 0.0;

  std::vector<int> py, ps;
  for (int i = 0; i < 10; ++i) {
    py.push_back(i < 6);
    ps.push_back(0);
    py.push_back(i < 4);
    ps.push_back(1);
  }
  const auto dp = group_metric_difference(GapKind::DP, group_confusion(py, py, ps));
  const auto inc = incompatibility_report(py, ps);
  bool flagged = inc.pairs.size() == 3;
  for (const auto& p : inc.pairs) flagged = flagged && !p.jointly_satisfiable;
  const bool perfect = dp.value && *dp.value == 0.6 - 0.4 && flagged;

  std::uniform_int_distribution<int> cnt(0, 40);
  int eodds_ok = 0;
  for (int t = 0; t < 100; ++t) {
    GroupConfusion gc;
    gc.codes = {0, 1};
    gc.names = {"0", "1"};
    for (int g = 0; g < 2; ++g) {
      gc.cells.push_back({1.0 + cnt(rng), 1.0 + cnt(rng), 1.0 + cnt(rng), 1.0 + cnt(rng)});
    }
    const double pe = std::abs(*group_metric_difference(GapKind::PE, gc).value);
    const double eo = std::abs(*group_metric_difference(GapKind::EOPP, gc).value);
    const double both = std::abs(*group_metric_difference(GapKind::EODDS, gc).value);
    eodds_ok += both == std::max(pe, eo);
  }

  GroupConfusion e80;
  e80.codes = {0, 1};
  e80.names = {"0", "1"};
  e80.cells = {{8, 0, 2, 0}, {6, 0, 4, 0}};
  const auto rule = eighty_percent_check(e80);
  const bool eighty = rule.ratio && std::abs(*rule.ratio - 0.75) < 1e-15 && !rule.pass;

  return {constant && perfect && eodds_ok == 100 && eighty,
          std::string("constant predictor ") + (constant ? "ok" : "bad") + ", perfect predictor DP " +
              fmt(dp.value.value_or(-1)) + " with " + std::to_string(inc.pairs.size()) +
              " incompatible pairs, EODDS " + std::to_string(eodds_ok) + "/100, 80% ratio " +
              fmt(rule.ratio.value_or(-1)) + (rule.pass ? " pass" : " fail")};
}

Verdict criterion8() {
  const auto r = ex::run_fairview();
  const auto& h = r.historical;
  const auto& m = r.measurement;
  double min_acc = 1;
  for (const auto& q : h.trace.quality) min_acc = std::min(min_acc, q.accuracy);
  const std::size_t h_sized = h.report.n_wysiwyg + h.report.n_wae;
  const std::size_t m_sized = m.report.n_wysiwyg + m.report.n_wae;
  const bool hist_ok = h_sized > 0 && h.report.n_wae == 0 && min_acc >= 0.80;
  const double wae_share = m_sized ? static_cast<double>(m.report.n_wae) / static_cast<double>(m_sized) : 0.0;
  const bool meas_ok = wae_share >= 0.80 && m.max_delta_prior >= 0.15;
  return {hist_ok && meas_ok && r.seconds <= 60,
          "historical " + std::to_string(h.report.n_wysiwyg) + "/" + std::to_string(h_sized) +
              " WYSIWYG (max dprior " + fmt(h.max_delta_prior, 3) + "), surrogate acc >= " + fmt(min_acc, 3) +
              "; measurement " + std::to_string(m.report.n_wae) + "/" + std::to_string(m_sized) +
              " WAE, max dprior " + fmt(m.max_delta_prior, 3) + "; " + fmt(r.seconds, 1) + "s"};
}

Verdict criterion9() {
  const auto r = ex::run_temporal();
  const bool ok = std::abs(r.dp_slice1) < 0.01 && std::abs(r.dp_slice2) > 0.05 &&
                  std::abs(r.dp_conditioned_shock) > std::abs(r.dp_overall_shock) &&
                  std::abs(r.dp_retrained_slice2) < 0.02 && r.delta.trend == Trend::decline &&
                  r.delta.delta_a_deprived > 0 && r.seconds <= 180;
  return {ok, "|DP| slice1 " + fmt(std::abs(r.dp_slice1)) + " slice2 " + fmt(std::abs(r.dp_slice2)) +
                  ", shock on " + r.shock_column + " overall " + fmt(std::abs(r.dp_overall_shock)) + " conditioned " +
                  fmt(std::abs(r.dp_conditioned_shock)) + ", retrained " + fmt(std::abs(r.dp_retrained_slice2)) +
                  ", delta phi_A(" + r.delta.deprived + ") " + fmt(r.delta.delta_a_deprived) + " -> " +
                  std::string(to_string(r.delta.trend)) + "; " + fmt(r.seconds, 1) + "s"};
}

Verdict criterion10() {
  Rng rng(1010);
  std::normal_distribution<double> z;
  std::uniform_int_distribution<std::size_t> dim(1, 8), bgn(1, 16);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t d = dim(rng);
    std::vector<double> w(d), q(d);
    for (std::size_t j = 0; j < d; ++j) {
      w[j] = z(rng);
      q[j] = z(rng);
    }
    Predictor p;
    for (std::size_t j = 0; j < d; ++j) p.inputs.push_back("x" + std::to_string(j));
    p.score = [w, q](std::span<const double> x) {
      double lin = 0, prod = 1;
      for (std::size_t j = 0; j < x.size(); ++j) {
        lin += w[j] * x[j];
        prod *= std::tanh(q[j] * x[j]);
      }
      return 1.0 / (1.0 + std::exp(-lin)) + prod;
    };
    FeatureMatrix bg;
    bg.names = p.inputs;
    bg.rows = bgn(rng);
    for (std::size_t i = 0; i < bg.rows * d; ++i) bg.data.push_back(z(rng));
    std::vector<double> x(d);
    for (auto& v : x) v = z(rng);
    const auto a = shapley_exact(p, x, bg);
    double base = 0;
    for (std::size_t b = 0; b < bg.rows; ++b) base += p.score(bg.row(b));
    base /= static_cast<double>(bg.rows);
    const double sum = std::accumulate(a.phi.begin(), a.phi.end(), 0.0);
    worst = std::max(worst, std::abs(sum - (p.score(x) - base)));
  }

  Predictor dummy;
  dummy.inputs = {"a", "b", "unused"};
  dummy.score = [](std::span<const double> x) { return std::sin(x[0]) * x[1] + x[0] * x[0]; };
  FeatureMatrix bg;
  bg.names = dummy.inputs;
  bg.rows = 6;
  for (int i = 0; i < 18; ++i) bg.data.push_back(z(rng));
  const std::vector<double> xd{0.3, -1.2, 4.0};
  const double phi_dummy = shapley_exact(dummy, xd, bg).phi[2];

  Predictor add;
  add.inputs = {"x1", "x2"};
  add.score = [](std::span<const double> x) { return x[0] + x[1]; };
  FeatureMatrix zero_mean;
  zero_mean.names = add.inputs;
  zero_mean.rows = 2;
  zero_mean.data = {2.0, -1.0, -2.0, 1.0};
  const std::vector<double> xa{1.5, -0.25};
  const auto lin = shapley_exact(add, xa, zero_mean);
  const bool additive = lin.phi[0] == 1.5 && lin.phi[1] == -0.25;

  return {worst <= 1e-9 && phi_dummy == 0.0 && additive,
          "max efficiency error " + std::to_string(worst) + " over 100 triples, dummy phi " + fmt(phi_dummy) +
              ", additive phi (" + fmt(lin.phi[0]) + ", " + fmt(lin.phi[1]) + ")"};
}

}  // namespace

int main() {
  const std::vector<std::function<Verdict()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9, criterion10};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i]();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !v.pass;
    std::cout << "criterion " << (i + 1) << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << "  ["
              << fmt(secs, 1) << "s]" << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failures == 0 ? 0 : 1;
}
