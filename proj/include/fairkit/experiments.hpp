#pragma once

// Scripted end-to-end runs: Adult cross-validation of FFTree, synthetic
// mitigation interaction, FairView separation, temporal drift.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairkit/biasgen.hpp"
#include "fairkit/contrast.hpp"
#include "fairkit/dataset.hpp"
#include "fairkit/fftree.hpp"
#include "fairkit/metrics.hpp"
#include "fairkit/mitigate.hpp"
#include "fairkit/monitor.hpp"
#include "fairkit/preprocess.hpp"

namespace fairkit::experiments {

inline double median(std::vector<double> v) {
  require(!v.empty(), "EmptyInput", "median of nothing");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Signed DP of hard decisions on ds (group0 - group1).
inline double dp_of(const TabularDataset& ds, const std::string& sensitive, std::span<const int> yhat) {
  const auto y = ds.labels();
  const auto gc = group_confusion(y, yhat, ds.codes(sensitive), ds.weights(), ds.column(sensitive).classes);
  return group_metric_difference(GapKind::DP, gc).value.value_or(0.0);
}

inline double gap_of(GapKind k, const TabularDataset& ds, const std::string& sensitive, std::span<const int> yhat) {
  const auto y = ds.labels();
  const auto gc = group_confusion(y, yhat, ds.codes(sensitive), ds.weights(), ds.column(sensitive).classes);
  return group_metric_difference(k, gc).value.value_or(0.0);
}

inline double accuracy_of(const TabularDataset& ds, std::span<const int> yhat) {
  const auto y = ds.labels();
  const auto w = ds.weights();
  double ok = 0, tot = 0;
  for (std::size_t r = 0; r < y.size(); ++r) {
    ok += w[r] * (y[r] == yhat[r]);
    tot += w[r];
  }
  return ok / tot;
}

/// True when the model's training |DP| stays below tol at every centile of
/// its training scores.
inline bool dp_threshold_invariant(const FFTreeModel& m, const TabularDataset& train, const std::string& sensitive,
                                   double tol = 1e-9) {
  const auto scores = predict_score(m, train);
  auto sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  for (int p = 1; p <= 99; ++p) {
    const double tau = percentile_sorted(sorted, p / 100.0);
    std::vector<int> yhat(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) yhat[i] = scores[i] > tau ? 1 : 0;
    if (std::abs(dp_of(train, sensitive, yhat)) > tol) return false;
  }
  return true;
}

struct ComplianceCheck {
  bool audit_pass = true;
  bool no_sensitive_split = true;
  double flip = 0;
  bool prune_preserves = true;
  std::size_t nodes_pruned = 0;
};

/// Audit, sensitive-split and flip checks on a fitted tree; optionally
/// repeated after pruning each internal node in turn.
inline ComplianceCheck check_compliance(const FFTreeModel& m, const TabularDataset& train,
                                        const std::string& sensitive, bool prune_all,
                                        std::size_t max_prunes = 64) {
  ComplianceCheck c;
  const auto rep = audit_compliance(m, train);
  c.audit_pass = rep.pass;
  c.no_sensitive_split = rep.sensitive_split_nodes.empty();
  c.flip = flip_sensitivity(as_predictor(m), train, sensitive, 0.5);
  if (prune_all) {
    for (const auto& n : m.nodes) {
      if (n.leaf || c.nodes_pruned >= max_prunes) continue;
      const auto pm = prune(m, n.id);
      const auto pr = audit_compliance(pm, train);
      ++c.nodes_pruned;
      const double flip = flip_sensitivity(as_predictor(pm), train, sensitive, 0.5);
      if (!pr.pass || !pr.sensitive_split_nodes.empty() || flip != 0.0) c.prune_preserves = false;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Adult, FFTree with a DP constraint, k-fold.

struct FoldResult {
  double dp = 0;  // |DP| on the validation fold
  double accuracy = 0;
  double seconds = 0;
  std::size_t leaves = 0;
  ComplianceCheck compliance;
};

struct DeltaResult {
  double delta = 0;
  std::vector<FoldResult> folds;
  double median_dp = 0, median_accuracy = 0, max_seconds = 0;
  bool all_compliant = true;
};

struct AdultCvConfig {
  std::string sensitive = "sex";
  std::vector<double> deltas{0.05, 0.10, 0.15, 0.20};
  std::size_t k = 5;
  std::uint64_t seed = 2024;
  GrowthConfig growth;
  bool prune_checks = true;
};

struct AdultCvResult {
  std::vector<DeltaResult> deltas;
  bool zero_delta_invariant_ok = false;  // δ=0 fit on fold 0: DP threshold invariance
  ComplianceCheck zero_delta_compliance;
};

/// Encoding is refitted on the training rows of every fold.
inline AdultCvResult run_adult_cv(const TabularDataset& raw, const AdultCvConfig& cfg) {
  AdultCvResult out;
  const auto folds = kfold(raw, cfg.k, cfg.seed);
  std::vector<TabularDataset> trains, tests;
  for (const auto& f : folds) {
    const auto enc = encode(raw, f.train);
    trains.push_back(enc.dataset.select_rows(f.train));
    tests.push_back(enc.dataset.select_rows(f.test));
  }
  for (double delta : cfg.deltas) {
    DeltaResult dr;
    dr.delta = delta;
    std::vector<double> dps, accs;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto m = fit(trains[f], {{GapKind::DP, cfg.sensitive, delta}}, cfg.growth);
      FoldResult fr;
      fr.seconds = seconds_since(t0);
      const auto yhat = predict_label(m, tests[f]);
      fr.dp = std::abs(dp_of(tests[f], cfg.sensitive, yhat));
      fr.accuracy = accuracy_of(tests[f], yhat);
      fr.leaves = m.n_leaves();
      fr.compliance = check_compliance(m, trains[f], cfg.sensitive, cfg.prune_checks && f == 0);
      dr.all_compliant = dr.all_compliant && fr.compliance.audit_pass && fr.compliance.no_sensitive_split &&
                         fr.compliance.flip == 0.0 && fr.compliance.prune_preserves;
      dps.push_back(fr.dp);
      accs.push_back(fr.accuracy);
      dr.max_seconds = std::max(dr.max_seconds, fr.seconds);
      dr.folds.push_back(fr);
    }
    dr.median_dp = median(dps);
    dr.median_accuracy = median(accs);
    out.deltas.push_back(std::move(dr));
  }
  const auto m0 = fit(trains[0], {{GapKind::DP, cfg.sensitive, 0.0}}, cfg.growth);
  out.zero_delta_invariant_ok = dp_threshold_invariant(m0, trains[0], cfg.sensitive);
  out.zero_delta_compliance = check_compliance(m0, trains[0], cfg.sensitive, cfg.prune_checks);
  return out;
}

inline nlohmann::ordered_json to_json(const AdultCvResult& r) {
  nlohmann::ordered_json ds = nlohmann::ordered_json::array();
  for (const auto& d : r.deltas) {
    nlohmann::ordered_json folds = nlohmann::ordered_json::array();
    for (const auto& f : d.folds) {
      folds.push_back({{"dp", f.dp}, {"accuracy", f.accuracy}, {"seconds", f.seconds}, {"leaves", f.leaves},
                       {"audit_pass", f.compliance.audit_pass}, {"flip", f.compliance.flip}});
    }
    ds.push_back({{"delta", d.delta}, {"median_dp", d.median_dp}, {"median_accuracy", d.median_accuracy},
                  {"max_seconds", d.max_seconds}, {"all_compliant", d.all_compliant}, {"folds", folds}});
  }
  return {{"deltas", ds}, {"zero_delta_invariant", r.zero_delta_invariant_ok}};
}

// ---------------------------------------------------------------------------
// Synthetic mitigation interaction.

struct PolicyOutcome {
  std::string name;
  double dp = 0;        // signed DP of decisions on the evaluation rows
  double tpr_gap = 0;   // |TPR gap| against the evaluation label
  double accuracy = 0;  // against the evaluation label
};

struct InteractionResult {
  std::vector<PolicyOutcome> historical;   // unmitigated, ftu, thresh-dp
  std::vector<PolicyOutcome> measurement;  // unmitigated, ftu, thresh-dp, thresh-eopp (vs true Y)
  double seconds = 0;

  static const PolicyOutcome& find(const std::vector<PolicyOutcome>& v, const std::string& name) {
    for (const auto& p : v) {
      if (p.name == name) return p;
    }
    fail("MissingMetric", "no outcome named '" + name + "'");
  }
};

struct InteractionConfig {
  std::size_t n = 20000;
  std::uint64_t seed = 11;
  double beta = 1.5;
  double test_fraction = 0.3;
  LinearConfig linear;
};

namespace detail {

/// Outcomes of unmitigated / FTU / ThreshDP (/ ThreshEOPP) linear scorers.
/// Models are fitted on `train_label`, decisions evaluated against `eval_label`.
inline std::vector<PolicyOutcome> interaction_scenario(const GeneratedSample& sample, LabelView train_label,
                                                       LabelView eval_label, bool with_eopp,
                                                       const InteractionConfig& cfg) {
  const auto full = project_view(sample, false, false, train_label, true);
  const auto rs = split_rows(full, cfg.test_fraction, splitmix64(cfg.seed ^ 0x7e57ULL));
  const auto train = full.select_rows(rs.train);
  const auto test_train_view = full.select_rows(rs.test);
  const auto test = project_view({sample.dataset.select_rows(rs.test), sample.threshold_used}, false, false,
                                 eval_label, true);
  const auto& classes = full.column("A").classes;

  auto outcome = [&](const std::string& name, const std::vector<int>& yhat) {
    return PolicyOutcome{name, dp_of(test, "A", yhat), std::abs(gap_of(GapKind::EOPP, test, "A", yhat)),
                         accuracy_of(test, yhat)};
  };
  std::vector<PolicyOutcome> out;
  const auto full_model = fit_linear_score(train, cfg.linear);
  const auto p_full = as_predictor(full_model, "unmitigated");
  const auto yhat_full = predict_labels(p_full, test_train_view, 0.5);
  out.push_back(outcome("unmitigated", yhat_full));

  const auto ftu_train = ftu(train, "A");
  const auto p_ftu = as_predictor(fit_linear_score(ftu_train, cfg.linear), "ftu");
  out.push_back(outcome("ftu", predict_labels(p_ftu, test_train_view, 0.5)));

  const auto sc_train = predict_scores(p_full, train);
  const auto sc_test = predict_scores(p_full, test_train_view);
  const auto y_train = train.labels();
  auto pol = fit_threshold_policy(PolicyKind::DP, sc_train, y_train, train.codes("A"), classes);
  out.push_back(outcome("thresh-dp", apply_policy(pol, sc_test, test_train_view.codes("A"), classes)));
  if (with_eopp) {
    auto pe = fit_threshold_policy(PolicyKind::EOPP, sc_train, y_train, train.codes("A"), classes);
    out.push_back(outcome("thresh-eopp", apply_policy(pe, sc_test, test_train_view.codes("A"), classes)));
  }
  return out;
}

}  // namespace detail

/// (a) historical bias on R, trained and evaluated on Y; (b) measurement bias
/// on the label, trained on P_Y and evaluated against the true Y.
inline InteractionResult run_mitigation_interaction(const InteractionConfig& cfg = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  InteractionResult r;
  BiasSpec hist;
  hist.n = cfg.n;
  hist.seed = cfg.seed;
  hist.beta_h_R = cfg.beta;
  r.historical = detail::interaction_scenario(generate(hist), LabelView::true_Y, LabelView::true_Y, false, cfg);
  BiasSpec meas;
  meas.n = cfg.n;
  meas.seed = cfg.seed + 1;
  meas.beta_m_Y = cfg.beta;
  r.measurement = detail::interaction_scenario(generate(meas), LabelView::proxy_Y, LabelView::true_Y, true, cfg);
  r.seconds = seconds_since(t0);
  return r;
}

inline nlohmann::ordered_json to_json(const InteractionResult& r) {
  auto rows = [](const std::vector<PolicyOutcome>& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& p : v) {
      a.push_back({{"policy", p.name}, {"dp", p.dp}, {"tpr_gap", p.tpr_gap}, {"accuracy", p.accuracy}});
    }
    return a;
  };
  return {{"historical_bias_R", rows(r.historical)}, {"measurement_bias_Y", rows(r.measurement)},
          {"seconds", r.seconds}};
}

// ---------------------------------------------------------------------------
// FairView separation.

struct FairViewCase {
  TraceResult trace;
  WorldviewReport report;
  double max_delta_prior = 0;
};

struct FairViewResult {
  FairViewCase historical, measurement;
  double seconds = 0;
};

struct FairViewConfig {
  std::size_t n = 20000;
  std::uint64_t seed = 5;
  double beta = 1.5;
  double threshold = 0.05;
  std::size_t min_size = 10;
  TraceConfig trace;
};

inline FairViewCase fairview_case(const TabularDataset& ds, const FairViewConfig& cfg) {
  FairViewCase c;
  c.trace = trace(ds, "A", cfg.trace);
  const auto contrasts = g_contrast(c.trace.rules, ds, "A");
  c.report = evaluate_worldview(contrasts, cfg.threshold, cfg.min_size);
  for (const auto& rc : contrasts) {
    if (rc.delta_prior) c.max_delta_prior = std::max(c.max_delta_prior, *rc.delta_prior);
  }
  return c;
}

inline FairViewResult run_fairview(const FairViewConfig& cfg = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  FairViewResult r;
  BiasSpec hist;
  hist.n = cfg.n;
  hist.seed = cfg.seed;
  hist.beta_h_R = cfg.beta;
  r.historical = fairview_case(project_view(generate(hist), false, false, LabelView::true_Y, false), cfg);
  BiasSpec meas;
  meas.n = cfg.n;
  meas.seed = cfg.seed + 1;
  meas.beta_m_Y = cfg.beta;
  r.measurement = fairview_case(project_view(generate(meas), false, false, LabelView::proxy_Y, false), cfg);
  r.seconds = seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Temporal drift.

struct TemporalConfig {
  std::size_t n = 10000;
  std::uint64_t seed = 21;
  double beta_slice1 = 0.5;
  double beta_slice2 = 1.5;
  double shock_sd = 1.0;
  std::string shock_column;  // empty: the most important feature of the unmitigated model
  LinearConfig linear;
  std::size_t background_n = 128;
  std::size_t shapley_sample = 200;
};

struct TemporalResult {
  DriftReport drift;
  double dp_slice1 = 0, dp_slice2 = 0;
  double dp_overall_shock = 0, dp_conditioned_shock = 0;
  std::string shock_column;
  std::string deprived;
  double dp_retrained_slice2 = 0;
  DeltaShapleyReport delta;
  double seconds = 0;
};

/// Slice 1 and slice 2 differ only in the historical bias on R (and seed).
/// The mitigated model is a sensitive-blind linear scorer plus ThreshDP.
inline TemporalResult run_temporal(const TemporalConfig& cfg = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  TemporalResult r;
  BiasSpec s1;
  s1.n = cfg.n;
  s1.seed = cfg.seed;
  s1.beta_h_R = cfg.beta_slice1;
  BiasSpec s2 = s1;
  s2.seed = cfg.seed + 1;
  s2.beta_h_R = cfg.beta_slice2;
  const auto slice1 = project_view(generate(s1), false, false, LabelView::true_Y, false);
  const auto slice2 = project_view(generate(s2), false, false, LabelView::true_Y, false);
  const auto& classes = slice1.column("A").classes;

  // Individually fair base model (never reads A).
  const auto base1 = as_predictor(fit_linear_score(slice1, cfg.linear), "ftu-1");
  const auto sc1 = predict_scores(base1, slice1);
  auto pol1 = fit_threshold_policy(PolicyKind::DP, sc1, {}, slice1.codes("A"), classes);
  pol1.sensitive = "A";
  auto mitigated1 = with_policy(base1, pol1, classes);
  mitigated1.id = "thresh-dp-1";

  r.drift = evaluate_over_slices(mitigated1, {{"slice1", slice1}, {"slice2", slice2}}, "A");
  r.dp_slice1 = r.drift.rows[0].dp.value_or(0.0);
  r.dp_slice2 = r.drift.rows[1].dp.value_or(0.0);

  // Shocks on slice 1, deprived class = lower observed base rate.
  const auto y1 = slice1.labels();
  const auto a1 = slice1.codes("A");
  double n0 = 0, n1 = 0, p0 = 0, p1 = 0;
  for (std::size_t i = 0; i < y1.size(); ++i) {
    (a1[i] ? n1 : n0) += 1;
    (a1[i] ? p1 : p0) += y1[i];
  }
  r.deprived = p1 / n1 < p0 / n0 ? classes[1] : classes[0];
  const auto bg1 = background_matrix(base1, slice1, cfg.background_n, cfg.seed);
  r.shock_column = cfg.shock_column.empty()
                       ? most_important_feature(base1, slice1, bg1, cfg.shapley_sample, cfg.seed + 7)
                       : cfg.shock_column;
  const double sd = column_sd(slice1, r.shock_column);
  // The shock pushes the deprived class further down the most important
  // feature: the sign follows that feature's effect on the score.
  const double m_lo = [&] {
    auto low = apply_shock(slice1, {r.shock_column, cfg.shock_sd, -1, std::nullopt}, "A", sd);
    const auto a = predict_scores(base1, low);
    return std::accumulate(a.begin(), a.end(), 0.0);
  }();
  const double m_hi = std::accumulate(sc1.begin(), sc1.end(), 0.0);
  const int sign = m_lo < m_hi ? -1 : 1;
  const auto overall = apply_shock(slice1, {r.shock_column, cfg.shock_sd, sign, std::nullopt}, "A", sd);
  const auto conditioned = apply_shock(slice1, {r.shock_column, cfg.shock_sd, sign, r.deprived}, "A", sd);
  append(r.drift, evaluate_over_slices(mitigated1, {{"slice1+overall-shock", overall},
                                                    {"slice1+conditioned-shock", conditioned}},
                                       "A"));
  r.dp_overall_shock = r.drift.rows[2].dp.value_or(0.0);
  r.dp_conditioned_shock = r.drift.rows[3].dp.value_or(0.0);

  // Retrain on slice 2 with targets from the individually fair model.
  const auto targets = surrogate_targets(base1, slice2, "A");
  const auto slice2_sur = with_labels(slice2, targets);
  const auto base2 = as_predictor(fit_linear_score(slice2_sur, cfg.linear), "ftu-2");
  const auto sc2 = predict_scores(base2, slice2);
  auto pol2 = fit_threshold_policy(PolicyKind::DP, sc2, {}, slice2.codes("A"), classes);
  pol2.sensitive = "A";
  auto mitigated2 = with_policy(base2, pol2, classes);
  mitigated2.id = "thresh-dp-2";
  append(r.drift, evaluate_over_slices(mitigated2, {{"slice2", slice2}}, "A"));
  r.dp_retrained_slice2 = r.drift.rows[4].dp.value_or(0.0);

  // Attribution shift of the sensitive feature between the two policies.
  const auto margin1 = policy_margin(base1, pol1, classes);
  const auto margin2 = policy_margin(base2, pol2, classes);
  const auto bg2 = background_matrix(margin1, slice2, cfg.background_n, cfg.seed + 3);
  DeltaShapleyOptions dopt;
  dopt.sample_n = cfg.shapley_sample;
  dopt.seed = cfg.seed + 5;
  dopt.deprived = r.deprived;
  r.delta = group_delta_shapley(margin1, margin2, slice2, "A", bg2, dopt);
  r.seconds = seconds_since(t0);
  return r;
}

inline nlohmann::ordered_json to_json(const TemporalResult& r) {
  return {{"drift", to_json(r.drift)},
          {"shock_column", r.shock_column},
          {"deprived", r.deprived},
          {"dp_slice1", r.dp_slice1},
          {"dp_slice2", r.dp_slice2},
          {"dp_overall_shock", r.dp_overall_shock},
          {"dp_conditioned_shock", r.dp_conditioned_shock},
          {"dp_retrained_slice2", r.dp_retrained_slice2},
          {"delta_shapley", to_json(r.delta)},
          {"seconds", r.seconds}};
}

}  // namespace fairkit::experiments
