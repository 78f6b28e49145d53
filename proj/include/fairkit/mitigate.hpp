#pragma once

// Pre-processing transforms, a logistic baseline scorer, and group-threshold
// post-processing.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairkit/biasgen.hpp"
#include "fairkit/dataset.hpp"
#include "fairkit/error.hpp"
#include "fairkit/metrics.hpp"
#include "fairkit/predictor.hpp"
#include "fairkit/random.hpp"

namespace fairkit {

namespace detail {

inline const Column& binary_sensitive(const TabularDataset& ds, const std::string& name) {
  const auto& c = ds.column(name);
  require(!c.is_numeric() && c.classes.size() == 2, "NonBinarySensitive",
          "'" + name + "' must be a categorical column with two classes");
  return c;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

/// Removes the sensitive column from the model view (it stays as a
/// sensitive column for evaluation).
inline TabularDataset ftu(const TabularDataset& ds, const std::string& sensitive) {
  const auto& c = ds.column(sensitive);
  return ds.with_role(sensitive, c.schema.role == Role::sensitive ? Role::sensitive : Role::latent, false);
}

struct SuppressResult {
  TabularDataset dataset;
  std::vector<std::string> dropped;
  std::vector<std::pair<std::string, double>> correlations;
  std::vector<std::string> warnings;
};

/// FTU plus removal of every feature whose |Pearson correlation| with the
/// sensitive indicator exceeds corr_threshold.  Multiclass sensitive columns
/// use the max over one-vs-rest indicators.
inline SuppressResult suppress(const TabularDataset& ds, const std::string& sensitive,
                               double corr_threshold = 0.15) {
  const auto& s = ds.column(sensitive);
  require(!s.is_numeric(), "NotCategorical", "sensitive column must be categorical");
  std::vector<std::vector<double>> indicators;
  const std::size_t k = s.classes.size();
  for (std::size_t c = (k == 2 ? 1 : 0); c < k; ++c) {
    std::vector<double> ind(ds.n_rows());
    for (std::size_t r = 0; r < ds.n_rows(); ++r) ind[r] = s.codes[r] == static_cast<int>(c) ? 1.0 : 0.0;
    indicators.push_back(std::move(ind));
  }
  SuppressResult out{ftu(ds, sensitive), {sensitive}, {}, {}};
  for (const auto& name : ds.names_with_role(Role::feature)) {
    const auto& col = ds.column(name);
    std::vector<double> x(ds.n_rows());
    for (std::size_t r = 0; r < ds.n_rows(); ++r) x[r] = col.value(r);
    double best = 0;
    for (const auto& ind : indicators) best = std::max(best, std::abs(detail::pearson(x, ind)));
    out.correlations.emplace_back(name, best);
    if (best > corr_threshold) {
      out.dataset = out.dataset.without_column(name);
      out.dropped.push_back(name);
    }
  }
  if (out.dataset.names_with_role(Role::feature).empty()) {
    out.warnings.push_back("AllFeaturesDropped: no feature column survived suppression");
  }
  return out;
}

struct MassageResult {
  TabularDataset dataset;
  std::size_t m = 0;  // labels flipped in each direction
  std::string deprived, favored;
  std::vector<std::size_t> promoted, demoted;
};

/// Flips M labels each way so both groups move to the overall positive rate:
/// the M best-scored negatives of the deprived group become positive and the
/// M worst-scored positives of the favored group become negative.
inline MassageResult massage(const TabularDataset& ds, const std::string& sensitive,
                             std::span<const double> ranker_scores) {
  const auto& s = detail::binary_sensitive(ds, sensitive);
  require(ranker_scores.size() == ds.n_rows(), "ScoreLengthMismatch", "ranker scores must align with rows");
  const auto y = ds.labels();
  double n[2] = {0, 0}, pos[2] = {0, 0};
  for (std::size_t r = 0; r < y.size(); ++r) {
    n[s.codes[r]] += 1;
    pos[s.codes[r]] += y[r];
  }
  require(n[0] > 0 && n[1] > 0, "EmptyGroup", "both groups need rows");
  const int dep = pos[0] / n[0] <= pos[1] / n[1] ? 0 : 1;
  const int fav = 1 - dep;
  const double target = (pos[0] + pos[1]) / (n[0] + n[1]);
  const auto wanted = std::llround(n[dep] * target - pos[dep]);
  MassageResult out{ds, 0, s.classes[static_cast<std::size_t>(dep)], s.classes[static_cast<std::size_t>(fav)], {}, {}};
  if (wanted <= 0) return out;

  std::vector<std::size_t> cand_up, cand_down;
  for (std::size_t r = 0; r < y.size(); ++r) {
    if (s.codes[r] == dep && y[r] == 0) cand_up.push_back(r);
    if (s.codes[r] == fav && y[r] == 1) cand_down.push_back(r);
  }
  std::stable_sort(cand_up.begin(), cand_up.end(),
                   [&](auto a, auto b) { return ranker_scores[a] > ranker_scores[b]; });
  std::stable_sort(cand_down.begin(), cand_down.end(),
                   [&](auto a, auto b) { return ranker_scores[a] < ranker_scores[b]; });
  const auto m = std::min({static_cast<std::size_t>(wanted), cand_up.size(), cand_down.size()});
  std::vector<double> labels(y.begin(), y.end());
  for (std::size_t i = 0; i < m; ++i) {
    labels[cand_up[i]] = 1.0;
    labels[cand_down[i]] = 0.0;
    out.promoted.push_back(cand_up[i]);
    out.demoted.push_back(cand_down[i]);
  }
  auto target_col = ds.target();
  target_col.numeric = std::move(labels);
  out.dataset = ds.with_column(std::move(target_col));
  out.m = m;
  return out;
}

struct SampleWeightTable {
  std::vector<std::string> groups;
  // weight[g][y]
  std::vector<std::array<double, 2>> weight;
  std::vector<std::array<std::size_t, 2>> counts;

  double at(std::size_t g, int y) const { return weight[g][static_cast<std::size_t>(y)]; }
};

inline nlohmann::json to_json(const SampleWeightTable& t) {
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t g = 0; g < t.groups.size(); ++g) {
    for (int y = 0; y < 2; ++y) {
      cells.push_back({{"group", t.groups[g]}, {"y", y}, {"count", t.counts[g][static_cast<std::size_t>(y)]},
                       {"weight", t.at(g, y)}});
    }
  }
  return {{"cells", cells}};
}

namespace detail {

inline SampleWeightTable cell_counts(const TabularDataset& ds, const std::string& sensitive) {
  const auto& s = ds.column(sensitive);
  require(!s.is_numeric(), "NotCategorical", "sensitive column must be categorical");
  const auto y = ds.labels();
  SampleWeightTable t;
  t.groups = s.classes;
  t.counts.assign(s.classes.size(), {0, 0});
  t.weight.assign(s.classes.size(), {0.0, 0.0});
  for (std::size_t r = 0; r < y.size(); ++r) ++t.counts[static_cast<std::size_t>(s.codes[r])][static_cast<std::size_t>(y[r])];
  for (std::size_t g = 0; g < t.groups.size(); ++g) {
    for (int v = 0; v < 2; ++v) {
      require(t.counts[g][static_cast<std::size_t>(v)] > 0, "EmptyCell",
              "cell (" + t.groups[g] + "," + std::to_string(v) + ") is empty");
    }
  }
  return t;
}

}  // namespace detail

struct ReweighResult {
  SampleWeightTable table;
  TabularDataset dataset;
};

/// w(s,y) = P(s) P(y) / P(s,y) from row counts; the result replaces row weights.
inline ReweighResult reweigh(const TabularDataset& ds, const std::string& sensitive) {
  auto t = detail::cell_counts(ds, sensitive);
  const auto n = static_cast<double>(ds.n_rows());
  double ny[2] = {0, 0};
  for (const auto& c : t.counts) {
    ny[0] += static_cast<double>(c[0]);
    ny[1] += static_cast<double>(c[1]);
  }
  for (std::size_t g = 0; g < t.groups.size(); ++g) {
    const double ns = static_cast<double>(t.counts[g][0] + t.counts[g][1]);
    for (int v = 0; v < 2; ++v) {
      const double nsy = static_cast<double>(t.counts[g][static_cast<std::size_t>(v)]);
      t.weight[g][static_cast<std::size_t>(v)] = (ns * ny[v]) / (n * nsy);
    }
  }
  const auto& s = ds.column(sensitive);
  const auto y = ds.labels();
  std::vector<double> w(ds.n_rows());
  for (std::size_t r = 0; r < w.size(); ++r) w[r] = t.at(static_cast<std::size_t>(s.codes[r]), y[r]);
  return {t, ds.with_weights(std::move(w))};
}

/// Resizes every (s,y) cell to round(n P(s) P(y)) rows: random subset when
/// shrinking, all rows plus draws with replacement when growing.
inline TabularDataset resample(const TabularDataset& ds, const std::string& sensitive, std::uint64_t seed) {
  const auto t = detail::cell_counts(ds, sensitive);
  const auto& s = ds.column(sensitive);
  const auto y = ds.labels();
  const auto n = static_cast<double>(ds.n_rows());
  double ny[2] = {0, 0};
  for (const auto& c : t.counts) {
    ny[0] += static_cast<double>(c[0]);
    ny[1] += static_cast<double>(c[1]);
  }
  std::vector<std::vector<std::size_t>> cells(t.groups.size() * 2);
  for (std::size_t r = 0; r < y.size(); ++r) cells[static_cast<std::size_t>(s.codes[r]) * 2 + static_cast<std::size_t>(y[r])].push_back(r);
  Rng root(seed);
  std::vector<std::size_t> rows;
  for (std::size_t g = 0; g < t.groups.size(); ++g) {
    const double ns = static_cast<double>(t.counts[g][0] + t.counts[g][1]);
    for (int v = 0; v < 2; ++v) {
      auto& cell = cells[g * 2 + static_cast<std::size_t>(v)];
      const auto target = static_cast<std::size_t>(std::llround(ns * ny[v] / n));
      Rng rng = root.split(g * 2 + static_cast<std::size_t>(v));
      if (target <= cell.size()) {
        shuffle(cell.begin(), cell.end(), rng);
        rows.insert(rows.end(), cell.begin(), cell.begin() + static_cast<std::ptrdiff_t>(target));
      } else {
        rows.insert(rows.end(), cell.begin(), cell.end());
        for (std::size_t i = cell.size(); i < target; ++i) rows.push_back(cell[rng.below(cell.size())]);
      }
    }
  }
  std::sort(rows.begin(), rows.end());
  return ds.select_rows(rows);
}

// ---------------------------------------------------------------------------
// Logistic baseline.

struct LinearConfig {
  std::size_t iterations = 300;
  double learning_rate = 1.0;  // upper bound; the step is capped by the curvature bound
  double l2 = 0.0;
};

struct LinearScoreModel {
  std::vector<std::string> features;
  std::vector<double> mean, scale, coef;
  double intercept = 0;
  LinearConfig config;
  std::vector<double> loss_history;
  double step = 0;

  double score(std::span<const double> x) const {
    double z = intercept;
    for (std::size_t j = 0; j < coef.size(); ++j) z += coef[j] * (x[j] - mean[j]) / scale[j];
    return sigmoid(z);
  }
};

/// Full-batch gradient descent on the weighted mean log-loss from zero
/// initialization.  Inputs are z-scored internally.  The step size is capped
/// at 4 / lambda_max of the weighted Gram matrix so the loss never increases.
inline LinearScoreModel fit_linear_score(const TabularDataset& train, const LinearConfig& cfg = {}) {
  LinearScoreModel m;
  m.config = cfg;
  m.features = train.model_inputs();
  const auto x = feature_matrix(train, m.features);
  const auto y = train.labels();
  const auto w = train.weights();
  const std::size_t n = x.rows, d = x.cols();
  double wsum = 0;
  for (double v : w) wsum += v;
  m.mean.assign(d, 0.0);
  m.scale.assign(d, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    double mu = 0, var = 0;
    for (std::size_t r = 0; r < n; ++r) mu += w[r] * x.at(r, j);
    mu /= wsum;
    for (std::size_t r = 0; r < n; ++r) var += w[r] * (x.at(r, j) - mu) * (x.at(r, j) - mu);
    var /= wsum;
    m.mean[j] = mu;
    m.scale[j] = var > 0 ? std::sqrt(var) : 1.0;
  }
  std::vector<double> z(n * (d + 1));
  for (std::size_t r = 0; r < n; ++r) {
    z[r * (d + 1)] = 1.0;
    for (std::size_t j = 0; j < d; ++j) z[r * (d + 1) + j + 1] = (x.at(r, j) - m.mean[j]) / m.scale[j];
  }
  // Power iteration for the largest eigenvalue of Z^T W Z / sum(w).
  std::vector<double> v(d + 1, 1.0), u(d + 1);
  double lambda = 1.0;
  for (int it = 0; it < 50; ++it) {
    std::fill(u.begin(), u.end(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0;
      for (std::size_t j = 0; j <= d; ++j) dot += z[r * (d + 1) + j] * v[j];
      for (std::size_t j = 0; j <= d; ++j) u[j] += w[r] * dot * z[r * (d + 1) + j];
    }
    double norm = 0;
    for (auto& val : u) {
      val /= wsum;
      norm += val * val;
    }
    norm = std::sqrt(norm);
    if (norm <= 0) break;
    lambda = norm;
    for (std::size_t j = 0; j <= d; ++j) v[j] = u[j] / norm;
  }
  const double lipschitz = 0.25 * lambda * 1.05 + cfg.l2;
  m.step = std::min(cfg.learning_rate, 1.0 / lipschitz);

  std::vector<double> beta(d + 1, 0.0), grad(d + 1);
  auto loss_and_grad = [&](bool want_grad) {
    double loss = 0;
    if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      double t = 0;
      for (std::size_t j = 0; j <= d; ++j) t += z[r * (d + 1) + j] * beta[j];
      // log(1 + e^t) - y t, evaluated stably.
      const double softplus = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
      loss += w[r] * (softplus - y[r] * t);
      if (want_grad) {
        const double g = w[r] * (sigmoid(t) - y[r]);
        for (std::size_t j = 0; j <= d; ++j) grad[j] += g * z[r * (d + 1) + j];
      }
    }
    loss /= wsum;
    double reg = 0;
    for (std::size_t j = 1; j <= d; ++j) reg += beta[j] * beta[j];
    loss += 0.5 * cfg.l2 * reg;
    if (want_grad) {
      for (std::size_t j = 0; j <= d; ++j) grad[j] = grad[j] / wsum + (j ? cfg.l2 * beta[j] : 0.0);
    }
    return loss;
  };
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const double loss = loss_and_grad(true);
    require(std::isfinite(loss), "NonFiniteLoss", "loss diverged at iteration " + std::to_string(it));
    m.loss_history.push_back(loss);
    for (std::size_t j = 0; j <= d; ++j) beta[j] -= m.step * grad[j];
  }
  const double final_loss = loss_and_grad(false);
  require(std::isfinite(final_loss), "NonFiniteLoss", "loss diverged");
  m.loss_history.push_back(final_loss);
  m.intercept = beta[0];
  m.coef.assign(beta.begin() + 1, beta.end());
  return m;
}

inline Predictor as_predictor(const LinearScoreModel& m, std::string id = "linear") {
  auto shared = std::make_shared<LinearScoreModel>(m);
  Predictor p;
  p.id = std::move(id);
  p.inputs = m.features;
  p.score = [shared](std::span<const double> x) { return shared->score(x); };
  return p;
}

inline nlohmann::json to_json(const LinearScoreModel& m) {
  return {{"meta", {{"model", "linear"},
                    {"features", m.features},
                    {"config", {{"iterations", m.config.iterations}, {"learning_rate", m.config.learning_rate}, {"l2", m.config.l2}}},
                    {"step", m.step}}},
          {"mean", m.mean},
          {"scale", m.scale},
          {"coef", m.coef},
          {"intercept", m.intercept},
          {"final_loss", m.loss_history.empty() ? 0.0 : m.loss_history.back()}};
}

inline LinearScoreModel linear_from_json(const nlohmann::json& j) {
  try {
    LinearScoreModel m;
    const auto& meta = j.at("meta");
    m.features = meta.at("features").get<std::vector<std::string>>();
    const auto& c = meta.at("config");
    m.config.iterations = c.at("iterations").get<std::size_t>();
    m.config.learning_rate = c.at("learning_rate").get<double>();
    m.config.l2 = c.at("l2").get<double>();
    m.step = meta.value("step", 0.0);
    m.mean = j.at("mean").get<std::vector<double>>();
    m.scale = j.at("scale").get<std::vector<double>>();
    m.coef = j.at("coef").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    require(m.mean.size() == m.features.size() && m.scale.size() == m.features.size() &&
                m.coef.size() == m.features.size(),
            "BadModel", "coefficient vector sizes differ");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail("BadModel", e.what());
  }
}

// ---------------------------------------------------------------------------
// Group-threshold post-processing.

enum class PolicyKind { DP, EOPP, EODDS, CDP };

inline std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::DP: return "DP";
    case PolicyKind::EOPP: return "EOPP";
    case PolicyKind::EODDS: return "EODDS";
    case PolicyKind::CDP: return "CDP";
  }
  return "?";
}

inline PolicyKind parse_policy_kind(std::string_view s) {
  for (auto k : {PolicyKind::DP, PolicyKind::EOPP, PolicyKind::EODDS, PolicyKind::CDP}) {
    if (s == to_string(k)) return k;
  }
  fail("BadPolicy", "unknown policy kind '" + std::string(s) + "'");
}

struct MixedThreshold {
  double t_lo = 0, t_hi = 0;
  double p = 0;  // probability of using t_lo

  bool operator==(const MixedThreshold&) const = default;
};

struct ThresholdPolicy {
  PolicyKind kind = PolicyKind::DP;
  std::string sensitive;
  std::string stratum;                     // CDP only
  std::map<std::string, double> thresholds;  // key: group, or "group|stratum" for CDP
  std::map<std::string, MixedThreshold> mixed;  // EODDS
  double epsilon = 0.005;
  double achieved_gap = 0;
  std::vector<std::string> flags;

  bool operator==(const ThresholdPolicy&) const = default;
};

struct PolicyOptions {
  double epsilon = 0.005;
  std::optional<double> target_rate;  // DP/CDP: desired common acceptance rate
  std::size_t max_grid = 512;
};

namespace detail {

/// Candidate thresholds for one group: 0, midpoints of consecutive distinct
/// scores, 1; thinned to at most max_grid points by quantile position.
inline std::vector<double> threshold_grid(std::vector<double> scores, std::size_t max_grid) {
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  std::vector<double> mids;
  for (std::size_t i = 1; i < scores.size(); ++i) mids.push_back(0.5 * (scores[i - 1] + scores[i]));
  if (mids.size() + 2 > max_grid && max_grid > 2) {
    std::vector<double> thin;
    const std::size_t keep = max_grid - 2;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto idx = static_cast<std::size_t>(std::llround(static_cast<double>(i) * static_cast<double>(mids.size() - 1) /
                                                             static_cast<double>(std::max<std::size_t>(keep - 1, 1))));
      if (thin.empty() || thin.back() != mids[idx]) thin.push_back(mids[idx]);
    }
    mids = std::move(thin);
  }
  std::vector<double> grid{0.0};
  for (double m : mids) {
    if (m > 0.0 && m < 1.0) grid.push_back(m);
  }
  grid.push_back(1.0);
  return grid;
}

struct GroupCurve {
  std::vector<double> grid;       // ascending thresholds
  std::vector<double> rate;       // criterion rate per threshold
  std::vector<double> correct;    // correctly classified rows per threshold (if y)
  std::vector<double> accepted;   // accepted rows per threshold
  std::vector<double> tpr, fpr;   // for EODDS
  double n = 0, n_pos = 0, n_neg = 0;
};

inline GroupCurve build_curve(const std::vector<double>& sc, const std::vector<int>* y, bool tpr_rate,
                              std::size_t max_grid) {
  GroupCurve c;
  c.grid = threshold_grid(sc, max_grid);
  std::vector<std::size_t> order(sc.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return sc[a] > sc[b]; });
  c.n = static_cast<double>(sc.size());
  if (y) {
    for (int v : *y) (v == 1 ? c.n_pos : c.n_neg) += 1;
  }
  // Walk thresholds from high to low, accumulating accepted rows.
  const std::size_t G = c.grid.size();
  c.rate.resize(G);
  c.correct.resize(G);
  c.accepted.resize(G);
  c.tpr.resize(G);
  c.fpr.resize(G);
  std::size_t i = 0;
  double acc = 0, tp = 0, fp = 0;
  for (std::size_t gi = G; gi-- > 0;) {
    const double t = c.grid[gi];
    while (i < order.size() && sc[order[i]] > t) {
      acc += 1;
      if (y) ((*y)[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    c.accepted[gi] = acc;
    c.tpr[gi] = c.n_pos > 0 ? tp / c.n_pos : 0.0;
    c.fpr[gi] = c.n_neg > 0 ? fp / c.n_neg : 0.0;
    c.correct[gi] = tp + (c.n_neg - fp);
    c.rate[gi] = tpr_rate ? c.tpr[gi] : acc / c.n;
  }
  return c;
}

struct Choice {
  std::vector<std::size_t> idx;  // per group grid index
  double gap = 0;
  double secondary = 0;  // smaller is better
};

/// Lexicographic search over common target rates: every achievable rate of
/// any group is tried, each group takes its closest achievable rate, and the
/// choice minimizes (gap beyond epsilon, secondary objective).
inline Choice search_common_rate(const std::vector<GroupCurve>& curves, bool have_y,
                                 std::optional<double> target_rate, double base_rate, double epsilon) {
  std::vector<double> targets;
  for (const auto& c : curves) targets.insert(targets.end(), c.rate.begin(), c.rate.end());
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  double n_total = 0;
  for (const auto& c : curves) n_total += c.n;

  std::optional<Choice> best;
  for (double r : targets) {
    Choice ch;
    double lo = 1e300, hi = -1e300, accepted = 0, correct = 0;
    for (const auto& c : curves) {
      std::size_t bi = 0;
      double bd = 1e300;
      for (std::size_t k = 0; k < c.rate.size(); ++k) {
        const double dist = std::abs(c.rate[k] - r);
        const bool better = dist < bd - 1e-15 ||
                            (std::abs(dist - bd) <= 1e-15 && have_y && c.correct[k] > c.correct[bi]);
        if (better) {
          bd = dist;
          bi = k;
        }
      }
      ch.idx.push_back(bi);
      lo = std::min(lo, c.rate[bi]);
      hi = std::max(hi, c.rate[bi]);
      accepted += c.accepted[bi];
      correct += c.correct[bi];
    }
    ch.gap = hi - lo;
    const double overall = accepted / n_total;
    if (target_rate) {
      ch.secondary = std::abs(overall - *target_rate);
    } else if (have_y) {
      ch.secondary = -correct / n_total;
    } else {
      ch.secondary = std::abs(overall - base_rate);
    }
    if (!best) {
      best = ch;
      continue;
    }
    const double e_new = std::max(ch.gap - epsilon, 0.0), e_old = std::max(best->gap - epsilon, 0.0);
    if (e_new < e_old - 1e-15 || (std::abs(e_new - e_old) <= 1e-15 && ch.secondary < best->secondary - 1e-15)) {
      best = ch;
    }
  }
  return *best;
}

struct Pt {
  double x, y;
};

/// Intersections of two monotone polylines (including shared vertices and
/// overlapping collinear pieces).
inline std::vector<Pt> polyline_crossings(const std::vector<Pt>& a, const std::vector<Pt>& b) {
  std::vector<Pt> out;
  const double eps = 1e-12;
  for (std::size_t i = 0; i + 1 < a.size(); ++i) {
    for (std::size_t j = 0; j + 1 < b.size(); ++j) {
      const Pt p = a[i], r{a[i + 1].x - a[i].x, a[i + 1].y - a[i].y};
      const Pt q = b[j], s{b[j + 1].x - b[j].x, b[j + 1].y - b[j].y};
      const double denom = r.x * s.y - r.y * s.x;
      const Pt qp{q.x - p.x, q.y - p.y};
      if (std::abs(denom) < eps) {
        // Parallel: collect endpoints lying on the other segment.
        auto on = [&](Pt c, Pt o, Pt d) {
          const double len2 = d.x * d.x + d.y * d.y;
          const double cross = (c.x - o.x) * d.y - (c.y - o.y) * d.x;
          if (std::abs(cross) > 1e-12) return false;
          if (len2 == 0) return std::abs(c.x - o.x) < eps && std::abs(c.y - o.y) < eps;
          const double t = ((c.x - o.x) * d.x + (c.y - o.y) * d.y) / len2;
          return t >= -eps && t <= 1 + eps;
        };
        for (Pt c : {q, b[j + 1]}) {
          if (on(c, p, r)) out.push_back(c);
        }
        for (Pt c : {p, a[i + 1]}) {
          if (on(c, q, s)) out.push_back(c);
        }
        continue;
      }
      const double t = (qp.x * s.y - qp.y * s.x) / denom;
      const double u = (qp.x * r.y - qp.y * r.x) / denom;
      if (t >= -eps && t <= 1 + eps && u >= -eps && u <= 1 + eps) out.push_back({p.x + t * r.x, p.y + t * r.y});
    }
  }
  return out;
}

/// Locates pt on the group's ROC polyline; returns the adjacent-threshold mixture.
inline std::optional<MixedThreshold> locate_on_curve(const GroupCurve& c, Pt pt, double tol) {
  // Points ordered by decreasing threshold: index G-1 (strictest) .. 0.
  const std::size_t G = c.grid.size();
  for (std::size_t k = G - 1; k > 0; --k) {
    const Pt a{c.fpr[k], c.tpr[k]}, b{c.fpr[k - 1], c.tpr[k - 1]};
    const Pt d{b.x - a.x, b.y - a.y};
    const double len2 = d.x * d.x + d.y * d.y;
    double t = 0;
    if (len2 > 0) t = std::clamp(((pt.x - a.x) * d.x + (pt.y - a.y) * d.y) / len2, 0.0, 1.0);
    const Pt proj{a.x + t * d.x, a.y + t * d.y};
    if (std::abs(proj.x - pt.x) <= tol && std::abs(proj.y - pt.y) <= tol) {
      return MixedThreshold{c.grid[k - 1], c.grid[k], t};
    }
  }
  return std::nullopt;
}

inline std::string cdp_key(const std::string& group, const std::string& stratum) { return group + "|" + stratum; }

}  // namespace detail

/// Fits group thresholds.  `y` may be empty for DP/CDP.  Groups are
/// identified by name (class label) so policies transfer across datasets.
inline ThresholdPolicy fit_threshold_policy(PolicyKind kind, std::span<const double> scores, std::span<const int> y,
                                            std::span<const int> s, const std::vector<std::string>& group_names,
                                            std::span<const int> stratum = {},
                                            const std::vector<std::string>& stratum_names = {},
                                            const PolicyOptions& opt = {}) {
  detail::check_lengths(scores.size(), {s.size()});
  const bool have_y = !y.empty();
  if (have_y) detail::check_lengths(scores.size(), {y.size()});
  require(have_y || kind == PolicyKind::DP || kind == PolicyKind::CDP, "UndefinedRate",
          "labels are required for EOPP and EODDS thresholds");
  require(kind != PolicyKind::CDP || stratum.size() == scores.size(), "BadPolicy", "CDP needs a stratum vector");
  for (double v : scores) require(v >= 0.0 && v <= 1.0, "BadScores", "scores must lie in [0,1]");

  ThresholdPolicy pol;
  pol.kind = kind;
  pol.epsilon = opt.epsilon;

  auto fit_block = [&](const std::vector<std::size_t>& rows, const std::string& key_suffix, bool cdp) {
    std::map<int, std::vector<std::size_t>> by_group;
    for (auto r : rows) by_group[s[r]].push_back(r);
    std::vector<detail::GroupCurve> curves;
    std::vector<std::string> names;
    double base_accept = 0;
    for (auto& [g, idx] : by_group) {
      std::vector<double> sc;
      std::vector<int> yy;
      for (auto r : idx) {
        sc.push_back(scores[r]);
        if (have_y) yy.push_back(y[r]);
        base_accept += scores[r] > 0.5 ? 1 : 0;
      }
      if (kind == PolicyKind::EOPP) {
        require(std::count(yy.begin(), yy.end(), 1) > 0, "UndefinedRate",
                "group '" + detail::group_name(group_names, g) + "' has no positives");
      }
      if (kind == PolicyKind::EODDS) {
        const auto pos = std::count(yy.begin(), yy.end(), 1);
        require(pos > 0 && static_cast<std::size_t>(pos) < yy.size(), "UndefinedRate",
                "group '" + detail::group_name(group_names, g) + "' needs positives and negatives");
      }
      curves.push_back(detail::build_curve(sc, have_y ? &yy : nullptr, kind == PolicyKind::EOPP, opt.max_grid));
      names.push_back(detail::group_name(group_names, g));
    }
    base_accept /= static_cast<double>(rows.size());
    if (kind == PolicyKind::EODDS) {
      std::vector<std::vector<detail::Pt>> lines;
      for (const auto& c : curves) {
        std::vector<detail::Pt> pts;
        for (std::size_t k = c.grid.size(); k-- > 0;) pts.push_back({c.fpr[k], c.tpr[k]});
        lines.push_back(std::move(pts));
      }
      std::vector<detail::Pt> cands = lines.size() == 1 ? lines[0] : detail::polyline_crossings(lines[0], lines[1]);
      double n_total = 0;
      for (const auto& c : curves) n_total += c.n;
      std::optional<std::pair<double, std::vector<MixedThreshold>>> best;
      for (const auto& pt : cands) {
        std::vector<MixedThreshold> mix;
        bool ok = true;
        for (const auto& c : curves) {
          auto m = detail::locate_on_curve(c, pt, 1e-9);
          if (!m) {
            ok = false;
            break;
          }
          mix.push_back(*m);
        }
        if (!ok) continue;
        double correct = 0;
        for (const auto& c : curves) correct += c.n_pos * pt.y + c.n_neg * (1 - pt.x);
        const double accuracy = correct / n_total;
        if (!best || accuracy > best->first + 1e-15) best = std::make_pair(accuracy, mix);
      }
      require(best.has_value(), "UnachievableEpsilon", "no common ROC point found");
      double max_gap = 0;
      std::vector<double> fprs, tprs;
      for (std::size_t g = 0; g < curves.size(); ++g) {
        pol.mixed[names[g]] = best->second[g];
        const auto& m = best->second[g];
        const auto& c = curves[g];
        const auto lo = static_cast<std::size_t>(std::lower_bound(c.grid.begin(), c.grid.end(), m.t_lo) - c.grid.begin());
        const auto hi = static_cast<std::size_t>(std::lower_bound(c.grid.begin(), c.grid.end(), m.t_hi) - c.grid.begin());
        fprs.push_back(m.p * c.fpr[lo] + (1 - m.p) * c.fpr[hi]);
        tprs.push_back(m.p * c.tpr[lo] + (1 - m.p) * c.tpr[hi]);
      }
      for (std::size_t a = 0; a < fprs.size(); ++a) {
        for (std::size_t b = a + 1; b < fprs.size(); ++b) {
          max_gap = std::max({max_gap, std::abs(fprs[a] - fprs[b]), std::abs(tprs[a] - tprs[b])});
        }
      }
      pol.achieved_gap = std::max(pol.achieved_gap, max_gap);
      const auto& mix0 = best->second[0];
      if (mix0.t_lo == 0.0 && mix0.p >= 1.0 - 1e-12) pol.flags.push_back("TrivialCommonPoint(accept_all)");
      if (mix0.t_hi == 1.0 && mix0.p <= 1e-12) pol.flags.push_back("TrivialCommonPoint(reject_all)");
      return;
    }
    const auto ch = detail::search_common_rate(curves, have_y, opt.target_rate, base_accept, opt.epsilon);
    for (std::size_t g = 0; g < curves.size(); ++g) {
      const std::string key = cdp ? detail::cdp_key(names[g], key_suffix) : names[g];
      pol.thresholds[key] = curves[g].grid[ch.idx[g]];
    }
    pol.achieved_gap = std::max(pol.achieved_gap, ch.gap);
  };

  if (kind == PolicyKind::CDP) {
    std::map<int, std::vector<std::size_t>> by_stratum;
    for (std::size_t r = 0; r < scores.size(); ++r) by_stratum[stratum[r]].push_back(r);
    for (auto& [st, rows] : by_stratum) fit_block(rows, detail::group_name(stratum_names, st), true);
  } else {
    std::vector<std::size_t> rows(scores.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    fit_block(rows, "", false);
  }
  if (kind == PolicyKind::EODDS) {
    // The crossing is exact on the fitted data up to floating-point error.
    if (pol.achieved_gap > opt.epsilon) pol.flags.push_back("UnachievableEpsilon");
  } else if (pol.achieved_gap > opt.epsilon + 1e-12) {
    pol.flags.push_back("UnachievableEpsilon");
  }
  return pol;
}

/// decision = 1{score > t_key}; EODDS rows use t_lo with probability p,
/// drawn from a per-row counter so results do not depend on row order.
inline std::vector<int> apply_policy(const ThresholdPolicy& pol, std::span<const double> scores, std::span<const int> s,
                                     const std::vector<std::string>& group_names, std::span<const int> stratum = {},
                                     const std::vector<std::string>& stratum_names = {}, std::uint64_t seed = 0) {
  detail::check_lengths(scores.size(), {s.size()});
  std::vector<int> out(scores.size());
  for (std::size_t r = 0; r < scores.size(); ++r) {
    const auto g = detail::group_name(group_names, s[r]);
    if (pol.kind == PolicyKind::EODDS) {
      auto it = pol.mixed.find(g);
      require(it != pol.mixed.end(), "UnknownGroup", "no thresholds for group '" + g + "'");
      const bool use_lo = counter_uniform(seed, r) < it->second.p;
      out[r] = scores[r] > (use_lo ? it->second.t_lo : it->second.t_hi) ? 1 : 0;
      continue;
    }
    std::string key = g;
    if (pol.kind == PolicyKind::CDP) {
      require(stratum.size() == scores.size(), "BadPolicy", "CDP policy needs the stratum column");
      key = detail::cdp_key(g, detail::group_name(stratum_names, stratum[r]));
    }
    auto it = pol.thresholds.find(key);
    require(it != pol.thresholds.end(), "UnknownGroup", "no threshold for key '" + key + "'");
    out[r] = scores[r] > it->second ? 1 : 0;
  }
  return out;
}

/// Wraps a scorer so that its decisions follow the policy.  The sensitive
/// (and stratum) column becomes an input, so flip sensitivity is generally
/// non-zero for such models.
inline Predictor with_policy(const Predictor& base, const ThresholdPolicy& pol,
                             const std::vector<std::string>& group_names,
                             const std::vector<std::string>& stratum_names = {}, std::uint64_t seed = 0) {
  Predictor p;
  p.id = base.id + "+thresh-" + std::string(to_string(pol.kind));
  p.inputs = base.inputs;
  const std::size_t n_base = base.inputs.size();
  p.inputs.push_back(pol.sensitive);
  if (pol.kind == PolicyKind::CDP) p.inputs.push_back(pol.stratum);
  auto shared = std::make_shared<ThresholdPolicy>(pol);
  auto score = base.score;
  p.score = [score, n_base](std::span<const double> x) { return score(x.first(n_base)); };
  p.decide = [score, n_base, shared, group_names, stratum_names, seed](std::span<const double> x, std::size_t row,
                                                                       double) {
    const double sc = score(x.first(n_base));
    const auto g = detail::group_name(group_names, static_cast<int>(x[n_base]));
    if (shared->kind == PolicyKind::EODDS) {
      auto it = shared->mixed.find(g);
      require(it != shared->mixed.end(), "UnknownGroup", "no thresholds for group '" + g + "'");
      const bool use_lo = counter_uniform(seed, row) < it->second.p;
      return sc > (use_lo ? it->second.t_lo : it->second.t_hi) ? 1 : 0;
    }
    std::string key = g;
    if (shared->kind == PolicyKind::CDP) {
      key = detail::cdp_key(g, detail::group_name(stratum_names, static_cast<int>(x[n_base + 1])));
    }
    auto it = shared->thresholds.find(key);
    require(it != shared->thresholds.end(), "UnknownGroup", "no threshold for key '" + key + "'");
    return sc > it->second ? 1 : 0;
  };
  return p;
}

inline nlohmann::json to_json(const ThresholdPolicy& p) {
  nlohmann::json mixed = nlohmann::json::object();
  for (const auto& [k, m] : p.mixed) mixed[k] = {{"t_lo", m.t_lo}, {"t_hi", m.t_hi}, {"p", m.p}};
  return {{"kind", to_string(p.kind)}, {"sensitive", p.sensitive}, {"stratum", p.stratum},
          {"thresholds", p.thresholds}, {"mixed", mixed}, {"epsilon", p.epsilon},
          {"achieved_gap", p.achieved_gap}, {"flags", p.flags}};
}

inline ThresholdPolicy policy_from_json(const nlohmann::json& j) {
  try {
    ThresholdPolicy p;
    p.kind = parse_policy_kind(j.at("kind").get<std::string>());
    p.sensitive = j.at("sensitive").get<std::string>();
    p.stratum = j.value("stratum", std::string());
    p.thresholds = j.at("thresholds").get<std::map<std::string, double>>();
    for (const auto& [k, m] : j.at("mixed").items()) {
      p.mixed[k] = {m.at("t_lo").get<double>(), m.at("t_hi").get<double>(), m.at("p").get<double>()};
    }
    p.epsilon = j.at("epsilon").get<double>();
    p.achieved_gap = j.value("achieved_gap", 0.0);
    p.flags = j.value("flags", std::vector<std::string>{});
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail("BadPolicy", e.what());
  }
}

}  // namespace fairkit
