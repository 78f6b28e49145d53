#pragma once

// FairX: fairness stability over time slices, shocks, surrogate targets,
// exact interventional Shapley values.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairkit/dataset.hpp"
#include "fairkit/error.hpp"
#include "fairkit/metrics.hpp"
#include "fairkit/mitigate.hpp"
#include "fairkit/predictor.hpp"
#include "fairkit/random.hpp"

namespace fairkit {

// ---------------------------------------------------------------------------
// Drift over slices.

struct DriftRow {
  std::string model_id;
  std::string context;
  OptRate dp;  // signed, group0 - group1
  OptRate accuracy;
  OptRate auc;
  bool bold = false;       // |DP| < 0.01
  bool underline = false;  // |DP| > 0.1
};

struct DriftReport {
  std::vector<DriftRow> rows;
};

struct NamedDataset {
  std::string name;
  TabularDataset dataset;
};

inline DriftRow evaluate_context(const Predictor& model, const TabularDataset& ds, const std::string& context,
                                 const std::string& sensitive, double tau) {
  const auto scores = predict_scores(model, ds);
  const auto yhat = predict_labels(model, ds, tau);
  const auto& scol = ds.column(sensitive);
  require(!scol.is_numeric(), "NotCategorical", "sensitive column must be categorical");
  DriftRow row;
  row.model_id = model.id;
  row.context = context;
  const bool labelled = std::any_of(ds.columns().begin(), ds.columns().end(),
                                    [](const Column& c) { return c.schema.role == Role::target; });
  std::vector<int> y = labelled ? ds.labels() : std::vector<int>(ds.n_rows(), 0);
  const auto gc = group_confusion(y, yhat, scol.codes, ds.weights(), scol.classes);
  row.dp = group_metric_difference(GapKind::DP, gc).value;
  if (labelled) {
    row.accuracy = gc.overall().accuracy();
    row.auc = auc(scores, y, ds.weights());
  }
  if (row.dp) {
    row.bold = std::abs(*row.dp) < 0.01;
    row.underline = std::abs(*row.dp) > 0.1;
  }
  return row;
}

inline DriftReport evaluate_over_slices(const Predictor& model, const std::vector<NamedDataset>& slices,
                                        const std::string& sensitive, double tau = 0.5) {
  DriftReport rep;
  for (const auto& s : slices) rep.rows.push_back(evaluate_context(model, s.dataset, s.name, sensitive, tau));
  return rep;
}

inline void append(DriftReport& into, const DriftReport& more) {
  for (const auto& r : more.rows) {
    const bool dup = std::any_of(into.rows.begin(), into.rows.end(), [&](const DriftRow& o) {
      return o.model_id == r.model_id && o.context == r.context;
    });
    require(!dup, "DuplicateContext", "context '" + r.context + "' already present for model '" + r.model_id + "'");
    into.rows.push_back(r);
  }
}

inline nlohmann::ordered_json to_json(const DriftReport& rep) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"model", r.model_id}, {"context", r.context}, {"dp", opt_json(r.dp)},
                    {"accuracy", opt_json(r.accuracy)}, {"auc", opt_json(r.auc)}, {"bold", r.bold},
                    {"underline", r.underline}});
  }
  return {{"rows", rows}};
}

/// Table layout with *x* for |DP| < 0.01 and _x_ for |DP| > 0.1.
inline std::string to_table(const DriftReport& rep) {
  std::size_t wm = 5, wc = 7;
  for (const auto& r : rep.rows) {
    wm = std::max(wm, r.model_id.size());
    wc = std::max(wc, r.context.size());
  }
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(wm)) << "model" << "  " << std::setw(static_cast<int>(wc))
     << "context" << "  " << std::setw(10) << "DP" << "  " << std::setw(8) << "accuracy" << "  auc\n";
  for (const auto& r : rep.rows) {
    std::string dp = format_value(r.dp);
    if (r.bold) dp = "*" + dp + "*";
    if (r.underline) dp = "_" + dp + "_";
    os << std::left << std::setw(static_cast<int>(wm)) << r.model_id << "  " << std::setw(static_cast<int>(wc))
       << r.context << "  " << std::setw(10) << dp << "  " << std::setw(8) << format_value(r.accuracy) << "  "
       << format_value(r.auc) << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Shocks.

struct ShockSpec {
  std::string column;
  double magnitude = 1.0;  // in standard deviations of the reference data
  int sign = 1;
  std::optional<std::string> conditioned;  // sensitive class; empty = overall
};

/// Parses "column:+1.0sd" or "column:-0.5sd:class".
inline ShockSpec parse_shock(std::string_view text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(':', start);
    parts.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  require(parts.size() == 2 || parts.size() == 3, "BadShock", "expected COLUMN:+Xsd[:CLASS]");
  ShockSpec s;
  s.column = parts[0];
  std::string mag = parts[1];
  require(mag.size() >= 4 && (mag[0] == '+' || mag[0] == '-') && mag.ends_with("sd"), "BadShock",
          "magnitude must look like +1.0sd or -0.5sd");
  s.sign = mag[0] == '+' ? 1 : -1;
  const auto body = mag.substr(1, mag.size() - 3);
  double v = 0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
  require(ec == std::errc() && ptr == body.data() + body.size(), "BadShock", "bad magnitude '" + body + "'");
  s.magnitude = v;
  if (parts.size() == 3) s.conditioned = parts[2];
  require(!s.column.empty(), "BadShock", "empty column name");
  require(s.magnitude > 0, "BadShock", "magnitude must be positive");
  return s;
}

inline double column_sd(const TabularDataset& ds, const std::string& column) {
  const auto& c = ds.column(column);
  require(c.is_numeric(), "NonNumericColumn", "'" + column + "' is not numeric");
  const auto n = static_cast<double>(c.numeric.size());
  double mean = 0;
  for (double v : c.numeric) mean += v;
  mean /= n;
  double var = 0;
  for (double v : c.numeric) var += (v - mean) * (v - mean);
  return std::sqrt(var / n);
}

/// column += sign * magnitude * sd for affected rows.  sd is taken from
/// `reference_sd` when given, else from ds itself.
inline TabularDataset apply_shock(const TabularDataset& ds, const ShockSpec& spec, const std::string& sensitive,
                                  std::optional<double> reference_sd = std::nullopt) {
  require(spec.magnitude > 0, "BadShock", "magnitude must be positive");
  const auto& c = ds.column(spec.column);
  require(c.is_numeric(), "NonNumericColumn", "'" + spec.column + "' is not numeric");
  const double sd = reference_sd ? *reference_sd : column_sd(ds, spec.column);
  const double delta = spec.sign * spec.magnitude * sd;
  std::optional<int> cls;
  if (spec.conditioned) {
    const auto& s = ds.column(sensitive);
    const auto it = std::find(s.classes.begin(), s.classes.end(), *spec.conditioned);
    require(it != s.classes.end(), "UnknownClass", "sensitive class '" + *spec.conditioned + "' not found");
    cls = static_cast<int>(it - s.classes.begin());
  }
  Column out = c;
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    if (!cls || ds.column(sensitive).codes[r] == *cls) out.numeric[r] += delta;
  }
  return ds.with_column(std::move(out));
}

// ---------------------------------------------------------------------------
// Surrogate targets.

/// Thresholded predictions of an individually fair (sensitive-blind) model,
/// used as retraining labels for the next period.
inline std::vector<int> surrogate_targets(const Predictor& individual, const TabularDataset& slice,
                                          const std::string& sensitive, double tau = 0.5) {
  const double flip = flip_sensitivity(individual, slice, sensitive, tau);
  require(flip == 0.0, "NotIndividuallyFair",
          "flip sensitivity of '" + individual.id + "' is " + format_number(flip));
  return predict_labels(individual, slice, tau);
}

inline TabularDataset with_labels(const TabularDataset& ds, std::span<const int> y) {
  auto t = ds.target();
  require(y.size() == ds.n_rows(), "LengthMismatch", "label vector length differs from row count");
  for (std::size_t r = 0; r < y.size(); ++r) t.numeric[r] = y[r];
  return ds.with_column(std::move(t));
}

// ---------------------------------------------------------------------------
// Shapley values.

struct ShapleyAttribution {
  std::vector<std::string> features;
  std::vector<double> phi;
  double baseline = 0;  // mean model score over the background
  double score = 0;     // model score on the instance
};

inline constexpr std::size_t kMaxShapleyFeatures = 12;

/// Interventional Shapley values by enumeration of all 2^d coalitions.
/// v(T) = mean over background rows b of score(x_T, b_rest).
inline ShapleyAttribution shapley_exact(const Predictor& model, std::span<const double> instance,
                                        const FeatureMatrix& background) {
  const std::size_t d = model.inputs.size();
  require(d <= kMaxShapleyFeatures, "TooManyFeatures", std::to_string(d) + " features exceed the limit of 12");
  require(background.rows > 0, "EmptyBackground", "background set is empty");
  require(instance.size() == d && background.cols() == d, "ViewMismatch", "instance/background width differs");
  const std::size_t n_coal = std::size_t{1} << d;
  std::vector<double> v(n_coal, 0.0);
  std::vector<double> row(d);
  for (std::size_t mask = 0; mask < n_coal; ++mask) {
    double sum = 0;
    for (std::size_t b = 0; b < background.rows; ++b) {
      const auto bg = background.row(b);
      for (std::size_t j = 0; j < d; ++j) row[j] = (mask >> j) & 1U ? instance[j] : bg[j];
      sum += model.score(row);
    }
    v[mask] = sum / static_cast<double>(background.rows);
  }
  // weight[k] = k! (d-k-1)! / d!
  std::vector<double> weight(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    double w = 1.0 / static_cast<double>(d);
    // 1 / (d * C(d-1, k))
    double comb = 1.0;
    for (std::size_t i = 1; i <= k; ++i) comb = comb * static_cast<double>(d - 1 - k + i) / static_cast<double>(i);
    weight[k] = w / comb;
  }
  ShapleyAttribution out;
  out.features = model.inputs;
  out.phi.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    for (std::size_t mask = 0; mask < n_coal; ++mask) {
      if (mask & bit) continue;
      const auto k = static_cast<std::size_t>(std::popcount(mask));
      const double diff = v[mask | bit] - v[mask];
      if (diff != 0.0) out.phi[i] += weight[k] * diff;
    }
  }
  out.baseline = v[0];
  out.score = v[n_coal - 1];
  return out;
}

/// Seeded sample of at most n row indices, sorted.
inline std::vector<std::size_t> sample_rows(std::size_t n_rows, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> rows(n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (n < n_rows) {
    Rng rng(seed);
    shuffle(rows.begin(), rows.end(), rng);
    rows.resize(n);
    std::sort(rows.begin(), rows.end());
  }
  return rows;
}

inline FeatureMatrix background_matrix(const Predictor& model, const TabularDataset& ref, std::size_t n = 128,
                                       std::uint64_t seed = 0) {
  return input_matrix(model, ref.select_rows(sample_rows(ref.n_rows(), n, seed)));
}

/// Feature with the largest mean |phi| over a seeded row sample.
inline std::string most_important_feature(const Predictor& model, const TabularDataset& ds,
                                          const FeatureMatrix& background, std::size_t sample_n, std::uint64_t seed) {
  const auto rows = sample_rows(ds.n_rows(), sample_n, seed);
  const auto x = input_matrix(model, ds);
  std::vector<double> total(model.inputs.size(), 0.0);
  for (auto r : rows) {
    const auto a = shapley_exact(model, x.row(r), background);
    for (std::size_t j = 0; j < total.size(); ++j) total[j] += std::abs(a.phi[j]);
  }
  const auto it = std::max_element(total.begin(), total.end());
  return model.inputs[static_cast<std::size_t>(it - total.begin())];
}

/// Additive decision margin of a deterministic group-threshold policy:
/// base score - t(group) + 0.5, so that margin > 0.5 iff the policy accepts.
/// The sensitive column is the last input.
inline Predictor policy_margin(const Predictor& base, const ThresholdPolicy& pol,
                               const std::vector<std::string>& group_names) {
  require(pol.kind == PolicyKind::DP || pol.kind == PolicyKind::EOPP, "BadPolicy",
          "margins are defined for deterministic per-group policies");
  Predictor p;
  p.id = base.id + "+margin-" + std::string(to_string(pol.kind));
  p.inputs = base.inputs;
  p.inputs.push_back(pol.sensitive);
  const std::size_t n_base = base.inputs.size();
  std::vector<double> t(group_names.size(), 0.5);
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    auto it = pol.thresholds.find(group_names[g]);
    require(it != pol.thresholds.end(), "UnknownGroup", "no threshold for group '" + group_names[g] + "'");
    t[g] = it->second;
  }
  auto score = base.score;
  p.score = [score, n_base, t](std::span<const double> x) {
    const auto g = static_cast<std::size_t>(x[n_base]);
    return score(x.first(n_base)) - t.at(g) + 0.5;
  };
  return p;
}

enum class Trend { improvement, stagnation, decline };

inline std::string_view to_string(Trend t) {
  switch (t) {
    case Trend::improvement: return "long-term improvement";
    case Trend::stagnation: return "stagnation";
    case Trend::decline: return "decline";
  }
  return "?";
}

struct DeltaShapleyRow {
  std::string feature;
  double mean1 = 0, mean2 = 0, delta = 0;
  bool sensitive = false;
};

struct DeltaShapleyReport {
  std::vector<DeltaShapleyRow> rows;  // means over all sampled rows
  std::string deprived;               // class with the lower target rate
  double phi_a_deprived_1 = 0, phi_a_deprived_2 = 0, delta_a_deprived = 0;
  Trend trend = Trend::stagnation;
  std::size_t sample_n = 0;
};

struct DeltaShapleyOptions {
  std::size_t sample_n = 200;
  std::uint64_t seed = 0;
  double stagnation = 0.005;
  std::optional<std::string> deprived;  // overrides the label-based choice
};

/// Mean attributions of two models on the same seeded row sample and
/// background.  Δ = mean under model 2 - mean under model 1.
inline DeltaShapleyReport group_delta_shapley(const Predictor& m1, const Predictor& m2, const TabularDataset& ds,
                                              const std::string& sensitive, const FeatureMatrix& background,
                                              const DeltaShapleyOptions& opt = {}) {
  require(m1.inputs == m2.inputs, "ViewMismatch", "models consume different feature views");
  const auto it = std::find(m1.inputs.begin(), m1.inputs.end(), sensitive);
  require(it != m1.inputs.end(), "ViewMismatch", "models do not read the sensitive column '" + sensitive + "'");
  const auto ai = static_cast<std::size_t>(it - m1.inputs.begin());
  const auto& scol = ds.column(sensitive);
  require(!scol.is_numeric(), "NotCategorical", "sensitive column must be categorical");

  DeltaShapleyReport rep;
  if (opt.deprived) {
    require(std::find(scol.classes.begin(), scol.classes.end(), *opt.deprived) != scol.classes.end(), "UnknownClass",
            "class '" + *opt.deprived + "' not found");
    rep.deprived = *opt.deprived;
  } else {
    const auto y = ds.labels();
    std::vector<double> n(scol.classes.size(), 0.0), pos(scol.classes.size(), 0.0);
    for (std::size_t r = 0; r < y.size(); ++r) {
      n[static_cast<std::size_t>(scol.codes[r])] += 1;
      pos[static_cast<std::size_t>(scol.codes[r])] += y[r];
    }
    std::optional<std::size_t> lo;
    for (std::size_t g = 0; g < n.size(); ++g) {
      if (n[g] == 0) continue;
      if (!lo || pos[g] / n[g] < pos[*lo] / n[*lo]) lo = g;
    }
    require(lo.has_value(), "EmptyGroup", "no rows");
    rep.deprived = scol.classes[*lo];
  }
  const int dep_code = static_cast<int>(std::find(scol.classes.begin(), scol.classes.end(), rep.deprived) -
                                        scol.classes.begin());

  const auto rows = sample_rows(ds.n_rows(), opt.sample_n, opt.seed);
  rep.sample_n = rows.size();
  const auto x = input_matrix(m1, ds);
  const std::size_t d = m1.inputs.size();
  std::vector<double> s1(d, 0.0), s2(d, 0.0);
  double a1 = 0, a2 = 0;
  std::size_t n_dep = 0;
  for (auto r : rows) {
    const auto p1 = shapley_exact(m1, x.row(r), background);
    const auto p2 = shapley_exact(m2, x.row(r), background);
    for (std::size_t j = 0; j < d; ++j) {
      s1[j] += p1.phi[j];
      s2[j] += p2.phi[j];
    }
    if (scol.codes[r] == dep_code) {
      a1 += p1.phi[ai];
      a2 += p2.phi[ai];
      ++n_dep;
    }
  }
  const auto n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < d; ++j) {
    rep.rows.push_back({m1.inputs[j], s1[j] / n, s2[j] / n, s2[j] / n - s1[j] / n, j == ai});
  }
  if (n_dep > 0) {
    rep.phi_a_deprived_1 = a1 / static_cast<double>(n_dep);
    rep.phi_a_deprived_2 = a2 / static_cast<double>(n_dep);
    rep.delta_a_deprived = rep.phi_a_deprived_2 - rep.phi_a_deprived_1;
  }
  if (std::abs(rep.delta_a_deprived) <= opt.stagnation) {
    rep.trend = Trend::stagnation;
  } else {
    rep.trend = rep.delta_a_deprived > 0 ? Trend::decline : Trend::improvement;
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const ShapleyAttribution& a) {
  nlohmann::ordered_json phi = nlohmann::ordered_json::object();
  for (std::size_t j = 0; j < a.features.size(); ++j) phi[a.features[j]] = a.phi[j];
  return {{"phi", phi}, {"baseline", a.baseline}, {"score", a.score}};
}

inline nlohmann::ordered_json to_json(const DeltaShapleyReport& r) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"feature", row.feature}, {"mean_phi_1", row.mean1}, {"mean_phi_2", row.mean2},
                    {"delta", row.delta}, {"sensitive", row.sensitive}});
  }
  return {{"rows", rows},
          {"deprived", r.deprived},
          {"phi_sensitive_deprived_1", r.phi_a_deprived_1},
          {"phi_sensitive_deprived_2", r.phi_a_deprived_2},
          {"delta_sensitive_deprived", r.delta_a_deprived},
          {"trend", to_string(r.trend)},
          {"sample_n", r.sample_n}};
}

inline std::string to_table(const DeltaShapleyReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(12) << "feature" << "  " << std::setw(10) << "phi_1" << "  " << std::setw(10) << "phi_2"
     << "  delta\n";
  for (const auto& row : r.rows) {
    os << std::left << std::setw(12) << (row.sensitive ? row.feature + " (S)" : row.feature) << "  " << std::setw(10)
       << row.mean1 << "  " << std::setw(10) << row.mean2 << "  " << row.delta << "\n";
  }
  os << "deprived class '" << r.deprived << "': phi " << r.phi_a_deprived_1 << " -> " << r.phi_a_deprived_2
     << " (delta " << r.delta_a_deprived << "): " << to_string(r.trend) << "\n";
  return os.str();
}

}  // namespace fairkit
