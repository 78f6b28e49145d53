#pragma once

// Group fairness, individual fairness and score-based criteria, plus the
// usual performance numbers.  Rates with a zero denominator are reported as
// std::nullopt together with a flag; they never silently become 0.

#include <algorithm>
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
#include "fairkit/predictor.hpp"
#include "fairkit/random.hpp"

namespace fairkit {

using OptRate = std::optional<double>;

inline OptRate safe_ratio(double num, double den) {
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

inline nlohmann::json opt_json(const OptRate& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

struct Confusion {
  double tp = 0, fp = 0, tn = 0, fn = 0;

  double total() const { return tp + fp + tn + fn; }
  double positives() const { return tp + fn; }
  double negatives() const { return fp + tn; }
  double predicted_pos() const { return tp + fp; }
  double predicted_neg() const { return tn + fn; }

  OptRate ppr() const { return safe_ratio(predicted_pos(), total()); }
  OptRate tpr() const { return safe_ratio(tp, positives()); }
  OptRate fnr() const { return safe_ratio(fn, positives()); }
  OptRate fpr() const { return safe_ratio(fp, negatives()); }
  OptRate precision() const { return safe_ratio(tp, predicted_pos()); }
  OptRate for_rate() const { return safe_ratio(fn, predicted_neg()); }
  OptRate accuracy() const { return safe_ratio(tp + tn, total()); }
  OptRate base_rate() const { return safe_ratio(positives(), total()); }
};

/// Per-group weighted confusion counts.  Groups are the distinct codes of s
/// in ascending order.
struct GroupConfusion {
  std::vector<int> codes;
  std::vector<std::string> names;
  std::vector<Confusion> cells;

  std::size_t size() const { return cells.size(); }
  Confusion overall() const {
    Confusion c;
    for (const auto& g : cells) {
      c.tp += g.tp;
      c.fp += g.fp;
      c.tn += g.tn;
      c.fn += g.fn;
    }
    return c;
  }
};

namespace detail {

inline void check_lengths(std::size_t n, std::initializer_list<std::size_t> others) {
  for (auto m : others) require(m == n, "LengthMismatch", "input vectors differ in length");
}

inline std::vector<int> distinct_codes(std::span<const int> s) {
  std::vector<int> codes(s.begin(), s.end());
  std::sort(codes.begin(), codes.end());
  codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
  return codes;
}

inline std::string group_name(const std::vector<std::string>& names, int code) {
  if (code >= 0 && static_cast<std::size_t>(code) < names.size()) return names[static_cast<std::size_t>(code)];
  return std::to_string(code);
}

inline double weight_at(std::span<const double> w, std::size_t i) { return w.empty() ? 1.0 : w[i]; }

}  // namespace detail

/// `w` may be empty (unit weights).  `names` maps class ids to labels.
inline GroupConfusion group_confusion(std::span<const int> y, std::span<const int> yhat,
                                      std::span<const int> s, std::span<const double> w = {},
                                      const std::vector<std::string>& names = {}) {
  detail::check_lengths(y.size(), {yhat.size(), s.size()});
  if (!w.empty()) detail::check_lengths(y.size(), {w.size()});
  require(!y.empty(), "EmptyGroup", "no rows");
  GroupConfusion gc;
  gc.codes = detail::distinct_codes(s);
  for (int c : gc.codes) gc.names.push_back(detail::group_name(names, c));
  gc.cells.resize(gc.codes.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto g = static_cast<std::size_t>(
        std::lower_bound(gc.codes.begin(), gc.codes.end(), s[i]) - gc.codes.begin());
    const double wi = detail::weight_at(w, i);
    auto& c = gc.cells[g];
    if (y[i] == 1) {
      (yhat[i] == 1 ? c.tp : c.fn) += wi;
    } else {
      (yhat[i] == 1 ? c.fp : c.tn) += wi;
    }
  }
  return gc;
}

enum class GapKind { DP, EOPP, PE, EODDS, PP, SUFF_NEG, ACC };

inline std::string_view to_string(GapKind k) {
  switch (k) {
    case GapKind::DP: return "DP";
    case GapKind::EOPP: return "EOPP";
    case GapKind::PE: return "PE";
    case GapKind::EODDS: return "EODDS";
    case GapKind::PP: return "PP";
    case GapKind::SUFF_NEG: return "SUFF_NEG";
    case GapKind::ACC: return "ACC";
  }
  return "?";
}

inline GapKind parse_gap_kind(std::string_view s) {
  for (auto k : {GapKind::DP, GapKind::EOPP, GapKind::PE, GapKind::EODDS, GapKind::PP,
                 GapKind::SUFF_NEG, GapKind::ACC}) {
    if (s == to_string(k)) return k;
  }
  fail("BadMetric", "unknown metric kind '" + std::string(s) + "'");
}

struct GapResult {
  // Signed rate(group0) - rate(group1) for two groups, max pairwise |gap|
  // for more; nullopt if fewer than two groups have a defined rate.
  OptRate value;
  bool signed_binary = false;
  std::vector<std::string> groups;
  std::vector<OptRate> rates;
  std::vector<std::string> flags;  // "UndefinedRate(group,kind)"
};

namespace detail {

inline OptRate rate_for(GapKind k, const Confusion& c) {
  switch (k) {
    case GapKind::DP: return c.ppr();
    case GapKind::EOPP: return c.fnr();
    case GapKind::PE: return c.fpr();
    case GapKind::PP: return c.precision();
    case GapKind::SUFF_NEG: return c.for_rate();
    case GapKind::ACC: return c.accuracy();
    case GapKind::EODDS: break;
  }
  return std::nullopt;
}

inline GapResult simple_gap(GapKind k, const GroupConfusion& gc) {
  GapResult out;
  out.groups = gc.names;
  for (std::size_t g = 0; g < gc.size(); ++g) {
    out.rates.push_back(rate_for(k, gc.cells[g]));
    if (!out.rates.back()) {
      out.flags.push_back("UndefinedRate(" + gc.names[g] + "," + std::string(to_string(k)) + ")");
    }
  }
  if (gc.size() == 2) {
    out.signed_binary = true;
    if (out.rates[0] && out.rates[1]) out.value = *out.rates[0] - *out.rates[1];
    return out;
  }
  std::optional<double> best;
  for (std::size_t a = 0; a < gc.size(); ++a) {
    for (std::size_t b = a + 1; b < gc.size(); ++b) {
      if (!out.rates[a] || !out.rates[b]) continue;
      const double gap = std::abs(*out.rates[a] - *out.rates[b]);
      if (!best || gap > *best) best = gap;
    }
  }
  out.value = best;
  return out;
}

}  // namespace detail

inline GapResult group_metric_difference(GapKind kind, const GroupConfusion& gc) {
  if (kind != GapKind::EODDS) return detail::simple_gap(kind, gc);
  auto pe = detail::simple_gap(GapKind::PE, gc);
  auto eopp = detail::simple_gap(GapKind::EOPP, gc);
  GapResult out;
  out.groups = gc.names;
  out.signed_binary = pe.signed_binary;
  // Per-group rate reported is the FPR; FNRs live in the EOPP result.
  out.rates = pe.rates;
  out.flags = pe.flags;
  out.flags.insert(out.flags.end(), eopp.flags.begin(), eopp.flags.end());
  if (pe.value && eopp.value) {
    out.value = std::abs(*pe.value) >= std::abs(*eopp.value) ? *pe.value : *eopp.value;
  } else if (pe.value) {
    out.value = pe.value;
  } else {
    out.value = eopp.value;
  }
  return out;
}

/// Conditional demographic parity.
struct CdpResult {
  OptRate mean;  // stratum-weight-share average of |gap| over strata with a defined gap
  OptRate max;
  struct Row {
    std::string stratum;
    double weight_share = 0;
    OptRate gap;
  };
  std::vector<Row> table;
  std::vector<std::string> flags;
};

inline CdpResult cdp_difference(std::span<const int> yhat, std::span<const int> s,
                                std::span<const int> stratum, std::span<const double> w = {},
                                const std::vector<std::string>& stratum_names = {},
                                const std::vector<std::string>& group_names = {}) {
  detail::check_lengths(yhat.size(), {s.size(), stratum.size()});
  if (!w.empty()) detail::check_lengths(yhat.size(), {w.size()});
  require(!yhat.empty(), "EmptyGroup", "no rows");
  CdpResult out;
  const auto strata = detail::distinct_codes(stratum);
  const auto all_groups = detail::distinct_codes(s);
  double total = 0, defined_weight = 0, acc = 0;
  for (std::size_t i = 0; i < yhat.size(); ++i) total += detail::weight_at(w, i);
  for (int st : strata) {
    std::vector<int> yy, ss;
    std::vector<double> ww;
    double sw = 0;
    for (std::size_t i = 0; i < yhat.size(); ++i) {
      if (stratum[i] != st) continue;
      yy.push_back(yhat[i]);
      ss.push_back(s[i]);
      ww.push_back(detail::weight_at(w, i));
      sw += ww.back();
    }
    CdpResult::Row row{detail::group_name(stratum_names, st), total > 0 ? sw / total : 0.0, {}};
    // DP depends only on the decisions, so they stand in for the labels here.
    const auto gc = group_confusion(yy, yy, ss, ww, group_names);
    if (gc.size() < all_groups.size() || gc.size() < 2) {
      out.flags.push_back("MissingGroup(stratum=" + row.stratum + ")");
    } else {
      auto gap = group_metric_difference(GapKind::DP, gc);
      if (gap.value) {
        row.gap = std::abs(*gap.value);
        defined_weight += sw;
        acc += sw * std::abs(*gap.value);
        if (!out.max || *row.gap > *out.max) out.max = row.gap;
      }
    }
    out.table.push_back(row);
  }
  if (defined_weight > 0) out.mean = acc / defined_weight;
  return out;
}

// ---------------------------------------------------------------------------
// Individual fairness.

/// Column-wise z-scoring; constant columns are dropped.
inline FeatureMatrix standardize(const FeatureMatrix& x) {
  std::vector<std::size_t> keep;
  std::vector<double> mean, sd;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double m = 0;
    for (std::size_t r = 0; r < x.rows; ++r) m += x.at(r, c);
    m /= static_cast<double>(std::max<std::size_t>(x.rows, 1));
    double v = 0;
    for (std::size_t r = 0; r < x.rows; ++r) v += (x.at(r, c) - m) * (x.at(r, c) - m);
    v /= static_cast<double>(std::max<std::size_t>(x.rows, 1));
    if (v > 0) {
      keep.push_back(c);
      mean.push_back(m);
      sd.push_back(std::sqrt(v));
    }
  }
  FeatureMatrix out;
  out.rows = x.rows;
  for (auto c : keep) out.names.push_back(x.names[c]);
  out.data.resize(out.rows * keep.size());
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t k = 0; k < keep.size(); ++k) {
      out.data[r * keep.size() + k] = (x.at(r, keep[k]) - mean[k]) / sd[k];
    }
  }
  return out;
}

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

}  // namespace detail

/// 1 - mean_i |yhat_i - mean of yhat over the k nearest neighbours of x_i|.
/// Self is excluded; ties at equal distance go to the lower row index.  x is
/// used as given (call standardize() first for the z-scored variant).
inline double consistency(const FeatureMatrix& x, std::span<const int> yhat, std::size_t k = 5) {
  detail::check_lengths(x.rows, {yhat.size()});
  require(k >= 1 && x.rows > k, "TooFewRows", "consistency needs n > k");
  const std::size_t n = x.rows;
  double total = 0;
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) d.emplace_back(detail::sq_dist(x.row(i), x.row(j)), j);
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    double m = 0;
    for (std::size_t t = 0; t < k; ++t) m += yhat[d[t].second];
    total += std::abs(yhat[i] - m / static_cast<double>(k));
  }
  return 1.0 - total / static_cast<double>(n);
}

/// (1/(n1 n0)) sum_{i in group 1, j in group 0} exp(-dist(x_i,x_j)) |yhat_i - yhat_j|.
inline double similarity_disparity(const FeatureMatrix& x, std::span<const int> yhat,
                                   std::span<const int> s) {
  detail::check_lengths(x.rows, {yhat.size(), s.size()});
  const auto codes = detail::distinct_codes(s);
  require(codes.size() == 2, "EmptyGroup", "similarity disparity needs exactly two non-empty groups");
  std::vector<std::size_t> g0, g1;
  for (std::size_t i = 0; i < x.rows; ++i) (s[i] == codes[0] ? g0 : g1).push_back(i);
  double total = 0;
  for (auto i : g1) {
    for (auto j : g0) {
      if (yhat[i] != yhat[j]) total += std::exp(-std::sqrt(detail::sq_dist(x.row(i), x.row(j))));
    }
  }
  return total / (static_cast<double>(g0.size()) * static_cast<double>(g1.size()));
}

// ---------------------------------------------------------------------------
// Score-based criteria.

namespace detail {

/// Clamps scores into [0,1]; returns how many were out of range.
inline std::size_t clamp_scores(std::vector<double>& v) {
  std::size_t bad = 0;
  for (auto& x : v) {
    if (x < 0.0 || x > 1.0) {
      ++bad;
      x = std::clamp(x, 0.0, 1.0);
    }
  }
  return bad;
}

inline OptRate max_pairwise_gap(const std::vector<OptRate>& v) {
  OptRate best;
  for (std::size_t a = 0; a < v.size(); ++a) {
    for (std::size_t b = a + 1; b < v.size(); ++b) {
      if (!v[a] || !v[b]) continue;
      const double g = std::abs(*v[a] - *v[b]);
      if (!best || g > *best) best = g;
    }
  }
  return best;
}

}  // namespace detail

struct GroupValues {
  std::vector<std::string> groups;
  std::vector<OptRate> values;
  OptRate gap;
  std::vector<std::string> flags;
};

/// E[score | Y = cls, group] per group and the max pairwise gap.
inline GroupValues score_balance(std::span<const double> scores, std::span<const int> y,
                                 std::span<const int> s, int cls, std::span<const double> w = {},
                                 const std::vector<std::string>& names = {}) {
  detail::check_lengths(scores.size(), {y.size(), s.size()});
  const auto codes = detail::distinct_codes(s);
  GroupValues out;
  std::vector<double> num(codes.size(), 0.0), den(codes.size(), 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (y[i] != cls) continue;
    const auto g = static_cast<std::size_t>(std::lower_bound(codes.begin(), codes.end(), s[i]) - codes.begin());
    const double wi = detail::weight_at(w, i);
    num[g] += wi * std::clamp(scores[i], 0.0, 1.0);
    den[g] += wi;
  }
  for (std::size_t g = 0; g < codes.size(); ++g) {
    out.groups.push_back(detail::group_name(names, codes[g]));
    out.values.push_back(safe_ratio(num[g], den[g]));
    if (!out.values.back()) {
      out.flags.push_back("UndefinedRate(" + out.groups.back() + ",balance_" +
                          (cls == 1 ? "pos" : "neg") + ")");
    }
  }
  out.gap = detail::max_pairwise_gap(out.values);
  return out;
}

struct CalibrationBin {
  double lo = 0, hi = 0;
  double weight = 0;
  OptRate mean_score;
  OptRate positive_rate;
};

struct CalibrationCurve {
  std::vector<std::string> groups;
  std::vector<std::vector<CalibrationBin>> bins;  // [group][bin]
  std::vector<OptRate> within_gap;                // max |rate - mean score| per group
  OptRate cross_group_gap;                        // max over bins of pairwise rate gaps
  std::size_t clamped = 0;
};

inline CalibrationCurve calibration_within_groups(std::span<const double> scores, std::span<const int> y,
                                                  std::span<const int> s, std::size_t n_bins = 10,
                                                  std::span<const double> w = {},
                                                  const std::vector<std::string>& names = {}) {
  detail::check_lengths(scores.size(), {y.size(), s.size()});
  require(n_bins >= 2, "BadBins", "need at least two bins");
  std::vector<double> sc(scores.begin(), scores.end());
  CalibrationCurve out;
  out.clamped = detail::clamp_scores(sc);
  const auto codes = detail::distinct_codes(s);
  const std::size_t G = codes.size();
  std::vector<std::vector<double>> wsum(G, std::vector<double>(n_bins)), ssum = wsum, psum = wsum;
  for (std::size_t i = 0; i < sc.size(); ++i) {
    const auto g = static_cast<std::size_t>(std::lower_bound(codes.begin(), codes.end(), s[i]) - codes.begin());
    const auto b = std::min(static_cast<std::size_t>(sc[i] * static_cast<double>(n_bins)), n_bins - 1);
    const double wi = detail::weight_at(w, i);
    wsum[g][b] += wi;
    ssum[g][b] += wi * sc[i];
    psum[g][b] += wi * y[i];
  }
  for (std::size_t g = 0; g < G; ++g) {
    out.groups.push_back(detail::group_name(names, codes[g]));
    std::vector<CalibrationBin> row;
    OptRate worst;
    for (std::size_t b = 0; b < n_bins; ++b) {
      CalibrationBin bin;
      bin.lo = static_cast<double>(b) / static_cast<double>(n_bins);
      bin.hi = static_cast<double>(b + 1) / static_cast<double>(n_bins);
      bin.weight = wsum[g][b];
      bin.mean_score = safe_ratio(ssum[g][b], wsum[g][b]);
      bin.positive_rate = safe_ratio(psum[g][b], wsum[g][b]);
      if (bin.positive_rate) {
        const double gap = std::abs(*bin.positive_rate - *bin.mean_score);
        if (!worst || gap > *worst) worst = gap;
      }
      row.push_back(bin);
    }
    out.bins.push_back(std::move(row));
    out.within_gap.push_back(worst);
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    std::vector<OptRate> rates;
    for (std::size_t g = 0; g < G; ++g) rates.push_back(out.bins[g][b].positive_rate);
    const auto gap = detail::max_pairwise_gap(rates);
    if (gap && (!out.cross_group_gap || *gap > *out.cross_group_gap)) out.cross_group_gap = gap;
  }
  return out;
}

/// Weighted Mann-Whitney AUC; tied scores count one half.
inline OptRate auc(std::span<const double> scores, std::span<const int> y, std::span<const double> w = {}) {
  detail::check_lengths(scores.size(), {y.size()});
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double neg_below = 0, total_pos = 0, total_neg = 0, acc = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double pos_tie = 0, neg_tie = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      const double wi = detail::weight_at(w, idx[j]);
      (y[idx[j]] == 1 ? pos_tie : neg_tie) += wi;
      ++j;
    }
    acc += pos_tie * (neg_below + 0.5 * neg_tie);
    neg_below += neg_tie;
    total_pos += pos_tie;
    total_neg += neg_tie;
    i = j;
  }
  if (total_pos <= 0 || total_neg <= 0) return std::nullopt;
  return acc / (total_pos * total_neg);
}

inline GroupValues auc_by_group(std::span<const double> scores, std::span<const int> y,
                                std::span<const int> s, std::span<const double> w = {},
                                const std::vector<std::string>& names = {}) {
  detail::check_lengths(scores.size(), {y.size(), s.size()});
  const auto codes = detail::distinct_codes(s);
  GroupValues out;
  for (int c : codes) {
    std::vector<double> sc, ww;
    std::vector<int> yy;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (s[i] != c) continue;
      sc.push_back(scores[i]);
      yy.push_back(y[i]);
      ww.push_back(detail::weight_at(w, i));
    }
    out.groups.push_back(detail::group_name(names, c));
    out.values.push_back(auc(sc, yy, ww));
    if (!out.values.back()) out.flags.push_back("UndefinedRate(" + out.groups.back() + ",auc)");
  }
  out.gap = detail::max_pairwise_gap(out.values);
  return out;
}

/// Fraction of rows whose label changes when only the binary sensitive
/// column is flipped.
inline double flip_sensitivity(const Predictor& model, const TabularDataset& ds,
                               const std::string& s_column, double tau) {
  const auto& col = ds.column(s_column);
  const std::size_t n = ds.n_rows();
  require(n > 0, "TooFewRows", "empty dataset");
  if (col.is_numeric()) {
    for (double v : col.numeric) {
      require(v == 0.0 || v == 1.0, "NonBinarySensitive", "'" + s_column + "' is not binary");
    }
  } else {
    require(col.classes.size() == 2, "NonBinarySensitive", "'" + s_column + "' is not binary");
  }
  const auto m = input_matrix(model, ds);
  const auto it = std::find(model.inputs.begin(), model.inputs.end(), s_column);
  std::vector<double> row(m.cols());
  std::size_t changed = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto orig = m.row(r);
    const int a = model.label(orig, r, tau);
    std::copy(orig.begin(), orig.end(), row.begin());
    if (it != model.inputs.end()) {
      auto& v = row[static_cast<std::size_t>(it - model.inputs.begin())];
      v = 1.0 - v;
    }
    if (model.label(row, r, tau) != a) ++changed;
  }
  return static_cast<double>(changed) / static_cast<double>(n);
}

struct EightyPercent {
  OptRate ratio;  // min over ordered pairs of PPR_a / PPR_b
  bool pass = false;
  std::vector<std::string> flags;
};

inline EightyPercent eighty_percent_check(const GroupConfusion& gc) {
  EightyPercent out;
  std::vector<double> pprs;
  for (std::size_t g = 0; g < gc.size(); ++g) {
    const auto p = gc.cells[g].ppr();
    require(p.has_value(), "EmptyGroup", "group '" + gc.names[g] + "' has no rows");
    if (*p == 0.0) out.flags.push_back("UndefinedRate(" + gc.names[g] + ",ppr=0)");
    pprs.push_back(*p);
  }
  if (!out.flags.empty() || pprs.size() < 2) return out;
  const auto [lo, hi] = std::minmax_element(pprs.begin(), pprs.end());
  out.ratio = *lo / *hi;
  out.pass = *out.ratio >= 0.8;
  return out;
}

struct Incompatibility {
  std::string pair;
  bool jointly_satisfiable = true;
  std::string reason;
};

struct IncompatibilityReport {
  std::vector<std::string> groups;
  std::vector<double> base_rates;
  double base_rate_gap = 0;  // equals |DP| of the perfect predictor
  std::vector<Incompatibility> pairs;
};

inline IncompatibilityReport incompatibility_report(std::span<const int> y, std::span<const int> s,
                                                    std::span<const double> w = {},
                                                    const std::vector<std::string>& names = {},
                                                    double tolerance = 1e-9) {
  const auto gc = group_confusion(y, y, s, w, names);
  IncompatibilityReport out;
  out.groups = gc.names;
  for (const auto& c : gc.cells) {
    const auto br = c.base_rate();
    require(br.has_value(), "EmptyGroup", "group without rows");
    out.base_rates.push_back(*br);
  }
  const auto [lo, hi] = std::minmax_element(out.base_rates.begin(), out.base_rates.end());
  out.base_rate_gap = *hi - *lo;
  const bool differ = out.base_rate_gap > tolerance;
  auto add = [&](std::string pair, std::string why) {
    out.pairs.push_back({std::move(pair), !differ,
                         differ ? std::move(why) : "base rates are equal; no conflict implied"});
  };
  add("independence/separation",
      "with unequal base rates, independence and separation can only hold together if the "
      "classifier is independent of Y");
  add("independence/sufficiency",
      "with unequal base rates, sufficiency and independence cannot hold simultaneously");
  add("separation/sufficiency",
      "with unequal base rates and a strictly positive joint distribution, separation and "
      "sufficiency cannot both hold (positivity assumed, not verified)");
  return out;
}

// ---------------------------------------------------------------------------
// Report assembly.

struct MetricsReport {
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  std::vector<std::pair<std::string, OptRate>> values;
  nlohmann::ordered_json groups = nlohmann::ordered_json::object();
  std::vector<std::string> flags;

  void set(const std::string& key, OptRate v) {
    for (auto& [k, old] : values) {
      if (k == key) {
        old = v;
        return;
      }
    }
    values.emplace_back(key, v);
  }

  bool has(const std::string& key) const {
    return std::any_of(values.begin(), values.end(), [&](const auto& kv) { return kv.first == key; });
  }

  OptRate get(const std::string& key) const {
    for (const auto& [k, v] : values) {
      if (k == key) return v;
    }
    fail("MissingMetric", "metric '" + key + "' not in report");
  }
};

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.values) m[k] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  return {{"meta", r.meta}, {"metrics", m}, {"groups", r.groups}, {"flags", r.flags}};
}

inline MetricsReport metrics_report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  require(j.is_object() && j.contains("metrics"), "BadReport", "missing 'metrics' object");
  if (j.contains("meta")) r.meta = j["meta"];
  for (const auto& [k, v] : j["metrics"].items()) {
    r.values.emplace_back(k, v.is_null() ? OptRate{} : OptRate{v.get<double>()});
  }
  if (j.contains("groups")) r.groups = j["groups"];
  if (j.contains("flags")) r.flags = j["flags"].get<std::vector<std::string>>();
  return r;
}

inline std::string format_value(const OptRate& v, int precision = 4) {
  if (!v) return "undefined";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << *v;
  return os.str();
}

/// Two-column aligned text table.
inline std::string to_table(const MetricsReport& r) {
  std::size_t width = 6;
  for (const auto& [k, v] : r.values) width = std::max(width, k.size());
  std::ostringstream os;
  if (r.meta.contains("model_id")) os << "model: " << r.meta["model_id"].get<std::string>() << "\n";
  os << std::left << std::setw(static_cast<int>(width)) << "metric" << "  value\n";
  os << std::string(width, '-') << "  ---------\n";
  for (const auto& [k, v] : r.values) {
    os << std::left << std::setw(static_cast<int>(width)) << k << "  " << format_value(v) << "\n";
  }
  for (const auto& f : r.flags) os << "flag: " << f << "\n";
  return os.str();
}

struct EvaluateOptions {
  std::string sensitive;
  std::optional<std::string> stratum;
  std::string model_id = "model";
  std::string dataset_id = "dataset";
  std::size_t knn_k = 5;
  std::size_t calibration_bins = 10;
  // Consistency and similarity disparity are quadratic; above this many rows
  // they are computed on a seeded subsample (recorded in meta).
  std::size_t pairwise_max_rows = 4000;
  std::uint64_t seed = 0;
  bool individual = true;
};

/// Full report for hard decisions `yhat` (and optional scores in [0,1]) on a
/// labelled dataset.  Feature columns of ds feed the individual-fairness
/// metrics after z-scoring.
inline MetricsReport evaluate_predictions(const TabularDataset& ds, std::span<const int> yhat,
                                          std::span<const double> scores, const EvaluateOptions& opt) {
  require(ds.has(opt.sensitive), "NoSensitiveColumn", "sensitive column '" + opt.sensitive + "' not found");
  const auto& scol = ds.column(opt.sensitive);
  require(!scol.is_numeric(), "NotCategorical", "sensitive column must be categorical");
  const auto y = ds.labels();
  const auto s = scol.codes;
  const auto w = ds.weights();
  detail::check_lengths(y.size(), {yhat.size()});
  if (!scores.empty()) detail::check_lengths(y.size(), {scores.size()});

  MetricsReport r;
  r.meta["dataset_id"] = opt.dataset_id;
  r.meta["model_id"] = opt.model_id;
  r.meta["sensitive"] = opt.sensitive;
  r.meta["stratum"] = opt.stratum ? nlohmann::ordered_json(*opt.stratum) : nlohmann::ordered_json(nullptr);
  r.meta["n_rows"] = ds.n_rows();
  r.meta["distance"] = "euclidean on z-scored feature columns";

  const auto gc = group_confusion(y, yhat, s, w, scol.classes);
  const auto overall = gc.overall();
  r.set("accuracy", overall.accuracy());
  r.set("precision", overall.precision());
  r.set("recall", overall.tpr());
  {
    const auto p = overall.precision(), rc = overall.tpr();
    OptRate f1;
    if (p && rc && (*p + *rc) > 0) f1 = 2 * *p * *rc / (*p + *rc);
    r.set("f1", f1);
  }

  auto add_gap = [&](const char* key, GapKind k) {
    const auto g = group_metric_difference(k, gc);
    r.set(key, g.value);
    r.flags.insert(r.flags.end(), g.flags.begin(), g.flags.end());
    return g;
  };
  const auto dp = add_gap("dp_diff", GapKind::DP);
  const auto e80 = eighty_percent_check(gc);
  r.set("dp_ratio", e80.ratio);
  if (opt.stratum) {
    const auto& st = ds.column(*opt.stratum);
    std::vector<int> stc;
    if (st.is_numeric()) {
      for (double v : st.numeric) stc.push_back(static_cast<int>(std::llround(v)));
    } else {
      stc = st.codes;
    }
    const auto cdp = cdp_difference(yhat, s, stc, w, st.classes, scol.classes);
    r.set("cdp_mean", cdp.mean);
    r.set("cdp_max", cdp.max);
    r.flags.insert(r.flags.end(), cdp.flags.begin(), cdp.flags.end());
  }
  const auto eopp = add_gap("eopp_diff", GapKind::EOPP);
  const auto pe = add_gap("pe_diff", GapKind::PE);
  add_gap("eodds_diff", GapKind::EODDS);
  const auto pp = add_gap("pp_diff", GapKind::PP);
  add_gap("suff_neg_diff", GapKind::SUFF_NEG);
  const auto acc = add_gap("acc_diff", GapKind::ACC);

  if (opt.individual) {
    auto feats = ds.names_with_role(Role::feature);
    if (!feats.empty() && ds.n_rows() > opt.knn_k) {
      std::vector<std::size_t> rows = all_rows(ds);
      if (rows.size() > opt.pairwise_max_rows) {
        Rng rng(opt.seed);
        shuffle(rows.begin(), rows.end(), rng);
        rows.resize(opt.pairwise_max_rows);
        std::sort(rows.begin(), rows.end());
        r.meta["pairwise_sample"] = rows.size();
      }
      const auto sub = ds.select_rows(rows);
      const auto x = standardize(feature_matrix(sub, feats));
      std::vector<int> yh, ss;
      for (auto i : rows) {
        yh.push_back(yhat[i]);
        ss.push_back(s[i]);
      }
      r.set("consistency", consistency(x, yh, opt.knn_k));
      if (detail::distinct_codes(ss).size() == 2) r.set("similarity_disparity", similarity_disparity(x, yh, ss));
    }
  }

  if (!scores.empty()) {
    const auto bp = score_balance(scores, y, s, 1, w, scol.classes);
    const auto bn = score_balance(scores, y, s, 0, w, scol.classes);
    r.set("balance_pos_gap", bp.gap);
    r.set("balance_neg_gap", bn.gap);
    const auto cal = calibration_within_groups(scores, y, s, opt.calibration_bins, w, scol.classes);
    r.set("calibration_gap", cal.cross_group_gap);
    if (cal.clamped) r.flags.push_back("ScoresClamped(" + std::to_string(cal.clamped) + ")");
    r.set("auc", auc(scores, y, w));
    const auto ag = auc_by_group(scores, y, s, w, scol.classes);
    r.set("auc_gap", ag.gap);
    r.flags.insert(r.flags.end(), ag.flags.begin(), ag.flags.end());
    for (std::size_t g = 0; g < ag.groups.size(); ++g) r.groups[ag.groups[g]]["auc"] = opt_json(ag.values[g]);
  }
  r.set("rule_80_ratio", e80.ratio);
  r.flags.insert(r.flags.end(), e80.flags.begin(), e80.flags.end());

  for (std::size_t g = 0; g < gc.size(); ++g) {
    auto& o = r.groups[gc.names[g]];
    const auto& c = gc.cells[g];
    o["weight"] = c.total();
    o["base_rate"] = opt_json(c.base_rate());
    o["ppr"] = opt_json(dp.rates[g]);
    o["fnr"] = opt_json(eopp.rates[g]);
    o["fpr"] = opt_json(pe.rates[g]);
    o["precision"] = opt_json(pp.rates[g]);
    o["accuracy"] = opt_json(acc.rates[g]);
    o["confusion"] = {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
  }
  return r;
}

}  // namespace fairkit
