#pragma once

// FairView: per-group surrogate rules, cross-group contrast, worldview evidence.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairkit/dataset.hpp"
#include "fairkit/error.hpp"
#include "fairkit/fftree.hpp"
#include "fairkit/metrics.hpp"

namespace fairkit {

struct RuleCondition {
  std::string feature;
  bool greater = false;  // true: value > threshold, false: value <= threshold
  double threshold = 0;

  bool holds(double v) const { return greater ? v > threshold : v <= threshold; }
  bool operator==(const RuleCondition&) const = default;
};

struct DecisionRule {
  std::string origin;  // sensitive class the surrogate was trained on
  std::vector<RuleCondition> conditions;
  int leaf = 0;
  double support = 0;   // training weight reaching the leaf
  double pos_rate = 0;  // training positive rate of the leaf

  std::string text() const {
    std::ostringstream os;
    os << "IF ";
    if (conditions.empty()) os << "TRUE";
    for (std::size_t i = 0; i < conditions.size(); ++i) {
      if (i) os << " AND ";
      os << conditions[i].feature << (conditions[i].greater ? " > " : " <= ") << format_number(conditions[i].threshold);
    }
    os << " THEN " << (pos_rate > 0.5 ? "positive" : "negative");
    return os.str();
  }
};

struct SurrogateQuality {
  std::string group;
  std::size_t rows = 0;
  std::size_t leaves = 0;
  double accuracy = 0;
  OptRate f1;
};

struct TraceConfig {
  GrowthConfig growth = [] {
    GrowthConfig g;
    g.max_leaves = 8;
    g.max_depth = 4;
    return g;
  }();
  std::size_t min_rows = 50;
  bool all_leaves = false;  // non-default: every leaf becomes a rule
};

struct TraceResult {
  std::string sensitive;
  std::vector<std::string> groups;
  std::vector<FFTreeModel> surrogates;
  std::vector<DecisionRule> rules;
  std::vector<SurrogateQuality> quality;
  std::vector<std::string> warnings;
};

namespace detail {

/// Root-to-leaf conditions, merged so each (feature, direction) appears once
/// with its tightest bound.
inline std::vector<RuleCondition> path_conditions(const FFTreeModel& m, int leaf) {
  std::vector<int> parent(m.nodes.size(), -1);
  for (const auto& n : m.nodes) {
    if (n.leaf) continue;
    parent[static_cast<std::size_t>(n.left)] = n.id;
    parent[static_cast<std::size_t>(n.right)] = n.id;
  }
  std::vector<RuleCondition> raw;
  for (int cur = leaf; parent[static_cast<std::size_t>(cur)] >= 0; cur = parent[static_cast<std::size_t>(cur)]) {
    const auto& p = m.nodes[static_cast<std::size_t>(parent[static_cast<std::size_t>(cur)])];
    raw.push_back({p.feature, p.right == cur, p.threshold});
  }
  std::reverse(raw.begin(), raw.end());
  std::vector<RuleCondition> out;
  for (const auto& c : raw) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const RuleCondition& o) { return o.feature == c.feature && o.greater == c.greater; });
    if (it == out.end()) {
      out.push_back(c);
    } else {
      it->threshold = c.greater ? std::max(it->threshold, c.threshold) : std::min(it->threshold, c.threshold);
    }
  }
  return out;
}

}  // namespace detail

/// Fits one unconstrained tree per sensitive class on (X|A=i -> Y|A=i) and
/// extracts the positive-decision leaves as rules.
inline TraceResult trace(const TabularDataset& ds, const std::string& sensitive, const TraceConfig& cfg = {}) {
  const auto& scol = ds.column(sensitive);
  require(!scol.is_numeric(), "NotCategorical", "sensitive column must be categorical");
  TraceResult out;
  out.sensitive = sensitive;
  for (std::size_t g = 0; g < scol.classes.size(); ++g) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
      if (scol.codes[r] == static_cast<int>(g)) rows.push_back(r);
    }
    if (rows.empty()) continue;  // declared but unobserved class
    require(rows.size() >= cfg.min_rows, "GroupTooSmall",
            "group '" + scol.classes[g] + "' has " + std::to_string(rows.size()) + " rows");
    const auto sub = ds.select_rows(rows);
    auto model = fit(sub, {}, cfg.growth);
    const auto& name = scol.classes[g];
    out.groups.push_back(name);
    for (const auto& n : model.nodes) {
      if (!n.leaf || (!cfg.all_leaves && !(n.pos_rate > 0.5))) continue;
      out.rules.push_back({name, detail::path_conditions(model, n.id), n.id, n.weight, n.pos_rate});
    }
    const auto yhat = predict_label(model, sub);
    const auto y = sub.labels();
    std::vector<int> dummy(y.size(), 0);
    const auto c = group_confusion(y, yhat, dummy, sub.weights()).overall();
    SurrogateQuality q{name, rows.size(), model.n_leaves(), c.accuracy().value_or(0.0), {}};
    const auto p = c.precision(), rc = c.tpr();
    if (p && rc && *p + *rc > 0) q.f1 = 2 * *p * *rc / (*p + *rc);
    if (q.accuracy < 0.7) {
      out.warnings.push_back("LowSurrogateQuality: group '" + name + "' accuracy " + format_value(q.accuracy, 3));
    }
    out.quality.push_back(q);
    out.surrogates.push_back(std::move(model));
  }
  return out;
}

struct GroupContrast {
  std::string group;
  double size = 0;        // weighted count of satisfiers
  std::size_t count = 0;  // row count of satisfiers
  OptRate prior;          // weighted positive rate among satisfiers
};

struct RuleContrast {
  DecisionRule rule;
  std::vector<GroupContrast> groups;
  OptRate delta_prior;  // max pairwise |prior difference| over defined groups
  std::vector<std::string> flags;

  double total_size() const {
    double t = 0;
    for (const auto& g : groups) t += g.size;
    return t;
  }
};

/// Applies every rule to every group's rows.
inline std::vector<RuleContrast> g_contrast(const std::vector<DecisionRule>& rules, const TabularDataset& ds,
                                            const std::string& sensitive) {
  const auto& scol = ds.column(sensitive);
  require(!scol.is_numeric(), "NotCategorical", "sensitive column must be categorical");
  const auto y = ds.labels();
  const auto w = ds.weights();
  std::vector<RuleContrast> out;
  for (const auto& rule : rules) {
    std::vector<const Column*> cols;
    for (const auto& c : rule.conditions) {
      require(ds.has(c.feature), "UnknownColumn", "rule references missing column '" + c.feature + "'");
      cols.push_back(&ds.column(c.feature));
    }
    const std::size_t k = scol.classes.size();
    std::vector<double> size(k, 0.0), pos(k, 0.0);
    std::vector<std::size_t> count(k, 0), present(k, 0);
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
      const auto g = static_cast<std::size_t>(scol.codes[r]);
      ++present[g];
      bool ok = true;
      for (std::size_t i = 0; i < cols.size() && ok; ++i) ok = rule.conditions[i].holds(cols[i]->value(r));
      if (!ok) continue;
      size[g] += w[r];
      pos[g] += w[r] * y[r];
      ++count[g];
    }
    RuleContrast rc;
    rc.rule = rule;
    std::vector<OptRate> priors;
    for (std::size_t g = 0; g < k; ++g) {
      if (!present[g]) continue;
      GroupContrast gcn{scol.classes[g], size[g], count[g], safe_ratio(pos[g], size[g])};
      if (!gcn.prior) rc.flags.push_back("UndefinedPrior(" + scol.classes[g] + ")");
      priors.push_back(gcn.prior);
      rc.groups.push_back(gcn);
    }
    rc.delta_prior = detail::max_pairwise_gap(priors);
    out.push_back(std::move(rc));
  }
  return out;
}

enum class Evidence { WYSIWYG, WAE, undefined };

inline std::string_view to_string(Evidence e) {
  switch (e) {
    case Evidence::WYSIWYG: return "WYSIWYG";
    case Evidence::WAE: return "WAE";
    case Evidence::undefined: return "undefined";
  }
  return "?";
}

struct WorldviewReport {
  double threshold = 0.05;
  std::size_t min_size = 10;
  std::vector<RuleContrast> contrasts;
  std::vector<Evidence> evidence;
  double share_wysiwyg = 0, share_wae = 0, share_undefined = 0;
  std::size_t n_wysiwyg = 0, n_wae = 0, n_undefined = 0;
  std::vector<std::string> summary;
};

/// Rules with Δprior <= threshold support WYSIWYG, larger Δprior supports
/// WAE.  Rules with fewer than min_size rows in any compared group are
/// undefined.  Shares are weighted by total rule size.
inline WorldviewReport evaluate_worldview(const std::vector<RuleContrast>& contrasts, double threshold = 0.05,
                                          std::size_t min_size = 10) {
  require(threshold > 0 && threshold < 1, "BadThreshold", "threshold must lie in (0,1)");
  WorldviewReport rep;
  rep.threshold = threshold;
  rep.min_size = min_size;
  rep.contrasts = contrasts;
  double total = 0, t_wys = 0, t_wae = 0, t_und = 0;
  std::optional<std::size_t> strongest_wae, weakest_wys;
  for (std::size_t i = 0; i < contrasts.size(); ++i) {
    const auto& c = contrasts[i];
    bool sized = c.groups.size() >= 2 && c.delta_prior.has_value();
    for (const auto& g : c.groups) sized = sized && g.count >= min_size;
    Evidence e = Evidence::undefined;
    if (sized) e = *c.delta_prior <= threshold ? Evidence::WYSIWYG : Evidence::WAE;
    rep.evidence.push_back(e);
    const double sz = c.total_size();
    total += sz;
    if (e == Evidence::WYSIWYG) {
      t_wys += sz;
      ++rep.n_wysiwyg;
      if (!weakest_wys || *c.delta_prior > *contrasts[*weakest_wys].delta_prior) weakest_wys = i;
    } else if (e == Evidence::WAE) {
      t_wae += sz;
      ++rep.n_wae;
      if (!strongest_wae || *c.delta_prior > *contrasts[*strongest_wae].delta_prior) strongest_wae = i;
    } else {
      t_und += sz;
      ++rep.n_undefined;
    }
  }
  if (total > 0) {
    rep.share_wysiwyg = t_wys / total;
    rep.share_wae = t_wae / total;
    rep.share_undefined = t_und / total;
  }
  auto pct = [](double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << 100.0 * v << "%";
    return os.str();
  };
  bool multi_group = false;
  for (const auto& c : contrasts) multi_group = multi_group || c.groups.size() >= 2;
  if (contrasts.empty()) {
    rep.summary.push_back("No rules were extracted, so there is no evidence for either worldview.");
  } else if (!multi_group) {
    rep.summary.push_back("Insufficient groups: at least two sensitive classes are needed to contrast rules.");
  } else if (rep.n_wysiwyg + rep.n_wae == 0) {
    rep.summary.push_back("No rule has enough support in every group; no evidence for either worldview.");
  } else if (rep.n_wae == 0) {
    rep.summary.push_back("All " + std::to_string(rep.n_wysiwyg) + " sized rules show prior differences within " +
                          pct(threshold) + ": the evidence suggests following only WYSIWYG.");
  } else if (rep.n_wysiwyg == 0) {
    rep.summary.push_back("All " + std::to_string(rep.n_wae) + " sized rules show prior differences above " +
                          pct(threshold) + ": the evidence suggests enforcing a WAE worldview.");
  } else {
    const bool wae_dominant = t_wae > t_wys;
    rep.summary.push_back("Mixed evidence: " + pct(rep.share_wysiwyg) + " of rule coverage supports WYSIWYG and " +
                          pct(rep.share_wae) + " supports WAE; the dominant worldview is " +
                          (wae_dominant ? "WAE." : "WYSIWYG."));
    const auto counter = wae_dominant ? weakest_wys : strongest_wae;
    if (counter) {
      const auto& c = contrasts[*counter];
      rep.summary.push_back("Strongest counter-evidence: rule from group '" + c.rule.origin + "' (" + c.rule.text() +
                            ") with prior difference " + pct(*c.delta_prior) + ".");
    }
  }
  if (strongest_wae && rep.n_wae > 0 && rep.n_wysiwyg == 0) {
    const auto& c = contrasts[*strongest_wae];
    rep.summary.push_back("Largest prior difference: " + pct(*c.delta_prior) + " for rule " + c.rule.text() + ".");
  }
  if (rep.n_undefined > 0) {
    rep.summary.push_back(std::to_string(rep.n_undefined) + " rule(s) lacked support (< " + std::to_string(min_size) +
                          " rows in some group) and were not classified.");
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const DecisionRule& r) {
  nlohmann::ordered_json conds = nlohmann::ordered_json::array();
  for (const auto& c : r.conditions) {
    conds.push_back({{"feature", c.feature}, {"op", c.greater ? ">" : "<="}, {"threshold", c.threshold}});
  }
  return {{"origin", r.origin}, {"leaf", r.leaf}, {"conditions", conds}, {"support", r.support},
          {"pos_rate", r.pos_rate}, {"text", r.text()}};
}

inline nlohmann::ordered_json to_json(const WorldviewReport& rep, const std::vector<SurrogateQuality>& quality = {}) {
  nlohmann::ordered_json rules = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rep.contrasts.size(); ++i) {
    const auto& c = rep.contrasts[i];
    nlohmann::ordered_json groups = nlohmann::ordered_json::object();
    for (const auto& g : c.groups) {
      groups[g.group] = {{"size", g.size}, {"count", g.count}, {"prior", opt_json(g.prior)}};
    }
    rules.push_back({{"rule", to_json(c.rule)},
                     {"groups", groups},
                     {"delta_prior", opt_json(c.delta_prior)},
                     {"evidence", to_string(rep.evidence[i])},
                     {"flags", c.flags}});
  }
  nlohmann::ordered_json q = nlohmann::ordered_json::array();
  for (const auto& s : quality) {
    q.push_back({{"group", s.group}, {"rows", s.rows}, {"leaves", s.leaves}, {"accuracy", s.accuracy},
                 {"f1", opt_json(s.f1)}});
  }
  return {{"threshold", rep.threshold},
          {"min_size", rep.min_size},
          {"shares", {{"WYSIWYG", rep.share_wysiwyg}, {"WAE", rep.share_wae}, {"undefined", rep.share_undefined}}},
          {"counts", {{"WYSIWYG", rep.n_wysiwyg}, {"WAE", rep.n_wae}, {"undefined", rep.n_undefined}}},
          {"rules", rules},
          {"surrogate_quality", q},
          {"summary", rep.summary}};
}

inline std::string to_text(const WorldviewReport& rep, const std::vector<SurrogateQuality>& quality = {}) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  for (const auto& q : quality) {
    os << "surrogate[" << q.group << "]: " << q.leaves << " leaves, accuracy " << q.accuracy << ", F1 "
       << format_value(q.f1, 3) << "\n";
  }
  for (std::size_t i = 0; i < rep.contrasts.size(); ++i) {
    const auto& c = rep.contrasts[i];
    os << "[" << c.rule.origin << "] " << c.rule.text() << "\n    ";
    for (const auto& g : c.groups) os << g.group << ": size " << g.size << " prior " << format_value(g.prior, 3) << "  ";
    os << "dprior " << format_value(c.delta_prior, 3) << " -> " << to_string(rep.evidence[i]) << "\n";
  }
  for (const auto& s : rep.summary) os << s << "\n";
  return os.str();
}

}  // namespace fairkit
