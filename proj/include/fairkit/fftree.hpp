#pragma once

// Fairness-constrained greedy decision tree.  A split is admissible only if
// the local decision it induces (higher-positive-rate branch predicts 1)
// keeps every constraint's group gap at or below its tolerance.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairkit/dataset.hpp"
#include "fairkit/error.hpp"
#include "fairkit/metrics.hpp"
#include "fairkit/predictor.hpp"

namespace fairkit {

struct FairnessConstraint {
  GapKind criterion = GapKind::DP;
  std::string sensitive;
  double delta = 0.05;

  bool operator==(const FairnessConstraint&) const = default;
};

inline void validate(const FairnessConstraint& c) {
  require(c.criterion == GapKind::DP || c.criterion == GapKind::PP || c.criterion == GapKind::EOPP ||
              c.criterion == GapKind::PE,
          "BadConstraint", "tree constraints must be DP, PP, EOPP or PE");
  require(c.delta >= 0.0 && c.delta <= 1.0, "BadConstraint", "delta must lie in [0,1]");
  require(!c.sensitive.empty(), "BadConstraint", "constraint needs a sensitive column");
}

/// Parses "KIND:DELTA:COLUMN", e.g. "DP:0.05:sex".
inline FairnessConstraint parse_constraint(std::string_view text) {
  const auto a = text.find(':');
  const auto b = a == std::string_view::npos ? a : text.find(':', a + 1);
  require(b != std::string_view::npos, "BadConstraint", "expected KIND:DELTA:COLUMN, got '" + std::string(text) + "'");
  FairnessConstraint c;
  c.criterion = parse_gap_kind(text.substr(0, a));
  const auto d = parse_double(text.substr(a + 1, b - a - 1));
  require(d.has_value(), "BadConstraint", "bad delta in '" + std::string(text) + "'");
  c.delta = *d;
  c.sensitive = std::string(text.substr(b + 1));
  validate(c);
  return c;
}

struct GrowthConfig {
  std::size_t max_depth = 8;
  std::size_t min_samples_leaf = 50;
  std::size_t min_samples_split = 100;
  std::size_t min_group_count = 1;
  std::size_t max_leaves = 0;  // 0 = unlimited
  std::string tie_break = "ig>name>threshold";

  bool operator==(const GrowthConfig&) const = default;
};

inline void validate(const GrowthConfig& c) {
  require(c.min_samples_leaf >= 1, "BadConfig", "min_samples_leaf must be >= 1");
  require(c.min_samples_split >= 2 * c.min_samples_leaf, "BadConfig",
          "min_samples_split must be >= 2 * min_samples_leaf");
  require(c.max_leaves != 1, "BadConfig", "max_leaves must be 0 (unlimited) or >= 2");
}

inline constexpr double kIgEpsilon = 1e-12;
inline constexpr double kConstraintSlack = 1e-12;

inline double entropy2(double pos, double neg) {
  const double n = pos + neg;
  if (n <= 0) return 0.0;
  double h = 0;
  for (double c : {pos, neg}) {
    if (c > 0) {
      const double p = c / n;
      h -= p * std::log2(p);
    }
  }
  return h;
}

/// Counts are (positives, negatives).
inline double information_gain(std::pair<double, double> parent, std::pair<double, double> left,
                               std::pair<double, double> right) {
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); };
  require(close(parent.first, left.first + right.first) && close(parent.second, left.second + right.second),
          "CountMismatch", "left + right must equal parent");
  const double n = parent.first + parent.second;
  require(n > 0, "CountMismatch", "empty parent");
  const double nl = left.first + left.second, nr = right.first + right.second;
  return entropy2(parent.first, parent.second) - (nl / n) * entropy2(left.first, left.second) -
         (nr / n) * entropy2(right.first, right.second);
}

/// Weighted counts of one sensitive group at a node, per branch (0 = left).
struct GroupBranchStats {
  double w[2] = {0, 0};
  double pos[2] = {0, 0};
  std::size_t rows = 0;
};

/// Branch that receives the local positive decision: higher weighted
/// positive rate, then more positives, then left.
inline int positive_branch(double wl, double pl, double wr, double pr) {
  const double rl = wl > 0 ? pl / wl : 0.0, rr = wr > 0 ? pr / wr : 0.0;
  if (rl != rr) return rr > rl ? 1 : 0;
  if (pl != pr) return pr > pl ? 1 : 0;
  return 0;
}

/// Max pairwise gap of the criterion's rate over eligible groups, or
/// nullopt (treated as satisfied) when fewer than two groups qualify.
inline OptRate local_constraint_value(GapKind kind, const std::vector<GroupBranchStats>& groups, int pb,
                                      std::size_t min_group_count) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  int eligible = 0;
  const int nb = 1 - pb;
  for (const auto& g : groups) {
    if (g.rows == 0 || g.rows < min_group_count) continue;
    double num = 0, den = 0;
    switch (kind) {
      case GapKind::DP:
        num = g.w[pb];
        den = g.w[0] + g.w[1];
        break;
      case GapKind::EOPP:
        num = g.pos[nb];
        den = g.pos[0] + g.pos[1];
        break;
      case GapKind::PE:
        num = g.w[pb] - g.pos[pb];
        den = (g.w[0] - g.pos[0]) + (g.w[1] - g.pos[1]);
        break;
      case GapKind::PP:
        num = g.pos[pb];
        den = g.w[pb];
        break;
      default:
        fail("BadConstraint", "unsupported tree constraint");
    }
    if (den <= 0) continue;
    const double r = num / den;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    ++eligible;
  }
  if (eligible < 2) return std::nullopt;
  return hi - lo;
}

struct SplitCandidate {
  std::string feature;
  double threshold = 0;  // left: value <= threshold, right: value > threshold
  double ig = 0;
  std::vector<OptRate> constraint_values;
  int positive_branch = 0;
};

struct TreeNode {
  int id = 0;
  bool leaf = true;
  std::string feature;
  double threshold = 0;
  int left = -1, right = -1;
  double pos_rate = 0;
  double weight = 0;
  double pos_weight = 0;
  std::size_t n = 0;
  std::size_t depth = 0;
  double ig = 0;
  std::vector<OptRate> constraint_values;

  bool operator==(const TreeNode&) const = default;
};

struct FFTreeModel {
  std::vector<FairnessConstraint> constraints;
  GrowthConfig config;
  std::vector<std::string> features;  // candidate split columns seen at fit time
  nlohmann::json encoding;            // null, {"ref": path} or an embedded map
  std::vector<TreeNode> nodes;        // nodes[i].id == i, root at 0, pre-order

  std::size_t n_leaves() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.leaf; }));
  }
  bool operator==(const FFTreeModel&) const = default;
};

namespace detail {

/// Column data shared by every node during one fit.
struct TreeData {
  std::vector<std::string> names;  // sorted candidate features
  std::vector<const std::vector<double>*> cols;
  std::vector<bool> binary;
  std::vector<int> y;
  std::span<const double> w;
  std::vector<std::vector<int>> groups;  // per constraint: group index per row
  std::vector<std::size_t> n_groups;
};

inline TreeData prepare(const TabularDataset& ds, const std::vector<FairnessConstraint>& constraints) {
  TreeData d;
  std::set<std::string> sensitive_names;
  for (const auto& c : ds.columns()) {
    if (c.schema.role == Role::sensitive) sensitive_names.insert(c.name());
  }
  for (const auto& fc : constraints) {
    validate(fc);
    auto idx = ds.find(fc.sensitive);
    require(idx.has_value() && ds.columns()[*idx].schema.role == Role::sensitive, "NoSensitiveColumn",
            "constraint column '" + fc.sensitive + "' is not a sensitive column");
    const auto& col = ds.columns()[*idx];
    std::vector<int> g(ds.n_rows());
    std::size_t k = 0;
    if (col.is_numeric()) {
      std::map<double, int> ids;
      for (double v : col.numeric) ids.emplace(v, 0);
      for (auto& [v, i] : ids) i = static_cast<int>(k++);
      for (std::size_t r = 0; r < ds.n_rows(); ++r) g[r] = ids[col.numeric[r]];
    } else {
      g = col.codes;
      k = col.classes.size();
    }
    d.groups.push_back(std::move(g));
    d.n_groups.push_back(k);
  }
  for (const auto& c : ds.columns()) {
    if (c.schema.role != Role::feature || sensitive_names.count(c.name())) continue;
    require(c.is_numeric(), "UnencodedData", "feature '" + c.name() + "' is categorical; encode first");
    d.names.push_back(c.name());
  }
  std::sort(d.names.begin(), d.names.end());
  for (const auto& name : d.names) {
    const auto& col = ds.column(name);
    d.cols.push_back(&col.numeric);
    d.binary.push_back(std::all_of(col.numeric.begin(), col.numeric.end(),
                                   [](double v) { return v == 0.0 || v == 1.0; }));
  }
  d.y = ds.labels();
  d.w = ds.weights();
  return d;
}

struct NodeTotals {
  double w = 0, pos = 0;
  std::vector<std::vector<GroupBranchStats>> groups;  // [constraint][group], totals in w[0]/pos[0]
};

inline NodeTotals totals(const TreeData& d, const std::vector<std::size_t>& rows) {
  NodeTotals t;
  t.groups.resize(d.groups.size());
  for (std::size_t c = 0; c < d.groups.size(); ++c) t.groups[c].resize(d.n_groups[c]);
  for (auto r : rows) {
    const double wr = d.w[r];
    t.w += wr;
    if (d.y[r] == 1) t.pos += wr;
    for (std::size_t c = 0; c < d.groups.size(); ++c) {
      auto& g = t.groups[c][static_cast<std::size_t>(d.groups[c][r])];
      g.w[0] += wr;
      if (d.y[r] == 1) g.pos[0] += wr;
      ++g.rows;
    }
  }
  return t;
}

/// Evaluates one candidate given left-side accumulators; updates `best`.
struct Evaluator {
  const TreeData& d;
  const std::vector<FairnessConstraint>& constraints;
  const GrowthConfig& cfg;
  const NodeTotals& tot;
  std::vector<std::vector<GroupBranchStats>> scratch;

  Evaluator(const TreeData& d_, const std::vector<FairnessConstraint>& c_, const GrowthConfig& g_,
            const NodeTotals& t_)
      : d(d_), constraints(c_), cfg(g_), tot(t_), scratch(t_.groups) {}

  // left_groups holds left-branch w/pos/rows in w[0]/pos[0]/rows.
  void consider(std::size_t f, double threshold, double wl, double pl, std::size_t nl, std::size_t n,
                const std::vector<std::vector<GroupBranchStats>>& left_groups,
                std::optional<SplitCandidate>& best) {
    const std::size_t nr = n - nl;
    if (nl < cfg.min_samples_leaf || nr < cfg.min_samples_leaf) return;
    const double wr = tot.w - wl, pr = tot.pos - pl;
    const double n_w = tot.w;
    if (n_w <= 0) return;
    const double ig = entropy2(tot.pos, tot.w - tot.pos) - (wl / n_w) * entropy2(pl, wl - pl) -
                      (wr / n_w) * entropy2(pr, wr - pr);
    if (!(ig > kIgEpsilon)) return;
    if (best && !(ig > best->ig + kIgEpsilon)) return;
    const int pb = positive_branch(wl, pl, wr, pr);
    std::vector<OptRate> values;
    for (std::size_t c = 0; c < constraints.size(); ++c) {
      auto& s = scratch[c];
      for (std::size_t g = 0; g < s.size(); ++g) {
        const auto& L = left_groups[c][g];
        const auto& T = tot.groups[c][g];
        s[g].w[0] = L.w[0];
        s[g].pos[0] = L.pos[0];
        s[g].w[1] = T.w[0] - L.w[0];
        s[g].pos[1] = T.pos[0] - L.pos[0];
        s[g].rows = T.rows;
      }
      const auto v = local_constraint_value(constraints[c].criterion, s, pb, cfg.min_group_count);
      if (v && *v > constraints[c].delta + kConstraintSlack) return;
      values.push_back(v);
    }
    best = SplitCandidate{d.names[f], threshold, ig, std::move(values), pb};
  }
};

inline std::optional<SplitCandidate> best_split(const TreeData& d, const std::vector<std::size_t>& rows,
                                                const std::vector<FairnessConstraint>& constraints,
                                                const GrowthConfig& cfg, const NodeTotals& tot) {
  std::optional<SplitCandidate> best;
  Evaluator ev(d, constraints, cfg, tot);
  std::vector<std::vector<GroupBranchStats>> left(tot.groups.size());
  auto reset_left = [&] {
    for (std::size_t c = 0; c < left.size(); ++c) left[c].assign(tot.groups[c].size(), GroupBranchStats{});
  };
  auto add_left = [&](std::size_t r) {
    for (std::size_t c = 0; c < left.size(); ++c) {
      auto& g = left[c][static_cast<std::size_t>(d.groups[c][r])];
      g.w[0] += d.w[r];
      if (d.y[r] == 1) g.pos[0] += d.w[r];
      ++g.rows;
    }
  };
  std::vector<std::pair<double, std::size_t>> sorted;
  for (std::size_t f = 0; f < d.names.size(); ++f) {
    const auto& col = *d.cols[f];
    reset_left();
    double wl = 0, pl = 0;
    std::size_t nl = 0;
    if (d.binary[f]) {
      bool has0 = false, has1 = false;
      for (auto r : rows) {
        if (col[r] == 0.0) {
          has0 = true;
          wl += d.w[r];
          if (d.y[r] == 1) pl += d.w[r];
          ++nl;
          add_left(r);
        } else {
          has1 = true;
        }
      }
      if (has0 && has1) ev.consider(f, 0.5, wl, pl, nl, rows.size(), left, best);
      continue;
    }
    sorted.clear();
    for (auto r : rows) sorted.emplace_back(col[r], r);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      const auto r = sorted[i].second;
      wl += d.w[r];
      if (d.y[r] == 1) pl += d.w[r];
      ++nl;
      add_left(r);
      if (sorted[i].first == sorted[i + 1].first) continue;
      const double thr = 0.5 * (sorted[i].first + sorted[i + 1].first);
      ev.consider(f, thr, wl, pl, nl, rows.size(), left, best);
    }
  }
  return best;
}

}  // namespace detail

/// Best admissible split for the given rows, or nullopt.  Exposed for tests
/// and tooling; fit() uses the same routine.
inline std::optional<SplitCandidate> find_best_split(const TabularDataset& ds, const std::vector<std::size_t>& rows,
                                                     const std::vector<FairnessConstraint>& constraints,
                                                     const GrowthConfig& cfg) {
  const auto d = detail::prepare(ds, constraints);
  const auto tot = detail::totals(d, rows);
  return detail::best_split(d, rows, constraints, cfg, tot);
}

namespace detail {

inline void renumber_preorder(std::vector<TreeNode>& nodes) {
  std::vector<TreeNode> out;
  out.reserve(nodes.size());
  std::function<int(int)> visit = [&](int old) -> int {
    const int id = static_cast<int>(out.size());
    out.push_back(nodes[static_cast<std::size_t>(old)]);
    out.back().id = id;
    if (!out.back().leaf) {
      const int l = visit(nodes[static_cast<std::size_t>(old)].left);
      const int r = visit(nodes[static_cast<std::size_t>(old)].right);
      out[static_cast<std::size_t>(id)].left = l;
      out[static_cast<std::size_t>(id)].right = r;
    }
    return id;
  };
  if (!nodes.empty()) visit(0);
  nodes = std::move(out);
}

}  // namespace detail

inline FFTreeModel fit(const TabularDataset& train, const std::vector<FairnessConstraint>& constraints,
                       const GrowthConfig& cfg = {}) {
  validate(cfg);
  require(train.n_rows() > 0, "TooFewRows", "empty training set");
  const auto d = detail::prepare(train, constraints);
  FFTreeModel model;
  model.constraints = constraints;
  model.config = cfg;
  model.features = d.names;

  struct Pending {
    int node;
    std::vector<std::size_t> rows;
    std::optional<SplitCandidate> split;
    detail::NodeTotals tot;
  };
  auto make_leaf = [&](const std::vector<std::size_t>& rows, std::size_t depth, const detail::NodeTotals& tot) {
    TreeNode n;
    n.id = static_cast<int>(model.nodes.size());
    n.weight = tot.w;
    n.pos_weight = tot.pos;
    n.pos_rate = tot.w > 0 ? tot.pos / tot.w : 0.0;
    n.n = rows.size();
    n.depth = depth;
    model.nodes.push_back(n);
    return n.id;
  };
  auto plan = [&](int node, std::vector<std::size_t> rows, detail::NodeTotals tot) {
    Pending p{node, std::move(rows), std::nullopt, std::move(tot)};
    const auto& n = model.nodes[static_cast<std::size_t>(node)];
    const bool pure = p.tot.pos <= 0 || p.tot.pos >= p.tot.w;
    if (n.depth < cfg.max_depth && p.rows.size() >= cfg.min_samples_split && !pure) {
      p.split = detail::best_split(d, p.rows, constraints, cfg, p.tot);
    }
    return p;
  };

  auto root_rows = all_rows(train);
  auto root_tot = detail::totals(d, root_rows);
  const int root = make_leaf(root_rows, 0, root_tot);
  std::vector<Pending> frontier;
  frontier.push_back(plan(root, std::move(root_rows), std::move(root_tot)));
  std::size_t leaves = 1;
  while (true) {
    // Pick the expandable leaf with the largest weighted gain (lowest node id on ties).
    std::optional<std::size_t> pick;
    double best_gain = -1;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      if (!frontier[i].split) continue;
      const double gain = frontier[i].split->ig * frontier[i].tot.w;
      if (!pick || gain > best_gain + kIgEpsilon) {
        pick = i;
        best_gain = gain;
      }
    }
    if (!pick || (cfg.max_leaves && leaves >= cfg.max_leaves)) break;
    Pending p = std::move(frontier[*pick]);
    frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(*pick));
    const auto& sp = *p.split;
    const auto f = static_cast<std::size_t>(std::lower_bound(d.names.begin(), d.names.end(), sp.feature) - d.names.begin());
    std::vector<std::size_t> lrows, rrows;
    for (auto r : p.rows) ((*d.cols[f])[r] <= sp.threshold ? lrows : rrows).push_back(r);
    const std::size_t depth = model.nodes[static_cast<std::size_t>(p.node)].depth + 1;
    auto ltot = detail::totals(d, lrows);
    auto rtot = detail::totals(d, rrows);
    const int l = make_leaf(lrows, depth, ltot);
    const int r = make_leaf(rrows, depth, rtot);
    auto& n = model.nodes[static_cast<std::size_t>(p.node)];
    n.leaf = false;
    n.feature = sp.feature;
    n.threshold = sp.threshold;
    n.ig = sp.ig;
    n.constraint_values = sp.constraint_values;
    n.left = l;
    n.right = r;
    ++leaves;
    frontier.push_back(plan(l, std::move(lrows), std::move(ltot)));
    frontier.push_back(plan(r, std::move(rrows), std::move(rtot)));
  }
  detail::renumber_preorder(model.nodes);
  return model;
}

// ---------------------------------------------------------------------------
// Inference.

/// Columns the tree actually tests, sorted.
inline std::vector<std::string> used_features(const FFTreeModel& m) {
  std::set<std::string> s;
  for (const auto& n : m.nodes) {
    if (!n.leaf) s.insert(n.feature);
  }
  return {s.begin(), s.end()};
}

inline Predictor as_predictor(const FFTreeModel& m, std::string id = "fftree") {
  struct Compiled {
    std::vector<int> feature;  // index into inputs, -1 for leaves
    std::vector<double> threshold, rate;
    std::vector<int> left, right;
  };
  auto inputs = used_features(m);
  auto c = std::make_shared<Compiled>();
  for (const auto& n : m.nodes) {
    c->feature.push_back(n.leaf ? -1
                                : static_cast<int>(std::lower_bound(inputs.begin(), inputs.end(), n.feature) -
                                                   inputs.begin()));
    c->threshold.push_back(n.threshold);
    c->rate.push_back(n.pos_rate);
    c->left.push_back(n.left);
    c->right.push_back(n.right);
  }
  Predictor p;
  p.id = std::move(id);
  p.inputs = std::move(inputs);
  p.score = [c](std::span<const double> x) {
    std::size_t i = 0;
    while (c->feature[i] >= 0) {
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(c->feature[i])] <= c->threshold[i] ? c->left[i]
                                                                                                  : c->right[i]);
    }
    return c->rate[i];
  };
  return p;
}

/// Leaf id reached by each row.
inline std::vector<int> leaf_ids(const FFTreeModel& m, const TabularDataset& ds) {
  std::vector<const Column*> cols(m.nodes.size(), nullptr);
  for (std::size_t i = 0; i < m.nodes.size(); ++i) {
    if (m.nodes[i].leaf) continue;
    require(ds.has(m.nodes[i].feature), "EncodingMismatch", "dataset lacks column '" + m.nodes[i].feature + "'");
    cols[i] = &ds.column(m.nodes[i].feature);
  }
  std::vector<int> out(ds.n_rows());
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    std::size_t i = 0;
    while (!m.nodes[i].leaf) {
      i = static_cast<std::size_t>(cols[i]->value(r) <= m.nodes[i].threshold ? m.nodes[i].left : m.nodes[i].right);
    }
    out[r] = static_cast<int>(i);
  }
  return out;
}

inline std::vector<double> predict_score(const FFTreeModel& m, const TabularDataset& ds) {
  const auto ids = leaf_ids(m, ds);
  std::vector<double> out(ids.size());
  for (std::size_t r = 0; r < ids.size(); ++r) out[r] = m.nodes[static_cast<std::size_t>(ids[r])].pos_rate;
  return out;
}

inline std::vector<int> predict_label(const FFTreeModel& m, const TabularDataset& ds, double tau = 0.5) {
  const auto s = predict_score(m, ds);
  std::vector<int> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] > tau ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Audit and pruning.

struct AuditRow {
  int node = 0;
  std::string feature;
  std::vector<OptRate> values;
  bool ok = true;
};

struct AuditReport {
  bool pass = true;
  std::vector<AuditRow> rows;
  std::vector<int> sensitive_split_nodes;
  std::vector<int> failing_nodes;
};

/// Recomputes every internal node's local constraint values on `train`.
inline AuditReport audit_compliance(const FFTreeModel& m, const TabularDataset& train) {
  AuditReport rep;
  const auto d = detail::prepare(train, m.constraints);
  std::set<std::string> sensitive;
  for (const auto& c : train.columns()) {
    if (c.schema.role == Role::sensitive) sensitive.insert(c.name());
  }
  for (const auto& fc : m.constraints) sensitive.insert(fc.sensitive);

  std::vector<std::vector<std::size_t>> at(m.nodes.size());
  at[0] = all_rows(train);
  for (std::size_t i = 0; i < m.nodes.size(); ++i) {
    const auto& n = m.nodes[i];
    if (n.leaf) continue;
    if (sensitive.count(n.feature)) {
      rep.sensitive_split_nodes.push_back(n.id);
      rep.pass = false;
    }
    require(train.has(n.feature), "EncodingMismatch", "dataset lacks column '" + n.feature + "'");
    const auto& col = train.column(n.feature);
    std::vector<std::size_t> lrows, rrows;
    for (auto r : at[i]) (col.value(r) <= n.threshold ? lrows : rrows).push_back(r);

    const auto tot = detail::totals(d, at[i]);
    const auto lt = detail::totals(d, lrows);
    const int pb = positive_branch(lt.w, lt.pos, tot.w - lt.w, tot.pos - lt.pos);
    AuditRow row{n.id, n.feature, {}, true};
    for (std::size_t c = 0; c < m.constraints.size(); ++c) {
      std::vector<GroupBranchStats> gs(tot.groups[c].size());
      for (std::size_t g = 0; g < gs.size(); ++g) {
        gs[g].w[0] = lt.groups[c][g].w[0];
        gs[g].pos[0] = lt.groups[c][g].pos[0];
        gs[g].w[1] = tot.groups[c][g].w[0] - lt.groups[c][g].w[0];
        gs[g].pos[1] = tot.groups[c][g].pos[0] - lt.groups[c][g].pos[0];
        gs[g].rows = tot.groups[c][g].rows;
      }
      const auto v = local_constraint_value(m.constraints[c].criterion, gs, pb, m.config.min_group_count);
      row.values.push_back(v);
      if (v && *v > m.constraints[c].delta + kConstraintSlack) row.ok = false;
    }
    if (!row.ok) {
      rep.pass = false;
      rep.failing_nodes.push_back(n.id);
    }
    rep.rows.push_back(std::move(row));
    at[static_cast<std::size_t>(n.left)] = std::move(lrows);
    at[static_cast<std::size_t>(n.right)] = std::move(rrows);
  }
  return rep;
}

/// Replaces the subtree at node_id by a leaf with its aggregate positive rate.
inline FFTreeModel prune(const FFTreeModel& m, int node_id) {
  require(node_id >= 0 && static_cast<std::size_t>(node_id) < m.nodes.size() &&
              !m.nodes[static_cast<std::size_t>(node_id)].leaf,
          "BadNodeId", "node " + std::to_string(node_id) + " is not an internal node");
  FFTreeModel out = m;
  auto& n = out.nodes[static_cast<std::size_t>(node_id)];
  n.leaf = true;
  n.feature.clear();
  n.threshold = 0;
  n.left = n.right = -1;
  n.ig = 0;
  n.constraint_values.clear();
  n.pos_rate = n.weight > 0 ? n.pos_weight / n.weight : 0.0;
  detail::renumber_preorder(out.nodes);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json to_json(const FairnessConstraint& c) {
  return {{"criterion", to_string(c.criterion)}, {"sensitive", c.sensitive}, {"delta", c.delta}};
}

inline nlohmann::json to_json(const GrowthConfig& c) {
  return {{"max_depth", c.max_depth},         {"min_samples_leaf", c.min_samples_leaf},
          {"min_samples_split", c.min_samples_split}, {"min_group_count", c.min_group_count},
          {"max_leaves", c.max_leaves},       {"tie_break", c.tie_break}};
}

inline nlohmann::json to_json(const FFTreeModel& m) {
  nlohmann::json cons = nlohmann::json::array();
  for (const auto& c : m.constraints) cons.push_back(to_json(c));
  nlohmann::json meta = {{"model", "fftree"}, {"constraints", cons}, {"config", to_json(m.config)}, {"features", m.features}};
  if (m.encoding.is_object() && m.encoding.contains("ref")) {
    meta["encoding_ref"] = m.encoding["ref"];
  } else if (!m.encoding.is_null()) {
    meta["encoding"] = m.encoding;
  }
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : m.nodes) {
    nlohmann::json j = {{"id", n.id}, {"kind", n.leaf ? "leaf" : "split"}};
    if (!n.leaf) {
      j["feature"] = n.feature;
      j["threshold"] = n.threshold;
      j["left"] = n.left;
      j["right"] = n.right;
      j["ig"] = n.ig;
      nlohmann::json cv = nlohmann::json::array();
      for (const auto& v : n.constraint_values) cv.push_back(opt_json(v));
      j["constraint_values"] = cv;
    }
    j["pos_rate"] = n.pos_rate;
    j["weight"] = n.weight;
    j["pos_weight"] = n.pos_weight;
    j["n"] = n.n;
    j["depth"] = n.depth;
    nodes.push_back(std::move(j));
  }
  return {{"meta", meta}, {"nodes", nodes}};
}

inline FFTreeModel fftree_from_json(const nlohmann::json& j) {
  try {
    FFTreeModel m;
    const auto& meta = j.at("meta");
    for (const auto& c : meta.at("constraints")) {
      FairnessConstraint fc;
      fc.criterion = parse_gap_kind(c.at("criterion").get<std::string>());
      fc.sensitive = c.at("sensitive").get<std::string>();
      fc.delta = c.at("delta").get<double>();
      m.constraints.push_back(fc);
    }
    const auto& cfg = meta.at("config");
    m.config.max_depth = cfg.at("max_depth").get<std::size_t>();
    m.config.min_samples_leaf = cfg.at("min_samples_leaf").get<std::size_t>();
    m.config.min_samples_split = cfg.at("min_samples_split").get<std::size_t>();
    m.config.min_group_count = cfg.at("min_group_count").get<std::size_t>();
    m.config.max_leaves = cfg.value("max_leaves", std::size_t{0});
    m.config.tie_break = cfg.value("tie_break", std::string("ig>name>threshold"));
    m.features = meta.at("features").get<std::vector<std::string>>();
    if (meta.contains("encoding_ref")) m.encoding = {{"ref", meta["encoding_ref"]}};
    if (meta.contains("encoding")) m.encoding = meta["encoding"];
    for (const auto& nj : j.at("nodes")) {
      TreeNode n;
      n.id = nj.at("id").get<int>();
      n.leaf = nj.at("kind").get<std::string>() == "leaf";
      if (!n.leaf) {
        n.feature = nj.at("feature").get<std::string>();
        n.threshold = nj.at("threshold").get<double>();
        n.left = nj.at("left").get<int>();
        n.right = nj.at("right").get<int>();
        n.ig = nj.value("ig", 0.0);
        for (const auto& v : nj.at("constraint_values")) {
          n.constraint_values.push_back(v.is_null() ? OptRate{} : OptRate{v.get<double>()});
        }
      }
      n.pos_rate = nj.at("pos_rate").get<double>();
      n.weight = nj.at("weight").get<double>();
      n.pos_weight = nj.value("pos_weight", n.pos_rate * n.weight);
      n.n = nj.value("n", std::size_t{0});
      n.depth = nj.value("depth", std::size_t{0});
      m.nodes.push_back(std::move(n));
    }
    for (std::size_t i = 0; i < m.nodes.size(); ++i) {
      const auto& n = m.nodes[i];
      require(n.id == static_cast<int>(i), "BadModel", "node ids must be 0..n-1 in order");
      if (!n.leaf) {
        require(n.left > n.id && n.right > n.id && static_cast<std::size_t>(n.right) < m.nodes.size() &&
                    static_cast<std::size_t>(n.left) < m.nodes.size(),
                "BadModel", "bad child reference at node " + std::to_string(n.id));
      }
    }
    require(!m.nodes.empty(), "BadModel", "model has no nodes");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail("BadModel", e.what());
  }
}

/// Indented text rendering, one node per line.
inline std::string to_text(const FFTreeModel& m) {
  std::ostringstream os;
  std::function<void(int, int)> walk = [&](int id, int indent) {
    const auto& n = m.nodes[static_cast<std::size_t>(id)];
    os << std::string(static_cast<std::size_t>(indent) * 2, ' ');
    if (n.leaf) {
      os << "[" << n.id << "] leaf pos_rate=" << format_value(n.pos_rate) << " weight=" << format_number(n.weight) << "\n";
      return;
    }
    os << "[" << n.id << "] " << n.feature << " <= " << format_number(n.threshold) << " (ig=" << format_value(n.ig) << ")\n";
    walk(n.left, indent + 1);
    walk(n.right, indent + 1);
  };
  if (!m.nodes.empty()) walk(0, 0);
  return os.str();
}

}  // namespace fairkit
