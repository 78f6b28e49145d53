#pragma once

// Ranking of evaluated models by the fairness/performance trade-off.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairkit/error.hpp"
#include "fairkit/metrics.hpp"

namespace fairkit {

struct EvaluatedModel {
  std::string id;
  MetricsReport metrics;
  std::string family = "none";  // none | pre | in | post
};

/// F-beta-shaped combination of performance pi and fairness (1 - |phi|).
inline double tradeoff_score(double pi, double phi, double beta = 1.0) {
  require(beta > 0 && std::isfinite(beta), "BadBeta", "beta must be positive");
  require(pi >= 0.0 && pi <= 1.0, "BadInput", "performance must lie in [0,1]");
  require(phi >= -1.0 && phi <= 1.0, "BadInput", "fairness value must lie in [-1,1]");
  const double f = 1.0 - std::abs(phi);
  const double b2 = beta * beta;
  const double num = (1.0 + b2) * f * pi;
  const double den = b2 * f + pi;
  if (den <= 0.0) return 0.0;
  return num / den;
}

/// |phi| as consumed by the ranking rules; ratio metrics enter as |1 - ratio|.
inline double fairness_magnitude(const std::string& key, double value) {
  const bool ratio = key.size() >= 6 && key.compare(key.size() - 6, 6, "_ratio") == 0;
  return ratio ? std::abs(1.0 - value) : std::abs(value);
}

struct ComparisonRow {
  std::string id;
  std::string family;
  std::optional<double> phi;  // |phi|
  std::optional<double> pi;
  std::optional<double> tradeoff;
  bool feasible = false;
  bool on_frontier = false;
};

struct ComparisonReport {
  std::string fairness_key, performance_key;
  double Phi = 0.05, beta = 1.0;
  std::vector<ComparisonRow> rows;
  std::optional<std::string> winner;  // constrained best
  std::optional<std::string> best_tradeoff;
  std::vector<std::string> frontier;
};

namespace detail {

inline std::pair<double, double> phi_pi(const EvaluatedModel& m, const std::string& fk, const std::string& pk) {
  const auto phi = m.metrics.get(fk);
  const auto pi = m.metrics.get(pk);
  require(phi.has_value(), "MissingMetric", "metric '" + fk + "' undefined for model '" + m.id + "'");
  require(pi.has_value(), "MissingMetric", "metric '" + pk + "' undefined for model '" + m.id + "'");
  return {fairness_magnitude(fk, *phi), *pi};
}

}  // namespace detail

struct ConstrainedBest {
  std::optional<std::string> id;  // empty when no model satisfies |phi| <= Phi
  std::vector<std::string> feasible;
};

/// argmax of performance among models with |phi| <= Phi; ties by model id.
inline ConstrainedBest constrained_best(const std::vector<EvaluatedModel>& models, const std::string& fairness_key,
                                        const std::string& performance_key, double Phi) {
  ConstrainedBest out;
  std::optional<std::pair<double, std::string>> best;
  for (const auto& m : models) {
    const auto [phi, pi] = detail::phi_pi(m, fairness_key, performance_key);
    if (phi > Phi) continue;
    out.feasible.push_back(m.id);
    if (!best || pi > best->first || (pi == best->first && m.id < best->second)) best = std::make_pair(pi, m.id);
  }
  if (best) out.id = best->second;
  return out;
}

/// Models not dominated in (smaller |phi|, larger pi), ordered by |phi|.
/// Identical points keep only the lexicographically first id.
inline std::vector<std::string> pareto_frontier(const std::vector<EvaluatedModel>& models,
                                                const std::string& fairness_key,
                                                const std::string& performance_key) {
  struct P {
    double phi, pi;
    std::string id;
  };
  std::vector<P> pts;
  for (const auto& m : models) {
    const auto [phi, pi] = detail::phi_pi(m, fairness_key, performance_key);
    pts.push_back({phi, pi, m.id});
  }
  std::vector<std::string> out;
  std::vector<P> kept;
  for (const auto& p : pts) {
    bool dominated = false;
    for (const auto& q : pts) {
      if (&q == &p) continue;
      const bool weakly = q.phi <= p.phi && q.pi >= p.pi;
      const bool strictly = q.phi < p.phi || q.pi > p.pi;
      if (weakly && strictly) dominated = true;
      if (q.phi == p.phi && q.pi == p.pi && q.id < p.id) dominated = true;
    }
    if (!dominated) kept.push_back(p);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const P& a, const P& b) {
    if (a.phi != b.phi) return a.phi < b.phi;
    return a.id < b.id;
  });
  for (const auto& p : kept) out.push_back(p.id);
  return out;
}

inline ComparisonReport compare_models(const std::vector<EvaluatedModel>& models, const std::string& fairness_key,
                                       const std::string& performance_key, double Phi, double beta = 1.0) {
  ComparisonReport rep;
  rep.fairness_key = fairness_key;
  rep.performance_key = performance_key;
  rep.Phi = Phi;
  rep.beta = beta;
  const auto cb = constrained_best(models, fairness_key, performance_key, Phi);
  rep.winner = cb.id;
  rep.frontier = pareto_frontier(models, fairness_key, performance_key);
  std::optional<std::pair<double, std::string>> best_t;
  for (const auto& m : models) {
    ComparisonRow row;
    row.id = m.id;
    row.family = m.family;
    const auto [phi, pi] = detail::phi_pi(m, fairness_key, performance_key);
    row.phi = phi;
    row.pi = pi;
    row.tradeoff = tradeoff_score(std::clamp(pi, 0.0, 1.0), std::clamp(phi, 0.0, 1.0), beta);
    row.feasible = phi <= Phi;
    row.on_frontier = std::find(rep.frontier.begin(), rep.frontier.end(), m.id) != rep.frontier.end();
    if (!best_t || *row.tradeoff > best_t->first || (*row.tradeoff == best_t->first && m.id < best_t->second)) {
      best_t = std::make_pair(*row.tradeoff, m.id);
    }
    rep.rows.push_back(row);
  }
  if (best_t) rep.best_tradeoff = best_t->second;
  return rep;
}

inline nlohmann::ordered_json to_json(const ComparisonReport& r) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"id", row.id},
                    {"family", row.family},
                    {"phi_abs", row.phi ? nlohmann::ordered_json(*row.phi) : nullptr},
                    {"pi", row.pi ? nlohmann::ordered_json(*row.pi) : nullptr},
                    {"tradeoff", row.tradeoff ? nlohmann::ordered_json(*row.tradeoff) : nullptr},
                    {"feasible", row.feasible},
                    {"on_frontier", row.on_frontier}});
  }
  return {{"fairness_key", r.fairness_key},
          {"performance_key", r.performance_key},
          {"Phi", r.Phi},
          {"beta", r.beta},
          {"models", rows},
          {"winner", r.winner ? nlohmann::ordered_json(*r.winner) : nullptr},
          {"feasible_set_empty", !r.winner.has_value()},
          {"best_tradeoff", r.best_tradeoff ? nlohmann::ordered_json(*r.best_tradeoff) : nullptr},
          {"frontier", r.frontier}};
}

/// Text table; the best value per column is marked *x* and the worst _x_.
inline std::string to_table(const ComparisonReport& r) {
  std::size_t w = 5;
  for (const auto& row : r.rows) w = std::max(w, row.id.size());
  auto mark = [](double v, double best, double worst, int prec) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    if (v == best && best != worst) return "*" + os.str() + "*";
    if (v == worst && best != worst) return "_" + os.str() + "_";
    return " " + os.str() + " ";
  };
  double phi_best = 1e9, phi_worst = -1e9, pi_best = -1e9, pi_worst = 1e9, t_best = -1e9, t_worst = 1e9;
  for (const auto& row : r.rows) {
    phi_best = std::min(phi_best, *row.phi);
    phi_worst = std::max(phi_worst, *row.phi);
    pi_best = std::max(pi_best, *row.pi);
    pi_worst = std::min(pi_worst, *row.pi);
    t_best = std::max(t_best, *row.tradeoff);
    t_worst = std::min(t_worst, *row.tradeoff);
  }
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w)) << "model" << "  " << std::setw(10) << ("|" + r.fairness_key + "|")
     << "  " << std::setw(10) << r.performance_key << "  " << std::setw(10) << "tradeoff" << "  flags\n";
  for (const auto& row : r.rows) {
    os << std::left << std::setw(static_cast<int>(w)) << row.id << "  " << std::setw(10)
       << mark(*row.phi, phi_best, phi_worst, 4) << "  " << std::setw(10) << mark(*row.pi, pi_best, pi_worst, 4)
       << "  " << std::setw(10) << mark(*row.tradeoff, t_best, t_worst, 4) << "  "
       << (row.feasible ? "feasible" : "") << (row.on_frontier ? " frontier" : "") << "\n";
  }
  os << "Phi = " << r.Phi << ", beta = " << r.beta << "\n";
  if (r.winner) {
    os << "constrained best: " << *r.winner << "\n";
  } else {
    os << "constrained best: none (no model satisfies the fairness bound)\n";
  }
  if (r.best_tradeoff) os << "best trade-off: " << *r.best_tradeoff << "\n";
  return os.str();
}

}  // namespace fairkit
