#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fairkit/dataset.hpp"
#include "fairkit/error.hpp"

namespace fairkit {

/// Type-erased scoring model over named input columns.  Categorical inputs
/// arrive as class ids.  `decide` overrides the default rule 1{score > tau}
/// (group-threshold policies use it); it receives the row index so that
/// randomized rules can draw per-row counters.
struct Predictor {
  std::string id;
  std::vector<std::string> inputs;
  std::function<double(std::span<const double>)> score;
  std::function<int(std::span<const double>, std::size_t, double)> decide;

  int label(std::span<const double> x, std::size_t row, double tau) const {
    if (decide) return decide(x, row, tau);
    return score(x) > tau ? 1 : 0;
  }
};

inline FeatureMatrix input_matrix(const Predictor& p, const TabularDataset& ds) {
  for (const auto& name : p.inputs) {
    require(ds.has(name), "EncodingMismatch",
            "model '" + p.id + "' needs column '" + name + "' which the dataset lacks");
  }
  return feature_matrix(ds, p.inputs);
}

inline std::vector<double> predict_scores(const Predictor& p, const TabularDataset& ds) {
  const auto m = input_matrix(p, ds);
  std::vector<double> out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) out[r] = p.score(m.row(r));
  return out;
}

inline std::vector<int> predict_labels(const Predictor& p, const TabularDataset& ds, double tau) {
  const auto m = input_matrix(p, ds);
  std::vector<int> out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) out[r] = p.label(m.row(r), r, tau);
  return out;
}

}  // namespace fairkit
