#pragma once

// Encoding (quartile binning + one-hot), train/test splitting, k-fold,
// intersectional sensitive attributes and slicing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairkit/dataset.hpp"
#include "fairkit/random.hpp"

namespace fairkit {

/// How one source feature column expands into indicator columns.
struct EncodedSource {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  // numeric: bin index = number of cuts < value, i.e. right-closed bins
  // (a, b].  Quartile binning uses the 25/50/75 percentiles; columns with < 4 distinct fit values use midpoints
  // between distinct values instead.
  std::vector<double> cuts;
  bool quartile = true;
  // categorical: classes seen on the fit rows, one indicator each.
  std::vector<std::string> classes;
  std::vector<std::string> indicators;

  bool operator==(const EncodedSource&) const = default;
};

struct EncodingMap {
  std::vector<EncodedSource> sources;
  std::vector<std::string> warnings;

  bool operator==(const EncodingMap&) const = default;
};

/// Linear-interpolation percentile of sorted values (numpy's default rule).
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

namespace detail {

inline std::size_t bin_of(const std::vector<double>& cuts, double v) {
  return static_cast<std::size_t>(std::lower_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
}

inline EncodedSource fit_source(const Column& col, std::span<const std::size_t> fit_rows,
                                std::vector<std::string>& warnings) {
  EncodedSource src;
  src.name = col.name();
  src.kind = col.schema.kind;
  if (col.is_numeric()) {
    std::vector<double> vals;
    vals.reserve(fit_rows.size());
    for (auto r : fit_rows) vals.push_back(col.numeric[r]);
    std::sort(vals.begin(), vals.end());
    std::vector<double> distinct = vals;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() >= 4) {
      src.quartile = true;
      src.cuts = {percentile_sorted(vals, 0.25), percentile_sorted(vals, 0.5),
                  percentile_sorted(vals, 0.75)};
      for (int q = 1; q <= 4; ++q) src.indicators.push_back(src.name + ":q" + std::to_string(q));
    } else {
      src.quartile = false;
      for (std::size_t i = 1; i < distinct.size(); ++i) {
        src.cuts.push_back(0.5 * (distinct[i - 1] + distinct[i]));
      }
      for (std::size_t i = 0; i < std::max<std::size_t>(distinct.size(), 1); ++i) {
        src.indicators.push_back(src.name + ":bin" + std::to_string(i + 1));
      }
      if (distinct.size() <= 1) {
        warnings.push_back("ConstantColumn: '" + src.name + "' encoded as a single indicator");
      }
    }
  } else {
    std::vector<bool> seen(col.classes.size(), false);
    for (auto r : fit_rows) seen[static_cast<std::size_t>(col.codes[r])] = true;
    for (std::size_t k = 0; k < col.classes.size(); ++k) {
      if (seen[k]) {
        src.classes.push_back(col.classes[k]);
        src.indicators.push_back(src.name + "=" + col.classes[k]);
      }
    }
    if (src.classes.size() <= 1) {
      warnings.push_back("ConstantColumn: '" + src.name + "' encoded as a single indicator");
    }
  }
  return src;
}

}  // namespace detail

struct EncodeResult {
  TabularDataset dataset;
  EncodingMap map;
  std::vector<std::string> warnings;
};

/// Applies a fitted map.  Sources missing from ds raise EncodingMismatch;
/// unseen categorical classes map to an all-zero indicator vector and are
/// reported in the returned warnings.
inline EncodeResult apply_encoding(const EncodingMap& map, const TabularDataset& ds) {
  std::map<std::string, const EncodedSource*> by_name;
  for (const auto& s : map.sources) by_name.emplace(s.name, &s);
  for (const auto& s : map.sources) {
    require(ds.has(s.name), "EncodingMismatch", "source column '" + s.name + "' missing");
  }
  std::vector<Column> out;
  std::vector<std::string> warnings;
  for (const auto& col : ds.columns()) {
    auto it = by_name.find(col.name());
    if (it == by_name.end()) {
      require(col.schema.role != Role::feature, "EncodingMismatch",
              "feature column '" + col.name() + "' is not covered by the encoding map");
      out.push_back(col);
      continue;
    }
    const EncodedSource& src = *it->second;
    require(col.schema.kind == src.kind, "EncodingMismatch", "kind changed for '" + src.name + "'");
    std::vector<std::vector<double>> ind(src.indicators.size(),
                                         std::vector<double>(ds.n_rows(), 0.0));
    if (src.kind == ColumnKind::numeric) {
      for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        ind[std::min(detail::bin_of(src.cuts, col.numeric[r]), ind.size() - 1)][r] = 1.0;
      }
    } else {
      std::vector<int> slot(col.classes.size(), -1);
      for (std::size_t k = 0; k < col.classes.size(); ++k) {
        auto f = std::find(src.classes.begin(), src.classes.end(), col.classes[k]);
        if (f != src.classes.end()) slot[k] = static_cast<int>(f - src.classes.begin());
      }
      std::size_t unseen = 0;
      for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        const int s = slot[static_cast<std::size_t>(col.codes[r])];
        if (s < 0) {
          ++unseen;
        } else {
          ind[static_cast<std::size_t>(s)][r] = 1.0;
        }
      }
      if (unseen) {
        warnings.push_back("UnseenClass: " + std::to_string(unseen) + " rows of '" + src.name +
                           "' have classes absent at fit time");
      }
    }
    for (std::size_t k = 0; k < ind.size(); ++k) {
      out.push_back(Column::make_numeric(src.indicators[k], Role::feature, std::move(ind[k])));
    }
  }
  std::vector<double> w(ds.weights().begin(), ds.weights().end());
  return {TabularDataset(std::move(out), std::move(w)), map, std::move(warnings)};
}

/// Fits the encoding on fit_rows only and applies it to every row.
inline EncodeResult encode(const TabularDataset& ds, std::span<const std::size_t> fit_rows) {
  require(!fit_rows.empty(), "EmptyFitSet", "encode needs at least one fit row");
  EncodingMap map;
  for (const auto& col : ds.columns()) {
    if (col.schema.role != Role::feature) continue;
    map.sources.push_back(detail::fit_source(col, fit_rows, map.warnings));
  }
  auto res = apply_encoding(map, ds);
  res.warnings.insert(res.warnings.begin(), map.warnings.begin(), map.warnings.end());
  return res;
}

inline EncodeResult encode(const TabularDataset& ds) {
  const auto rows = all_rows(ds);
  return encode(ds, rows);
}

inline nlohmann::json to_json(const EncodingMap& map) {
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& s : map.sources) {
    nlohmann::json j = {{"name", s.name}, {"kind", to_string(s.kind)}, {"indicators", s.indicators}};
    if (s.kind == ColumnKind::numeric) {
      j["cuts"] = s.cuts;
      j["binning"] = s.quartile ? "quartile" : "distinct";
    } else {
      j["classes"] = s.classes;
    }
    sources.push_back(std::move(j));
  }
  return {{"sources", sources}, {"warnings", map.warnings}};
}

inline EncodingMap encoding_from_json(const nlohmann::json& j) {
  EncodingMap map;
  for (const auto& s : j.at("sources")) {
    EncodedSource src;
    src.name = s.at("name").get<std::string>();
    src.kind = parse_kind(s.at("kind").get<std::string>());
    src.indicators = s.at("indicators").get<std::vector<std::string>>();
    if (src.kind == ColumnKind::numeric) {
      src.cuts = s.at("cuts").get<std::vector<double>>();
      src.quartile = s.value("binning", "quartile") == "quartile";
    } else {
      src.classes = s.at("classes").get<std::vector<std::string>>();
    }
    map.sources.push_back(std::move(src));
  }
  if (j.contains("warnings")) map.warnings = j["warnings"].get<std::vector<std::string>>();
  return map;
}

// ---------------------------------------------------------------------------

struct RowSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded train/test partition; |test| = round(test_fraction * n).  With a
/// stratification column, per-class test counts use largest-remainder
/// allocation so each class sits within one row of the global fraction.
inline RowSplit split_rows(const TabularDataset& ds, double test_fraction, std::uint64_t seed,
                           std::optional<std::string> stratify_on = std::nullopt) {
  require(test_fraction > 0.0 && test_fraction < 1.0, "BadFraction", "test_fraction must be in (0,1)");
  require(ds.n_rows() >= 2, "DegenerateSplit", "need at least two rows");
  const std::size_t n = ds.n_rows();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  require(n_test > 0 && n_test < n, "DegenerateSplit", "one side of the split would be empty");
  Rng rng(seed);
  std::vector<bool> in_test(n, false);
  if (!stratify_on) {
    auto rows = all_rows(ds);
    shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t i = 0; i < n_test; ++i) in_test[rows[i]] = true;
  } else {
    const auto& col = ds.column(*stratify_on);
    std::map<double, std::vector<std::size_t>> strata;
    for (std::size_t r = 0; r < n; ++r) strata[col.value(r)].push_back(r);
    std::vector<std::size_t> quota;
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0, idx = 0;
    for (auto& [key, rows] : strata) {
      const double exact = test_fraction * static_cast<double>(rows.size());
      const auto base = static_cast<std::size_t>(std::floor(exact));
      quota.push_back(base);
      assigned += base;
      remainders.emplace_back(-(exact - static_cast<double>(base)), idx++);
    }
    std::stable_sort(remainders.begin(), remainders.end());
    for (std::size_t i = 0; assigned < n_test && i < remainders.size(); ++i, ++assigned) {
      ++quota[remainders[i].second];
    }
    idx = 0;
    for (auto& [key, rows] : strata) {
      Rng sub = rng.split(idx);
      shuffle(rows.begin(), rows.end(), sub);
      for (std::size_t i = 0; i < quota[idx]; ++i) in_test[rows[i]] = true;
      ++idx;
    }
  }
  RowSplit out;
  for (std::size_t r = 0; r < n; ++r) (in_test[r] ? out.test : out.train).push_back(r);
  require(!out.train.empty() && !out.test.empty(), "DegenerateSplit", "one side is empty");
  return out;
}

inline std::pair<TabularDataset, TabularDataset> split(
    const TabularDataset& ds, double test_fraction, std::uint64_t seed,
    std::optional<std::string> stratify_on = std::nullopt) {
  auto rs = split_rows(ds, test_fraction, seed, std::move(stratify_on));
  return {ds.select_rows(rs.train), ds.select_rows(rs.test)};
}

/// k seeded folds; validation folds partition the rows and differ in size by
/// at most one (the first n % k folds are one larger).
inline std::vector<RowSplit> kfold(std::size_t n_rows, std::size_t k, std::uint64_t seed) {
  require(k >= 2, "BadK", "k must be at least 2");
  require(n_rows >= k, "BadK", "k exceeds the number of rows");
  std::vector<std::size_t> rows(n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(rows.begin(), rows.end(), rng);
  std::vector<std::size_t> fold_of(n_rows);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n_rows / k + (f < n_rows % k ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) fold_of[rows[pos++]] = f;
  }
  std::vector<RowSplit> folds(k);
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t f = 0; f < k; ++f) (fold_of[r] == f ? folds[f].test : folds[f].train).push_back(r);
  }
  return folds;
}

inline std::vector<RowSplit> kfold(const TabularDataset& ds, std::size_t k, std::uint64_t seed) {
  return kfold(ds.n_rows(), k, seed);
}

/// Adds one sensitive column whose classes are the observed tuples of the
/// named sensitive columns (joined with '|'), named "a*b*...".
inline TabularDataset intersect_sensitive(const TabularDataset& ds,
                                          const std::vector<std::string>& attrs) {
  require(attrs.size() >= 2, "NotSensitive", "need at least two sensitive columns");
  std::vector<const Column*> cols;
  std::string name;
  for (const auto& a : attrs) {
    const auto& c = ds.column(a);
    require(c.schema.role == Role::sensitive && !c.is_numeric(), "NotSensitive",
            "column '" + a + "' is not a categorical sensitive column");
    cols.push_back(&c);
    name += (name.empty() ? "" : "*") + a;
  }
  std::map<std::vector<int>, int> ids;
  std::vector<std::string> classes;
  std::vector<int> codes(ds.n_rows());
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    std::vector<int> key;
    for (const auto* c : cols) key.push_back(c->codes[r]);
    auto [it, inserted] = ids.emplace(key, static_cast<int>(classes.size()));
    if (inserted) {
      std::string label;
      for (std::size_t i = 0; i < cols.size(); ++i) {
        label += (i ? "|" : "") + cols[i]->classes[static_cast<std::size_t>(key[i])];
      }
      classes.push_back(label);
    }
    codes[r] = it->second;
  }
  return ds.with_column(Column::make_categorical(name, Role::sensitive, std::move(codes), classes));
}

struct Slice {
  std::string value;
  TabularDataset dataset;
};

/// Splits by a slice-role column, ordered by slice value (numeric order for
/// numeric columns, lexicographic class order otherwise).  The slice column
/// is dropped from each slice.
inline std::vector<Slice> slice_by(const TabularDataset& ds, const std::string& column) {
  auto idx = ds.find(column);
  require(idx.has_value() && ds.columns()[*idx].schema.role == Role::slice, "NoSliceColumn",
          "'" + column + "' is not a slice column");
  const auto& col = ds.columns()[*idx];
  std::vector<Slice> out;
  if (col.is_numeric()) {
    std::map<double, std::vector<std::size_t>> groups;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) groups[col.numeric[r]].push_back(r);
    for (auto& [v, rows] : groups) {
      out.push_back({format_number(v), ds.select_rows(rows).without_column(column)});
    }
  } else {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) groups[col.text(r)].push_back(r);
    for (auto& [v, rows] : groups) out.push_back({v, ds.select_rows(rows).without_column(column)});
  }
  return out;
}

/// Row-wise concatenation of datasets with identical schemas (class lists are merged).
inline TabularDataset concat(const std::vector<TabularDataset>& parts) {
  require(!parts.empty(), "EmptyInput", "nothing to concatenate");
  std::vector<Column> cols;
  for (const auto& c : parts.front().columns()) {
    Column n;
    n.schema = c.schema;
    n.classes = c.classes;
    cols.push_back(std::move(n));
  }
  std::vector<double> w;
  for (const auto& p : parts) {
    require(p.n_cols() == cols.size(), "SchemaMismatch", "column count differs");
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& src = p.columns()[c];
      require(src.name() == cols[c].name() && src.schema.kind == cols[c].schema.kind,
              "SchemaMismatch", "column '" + src.name() + "' differs");
      if (src.is_numeric()) {
        cols[c].numeric.insert(cols[c].numeric.end(), src.numeric.begin(), src.numeric.end());
      } else {
        std::vector<int> remap(src.classes.size());
        for (std::size_t k = 0; k < src.classes.size(); ++k) {
          auto it = std::find(cols[c].classes.begin(), cols[c].classes.end(), src.classes[k]);
          if (it == cols[c].classes.end()) {
            cols[c].classes.push_back(src.classes[k]);
            it = cols[c].classes.end() - 1;
          }
          remap[k] = static_cast<int>(it - cols[c].classes.begin());
        }
        for (int code : src.codes) cols[c].codes.push_back(remap[static_cast<std::size_t>(code)]);
      }
    }
    w.insert(w.end(), p.weights().begin(), p.weights().end());
  }
  for (auto& c : cols) {
    if (!c.is_numeric()) c.schema.classes = c.classes;
  }
  return TabularDataset(std::move(cols), std::move(w));
}

}  // namespace fairkit
