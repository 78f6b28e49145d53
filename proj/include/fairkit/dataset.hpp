#pragma once

// Column-oriented tabular data model with typed column roles, plus CSV and
// schema (JSON) input/output.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fairkit/error.hpp"

namespace fairkit {

enum class ColumnKind { numeric, categorical };
enum class Role { feature, target, sensitive, stratum, slice, latent };

inline std::string_view to_string(ColumnKind k) {
  return k == ColumnKind::numeric ? "numeric" : "categorical";
}

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::feature: return "feature";
    case Role::target: return "target";
    case Role::sensitive: return "sensitive";
    case Role::stratum: return "stratum";
    case Role::slice: return "slice";
    case Role::latent: return "latent";
  }
  return "feature";
}

inline ColumnKind parse_kind(std::string_view s) {
  if (s == "numeric") return ColumnKind::numeric;
  if (s == "categorical") return ColumnKind::categorical;
  fail("BadSchema", "unknown column kind '" + std::string(s) + "'");
}

inline Role parse_role(std::string_view s) {
  for (Role r : {Role::feature, Role::target, Role::sensitive, Role::stratum, Role::slice,
                 Role::latent}) {
    if (to_string(r) == s) return r;
  }
  fail("BadSchema", "unknown column role '" + std::string(s) + "'");
}

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  Role role = Role::feature;
  // Sensitive columns are never model inputs unless this is set (the
  // "expose A" training view).  Ignored for other roles.
  bool model_input = false;
  // Optional declared class order for categorical columns; observed classes
  // not listed are appended in first-appearance order.
  std::vector<std::string> classes;

  bool operator==(const ColumnSchema&) const = default;
};

/// One column: numeric values or interned categorical codes.
struct Column {
  ColumnSchema schema;
  std::vector<double> numeric;
  std::vector<int> codes;
  std::vector<std::string> classes;

  const std::string& name() const { return schema.name; }
  bool is_numeric() const { return schema.kind == ColumnKind::numeric; }
  std::size_t size() const { return is_numeric() ? numeric.size() : codes.size(); }

  /// Numeric value, or the class id for categorical columns.
  double value(std::size_t row) const {
    return is_numeric() ? numeric[row] : static_cast<double>(codes[row]);
  }

  std::string text(std::size_t row) const;

  bool operator==(const Column&) const = default;

  static Column make_numeric(std::string name, Role role, std::vector<double> values) {
    Column c;
    c.schema = {std::move(name), ColumnKind::numeric, role, false, {}};
    c.numeric = std::move(values);
    return c;
  }

  static Column make_categorical(std::string name, Role role, std::vector<int> codes,
                                 std::vector<std::string> classes) {
    Column c;
    c.schema = {std::move(name), ColumnKind::categorical, role, false, classes};
    c.codes = std::move(codes);
    c.classes = std::move(classes);
    return c;
  }
};

inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string Column::text(std::size_t row) const {
  return is_numeric() ? format_number(numeric[row]) : classes[static_cast<std::size_t>(codes[row])];
}

/// Immutable column-oriented table.  All transforms return new datasets.
class TabularDataset {
 public:
  TabularDataset() = default;

  explicit TabularDataset(std::vector<Column> columns, std::vector<double> weights = {})
      : columns_(std::move(columns)), weights_(std::move(weights)) {
    n_rows_ = columns_.empty() ? weights_.size() : columns_.front().size();
    if (weights_.empty()) weights_.assign(n_rows_, 1.0);
    validate();
  }

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return columns_.size(); }
  const std::vector<Column>& columns() const { return columns_; }
  std::span<const double> weights() const { return weights_; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (columns_[i].name() == name) return i;
    }
    return std::nullopt;
  }

  bool has(std::string_view name) const { return find(name).has_value(); }

  const Column& column(std::string_view name) const {
    auto i = find(name);
    if (!i) fail("NoSuchColumn", "column '" + std::string(name) + "' not in dataset");
    return columns_[*i];
  }

  std::vector<std::string> names_with_role(Role role) const {
    std::vector<std::string> out;
    for (const auto& c : columns_) {
      if (c.schema.role == role) out.push_back(c.name());
    }
    return out;
  }

  /// Columns a model may read: feature-role columns plus exposed sensitive ones.
  std::vector<std::string> model_inputs() const {
    std::vector<std::string> out;
    for (const auto& c : columns_) {
      if (c.schema.role == Role::feature ||
          (c.schema.role == Role::sensitive && c.schema.model_input)) {
        out.push_back(c.name());
      }
    }
    return out;
  }

  const Column& target() const {
    for (const auto& c : columns_) {
      if (c.schema.role == Role::target) return c;
    }
    fail("NoTarget", "dataset has no target column");
  }

  std::vector<int> labels() const {
    const auto& t = target();
    std::vector<int> y(n_rows_);
    for (std::size_t i = 0; i < n_rows_; ++i) y[i] = t.numeric[i] > 0.5 ? 1 : 0;
    return y;
  }

  /// Class ids of a categorical column (sensitive/stratum/slice).
  std::span<const int> codes(std::string_view name) const {
    const auto& c = column(name);
    if (c.is_numeric()) fail("NotCategorical", "column '" + std::string(name) + "' is numeric");
    return c.codes;
  }

  TabularDataset select_rows(std::span<const std::size_t> rows) const {
    std::vector<Column> cols;
    cols.reserve(columns_.size());
    for (const auto& c : columns_) {
      Column n;
      n.schema = c.schema;
      n.classes = c.classes;
      if (c.is_numeric()) {
        n.numeric.reserve(rows.size());
        for (auto r : rows) n.numeric.push_back(c.numeric[r]);
      } else {
        n.codes.reserve(rows.size());
        for (auto r : rows) n.codes.push_back(c.codes[r]);
      }
      cols.push_back(std::move(n));
    }
    std::vector<double> w;
    w.reserve(rows.size());
    for (auto r : rows) w.push_back(weights_[r]);
    return TabularDataset(std::move(cols), std::move(w));
  }

  TabularDataset with_column(Column col) const {
    auto cols = columns_;
    if (auto i = find(col.name())) {
      cols[*i] = std::move(col);
    } else {
      cols.push_back(std::move(col));
    }
    return TabularDataset(std::move(cols), weights_);
  }

  TabularDataset without_column(std::string_view name) const {
    auto cols = columns_;
    std::erase_if(cols, [&](const Column& c) { return c.name() == name; });
    return TabularDataset(std::move(cols), weights_);
  }

  TabularDataset with_role(std::string_view name, Role role, bool model_input = false) const {
    auto cols = columns_;
    auto i = find(name);
    if (!i) fail("NoSuchColumn", "column '" + std::string(name) + "' not in dataset");
    // Demote any previous target so exactly one remains.
    if (role == Role::target) {
      for (auto& c : cols) {
        if (c.schema.role == Role::target) c.schema.role = Role::latent;
      }
    }
    cols[*i].schema.role = role;
    cols[*i].schema.model_input = model_input;
    return TabularDataset(std::move(cols), weights_);
  }

  TabularDataset with_weights(std::vector<double> w) const {
    return TabularDataset(columns_, std::move(w));
  }

  std::vector<ColumnSchema> schema() const {
    std::vector<ColumnSchema> out;
    for (const auto& c : columns_) {
      auto s = c.schema;
      if (!c.is_numeric()) s.classes = c.classes;
      out.push_back(std::move(s));
    }
    return out;
  }

  bool operator==(const TabularDataset&) const = default;

 private:
  void validate() const {
    std::vector<std::string> names;
    int targets = 0;
    for (const auto& c : columns_) {
      require(c.size() == n_rows_, "LengthMismatch",
              "column '" + c.name() + "' has " + std::to_string(c.size()) + " rows, expected " +
                  std::to_string(n_rows_));
      names.push_back(c.name());
      if (c.schema.role == Role::target) {
        ++targets;
        require(c.is_numeric(), "BadSchema", "target column must be numeric 0/1");
        for (double v : c.numeric) {
          require(v == 0.0 || v == 1.0, "UnparsableValue", "target values must be 0 or 1");
        }
      }
      if (!c.is_numeric()) {
        for (int code : c.codes) {
          require(code >= 0 && static_cast<std::size_t>(code) < c.classes.size(), "BadSchema",
                  "class id out of range in '" + c.name() + "'");
        }
      }
    }
    require(targets <= 1, "BadSchema", "more than one target column");
    std::sort(names.begin(), names.end());
    require(std::adjacent_find(names.begin(), names.end()) == names.end(), "BadSchema",
            "duplicate column names");
    require(weights_.size() == n_rows_, "LengthMismatch", "weights length differs from rows");
    bool positive = n_rows_ == 0;
    for (double w : weights_) {
      require(w >= 0.0 && std::isfinite(w), "BadWeights", "weights must be finite and >= 0");
      positive = positive || w > 0.0;
    }
    require(positive, "BadWeights", "at least one weight must be positive");
  }

  std::vector<Column> columns_;
  std::vector<double> weights_;
  std::size_t n_rows_ = 0;
};

// ---------------------------------------------------------------------------
// Schema JSON:  {"columns":[{"name":..,"kind":..,"role":..}]}

inline nlohmann::json schema_to_json(const std::vector<ColumnSchema>& schema) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& s : schema) {
    nlohmann::json c = {{"name", s.name}, {"kind", to_string(s.kind)}, {"role", to_string(s.role)}};
    if (s.model_input) c["model_input"] = true;
    if (!s.classes.empty()) c["classes"] = s.classes;
    cols.push_back(std::move(c));
  }
  return {{"columns", cols}};
}

inline std::vector<ColumnSchema> schema_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("columns") && j["columns"].is_array(), "BadSchema",
          "schema must be an object with a 'columns' array");
  std::vector<ColumnSchema> out;
  for (const auto& c : j["columns"]) {
    ColumnSchema s;
    s.name = c.at("name").get<std::string>();
    s.kind = parse_kind(c.at("kind").get<std::string>());
    s.role = parse_role(c.at("role").get<std::string>());
    s.model_input = c.value("model_input", false);
    if (c.contains("classes")) s.classes = c["classes"].get<std::vector<std::string>>();
    out.push_back(std::move(s));
  }
  return out;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "FileNotFound", path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail("BadJson", path.string() + ": " + e.what());
  }
}

inline std::vector<ColumnSchema> load_schema(const std::filesystem::path& path) {
  return schema_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180)

namespace csv {

/// Splits CSV text into records of fields.  Quoted fields may contain
/// separators, doubled quotes and line breaks.
inline std::vector<std::vector<std::string>> parse(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  if (text.starts_with("\xEF\xBB\xBF")) i = 3;
  for (; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (!field_started && field.empty()) {
          quoted = true;
          field_started = true;
        } else {
          field.push_back(ch);
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(ch);
        field_started = true;
    }
  }
  if (!field.empty() || !record.empty() || field_started) end_record();
  return records;
}

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace csv

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

/// Builds a dataset from parsed CSV records (first record = header).
inline TabularDataset from_records(const std::vector<std::vector<std::string>>& records,
                                   const std::vector<ColumnSchema>& schema) {
  require(!records.empty(), "EmptyFile", "no header row");
  const auto& header = records.front();
  std::vector<std::size_t> source(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), schema[c].name);
    require(it != header.end(), "MissingColumn", "column '" + schema[c].name + "' not in header");
    source[c] = static_cast<std::size_t>(it - header.begin());
  }
  const std::size_t n = records.size() - 1;
  std::vector<Column> cols;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    Column col;
    col.schema = schema[c];
    std::unordered_map<std::string, int> ids;
    for (const auto& cls : schema[c].classes) {
      ids.emplace(cls, static_cast<int>(col.classes.size()));
      col.classes.push_back(cls);
    }
    for (std::size_t r = 0; r < n; ++r) {
      const auto& rec = records[r + 1];
      const std::string where = "row " + std::to_string(r + 1) + ", column '" + schema[c].name + "'";
      require(source[c] < rec.size(), "MissingValue", where);
      const std::string& cell = rec[source[c]];
      require(!cell.empty(), "MissingValue", where);
      if (schema[c].kind == ColumnKind::numeric) {
        auto v = parse_double(cell);
        require(v.has_value(), "UnparsableValue", where + ": '" + cell + "'");
        if (schema[c].role == Role::target) {
          require(*v == 0.0 || *v == 1.0, "UnparsableValue", where + ": target must be 0 or 1");
        }
        col.numeric.push_back(*v);
      } else {
        auto [it, inserted] = ids.emplace(cell, static_cast<int>(col.classes.size()));
        if (inserted) col.classes.push_back(cell);
        col.codes.push_back(it->second);
      }
    }
    cols.push_back(std::move(col));
  }
  auto count_targets = std::count_if(schema.begin(), schema.end(),
                                     [](const ColumnSchema& s) { return s.role == Role::target; });
  require(count_targets <= 1, "BadSchema", "more than one target column");
  std::vector<double> weights;
  auto wcol = std::find(header.begin(), header.end(), "__weight");
  if (wcol != header.end()) {
    const auto wi = static_cast<std::size_t>(wcol - header.begin());
    for (std::size_t r = 0; r < n; ++r) {
      const auto& rec = records[r + 1];
      auto v = wi < rec.size() ? parse_double(rec[wi]) : std::nullopt;
      require(v.has_value(), "UnparsableValue", "row " + std::to_string(r + 1) + ", column '__weight'");
      weights.push_back(*v);
    }
  }
  return TabularDataset(std::move(cols), std::move(weights));
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "FileNotFound", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline TabularDataset load_csv(const std::filesystem::path& path,
                               const std::vector<ColumnSchema>& schema) {
  const std::string text = read_text_file(path);
  auto records = csv::parse(text);
  require(!records.empty(), "EmptyFile", path.string());
  return from_records(records, schema);
}

/// Serializes the dataset; a "__weight" column is appended when any row
/// weight differs from 1.
inline std::string to_csv(const TabularDataset& ds) {
  const bool weighted = std::any_of(ds.weights().begin(), ds.weights().end(),
                                    [](double w) { return w != 1.0; });
  std::string out;
  for (std::size_t c = 0; c < ds.n_cols(); ++c) {
    if (c) out.push_back(',');
    out += csv::quote(ds.columns()[c].name());
  }
  if (weighted) out += ",__weight";
  out.push_back('\n');
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    for (std::size_t c = 0; c < ds.n_cols(); ++c) {
      if (c) out.push_back(',');
      out += csv::quote(ds.columns()[c].text(r));
    }
    if (weighted) out += "," + format_number(ds.weights()[r]);
    out.push_back('\n');
  }
  return out;
}

/// Writes via a temporary file and rename so readers never see partial output.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), "WriteFailed", tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    require(static_cast<bool>(out), "WriteFailed", tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void save_csv(const std::filesystem::path& path, const TabularDataset& ds) {
  write_file_atomic(path, to_csv(ds));
}

/// Dense row-major matrix of the named columns (categorical -> class id).
struct FeatureMatrix {
  std::vector<std::string> names;
  std::vector<double> data;
  std::size_t rows = 0;

  std::size_t cols() const { return names.size(); }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols(), cols()};
  }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
};

inline FeatureMatrix feature_matrix(const TabularDataset& ds, const std::vector<std::string>& names) {
  FeatureMatrix m;
  m.names = names;
  m.rows = ds.n_rows();
  m.data.resize(m.rows * names.size());
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto& col = ds.column(names[c]);
    for (std::size_t r = 0; r < m.rows; ++r) m.data[r * names.size() + c] = col.value(r);
  }
  return m;
}

inline std::vector<std::size_t> all_rows(const TabularDataset& ds) {
  std::vector<std::size_t> rows(ds.n_rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace fairkit
