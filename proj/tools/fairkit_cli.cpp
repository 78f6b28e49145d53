// fairkit command-line front-end.
//
// Exit status: 0 on success, 1 on a domain error (error kind on stderr),
// 2 on a usage error.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fairkit/biasgen.hpp"
#include "fairkit/compare.hpp"
#include "fairkit/contrast.hpp"
#include "fairkit/dataset.hpp"
#include "fairkit/error.hpp"
#include "fairkit/experiments.hpp"
#include "fairkit/fftree.hpp"
#include "fairkit/metrics.hpp"
#include "fairkit/mitigate.hpp"
#include "fairkit/monitor.hpp"
#include "fairkit/preprocess.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace fairkit;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_digest(const std::string& path) { return hex64(fnv1a(read_text_file(path))); }

/// Hash of the command's effective configuration; input files enter by content.
std::string config_hash(const ordered_json& cfg) { return hex64(fnv1a(cfg.dump())); }

void require_seed(const std::optional<std::uint64_t>& seed, const std::string& what) {
  if (!seed) throw UsageError(what + " is randomized and requires --seed");
}

std::string default_schema_path(const std::string& data) { return data + ".schema.json"; }

TabularDataset load_data(const std::string& data, const std::string& schema) {
  return load_csv(data, load_schema(schema.empty() ? default_schema_path(data) : schema));
}

/// Writes the dataset and its schema sidecar (with provenance).
void save_dataset(const std::string& out, const TabularDataset& ds, const ordered_json& provenance) {
  save_csv(out, ds);
  auto schema = schema_to_json(ds.schema());
  schema["provenance"] = provenance;
  write_file_atomic(default_schema_path(out), schema.dump(2) + "\n");
}

std::string first_sensitive(const TabularDataset& ds) {
  const auto s = ds.names_with_role(Role::sensitive);
  require(!s.empty(), "NoSensitiveColumn", "dataset schema declares no sensitive column");
  return s.front();
}

std::string resolve_sensitive(const TabularDataset& ds, const std::string& given) {
  if (given.empty()) return first_sensitive(ds);
  require(ds.has(given) && ds.column(given).schema.role == Role::sensitive, "NoSensitiveColumn",
          "'" + given + "' is not a sensitive column");
  return given;
}

bool has_categorical_feature(const TabularDataset& ds) {
  for (const auto& c : ds.columns()) {
    if (c.schema.role == Role::feature && !c.is_numeric()) return true;
  }
  return false;
}

// A model file plus whatever is needed to feed it raw data.
struct LoadedModel {
  std::string kind;
  Predictor predictor;
  std::optional<EncodingMap> encoding;
  std::optional<FFTreeModel> tree;

  TabularDataset prepare(const TabularDataset& raw) const {
    return encoding ? apply_encoding(*encoding, raw).dataset : raw;
  }
};

LoadedModel load_model(const std::string& path, const std::string& id) {
  const auto j = read_json_file(path);
  require(j.contains("meta") && j["meta"].contains("model"), "BadModel", path + ": missing meta.model");
  LoadedModel m;
  m.kind = j["meta"]["model"].get<std::string>();
  const std::string name = id.empty() ? fs::path(path).stem().string() : id;
  if (m.kind == "fftree") {
    m.tree = fftree_from_json(j);
    m.predictor = as_predictor(*m.tree, name);
  } else if (m.kind == "linear") {
    m.predictor = as_predictor(linear_from_json(j), name);
  } else {
    fail("BadModel", "unknown model kind '" + m.kind + "'");
  }
  if (j["meta"].contains("encoding")) m.encoding = encoding_from_json(j["meta"]["encoding"]);
  return m;
}

Predictor attach_policy(const Predictor& base, const std::string& policy_path, const TabularDataset& ds,
                        std::uint64_t seed) {
  if (policy_path.empty()) return base;
  const auto pol = policy_from_json(read_json_file(policy_path));
  const auto& s = ds.column(pol.sensitive);
  std::vector<std::string> strata;
  if (pol.kind == PolicyKind::CDP) strata = ds.column(pol.stratum).classes;
  auto p = with_policy(base, pol, s.classes, strata, seed);
  p.id = base.id;
  return p;
}

void emit(const std::string& format, const std::string& out, const ordered_json& j, const std::string& table) {
  if (!out.empty()) write_file_atomic(out, j.dump(2) + "\n");
  if (format == "json") {
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << table;
  }
}

// ---------------------------------------------------------------------------
// Sub-command options.

struct Common {
  std::string data, schema, out, format = "table", sensitive;
  std::optional<std::uint64_t> seed;
};

struct GenerateOpts {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  bool proxy_label = false, proxy_r = false, expose = false;
};

struct EncodeOpts {
  std::string data, schema, out, map_in, map_out;
};

struct TrainOpts {
  std::string data, schema, out, model = "fftree";
  std::vector<std::string> constraints;
  std::size_t max_depth = 8, min_leaf = 50, min_split = 100, max_leaves = 0;
  std::size_t iterations = 300;
  double l2 = 0.0;
  bool encode = false;
};

struct EvaluateOpts : Common {
  std::string model, policy, stratum, id, family = "none";
  double tau = 0.5;
};

struct MitigateOpts : Common {
  std::string method, model, stratum, table_out, ranker;
  double corr_threshold = 0.15, epsilon = 0.005;
  std::optional<double> target_rate;
};

struct CompareOpts {
  std::vector<std::string> reports;
  std::string phi_key = "dp_diff", pi_key = "accuracy", out, format = "table";
  double Phi = 0.05, beta = 1.0;
};

struct FairViewOpts : Common {
  double threshold = 0.05;
  std::size_t min_size = 10, max_leaves = 8, max_depth = 4, min_leaf = 50, min_rows = 50;
  bool all_leaves = false;
};

struct MonitorOpts : Common {
  std::vector<std::string> datas;
  std::string model, policy, model2, policy2, slice_column, model_out, deprived;
  std::vector<std::string> shocks;
  double tau = 0.5;
  std::optional<std::size_t> row;
  std::size_t background = 128, sample = 200;
};

struct ReproOpts {
  std::string experiment = "all", adult_dir = "data/adult", out, format = "table";
  std::optional<std::uint64_t> seed;
};

// ---------------------------------------------------------------------------

int run_generate(const GenerateOpts& o) {
  require_seed(o.seed, "generate");
  auto cfg = read_json_file(o.config);
  auto spec = bias_spec_from_json(cfg);
  spec.seed = *o.seed;
  const auto sample = generate(spec);
  std::vector<std::string> warnings;
  auto ds = project_view(sample, o.proxy_r, spec.omit_R, o.proxy_label ? LabelView::proxy_Y : LabelView::true_Y,
                         o.expose, &warnings);
  ordered_json prov = {{"command", "generate"},
                       {"spec", to_json(spec)},
                       {"proxy_label", o.proxy_label},
                       {"proxy_R", o.proxy_r},
                       {"expose_sensitive", o.expose},
                       {"threshold_used", sample.threshold_used}};
  prov["config_hash"] = config_hash(prov);
  prov["warnings"] = warnings;
  save_dataset(o.out, ds, prov);
  std::cout << "wrote " << ds.n_rows() << " rows to " << o.out << "\n";
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

int run_encode(const EncodeOpts& o) {
  const auto raw = load_data(o.data, o.schema);
  EncodeResult res = o.map_in.empty() ? encode(raw) : apply_encoding(encoding_from_json(read_json_file(o.map_in)), raw);
  ordered_json prov = {{"command", "encode"}, {"input", file_digest(o.data)},
                       {"map", o.map_in.empty() ? ordered_json(nullptr) : ordered_json(file_digest(o.map_in))}};
  prov["config_hash"] = config_hash(prov);
  save_dataset(o.out, res.dataset, prov);
  if (!o.map_out.empty()) write_file_atomic(o.map_out, to_json(res.map).dump(2) + "\n");
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << res.dataset.n_cols() << " columns to " << o.out << "\n";
  return 0;
}

int run_train(const TrainOpts& o) {
  auto ds = load_data(o.data, o.schema);
  std::vector<FairnessConstraint> constraints;
  for (const auto& c : o.constraints) {
    auto fc = parse_constraint(c);
    require(ds.has(fc.sensitive) && ds.column(fc.sensitive).schema.role == Role::sensitive, "NoSensitiveColumn",
            "constraint column '" + fc.sensitive + "' is not a sensitive column of the schema");
    constraints.push_back(fc);
  }
  std::optional<EncodingMap> enc;
  if (o.encode || has_categorical_feature(ds)) {
    auto res = encode(ds);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    enc = res.map;
    ds = res.dataset;
  }
  json model;
  if (o.model == "fftree") {
    GrowthConfig g;
    g.max_depth = o.max_depth;
    g.min_samples_leaf = o.min_leaf;
    g.min_samples_split = o.min_split;
    g.max_leaves = o.max_leaves;
    auto m = fit(ds, constraints, g);
    if (enc) m.encoding = to_json(*enc);
    model = to_json(m);
    std::cout << "fftree: " << m.n_leaves() << " leaves, " << m.nodes.size() << " nodes\n";
  } else {
    require(constraints.empty(), "UnsupportedConstraint", "the linear model takes no fairness constraints");
    LinearConfig cfg;
    cfg.iterations = o.iterations;
    cfg.l2 = o.l2;
    const auto m = fit_linear_score(ds, cfg);
    model = to_json(m);
    if (enc) model["meta"]["encoding"] = to_json(*enc);
    std::cout << "linear: " << m.features.size() << " inputs, final loss "
              << format_number(m.loss_history.empty() ? 0.0 : m.loss_history.back()) << "\n";
  }
  ordered_json cfg = {{"command", "train"}, {"input", file_digest(o.data)}, {"model", o.model},
                      {"constraints", o.constraints}, {"max_depth", o.max_depth}, {"min_leaf", o.min_leaf},
                      {"min_split", o.min_split}, {"max_leaves", o.max_leaves}, {"iterations", o.iterations},
                      {"l2", o.l2}};
  model["meta"]["config_hash"] = config_hash(cfg);
  write_file_atomic(o.out, model.dump(2) + "\n");
  return 0;
}

int run_evaluate(const EvaluateOpts& o) {
  require_seed(o.seed, "evaluate");
  const auto model = load_model(o.model, o.id);
  const auto ds = model.prepare(load_data(o.data, o.schema));
  const auto s = resolve_sensitive(ds, o.sensitive);
  const auto pred = attach_policy(model.predictor, o.policy, ds, *o.seed);
  const auto yhat = predict_labels(pred, ds, o.tau);
  const auto scores = predict_scores(pred, ds);
  EvaluateOptions eo;
  eo.sensitive = s;
  if (!o.stratum.empty()) eo.stratum = o.stratum;
  eo.model_id = pred.id;
  eo.dataset_id = fs::path(o.data).stem().string();
  eo.seed = *o.seed;
  auto rep = evaluate_predictions(ds, yhat, scores, eo);
  rep.set("flip_sensitivity", flip_sensitivity(pred, ds, s, o.tau));
  rep.meta["family"] = o.family;
  rep.meta["tau"] = o.tau;
  ordered_json cfg = {{"command", "evaluate"}, {"model", file_digest(o.model)}, {"data", file_digest(o.data)},
                      {"policy", o.policy.empty() ? ordered_json(nullptr) : ordered_json(file_digest(o.policy))},
                      {"sensitive", s}, {"stratum", o.stratum}, {"tau", o.tau}, {"seed", *o.seed}};
  rep.meta["config_hash"] = config_hash(cfg);
  emit(o.format, o.out, to_json(rep), to_table(rep));
  return 0;
}

int run_mitigate(const MitigateOpts& o) {
  const auto raw = load_data(o.data, o.schema);
  const auto s = resolve_sensitive(raw, o.sensitive);
  ordered_json cfg = {{"command", "mitigate"}, {"method", o.method}, {"data", file_digest(o.data)},
                      {"sensitive", s}};
  if (o.seed) cfg["seed"] = *o.seed;
  auto provenance = [&] {
    ordered_json p = cfg;
    p["config_hash"] = config_hash(cfg);
    return p;
  };
  if (o.method == "ftu") {
    save_dataset(o.out, ftu(raw, s), provenance());
    std::cout << "'" << s << "' is no longer a model input\n";
    return 0;
  }
  if (o.method == "suppression") {
    cfg["corr_threshold"] = o.corr_threshold;
    const auto res = suppress(raw, s, o.corr_threshold);
    save_dataset(o.out, res.dataset, provenance());
    std::cout << "dropped:";
    for (const auto& d : res.dropped) std::cout << " " << d;
    std::cout << "\n";
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    return 0;
  }
  if (o.method == "massaging") {
    std::vector<double> scores;
    if (!o.ranker.empty()) {
      const auto rk = load_model(o.ranker, "");
      scores = predict_scores(rk.predictor, rk.prepare(raw));
      cfg["ranker"] = file_digest(o.ranker);
    } else {
      auto view = ftu(raw, s);
      if (has_categorical_feature(view)) view = encode(view).dataset;
      scores = predict_scores(as_predictor(fit_linear_score(view)), view);
      cfg["ranker"] = "linear";
    }
    const auto res = massage(raw, s, scores);
    save_dataset(o.out, res.dataset, provenance());
    std::cout << "flipped " << res.m << " labels each way (deprived '" << res.deprived << "', favored '"
              << res.favored << "')\n";
    return 0;
  }
  if (o.method == "reweighing") {
    const auto res = reweigh(raw, s);
    save_dataset(o.out, res.dataset, provenance());
    if (!o.table_out.empty()) write_file_atomic(o.table_out, to_json(res.table).dump(2) + "\n");
    std::cout << to_json(res.table).dump(2) << "\n";
    return 0;
  }
  if (o.method == "sampling") {
    require_seed(o.seed, "mitigate --method sampling");
    const auto ds = resample(raw, s, *o.seed);
    save_dataset(o.out, ds, provenance());
    std::cout << "resampled " << ds.n_rows() << " rows\n";
    return 0;
  }
  if (o.method.rfind("thresh-", 0) == 0) {
    std::string suffix = o.method.substr(7);
    for (auto& ch : suffix) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    const auto kind = parse_policy_kind(suffix);
    if (kind == PolicyKind::EODDS) require_seed(o.seed, "mitigate --method thresh-eodds");
    if (o.model.empty()) throw UsageError("threshold methods need --model (the scorer to post-process)");
    if (kind == PolicyKind::CDP && o.stratum.empty()) throw UsageError("thresh-cdp needs --stratum");
    const auto model = load_model(o.model, "");
    const auto ds = model.prepare(raw);
    const auto scores = predict_scores(model.predictor, ds);
    const auto y = ds.labels();
    const auto& scol = ds.column(s);
    PolicyOptions po;
    po.epsilon = o.epsilon;
    po.target_rate = o.target_rate;
    std::span<const int> st;
    std::vector<std::string> st_names;
    if (kind == PolicyKind::CDP) {
      st = ds.codes(o.stratum);
      st_names = ds.column(o.stratum).classes;
    }
    auto pol = fit_threshold_policy(kind, scores, y, scol.codes, scol.classes, st, st_names, po);
    pol.sensitive = s;
    if (kind == PolicyKind::CDP) pol.stratum = o.stratum;
    cfg["model"] = file_digest(o.model);
    cfg["epsilon"] = o.epsilon;
    auto j = to_json(pol);
    j["config_hash"] = config_hash(cfg);
    write_file_atomic(o.out, j.dump(2) + "\n");
    std::cout << "policy " << to_string(kind) << ": achieved gap " << format_number(pol.achieved_gap) << "\n";
    for (const auto& f : pol.flags) std::cerr << "warning: " << f << "\n";
    return 0;
  }
  throw UsageError("unknown method '" + o.method + "'");
}

int run_compare(const CompareOpts& o) {
  std::vector<EvaluatedModel> models;
  ordered_json cfg = {{"command", "compare"}, {"phi_key", o.phi_key}, {"pi_key", o.pi_key}, {"Phi", o.Phi},
                      {"beta", o.beta}};
  for (const auto& path : o.reports) {
    const auto rep = metrics_report_from_json(read_json_file(path));
    EvaluatedModel m;
    m.id = rep.meta.contains("model_id") ? rep.meta["model_id"].get<std::string>() : fs::path(path).stem().string();
    m.family = rep.meta.value("family", std::string("none"));
    m.metrics = rep;
    models.push_back(std::move(m));
    cfg["reports"].push_back(file_digest(path));
  }
  require(!models.empty(), "NoModels", "no reports given");
  const auto rep = compare_models(models, o.phi_key, o.pi_key, o.Phi, o.beta);
  auto j = to_json(rep);
  j["config_hash"] = config_hash(cfg);
  emit(o.format, o.out, j, to_table(rep));
  return 0;
}

int run_fairview(const FairViewOpts& o) {
  auto ds = load_data(o.data, o.schema);
  const auto s = resolve_sensitive(ds, o.sensitive);
  if (has_categorical_feature(ds)) ds = encode(ds).dataset;
  TraceConfig tc;
  tc.growth.max_leaves = o.max_leaves;
  tc.growth.max_depth = o.max_depth;
  tc.growth.min_samples_leaf = o.min_leaf;
  tc.growth.min_samples_split = 2 * o.min_leaf;
  tc.min_rows = o.min_rows;
  tc.all_leaves = o.all_leaves;
  const auto tr = trace(ds, s, tc);
  const auto contrasts = g_contrast(tr.rules, ds, s);
  const auto rep = evaluate_worldview(contrasts, o.threshold, o.min_size);
  auto j = to_json(rep, tr.quality);
  ordered_json cfg = {{"command", "fairview"}, {"data", file_digest(o.data)}, {"sensitive", s},
                      {"threshold", o.threshold}, {"min_size", o.min_size}, {"max_leaves", o.max_leaves},
                      {"max_depth", o.max_depth}, {"min_leaf", o.min_leaf}, {"all_leaves", o.all_leaves}};
  j["warnings"] = tr.warnings;
  j["config_hash"] = config_hash(cfg);
  emit(o.format, o.out, j, to_text(rep, tr.quality));
  return 0;
}

int run_monitor(const std::string& sub, const MonitorOpts& o) {
  if (o.model.empty()) throw UsageError("monitor " + sub + " needs --model");
  if (o.datas.empty()) throw UsageError("monitor " + sub + " needs --data");
  const auto model = load_model(o.model, "");
  const auto raw = load_data(o.datas.front(), o.schema);
  const auto ds = model.prepare(raw);
  const auto s = resolve_sensitive(ds, o.sensitive);
  ordered_json cfg = {{"command", "monitor " + sub}, {"model", file_digest(o.model)}, {"sensitive", s},
                      {"tau", o.tau}};
  for (const auto& d : o.datas) cfg["data"].push_back(file_digest(d));
  if (!o.policy.empty()) cfg["policy"] = file_digest(o.policy);

  if (sub == "slices") {
    std::vector<NamedDataset> slices;
    if (!o.slice_column.empty()) {
      for (auto& sl : slice_by(ds, o.slice_column)) slices.push_back({sl.value, sl.dataset});
    } else {
      for (const auto& d : o.datas) slices.push_back({fs::path(d).stem().string(), model.prepare(load_data(d, o.schema))});
    }
    const auto pred = attach_policy(model.predictor, o.policy, ds, o.seed.value_or(0));
    const auto rep = evaluate_over_slices(pred, slices, s, o.tau);
    auto j = to_json(rep);
    j["config_hash"] = config_hash(cfg);
    emit(o.format, o.out, j, to_table(rep));
    return 0;
  }
  if (sub == "shock") {
    if (o.shocks.empty()) throw UsageError("monitor shock needs at least one --shock");
    const auto pred = attach_policy(model.predictor, o.policy, ds, o.seed.value_or(0));
    DriftReport rep;
    rep.rows.push_back(evaluate_context(pred, ds, "baseline", s, o.tau));
    for (const auto& text : o.shocks) {
      const auto spec = parse_shock(text);
      rep.rows.push_back(evaluate_context(pred, apply_shock(ds, spec, s), text, s, o.tau));
    }
    cfg["shocks"] = o.shocks;
    auto j = to_json(rep);
    j["config_hash"] = config_hash(cfg);
    emit(o.format, o.out, j, to_table(rep));
    return 0;
  }
  if (sub == "shapley") {
    require_seed(o.seed, "monitor shapley");
    cfg["seed"] = *o.seed;
    cfg["background"] = o.background;
    auto margin = [&](const LoadedModel& m, const std::string& policy) {
      if (policy.empty()) return m.predictor;
      auto pol = policy_from_json(read_json_file(policy));
      auto p = policy_margin(m.predictor, pol, ds.column(pol.sensitive).classes);
      p.id = m.predictor.id;
      return p;
    };
    const auto m1 = margin(model, o.policy);
    const auto bg = background_matrix(m1, ds, o.background, *o.seed);
    if (!o.model2.empty()) {
      const auto second = load_model(o.model2, "");
      const auto m2 = margin(second, o.policy2);
      DeltaShapleyOptions dso;
      dso.sample_n = o.sample;
      dso.seed = *o.seed;
      if (!o.deprived.empty()) dso.deprived = o.deprived;
      const auto rep = group_delta_shapley(m1, m2, ds, s, bg, dso);
      cfg["model2"] = file_digest(o.model2);
      cfg["sample"] = o.sample;
      auto j = to_json(rep);
      j["config_hash"] = config_hash(cfg);
      emit(o.format, o.out, j, to_table(rep));
      return 0;
    }
    if (!o.row) throw UsageError("monitor shapley needs --row or --model2");
    require(*o.row < ds.n_rows(), "RowOutOfRange", "row " + std::to_string(*o.row));
    const auto x = input_matrix(m1, ds);
    const auto a = shapley_exact(m1, x.row(*o.row), bg);
    cfg["row"] = *o.row;
    auto j = to_json(a);
    j["config_hash"] = config_hash(cfg);
    std::ostringstream t;
    for (std::size_t k = 0; k < a.features.size(); ++k) t << a.features[k] << "  " << format_number(a.phi[k]) << "\n";
    t << "baseline " << format_number(a.baseline) << ", score " << format_number(a.score) << "\n";
    emit(o.format, o.out, j, t.str());
    return 0;
  }
  if (sub == "retrain") {
    if (o.out.empty()) throw UsageError("monitor retrain needs --out");
    const auto y = surrogate_targets(model.predictor, ds, s, o.tau);
    const auto relabelled = with_labels(raw, y);
    auto prov = cfg;
    prov["config_hash"] = config_hash(cfg);
    save_dataset(o.out, relabelled, prov);
    if (!o.model_out.empty()) {
      auto view = ftu(relabelled, s);
      std::optional<EncodingMap> enc;
      if (has_categorical_feature(view)) {
        auto res = encode(view);
        enc = res.map;
        view = res.dataset;
      }
      auto j = to_json(fit_linear_score(view));
      if (enc) j["meta"]["encoding"] = to_json(*enc);
      j["meta"]["config_hash"] = prov["config_hash"];
      write_file_atomic(o.model_out, j.dump(2) + "\n");
    }
    std::size_t pos = 0;
    for (int v : y) pos += static_cast<std::size_t>(v);
    std::cout << "surrogate targets: " << pos << " of " << y.size() << " positive\n";
    return 0;
  }
  throw UsageError("unknown monitor mode '" + sub + "'");
}

int run_repro(const ReproOpts& o) {
  require_seed(o.seed, "repro");
  const bool all = o.experiment == "all";
  ordered_json out;
  std::ostringstream table;
  auto want = [&](const char* name) { return all || o.experiment == name; };
  if (!all && !(want("adult") || want("interaction") || want("fairview") || want("temporal"))) {
    throw UsageError("unknown experiment '" + o.experiment + "'");
  }
  if (want("adult")) {
    experiments::AdultCvConfig cfg;
    cfg.seed = *o.seed;
    const auto raw = load_data((fs::path(o.adult_dir) / "adult.csv").string(),
                               (fs::path(o.adult_dir) / "schema.json").string());
    const auto r = experiments::run_adult_cv(raw, cfg);
    out["adult"] = experiments::to_json(r);
    table << "adult (k=" << cfg.k << ")\n";
    for (const auto& d : r.deltas) {
      table << "  delta " << format_number(d.delta) << ": median |DP| " << format_value(d.median_dp)
            << ", median accuracy " << format_value(d.median_accuracy) << (d.all_compliant ? "" : "  NONCOMPLIANT")
            << "\n";
    }
  }
  if (want("interaction")) {
    experiments::InteractionConfig cfg;
    cfg.seed = *o.seed;
    const auto r = experiments::run_mitigation_interaction(cfg);
    out["interaction"] = experiments::to_json(r);
    auto rows = [&](const char* title, const std::vector<experiments::PolicyOutcome>& v) {
      table << title << "\n";
      for (const auto& p : v) {
        table << "  " << p.name << ": DP " << format_value(p.dp) << ", TPR gap " << format_value(p.tpr_gap)
              << ", accuracy " << format_value(p.accuracy) << "\n";
      }
    };
    rows("historical bias on R", r.historical);
    rows("measurement bias on Y (vs true Y)", r.measurement);
  }
  if (want("fairview")) {
    experiments::FairViewConfig cfg;
    cfg.seed = *o.seed;
    const auto r = experiments::run_fairview(cfg);
    out["fairview"] = {{"historical", to_json(r.historical.report, r.historical.trace.quality)},
                       {"measurement", to_json(r.measurement.report, r.measurement.trace.quality)}};
    table << "historical bias\n" << to_text(r.historical.report, r.historical.trace.quality);
    table << "measurement bias\n" << to_text(r.measurement.report, r.measurement.trace.quality);
  }
  if (want("temporal")) {
    experiments::TemporalConfig cfg;
    cfg.seed = *o.seed;
    const auto r = experiments::run_temporal(cfg);
    out["temporal"] = experiments::to_json(r);
    table << to_table(r.drift) << to_table(r.delta);
  }
  out["config_hash"] = config_hash({{"command", "repro"}, {"experiment", o.experiment}, {"seed", *o.seed}});
  emit(o.format, o.out, out, table.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairkit: fairness-aware tabular modelling"};
  app.require_subcommand(1);
  const std::vector<std::string> formats{"json", "table"};

  GenerateOpts gen;
  auto* g = app.add_subcommand("generate", "Sample a synthetic dataset with injected bias");
  g->add_option("--config", gen.config, "Bias spec JSON")->required()->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "Output CSV (schema written to <out>.schema.json)")->required();
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_flag("--proxy-label", gen.proxy_label, "Use the measured label P_Y as target");
  g->add_flag("--proxy-R", gen.proxy_r, "Expose the measured proxy P_R instead of R");
  g->add_flag("--expose-sensitive", gen.expose, "Make A a model input");

  EncodeOpts enc;
  auto* e = app.add_subcommand("encode", "Quartile-bin numeric and one-hot encode categorical features");
  e->add_option("--data", enc.data)->required()->check(CLI::ExistingFile);
  e->add_option("--schema", enc.schema, "Schema JSON (default <data>.schema.json)");
  e->add_option("--out", enc.out)->required();
  e->add_option("--map", enc.map_in, "Apply an existing encoding map")->check(CLI::ExistingFile);
  e->add_option("--map-out", enc.map_out, "Write the fitted encoding map");

  TrainOpts tr;
  auto* t = app.add_subcommand("train", "Fit an FFTree or a linear score model");
  t->add_option("--data", tr.data)->required()->check(CLI::ExistingFile);
  t->add_option("--schema", tr.schema);
  t->add_option("--out", tr.out, "Model JSON")->required();
  t->add_option("--model", tr.model)->check(CLI::IsMember({"fftree", "linear"}));
  t->add_option("--constraint", tr.constraints, "KIND:DELTA:COLUMN, repeatable");
  t->add_option("--max-depth", tr.max_depth);
  t->add_option("--min-leaf", tr.min_leaf);
  t->add_option("--min-split", tr.min_split);
  t->add_option("--max-leaves", tr.max_leaves, "0 = unlimited");
  t->add_option("--iterations", tr.iterations);
  t->add_option("--l2", tr.l2);
  t->add_flag("--encode", tr.encode, "Encode features before fitting (automatic for categorical features)");

  EvaluateOpts ev;
  auto* v = app.add_subcommand("evaluate", "Fairness and performance report of a model on a dataset");
  v->add_option("--model", ev.model)->required()->check(CLI::ExistingFile);
  v->add_option("--data", ev.data)->required()->check(CLI::ExistingFile);
  v->add_option("--schema", ev.schema);
  v->add_option("--policy", ev.policy, "Threshold policy JSON")->check(CLI::ExistingFile);
  v->add_option("--sensitive", ev.sensitive);
  v->add_option("--stratum", ev.stratum, "Stratum column for conditional DP");
  v->add_option("--tau", ev.tau);
  v->add_option("--id", ev.id, "Model id in the report");
  v->add_option("--family", ev.family)->check(CLI::IsMember({"none", "pre", "in", "post"}));
  v->add_option("--seed", ev.seed);
  v->add_option("--out", ev.out);
  v->add_option("--format", ev.format)->check(CLI::IsMember(formats));

  MitigateOpts mi;
  auto* m = app.add_subcommand("mitigate", "Apply a bias mitigation method");
  m->add_option("--method", mi.method)
      ->required()
      ->check(CLI::IsMember({"suppression", "ftu", "massaging", "reweighing", "sampling", "thresh-dp", "thresh-eopp",
                             "thresh-eodds", "thresh-cdp"}));
  m->add_option("--data", mi.data)->required()->check(CLI::ExistingFile);
  m->add_option("--schema", mi.schema);
  m->add_option("--sensitive", mi.sensitive);
  m->add_option("--out", mi.out, "Dataset CSV, or policy JSON for thresh-*")->required();
  m->add_option("--model", mi.model, "Scorer for thresh-* methods")->check(CLI::ExistingFile);
  m->add_option("--ranker", mi.ranker, "Ranker model for massaging")->check(CLI::ExistingFile);
  m->add_option("--stratum", mi.stratum);
  m->add_option("--table-out", mi.table_out, "Weight table JSON for reweighing");
  m->add_option("--corr-threshold", mi.corr_threshold);
  m->add_option("--epsilon", mi.epsilon);
  m->add_option("--target-rate", mi.target_rate);
  m->add_option("--seed", mi.seed);

  CompareOpts co;
  auto* c = app.add_subcommand("compare", "Rank evaluated models");
  c->add_option("reports", co.reports, "Report JSON files")->required()->check(CLI::ExistingFile);
  c->add_option("--phi-key", co.phi_key);
  c->add_option("--pi-key", co.pi_key);
  c->add_option("--Phi", co.Phi, "Fairness bound for the constrained best");
  c->add_option("--beta", co.beta);
  c->add_option("--out", co.out);
  c->add_option("--format", co.format)->check(CLI::IsMember(formats));

  FairViewOpts fv;
  auto* f = app.add_subcommand("fairview", "Per-group surrogate rules and worldview evidence");
  f->add_option("--data", fv.data)->required()->check(CLI::ExistingFile);
  f->add_option("--schema", fv.schema);
  f->add_option("--sensitive", fv.sensitive);
  f->add_option("--threshold", fv.threshold);
  f->add_option("--min-size", fv.min_size);
  f->add_option("--max-leaves", fv.max_leaves);
  f->add_option("--max-depth", fv.max_depth);
  f->add_option("--min-leaf", fv.min_leaf);
  f->add_option("--min-rows", fv.min_rows);
  f->add_flag("--all-leaves", fv.all_leaves, "Extract rules from every leaf, not only positive ones");
  f->add_option("--out", fv.out);
  f->add_option("--format", fv.format)->check(CLI::IsMember(formats));

  MonitorOpts mo;
  auto* mon = app.add_subcommand("monitor", "Fairness drift, stress tests and attributions");
  mon->require_subcommand(1);
  std::map<std::string, CLI::App*> modes;
  for (const char* name : {"slices", "shock", "shapley", "retrain"}) {
    auto* sub = mon->add_subcommand(name);
    sub->add_option("--model", mo.model)->required()->check(CLI::ExistingFile);
    sub->add_option("--data", mo.datas, "Dataset CSV (repeatable for slices)")->required()->check(CLI::ExistingFile);
    sub->add_option("--schema", mo.schema);
    sub->add_option("--sensitive", mo.sensitive);
    sub->add_option("--tau", mo.tau);
    sub->add_option("--out", mo.out);
    sub->add_option("--format", mo.format)->check(CLI::IsMember(formats));
    sub->add_option("--seed", mo.seed);
    modes[name] = sub;
  }
  for (const char* name : {"slices", "shock", "shapley"}) {
    modes[name]->add_option("--policy", mo.policy)->check(CLI::ExistingFile);
  }
  modes["slices"]->add_option("--slice-column", mo.slice_column);
  modes["shock"]->add_option("--shock", mo.shocks, "column:+1sd[:class], repeatable");
  modes["shapley"]->add_option("--row", mo.row);
  modes["shapley"]->add_option("--model2", mo.model2)->check(CLI::ExistingFile);
  modes["shapley"]->add_option("--policy2", mo.policy2)->check(CLI::ExistingFile);
  modes["shapley"]->add_option("--background", mo.background);
  modes["shapley"]->add_option("--sample", mo.sample);
  modes["shapley"]->add_option("--deprived", mo.deprived);
  modes["retrain"]->add_option("--model-out", mo.model_out, "Fit a sensitive-blind linear model on the new labels");

  ReproOpts re;
  auto* r = app.add_subcommand("repro", "Scripted experiment runs");
  r->add_option("--experiment", re.experiment)->check(CLI::IsMember({"all", "adult", "interaction", "fairview", "temporal"}));
  r->add_option("--adult-dir", re.adult_dir);
  r->add_option("--seed", re.seed);
  r->add_option("--out", re.out);
  r->add_option("--format", re.format)->check(CLI::IsMember(formats));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  }

  try {
    if (g->parsed()) return run_generate(gen);
    if (e->parsed()) return run_encode(enc);
    if (t->parsed()) return run_train(tr);
    if (v->parsed()) return run_evaluate(ev);
    if (m->parsed()) return run_mitigate(mi);
    if (c->parsed()) return run_compare(co);
    if (f->parsed()) return run_fairview(fv);
    if (mon->parsed()) {
      for (const auto& [name, sub] : modes) {
        if (sub->parsed()) return run_monitor(name, mo);
      }
    }
    if (r->parsed()) return run_repro(re);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const Error& err) {
    std::cerr << err.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& err) {
    std::cerr << "BadJson: " << err.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "IOError: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
