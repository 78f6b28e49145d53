#pragma once

// Synthetic data with controllable historical, measurement, representation
// and omission bias.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairkit/dataset.hpp"
#include "fairkit/error.hpp"
#include "fairkit/random.hpp"

namespace fairkit {

enum class UndersampleMode { none, random, low_R };

inline std::string_view to_string(UndersampleMode m) {
  switch (m) {
    case UndersampleMode::none: return "none";
    case UndersampleMode::random: return "random";
    case UndersampleMode::low_R: return "low_R";
  }
  return "?";
}

inline UndersampleMode parse_undersample_mode(std::string_view s) {
  if (s == "none") return UndersampleMode::none;
  if (s == "random") return UndersampleMode::random;
  if (s == "low_R") return UndersampleMode::low_R;
  fail("BadSpec", "unknown undersample_mode '" + std::string(s) + "'");
}

struct BiasSpec {
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  double p_A = 0.5;
  double k_R = 3.0;
  double theta_R = 1.0;
  int K = 3;
  double alpha_RQ = 1.0;
  double alpha_R = 1.0;
  double alpha_Q = 1.0;
  double sigma_S = 0.5;
  double beta_h_R = 0.0;
  double beta_h_Q = 0.0;
  double beta_h_Y = 0.0;
  double beta_m_R = 0.0;
  double beta_m_Y = 0.0;
  double sigma_PR = 0.1;
  double sigma_PS = 0.1;
  double p_u = 1.0;
  UndersampleMode undersample_mode = UndersampleMode::none;
  bool omit_R = false;
  double beta_alg = 0.0;
  double beta_dep = 0.0;

  bool operator==(const BiasSpec&) const = default;
};

inline void validate(const BiasSpec& s) {
  auto check = [](bool ok, const char* what) { require(ok, "BadSpec", what); };
  check(s.n >= 2, "n must be at least 2");
  check(s.p_A > 0.0 && s.p_A < 1.0, "p_A must lie in (0,1)");
  check(s.k_R > 0.0 && s.theta_R > 0.0, "k_R and theta_R must be positive");
  check(s.K >= 1, "K must be at least 1");
  check(s.sigma_S > 0.0, "sigma_S must be positive");
  check(s.sigma_PR >= 0.0 && s.sigma_PS >= 0.0, "proxy noise must be non-negative");
  check(s.beta_h_R >= 0.0 && s.beta_h_Q >= 0.0 && s.beta_h_Y >= 0.0 && s.beta_m_R >= 0.0 &&
            s.beta_m_Y >= 0.0 && s.beta_alg >= 0.0 && s.beta_dep >= 0.0,
        "bias magnitudes must be non-negative");
  check(s.p_u > 0.0 && s.p_u <= 1.0, "p_u must lie in (0,1]");
  for (double v : {s.alpha_RQ, s.alpha_R, s.alpha_Q, s.beta_h_R, s.beta_m_Y, s.sigma_S, s.k_R}) {
    check(std::isfinite(v), "parameters must be finite");
  }
}

inline nlohmann::json to_json(const BiasSpec& s) {
  return {{"n", s.n},
          {"seed", s.seed},
          {"p_A", s.p_A},
          {"k_R", s.k_R},
          {"theta_R", s.theta_R},
          {"K", s.K},
          {"alpha_RQ", s.alpha_RQ},
          {"alpha_R", s.alpha_R},
          {"alpha_Q", s.alpha_Q},
          {"sigma_S", s.sigma_S},
          {"beta_h_R", s.beta_h_R},
          {"beta_h_Q", s.beta_h_Q},
          {"beta_h_Y", s.beta_h_Y},
          {"beta_m_R", s.beta_m_R},
          {"beta_m_Y", s.beta_m_Y},
          {"sigma_PR", s.sigma_PR},
          {"sigma_PS", s.sigma_PS},
          {"p_u", s.p_u},
          {"undersample_mode", to_string(s.undersample_mode)},
          {"omit_R", s.omit_R},
          {"beta_alg", s.beta_alg},
          {"beta_dep", s.beta_dep}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline BiasSpec bias_spec_from_json(const nlohmann::json& j) {
  require(j.is_object(), "BadSpec", "bias spec must be a JSON object");
  BiasSpec s;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n") s.n = v.get<std::size_t>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else if (key == "p_A") s.p_A = v.get<double>();
      else if (key == "k_R") s.k_R = v.get<double>();
      else if (key == "theta_R") s.theta_R = v.get<double>();
      else if (key == "K") s.K = v.get<int>();
      else if (key == "alpha_RQ") s.alpha_RQ = v.get<double>();
      else if (key == "alpha_R") s.alpha_R = v.get<double>();
      else if (key == "alpha_Q") s.alpha_Q = v.get<double>();
      else if (key == "sigma_S") s.sigma_S = v.get<double>();
      else if (key == "beta_h_R") s.beta_h_R = v.get<double>();
      else if (key == "beta_h_Q") s.beta_h_Q = v.get<double>();
      else if (key == "beta_h_Y") s.beta_h_Y = v.get<double>();
      else if (key == "beta_m_R") s.beta_m_R = v.get<double>();
      else if (key == "beta_m_Y") s.beta_m_Y = v.get<double>();
      else if (key == "sigma_PR") s.sigma_PR = v.get<double>();
      else if (key == "sigma_PS") s.sigma_PS = v.get<double>();
      else if (key == "p_u") s.p_u = v.get<double>();
      else if (key == "undersample_mode") s.undersample_mode = parse_undersample_mode(v.get<std::string>());
      else if (key == "omit_R") s.omit_R = v.get<bool>();
      else if (key == "beta_alg") s.beta_alg = v.get<double>();
      else if (key == "beta_dep") s.beta_dep = v.get<double>();
      else fail("BadSpec", "unknown field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail("BadSpec", e.what());
  }
  validate(s);
  return s;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct GeneratedSample {
  // Columns: A (sensitive), R, Q (features), S, P_R, P_S (latent),
  // Y (target), P_Y (latent).
  TabularDataset dataset;
  double threshold_used = 0.0;
};

namespace detail {

inline std::vector<double> standard_normals(Rng rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(n);
  for (auto& v : z) v = normal(rng);
  return z;
}

}  // namespace detail

/// Draws a sample with every bias switch applied except representation
/// bias, which is applied afterwards when spec.undersample_mode != none.
/// Each variable has its own random stream, so changing one bias magnitude
/// leaves the other draws untouched.
inline GeneratedSample generate_unsampled(const BiasSpec& spec) {
  validate(spec);
  const std::size_t n = spec.n;
  Rng root(spec.seed);

  std::vector<int> a(n);
  {
    Rng rng = root.split(0);
    for (auto& v : a) v = rng.uniform() < spec.p_A ? 1 : 0;
  }
  std::vector<double> r(n);
  {
    Rng rng = root.split(1);
    std::gamma_distribution<double> gamma(spec.k_R, spec.theta_R);
    for (std::size_t i = 0; i < n; ++i) r[i] = -spec.beta_h_R * a[i] + gamma(rng);
  }
  std::vector<double> q(n);
  {
    Rng rng = root.split(2);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(-(spec.alpha_RQ * r[i] - spec.beta_h_Q * a[i]));
      int count = 0;
      for (int k = 0; k < spec.K; ++k) count += rng.uniform() < p ? 1 : 0;
      q[i] = count;
    }
  }
  const auto z_s = detail::standard_normals(root.split(3), n);
  const auto z_pr = detail::standard_normals(root.split(4), n);
  const auto z_ps = detail::standard_normals(root.split(5), n);
  std::vector<double> s(n), p_r(n), p_s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = spec.alpha_R * r[i] - spec.alpha_Q * q[i] - spec.beta_h_Y * a[i] + spec.sigma_S * z_s[i];
    p_r[i] = r[i] - spec.beta_m_R * a[i] + spec.sigma_PR * z_pr[i];
    p_s[i] = s[i] - spec.beta_m_Y * a[i] + spec.sigma_PS * z_ps[i];
  }
  double mean = 0.0;
  for (double v : p_s) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> y(n), p_y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = s[i] > mean ? 1.0 : 0.0;
    p_y[i] = p_s[i] > mean ? 1.0 : 0.0;
  }

  std::vector<Column> cols;
  cols.push_back(Column::make_categorical("A", Role::sensitive, std::move(a), {"0", "1"}));
  cols.push_back(Column::make_numeric("R", Role::feature, std::move(r)));
  cols.push_back(Column::make_numeric("Q", Role::feature, std::move(q)));
  cols.push_back(Column::make_numeric("S", Role::latent, std::move(s)));
  cols.push_back(Column::make_numeric("P_R", Role::latent, std::move(p_r)));
  cols.push_back(Column::make_numeric("P_S", Role::latent, std::move(p_s)));
  cols.push_back(Column::make_numeric("Y", Role::target, std::move(y)));
  cols.push_back(Column::make_numeric("P_Y", Role::latent, std::move(p_y)));
  return {TabularDataset(std::move(cols)), mean};
}

/// Reduces the A=1 rows to round(p_u * count(A=0)) (never more than are
/// present).  p_u = 1 is the identity.  Kept rows retain their order.
inline GeneratedSample apply_representation_bias(const GeneratedSample& sample, double p_u,
                                                 UndersampleMode mode, std::uint64_t seed) {
  require(p_u > 0.0 && p_u <= 1.0, "BadSpec", "p_u must lie in (0,1]");
  require(mode != UndersampleMode::none, "BadSpec", "undersample mode must not be none");
  if (p_u == 1.0) return sample;
  const auto& ds = sample.dataset;
  const auto codes = ds.codes("A");
  std::vector<std::size_t> group0, group1;
  for (std::size_t i = 0; i < ds.n_rows(); ++i) (codes[i] == 1 ? group1 : group0).push_back(i);
  const auto target = std::min<std::size_t>(
      group1.size(), static_cast<std::size_t>(std::llround(p_u * static_cast<double>(group0.size()))));
  require(target > 0, "TooFewRows", "undersampling would remove every A=1 row");
  std::vector<std::size_t> keep1;
  if (mode == UndersampleMode::random) {
    Rng rng(seed);
    keep1 = group1;
    shuffle(keep1.begin(), keep1.end(), rng);
    keep1.resize(target);
  } else {
    const auto& r = ds.column("R").numeric;
    keep1 = group1;
    std::stable_sort(keep1.begin(), keep1.end(),
                     [&](std::size_t x, std::size_t y) { return r[x] < r[y]; });
    keep1.resize(target);
  }
  std::vector<bool> keep(ds.n_rows(), false);
  for (auto i : group0) keep[i] = true;
  for (auto i : keep1) keep[i] = true;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    if (keep[i]) rows.push_back(i);
  }
  return {ds.select_rows(rows), sample.threshold_used};
}

/// Full generator: the label threshold is fixed on the complete draw, then
/// representation bias (if configured) removes A=1 rows.
inline GeneratedSample generate(const BiasSpec& spec) {
  auto sample = generate_unsampled(spec);
  if (spec.undersample_mode != UndersampleMode::none && spec.p_u < 1.0) {
    sample = apply_representation_bias(sample, spec.p_u, spec.undersample_mode,
                                       splitmix64(spec.seed ^ 0x5eedULL));
  }
  return sample;
}

enum class LabelView { true_Y, proxy_Y };

/// Training view: features {R | P_R | none} + Q (+ A when expose_A), target
/// Y or P_Y.  Every other generated column stays as latent for evaluation.
inline TabularDataset project_view(const GeneratedSample& sample, bool use_proxy_R, bool omit_R,
                                   LabelView label, bool expose_A,
                                   std::vector<std::string>* warnings = nullptr) {
  require(!(use_proxy_R && omit_R), "BadView", "use_proxy_R and omit_R are exclusive");
  std::vector<Column> cols;
  for (const auto& c : sample.dataset.columns()) {
    Column col = c;
    const auto& name = c.name();
    if (name == "A") {
      col.schema.role = Role::sensitive;
      col.schema.model_input = expose_A;
    } else if (name == "R") {
      col.schema.role = (!use_proxy_R && !omit_R) ? Role::feature : Role::latent;
    } else if (name == "P_R") {
      col.schema.role = use_proxy_R ? Role::feature : Role::latent;
    } else if (name == "Q") {
      col.schema.role = Role::feature;
    } else if (name == "Y") {
      col.schema.role = label == LabelView::true_Y ? Role::target : Role::latent;
    } else if (name == "P_Y") {
      col.schema.role = label == LabelView::proxy_Y ? Role::target : Role::latent;
    } else if (col.schema.role != Role::slice) {
      col.schema.role = Role::latent;
    }
    cols.push_back(std::move(col));
  }
  if (omit_R && !expose_A && warnings) {
    warnings->push_back("EmptyFeatureSet: only Q remains as a model input");
  }
  return TabularDataset(std::move(cols), std::vector<double>(sample.dataset.weights().begin(),
                                                             sample.dataset.weights().end()));
}

inline std::vector<double> inject_score_bias(std::span<const double> scores, std::span<const int> a,
                                             double beta) {
  require(scores.size() == a.size(), "LengthMismatch", "scores and groups differ in length");
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] - beta * a[i];
  return out;
}

}  // namespace fairkit
