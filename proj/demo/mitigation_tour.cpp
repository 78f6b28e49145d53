// Pre- and post-processing mitigations on one historically biased sample,
// ranked by accuracy under a DP budget of 0.05.

#include <iostream>

#include "fairkit/biasgen.hpp"
#include "fairkit/compare.hpp"
#include "fairkit/metrics.hpp"
#include "fairkit/mitigate.hpp"
#include "fairkit/preprocess.hpp"

using namespace fairkit;

int main() {
  BiasSpec spec;
  spec.n = 10000;
  spec.seed = 3;
  spec.beta_h_R = 1.5;
  const auto ds = project_view(generate(spec), false, false, LabelView::true_Y, false);
  const auto split = split_rows(ds, 0.3, 3);
  const auto train = ds.select_rows(split.train);
  const auto test = ds.select_rows(split.test);
  const auto& groups = ds.column("A").classes;

  std::vector<EvaluatedModel> models;
  auto add = [&](const std::string& id, const std::string& family, const Predictor& p) {
    EvaluateOptions opt;
    opt.sensitive = "A";
    opt.model_id = id;
    const auto scores = predict_scores(p, test);
    models.push_back({id, evaluate_predictions(test, predict_labels(p, test, 0.5), scores, opt), family});
  };

  const auto base = fit_linear_score(train);
  add("linear", "none", as_predictor(base));
  add("ftu", "pre", as_predictor(fit_linear_score(ftu(train, "A"))));
  add("reweigh", "pre", as_predictor(fit_linear_score(reweigh(train, "A").dataset)));
  const auto train_scores = predict_scores(as_predictor(base), train);
  const auto massaged = massage(train, "A", train_scores);
  std::cout << "massaging flipped " << massaged.m << " labels each way\n";
  add("massage", "pre", as_predictor(fit_linear_score(massaged.dataset)));

  const auto s = train.codes("A");
  const auto y = train.labels();
  auto pol = fit_threshold_policy(PolicyKind::DP, train_scores, y, s, groups);
  pol.sensitive = "A";
  add("thresh-dp", "post", with_policy(as_predictor(base), pol, groups));
  auto eopp = fit_threshold_policy(PolicyKind::EOPP, train_scores, y, s, groups);
  eopp.sensitive = "A";
  add("thresh-eopp", "post", with_policy(as_predictor(base), eopp, groups));

  std::cout << to_table(compare_models(models, "dp_diff", "accuracy", 0.05));
}
