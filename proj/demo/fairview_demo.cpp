// Contrast per-group surrogate rules on historical versus measurement bias.

#include <iostream>
#include <string>

#include "fairkit/biasgen.hpp"
#include "fairkit/contrast.hpp"

using namespace fairkit;

int main() {
  for (bool measurement : {false, true}) {
    BiasSpec spec;
    spec.n = 20000;
    spec.seed = 5;
    (measurement ? spec.beta_m_Y : spec.beta_h_R) = 1.5;
    const auto ds =
        project_view(generate(spec), false, false, measurement ? LabelView::proxy_Y : LabelView::true_Y, false);
    const auto t = trace(ds, "A");
    std::cout << (measurement ? "== measurement bias ==\n" : "== historical bias ==\n");
    const auto cs = g_contrast(t.rules, ds, "A");
    for (const auto& c : cs) {
      std::cout << "[A=" << c.rule.origin << "] " << c.rule.text() << "  dprior "
                << (c.delta_prior ? std::to_string(*c.delta_prior) : "n/a") << "\n";
    }
    std::cout << to_text(evaluate_worldview(cs), t.quality) << "\n";
  }
}
