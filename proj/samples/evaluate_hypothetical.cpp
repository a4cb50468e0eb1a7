// Scores the two predictions of the six-turn hypothetical dialogue and
// prints every metric side by side.
//
//   ./evaluate_hypothetical samples/data

#include <filesystem>
#include <iostream>

#include "dsteval/dsteval.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "samples/data";
  try {
    const auto corpus = dsteval::load_corpus(dir / "hypothetical_gold.json");
    for (const char* name : {"hypothetical_p1.json", "hypothetical_p2.json"}) {
      const auto preds = dsteval::load_predictions(dir / name, corpus);
      const auto report =
          dsteval::evaluate_corpus(corpus, preds, corpus.ontology, dsteval::MetricConfig{});
      std::cout << preds.system << ':';
      for (auto m : dsteval::kAllMetrics) {
        const auto& v = dsteval::at(report.corpus, m);
        std::cout << ' ' << dsteval::metric_name(m) << '='
                  << (v ? std::to_string(*v * 100.0) : std::string("n/a"));
      }
      std::cout << "  (M=" << report.counts.missed << " W=" << report.counts.wrong
                << " O=" << report.counts.overshot << " C=" << report.counts.correct
                << ")\n";
    }
  } catch (const dsteval::InputError& e) {
    std::cerr << e.what() << '\n';
    for (const auto& d : e.diagnostics()) std::cerr << "  " << d << '\n';
    return 1;
  }
  return 0;
}
