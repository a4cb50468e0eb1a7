#pragma once

// Turn-level metrics (JGA, SA, AGA, RSA, FGA), the change-level GCA, and
// corpus evaluation.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dsteval/delta.hpp"
#include "dsteval/model.hpp"

namespace dsteval {

enum class Metric { jga, sa, aga, rsa, fga, gca };

inline constexpr std::array<Metric, 6> kAllMetrics = {
    Metric::jga, Metric::sa, Metric::aga, Metric::rsa, Metric::fga, Metric::gca};

inline std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::jga: return "jga";
    case Metric::sa: return "sa";
    case Metric::aga: return "aga";
    case Metric::rsa: return "rsa";
    case Metric::fga: return "fga";
    case Metric::gca: return "gca";
  }
  return "jga";
}

inline std::optional<Metric> parse_metric(std::string_view name) {
  for (Metric m : kAllMetrics) {
    if (metric_name(m) == name) return m;
  }
  return std::nullopt;
}

/// Scores indexed by Metric; nullopt means undefined (e.g. AGA with no
/// active gold turn).
using MetricScores = std::array<std::optional<double>, kAllMetrics.size()>;

inline std::optional<double>& at(MetricScores& s, Metric m) {
  return s[static_cast<std::size_t>(m)];
}
inline const std::optional<double>& at(const MetricScores& s, Metric m) {
  return s[static_cast<std::size_t>(m)];
}

/// Running sum of per-turn scores; score is sum/count.
struct TurnAverage {
  double sum = 0.0;
  std::size_t count = 0;

  std::optional<double> value() const {
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
  }
  TurnAverage& operator+=(const TurnAverage& o) {
    sum += o.sum;
    count += o.count;
    return *this;
  }
};

namespace detail {

struct TurnDiff {
  std::size_t missed = 0;    // gold slot absent from prediction
  std::size_t wrong = 0;     // both present, values differ
  std::size_t overshot = 0;  // predicted slot absent from gold
  std::size_t matched = 0;   // identical pair
  std::size_t union_size() const { return missed + wrong + overshot + matched; }
};

inline TurnDiff diff_states(const BeliefState& gold, const BeliefState& pred) {
  TurnDiff d;
  auto g = gold.begin();
  auto p = pred.begin();
  while (g != gold.end() || p != pred.end()) {
    if (p == pred.end() || (g != gold.end() && g->first < p->first)) {
      ++d.missed;
      ++g;
    } else if (g == gold.end() || p->first < g->first) {
      ++d.overshot;
      ++p;
    } else {
      if (g->second == p->second) {
        ++d.matched;
      } else {
        ++d.wrong;
      }
      ++g;
      ++p;
    }
  }
  return d;
}

inline TurnAverage jga_sum(std::span<const BeliefState> gold,
                           std::span<const BeliefState> pred) {
  TurnAverage acc;
  for (std::size_t t = 0; t < gold.size(); ++t) {
    acc.sum += gold[t] == pred[t] ? 1.0 : 0.0;
    ++acc.count;
  }
  return acc;
}

inline TurnAverage sa_sum(std::span<const BeliefState> gold,
                          std::span<const BeliefState> pred, std::size_t k) {
  TurnAverage acc;
  const double kd = static_cast<double>(k);
  for (std::size_t t = 0; t < gold.size(); ++t) {
    const TurnDiff d = diff_states(gold[t], pred[t]);
    // overshot slots count as wrong predictions here
    const double errors = static_cast<double>(d.missed + d.wrong + d.overshot);
    acc.sum += (kd - errors) / kd;
    ++acc.count;
  }
  return acc;
}

inline TurnAverage aga_sum(std::span<const BeliefState> gold,
                           std::span<const BeliefState> pred) {
  TurnAverage acc;
  for (std::size_t t = 0; t < gold.size(); ++t) {
    if (gold[t].empty()) continue;
    const TurnDiff d = diff_states(gold[t], pred[t]);
    acc.sum += static_cast<double>(d.matched) / static_cast<double>(gold[t].size());
    ++acc.count;
  }
  return acc;
}

inline TurnAverage rsa_sum(std::span<const BeliefState> gold,
                           std::span<const BeliefState> pred) {
  TurnAverage acc;
  for (std::size_t t = 0; t < gold.size(); ++t) {
    const TurnDiff d = diff_states(gold[t], pred[t]);
    const std::size_t relevant = d.union_size();
    if (relevant > 0) {
      acc.sum += static_cast<double>(relevant - d.missed - d.wrong - d.overshot) /
                 static_cast<double>(relevant);
    }
    ++acc.count;
  }
  return acc;
}

inline TurnAverage fga_sum(std::span<const TurnErrorClass> classes,
                           double lambda) {
  TurnAverage acc;
  for (std::size_t t = 0; t < classes.size(); ++t) {
    const auto& c = classes[t];
    double score = 0.0;
    switch (c.tag) {
      case TurnTag::clean:
        score = 1.0;
        break;
      case TurnTag::new_error:
        score = 0.0;
        break;
      case TurnTag::propagated_only:
        // Without an originating mistake (possible only when removals are
        // not scored) the turn is treated as a fresh error.
        if (c.last_new_error_turn) {
          const double dt = static_cast<double>(t - *c.last_new_error_turn);
          score = 1.0 - std::exp(-lambda * dt);
        }
        break;
    }
    acc.sum += score;
    ++acc.count;
  }
  return acc;
}

inline void check_ontology(std::span<const BeliefState> states,
                           const Ontology& ontology,
                           std::vector<std::string>& unknown) {
  for (const auto& s : states) {
    for (const auto& [slot, value] : s) {
      if (!ontology.contains(slot.str())) unknown.push_back(slot.str());
    }
  }
}

}  // namespace detail

/// Fraction of turns whose predicted state equals gold exactly.
inline double jga(std::span<const BeliefState> gold,
                  std::span<const BeliefState> pred) {
  detail::check_lengths(gold, pred, "jga");
  if (gold.empty()) {
    throw InputError(ErrorCode::invalid_argument, "jga: empty dialogue");
  }
  return *detail::jga_sum(gold, pred).value();
}

/// Per-turn accuracy over all K ontology slots, inactive ones included.
inline double slot_accuracy(std::span<const BeliefState> gold,
                            std::span<const BeliefState> pred,
                            const Ontology& ontology) {
  detail::check_lengths(gold, pred, "slot_accuracy");
  if (ontology.empty()) {
    throw InputError(ErrorCode::invalid_argument, "slot_accuracy: empty ontology");
  }
  if (gold.empty()) {
    throw InputError(ErrorCode::invalid_argument, "slot_accuracy: empty dialogue");
  }
  std::vector<std::string> unknown;
  detail::check_ontology(gold, ontology, unknown);
  detail::check_ontology(pred, ontology, unknown);
  if (!unknown.empty()) {
    std::string message =
        "slot_accuracy: slot '" + unknown.front() + "' is not in the ontology";
    throw InputError(ErrorCode::unknown_slot, message, std::move(unknown));
  }
  return *detail::sa_sum(gold, pred, ontology.size()).value();
}

/// Mean recall over turns with a non-empty gold state; nullopt if none.
inline std::optional<double> aga(std::span<const BeliefState> gold,
                                 std::span<const BeliefState> pred) {
  detail::check_lengths(gold, pred, "aga");
  return detail::aga_sum(gold, pred).value();
}

/// Per-turn accuracy over the slots present in gold or prediction; a turn
/// where both are empty scores 0.
inline double rsa(std::span<const BeliefState> gold,
                  std::span<const BeliefState> pred) {
  detail::check_lengths(gold, pred, "rsa");
  if (gold.empty()) {
    throw InputError(ErrorCode::invalid_argument, "rsa: empty dialogue");
  }
  return *detail::rsa_sum(gold, pred).value();
}

/// JGA with exponentially recovering credit for turns whose only errors
/// were made earlier: 1 - exp(-lambda * turns since the last new error).
inline double fga(std::span<const BeliefState> gold,
                  std::span<const BeliefState> pred, double lambda,
                  DeltaOptions options = {}) {
  detail::check_lengths(gold, pred, "fga");
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw InputError(ErrorCode::invalid_argument, "fga: lambda must be in (0, 1]");
  }
  if (gold.empty()) {
    throw InputError(ErrorCode::invalid_argument, "fga: empty dialogue");
  }
  const auto classes = classify_turn_errors(gold, pred, options);
  return *detail::fga_sum(classes, lambda).value();
}

struct IntermediateScores {
  double value_precision = 0.0;
  double value_recall = 0.0;
  double label_precision = 0.0;
  double label_recall = 0.0;

  std::array<double, 4> as_array() const {
    return {value_precision, value_recall, label_precision, label_recall};
  }
};

/// V_P = C/P, V_R = C/G, L_P = (C+W)/P, L_R = (C+W)/G. A zero denominator
/// gives 0, except that no changes at all is vacuously perfect.
inline IntermediateScores intermediates(const ChangeCounts& counts) {
  const auto p = static_cast<double>(counts.predictions());
  const auto g = static_cast<double>(counts.gold());
  if (counts.empty()) return {1.0, 1.0, 1.0, 1.0};
  const auto c = static_cast<double>(counts.correct);
  const auto cw = static_cast<double>(counts.correct + counts.wrong);
  IntermediateScores s;
  s.value_precision = p > 0 ? c / p : 0.0;
  s.value_recall = g > 0 ? c / g : 0.0;
  s.label_precision = p > 0 ? cw / p : 0.0;
  s.label_recall = g > 0 ? cw / g : 0.0;
  return s;
}

/// sum(w) / sum(w / x). Zero-weight terms are ignored; a zero value with a
/// positive weight makes the mean 0.
inline double weighted_harmonic_mean(std::span<const double> values,
                                     std::span<const double> weights) {
  if (values.size() != weights.size()) {
    throw InputError(ErrorCode::invalid_argument,
                     "weighted_harmonic_mean: size mismatch");
  }
  double weight_sum = 0.0;
  double denom = 0.0;
  bool annihilated = false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = weights[i];
    const double x = values[i];
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InputError(ErrorCode::invalid_argument,
                       "weighted_harmonic_mean: weights must be non-negative");
    }
    if (!(x >= 0.0 && x <= 1.0)) {
      throw InputError(ErrorCode::invalid_argument,
                       "weighted_harmonic_mean: values must lie in [0, 1]");
    }
    if (w == 0.0) continue;
    weight_sum += w;
    if (x == 0.0) {
      annihilated = true;
    } else {
      denom += w / x;
    }
  }
  if (!(weight_sum > 0.0)) {
    throw InputError(ErrorCode::invalid_argument,
                     "weighted_harmonic_mean: weights sum to zero");
  }
  if (annihilated) return 0.0;
  return weight_sum / denom;
}

/// Granular Change Accuracy of a set of change counts.
inline double gca(const ChangeCounts& counts, const MetricConfig& config = {}) {
  const auto values = intermediates(counts).as_array();
  const std::array<double, 4> weights = {config.value_weight, config.value_weight,
                                         config.label_weight, config.label_weight};
  return weighted_harmonic_mean(values, weights);
}

struct DialogueScores {
  std::string id;
  std::size_t turns = 0;
  MetricScores scores;
  ChangeCounts counts;
};

struct MetricReport {
  std::string dataset;
  std::string system;
  MetricConfig config;
  std::size_t ontology_size = 0;
  std::size_t total_turns = 0;
  MetricScores corpus;
  ChangeCounts counts;  // pooled over the corpus
  IntermediateScores intermediates;
  std::vector<DialogueScores> dialogues;

  const DialogueScores* find(std::string_view id) const {
    for (const auto& d : dialogues) {
      if (d.id == id) return &d;
    }
    return nullptr;
  }
};

/// Scores every predicted dialogue. Dialogues without a prediction are not
/// evaluated. Turn metrics are micro-averaged over turns except in
/// per-dialogue mode; GCA pools counts only in pooled mode.
inline MetricReport evaluate_corpus(const Corpus& corpus,
                                    const PredictionSet& predictions,
                                    const Ontology& ontology,
                                    const MetricConfig& config) {
  config.validate();
  if (predictions.predictions.empty()) {
    throw InputError(ErrorCode::invalid_argument, "no predictions to evaluate");
  }
  if (ontology.empty()) {
    throw InputError(ErrorCode::invalid_argument, "ontology is empty");
  }

  std::unordered_map<std::string_view, const Dialogue*> by_id;
  by_id.reserve(corpus.dialogues.size());
  for (const auto& d : corpus.dialogues) by_id.emplace(d.id(), &d);

  // Validate everything first so an error lists every offending dialogue.
  std::vector<std::string> problems;
  ErrorCode first_code = ErrorCode::invalid_argument;
  auto problem = [&](ErrorCode code, std::string msg) {
    if (problems.empty()) first_code = code;
    problems.push_back(std::move(msg));
  };
  std::vector<const Dialogue*> matched;
  matched.reserve(predictions.predictions.size());
  for (const auto& p : predictions.predictions) {
    auto it = by_id.find(p.dialogue_id);
    if (it == by_id.end()) {
      problem(ErrorCode::unknown_dialogue,
              "prediction for unknown dialogue '" + p.dialogue_id + "'");
      matched.push_back(nullptr);
      continue;
    }
    const Dialogue& d = *it->second;
    matched.push_back(&d);
    if (d.num_turns() != p.states.size()) {
      problem(ErrorCode::length_mismatch,
              "dialogue '" + d.id() + "': " + std::to_string(d.num_turns()) +
                  " gold turns, " + std::to_string(p.states.size()) +
                  " predicted states");
      continue;
    }
    std::vector<std::string> unknown;
    detail::check_ontology(d.gold(), ontology, unknown);
    detail::check_ontology(p.states, ontology, unknown);
    if (!unknown.empty()) {
      problem(ErrorCode::unknown_slot, "dialogue '" + d.id() + "': slot '" +
                                           unknown.front() +
                                           "' is not in the ontology");
    }
  }
  if (!problems.empty()) {
    std::string message =
        std::to_string(problems.size()) + " prediction(s) failed validation";
    throw InputError(first_code, message, std::move(problems));
  }

  MetricReport report;
  report.dataset = corpus.dataset;
  report.system = predictions.system;
  report.config = config;
  report.ontology_size = ontology.size();
  report.dialogues.reserve(predictions.predictions.size());

  const DeltaOptions delta_options{config.score_deactivations};
  TurnAverage jga_all, sa_all, aga_all, rsa_all, fga_all;
  std::array<TurnAverage, kAllMetrics.size()> dialogue_means;

  for (std::size_t i = 0; i < predictions.predictions.size(); ++i) {
    const Dialogue& d = *matched[i];
    const auto gold = d.gold();
    const std::span<const BeliefState> pred = predictions.predictions[i].states;

    const TurnAverage j = detail::jga_sum(gold, pred);
    const TurnAverage s = detail::sa_sum(gold, pred, ontology.size());
    const TurnAverage a = detail::aga_sum(gold, pred);
    const TurnAverage r = detail::rsa_sum(gold, pred);
    const ChangeTally tally = count_changes(gold, pred, delta_options, d.id());
    const auto classes = classify_turns(gold, pred, tally.events);
    const TurnAverage f = detail::fga_sum(classes, config.lambda);

    DialogueScores row;
    row.id = d.id();
    row.turns = d.num_turns();
    row.counts = tally.counts;
    at(row.scores, Metric::jga) = j.value();
    at(row.scores, Metric::sa) = s.value();
    at(row.scores, Metric::aga) = a.value();
    at(row.scores, Metric::rsa) = r.value();
    at(row.scores, Metric::fga) = f.value();
    at(row.scores, Metric::gca) = gca(tally.counts, config);

    jga_all += j;
    sa_all += s;
    aga_all += a;
    rsa_all += r;
    fga_all += f;
    report.counts += tally.counts;
    report.total_turns += d.num_turns();
    for (std::size_t m = 0; m < kAllMetrics.size(); ++m) {
      if (row.scores[m]) dialogue_means[m] += TurnAverage{*row.scores[m], 1};
    }
    report.dialogues.push_back(std::move(row));
  }

  if (config.aggregation == Aggregation::per_dialogue_mean) {
    for (std::size_t m = 0; m < kAllMetrics.size(); ++m) {
      report.corpus[m] = dialogue_means[m].value();
    }
  } else {
    at(report.corpus, Metric::jga) = jga_all.value();
    at(report.corpus, Metric::sa) = sa_all.value();
    at(report.corpus, Metric::aga) = aga_all.value();
    at(report.corpus, Metric::rsa) = rsa_all.value();
    at(report.corpus, Metric::fga) = fga_all.value();
    at(report.corpus, Metric::gca) =
        config.aggregation == Aggregation::pooled
            ? std::optional<double>(gca(report.counts, config))
            : dialogue_means[static_cast<std::size_t>(Metric::gca)].value();
  }
  report.intermediates = intermediates(report.counts);
  return report;
}

}  // namespace dsteval
