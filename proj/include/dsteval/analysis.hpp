#pragma once

// Mistake-distribution traits, correlation statistics and per-dialogue
// metric disagreement.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "dsteval/delta.hpp"
#include "dsteval/metrics.hpp"
#include "dsteval/model.hpp"

namespace dsteval {

namespace detail {

inline void check_event_range(std::span<const MistakeEvent> events, std::size_t n,
                              std::string_view what) {
  if (n == 0) {
    throw InputError(ErrorCode::invalid_argument,
                     std::string(what) + ": dialogue has no turns");
  }
  for (const auto& e : events) {
    if (e.turn_index >= n) {
      throw InputError(ErrorCode::invalid_argument,
                       std::string(what) + ": event at turn " +
                           std::to_string(e.turn_index) + " outside a " +
                           std::to_string(n) + "-turn dialogue");
    }
  }
}

}  // namespace detail

/// Mean mistake turn relative to the middle turn, scaled by 1/n.
/// Lies in [-1/2, 1/2); nullopt without mistakes.
inline std::optional<double> tail_orientation(std::span<const MistakeEvent> events,
                                              std::size_t n) {
  detail::check_event_range(events, n, "tail_orientation");
  if (events.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& e : events) sum += static_cast<double>(e.turn_index);
  const double mean_turn = sum / static_cast<double>(events.size());
  const double nd = static_cast<double>(n);
  return (mean_turn - (nd - 1.0) / 2.0) / nd;
}

/// Total absolute deviation of per-turn mistake counts from the uniform
/// expectation m/n, divided by m/n. Zero iff perfectly uniform.
inline std::optional<double> non_uniformity(std::span<const MistakeEvent> events,
                                            std::size_t n) {
  detail::check_event_range(events, n, "non_uniformity");
  if (events.empty()) return std::nullopt;
  std::vector<std::size_t> per_turn(n, 0);
  for (const auto& e : events) ++per_turn[e.turn_index];
  const double expected =
      static_cast<double>(events.size()) / static_cast<double>(n);
  double deviation = 0.0;
  for (std::size_t c : per_turn) {
    deviation += std::abs(static_cast<double>(c) - expected);
  }
  return deviation / expected;
}

/// (x - mean) / (max - min).
inline std::vector<double> mean_normalize(std::span<const double> xs) {
  if (xs.size() < 2) {
    throw InputError(ErrorCode::invalid_argument,
                     "mean_normalize: need at least two values");
  }
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) {
    throw InputError(ErrorCode::invalid_argument,
                     "mean_normalize: input is constant");
  }
  const double mean =
      std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back((x - mean) / range);
  return out;
}

/// Product-moment correlation.
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw InputError(ErrorCode::invalid_argument, "pearson: length mismatch");
  }
  if (xs.size() < 2) {
    throw InputError(ErrorCode::invalid_argument,
                     "pearson: need at least two samples");
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw InputError(ErrorCode::invalid_argument, "pearson: constant series");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct CorrelationComparison {
  double difference = 0.0;  // r1 - r2
  double lower = 0.0;
  double upper = 0.0;
  double confidence = 0.95;
  bool significant = false;  // interval excludes zero
};

/// Confidence interval for r1 - r2 where r1 = corr(a, t), r2 = corr(b, t)
/// share the variable t and r_common = corr(a, b). Uses Fisher-z limits for
/// each correlation, combined with the correlation between the two
/// estimates (Zou's method for overlapping correlations).
inline CorrelationComparison compare_correlations(double r1, double r2,
                                                  double r_common, std::size_t n,
                                                  double confidence = 0.95) {
  if (n < 4) {
    throw InputError(ErrorCode::invalid_argument,
                     "compare_correlations: need at least 4 samples");
  }
  for (double r : {r1, r2, r_common}) {
    if (!(r > -1.0 && r < 1.0)) {
      throw InputError(ErrorCode::invalid_argument,
                       "compare_correlations: correlations must lie in (-1, 1)");
    }
  }
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw InputError(ErrorCode::invalid_argument,
                     "compare_correlations: confidence must lie in (0, 1)");
  }

  const boost::math::normal standard;
  const double z = boost::math::quantile(standard, 1.0 - (1.0 - confidence) / 2.0);
  const double se = 1.0 / std::sqrt(static_cast<double>(n) - 3.0);
  auto limits = [&](double r) {
    const double zr = std::atanh(r);
    return std::pair{std::tanh(zr - z * se), std::tanh(zr + z * se)};
  };
  const auto [l1, u1] = limits(r1);
  const auto [l2, u2] = limits(r2);

  // Correlation between the two overlapping estimates.
  const double c =
      ((r_common - 0.5 * r1 * r2) * (1.0 - r1 * r1 - r2 * r2 - r_common * r_common) +
       r_common * r_common * r_common) /
      ((1.0 - r1 * r1) * (1.0 - r2 * r2));

  CorrelationComparison out;
  out.confidence = confidence;
  out.difference = r1 - r2;
  out.lower = out.difference - std::sqrt(std::max(
                                   0.0, (r1 - l1) * (r1 - l1) + (u2 - r2) * (u2 - r2) -
                                            2.0 * c * (r1 - l1) * (u2 - r2)));
  out.upper = out.difference + std::sqrt(std::max(
                                   0.0, (u1 - r1) * (u1 - r1) + (r2 - l2) * (r2 - l2) -
                                            2.0 * c * (u1 - r1) * (r2 - l2)));
  out.significant = out.lower > 0.0 || out.upper < 0.0;
  return out;
}

struct Disagreement {
  std::string dialogue_id;
  double score_a = 0.0;
  double score_b = 0.0;
  double gap() const { return std::abs(score_a - score_b); }
};

namespace detail {

inline std::vector<Disagreement> rank(std::vector<Disagreement> rows,
                                      std::size_t k) {
  std::sort(rows.begin(), rows.end(), [](const Disagreement& x, const Disagreement& y) {
    const double gx = x.gap();
    const double gy = y.gap();
    if (gx != gy) return gx > gy;
    return x.dialogue_id < y.dialogue_id;
  });
  if (rows.size() > k) rows.resize(k);
  return rows;
}

}  // namespace detail

/// Dialogues with the largest |metric_a - metric_b|, ties by id. Dialogues
/// where either score is undefined are skipped.
inline std::vector<Disagreement> disagreement_ranking(const MetricReport& report,
                                                      Metric metric_a,
                                                      Metric metric_b,
                                                      std::size_t k) {
  if (k == 0) {
    throw InputError(ErrorCode::invalid_argument, "disagreement_ranking: k must be >= 1");
  }
  if (report.dialogues.empty()) {
    throw InputError(ErrorCode::invalid_argument,
                     "disagreement_ranking: report has no per-dialogue scores");
  }
  std::vector<Disagreement> rows;
  rows.reserve(report.dialogues.size());
  for (const auto& d : report.dialogues) {
    const auto& a = at(d.scores, metric_a);
    const auto& b = at(d.scores, metric_b);
    if (a && b) rows.push_back({d.id, *a, *b});
  }
  return detail::rank(std::move(rows), k);
}

/// Same ranking across two systems evaluated on the same corpus, for one metric.
inline std::vector<Disagreement> compare_systems(const MetricReport& a,
                                                 const MetricReport& b,
                                                 Metric metric, std::size_t k) {
  if (k == 0) {
    throw InputError(ErrorCode::invalid_argument, "compare_systems: k must be >= 1");
  }
  if (a.dialogues.empty() || b.dialogues.empty()) {
    throw InputError(ErrorCode::invalid_argument,
                     "compare_systems: report has no per-dialogue scores");
  }
  std::unordered_map<std::string_view, const DialogueScores*> other;
  for (const auto& d : b.dialogues) other.emplace(d.id, &d);
  std::vector<Disagreement> rows;
  for (const auto& d : a.dialogues) {
    auto it = other.find(d.id);
    if (it == other.end()) continue;
    const auto& sa = at(d.scores, metric);
    const auto& sb = at(it->second->scores, metric);
    if (sa && sb) rows.push_back({d.id, *sa, *sb});
  }
  return detail::rank(std::move(rows), k);
}

enum class Trait { tail_orientation, non_uniformity };

inline std::string_view trait_name(Trait t) {
  return t == Trait::tail_orientation ? "to" : "nu";
}

inline std::optional<Trait> parse_trait(std::string_view name) {
  if (name == "to") return Trait::tail_orientation;
  if (name == "nu") return Trait::non_uniformity;
  return std::nullopt;
}

struct TraitScores {
  std::string dialogue_id;
  std::optional<double> tail_orientation;
  std::optional<double> non_uniformity;
  std::size_t mistakes = 0;

  const std::optional<double>& get(Trait t) const {
    return t == Trait::tail_orientation ? tail_orientation : non_uniformity;
  }
};

inline TraitScores trait_scores(std::string dialogue_id,
                                std::span<const MistakeEvent> events,
                                std::size_t n) {
  TraitScores s;
  s.dialogue_id = std::move(dialogue_id);
  s.mistakes = events.size();
  s.tail_orientation = tail_orientation(events, n);
  s.non_uniformity = non_uniformity(events, n);
  return s;
}

struct TraitRow {
  TraitScores traits;
  MetricScores scores;
};

/// Per-dialogue traits alongside per-dialogue metric scores. Mistakes are
/// the change-level events, so a persisting error counts once.
inline std::vector<TraitRow> trait_table(const Corpus& corpus,
                                         const PredictionSet& predictions,
                                         const Ontology& ontology,
                                         const MetricConfig& config) {
  const MetricReport report = evaluate_corpus(corpus, predictions, ontology, config);
  std::vector<TraitRow> rows;
  rows.reserve(predictions.predictions.size());
  for (std::size_t i = 0; i < predictions.predictions.size(); ++i) {
    const Prediction& p = predictions.predictions[i];
    const Dialogue& d = *corpus.find(p.dialogue_id);
    const ChangeTally tally = count_changes(
        d.gold(), p.states, DeltaOptions{config.score_deactivations}, d.id());
    rows.push_back({trait_scores(d.id(), tally.events, d.num_turns()),
                    report.dialogues[i].scores});
  }
  return rows;
}

struct TraitCorrelation {
  Trait trait = Trait::tail_orientation;
  Metric metric = Metric::jga;
  std::optional<double> r;  // nullopt when a series is constant or too short
  std::size_t samples = 0;
};

namespace detail {

// Rows where the trait and both metrics are defined.
inline void paired_series(std::span<const TraitRow> rows, Trait trait, Metric a,
                          std::optional<Metric> b, std::vector<double>& xs,
                          std::vector<double>& ya, std::vector<double>& yb) {
  for (const auto& row : rows) {
    const auto& x = row.traits.get(trait);
    const auto& va = at(row.scores, a);
    if (!x || !va) continue;
    if (b && !at(row.scores, *b)) continue;
    xs.push_back(*x);
    ya.push_back(*va);
    if (b) yb.push_back(*at(row.scores, *b));
  }
}

inline std::optional<double> try_pearson(std::span<const double> xs,
                                         std::span<const double> ys) {
  try {
    return pearson(xs, ys);
  } catch (const InputError&) {
    return std::nullopt;
  }
}

}  // namespace detail

inline TraitCorrelation trait_correlation(std::span<const TraitRow> rows,
                                          Trait trait, Metric metric) {
  std::vector<double> xs, ys, unused;
  detail::paired_series(rows, trait, metric, std::nullopt, xs, ys, unused);
  return {trait, metric, detail::try_pearson(xs, ys), xs.size()};
}

struct TraitComparison {
  Trait trait = Trait::tail_orientation;
  Metric metric_a = Metric::fga;
  Metric metric_b = Metric::gca;
  double r_a = 0.0;
  double r_b = 0.0;
  double r_ab = 0.0;
  std::size_t samples = 0;
  CorrelationComparison test;
};

/// Is corr(metric_a, trait) different from corr(metric_b, trait)? Uses the
/// same sample (dialogues with mistakes) for all three correlations.
inline TraitComparison compare_trait_correlations(std::span<const TraitRow> rows,
                                                  Trait trait, Metric metric_a,
                                                  Metric metric_b,
                                                  double confidence = 0.95) {
  std::vector<double> xs, ya, yb;
  detail::paired_series(rows, trait, metric_a, metric_b, xs, ya, yb);
  TraitComparison out;
  out.trait = trait;
  out.metric_a = metric_a;
  out.metric_b = metric_b;
  out.samples = xs.size();
  out.r_a = pearson(xs, ya);
  out.r_b = pearson(xs, yb);
  out.r_ab = pearson(ya, yb);
  out.test = compare_correlations(out.r_a, out.r_b, out.r_ab, xs.size(), confidence);
  return out;
}

struct Bin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::optional<double> mean;
};

/// Equal-width bins over `xs`, each with the mean of the matching `ys`.
inline std::vector<Bin> binned_profile(std::span<const double> xs,
                                       std::span<const double> ys,
                                       std::size_t bins = 10) {
  if (xs.size() != ys.size()) {
    throw InputError(ErrorCode::invalid_argument, "binned_profile: length mismatch");
  }
  if (bins == 0) {
    throw InputError(ErrorCode::invalid_argument, "binned_profile: need >= 1 bin");
  }
  if (xs.empty()) return {};
  const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<Bin> out(bins);
  std::vector<double> sums(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lower = lo + width * static_cast<double>(b);
    out[b].upper = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>((xs[i] - lo) / width) : 0;
    b = std::min(b, bins - 1);
    ++out[b].count;
    sums[b] += ys[i];
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (out[b].count > 0) out[b].mean = sums[b] / static_cast<double>(out[b].count);
  }
  return out;
}

}  // namespace dsteval
