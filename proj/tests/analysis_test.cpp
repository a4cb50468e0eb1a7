#include <random>

#include <gtest/gtest.h>

#include "dsteval/analysis.hpp"
#include "dsteval/synth.hpp"
#include "test_support.hpp"

namespace dsteval {
namespace {

std::vector<MistakeEvent> events_at(std::initializer_list<std::size_t> turns) {
  std::vector<MistakeEvent> out;
  for (auto t : turns) out.push_back({"d", t, MistakeKind::missed, SlotName("hotel-a")});
  return out;
}

TEST(TailOrientation, Examples) {
  EXPECT_NEAR(*tail_orientation(events_at({5}), 6), (5 - 2.5) / 6.0, 1e-12);
  EXPECT_NEAR(*tail_orientation(events_at({0}), 6), -(2.5 / 6.0), 1e-12);
  EXPECT_NEAR(*tail_orientation(events_at({1, 4}), 6), 0.0, 1e-12);
  EXPECT_NEAR(*tail_orientation(events_at({2}), 5), 0.0, 1e-12);
  EXPECT_FALSE(tail_orientation({}, 6).has_value());
}

TEST(TailOrientation, RejectsBadRange) {
  EXPECT_THROW(tail_orientation(events_at({6}), 6), InputError);
  EXPECT_THROW(tail_orientation(events_at({}), 0), InputError);
}

TEST(TailOrientation, StaysInHalfOpenRange) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t n = 1 + rng() % 20;
    std::vector<MistakeEvent> ev;
    const std::size_t m = 1 + rng() % 10;
    for (std::size_t j = 0; j < m; ++j) {
      ev.push_back({"d", rng() % n, MistakeKind::wrong, SlotName("hotel-a")});
    }
    const double to = *tail_orientation(ev, n);
    ASSERT_GE(to, -0.5);
    ASSERT_LT(to, 0.5);
  }
  // extremes
  EXPECT_NEAR(*tail_orientation(events_at({0, 0}), 10), -0.45, 1e-12);
  EXPECT_NEAR(*tail_orientation(events_at({9, 9}), 10), 0.45, 1e-12);
}

TEST(NonUniformity, Examples) {
  EXPECT_NEAR(*non_uniformity(events_at({0, 1, 2, 3}), 4), 0.0, 1e-12);
  EXPECT_NEAR(*non_uniformity(events_at({0, 0, 0, 0}), 4), 6.0, 1e-12);
  EXPECT_FALSE(non_uniformity({}, 4).has_value());
  // m = 1, n = 10: (0.9 + 9 * 0.1) / 0.1
  EXPECT_NEAR(*non_uniformity(events_at({3}), 10), 18.0, 1e-9);
}

TEST(NonUniformity, ZeroExactlyWhenUniform) {
  std::mt19937_64 rng(32);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<std::size_t> per_turn(n);
    std::vector<MistakeEvent> ev;
    const std::size_t m = 1 + rng() % 12;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t t = rng() % n;
      ++per_turn[t];
      ev.push_back({"d", t, MistakeKind::wrong, SlotName("hotel-a")});
    }
    const double nu = *non_uniformity(ev, n);
    ASSERT_GE(nu, 0.0);
    const bool uniform = std::all_of(per_turn.begin(), per_turn.end(),
                                     [&](std::size_t c) { return c * n == m; });
    ASSERT_EQ(nu < 1e-12, uniform);
  }
}

TEST(TraitScores, AbsentExactlyWithoutMistakes) {
  const auto none = trait_scores("d", {}, 3);
  EXPECT_FALSE(none.tail_orientation || none.non_uniformity);
  EXPECT_EQ(none.mistakes, 0u);
  const auto ev = events_at({1});
  const auto some = trait_scores("d", ev, 3);
  EXPECT_TRUE(some.tail_orientation && some.non_uniformity);
  EXPECT_EQ(some.mistakes, 1u);
}

TEST(MeanNormalize, Examples) {
  const std::vector<double> a{0, 1}, b{1, 2, 3}, c{5, 5, 5}, d{7};
  EXPECT_EQ(mean_normalize(a), (std::vector<double>{-0.5, 0.5}));
  EXPECT_EQ(mean_normalize(b), (std::vector<double>{-0.5, 0.0, 0.5}));
  EXPECT_THROW(mean_normalize(c), InputError);
  EXPECT_THROW(mean_normalize(d), InputError);
}

TEST(MeanNormalize, ZeroMeanUnitRange) {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> norm(3.0, 10.0);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> xs(2 + rng() % 50);
    for (auto& x : xs) x = norm(rng);
    const auto ys = mean_normalize(xs);
    const double mean = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    const auto [lo, hi] = std::minmax_element(ys.begin(), ys.end());
    ASSERT_NEAR(mean, 0.0, 1e-12);
    ASSERT_NEAR(*hi - *lo, 1.0, 1e-12);
  }
}

TEST(Pearson, Examples) {
  const std::vector<double> xs{1, 2, 3, 4}, ys{2, 1, 4, 3};
  std::vector<double> lin, neg;
  for (double x : xs) {
    lin.push_back(2 * x + 1);
    neg.push_back(-x);
  }
  EXPECT_NEAR(pearson(xs, lin), 1.0, 1e-12);
  EXPECT_NEAR(pearson(xs, neg), -1.0, 1e-12);
  EXPECT_NEAR(pearson(xs, ys), 0.6, 1e-12);
}

TEST(Pearson, Errors) {
  const std::vector<double> xs{1, 2, 3}, flat{2, 2, 2}, short_{1, 2}, one{1};
  EXPECT_THROW(pearson(xs, flat), InputError);
  EXPECT_THROW(pearson(xs, short_), InputError);
  EXPECT_THROW(pearson(one, one), InputError);
}

TEST(Pearson, AffineInvariance) {
  std::mt19937_64 rng(34);
  std::normal_distribution<double> norm;
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> xs(3 + rng() % 40), ys(xs.size()), xs2, ys2;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      xs[j] = norm(rng);
      ys[j] = 0.5 * xs[j] + norm(rng);
    }
    const double a = scale(rng), b = norm(rng), c = scale(rng), d = norm(rng);
    for (std::size_t j = 0; j < xs.size(); ++j) {
      xs2.push_back(a * xs[j] + b);
      ys2.push_back(c * ys[j] + d);
    }
    ASSERT_NEAR(pearson(xs, ys), pearson(xs2, ys2), 1e-9);
  }
}

TEST(CompareCorrelations, EqualCorrelationsAreNotSignificant) {
  for (double rc : {-0.5, 0.0, 0.3, 0.9}) {
    const auto c = compare_correlations(0.4, 0.4, rc, 200);
    EXPECT_LE(c.lower, 0.0);
    EXPECT_GE(c.upper, 0.0);
    EXPECT_FALSE(c.significant);
    EXPECT_DOUBLE_EQ(c.difference, 0.0);
  }
}

TEST(CompareCorrelations, NoisyCopyBeatsIndependentNoise) {
  std::mt19937_64 rng(35);
  std::normal_distribution<double> norm;
  const std::size_t n = 500;
  std::vector<double> trait(n), a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    trait[i] = norm(rng);
    a[i] = trait[i] + norm(rng);
    b[i] = norm(rng);
  }
  const auto c = compare_correlations(pearson(a, trait), pearson(b, trait), pearson(a, b), n);
  EXPECT_TRUE(c.significant);
  EXPECT_GT(c.lower, 0.0);
}

TEST(CompareCorrelations, SwapNegatesInterval) {
  const auto ab = compare_correlations(0.6, 0.2, 0.35, 120);
  const auto ba = compare_correlations(0.2, 0.6, 0.35, 120);
  EXPECT_NEAR(ab.lower, -ba.upper, 1e-12);
  EXPECT_NEAR(ab.upper, -ba.lower, 1e-12);
  EXPECT_EQ(ab.significant, ba.significant);
}

TEST(CompareCorrelations, WiderAtHigherConfidence) {
  const auto c95 = compare_correlations(0.5, 0.3, 0.4, 100, 0.95);
  const auto c99 = compare_correlations(0.5, 0.3, 0.4, 100, 0.99);
  EXPECT_LT(c99.lower, c95.lower);
  EXPECT_GT(c99.upper, c95.upper);
}

TEST(CompareCorrelations, Errors) {
  EXPECT_THROW(compare_correlations(0.1, 0.2, 0.3, 3), InputError);
  EXPECT_THROW(compare_correlations(1.0, 0.2, 0.3, 30), InputError);
  EXPECT_THROW(compare_correlations(0.1, 0.2, -1.0, 30), InputError);
  EXPECT_THROW(compare_correlations(0.1, 0.2, 0.3, 30, 1.0), InputError);
}

MetricReport report_with(std::vector<std::tuple<std::string, double, double>> rows) {
  MetricReport r;
  for (auto& [id, f, g] : rows) {
    DialogueScores d;
    d.id = id;
    at(d.scores, Metric::fga) = f;
    at(d.scores, Metric::gca) = g;
    r.dialogues.push_back(d);
  }
  return r;
}

TEST(DisagreementRanking, LargestGapFirst) {
  const auto r = report_with({{"a", 0.5, 0.5}, {"b", 0.9, 0.45}, {"c", 0.2, 0.2}});
  const auto top = disagreement_ranking(r, Metric::fga, Metric::gca, 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].dialogue_id, "b");
  EXPECT_NEAR(top[0].gap(), 0.45, 1e-12);
}

TEST(DisagreementRanking, KLargerThanCorpusAndTies) {
  const auto r = report_with({{"z", 0.5, 0.5}, {"b", 0.25, 0.5}, {"a", 0.75, 0.5}});
  const auto all = disagreement_ranking(r, Metric::fga, Metric::gca, 10);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0].dialogue_id, "a");
  EXPECT_EQ(all[1].dialogue_id, "b");
  EXPECT_EQ(all[2].dialogue_id, "z");
}

TEST(DisagreementRanking, SampleDialoguePair) {
  const auto r = report_with({{"mul0001", 0.9, 0.88},
                              {"fga-higher", 0.4884, 0.3143},
                              {"gca-higher", 0.3484, 0.75},
                              {"pmul0002", 0.6, 0.55}});
  const auto top = disagreement_ranking(r, Metric::fga, Metric::gca, 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].dialogue_id, "gca-higher");
  EXPECT_NEAR(top[0].gap(), 0.4016, 1e-9);
  EXPECT_EQ(top[1].dialogue_id, "fga-higher");
  EXPECT_NEAR(top[1].gap(), 0.1741, 1e-9);
}

TEST(DisagreementRanking, MatchesExhaustiveSort) {
  std::mt19937_64 rng(36);
  std::uniform_real_distribution<double> u;
  std::vector<std::tuple<std::string, double, double>> rows;
  for (int i = 0; i < 200; ++i) rows.emplace_back("d" + std::to_string(i), u(rng), u(rng));
  const auto r = report_with(rows);
  const auto top = disagreement_ranking(r, Metric::fga, Metric::gca, 200);
  for (std::size_t i = 1; i < top.size(); ++i) ASSERT_GE(top[i - 1].gap(), top[i].gap());
  double best = 0.0;
  std::string best_id;
  for (auto& [id, f, g] : rows) {
    if (std::abs(f - g) > best) {
      best = std::abs(f - g);
      best_id = id;
    }
  }
  EXPECT_EQ(top[0].dialogue_id, best_id);
}

TEST(DisagreementRanking, Errors) {
  const auto r = report_with({{"a", 0.5, 0.5}});
  EXPECT_THROW(disagreement_ranking(r, Metric::fga, Metric::gca, 0), InputError);
  EXPECT_THROW(disagreement_ranking(MetricReport{}, Metric::fga, Metric::gca, 3), InputError);
}

TEST(DisagreementRanking, SkipsUndefinedScores) {
  MetricReport r = report_with({{"a", 0.5, 0.1}, {"b", 0.5, 0.4}});
  r.dialogues[0].scores = {};
  const auto top = disagreement_ranking(r, Metric::fga, Metric::gca, 5);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].dialogue_id, "b");
}

TEST(CompareSystems, RanksPerDialogueDifferences) {
  const auto a = report_with({{"x", 0.9, 0}, {"y", 0.5, 0}});
  const auto b = report_with({{"x", 0.85, 0}, {"y", 0.1, 0}});
  const auto top = compare_systems(a, b, Metric::fga, 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].dialogue_id, "y");
}

TEST(TraitTable, HypotheticalRows) {
  const auto h = testing::hypothetical();
  Corpus corpus;
  corpus.dialogues.push_back(Dialogue::from_states("d", h.gold));
  const PredictionSet preds{"p1", {{"d", h.p1}}};
  const auto rows = trait_table(corpus, preds, testing::ontology_of_size(4), {});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].traits.mistakes, 1u);
  EXPECT_NEAR(*rows[0].traits.tail_orientation, 2.5 / 6.0, 1e-12);
  EXPECT_NEAR(*at(rows[0].scores, Metric::jga), 5.0 / 6.0, 1e-12);
}

TEST(TraitCorrelation, SkipsDialoguesWithoutMistakes) {
  std::vector<TraitRow> rows(4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    at(rows[i].scores, Metric::fga) = 0.1 * static_cast<double>(i);
    if (i > 0) rows[i].traits.tail_orientation = 0.1 * static_cast<double>(i);
  }
  const auto c = trait_correlation(rows, Trait::tail_orientation, Metric::fga);
  EXPECT_EQ(c.samples, 3u);
  EXPECT_NEAR(*c.r, 1.0, 1e-12);
  const auto none = trait_correlation(rows, Trait::non_uniformity, Metric::fga);
  EXPECT_EQ(none.samples, 0u);
  EXPECT_FALSE(none.r.has_value());
}

TEST(BinnedProfile, EqualWidthBins) {
  const std::vector<double> xs{0.0, 0.1, 0.5, 0.9, 1.0}, ys{1, 3, 5, 7, 9};
  const auto bins = binned_profile(xs, ys, 2);
  ASSERT_EQ(bins.size(), 2u);
  EXPECT_EQ(bins[0].count, 2u);
  EXPECT_DOUBLE_EQ(*bins[0].mean, 2.0);
  EXPECT_EQ(bins[1].count, 3u);
  EXPECT_DOUBLE_EQ(*bins[1].mean, 7.0);
  EXPECT_DOUBLE_EQ(bins[1].upper, 1.0);
}

TEST(BinnedProfile, EmptyBinsHaveNoMean) {
  const std::vector<double> xs{0.0, 1.0}, ys{1, 2};
  const auto bins = binned_profile(xs, ys);
  ASSERT_EQ(bins.size(), 10u);
  EXPECT_FALSE(bins[4].mean.has_value());
  EXPECT_THROW(binned_profile(xs, ys, 0), InputError);
}

TEST(TraitNames, RoundTrip) {
  for (auto t : {Trait::tail_orientation, Trait::non_uniformity}) {
    EXPECT_EQ(parse_trait(trait_name(t)), t);
  }
  EXPECT_FALSE(parse_trait("xx").has_value());
}

}  // namespace
}  // namespace dsteval
