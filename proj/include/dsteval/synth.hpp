#pragma once

// Synthetic predictions with controlled errors, random gold corpora, and an
// independent change-count oracle for testing count_changes().

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dsteval/delta.hpp"
#include "dsteval/model.hpp"

namespace dsteval {

struct KindMix {
  double missed = 1.0 / 3.0;
  double wrong = 1.0 / 3.0;
  double overshot = 1.0 / 3.0;
};

struct PerturbationSpec {
  double error_rate = 0.1;    // fraction of gold changes to corrupt
  KindMix kind_mix;
  double tail_bias = 0.0;     // > 0 moves errors towards the end
  double concentration = 0.0; // > 0 clusters errors into fewer turns
  std::uint64_t seed = 0;

  void validate() const {
    std::vector<std::string> problems;
    if (!(error_rate >= 0.0 && error_rate <= 1.0)) {
      problems.push_back("error_rate must be in [0, 1]");
    }
    const auto& k = kind_mix;
    if (!(k.missed >= 0.0 && k.wrong >= 0.0 && k.overshot >= 0.0)) {
      problems.push_back("kind_mix probabilities must be non-negative");
    } else if (std::abs(k.missed + k.wrong + k.overshot - 1.0) > 1e-6) {
      problems.push_back("kind_mix probabilities must sum to 1");
    }
    if (!std::isfinite(tail_bias)) problems.push_back("tail_bias must be finite");
    if (!(concentration >= 0.0) || !std::isfinite(concentration)) {
      problems.push_back("concentration must be a finite value >= 0");
    }
    if (!problems.empty()) {
      throw InputError(ErrorCode::invalid_argument, "invalid perturbation spec",
                       std::move(problems));
    }
  }
};

namespace detail {

// Uniform double in [0, 1) from the top 53 bits; unlike the standard
// distributions this is identical on every platform.
inline double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t index_below(std::mt19937_64& rng, std::size_t n) {
  return std::min(static_cast<std::size_t>(unit(rng) * static_cast<double>(n)),
                  n - 1);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Independent per-dialogue stream: depends only on (seed, dialogue id).
inline std::mt19937_64 dialogue_rng(std::uint64_t seed, std::string_view id) {
  const std::uint64_t h = fnv1a(id);
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h),
                    static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

inline std::size_t sample_weighted(std::mt19937_64& rng,
                                   std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = unit(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

struct GoldChange {
  std::size_t turn;
  SlotName slot;
  std::optional<SlotValue> value;
};

// Draws made for one rank of the corruption order. Everything is drawn up
// front so that raising error_rate only ever adds corruptions.
struct CorruptionDraw {
  MistakeKind kind = MistakeKind::missed;
  std::size_t overshoot_turn = 0;
  double slot_u = 0.0;
  double value_u = 0.0;
};

inline SlotValue pick_other(const std::vector<SlotValue>& pool, double u,
                            const SlotValue* avoid) {
  std::vector<const SlotValue*> options;
  for (const auto& v : pool) {
    if (avoid == nullptr || v != *avoid) options.push_back(&v);
  }
  if (options.empty()) {
    return SlotValue((avoid != nullptr ? avoid->str() : std::string("value")) +
                     " alt");
  }
  const auto i = std::min(static_cast<std::size_t>(u * static_cast<double>(options.size())),
                          options.size() - 1);
  return *options[i];
}

}  // namespace detail

/// Starts from the gold states and corrupts a fraction of gold changes.
/// Missed drops the change, wrong substitutes another value seen for the
/// slot, overshot adds a spurious value for a slot gold leaves inactive.
/// Each corruption yields exactly one mistake event in count_changes()
/// (an overshot is skipped when no slot is eligible at its turn).
/// Corruptions favour turn t with weight exp(tail_bias * (t/(n-1) - 1/2)),
/// damped by exp(-concentration * |t - anchor|) around a per-dialogue anchor.
inline PredictionSet perturb(const Corpus& corpus, const PerturbationSpec& spec) {
  spec.validate();
  if (corpus.dialogues.empty()) {
    throw InputError(ErrorCode::invalid_argument, "perturb: empty corpus");
  }

  std::map<std::string, std::vector<SlotValue>, std::less<>> pools;
  for (const auto& s : corpus.ontology.slots()) pools[s.str()];
  for (const auto& d : corpus.dialogues) {
    for (const auto& state : d.gold()) {
      for (const auto& [slot, value] : state) pools[slot.str()].push_back(value);
    }
  }
  for (auto& [slot, values] : pools) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
  }
  std::vector<SlotName> all_slots;
  for (const auto& [slot, values] : pools) all_slots.emplace_back(slot);

  const std::array<double, 3> kind_weights = {
      spec.kind_mix.missed, spec.kind_mix.wrong, spec.kind_mix.overshot};

  PredictionSet out;
  out.system = "synthetic";
  out.predictions.reserve(corpus.dialogues.size());

  for (const auto& d : corpus.dialogues) {
    const auto gold = d.gold();
    const std::size_t n = gold.size();
    auto rng = detail::dialogue_rng(spec.seed, d.id());

    std::vector<detail::GoldChange> changes;
    const BeliefState empty;
    for (std::size_t t = 0; t < n; ++t) {
      for (auto& c : state_delta(t == 0 ? empty : gold[t - 1], gold[t])) {
        changes.push_back({t, std::move(c.slot), std::move(c.value)});
      }
    }

    std::vector<double> weight(n);
    for (std::size_t t = 0; t < n; ++t) {
      const double pos = n > 1 ? static_cast<double>(t) / static_cast<double>(n - 1) - 0.5
                               : 0.0;
      weight[t] = std::exp(spec.tail_bias * pos);
    }
    const std::size_t anchor = detail::sample_weighted(rng, weight);
    for (std::size_t t = 0; t < n; ++t) {
      const double dist = std::abs(static_cast<double>(t) - static_cast<double>(anchor));
      weight[t] *= std::exp(-spec.concentration * dist);
      weight[t] = std::max(weight[t], std::numeric_limits<double>::min());
    }

    // Weighted order without replacement: exponential race keys.
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(changes.size());
    for (std::size_t i = 0; i < changes.size(); ++i) {
      const double u = 1.0 - detail::unit(rng);  // (0, 1]
      order.emplace_back(-std::log(u) / weight[changes[i].turn], i);
    }
    std::sort(order.begin(), order.end());

    std::vector<detail::CorruptionDraw> draws(changes.size());
    for (auto& draw : draws) {
      draw.kind = static_cast<MistakeKind>(detail::sample_weighted(rng, kind_weights));
      draw.overshoot_turn = detail::sample_weighted(rng, weight);
      draw.slot_u = detail::unit(rng);
      draw.value_u = detail::unit(rng);
    }
    const double rounding = detail::unit(rng);
    const std::size_t k = std::min(
        changes.size(),
        static_cast<std::size_t>(std::floor(spec.error_rate * static_cast<double>(changes.size()) +
                                            rounding)));

    std::vector<std::optional<MistakeKind>> fate(changes.size());
    std::vector<std::vector<std::pair<SlotName, double>>> overshoots(n);
    std::vector<double> overshoot_value_u;
    for (std::size_t rank = 0; rank < k; ++rank) {
      const auto& draw = draws[rank];
      if (draw.kind != MistakeKind::overshot) {
        fate[order[rank].second] = draw.kind;
        continue;
      }
      const std::size_t t = draw.overshoot_turn;
      const BeliefState& before = t == 0 ? empty : gold[t - 1];
      std::vector<const SlotName*> eligible;
      for (const auto& s : all_slots) {
        // untouched and inactive in gold at t
        if (!gold[t].contains(s.str()) && !before.contains(s.str())) {
          eligible.push_back(&s);
        }
      }
      if (eligible.empty()) continue;
      const auto pick = std::min(
          static_cast<std::size_t>(draw.slot_u * static_cast<double>(eligible.size())),
          eligible.size() - 1);
      overshoots[t].emplace_back(*eligible[pick], draw.value_u);
    }

    Prediction p;
    p.dialogue_id = d.id();
    p.states.reserve(n);
    BeliefState state;
    std::size_t next = 0;
    for (std::size_t t = 0; t < n; ++t) {
      for (; next < changes.size() && changes[next].turn == t; ++next) {
        const auto& c = changes[next];
        const auto& kind = fate[next];
        if (!kind) {
          state.assign(c.slot, c.value);
        } else if (!c.value) {
          // A removal can only be missed: keep the old gold value.
          state.set(c.slot, *gold[t - 1].find(c.slot.str()));
        } else if (*kind == MistakeKind::missed) {
          state.erase(c.slot.str());
        } else {
          const auto& pool = pools.find(c.slot.str())->second;
          state.set(c.slot, detail::pick_other(pool, draws[next].value_u, &*c.value));
        }
      }
      for (const auto& [slot, value_u] : overshoots[t]) {
        const auto& pool = pools.find(slot.str())->second;
        state.set(slot, detail::pick_other(pool, value_u, state.find(slot.str())));
      }
      p.states.push_back(state);
    }
    out.predictions.push_back(std::move(p));
  }
  return out;
}

/// Change counts recomputed per turn and per slot from full state
/// comparisons. Shares no code path with count_changes() and exists to
/// cross-check it.
inline ChangeCounts oracle_counts(std::span<const BeliefState> gold,
                                  std::span<const BeliefState> pred,
                                  DeltaOptions options = {}) {
  if (gold.size() != pred.size()) {
    throw InputError(ErrorCode::length_mismatch, "oracle_counts: length mismatch");
  }
  using Value = std::optional<std::string>;
  auto lookup = [](const BeliefState* s, const std::string& slot) -> Value {
    if (s == nullptr) return std::nullopt;
    for (const auto& [name, value] : *s) {
      if (name.str() == slot) return value.str();
    }
    return std::nullopt;
  };

  ChangeCounts counts;
  for (std::size_t t = 0; t < gold.size(); ++t) {
    const BeliefState* g_prev = t == 0 ? nullptr : &gold[t - 1];
    const BeliefState* p_prev = t == 0 ? nullptr : &pred[t - 1];
    std::map<std::string, bool> slots;
    for (const BeliefState* s : {g_prev, p_prev, &gold[t], &pred[t]}) {
      if (s == nullptr) continue;
      for (const auto& [name, value] : *s) slots[name.str()] = true;
    }
    for (const auto& [slot, unused] : slots) {
      const Value g_before = lookup(g_prev, slot);
      const Value g_now = lookup(&gold[t], slot);
      const Value p_before = lookup(p_prev, slot);
      const Value p_now = lookup(&pred[t], slot);
      bool gold_changed = g_now != g_before;
      bool pred_changed = p_now != p_before;
      if (!options.score_deactivations) {
        gold_changed = gold_changed && g_now.has_value();
        pred_changed = pred_changed && p_now.has_value();
      }
      if (gold_changed) {
        // judged against the predicted state at this turn
        if (p_now == g_now) {
          ++counts.correct;
        } else if (!p_now || !g_now) {
          ++counts.missed;
        } else {
          ++counts.wrong;
        }
      } else if (pred_changed) {
        if (p_now == g_now) {
          ++counts.correct;
        } else if (!g_now) {
          ++counts.overshot;
        } else {
          ++counts.wrong;
        }
      }
    }
  }
  return counts;
}

namespace detail {

inline const std::vector<std::string>& slot_catalogue() {
  static const std::vector<std::string> names = {
      "hotel-area",        "hotel-pricerange",  "hotel-stars",
      "hotel-type",        "hotel-parking",     "hotel-internet",
      "hotel-name",        "hotel-book day",    "hotel-book people",
      "hotel-book stay",   "restaurant-area",   "restaurant-food",
      "restaurant-pricerange", "restaurant-name", "restaurant-book day",
      "restaurant-book people", "restaurant-book time", "attraction-area",
      "attraction-name",   "attraction-type",   "train-day",
      "train-departure",   "train-destination", "train-arriveby",
      "train-leaveat",     "train-book people", "taxi-departure",
      "taxi-destination",  "taxi-arriveby",     "taxi-leaveat"};
  return names;
}

}  // namespace detail

/// Ontology of `k` slot names ("hotel-area", ...; generic names past 30).
inline Ontology synthetic_ontology(std::size_t k) {
  std::vector<SlotName> slots;
  const auto& names = detail::slot_catalogue();
  for (std::size_t i = 0; i < k; ++i) {
    slots.emplace_back(i < names.size() ? names[i]
                                        : "extra-slot" + std::to_string(i));
  }
  return Ontology(std::move(slots));
}

struct CorpusShape {
  std::size_t dialogues = 100;
  std::size_t min_turns = 4;
  std::size_t max_turns = 12;
  std::size_t slots = 10;            // ontology size
  std::size_t values_per_slot = 4;
  double add_probability = 0.6;      // per turn: activate a new slot
  double change_probability = 0.15;  // per turn: revise an active slot
  double remove_probability = 0.05;  // per turn: deactivate an active slot
};

/// Random gold corpus: per turn, slots are activated, revised or removed.
inline Corpus random_corpus(const CorpusShape& shape, std::uint64_t seed) {
  if (shape.slots == 0 || shape.values_per_slot == 0 || shape.min_turns == 0 ||
      shape.max_turns < shape.min_turns) {
    throw InputError(ErrorCode::invalid_argument, "random_corpus: invalid shape");
  }
  Corpus corpus;
  corpus.dataset = "synthetic";
  corpus.ontology = synthetic_ontology(shape.slots);
  const auto& slots = corpus.ontology.slots();
  auto value = [](std::size_t v) { return SlotValue("v" + std::to_string(v)); };

  std::mt19937_64 rng(seed);
  corpus.dialogues.reserve(shape.dialogues);
  for (std::size_t i = 0; i < shape.dialogues; ++i) {
    const std::size_t n =
        shape.min_turns + detail::index_below(rng, shape.max_turns - shape.min_turns + 1);
    std::vector<BeliefState> states;
    BeliefState state;
    for (std::size_t t = 0; t < n; ++t) {
      if (detail::unit(rng) < shape.add_probability && state.size() < slots.size()) {
        std::vector<const SlotName*> inactive;
        for (const auto& s : slots) {
          if (!state.contains(s.str())) inactive.push_back(&s);
        }
        state.set(*inactive[detail::index_below(rng, inactive.size())],
                  value(detail::index_below(rng, shape.values_per_slot)));
      }
      if (!state.empty() && detail::unit(rng) < shape.change_probability) {
        const auto& entry = *(state.begin() + static_cast<std::ptrdiff_t>(
                                                  detail::index_below(rng, state.size())));
        state.set(entry.first, value(detail::index_below(rng, shape.values_per_slot)));
      }
      if (!state.empty() && detail::unit(rng) < shape.remove_probability) {
        const SlotName victim =
            (state.begin() + static_cast<std::ptrdiff_t>(detail::index_below(rng, state.size())))
                ->first;
        state.erase(victim.str());
      }
      states.push_back(state);
    }
    corpus.dialogues.push_back(
        Dialogue::from_states("synthetic-" + std::to_string(i), std::move(states)));
  }
  return corpus;
}

/// Random walk over `turns` states: each turn every one of `slots` slots
/// independently keeps its value, takes one of `values` values, or (when
/// allowed) becomes inactive.
inline std::vector<BeliefState> random_walk_states(std::mt19937_64& rng,
                                                   std::size_t turns,
                                                   std::size_t slots,
                                                   std::size_t values,
                                                   double change_probability = 0.3,
                                                   bool allow_removal = true) {
  const auto ontology = synthetic_ontology(slots);
  std::vector<BeliefState> states;
  BeliefState state;
  for (std::size_t t = 0; t < turns; ++t) {
    for (const auto& s : ontology.slots()) {
      if (detail::unit(rng) >= change_probability) continue;
      const std::size_t pick = detail::index_below(rng, values + (allow_removal ? 1 : 0));
      if (pick == values) {
        state.erase(s.str());
      } else {
        state.set(s, SlotValue("v" + std::to_string(pick)));
      }
    }
    states.push_back(state);
  }
  return states;
}

/// Copy of `gold` where each turn's state is independently disturbed with
/// probability `noise`, then carried forward (so errors persist).
inline std::vector<BeliefState> noisy_copy(std::mt19937_64& rng,
                                           std::span<const BeliefState> gold,
                                           std::size_t slots, std::size_t values,
                                           double noise) {
  const auto ontology = synthetic_ontology(slots);
  std::vector<BeliefState> out;
  BeliefState state;
  const BeliefState empty;
  for (std::size_t t = 0; t < gold.size(); ++t) {
    for (auto& c : state_delta(t == 0 ? empty : gold[t - 1], gold[t])) {
      if (detail::unit(rng) >= noise) state.assign(c.slot, c.value);
    }
    if (detail::unit(rng) < noise) {
      const auto& s = ontology.slots()[detail::index_below(rng, slots)];
      const std::size_t pick = detail::index_below(rng, values + 1);
      if (pick == values) {
        state.erase(s.str());
      } else {
        state.set(s, SlotValue("v" + std::to_string(pick)));
      }
    }
    out.push_back(state);
  }
  return out;
}

}  // namespace dsteval
