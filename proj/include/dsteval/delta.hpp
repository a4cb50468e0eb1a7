#pragma once

// Belief-state differencing and change accounting.
//
// count_changes() walks a dialogue turn by turn, diffs the gold and the
// predicted state against their previous turn, and classifies every change
// as missed / wrong / overshot / correct. Each change is scored once, at the
// turn where it happens; a disagreement that merely persists is not counted
// again.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsteval/model.hpp"

namespace dsteval {

/// One changed slot. `value == nullopt` marks a deactivation.
struct StateChange {
  SlotName slot;
  std::optional<SlotValue> value;

  friend bool operator==(const StateChange&, const StateChange&) = default;
};

/// Changes between two consecutive states, sorted by slot, one per slot.
using StateDelta = std::vector<StateChange>;

/// Pairs of `cur` that `prev` lacks, plus a deactivation for every slot
/// active in `prev` and absent from `cur` (when `include_deactivations`).
inline StateDelta state_delta(const BeliefState& prev, const BeliefState& cur,
                              bool include_deactivations = true) {
  StateDelta out;
  auto p = prev.begin();
  auto c = cur.begin();
  while (p != prev.end() || c != cur.end()) {
    if (c == cur.end() || (p != prev.end() && p->first < c->first)) {
      if (include_deactivations) out.push_back({p->first, std::nullopt});
      ++p;
    } else if (p == prev.end() || c->first < p->first) {
      out.push_back({c->first, c->second});
      ++c;
    } else {
      if (p->second != c->second) out.push_back({c->first, c->second});
      ++p;
      ++c;
    }
  }
  return out;
}

struct ChangeCounts {
  std::size_t missed = 0;
  std::size_t wrong = 0;
  std::size_t overshot = 0;
  std::size_t correct = 0;

  /// P = C + W + O
  std::size_t predictions() const noexcept { return correct + wrong + overshot; }
  /// G = C + W + M
  std::size_t gold() const noexcept { return correct + wrong + missed; }
  bool empty() const noexcept { return predictions() == 0 && gold() == 0; }

  ChangeCounts& operator+=(const ChangeCounts& o) noexcept {
    missed += o.missed;
    wrong += o.wrong;
    overshot += o.overshot;
    correct += o.correct;
    return *this;
  }
  friend ChangeCounts operator+(ChangeCounts a, const ChangeCounts& b) noexcept {
    return a += b;
  }
  friend bool operator==(const ChangeCounts&, const ChangeCounts&) = default;
};

enum class MistakeKind { missed, wrong, overshot };

inline std::string_view mistake_kind_name(MistakeKind k) {
  switch (k) {
    case MistakeKind::missed: return "missed";
    case MistakeKind::wrong: return "wrong";
    case MistakeKind::overshot: return "overshot";
  }
  return "missed";
}

struct MistakeEvent {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  MistakeKind kind = MistakeKind::missed;
  SlotName slot;
};

struct DeltaOptions {
  // When false, removals are invisible and only value assignments count.
  bool score_deactivations = true;
};

struct ChangeTally {
  ChangeCounts counts;
  std::vector<MistakeEvent> events;  // ordered by turn
};

namespace detail {

inline void check_lengths(std::span<const BeliefState> gold,
                          std::span<const BeliefState> pred,
                          std::string_view what) {
  if (gold.size() != pred.size()) {
    throw InputError(ErrorCode::length_mismatch,
                     std::string(what) + ": gold has " +
                         std::to_string(gold.size()) + " turns, prediction has " +
                         std::to_string(pred.size()));
  }
}

inline bool in(const std::vector<std::string_view>& set, std::string_view s) {
  return std::find(set.begin(), set.end(), s) != set.end();
}

}  // namespace detail

inline ChangeTally count_changes(std::span<const BeliefState> gold,
                                 std::span<const BeliefState> pred,
                                 DeltaOptions options = {},
                                 std::string_view dialogue_id = {}) {
  detail::check_lengths(gold, pred, "count_changes");
  ChangeTally tally;
  auto& n = tally.counts;
  const BeliefState empty;

  // Slots already decided by the gold pass of the current turn.
  std::vector<std::string_view> correct_set, wrong_set, missed_set;

  auto emit = [&](std::size_t t, MistakeKind kind, const SlotName& slot) {
    tally.events.push_back({std::string(dialogue_id), t, kind, slot});
  };

  for (std::size_t t = 0; t < gold.size(); ++t) {
    const BeliefState& g_prev = t == 0 ? empty : gold[t - 1];
    const BeliefState& p_prev = t == 0 ? empty : pred[t - 1];
    const StateDelta gold_changes =
        state_delta(g_prev, gold[t], options.score_deactivations);
    const StateDelta pred_changes =
        state_delta(p_prev, pred[t], options.score_deactivations);
    correct_set.clear();
    wrong_set.clear();
    missed_set.clear();

    for (const auto& [slot, value] : gold_changes) {
      const SlotValue* predicted = pred[t].find(slot.str());
      if (value) {
        if (predicted == nullptr) {
          ++n.missed;
          missed_set.push_back(slot.str());
          emit(t, MistakeKind::missed, slot);
        } else if (*predicted != *value) {
          ++n.wrong;
          wrong_set.push_back(slot.str());
          emit(t, MistakeKind::wrong, slot);
        } else {
          ++n.correct;
          correct_set.push_back(slot.str());
        }
      } else if (predicted == nullptr) {
        // gold deactivation followed by the prediction
        ++n.correct;
        correct_set.push_back(slot.str());
      } else {
        ++n.missed;
        missed_set.push_back(slot.str());
        emit(t, MistakeKind::missed, slot);
      }
    }

    for (const auto& [slot, value] : pred_changes) {
      if (detail::in(missed_set, slot.str())) continue;
      const SlotValue* expected = gold[t].find(slot.str());
      const bool matches = value ? (expected != nullptr && *expected == *value)
                                 : expected == nullptr;
      if (value && expected == nullptr) {
        ++n.overshot;
        emit(t, MistakeKind::overshot, slot);
      } else if (!matches) {
        if (detail::in(wrong_set, slot.str())) continue;
        ++n.wrong;
        emit(t, MistakeKind::wrong, slot);
      } else if (!detail::in(correct_set, slot.str())) {
        ++n.correct;
      }
    }
  }
  return tally;
}

enum class TurnTag { clean, new_error, propagated_only };

inline std::string_view turn_tag_name(TurnTag tag) {
  switch (tag) {
    case TurnTag::clean: return "clean";
    case TurnTag::new_error: return "new_error";
    case TurnTag::propagated_only: return "propagated_only";
  }
  return "clean";
}

struct TurnErrorClass {
  TurnTag tag = TurnTag::clean;
  // Most recent new_error turn at or before this one.
  std::optional<std::size_t> last_new_error_turn;

  friend bool operator==(const TurnErrorClass&, const TurnErrorClass&) = default;
};

/// Classification from already computed mistake events (ordered by turn).
inline std::vector<TurnErrorClass> classify_turns(
    std::span<const BeliefState> gold, std::span<const BeliefState> pred,
    std::span<const MistakeEvent> events) {
  detail::check_lengths(gold, pred, "classify_turns");
  std::vector<TurnErrorClass> out(gold.size());
  std::optional<std::size_t> last;
  auto ev = events.begin();
  for (std::size_t t = 0; t < gold.size(); ++t) {
    bool new_error = false;
    while (ev != events.end() && ev->turn_index <= t) {
      new_error = new_error || ev->turn_index == t;
      ++ev;
    }
    if (new_error) {
      last = t;
      out[t].tag = TurnTag::new_error;
    } else if (gold[t] == pred[t]) {
      out[t].tag = TurnTag::clean;
    } else {
      out[t].tag = TurnTag::propagated_only;
    }
    out[t].last_new_error_turn = last;
  }
  return out;
}

inline std::vector<TurnErrorClass> classify_turn_errors(
    std::span<const BeliefState> gold, std::span<const BeliefState> pred,
    DeltaOptions options = {}) {
  const ChangeTally tally = count_changes(gold, pred, options);
  return classify_turns(gold, pred, tally.events);
}

}  // namespace dsteval
