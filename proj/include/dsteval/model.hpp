#pragma once

// Domain types shared across the toolkit: slots, belief states, dialogues,
// predictions, the ontology and metric configuration.

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dsteval {

enum class ErrorCode {
  parse,
  schema,
  duplicate_id,
  unknown_dialogue,
  length_mismatch,
  unknown_slot,
  invalid_argument,
  io,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return "E_PARSE";
    case ErrorCode::schema: return "E_SCHEMA";
    case ErrorCode::duplicate_id: return "E_DUPLICATE_ID";
    case ErrorCode::unknown_dialogue: return "E_UNKNOWN_DIALOGUE";
    case ErrorCode::length_mismatch: return "E_LENGTH_MISMATCH";
    case ErrorCode::unknown_slot: return "E_UNKNOWN_SLOT";
    case ErrorCode::invalid_argument: return "E_INVALID_ARGUMENT";
    case ErrorCode::io: return "E_IO";
  }
  return "E_UNKNOWN";
}

/// Raised for any malformed input: bad files, mismatched predictions,
/// out-of-range parameters. `diagnostics()` holds one line per problem
/// found, so a single load can report everything that is wrong at once.
class InputError : public std::runtime_error {
 public:
  InputError(ErrorCode code, const std::string& message,
             std::vector<std::string> diagnostics = {})
      : std::runtime_error(message),
        code_(code),
        diagnostics_(std::move(diagnostics)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::string>& diagnostics() const noexcept {
    return diagnostics_;
  }

 private:
  ErrorCode code_;
  std::vector<std::string> diagnostics_;
};

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace detail

/// Trim, lowercase (ASCII only) and collapse internal whitespace runs.
inline std::string canonical_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (detail::is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(detail::ascii_lower(c));
  }
  return out;
}

/// Raw strings that mean "slot not active".
class InactiveLexicon {
 public:
  InactiveLexicon() : InactiveLexicon({"none", "not mentioned", ""}) {}
  InactiveLexicon(std::initializer_list<std::string_view> words) {
    for (auto w : words) words_.push_back(canonical_text(w));
  }
  explicit InactiveLexicon(const std::vector<std::string>& words) {
    for (const auto& w : words) words_.push_back(canonical_text(w));
  }

  // `canonical` must already be passed through canonical_text.
  bool contains(std::string_view canonical) const {
    return std::find(words_.begin(), words_.end(), canonical) != words_.end();
  }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
};

inline const InactiveLexicon& default_lexicon() {
  static const InactiveLexicon lexicon;
  return lexicon;
}

class SlotValue;
std::optional<SlotValue> normalize_value(
    std::string_view raw, const InactiveLexicon& lexicon = default_lexicon());

/// A normalized, active slot value.
class SlotValue {
 public:
  /// Normalizes `raw`; throws if it is an inactive marker.
  explicit SlotValue(std::string_view raw) : text_(canonical_text(raw)) {
    if (default_lexicon().contains(text_)) {
      throw InputError(ErrorCode::invalid_argument,
                       "inactive marker '" + std::string(raw) +
                           "' cannot be stored as a slot value");
    }
  }

  const std::string& str() const noexcept { return text_; }
  friend auto operator<=>(const SlotValue&, const SlotValue&) = default;
  friend bool operator==(const SlotValue&, const SlotValue&) = default;

 private:
  struct Canonical {};
  SlotValue(Canonical, std::string text) : text_(std::move(text)) {}
  friend std::optional<SlotValue> normalize_value(std::string_view,
                                                  const InactiveLexicon&);

  std::string text_;
};

/// Returns the canonical value, or nullopt when `raw` is an inactive marker.
inline std::optional<SlotValue> normalize_value(std::string_view raw,
                                                const InactiveLexicon& lexicon) {
  std::string text = canonical_text(raw);
  if (lexicon.contains(text)) return std::nullopt;
  return SlotValue(SlotValue::Canonical{}, std::move(text));
}

/// "domain-slot", e.g. "hotel-area" or "hotel-book day".
class SlotName {
 public:
  explicit SlotName(std::string_view raw) : text_(canonical_text(raw)) {
    if (!valid(text_)) {
      throw InputError(ErrorCode::invalid_argument,
                       "invalid slot name '" + std::string(raw) +
                           "' (expected 'domain-slot')");
    }
  }

  static std::optional<SlotName> parse(std::string_view raw) {
    std::string text = canonical_text(raw);
    if (!valid(text)) return std::nullopt;
    return SlotName(Canonical{}, std::move(text));
  }

  const std::string& str() const noexcept { return text_; }
  std::string_view domain() const {
    return std::string_view(text_).substr(0, text_.find('-'));
  }

  friend auto operator<=>(const SlotName&, const SlotName&) = default;
  friend bool operator==(const SlotName&, const SlotName&) = default;

 private:
  struct Canonical {};
  SlotName(Canonical, std::string text) : text_(std::move(text)) {}

  static bool valid(std::string_view text) {
    auto sep = text.find('-');
    return sep != std::string_view::npos && sep > 0 && sep + 1 < text.size() &&
           text.find('-', sep + 1) == std::string_view::npos;
  }

  std::string text_;
};

/// Active slot-value pairs of one turn. Inactive slots are absent.
/// Entries are kept sorted by slot name so equality and diffs are linear.
class BeliefState {
 public:
  using Entry = std::pair<SlotName, SlotValue>;
  using const_iterator = std::vector<Entry>::const_iterator;

  BeliefState() = default;

  /// Builds a state from raw text pairs; inactive values are dropped.
  BeliefState(
      std::initializer_list<std::pair<std::string_view, std::string_view>> raw) {
    for (const auto& [slot, value] : raw) assign(SlotName(slot), normalize_value(value));
  }

  void set(SlotName slot, SlotValue value) {
    auto it = lower(slot.str());
    if (it != entries_.end() && it->first == slot) {
      it->second = std::move(value);
    } else {
      entries_.emplace(it, std::move(slot), std::move(value));
    }
  }

  void erase(std::string_view slot) {
    auto it = lower(slot);
    if (it != entries_.end() && it->first.str() == slot) entries_.erase(it);
  }

  /// set() for a value, erase() for nullopt.
  void assign(SlotName slot, std::optional<SlotValue> value) {
    if (value) {
      set(std::move(slot), std::move(*value));
    } else {
      erase(slot.str());
    }
  }

  const SlotValue* find(std::string_view slot) const {
    auto it = std::lower_bound(
        entries_.begin(), entries_.end(), slot,
        [](const Entry& e, std::string_view s) { return e.first.str() < s; });
    if (it != entries_.end() && it->first.str() == slot) return &it->second;
    return nullptr;
  }

  bool contains(std::string_view slot) const { return find(slot) != nullptr; }
  bool contains(std::string_view slot, const SlotValue& value) const {
    const SlotValue* v = find(slot);
    return v != nullptr && *v == value;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const_iterator begin() const noexcept { return entries_.begin(); }
  const_iterator end() const noexcept { return entries_.end(); }

  friend bool operator==(const BeliefState&, const BeliefState&) = default;

 private:
  std::vector<Entry>::iterator lower(std::string_view slot) {
    return std::lower_bound(
        entries_.begin(), entries_.end(), slot,
        [](const Entry& e, std::string_view s) { return e.first.str() < s; });
  }

  std::vector<Entry> entries_;
};

struct Turn {
  std::string system_utterance;
  std::string user_utterance;
  BeliefState gold;  // cumulative
};

/// A dialogue with its cumulative gold states. Gold states are held
/// contiguously so metrics can take them as a span.
class Dialogue {
 public:
  Dialogue(std::string id, std::vector<Turn> turns) : id_(std::move(id)) {
    if (turns.empty()) {
      throw InputError(ErrorCode::schema,
                       "dialogue '" + id_ + "' has no turns");
    }
    system_.reserve(turns.size());
    user_.reserve(turns.size());
    gold_.reserve(turns.size());
    for (auto& t : turns) {
      system_.push_back(std::move(t.system_utterance));
      user_.push_back(std::move(t.user_utterance));
      gold_.push_back(std::move(t.gold));
    }
  }

  /// Convenience for state-only dialogues (utterances empty).
  static Dialogue from_states(std::string id, std::vector<BeliefState> gold) {
    std::vector<Turn> turns;
    turns.reserve(gold.size());
    for (auto& g : gold) turns.push_back(Turn{{}, {}, std::move(g)});
    return Dialogue(std::move(id), std::move(turns));
  }

  const std::string& id() const noexcept { return id_; }
  std::size_t num_turns() const noexcept { return gold_.size(); }
  std::span<const BeliefState> gold() const noexcept { return gold_; }
  const std::string& system_utterance(std::size_t t) const { return system_.at(t); }
  const std::string& user_utterance(std::size_t t) const { return user_.at(t); }

 private:
  std::string id_;
  std::vector<std::string> system_;
  std::vector<std::string> user_;
  std::vector<BeliefState> gold_;
};

struct Prediction {
  std::string dialogue_id;
  std::vector<BeliefState> states;  // cumulative, one per turn
};

class Ontology {
 public:
  Ontology() = default;
  explicit Ontology(std::vector<SlotName> slots) : slots_(std::move(slots)) {
    std::sort(slots_.begin(), slots_.end());
    slots_.erase(std::unique(slots_.begin(), slots_.end()), slots_.end());
  }
  Ontology(std::initializer_list<std::string_view> raw) {
    for (auto s : raw) slots_.emplace_back(s);
    *this = Ontology(std::move(slots_));
  }

  bool contains(std::string_view slot) const {
    return std::binary_search(
        slots_.begin(), slots_.end(), slot,
        [](const auto& a, const auto& b) { return view(a) < view(b); });
  }
  std::size_t size() const noexcept { return slots_.size(); }
  bool empty() const noexcept { return slots_.empty(); }
  const std::vector<SlotName>& slots() const noexcept { return slots_; }

 private:
  static std::string_view view(const SlotName& s) { return s.str(); }
  static std::string_view view(std::string_view s) { return s; }

  std::vector<SlotName> slots_;
};

struct Corpus {
  std::string dataset;
  Ontology ontology;
  std::vector<Dialogue> dialogues;

  const Dialogue* find(std::string_view id) const {
    for (const auto& d : dialogues) {
      if (d.id() == id) return &d;
    }
    return nullptr;
  }
};

struct PredictionSet {
  std::string system;
  std::vector<Prediction> predictions;
};

enum class Aggregation { pooled, per_dialogue_mean, micro_turn };

inline std::string_view aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::pooled: return "pooled";
    case Aggregation::per_dialogue_mean: return "per-dialogue";
    case Aggregation::micro_turn: return "micro";
  }
  return "pooled";
}

inline std::optional<Aggregation> parse_aggregation(std::string_view name) {
  if (name == "pooled") return Aggregation::pooled;
  if (name == "per-dialogue" || name == "per-dialogue-mean") {
    return Aggregation::per_dialogue_mean;
  }
  if (name == "micro" || name == "micro-turn") return Aggregation::micro_turn;
  return std::nullopt;
}

struct MetricConfig {
  double lambda = 0.5;         // FGA decay ratio, in (0, 1]
  double value_weight = 0.9;   // GCA weight of value precision/recall
  double label_weight = 0.1;   // GCA weight of label precision/recall
  Aggregation aggregation = Aggregation::pooled;
  bool score_deactivations = true;

  void validate() const {
    std::vector<std::string> problems;
    if (!(lambda > 0.0 && lambda <= 1.0)) {
      problems.push_back("lambda must be in (0, 1], got " + std::to_string(lambda));
    }
    if (!(value_weight >= 0.0) || !(label_weight >= 0.0)) {
      problems.push_back("weights must be non-negative");
    } else if (!(value_weight + label_weight > 0.0)) {
      problems.push_back("value_weight + label_weight must be positive");
    }
    if (!problems.empty()) {
      throw InputError(ErrorCode::invalid_argument, "invalid metric config",
                       std::move(problems));
    }
  }
};

}  // namespace dsteval
