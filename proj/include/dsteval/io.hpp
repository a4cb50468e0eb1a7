#pragma once

// Corpus / prediction / config files (JSON) and report serialization.
//
// Corpus file:
//   {"format_version": 1, "dataset": "...", "encoding": "cumulative",
//    "ontology": ["hotel-area", ...],
//    "dialogues": [{"id": "...", "turns": [
//        {"system": "...", "user": "...", "gold": {"hotel-area": "north"}}]}]}
//
// Prediction file:
//   {"format_version": 1, "system": "...", "encoding": "cumulative",
//    "predictions": {"<dialogue id>": [{"hotel-area": "north"}, ...]}}
//
// With "encoding": "delta" each turn lists only changed slots; a slot set to
// an inactive marker ("none") is removed. States are expanded to cumulative
// form on load.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsteval/analysis.hpp"
#include "dsteval/metrics.hpp"
#include "dsteval/model.hpp"
#include "dsteval/synth.hpp"

namespace dsteval {

inline constexpr int kFormatVersion = 1;

struct LoadOptions {
  InactiveLexicon lexicon;
  // Replaces the corpus file's ontology when set.
  std::optional<Ontology> ontology;
};

namespace detail {

using nlohmann::json;

class Diagnostics {
 public:
  void add(ErrorCode code, const std::string& path, const std::string& message) {
    if (items_.empty()) first_ = code;
    items_.push_back(path.empty() ? message : path + ": " + message);
  }
  bool empty() const { return items_.empty(); }
  void throw_if_any(std::string_view source) {
    if (items_.empty()) return;
    std::string message =
        std::string(source) + ": " + std::to_string(items_.size()) + " problem(s) found";
    throw InputError(first_, message, std::move(items_));
  }

 private:
  ErrorCode first_ = ErrorCode::schema;
  std::vector<std::string> items_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError(ErrorCode::io, "cannot open '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline json parse_json(std::string_view text, std::string_view source) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // e.byte is 1-based and points at the offending character.
    const std::size_t offset =
        e.byte == 0 ? 0 : std::min<std::size_t>(e.byte - 1, text.size());
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i < offset; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw InputError(ErrorCode::parse,
                     std::string(source) + ":" + std::to_string(line) + ":" +
                         std::to_string(column) + ": malformed JSON",
                     {std::string(source) + ":" + std::to_string(line) + ":" +
                      std::to_string(column) + ": " + e.what()});
  }
}

inline bool check_header(const json& root, Diagnostics& diag) {
  if (!root.is_object()) {
    diag.add(ErrorCode::schema, "$", "expected an object");
    return false;
  }
  auto it = root.find("format_version");
  if (it == root.end()) {
    diag.add(ErrorCode::schema, "$.format_version", "missing");
  } else if (!it->is_number_integer() || it->get<long long>() != kFormatVersion) {
    diag.add(ErrorCode::schema, "$.format_version",
             "unsupported version (expected " + std::to_string(kFormatVersion) + ")");
  }
  return true;
}

inline std::string optional_string(const json& obj, const char* key,
                                   const std::string& path, Diagnostics& diag) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) {
    diag.add(ErrorCode::schema, path + "." + key, "expected a string");
    return {};
  }
  return it->get<std::string>();
}

// Returns true for delta encoding.
inline bool read_encoding(const json& root, Diagnostics& diag) {
  const std::string enc = optional_string(root, "encoding", "$", diag);
  if (enc.empty() || enc == "cumulative") return false;
  if (enc == "delta") return true;
  diag.add(ErrorCode::schema, "$.encoding",
           "expected 'cumulative' or 'delta', got '" + enc + "'");
  return false;
}

// Applies one turn's slot map onto `state` (delta) or replaces it.
inline void read_state(const json& obj, const std::string& path, bool delta,
                       const Ontology& ontology, const LoadOptions& options,
                       BeliefState& state, Diagnostics& diag) {
  if (!obj.is_object()) {
    diag.add(ErrorCode::schema, path, "expected an object of slot -> value");
    return;
  }
  if (!delta) state = BeliefState();
  for (const auto& [raw_slot, raw_value] : obj.items()) {
    const std::string slot_path = path + "[\"" + raw_slot + "\"]";
    auto slot = SlotName::parse(raw_slot);
    if (!slot) {
      diag.add(ErrorCode::schema, slot_path, "invalid slot name (expected 'domain-slot')");
      continue;
    }
    if (!ontology.contains(slot->str())) {
      diag.add(ErrorCode::unknown_slot, slot_path, "slot not in ontology");
      continue;
    }
    if (raw_value.is_null()) {
      state.erase(slot->str());
    } else if (raw_value.is_string()) {
      state.assign(*slot, normalize_value(raw_value.get<std::string>(), options.lexicon));
    } else {
      diag.add(ErrorCode::schema, slot_path, "expected a string value");
    }
  }
}

inline Ontology read_ontology(const json& list, const std::string& path,
                              Diagnostics& diag) {
  std::vector<SlotName> slots;
  if (!list.is_array()) {
    diag.add(ErrorCode::schema, path, "expected an array of slot names");
    return {};
  }
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!list[i].is_string()) {
      diag.add(ErrorCode::schema, p, "expected a string");
      continue;
    }
    auto slot = SlotName::parse(list[i].get<std::string>());
    if (!slot) {
      diag.add(ErrorCode::schema, p, "invalid slot name (expected 'domain-slot')");
      continue;
    }
    slots.push_back(std::move(*slot));
  }
  if (slots.empty() && diag.empty()) diag.add(ErrorCode::schema, path, "ontology is empty");
  return Ontology(std::move(slots));
}

}  // namespace detail

/// Ontology file: either a JSON array of slot names or {"ontology": [...]}.
inline Ontology parse_ontology(std::string_view text,
                               std::string_view source = "<ontology>") {
  const auto root = detail::parse_json(text, source);
  detail::Diagnostics diag;
  Ontology out;
  if (root.is_array()) {
    out = detail::read_ontology(root, "$", diag);
  } else if (root.is_object() && root.contains("ontology")) {
    out = detail::read_ontology(root["ontology"], "$.ontology", diag);
  } else {
    diag.add(ErrorCode::schema, "$", "expected an array or an object with 'ontology'");
  }
  diag.throw_if_any(source);
  return out;
}

inline Ontology load_ontology(const std::filesystem::path& path) {
  return parse_ontology(detail::read_file(path), path.string());
}

inline Corpus parse_corpus(std::string_view text, std::string_view source = "<corpus>",
                           const LoadOptions& options = {}) {
  using detail::json;
  const json root = detail::parse_json(text, source);
  detail::Diagnostics diag;
  if (!detail::check_header(root, diag)) diag.throw_if_any(source);

  Corpus corpus;
  corpus.dataset = detail::optional_string(root, "dataset", "$", diag);
  const bool delta = detail::read_encoding(root, diag);

  if (options.ontology) {
    corpus.ontology = *options.ontology;
  } else if (auto it = root.find("ontology"); it != root.end()) {
    corpus.ontology = detail::read_ontology(*it, "$.ontology", diag);
  } else {
    diag.add(ErrorCode::schema, "$.ontology", "missing (and no ontology file given)");
  }

  auto dialogues = root.find("dialogues");
  if (dialogues == root.end() || !dialogues->is_array()) {
    diag.add(ErrorCode::schema, "$.dialogues", "expected an array");
    diag.throw_if_any(source);
  }

  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < dialogues->size(); ++i) {
    const json& d = (*dialogues)[i];
    const std::string path = "$.dialogues[" + std::to_string(i) + "]";
    if (!d.is_object()) {
      diag.add(ErrorCode::schema, path, "expected an object");
      continue;
    }
    auto id_it = d.find("id");
    if (id_it == d.end() || !id_it->is_string() || id_it->get<std::string>().empty()) {
      diag.add(ErrorCode::schema, path + ".id", "expected a non-empty string");
      continue;
    }
    std::string id = id_it->get<std::string>();
    if (!seen.insert(id).second) {
      diag.add(ErrorCode::duplicate_id, path + ".id", "duplicate dialogue id '" + id + "'");
      continue;
    }
    auto turns_it = d.find("turns");
    if (turns_it == d.end() || !turns_it->is_array() || turns_it->empty()) {
      diag.add(ErrorCode::schema, path + ".turns",
               "dialogue '" + id + "' needs a non-empty array of turns");
      continue;
    }
    std::vector<Turn> turns;
    BeliefState state;
    for (std::size_t t = 0; t < turns_it->size(); ++t) {
      const json& turn = (*turns_it)[t];
      const std::string tpath = path + ".turns[" + std::to_string(t) + "]";
      if (!turn.is_object()) {
        diag.add(ErrorCode::schema, tpath, "expected an object");
        continue;
      }
      Turn out;
      out.system_utterance = detail::optional_string(turn, "system", tpath, diag);
      out.user_utterance = detail::optional_string(turn, "user", tpath, diag);
      auto gold = turn.find("gold");
      if (gold == turn.end()) {
        diag.add(ErrorCode::schema, tpath + ".gold", "missing");
        continue;
      }
      detail::read_state(*gold, tpath + ".gold", delta, corpus.ontology, options,
                         state, diag);
      out.gold = state;
      turns.push_back(std::move(out));
    }
    if (diag.empty()) corpus.dialogues.emplace_back(std::move(id), std::move(turns));
  }
  diag.throw_if_any(source);
  return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& path,
                          const LoadOptions& options = {}) {
  return parse_corpus(detail::read_file(path), path.string(), options);
}

inline PredictionSet parse_predictions(std::string_view text, const Corpus& corpus,
                                       std::string_view source = "<predictions>",
                                       const LoadOptions& options = {}) {
  using detail::json;
  const json root = detail::parse_json(text, source);
  detail::Diagnostics diag;
  if (!detail::check_header(root, diag)) diag.throw_if_any(source);

  PredictionSet out;
  out.system = detail::optional_string(root, "system", "$", diag);
  const bool delta = detail::read_encoding(root, diag);
  auto preds = root.find("predictions");
  if (preds == root.end() || !preds->is_object()) {
    diag.add(ErrorCode::schema, "$.predictions", "expected an object of id -> states");
    diag.throw_if_any(source);
  }

  for (const auto& [id, states] : preds->items()) {
    const std::string path = "$.predictions[\"" + id + "\"]";
    const Dialogue* d = corpus.find(id);
    if (d == nullptr) {
      diag.add(ErrorCode::unknown_dialogue, path, "unknown dialogue '" + id + "'");
      continue;
    }
    if (!states.is_array()) {
      diag.add(ErrorCode::schema, path, "expected an array of states");
      continue;
    }
    if (states.size() != d->num_turns()) {
      diag.add(ErrorCode::length_mismatch, path,
               "dialogue '" + id + "' has " + std::to_string(d->num_turns()) +
                   " turns but " + std::to_string(states.size()) + " states were given");
      continue;
    }
    Prediction p;
    p.dialogue_id = id;
    p.states.reserve(states.size());
    BeliefState state;
    for (std::size_t t = 0; t < states.size(); ++t) {
      detail::read_state(states[t],
                         path + "[" + std::to_string(t) + "] (dialogue '" + id +
                             "', turn " + std::to_string(t) + ")",
                         delta, corpus.ontology, options, state, diag);
      p.states.push_back(state);
    }
    out.predictions.push_back(std::move(p));
  }
  diag.throw_if_any(source);
  // Corpus order keeps reports stable regardless of file key order.
  std::map<std::string_view, std::size_t> rank;
  for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) {
    rank.emplace(corpus.dialogues[i].id(), i);
  }
  std::sort(out.predictions.begin(), out.predictions.end(),
            [&](const Prediction& a, const Prediction& b) {
              return rank[a.dialogue_id] < rank[b.dialogue_id];
            });
  return out;
}

inline PredictionSet load_predictions(const std::filesystem::path& path,
                                      const Corpus& corpus,
                                      const LoadOptions& options = {}) {
  return parse_predictions(detail::read_file(path), corpus, path.string(), options);
}

namespace detail {

inline json state_json(const BeliefState& s) {
  json obj = json::object();
  for (const auto& [slot, value] : s) obj[slot.str()] = value.str();
  return obj;
}

}  // namespace detail

inline std::string write_corpus(const Corpus& corpus) {
  using detail::json;
  json root;
  root["format_version"] = kFormatVersion;
  root["dataset"] = corpus.dataset;
  root["encoding"] = "cumulative";
  json slots = json::array();
  for (const auto& s : corpus.ontology.slots()) slots.push_back(s.str());
  root["ontology"] = std::move(slots);
  json dialogues = json::array();
  for (const auto& d : corpus.dialogues) {
    json turns = json::array();
    for (std::size_t t = 0; t < d.num_turns(); ++t) {
      turns.push_back({{"system", d.system_utterance(t)},
                       {"user", d.user_utterance(t)},
                       {"gold", detail::state_json(d.gold()[t])}});
    }
    dialogues.push_back({{"id", d.id()}, {"turns", std::move(turns)}});
  }
  root["dialogues"] = std::move(dialogues);
  return root.dump(2) + "\n";
}

/// Cumulative prediction file; `spec` is echoed under "perturbation".
inline std::string write_predictions(const PredictionSet& set,
                                     const std::optional<PerturbationSpec>& spec = {}) {
  using detail::json;
  json root;
  root["format_version"] = kFormatVersion;
  root["system"] = set.system;
  root["encoding"] = "cumulative";
  json preds = json::object();
  for (const auto& p : set.predictions) {
    json states = json::array();
    for (const auto& s : p.states) states.push_back(detail::state_json(s));
    preds[p.dialogue_id] = std::move(states);
  }
  root["predictions"] = std::move(preds);
  if (spec) {
    root["perturbation"] = {
        {"seed", spec->seed},
        {"error_rate", spec->error_rate},
        {"kind_mix",
         {spec->kind_mix.missed, spec->kind_mix.wrong, spec->kind_mix.overshot}},
        {"tail_bias", spec->tail_bias},
        {"concentration", spec->concentration}};
  }
  return root.dump(2) + "\n";
}

struct ConfigFile {
  MetricConfig metrics;
  PerturbationSpec perturbation;
  std::optional<InactiveLexicon> lexicon;
};

/// {"metrics": {"lambda", "value_weight", "label_weight", "aggregation",
///  "score_deactivations"}, "perturb": {"error_rate", "kind_mix": [m, w, o],
///  "tail_bias", "concentration", "seed"}, "inactive_values": [...]}
/// Missing keys keep their defaults.
inline ConfigFile parse_config(std::string_view text, std::string_view source = "<config>") {
  using detail::json;
  const json root = detail::parse_json(text, source);
  detail::Diagnostics diag;
  ConfigFile cfg;
  if (!root.is_object()) {
    diag.add(ErrorCode::schema, "$", "expected an object");
    diag.throw_if_any(source);
  }
  auto number = [&](const json& obj, const char* key, const std::string& path,
                    double& target) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_number()) {
      diag.add(ErrorCode::schema, path + "." + key, "expected a number");
      return;
    }
    target = it->get<double>();
  };
  if (auto m = root.find("metrics"); m != root.end() && m->is_object()) {
    number(*m, "lambda", "$.metrics", cfg.metrics.lambda);
    number(*m, "value_weight", "$.metrics", cfg.metrics.value_weight);
    number(*m, "label_weight", "$.metrics", cfg.metrics.label_weight);
    if (auto a = m->find("aggregation"); a != m->end()) {
      auto parsed = a->is_string() ? parse_aggregation(a->get<std::string>())
                                   : std::nullopt;
      if (parsed) {
        cfg.metrics.aggregation = *parsed;
      } else {
        diag.add(ErrorCode::schema, "$.metrics.aggregation",
                 "expected pooled, per-dialogue or micro");
      }
    }
    if (auto s = m->find("score_deactivations"); s != m->end()) {
      if (s->is_boolean()) {
        cfg.metrics.score_deactivations = s->get<bool>();
      } else {
        diag.add(ErrorCode::schema, "$.metrics.score_deactivations", "expected a boolean");
      }
    }
  }
  if (auto p = root.find("perturb"); p != root.end() && p->is_object()) {
    number(*p, "error_rate", "$.perturb", cfg.perturbation.error_rate);
    number(*p, "tail_bias", "$.perturb", cfg.perturbation.tail_bias);
    number(*p, "concentration", "$.perturb", cfg.perturbation.concentration);
    if (auto k = p->find("kind_mix"); k != p->end()) {
      if (k->is_array() && k->size() == 3 && (*k)[0].is_number() &&
          (*k)[1].is_number() && (*k)[2].is_number()) {
        cfg.perturbation.kind_mix = {(*k)[0].get<double>(), (*k)[1].get<double>(),
                                     (*k)[2].get<double>()};
      } else {
        diag.add(ErrorCode::schema, "$.perturb.kind_mix", "expected [missed, wrong, overshot]");
      }
    }
    if (auto s = p->find("seed"); s != p->end()) {
      if (s->is_number_unsigned()) {
        cfg.perturbation.seed = s->get<std::uint64_t>();
      } else {
        diag.add(ErrorCode::schema, "$.perturb.seed", "expected a non-negative integer");
      }
    }
  }
  if (auto l = root.find("inactive_values"); l != root.end()) {
    if (l->is_array() && std::all_of(l->begin(), l->end(),
                                     [](const json& v) { return v.is_string(); })) {
      cfg.lexicon = InactiveLexicon(l->get<std::vector<std::string>>());
    } else {
      diag.add(ErrorCode::schema, "$.inactive_values", "expected an array of strings");
    }
  }
  diag.throw_if_any(source);
  return cfg;
}

inline ConfigFile load_config(const std::filesystem::path& path) {
  return parse_config(detail::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { json, csv, md };

inline std::optional<ReportFormat> parse_report_format(std::string_view name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  if (name == "md" || name == "markdown") return ReportFormat::md;
  return std::nullopt;
}

namespace detail {

/// Fixed four decimals; never prints "-0.0000".
inline std::string fixed4(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", x);
  std::string s(buf);
  if (s == "-0.0000") s = "0.0000";
  return s;
}

inline std::string score_text(const std::optional<double>& v, bool percent,
                              std::string_view undefined) {
  if (!v) return std::string(undefined);
  return fixed4(percent ? *v * 100.0 : *v);
}

inline std::string quote(std::string_view s) { return json(std::string(s)).dump(); }

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string md_cell(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

inline void json_scores(std::ostringstream& os, const MetricScores& scores,
                        bool percent) {
  bool first = true;
  for (Metric m : kAllMetrics) {
    os << (first ? "" : ", ") << '"' << metric_name(m)
       << "\": " << score_text(at(scores, m), percent, "null");
    first = false;
  }
}

inline void json_counts(std::ostringstream& os, const ChangeCounts& c) {
  os << "\"missed\": " << c.missed << ", \"wrong\": " << c.wrong
     << ", \"overshot\": " << c.overshot << ", \"correct\": " << c.correct
     << ", \"predictions\": " << c.predictions() << ", \"gold\": " << c.gold();
}

inline std::string report_json(const MetricReport& r, bool percent) {
  std::ostringstream os;
  const auto& c = r.config;
  const auto& i = r.intermediates;
  os << "{\n";
  os << "  \"format_version\": " << kFormatVersion << ",\n";
  os << "  \"dataset\": " << quote(r.dataset) << ",\n";
  os << "  \"system\": " << quote(r.system) << ",\n";
  os << "  \"scale\": " << (percent ? "\"percent\"" : "\"unit\"") << ",\n";
  os << "  \"config\": {\"lambda\": " << fixed4(c.lambda)
     << ", \"value_weight\": " << fixed4(c.value_weight)
     << ", \"label_weight\": " << fixed4(c.label_weight) << ", \"aggregation\": \""
     << aggregation_name(c.aggregation) << "\", \"score_deactivations\": "
     << (c.score_deactivations ? "true" : "false") << "},\n";
  os << "  \"ontology_size\": " << r.ontology_size << ",\n";
  os << "  \"dialogue_count\": " << r.dialogues.size() << ",\n";
  os << "  \"turn_count\": " << r.total_turns << ",\n";
  os << "  \"corpus\": {";
  json_scores(os, r.corpus, percent);
  os << "},\n";
  os << "  \"intermediates\": {\"value_precision\": "
     << score_text(i.value_precision, percent, "null")
     << ", \"value_recall\": " << score_text(i.value_recall, percent, "null")
     << ", \"label_precision\": " << score_text(i.label_precision, percent, "null")
     << ", \"label_recall\": " << score_text(i.label_recall, percent, "null") << "},\n";
  os << "  \"counts\": {";
  json_counts(os, r.counts);
  os << "},\n";
  os << "  \"dialogues\": [";
  for (std::size_t k = 0; k < r.dialogues.size(); ++k) {
    const auto& d = r.dialogues[k];
    os << (k == 0 ? "\n" : ",\n") << "    {\"id\": " << quote(d.id)
       << ", \"turns\": " << d.turns << ", ";
    json_scores(os, d.scores, percent);
    os << ", ";
    json_counts(os, d.counts);
    os << "}";
  }
  os << (r.dialogues.empty() ? "]\n" : "\n  ]\n");
  os << "}\n";
  return os.str();
}

inline std::string report_csv(const MetricReport& r, bool percent) {
  std::ostringstream os;
  os << "dialogue_id,turns";
  for (Metric m : kAllMetrics) os << ',' << metric_name(m);
  os << ",missed,wrong,overshot,correct\n";
  auto row = [&](std::string_view id, std::size_t turns, const MetricScores& s,
                 const ChangeCounts& c) {
    os << csv_field(id) << ',' << turns;
    for (Metric m : kAllMetrics) os << ',' << score_text(at(s, m), percent, "undefined");
    os << ',' << c.missed << ',' << c.wrong << ',' << c.overshot << ',' << c.correct
       << '\n';
  };
  for (const auto& d : r.dialogues) row(d.id, d.turns, d.scores, d.counts);
  row("#corpus", r.total_turns, r.corpus, r.counts);
  return os.str();
}

inline std::string report_md(const MetricReport& r, bool percent) {
  std::ostringstream os;
  const auto& c = r.config;
  os << "# Evaluation report\n\n";
  os << "- dataset: " << (r.dataset.empty() ? "(unnamed)" : r.dataset) << "\n";
  os << "- system: " << (r.system.empty() ? "(unnamed)" : r.system) << "\n";
  os << "- dialogues: " << r.dialogues.size() << ", turns: " << r.total_turns
     << ", ontology slots: " << r.ontology_size << "\n";
  os << "- lambda " << fixed4(c.lambda) << ", value weight " << fixed4(c.value_weight)
     << ", label weight " << fixed4(c.label_weight) << ", aggregation "
     << aggregation_name(c.aggregation) << ", deactivations "
     << (c.score_deactivations ? "scored" : "ignored") << "\n";
  if (percent) os << "- scores shown as percentages\n";
  os << "\n## Corpus\n\n|";
  for (Metric m : kAllMetrics) os << ' ' << metric_name(m) << " |";
  os << "\n|";
  for (std::size_t k = 0; k < kAllMetrics.size(); ++k) os << "---:|";
  os << "\n|";
  for (Metric m : kAllMetrics) os << ' ' << score_text(at(r.corpus, m), percent, "n/a") << " |";
  const auto& i = r.intermediates;
  os << "\n\n## Changes\n\n"
     << "| missed | wrong | overshot | correct | V_P | V_R | L_P | L_R |\n"
     << "|---:|---:|---:|---:|---:|---:|---:|---:|\n"
     << "| " << r.counts.missed << " | " << r.counts.wrong << " | " << r.counts.overshot
     << " | " << r.counts.correct << " | " << score_text(i.value_precision, percent, "")
     << " | " << score_text(i.value_recall, percent, "") << " | "
     << score_text(i.label_precision, percent, "") << " | "
     << score_text(i.label_recall, percent, "") << " |\n";
  os << "\n## Dialogues\n\n| id | turns |";
  for (Metric m : kAllMetrics) os << ' ' << metric_name(m) << " |";
  os << " M | W | O | C |\n|---|---:|";
  for (std::size_t k = 0; k < kAllMetrics.size() + 4; ++k) os << "---:|";
  os << "\n";
  for (const auto& d : r.dialogues) {
    os << "| " << md_cell(d.id) << " | " << d.turns << " |";
    for (Metric m : kAllMetrics) os << ' ' << score_text(at(d.scores, m), percent, "n/a") << " |";
    os << ' ' << d.counts.missed << " | " << d.counts.wrong << " | " << d.counts.overshot
       << " | " << d.counts.correct << " |\n";
  }
  return os.str();
}

}  // namespace detail

/// Serializes a report. Key order and number formatting are fixed, so equal
/// reports serialize to identical bytes.
inline std::string format_report(const MetricReport& report, ReportFormat format,
                                 bool percent = false) {
  switch (format) {
    case ReportFormat::json: return detail::report_json(report, percent);
    case ReportFormat::csv: return detail::report_csv(report, percent);
    case ReportFormat::md: return detail::report_md(report, percent);
  }
  return {};
}

struct ParsedReport {
  MetricScores corpus;
  std::map<std::string, MetricScores> dialogues;
  ChangeCounts counts;
  bool percent = false;
};

/// Reads back the scores of a JSON report.
inline ParsedReport parse_report(std::string_view text, std::string_view source = "<report>") {
  using detail::json;
  const json root = detail::parse_json(text, source);
  detail::Diagnostics diag;
  ParsedReport out;
  auto scores = [&](const json& obj, const std::string& path) {
    MetricScores s;
    for (Metric m : kAllMetrics) {
      auto it = obj.find(std::string(metric_name(m)));
      if (it == obj.end()) {
        diag.add(ErrorCode::schema, path + "." + std::string(metric_name(m)), "missing");
      } else if (it->is_number()) {
        at(s, m) = it->get<double>();
      } else if (!it->is_null()) {
        diag.add(ErrorCode::schema, path + "." + std::string(metric_name(m)),
                 "expected a number or null");
      }
    }
    return s;
  };
  if (!root.is_object() || !root.contains("corpus") || !root.contains("dialogues")) {
    diag.add(ErrorCode::schema, "$", "not a report");
    diag.throw_if_any(source);
  }
  out.percent = root.value("scale", std::string("unit")) == "percent";
  out.corpus = scores(root["corpus"], "$.corpus");
  if (auto c = root.find("counts"); c != root.end() && c->is_object()) {
    out.counts.missed = c->value("missed", std::size_t{0});
    out.counts.wrong = c->value("wrong", std::size_t{0});
    out.counts.overshot = c->value("overshot", std::size_t{0});
    out.counts.correct = c->value("correct", std::size_t{0});
  }
  for (std::size_t k = 0; k < root["dialogues"].size(); ++k) {
    const json& d = root["dialogues"][k];
    const std::string path = "$.dialogues[" + std::to_string(k) + "]";
    if (!d.is_object() || !d.contains("id") || !d["id"].is_string()) {
      diag.add(ErrorCode::schema, path, "expected an object with an id");
      continue;
    }
    out.dialogues[d["id"].get<std::string>()] = scores(d, path);
  }
  diag.throw_if_any(source);
  return out;
}

// ---------------------------------------------------------------------------
// Disagreement and trait-analysis output

inline std::string format_disagreements(std::span<const Disagreement> rows,
                                        std::string_view label_a,
                                        std::string_view label_b, ReportFormat format,
                                        bool percent = false) {
  std::ostringstream os;
  auto num = [&](double v) { return detail::fixed4(percent ? v * 100.0 : v); };
  switch (format) {
    case ReportFormat::json:
      os << "{\n  \"a\": " << detail::quote(label_a) << ",\n  \"b\": "
         << detail::quote(label_b) << ",\n  \"ranking\": [";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        os << (i == 0 ? "\n" : ",\n") << "    {\"rank\": " << i + 1
           << ", \"id\": " << detail::quote(r.dialogue_id) << ", \"a\": " << num(r.score_a)
           << ", \"b\": " << num(r.score_b) << ", \"gap\": " << num(r.gap()) << "}";
      }
      os << (rows.empty() ? "]\n}\n" : "\n  ]\n}\n");
      break;
    case ReportFormat::csv:
      os << "rank,dialogue_id," << detail::csv_field(label_a) << ','
         << detail::csv_field(label_b) << ",gap\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        os << i + 1 << ',' << detail::csv_field(r.dialogue_id) << ',' << num(r.score_a)
           << ',' << num(r.score_b) << ',' << num(r.gap()) << '\n';
      }
      break;
    case ReportFormat::md:
      os << "| rank | id | " << detail::md_cell(label_a) << " | "
         << detail::md_cell(label_b) << " | gap |\n|---:|---|---:|---:|---:|\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        os << "| " << i + 1 << " | " << detail::md_cell(r.dialogue_id) << " | "
           << num(r.score_a) << " | " << num(r.score_b) << " | " << num(r.gap()) << " |\n";
      }
      break;
  }
  return os.str();
}

struct TraitBinning {
  Trait trait = Trait::tail_orientation;
  Metric metric = Metric::fga;
  std::vector<Bin> bins;  // over the mean-normalized trait
};

struct TraitAnalysis {
  std::vector<Trait> traits;
  std::vector<TraitRow> rows;
  std::vector<TraitCorrelation> correlations;
  std::vector<TraitComparison> comparisons;  // FGA vs GCA per trait
  std::vector<TraitBinning> binnings;
};

/// Correlations of every metric with each trait, the FGA-vs-GCA comparison,
/// and binned FGA/GCA profiles over the mean-normalized trait.
inline TraitAnalysis analyze_traits(std::vector<TraitRow> rows, std::vector<Trait> traits,
                                    bool correlate, std::size_t bins = 10,
                                    double confidence = 0.95) {
  TraitAnalysis out;
  out.traits = std::move(traits);
  out.rows = std::move(rows);
  if (!correlate) return out;
  for (Trait t : out.traits) {
    for (Metric m : kAllMetrics) out.correlations.push_back(trait_correlation(out.rows, t, m));
    try {
      out.comparisons.push_back(
          compare_trait_correlations(out.rows, t, Metric::fga, Metric::gca, confidence));
    } catch (const InputError&) {
      // too few or constant samples: nothing to compare
    }
    std::vector<double> xs, fga_ys, gca_ys;
    detail::paired_series(out.rows, t, Metric::fga, Metric::gca, xs, fga_ys, gca_ys);
    if (xs.size() >= 2 && *std::max_element(xs.begin(), xs.end()) >
                              *std::min_element(xs.begin(), xs.end())) {
      const auto normalized = mean_normalize(xs);
      out.binnings.push_back({t, Metric::fga, binned_profile(normalized, fga_ys, bins)});
      out.binnings.push_back({t, Metric::gca, binned_profile(normalized, gca_ys, bins)});
    }
  }
  return out;
}

inline std::string format_analysis(const TraitAnalysis& a, ReportFormat format) {
  std::ostringstream os;
  auto opt = [](const std::optional<double>& v, std::string_view undef) {
    return v ? detail::fixed4(*v) : std::string(undef);
  };
  if (format == ReportFormat::csv) {
    os << "dialogue_id,mistakes";
    for (Trait t : a.traits) os << ',' << trait_name(t);
    for (Metric m : kAllMetrics) os << ',' << metric_name(m);
    os << '\n';
    for (const auto& r : a.rows) {
      os << detail::csv_field(r.traits.dialogue_id) << ',' << r.traits.mistakes;
      for (Trait t : a.traits) os << ',' << opt(r.traits.get(t), "undefined");
      for (Metric m : kAllMetrics) os << ',' << opt(at(r.scores, m), "undefined");
      os << '\n';
    }
    return os.str();
  }
  if (format == ReportFormat::json) {
    os << "{\n  \"traits\": [";
    for (std::size_t i = 0; i < a.traits.size(); ++i) {
      os << (i ? ", " : "") << '"' << trait_name(a.traits[i]) << '"';
    }
    os << "],\n  \"dialogues\": [";
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      const auto& r = a.rows[i];
      os << (i ? ",\n" : "\n") << "    {\"id\": " << detail::quote(r.traits.dialogue_id)
         << ", \"mistakes\": " << r.traits.mistakes;
      for (Trait t : a.traits) os << ", \"" << trait_name(t) << "\": " << opt(r.traits.get(t), "null");
      for (Metric m : kAllMetrics) {
        os << ", \"" << metric_name(m) << "\": " << opt(at(r.scores, m), "null");
      }
      os << "}";
    }
    os << (a.rows.empty() ? "],\n" : "\n  ],\n");
    os << "  \"correlations\": [";
    for (std::size_t i = 0; i < a.correlations.size(); ++i) {
      const auto& c = a.correlations[i];
      os << (i ? ",\n" : "\n") << "    {\"trait\": \"" << trait_name(c.trait)
         << "\", \"metric\": \"" << metric_name(c.metric) << "\", \"r\": " << opt(c.r, "null")
         << ", \"samples\": " << c.samples << "}";
    }
    os << (a.correlations.empty() ? "],\n" : "\n  ],\n");
    os << "  \"comparisons\": [";
    for (std::size_t i = 0; i < a.comparisons.size(); ++i) {
      const auto& c = a.comparisons[i];
      os << (i ? ",\n" : "\n") << "    {\"trait\": \"" << trait_name(c.trait) << "\", \"a\": \""
         << metric_name(c.metric_a) << "\", \"b\": \"" << metric_name(c.metric_b)
         << "\", \"r_a\": " << detail::fixed4(c.r_a) << ", \"r_b\": " << detail::fixed4(c.r_b)
         << ", \"r_ab\": " << detail::fixed4(c.r_ab) << ", \"samples\": " << c.samples
         << ", \"confidence\": " << detail::fixed4(c.test.confidence)
         << ", \"lower\": " << detail::fixed4(c.test.lower)
         << ", \"upper\": " << detail::fixed4(c.test.upper)
         << ", \"significant\": " << (c.test.significant ? "true" : "false") << "}";
    }
    os << (a.comparisons.empty() ? "],\n" : "\n  ],\n");
    os << "  \"bins\": [";
    for (std::size_t i = 0; i < a.binnings.size(); ++i) {
      const auto& b = a.binnings[i];
      os << (i ? ",\n" : "\n") << "    {\"trait\": \"" << trait_name(b.trait)
         << "\", \"metric\": \"" << metric_name(b.metric) << "\", \"bins\": [";
      for (std::size_t j = 0; j < b.bins.size(); ++j) {
        const auto& bin = b.bins[j];
        os << (j ? ", " : "") << "{\"lower\": " << detail::fixed4(bin.lower)
           << ", \"upper\": " << detail::fixed4(bin.upper) << ", \"count\": " << bin.count
           << ", \"mean\": " << opt(bin.mean, "null") << "}";
      }
      os << "]}";
    }
    os << (a.binnings.empty() ? "]\n" : "\n  ]\n");
    os << "}\n";
    return os.str();
  }

  os << "# Trait analysis\n\n| id | mistakes |";
  for (Trait t : a.traits) os << ' ' << trait_name(t) << " |";
  os << " fga | gca |\n|---|---:|";
  for (std::size_t i = 0; i < a.traits.size() + 2; ++i) os << "---:|";
  os << '\n';
  for (const auto& r : a.rows) {
    os << "| " << detail::md_cell(r.traits.dialogue_id) << " | " << r.traits.mistakes << " |";
    for (Trait t : a.traits) os << ' ' << opt(r.traits.get(t), "n/a") << " |";
    os << ' ' << opt(at(r.scores, Metric::fga), "n/a") << " | "
       << opt(at(r.scores, Metric::gca), "n/a") << " |\n";
  }
  if (!a.correlations.empty()) {
    os << "\n## Pearson correlation with traits\n\n| trait |";
    for (Metric m : kAllMetrics) os << ' ' << metric_name(m) << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < kAllMetrics.size(); ++i) os << "---:|";
    for (Trait t : a.traits) {
      os << "\n| " << trait_name(t) << " |";
      for (const auto& c : a.correlations) {
        if (c.trait == t) os << ' ' << opt(c.r, "n/a") << " |";
      }
    }
    os << '\n';
  }
  if (!a.comparisons.empty()) {
    os << "\n## FGA vs GCA correlation difference\n\n"
          "| trait | r(fga) | r(gca) | difference | interval | significant |\n"
          "|---|---:|---:|---:|---|---|\n";
    for (const auto& c : a.comparisons) {
      os << "| " << trait_name(c.trait) << " | " << detail::fixed4(c.r_a) << " | "
         << detail::fixed4(c.r_b) << " | " << detail::fixed4(c.test.difference) << " | ["
         << detail::fixed4(c.test.lower) << ", " << detail::fixed4(c.test.upper) << "] | "
         << (c.test.significant ? "yes" : "no") << " |\n";
    }
  }
  return os.str();
}

}  // namespace dsteval
