#pragma once

// Command-line front end: evaluate, compare, analyze, perturb, validate.
// Exit codes: 0 success, 1 invalid input files, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsteval/analysis.hpp"
#include "dsteval/io.hpp"
#include "dsteval/metrics.hpp"
#include "dsteval/synth.hpp"

namespace dsteval {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalidInput = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kConfigEnvVar = "DSTEVAL_CONFIG";

namespace detail {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string gold;
  std::string ontology;
  std::string config;
  std::string format = "json";
  std::string out;
  bool percent = false;
};

struct MetricFlags {
  double lambda = 0.5;
  double value_weight = 0.9;
  double label_weight = 0.1;
  std::string aggregate = "pooled";
  bool ignore_deactivations = false;
  CLI::Option* lambda_opt = nullptr;
  CLI::Option* value_opt = nullptr;
  CLI::Option* label_opt = nullptr;
  CLI::Option* aggregate_opt = nullptr;
};

inline void add_metric_flags(CLI::App& cmd, MetricFlags& f) {
  f.lambda_opt = cmd.add_option("--lambda", f.lambda, "FGA decay ratio in (0, 1]");
  f.value_opt = cmd.add_option("--value-weight", f.value_weight,
                               "GCA weight of value precision/recall");
  f.label_opt = cmd.add_option("--label-weight", f.label_weight,
                               "GCA weight of label precision/recall");
  f.aggregate_opt = cmd.add_option("--aggregate", f.aggregate,
                                   "pooled | per-dialogue | micro");
  cmd.add_flag("--ignore-deactivations", f.ignore_deactivations,
               "do not score slot removals as changes");
}

// defaults <- $DSTEVAL_CONFIG <- --config <- flags
inline ConfigFile base_config(const std::string& config_path) {
  ConfigFile cfg;
  if (!config_path.empty()) return load_config(config_path);
  if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') {
    return load_config(env);
  }
  return cfg;
}

inline MetricConfig resolve_metrics(const ConfigFile& base, const MetricFlags& f) {
  MetricConfig c = base.metrics;
  if (f.lambda_opt->count()) c.lambda = f.lambda;
  if (f.value_opt->count()) c.value_weight = f.value_weight;
  if (f.label_opt->count()) c.label_weight = f.label_weight;
  if (f.aggregate_opt->count()) {
    auto a = parse_aggregation(f.aggregate);
    if (!a) throw UsageError("--aggregate must be pooled, per-dialogue or micro");
    c.aggregation = *a;
  }
  if (f.ignore_deactivations) c.score_deactivations = false;
  try {
    c.validate();
  } catch (const InputError& e) {
    std::string msg = e.what();
    for (const auto& d : e.diagnostics()) msg += "; " + d;
    throw UsageError(msg);
  }
  return c;
}

inline ReportFormat resolve_format(const std::string& name) {
  auto f = parse_report_format(name);
  if (!f) throw UsageError("--format must be json, csv or md");
  return *f;
}

inline LoadOptions load_options(const CommonOptions& o, const ConfigFile& cfg) {
  LoadOptions opts;
  if (cfg.lexicon) opts.lexicon = *cfg.lexicon;
  if (!o.ontology.empty()) opts.ontology = load_ontology(o.ontology);
  return opts;
}

inline void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw InputError(ErrorCode::io, "cannot write '" + path + "'");
  file << text;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(canonical_text(item));
  return out;
}

}  // namespace detail

/// Runs one command. `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out,
                   std::ostream& err) {
  using namespace detail;
  CLI::App app{"Dialogue state tracking evaluation toolkit", "dsteval"};
  app.require_subcommand(1);

  // evaluate
  CommonOptions eval_o;
  MetricFlags eval_m;
  std::string eval_pred;
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions with all metrics");
  evaluate->add_option("--gold", eval_o.gold, "corpus file")->required();
  evaluate->add_option("--pred", eval_pred, "prediction file")->required();
  evaluate->add_option("--ontology", eval_o.ontology, "ontology file");
  evaluate->add_option("--config", eval_o.config, "config file");
  evaluate->add_option("--format", eval_o.format, "json | csv | md");
  evaluate->add_option("--out", eval_o.out, "output path (default stdout)");
  evaluate->add_flag("--percent", eval_o.percent, "print scores x100");
  add_metric_flags(*evaluate, eval_m);

  // compare
  CommonOptions cmp_o;
  MetricFlags cmp_m;
  std::string pred_a, pred_b, cmp_metric = "gca", cmp_metrics = "fga,gca";
  std::size_t top = 20;
  auto* compare = app.add_subcommand(
      "compare", "Rank dialogues by disagreement between two systems or two metrics");
  compare->add_option("--gold", cmp_o.gold, "corpus file")->required();
  compare->add_option("--pred-a", pred_a, "prediction file of system A")->required();
  compare->add_option("--pred-b", pred_b,
                      "prediction file of system B (omit to compare two metrics on A)");
  compare->add_option("--metric", cmp_metric, "metric compared across systems");
  compare->add_option("--metrics", cmp_metrics, "metric pair compared on one system");
  compare->add_option("--top", top, "number of dialogues to list");
  compare->add_option("--ontology", cmp_o.ontology, "ontology file");
  compare->add_option("--config", cmp_o.config, "config file");
  compare->add_option("--format", cmp_o.format, "json | csv | md");
  compare->add_option("--out", cmp_o.out, "output path (default stdout)");
  compare->add_flag("--percent", cmp_o.percent, "print scores x100");
  add_metric_flags(*compare, cmp_m);

  // analyze
  CommonOptions an_o;
  MetricFlags an_m;
  std::string an_pred, traits = "to,nu";
  bool correlate = false;
  std::size_t bins = 10;
  double confidence = 0.95;
  auto* analyze = app.add_subcommand("analyze", "Mistake-distribution traits and correlations");
  analyze->add_option("--gold", an_o.gold, "corpus file")->required();
  analyze->add_option("--pred", an_pred, "prediction file")->required();
  analyze->add_option("--traits", traits, "comma list of to, nu");
  analyze->add_flag("--correlate", correlate, "add correlations and the FGA/GCA comparison");
  analyze->add_option("--bins", bins, "bins for the trait profiles");
  analyze->add_option("--confidence", confidence, "confidence level of the comparison");
  analyze->add_option("--ontology", an_o.ontology, "ontology file");
  analyze->add_option("--config", an_o.config, "config file");
  analyze->add_option("--format", an_o.format, "json | csv | md");
  analyze->add_option("--out", an_o.out, "output path (default stdout)");
  add_metric_flags(*analyze, an_m);

  // perturb
  CommonOptions pt_o;
  double error_rate = 0.1, tail_bias = 0.0, concentration = 0.0;
  std::string kind_mix = "1,1,1";
  std::uint64_t seed = 0;
  auto* perturb_cmd = app.add_subcommand("perturb", "Write synthetic predictions for a corpus");
  perturb_cmd->add_option("--gold", pt_o.gold, "corpus file")->required();
  auto* rate_opt = perturb_cmd->add_option("--error-rate", error_rate, "fraction of gold changes to corrupt");
  auto* mix_opt = perturb_cmd->add_option("--kind-mix", kind_mix, "relative weights missed,wrong,overshot");
  auto* bias_opt = perturb_cmd->add_option("--tail-bias", tail_bias, "> 0 places errors late");
  auto* conc_opt = perturb_cmd->add_option("--concentration", concentration, "> 0 clusters errors");
  auto* seed_opt = perturb_cmd->add_option("--seed", seed, "random seed");
  perturb_cmd->add_option("--ontology", pt_o.ontology, "ontology file");
  perturb_cmd->add_option("--config", pt_o.config, "config file");
  perturb_cmd->add_option("--out", pt_o.out, "output path (default stdout)");

  // validate
  CommonOptions val_o;
  std::string val_pred;
  auto* validate = app.add_subcommand("validate", "Check corpus and prediction files");
  validate->add_option("--gold", val_o.gold, "corpus file")->required();
  validate->add_option("--pred", val_pred, "prediction file");
  validate->add_option("--ontology", val_o.ontology, "ontology file");
  validate->add_option("--config", val_o.config, "config file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (evaluate->parsed()) {
      const ConfigFile cfg = base_config(eval_o.config);
      const MetricConfig mc = resolve_metrics(cfg, eval_m);
      const ReportFormat fmt = resolve_format(eval_o.format);
      const Corpus corpus = load_corpus(eval_o.gold, load_options(eval_o, cfg));
      const PredictionSet preds = load_predictions(eval_pred, corpus, load_options(eval_o, cfg));
      const MetricReport report = evaluate_corpus(corpus, preds, corpus.ontology, mc);
      emit(format_report(report, fmt, eval_o.percent), eval_o.out, out);
    } else if (compare->parsed()) {
      const ConfigFile cfg = base_config(cmp_o.config);
      const MetricConfig mc = resolve_metrics(cfg, cmp_m);
      const ReportFormat fmt = resolve_format(cmp_o.format);
      if (top == 0) throw UsageError("--top must be >= 1");
      const LoadOptions opts = load_options(cmp_o, cfg);
      const Corpus corpus = load_corpus(cmp_o.gold, opts);
      const PredictionSet a = load_predictions(pred_a, corpus, opts);
      const MetricReport ra = evaluate_corpus(corpus, a, corpus.ontology, mc);
      std::vector<Disagreement> rows;
      std::string label_a, label_b;
      if (!pred_b.empty()) {
        auto metric = parse_metric(canonical_text(cmp_metric));
        if (!metric) throw UsageError("--metric must be one of jga, sa, aga, rsa, fga, gca");
        const PredictionSet b = load_predictions(pred_b, corpus, opts);
        const MetricReport rb = evaluate_corpus(corpus, b, corpus.ontology, mc);
        rows = compare_systems(ra, rb, *metric, top);
        label_a = (a.system.empty() ? std::string("a") : a.system) + ":" +
                  std::string(metric_name(*metric));
        label_b = (b.system.empty() ? std::string("b") : b.system) + ":" +
                  std::string(metric_name(*metric));
      } else {
        const auto names = split_list(cmp_metrics);
        std::optional<Metric> ma, mb;
        if (names.size() == 2) {
          ma = parse_metric(names[0]);
          mb = parse_metric(names[1]);
        }
        if (!ma || !mb) throw UsageError("--metrics expects two metric names, e.g. fga,gca");
        rows = disagreement_ranking(ra, *ma, *mb, top);
        label_a = std::string(metric_name(*ma));
        label_b = std::string(metric_name(*mb));
      }
      emit(format_disagreements(rows, label_a, label_b, fmt, cmp_o.percent), cmp_o.out, out);
    } else if (analyze->parsed()) {
      const ConfigFile cfg = base_config(an_o.config);
      const MetricConfig mc = resolve_metrics(cfg, an_m);
      const ReportFormat fmt = resolve_format(an_o.format);
      std::vector<Trait> chosen;
      for (const auto& name : split_list(traits)) {
        auto t = parse_trait(name);
        if (!t) throw UsageError("--traits accepts to and nu");
        chosen.push_back(*t);
      }
      if (chosen.empty()) throw UsageError("--traits must name at least one trait");
      if (bins == 0) throw UsageError("--bins must be >= 1");
      if (!(confidence > 0.0 && confidence < 1.0)) {
        throw UsageError("--confidence must lie in (0, 1)");
      }
      const LoadOptions opts = load_options(an_o, cfg);
      const Corpus corpus = load_corpus(an_o.gold, opts);
      const PredictionSet preds = load_predictions(an_pred, corpus, opts);
      auto rows = trait_table(corpus, preds, corpus.ontology, mc);
      const TraitAnalysis result =
          analyze_traits(std::move(rows), chosen, correlate, bins, confidence);
      emit(format_analysis(result, fmt), an_o.out, out);
    } else if (perturb_cmd->parsed()) {
      const ConfigFile cfg = base_config(pt_o.config);
      PerturbationSpec spec = cfg.perturbation;
      if (rate_opt->count()) spec.error_rate = error_rate;
      if (bias_opt->count()) spec.tail_bias = tail_bias;
      if (conc_opt->count()) spec.concentration = concentration;
      if (seed_opt->count()) spec.seed = seed;
      if (mix_opt->count()) {
        const auto parts = split_list(kind_mix);
        std::vector<double> w;
        try {
          for (const auto& p : parts) w.push_back(std::stod(p));
        } catch (const std::exception&) {
          w.clear();
        }
        const double sum = w.size() == 3 ? w[0] + w[1] + w[2] : 0.0;
        if (w.size() != 3 || w[0] < 0 || w[1] < 0 || w[2] < 0 || !(sum > 0)) {
          throw UsageError("--kind-mix expects three non-negative weights m,w,o");
        }
        spec.kind_mix = {w[0] / sum, w[1] / sum, w[2] / sum};
      }
      try {
        spec.validate();
      } catch (const InputError& e) {
        std::string msg = e.what();
        for (const auto& d : e.diagnostics()) msg += "; " + d;
        throw UsageError(msg);
      }
      const Corpus corpus = load_corpus(pt_o.gold, load_options(pt_o, cfg));
      PredictionSet preds = perturb(corpus, spec);
      emit(write_predictions(preds, spec), pt_o.out, out);
    } else if (validate->parsed()) {
      const ConfigFile cfg = base_config(val_o.config);
      const LoadOptions opts = load_options(val_o, cfg);
      const Corpus corpus = load_corpus(val_o.gold, opts);
      std::size_t turns = 0;
      for (const auto& d : corpus.dialogues) turns += d.num_turns();
      out << "ok: corpus " << val_o.gold << ": " << corpus.dialogues.size()
          << " dialogues, " << turns << " turns, " << corpus.ontology.size()
          << " ontology slots\n";
      if (!val_pred.empty()) {
        const PredictionSet preds = load_predictions(val_pred, corpus, opts);
        out << "ok: predictions " << val_pred << ": " << preds.predictions.size()
            << " dialogues\n";
      }
    }
  } catch (const UsageError& e) {
    err << "error: E_USAGE: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    err << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    for (const auto& d : e.diagnostics()) {
      err << "  " << error_code_name(e.code()) << ": " << d << "\n";
    }
    return kExitInvalidInput;
  }
  return kExitOk;
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace dsteval
