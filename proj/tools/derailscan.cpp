// derailscan: generate fixtures, train, evaluate and run the detector.
//
// Exit codes: 0 clean / success, 1 at least one contract flagged defective,
// 2 operational error (I/O, bad input, bad flags), 3 single-class corpus.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

#include "derail/corpus.hpp"
#include "derail/detector.hpp"
#include "derail/error.hpp"
#include "derail/graph_io.hpp"
#include "derail/parallel.hpp"

namespace fs = std::filesystem;
using namespace derail;

namespace {

constexpr int kExitClean = 0;
constexpr int kExitDefective = 1;
constexpr int kExitError = 2;
constexpr int kExitDegenerate = 3;

constexpr const char* kLogLevelEnv = "DERAIL_LOG_LEVEL";

/// Machine-readable problems go to stderr as JSON lines.
void diagnostic(std::string_view kind, const std::string& path, const std::string& message) {
  Json j;
  j["diagnostic"] = kind;
  j["path"] = path;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

fs::path default_vocab_path(const fs::path& model) {
  fs::path p = model;
  p += ".vocab.json";
  return p;
}

RuleTable load_rules(const std::string& path) {
  return path.empty() ? RuleTable::defaults() : RuleTable::load(path);
}

struct LoadedDetector {
  GcnModel model;
  Vocabulary vocab;
};

LoadedDetector load_detector(const fs::path& model_path, const fs::path& vocab_path) {
  if (!fs::exists(model_path)) {
    throw Error(ErrorCode::MissingFile, "model file not found: " + model_path.string());
  }
  if (!fs::exists(vocab_path)) {
    throw Error(ErrorCode::MissingFile, "vocabulary file not found: " + vocab_path.string());
  }
  GcnModel model = load_model(model_path);
  Vocabulary vocab = Vocabulary::load(vocab_path);
  if (model.vocab_fingerprint != vocab.fingerprint()) {
    throw Error(ErrorCode::VocabularyMismatch,
                model_path.string() + " was trained with vocabulary " + model.vocab_fingerprint +
                    " but " + vocab_path.string() + " is " + vocab.fingerprint());
  }
  if (model.params.dim() != vocab.dim()) {
    throw Error(ErrorCode::ShapeMismatch, "model expects width " +
                                              std::to_string(model.params.dim()) +
                                              ", vocabulary has " + std::to_string(vocab.dim()));
  }
  return {std::move(model), std::move(vocab)};
}

/// Source text next to an AST file: foo.ast.json / foo.json -> foo.sol.
std::optional<std::string> sibling_source(const fs::path& ast_path) {
  std::string stem = ast_path.filename().string();
  for (std::string_view suffix : {".ast.json", ".json"}) {
    if (stem.size() > suffix.size() && stem.ends_with(suffix)) {
      stem.resize(stem.size() - suffix.size());
      break;
    }
  }
  std::ifstream in(ast_path.parent_path() / (stem + ".sol"), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

// -- gen ----------------------------------------------------------------------

struct GenOptions {
  std::size_t pairs = 100;
  std::uint64_t seed = 42;
  std::string out;
};

int run_gen(const GenOptions& o) {
  const auto contracts = synth_generate(o.pairs, o.seed);
  const auto manifest = write_synthetic_corpus(o.out, contracts);
  spdlog::info("wrote {} contracts under {}", contracts.size(), o.out);
  std::cout << manifest.string() << '\n';
  return kExitClean;
}

// -- train --------------------------------------------------------------------

struct TrainOptions {
  std::string manifest;
  std::string model;
  std::string vocab;
  std::string rules;
  std::string history;
  std::string optimizer = "adam";
  PipelineConfig pipeline;
  std::size_t folds = 0;
};

void report_skips(const LoadedCorpus& corpus) {
  for (const auto& d : corpus.diagnostics) diagnostic("skipped-record", d.path, d.message);
}

Json summary_json(const ProtocolResult& r) {
  Json j = r.result.metrics ? r.result.metrics->to_json() : Json::object();
  j["train_size"] = r.split.train.size();
  j["test_size"] = r.split.test.size();
  j["vocab_size"] = r.vocab.size();
  j["vocab_fingerprint"] = r.vocab.fingerprint();
  j["model_fingerprint"] = r.result.model.fingerprint();
  j["final_train_loss"] = r.result.history.empty() ? 0.0 : r.result.history.back().train_loss;
  return j;
}

int run_train(TrainOptions o) {
  o.pipeline.train.optimizer = o.optimizer == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
  const RuleTable rules = load_rules(o.rules);
  const LoadedCorpus corpus = load_corpus(o.manifest);
  report_skips(corpus);
  spdlog::info("loaded {} contracts from {}", corpus.contracts.size(), o.manifest);

  if (o.folds > 0) {
    std::vector<Label> labels;
    for (const auto& c : corpus.contracts) labels.push_back(c.label);
    if (!labels.empty() &&
        std::all_of(labels.begin(), labels.end(), [&](Label l) { return l == labels[0]; })) {
      throw Error(ErrorCode::DegenerateCorpus, "all contracts share one label");
    }
    Json folds = Json::array();
    Confusion total;
    for (auto& split : kfold_indices(labels, o.folds, o.pipeline.train.seed)) {
      auto r = train_on_split(corpus.contracts, std::move(split), o.pipeline, rules);
      for (const auto& s : r.skipped) diagnostic("skipped-contract", s.path, s.reason);
      if (r.result.metrics) total += r.result.metrics->counts;
      folds.push_back(summary_json(r));
      spdlog::info("fold {} done", folds.size());
    }
    Json out = Metrics::from_confusion(total).to_json();
    out["folds"] = std::move(folds);
    std::cout << out.dump() << '\n';
    return kExitClean;
  }

  auto r = train_on_contracts(corpus.contracts, o.pipeline, rules);
  for (const auto& s : r.skipped) diagnostic("skipped-contract", s.path, s.reason);
  const fs::path vocab_path = o.vocab.empty() ? default_vocab_path(o.model) : fs::path(o.vocab);
  save_model(o.model, r.result.model);
  r.vocab.save(vocab_path);
  if (!o.history.empty()) {
    std::string lines;
    for (const auto& e : r.result.history) lines += e.to_json().dump() + "\n";
    write_file(o.history, lines);
  }
  spdlog::info("model {} ({}), vocabulary {}", o.model, r.result.model.fingerprint(),
               vocab_path.string());
  std::cout << summary_json(r).dump() << '\n';
  return kExitClean;
}

// -- detect -------------------------------------------------------------------

struct DetectOptions {
  std::string model;
  std::string vocab;
  std::string rules;
  std::vector<std::string> inputs;
  double threshold = kDefaultThreshold;
  std::size_t top_k = kDefaultTopK;
  std::string format = "json";
  std::string out_dir;
  std::size_t threads = 0;
};

int run_detect(const DetectOptions& o) {
  const fs::path vocab_path = o.vocab.empty() ? default_vocab_path(o.model) : fs::path(o.vocab);
  const auto detector = load_detector(o.model, vocab_path);
  const RuleTable rules = load_rules(o.rules);
  const LabelSet labels = rules.label_set();
  const std::string fingerprint = detector.model.fingerprint();
  if (!o.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(o.out_dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + o.out_dir + ": " + ec.message());
  }

  struct Outcome {
    std::optional<DetectionReport> report;
    std::string error;
    bool io_error = false;
  };
  std::vector<Outcome> outcomes(o.inputs.size());
  parallel_for(
      o.inputs.size(),
      [&](std::size_t i) {
        const fs::path path = o.inputs[i];
        try {
          const AstTree tree = parse_ast_file(path);
          const NormalizedGraph g = source_to_graph(tree, rules, labels, detector.vocab);
          const Prediction p = predict(detector.model, g, o.threshold);
          DetectionReport report;
          report.contract = path.string();
          report.verdict = p.verdict;
          report.probability = p.probability;
          report.top_nodes = localize(detector.model, g, o.top_k);
          if (auto source = sibling_source(path)) {
            for (const auto& n : report.top_nodes) {
              try {
                report.excerpts.push_back(span_to_source(tree, n.ast_id, *source));
              } catch (const Error&) {
                report.excerpts.emplace_back();
              }
            }
          }
          report.model_fingerprint = fingerprint;
          report.timestamp = utc_timestamp();
          outcomes[i].report = std::move(report);
        } catch (const Error& e) {
          outcomes[i].error = e.what();
          outcomes[i].io_error = e.code() == ErrorCode::MissingFile || e.code() == ErrorCode::Io;
        }
      },
      o.threads);

  // Single ordered writer.
  int exit_code = kExitClean;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& out = outcomes[i];
    if (!out.report) {
      diagnostic("detect-failed", o.inputs[i], out.error);
      exit_code = kExitError;
      continue;
    }
    const std::string text =
        o.format == "text" ? out.report->to_text() : out.report->to_json().dump() + "\n";
    if (o.out_dir.empty()) {
      std::cout << text;
    } else {
      const auto name = fs::path(o.inputs[i]).filename().string() +
                        (o.format == "text" ? ".report.txt" : ".report.json");
      write_file(fs::path(o.out_dir) / name, text);
    }
    if (out.report->verdict == Label::Defective && exit_code == kExitClean) {
      exit_code = kExitDefective;
    }
  }
  std::cout.flush();
  return exit_code;
}

// -- eval ---------------------------------------------------------------------

struct EvalOptions {
  std::string model;
  std::string vocab;
  std::string rules;
  std::string manifest;
  double threshold = kDefaultThreshold;
};

int run_eval(const EvalOptions& o) {
  const fs::path vocab_path = o.vocab.empty() ? default_vocab_path(o.model) : fs::path(o.vocab);
  const auto detector = load_detector(o.model, vocab_path);
  const RuleTable rules = load_rules(o.rules);
  const LabelSet labels = rules.label_set();
  const LoadedCorpus corpus = load_corpus(o.manifest);
  report_skips(corpus);
  std::vector<NormalizedGraph> graphs;
  for (const auto& c : corpus.contracts) {
    try {
      auto g = source_to_graph(c.tree, rules, labels, detector.vocab);
      g.label = c.label;
      graphs.push_back(std::move(g));
    } catch (const Error& e) {
      diagnostic("skipped-contract", c.path.string(), e.what());
    }
  }
  std::cout << evaluate(detector.model, graphs, o.threshold).to_json().dump() << '\n';
  return kExitClean;
}

// -- inspect ------------------------------------------------------------------

struct InspectOptions {
  std::vector<std::string> inputs;
  std::string rules;
  std::string vocab;
  std::string graph_out;
};

int run_inspect(const InspectOptions& o) {
  const RuleTable rules = load_rules(o.rules);
  const LabelSet labels = rules.label_set();
  for (const auto& problem : rules.audit()) diagnostic("rule-table", o.rules, problem);
  std::optional<Vocabulary> vocab;
  if (!o.vocab.empty()) vocab = Vocabulary::load(o.vocab);
  if (!o.graph_out.empty() && !vocab) {
    throw Error(ErrorCode::BadFormat, "--graph-out needs --vocab to embed nodes");
  }
  if (!o.graph_out.empty() && o.inputs.size() != 1) {
    throw Error(ErrorCode::BadFormat, "--graph-out takes exactly one input");
  }

  int exit_code = kExitClean;
  for (const auto& input : o.inputs) {
    try {
      const AstTree tree = parse_ast_file(input);
      const auto tuples = extract_node_tuples(tree, rules);
      const auto edges = extract_edges(tree, tuples);
      const ContractGraph full = build_graph(tree, tuples, edges);
      Json j;
      j["path"] = input;
      j["compiler_version"] = tree.compiler_version;
      j["ast_nodes"] = tree.size();
      Json problems = Json::array();
      for (const auto& d : validate_tree(tree)) problems.push_back(to_json(d));
      j["tree_diagnostics"] = std::move(problems);
      j["categorized_nodes"] = full.size();
      std::map<std::string, std::size_t> by_category, by_edge;
      for (const auto& t : tuples) ++by_category[std::string(to_string(t.category))];
      for (const auto& e : edges) ++by_edge[std::string(to_string(e.e_t))];
      j["categories"] = by_category;
      j["edge_types"] = by_edge;
      try {
        const ContractGraph pruned = optimize_graph(full, labels);
        j["pruned_nodes"] = pruned.size();
        j["pruned_edges"] = pruned.edges().size();
        if (vocab) {
          std::size_t unknown = 0;
          for (const auto& n : pruned.nodes()) unknown += vocab->index_of(n.token) == Vocabulary::kUnkIndex;
          j["unknown_tokens"] = unknown;
        }
        if (!o.graph_out.empty()) save_graph(o.graph_out, normalize(embed_nodes(pruned, *vocab)));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyGraph) throw;
        j["pruned_nodes"] = 0;
        j["pruned_edges"] = 0;
      }
      std::cout << j.dump() << '\n';
    } catch (const Error& e) {
      diagnostic("inspect-failed", input, e.what());
      exit_code = kExitError;
    }
  }
  return exit_code;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("derailscan");
  logger->set_pattern("%^%l%$: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv(kLogLevelEnv)) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

int exit_code_for(const Error& e) {
  return e.code() == ErrorCode::DegenerateCorpus ? kExitDegenerate : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Graph-based detector for unguarded state changes in Solidity ASTs"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Write a synthetic labeled corpus");
  gen_cmd->add_option("--pairs", gen.pairs, "Defective/clean pairs")->capture_default_str()
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  TrainOptions tr;
  auto& tc = tr.pipeline.train;
  auto* train_cmd = app.add_subcommand("train", "Train on a manifest; print held-out metrics");
  train_cmd->add_option("--manifest", tr.manifest, "JSON-lines manifest")->required();
  train_cmd->add_option("--model", tr.model, "Model output path")->required();
  train_cmd->add_option("--vocab", tr.vocab, "Vocabulary output (default <model>.vocab.json)");
  train_cmd->add_option("--rules", tr.rules, "Category rule table (default: built-in)");
  train_cmd->add_option("--history", tr.history, "Write per-epoch history as JSON lines");
  train_cmd->add_option("--seed", tc.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--hidden", tc.hidden, "Hidden width")->capture_default_str();
  train_cmd->add_option("--dim", tr.pipeline.dim, "Embedding width")->capture_default_str();
  train_cmd->add_option("--buckets", tr.pipeline.buckets, "Name hash buckets")->capture_default_str();
  train_cmd->add_option("--epochs", tc.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--lr", tc.learning_rate, "Learning rate")->capture_default_str();
  train_cmd->add_option("--l2", tc.l2_penalty, "L2 penalty")->capture_default_str();
  train_cmd->add_option("--train-fraction", tc.train_fraction, "Training share")->capture_default_str();
  train_cmd->add_option("--optimizer", tr.optimizer, "adam or sgd")->capture_default_str()
      ->check(CLI::IsMember({"adam", "sgd"}));
  train_cmd->add_option("--folds", tr.folds, "Stratified k-fold instead of one split (k >= 2)");

  DetectOptions det;
  auto* detect_cmd = app.add_subcommand("detect", "Score AST files; exit 1 if any is defective");
  detect_cmd->add_option("--model", det.model, "Model file")->required();
  detect_cmd->add_option("--vocab", det.vocab, "Vocabulary (default <model>.vocab.json)");
  detect_cmd->add_option("--rules", det.rules, "Category rule table (default: built-in)");
  detect_cmd->add_option("--threshold", det.threshold, "Defective if p >= threshold")->capture_default_str();
  detect_cmd->add_option("--top-k", det.top_k, "Localized nodes per report (max 10)")->capture_default_str()
      ->check(CLI::Range(std::size_t{0}, kMaxTopK));
  detect_cmd->add_option("--format", det.format, "json or text")->capture_default_str()
      ->check(CLI::IsMember({"json", "text"}));
  detect_cmd->add_option("--out-dir", det.out_dir, "Write one report file per input here");
  detect_cmd->add_option("--threads", det.threads, "Worker threads (0 = all cores)")->capture_default_str();
  detect_cmd->add_option("inputs", det.inputs, "AST JSON files")->required();

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Metrics of a trained model on a manifest");
  eval_cmd->add_option("--model", ev.model, "Model file")->required();
  eval_cmd->add_option("--vocab", ev.vocab, "Vocabulary (default <model>.vocab.json)");
  eval_cmd->add_option("--rules", ev.rules, "Category rule table (default: built-in)");
  eval_cmd->add_option("--manifest", ev.manifest, "JSON-lines manifest")->required();
  eval_cmd->add_option("--threshold", ev.threshold, "Defective if p >= threshold")->capture_default_str();

  InspectOptions ins;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print graph statistics for AST files");
  inspect_cmd->add_option("--rules", ins.rules, "Category rule table (default: built-in)");
  inspect_cmd->add_option("--vocab", ins.vocab, "Vocabulary, to count unknown tokens");
  inspect_cmd->add_option("--graph-out", ins.graph_out, "Save the normalized graph (SGG1)");
  inspect_cmd->add_option("inputs", ins.inputs, "AST JSON files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*train_cmd) return run_train(tr);
    if (*detect_cmd) return run_detect(det);
    if (*eval_cmd) return run_eval(ev);
    if (*inspect_cmd) return run_inspect(ins);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    diagnostic("error", "", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  }
  return kExitError;
}
