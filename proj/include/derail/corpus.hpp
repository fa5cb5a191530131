#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "derail/ast.hpp"
#include "derail/label.hpp"

namespace derail {

enum class Provenance { Synthetic, External };

std::string_view to_string(Provenance provenance);

struct LabeledContract {
  std::filesystem::path path;
  AstTree tree;
  Label label = Label::Clean;
  Provenance provenance = Provenance::External;
};

struct RecordDiagnostic {
  std::size_t line = 0;
  std::string path;
  std::string message;
};

struct LoadedCorpus {
  std::vector<LabeledContract> contracts;
  std::vector<RecordDiagnostic> diagnostics;  // records that were skipped
};

/// Reads a JSON-lines manifest of {"ast_path", "label"[, "provenance"]}
/// records; relative paths resolve against the manifest's directory.
/// Throws Error(MissingFile) when the manifest cannot be opened and
/// Error(BadLabel / BadFormat) naming the line for malformed records. AST
/// files that fail to load are reported in `diagnostics` and skipped.
LoadedCorpus load_corpus(const std::filesystem::path& manifest);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle, then a prefix split holding round(fraction·N) items
/// (clamped so both sides are non-empty). When both labels occur, each class
/// contributes in proportion to its size (largest-remainder rounding).
/// Throws Error(TooSmall) for fewer than two items.
SplitIndices split_indices(std::span<const Label> labels, double train_fraction,
                           std::uint64_t seed);

/// Stratified k-fold partition; fold i is the test side of entry i.
std::vector<SplitIndices> kfold_indices(std::span<const Label> labels, std::size_t folds,
                                        std::uint64_t seed);

template <class T>
struct Split {
  std::vector<T> train;
  std::vector<T> test;
};

template <class T, class LabelOf>
Split<T> split(const std::vector<T>& items, double train_fraction, std::uint64_t seed,
               LabelOf label_of) {
  std::vector<Label> labels;
  labels.reserve(items.size());
  for (const auto& item : items) labels.push_back(label_of(item));
  auto idx = split_indices(labels, train_fraction, seed);
  Split<T> out;
  for (auto i : idx.train) out.train.push_back(items[i]);
  for (auto i : idx.test) out.test.push_back(items[i]);
  return out;
}

inline Split<LabeledContract> split(const std::vector<LabeledContract>& corpus,
                                    double train_fraction, std::uint64_t seed) {
  return split(corpus, train_fraction, seed, [](const LabeledContract& c) { return c.label; });
}

/// One generated fixture: Solidity text plus its compact AST, whose `src`
/// spans index into `source`.
struct SyntheticContract {
  std::string stem;  // file name without extension
  std::size_t pair = 0;
  Label label = Label::Clean;
  std::string source;
  std::string ast_json;
  std::string description;
};

/// 2·n_pairs contracts, alternating defective/clean. Both members of a pair
/// come from the same random draw; the clean one wraps the state-changing
/// body of its public entry point in a caller check (owner or allowance),
/// the defective one leaves it unguarded. Deterministic per seed.
std::vector<SyntheticContract> synth_generate(std::size_t n_pairs, std::uint64_t seed);

LabeledContract to_labeled(const SyntheticContract& contract);

/// Writes <stem>.sol / <stem>.ast.json for every contract plus
/// manifest.jsonl and README.md; returns the manifest path.
std::filesystem::path write_synthetic_corpus(const std::filesystem::path& dir,
                                             const std::vector<SyntheticContract>& contracts);

}  // namespace derail
