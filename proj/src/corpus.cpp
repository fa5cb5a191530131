#include "derail/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "derail/error.hpp"

namespace derail {

std::string_view to_string(Provenance provenance) {
  return provenance == Provenance::Synthetic ? "synthetic" : "external";
}

LoadedCorpus load_corpus(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open manifest " + manifest.string());
  const auto base = manifest.parent_path();
  LoadedCorpus out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json record;
    try {
      record = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::BadFormat,
                  manifest.string() + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
    }
    auto where = manifest.string() + ":" + std::to_string(line_no);
    if (!record.is_object() || !record.contains("ast_path") || !record["ast_path"].is_string()) {
      throw Error(ErrorCode::BadFormat, where + ": record needs a string ast_path", line_no);
    }
    const auto& label_field = record.contains("label") ? record["label"] : Json();
    auto label = label_field.is_string() ? parse_label(label_field.get<std::string>()) : std::nullopt;
    if (!label) {
      throw Error(ErrorCode::BadLabel,
                  where + ": label must be \"defective\" or \"clean\", got " + label_field.dump(),
                  line_no);
    }
    Provenance provenance = Provenance::External;
    if (auto p = record.find("provenance"); p != record.end()) {
      if (*p == "synthetic") provenance = Provenance::Synthetic;
      else if (*p != "external") {
        throw Error(ErrorCode::BadFormat, where + ": unknown provenance " + p->dump(), line_no);
      }
    }
    std::filesystem::path ast_path = record["ast_path"].get<std::string>();
    if (ast_path.is_relative()) ast_path = base / ast_path;
    try {
      out.contracts.push_back({ast_path, parse_ast_file(ast_path), *label, provenance});
    } catch (const Error& e) {
      out.diagnostics.push_back({line_no, ast_path.string(), e.what()});
    }
  }
  return out;
}

SplitIndices split_indices(std::span<const Label> labels, double train_fraction,
                           std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (n < 2) throw Error(ErrorCode::TooSmall, "need at least two items to split");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::BadFormat, "train fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_train = static_cast<std::size_t>(std::clamp<long long>(
      std::llround(train_fraction * static_cast<double>(n)), 1, static_cast<long long>(n) - 1));

  std::array<std::size_t, 2> count{};
  for (Label l : labels) ++count[static_cast<int>(l)];

  SplitIndices out;
  if (count[0] == 0 || count[1] == 0) {
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return out;
  }

  // Largest-remainder allocation of n_train across the two classes; ties go
  // to the class with the lower enum value.
  std::array<std::size_t, 2> quota{};
  std::array<double, 2> remainder{};
  std::size_t assigned = 0;
  for (int c = 0; c < 2; ++c) {
    const double exact = static_cast<double>(n_train) * static_cast<double>(count[c]) /
                         static_cast<double>(n);
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  while (assigned < n_train) {
    int c = remainder[1] > remainder[0] ? 1 : 0;
    if (quota[c] == count[c]) c = 1 - c;
    ++quota[c];
    remainder[c] = -1.0;
    ++assigned;
  }

  std::array<std::size_t, 2> taken{};
  for (std::size_t i : order) {
    const int c = static_cast<int>(labels[i]);
    if (taken[c] < quota[c]) {
      ++taken[c];
      out.train.push_back(i);
    } else {
      out.test.push_back(i);
    }
  }
  return out;
}

std::vector<SplitIndices> kfold_indices(std::span<const Label> labels, std::size_t folds,
                                        std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (folds < 2 || folds > n) {
    throw Error(ErrorCode::TooSmall, "k-fold needs 2 <= k <= number of items");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  // Deal each class round-robin so every fold sees both labels when possible.
  std::stable_partition(order.begin(), order.end(),
                        [&](std::size_t i) { return labels[i] == Label::Defective; });
  std::vector<std::size_t> fold_of(n);
  for (std::size_t k = 0; k < n; ++k) fold_of[order[k]] = k % folds;

  std::vector<SplitIndices> out(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    for (std::size_t i : order) {
      (fold_of[i] == f ? out[f].test : out[f].train).push_back(i);
    }
  }
  return out;
}

}  // namespace derail
