#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "induce/config.hpp"
#include "induce/corpus.hpp"
#include "induce/model.hpp"
#include "induce/run_record.hpp"
#include "induce/tree.hpp"

namespace induce {

struct F1Score {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

F1Score f1_from_counts(std::size_t matched, std::size_t predicted, std::size_t gold);
F1Score span_f1(const SpanSet& pred, const SpanSet& gold);

// Mean per-sentence F1 over non-trivial spans. Sentences whose gold tree has
// no non-trivial span (length <= 2) score 1, or are left out when
// exclude_short is set. Throws kLeafMismatch on unequal leaf counts.
double sentence_f1(std::span<const BinaryTree> pred, std::span<const BinaryTree> gold,
                   bool exclude_short = false);

// Precision and recall from span matches pooled over the corpus.
F1Score corpus_f1(std::span<const BinaryTree> pred, std::span<const BinaryTree> gold);

enum class BaselineKind { kLeft, kRight, kRandom };
BaselineKind parse_baseline_kind(std::string_view text);  // kConfig on failure
std::string_view baseline_kind_name(BaselineKind kind);

// Random trees pick each split uniformly among the available points,
// top-down.
BinaryTree baseline_tree(BaselineKind kind, std::size_t n, std::mt19937_64& rng);

// Mean over internal nodes of right-leaf-count / left-leaf-count.
double mbf(const BinaryTree& tree);
// Mean of mbf over trees with at least two leaves.
double corpus_mbf(std::span<const BinaryTree> trees);

// Sum of -log p(x) over sentences with finite log p(x), divided by their
// summed lengths. Non-finite entries are left out and counted.
struct PplScore {
  double score = 0;
  std::size_t excluded = 0;
};
PplScore ppl_score(std::span<const double> log_likelihoods, std::span<const std::size_t> lengths);

// Sample Pearson correlation. Throws kZeroVariance for a constant series and
// kDimMismatch for unequal or too-short inputs.
double pearson(std::span<const double> xs, std::span<const double> ys);

// ---------------------------------------------------------------------------
// Model evaluation

struct EvalOptions {
  Decoder decoder = Decoder::kMbr;
  std::size_t threads = 1;
  bool exclude_short = false;
  bool zero_input = false;  // encoder input replaced by zeros
  // Per-sentence latent overrides, parallel to the dataset.
  const std::vector<std::vector<double>>* latents = nullptr;
};

struct EvalResult {
  Metrics metrics;
  std::vector<BinaryTree> trees;         // parallel to the dataset; length-1 sentences hold a 1-leaf tree
  std::vector<double> log_likelihoods;   // -inf for unparsed or length-1 sentences
};

// Decodes every sentence at z = posterior mean (or the given overrides) and
// scores the trees against the gold trees when present.
template <typename Real>
EvalResult evaluate(const Model<Real>& model, const Dataset& data, const EvalOptions& options);

// Posterior means for every sentence (empty vectors for length-1 sentences).
template <typename Real>
std::vector<std::vector<double>> posterior_means(const Model<Real>& model, const Dataset& data,
                                                 bool zero_input, std::size_t threads);

extern template EvalResult evaluate(const Model<float>&, const Dataset&, const EvalOptions&);
extern template EvalResult evaluate(const Model<double>&, const Dataset&, const EvalOptions&);

// ---------------------------------------------------------------------------
// Run selection

struct Selection {
  std::vector<RunRecord> chosen;
  double corpus_f1_mean = 0;
  double corpus_f1_std = 0;  // sample standard deviation; 0 when k == 1
  double sentence_f1_mean = 0;
  double sentence_f1_std = 0;
};

// Orders runs by the best-epoch validation criterion (val_f1 descending,
// ppl ascending, mbf by |mbf - mbf_target| ascending; ties by seed) and
// summarizes the test F1 of the first k. Throws kTooFewRuns when fewer than k
// records are given and kFormat when a chosen record lacks test F1.
Selection select_runs(std::span<const RunRecord> records, SelectionKind criterion, std::size_t k,
                      double mbf_target = 1.0);

// ---------------------------------------------------------------------------
// Reports

struct ReportRow {
  std::string label;
  Metrics metrics;
};

// Aligned-column table with F1 in percentage points.
std::string metrics_table(std::span<const ReportRow> rows);
std::string selection_table(const Selection& selection, SelectionKind criterion);
std::string selection_json(const Selection& selection, SelectionKind criterion, const std::string& config_hash);

}  // namespace induce
