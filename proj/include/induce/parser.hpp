#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "induce/compute.hpp"
#include "induce/corpus.hpp"
#include "induce/grammar.hpp"
#include "induce/tree.hpp"

namespace induce {

// Borrowed log-probability tables in the RuleDistribution layout.
template <typename Real>
struct RuleView {
  std::size_t nonterminals = 0;
  std::size_t preterminals = 0;
  std::span<const Real> root;    // [N]
  std::span<const Real> binary;  // [N][S][S]

  std::size_t symbols() const { return nonterminals + preterminals; }
};

inline RuleView<double> view(const RuleDistribution& rules) {
  return {rules.nonterminals, rules.preterminals, rules.root, rules.binary};
}

// Log inside scores per (start, end, symbol). Width-1 cells hold preterminal
// scores in slots N..S-1; wider cells hold nonterminal scores in slots 0..N-1.
// Unused slots are -inf.
template <typename Real>
class InsideChart {
 public:
  InsideChart() = default;
  InsideChart(std::size_t length, std::size_t nonterminals, std::size_t preterminals)
      : length_(length),
        nonterminals_(nonterminals),
        symbols_(nonterminals + preterminals),
        scores_((length + 1) * (length + 1) * symbols_, -std::numeric_limits<Real>::infinity()) {}

  std::size_t length() const { return length_; }
  std::size_t nonterminals() const { return nonterminals_; }
  std::size_t symbols() const { return symbols_; }

  Real& at(std::size_t start, std::size_t end, std::size_t symbol) {
    return scores_[cell_offset(start, end) + symbol];
  }
  Real at(std::size_t start, std::size_t end, std::size_t symbol) const {
    return scores_[cell_offset(start, end) + symbol];
  }
  std::span<const Real> cell(std::size_t start, std::size_t end) const {
    return std::span<const Real>(scores_).subspan(cell_offset(start, end), symbols_);
  }

  Real log_partition = -std::numeric_limits<Real>::infinity();

 private:
  std::size_t cell_offset(std::size_t start, std::size_t end) const {
    return (start * (length_ + 1) + end) * symbols_;
  }

  std::size_t length_ = 0;
  std::size_t nonterminals_ = 0;
  std::size_t symbols_ = 0;
  std::vector<Real> scores_;
};

// Inside pass. emissions is [n][P] with emissions[i][T] = log pi(T -> x_i).
// potentials, when non-empty, is [(n+1)][(n+1)] and adds potentials[i][j] to
// every symbol score of span (i, j). A single token has no CNF derivation
// from S, so n == 1 yields log_partition = -inf.
template <typename Real>
InsideChart<Real> inside_chart(const RuleView<Real>& rules, std::span<const Real> emissions,
                               std::span<const Real> potentials = {});

// Gradient of chart.log_partition scaled by upstream, added into the given
// buffers (g_potentials may be empty).
template <typename Real>
void inside_backward(const RuleView<Real>& rules, std::span<const Real> emissions,
                     std::span<const Real> potentials, const InsideChart<Real>& chart,
                     Real upstream, std::span<Real> g_root, std::span<Real> g_binary,
                     std::span<Real> g_emissions, std::span<Real> g_potentials);

// Differentiable log p(x): root [N], binary [N, S*S], emissions [n, P],
// optional potentials [(n+1)*(n+1)].
template <typename Real>
Var<Real> inside_log_partition(Var<Real> root, Var<Real> binary, Var<Real> emissions,
                               std::optional<std::type_identity_t<Var<Real>>> potentials = std::nullopt);

extern template InsideChart<float> inside_chart(const RuleView<float>&, std::span<const float>,
                                                std::span<const float>);
extern template InsideChart<double> inside_chart(const RuleView<double>&, std::span<const double>,
                                                 std::span<const double>);
extern template Var<float> inside_log_partition(Var<float>, Var<float>, Var<float>,
                                                std::optional<Var<float>>);
extern template Var<double> inside_log_partition(Var<double>, Var<double>, Var<double>,
                                                 std::optional<Var<double>>);

// ---------------------------------------------------------------------------
// Explicit-table API (64-bit)

// [n][P] emission scores for a token id sequence.
std::vector<double> emission_scores(const RuleDistribution& rules, std::span<const std::size_t> ids);

// Exact log marginal over all binary parses; -inf when no parse has mass.
double inside_log_likelihood(const RuleDistribution& rules, std::span<const std::size_t> ids);

inline constexpr std::size_t kBruteForceMaxLength = 8;

// Enumerates every tree shape and every symbol assignment, summing in linear
// space. Throws kTooLong for n > 8.
double brute_force_log_likelihood(const RuleDistribution& rules, std::span<const std::size_t> ids);

// Posterior probability that each span is a constituent.
class SpanPosterior {
 public:
  SpanPosterior() = default;
  explicit SpanPosterior(std::size_t length)
      : length_(length), p_((length + 1) * (length + 1), 0.0) {}

  std::size_t length() const { return length_; }
  double& at(std::size_t start, std::size_t end) { return p_[start * (length_ + 1) + end]; }
  double at(std::size_t start, std::size_t end) const { return p_[start * (length_ + 1) + end]; }

  double sum_wide_spans() const;  // over spans of width >= 2

 private:
  std::size_t length_ = 0;
  std::vector<double> p_;
};

// Explicit outside pass. Throws kZeroProbability when log p(x) = -inf.
// log p(x) is stored through log_likelihood when given.
SpanPosterior span_posteriors(const RuleDistribution& rules, std::span<const std::size_t> ids,
                              double* log_likelihood = nullptr);

// Same quantity obtained by differentiating log p(x) with respect to per-span
// log-potentials through the compute graph.
SpanPosterior span_posteriors_by_gradient(const RuleDistribution& rules,
                                          std::span<const std::size_t> ids);

// Tree maximizing the summed span posteriors; ties go to the smallest split.
BinaryTree mbr_decode(const SpanPosterior& posterior);

struct ViterbiParse {
  BinaryTree tree;
  double log_prob = 0;
};

// Highest-probability derivation. Throws kZeroProbability when none exists.
ViterbiParse viterbi_decode(const RuleDistribution& rules, std::span<const std::size_t> ids);

struct SampledCorpus {
  std::vector<Sentence> sentences;  // ids index ExplicitGrammar::terminals
  std::vector<BinaryTree> trees;
};

inline constexpr std::size_t kMaxConsecutiveRejections = 1000;

// Ancestral sampling from S; derivations longer than max_len are rejected.
// Throws kUnproductiveGrammar after 1000 consecutive rejections.
SampledCorpus sample_corpus(const ExplicitGrammar& grammar, std::size_t count,
                            std::size_t max_len, std::uint64_t seed);

}  // namespace induce
