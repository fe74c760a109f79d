#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "induce/compute.hpp"

namespace induce {

// Sizes of a CNF grammar G = (S, N, P, Sigma, R) plus the neural widths.
struct SymbolInventory {
  std::size_t nonterminals = 30;
  std::size_t preterminals = 60;
  std::size_t vocab_size = 0;
  std::size_t symbol_dim = 256;
  std::size_t z_dim = 64;  // 0: rule probabilities are not latent-conditioned

  std::size_t symbols() const { return nonterminals + preterminals; }
  void validate() const;
};

// Normalized log-probability tables. Child symbols of binary rules are
// indexed 0..N-1 for nonterminals and N..N+P-1 for preterminals.
struct RuleDistribution {
  std::size_t nonterminals = 0;
  std::size_t preterminals = 0;
  std::size_t vocab_size = 0;
  std::vector<double> root;      // [N]
  std::vector<double> binary;    // [N][S][S]
  std::vector<double> terminal;  // [P][V]

  std::size_t symbols() const { return nonterminals + preterminals; }
  double binary_at(std::size_t parent, std::size_t left, std::size_t right) const {
    return binary[(parent * symbols() + left) * symbols() + right];
  }
  double terminal_at(std::size_t preterminal, std::size_t word) const {
    return terminal[preterminal * vocab_size + word];
  }

  // Largest |logsumexp - 0| over the root family, every binary family and
  // every terminal family.
  double max_normalization_error() const;
};

// ---------------------------------------------------------------------------
// Explicit grammars (oracles, synthetic data)

inline constexpr std::string_view kStartSymbol = "S";

struct RuleSpec {
  std::string lhs;
  std::vector<std::string> rhs;  // 1 symbol (S -> A, T -> w) or 2 (A -> B C)
  double probability = 0;
};

struct ExplicitGrammar {
  std::vector<std::string> nonterminals;
  std::vector<std::string> preterminals;
  std::vector<std::string> terminals;
  RuleDistribution rules;
};

// Symbols are classified from rule shapes: right sides of S rules and left
// sides of binary rules are nonterminals; left sides of other unary rules are
// preterminals and their right sides terminals. Unlisted rules get
// probability 0. Throws kUnnormalizedFamily when a family does not sum to
// 1 +- 1e-9 and kFormat for inconsistent symbol use.
ExplicitGrammar explicit_grammar(const std::vector<RuleSpec>& rules);

// Text form: one rule per line, "S -> A 1.0", "A -> B C 0.5", "T -> w 1.0";
// '#' starts a comment.
ExplicitGrammar parse_grammar(std::string_view text);
ExplicitGrammar load_grammar(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Neural rule probabilities

template <typename Real>
struct RuleLogits {
  Var<Real> root;      // [N] log-probs
  Var<Real> binary;    // [N, S*S] log-probs
  Var<Real> terminal;  // [P, V] log-probs
};

// Binds each stored parameter into a graph at most once. With a sink vector
// the gradients are accumulated there by Graph::backward.
template <typename Real>
class ParamBinder {
 public:
  ParamBinder(Graph<Real>& graph, const ParamStore<Real>& store,
              std::vector<Array<Real>>* sinks = nullptr)
      : graph_(graph), store_(store), sinks_(sinks), bound_(store.size()) {}

  Graph<Real>& graph() { return graph_; }

  Var<Real> operator()(std::size_t index) {
    if (!bound_[index]) {
      bound_[index] = graph_.param(store_.value(index),
                                   sinks_ != nullptr ? &(*sinks_)[index] : nullptr);
    }
    return *bound_[index];
  }
  Var<Real> operator()(const std::string& name) { return (*this)(store_.index(name)); }

 private:
  Graph<Real>& graph_;
  const ParamStore<Real>& store_;
  std::vector<Array<Real>>* sinks_;
  std::vector<std::optional<Var<Real>>> bound_;
};

// pi_{S->A} ~ exp(u_A . f1([w_S; z])), pi_{A->BC} ~ exp(u_BC . [w_A; z]),
// pi_{T->w} ~ exp(u_w . f2([w_T; z])); without z the symbol embeddings are
// used alone. f1 and f2 are two-layer ReLU networks.
template <typename Real>
class GrammarNet {
 public:
  explicit GrammarNet(SymbolInventory inventory);

  const SymbolInventory& inventory() const { return inventory_; }

  void register_params(ParamStore<Real>& store) const;

  // Throws kDimMismatch when z is present for a z_dim == 0 grammar, absent
  // for z_dim > 0, or of the wrong size.
  RuleLogits<Real> rule_distributions(ParamBinder<Real>& params,
                                      std::optional<Var<Real>> z) const;

 private:
  Var<Real> mlp(ParamBinder<Real>& params, const std::string& prefix, Var<Real> x) const;

  SymbolInventory inventory_;
};

template <typename Real>
RuleDistribution to_distribution(const RuleLogits<Real>& logits, const SymbolInventory& inventory);

extern template class GrammarNet<float>;
extern template class GrammarNet<double>;

}  // namespace induce
