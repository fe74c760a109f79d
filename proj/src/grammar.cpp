#include "induce/grammar.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "induce/error.hpp"

namespace induce {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kFamilyTolerance = 1e-9;
}  // namespace

void SymbolInventory::validate() const {
  if (nonterminals == 0 || preterminals == 0 || vocab_size == 0 || symbol_dim == 0) {
    fail(ErrorCode::kConfig, "grammar sizes must be positive");
  }
}

double RuleDistribution::max_normalization_error() const {
  double worst = std::abs(logsumexp(std::span<const double>(root)));
  const std::size_t s2 = symbols() * symbols();
  for (std::size_t a = 0; a < nonterminals; ++a) {
    worst = std::max(worst, std::abs(logsumexp(std::span<const double>(binary).subspan(a * s2, s2))));
  }
  for (std::size_t t = 0; t < preterminals; ++t) {
    worst = std::max(worst, std::abs(logsumexp(
                                std::span<const double>(terminal).subspan(t * vocab_size, vocab_size))));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Explicit grammars

ExplicitGrammar explicit_grammar(const std::vector<RuleSpec>& rules) {
  ExplicitGrammar g;
  std::map<std::string, std::size_t> nt_index;
  std::map<std::string, std::size_t> pt_index;
  std::map<std::string, std::size_t> word_index;
  auto intern = [](std::map<std::string, std::size_t>& index, std::vector<std::string>& names,
                   const std::string& name) {
    auto [it, inserted] = index.try_emplace(name, names.size());
    if (inserted) names.push_back(name);
    return it->second;
  };

  for (const auto& r : rules) {
    if (r.rhs.empty() || r.rhs.size() > 2) {
      fail(ErrorCode::kFormat, "rule for " + r.lhs + " must have one or two right-hand symbols");
    }
    if (!(r.probability >= 0) || r.probability > 1 + kFamilyTolerance) {
      fail(ErrorCode::kFormat, "rule probability out of range for " + r.lhs);
    }
    if (r.lhs == kStartSymbol) {
      if (r.rhs.size() != 1) fail(ErrorCode::kFormat, "start rules must be S -> A");
      intern(nt_index, g.nonterminals, r.rhs[0]);
    } else if (r.rhs.size() == 2) {
      intern(nt_index, g.nonterminals, r.lhs);
    } else {
      intern(pt_index, g.preterminals, r.lhs);
      intern(word_index, g.terminals, r.rhs[0]);
    }
  }
  for (const auto& name : g.nonterminals) {
    if (pt_index.contains(name) || name == kStartSymbol) {
      fail(ErrorCode::kFormat, "symbol " + name + " used both as nonterminal and preterminal");
    }
  }
  if (g.nonterminals.empty() || g.preterminals.empty()) {
    fail(ErrorCode::kUnnormalizedFamily, "grammar needs at least one nonterminal and preterminal");
  }

  auto& d = g.rules;
  d.nonterminals = g.nonterminals.size();
  d.preterminals = g.preterminals.size();
  d.vocab_size = g.terminals.size();
  const std::size_t s = d.symbols();
  std::vector<double> root(d.nonterminals, 0.0);
  std::vector<double> binary(d.nonterminals * s * s, 0.0);
  std::vector<double> terminal(d.preterminals * d.vocab_size, 0.0);

  auto child = [&](const std::string& name) -> std::size_t {
    if (auto it = nt_index.find(name); it != nt_index.end()) return it->second;
    if (auto it = pt_index.find(name); it != pt_index.end()) return d.nonterminals + it->second;
    fail(ErrorCode::kFormat, "binary rule child " + name + " is neither nonterminal nor preterminal");
  };

  for (const auto& r : rules) {
    if (r.lhs == kStartSymbol) {
      root[nt_index.at(r.rhs[0])] += r.probability;
    } else if (r.rhs.size() == 2) {
      const auto a = nt_index.at(r.lhs);
      binary[(a * s + child(r.rhs[0])) * s + child(r.rhs[1])] += r.probability;
    } else {
      terminal[pt_index.at(r.lhs) * d.vocab_size + word_index.at(r.rhs[0])] += r.probability;
    }
  }

  auto check_family = [](std::span<const double> probs, const std::string& what) {
    double total = 0;
    for (double p : probs) total += p;
    if (std::abs(total - 1.0) > kFamilyTolerance) {
      fail(ErrorCode::kUnnormalizedFamily, what + " sums to " + std::to_string(total));
    }
  };
  check_family(root, "start family");
  for (std::size_t a = 0; a < d.nonterminals; ++a) {
    check_family(std::span<const double>(binary).subspan(a * s * s, s * s),
                 "binary family of " + g.nonterminals[a]);
  }
  for (std::size_t t = 0; t < d.preterminals; ++t) {
    check_family(std::span<const double>(terminal).subspan(t * d.vocab_size, d.vocab_size),
                 "terminal family of " + g.preterminals[t]);
  }

  auto to_log = [](std::vector<double>& v) {
    for (auto& p : v) p = p > 0 ? std::log(p) : kNegInf;
  };
  to_log(root);
  to_log(binary);
  to_log(terminal);
  d.root = std::move(root);
  d.binary = std::move(binary);
  d.terminal = std::move(terminal);
  return g;
}

ExplicitGrammar parse_grammar(std::string_view text) {
  std::vector<RuleSpec> rules;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<std::string> parts;
    for (std::string f; fields >> f;) parts.push_back(f);
    if (parts.empty()) continue;
    const auto where = "grammar line " + std::to_string(lineno);
    if (parts.size() < 4 || parts.size() > 5 || parts[1] != "->") {
      fail(ErrorCode::kFormat, where + ": expected 'LHS -> RHS [RHS] PROB'");
    }
    RuleSpec r;
    r.lhs = parts[0];
    r.rhs.assign(parts.begin() + 2, parts.end() - 1);
    try {
      std::size_t used = 0;
      r.probability = std::stod(parts.back(), &used);
      if (used != parts.back().size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail(ErrorCode::kFormat, where + ": bad probability '" + parts.back() + "'");
    }
    rules.push_back(std::move(r));
  }
  return explicit_grammar(rules);
}

ExplicitGrammar load_grammar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open grammar " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_grammar(buf.str());
}

// ---------------------------------------------------------------------------
// Neural grammar

template <typename Real>
GrammarNet<Real>::GrammarNet(SymbolInventory inventory) : inventory_(inventory) {
  inventory_.validate();
}

template <typename Real>
void GrammarNet<Real>::register_params(ParamStore<Real>& store) const {
  const auto& inv = inventory_;
  const std::size_t d = inv.symbol_dim;
  const std::size_t in = d + inv.z_dim;
  const std::size_t s = inv.symbols();
  store.add("grammar.root_emb", {d});
  store.add("grammar.nt_emb", {inv.nonterminals, d});
  store.add("grammar.pt_emb", {inv.preterminals, d});
  for (const std::string prefix : {"grammar.root_mlp", "grammar.term_mlp"}) {
    store.add(prefix + ".w1", {d, in});
    store.add(prefix + ".b1", {d});
    store.add(prefix + ".w2", {d, d});
    store.add(prefix + ".b2", {d});
  }
  store.add("grammar.root_out", {inv.nonterminals, d});
  store.add("grammar.binary_out", {s * s, in});
  store.add("grammar.term_out", {inv.vocab_size, d});
}

template <typename Real>
Var<Real> GrammarNet<Real>::mlp(ParamBinder<Real>& params, const std::string& prefix,
                                Var<Real> x) const {
  auto h = relu(linear(x, params(prefix + ".w1"), params(prefix + ".b1")));
  return linear(h, params(prefix + ".w2"), params(prefix + ".b2"));
}

template <typename Real>
RuleLogits<Real> GrammarNet<Real>::rule_distributions(ParamBinder<Real>& params,
                                                      std::optional<Var<Real>> z) const {
  const auto& inv = inventory_;
  if (z) {
    if (inv.z_dim == 0 || z->shape() != Shape{inv.z_dim}) {
      fail(ErrorCode::kDimMismatch, "latent has shape " + shape_string(z->shape()) +
                                        ", grammar expects z_dim " + std::to_string(inv.z_dim));
    }
  } else if (inv.z_dim != 0) {
    fail(ErrorCode::kDimMismatch, "grammar is latent-conditioned but no latent was given");
  }

  RuleLogits<Real> out;
  auto root_in = params("grammar.root_emb");
  if (z) root_in = concat(root_in, *z);
  out.root = log_softmax(linear(mlp(params, "grammar.root_mlp", root_in), params("grammar.root_out")));

  auto nt_in = params("grammar.nt_emb");
  if (z) nt_in = concat_rows(nt_in, *z);
  out.binary = log_softmax(linear(nt_in, params("grammar.binary_out")));

  auto pt_in = params("grammar.pt_emb");
  if (z) pt_in = concat_rows(pt_in, *z);
  out.terminal = log_softmax(linear(mlp(params, "grammar.term_mlp", pt_in), params("grammar.term_out")));
  return out;
}

template <typename Real>
RuleDistribution to_distribution(const RuleLogits<Real>& logits, const SymbolInventory& inventory) {
  RuleDistribution d;
  d.nonterminals = inventory.nonterminals;
  d.preterminals = inventory.preterminals;
  d.vocab_size = inventory.vocab_size;
  auto copy = [](const Var<Real>& v) {
    const auto values = v.value().values();
    return std::vector<double>(values.begin(), values.end());
  };
  d.root = copy(logits.root);
  d.binary = copy(logits.binary);
  d.terminal = copy(logits.terminal);
  return d;
}

template class GrammarNet<float>;
template class GrammarNet<double>;
template RuleDistribution to_distribution(const RuleLogits<float>&, const SymbolInventory&);
template RuleDistribution to_distribution(const RuleLogits<double>&, const SymbolInventory&);

}  // namespace induce
