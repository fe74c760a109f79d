#pragma once

// Test-only reference computations over explicit grammars. Everything here is
// deliberately naive: derivations are listed one by one and probabilities are
// multiplied in linear space.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "induce/grammar.hpp"
#include "induce/tree.hpp"

namespace oracle {

struct Derivation {
  double prob = 0;
  induce::SpanSet spans;  // every internal-node span, including the whole sentence
};

namespace detail {

inline void expand(const induce::RuleDistribution& r, const std::vector<std::size_t>& ids,
                   std::size_t sym, std::size_t i, std::size_t j, Derivation partial,
                   const std::function<void(const Derivation&)>& done) {
  const std::size_t n = r.nonterminals;
  if (j - i == 1) {
    if (sym < n) return;
    partial.prob *= std::exp(r.terminal_at(sym - n, ids[i]));
    if (partial.prob > 0) done(partial);
    return;
  }
  if (sym >= n) return;
  partial.spans.insert({i, j});
  for (std::size_t k = i + 1; k < j; ++k) {
    for (std::size_t b = 0; b < r.symbols(); ++b) {
      for (std::size_t c = 0; c < r.symbols(); ++c) {
        const double p = std::exp(r.binary_at(sym, b, c));
        if (p == 0) continue;
        Derivation left = partial;
        left.prob *= p;
        expand(r, ids, b, i, k, left, [&](const Derivation& l) {
          expand(r, ids, c, k, j, l, done);
        });
      }
    }
  }
}

}  // namespace detail

// Every derivation of ids with nonzero probability.
inline std::vector<Derivation> derivations(const induce::RuleDistribution& r,
                                           const std::vector<std::size_t>& ids) {
  std::vector<Derivation> out;
  if (ids.size() < 2) return out;
  for (std::size_t a = 0; a < r.nonterminals; ++a) {
    const double p = std::exp(r.root[a]);
    if (p == 0) continue;
    detail::expand(r, ids, a, 0, ids.size(), Derivation{p, {}},
                   [&](const Derivation& d) { out.push_back(d); });
  }
  return out;
}

inline double likelihood(const std::vector<Derivation>& ds) {
  double total = 0;
  for (const auto& d : ds) total += d.prob;
  return total;
}

inline double span_posterior(const std::vector<Derivation>& ds, induce::Span span) {
  double with = 0;
  for (const auto& d : ds) {
    if (d.spans.contains(span)) with += d.prob;
  }
  return with / likelihood(ds);
}

inline double best_derivation(const std::vector<Derivation>& ds) {
  double best = 0;
  for (const auto& d : ds) best = std::max(best, d.prob);
  return best;
}

// Random grammar with |N| <= max_n, |P| <= max_p, |Sigma| <= max_v. A fraction
// of rules is zeroed so that -inf entries are exercised.
inline induce::RuleDistribution random_grammar(std::mt19937_64& rng, std::size_t max_n,
                                               std::size_t max_p, std::size_t max_v,
                                               double zero_rate = 0.2) {
  induce::RuleDistribution r;
  r.nonterminals = 1 + rng() % max_n;
  r.preterminals = 1 + rng() % max_p;
  r.vocab_size = 1 + rng() % max_v;
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  std::bernoulli_distribution drop(zero_rate);
  auto family = [&](std::size_t size) {
    std::vector<double> p(size);
    double total = 0;
    for (auto& x : p) {
      x = drop(rng) ? 0.0 : unif(rng);
      total += x;
    }
    if (total == 0) {
      p[rng() % size] = 1.0;
      total = 1.0;
    }
    for (auto& x : p) x = x > 0 ? std::log(x / total) : -std::numeric_limits<double>::infinity();
    return p;
  };
  r.root = family(r.nonterminals);
  const std::size_t s2 = r.symbols() * r.symbols();
  for (std::size_t a = 0; a < r.nonterminals; ++a) {
    auto f = family(s2);
    r.binary.insert(r.binary.end(), f.begin(), f.end());
  }
  for (std::size_t t = 0; t < r.preterminals; ++t) {
    auto f = family(r.vocab_size);
    r.terminal.insert(r.terminal.end(), f.begin(), f.end());
  }
  return r;
}

inline std::vector<std::size_t> random_sentence(std::mt19937_64& rng, std::size_t n,
                                                std::size_t vocab) {
  std::vector<std::size_t> ids(n);
  for (auto& x : ids) x = rng() % vocab;
  return ids;
}

}  // namespace oracle
