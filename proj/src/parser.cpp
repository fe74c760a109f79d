#include "induce/parser.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>

#include "induce/error.hpp"

namespace induce {

namespace {

template <typename Real>
constexpr Real neg_inf() {
  return -std::numeric_limits<Real>::infinity();
}

struct SymbolRange {
  std::size_t begin;
  std::size_t end;
};

// Width-1 children are preterminals, wider children are nonterminals.
inline SymbolRange child_range(std::size_t width, std::size_t nonterminals, std::size_t symbols) {
  return width == 1 ? SymbolRange{nonterminals, symbols} : SymbolRange{0, nonterminals};
}

// log sum_k inside(i,k,B) + inside(k,j,C) for every child pair BC of span
// (i, j); `active` lists the pairs with a finite value.
template <typename Real>
struct PairScores {
  std::vector<Real> score;
  std::vector<Real> scratch;
  std::vector<std::size_t> active;

  void compute(const InsideChart<Real>& chart, std::size_t i, std::size_t j) {
    const std::size_t s = chart.symbols();
    const std::size_t nt = chart.nonterminals();
    score.assign(s * s, neg_inf<Real>());
    scratch.assign(s * s, Real(0));
    active.clear();
    for (std::size_t k = i + 1; k < j; ++k) {
      const auto br = child_range(k - i, nt, s);
      const auto cr = child_range(j - k, nt, s);
      for (std::size_t b = br.begin; b < br.end; ++b) {
        const Real left = chart.at(i, k, b);
        if (left == neg_inf<Real>()) continue;
        Real* row = score.data() + b * s;
        for (std::size_t c = cr.begin; c < cr.end; ++c) {
          const Real v = left + chart.at(k, j, c);
          if (v > row[c]) row[c] = v;
        }
      }
    }
    for (std::size_t k = i + 1; k < j; ++k) {
      const auto br = child_range(k - i, nt, s);
      const auto cr = child_range(j - k, nt, s);
      for (std::size_t b = br.begin; b < br.end; ++b) {
        const Real left = chart.at(i, k, b);
        if (left == neg_inf<Real>()) continue;
        for (std::size_t c = cr.begin; c < cr.end; ++c) {
          const Real right = chart.at(k, j, c);
          if (right == neg_inf<Real>()) continue;
          scratch[b * s + c] += std::exp(left + right - score[b * s + c]);
        }
      }
    }
    for (std::size_t bc = 0; bc < s * s; ++bc) {
      if (score[bc] == neg_inf<Real>()) continue;
      score[bc] += std::log(scratch[bc]);
      active.push_back(bc);
    }
  }
};

template <typename Real>
Real potential_at(std::span<const Real> potentials, std::size_t n, std::size_t i, std::size_t j) {
  return potentials.empty() ? Real(0) : potentials[i * (n + 1) + j];
}

}  // namespace

// ---------------------------------------------------------------------------
// Inside / adjoint

template <typename Real>
InsideChart<Real> inside_chart(const RuleView<Real>& rules, std::span<const Real> emissions,
                               std::span<const Real> potentials) {
  const std::size_t nt = rules.nonterminals;
  const std::size_t pt = rules.preterminals;
  const std::size_t s = rules.symbols();
  if (pt == 0 || emissions.size() % pt != 0) {
    fail(ErrorCode::kDimMismatch, "emission scores are not a multiple of the preterminal count");
  }
  const std::size_t n = emissions.size() / pt;
  if (!potentials.empty() && potentials.size() != (n + 1) * (n + 1)) {
    fail(ErrorCode::kDimMismatch, "span potentials must be (n+1)^2");
  }
  InsideChart<Real> chart(n, nt, pt);
  for (std::size_t i = 0; i < n; ++i) {
    const Real pot = potential_at(potentials, n, i, i + 1);
    for (std::size_t t = 0; t < pt; ++t) chart.at(i, i + 1, nt + t) = emissions[i * pt + t] + pot;
  }
  PairScores<Real> pairs;
  for (std::size_t w = 2; w <= n; ++w) {
    for (std::size_t i = 0; i + w <= n; ++i) {
      const std::size_t j = i + w;
      pairs.compute(chart, i, j);
      const Real pot = potential_at(potentials, n, i, j);
      for (std::size_t a = 0; a < nt; ++a) {
        const Real* rule = rules.binary.data() + a * s * s;
        Real m = neg_inf<Real>();
        for (auto bc : pairs.active) m = std::max(m, rule[bc] + pairs.score[bc]);
        if (m == neg_inf<Real>()) continue;
        Real total = 0;
        for (auto bc : pairs.active) total += std::exp(rule[bc] + pairs.score[bc] - m);
        chart.at(i, j, a) = m + std::log(total) + pot;
      }
    }
  }
  if (n >= 2) {
    std::vector<Real> top(nt);
    for (std::size_t a = 0; a < nt; ++a) top[a] = rules.root[a] + chart.at(0, n, a);
    chart.log_partition = logsumexp(std::span<const Real>(top));
  }
  return chart;
}

template <typename Real>
void inside_backward(const RuleView<Real>& rules, std::span<const Real> /*emissions*/,
                     std::span<const Real> potentials, const InsideChart<Real>& chart,
                     Real upstream, std::span<Real> g_root, std::span<Real> g_binary,
                     std::span<Real> g_emissions, std::span<Real> g_potentials) {
  const std::size_t n = chart.length();
  const std::size_t nt = rules.nonterminals;
  const std::size_t pt = rules.preterminals;
  const std::size_t s = rules.symbols();
  const Real log_z = chart.log_partition;
  if (n < 2 || !std::isfinite(log_z)) return;

  // Adjoints of the (potential-shifted) chart cells.
  InsideChart<Real> adj(n, nt, pt);
  auto g = [&](std::size_t i, std::size_t j, std::size_t sym) -> Real& { return adj.at(i, j, sym); };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j <= n; ++j) {
      for (std::size_t sym = 0; sym < s; ++sym) g(i, j, sym) = 0;
    }
  }
  for (std::size_t a = 0; a < nt; ++a) {
    const Real w = upstream * std::exp(rules.root[a] + chart.at(0, n, a) - log_z);
    g_root[a] += w;
    g(0, n, a) += w;
  }

  PairScores<Real> pairs;
  std::vector<Real> g_pair(s * s);
  for (std::size_t w = n; w >= 2; --w) {
    for (std::size_t i = 0; i + w <= n; ++i) {
      const std::size_t j = i + w;
      const Real pot = potential_at(potentials, n, i, j);
      Real cell_total = 0;
      bool any = false;
      for (std::size_t a = 0; a < nt; ++a) {
        cell_total += g(i, j, a);
        any = any || g(i, j, a) != Real(0);
      }
      if (!g_potentials.empty()) g_potentials[i * (n + 1) + j] += cell_total;
      if (!any) continue;

      pairs.compute(chart, i, j);
      std::fill(g_pair.begin(), g_pair.end(), Real(0));
      for (std::size_t a = 0; a < nt; ++a) {
        const Real ga = g(i, j, a);
        if (ga == Real(0)) continue;
        const Real raw = chart.at(i, j, a) - pot;
        if (raw == neg_inf<Real>()) continue;
        const Real* rule = rules.binary.data() + a * s * s;
        Real* g_rule = g_binary.data() + a * s * s;
        for (auto bc : pairs.active) {
          const Real t = ga * std::exp(rule[bc] + pairs.score[bc] - raw);
          g_rule[bc] += t;
          g_pair[bc] += t;
        }
      }
      for (std::size_t k = i + 1; k < j; ++k) {
        const auto br = child_range(k - i, nt, s);
        const auto cr = child_range(j - k, nt, s);
        for (std::size_t b = br.begin; b < br.end; ++b) {
          const Real left = chart.at(i, k, b);
          if (left == neg_inf<Real>()) continue;
          Real acc_left = 0;
          for (std::size_t c = cr.begin; c < cr.end; ++c) {
            const std::size_t bc = b * s + c;
            if (g_pair[bc] == Real(0)) continue;
            const Real right = chart.at(k, j, c);
            if (right == neg_inf<Real>()) continue;
            const Real t = g_pair[bc] * std::exp(left + right - pairs.score[bc]);
            acc_left += t;
            g(k, j, c) += t;
          }
          g(i, k, b) += acc_left;
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    Real cell_total = 0;
    for (std::size_t t = 0; t < pt; ++t) {
      const Real gt = g(i, i + 1, nt + t);
      g_emissions[i * pt + t] += gt;
      cell_total += gt;
    }
    if (!g_potentials.empty()) g_potentials[i * (n + 1) + i + 1] += cell_total;
  }
}

template <typename Real>
Var<Real> inside_log_partition(Var<Real> root, Var<Real> binary, Var<Real> emissions,
                               std::optional<std::type_identity_t<Var<Real>>> potentials) {
  const auto& em = emissions.value();
  if (root.value().rank() != 1 || binary.value().rank() != 2 || em.rank() != 2) {
    fail(ErrorCode::kDimMismatch, "inside: expects root [N], binary [N, S*S], emissions [n, P]");
  }
  const std::size_t nt = root.size();
  const std::size_t pt = em.cols();
  const std::size_t s = nt + pt;
  if (binary.shape() != Shape{nt, s * s}) {
    fail(ErrorCode::kDimMismatch, "inside: binary table has shape " + shape_string(binary.shape()));
  }
  const RuleView<Real> rv{nt, pt, root.value().values(), binary.value().values()};
  std::span<const Real> pot;
  if (potentials) pot = potentials->value().values();
  auto chart = std::make_shared<const InsideChart<Real>>(inside_chart(rv, em.values(), pot));
  const Real log_z = chart->log_partition;
  return root.graph->record(
      Array<Real>::scalar(log_z),
      [root, binary, emissions, potentials, chart, nt, pt](Graph<Real>& g, std::size_t self) {
        const Real up = g.grad(self)[0];
        if (up == Real(0) || !std::isfinite(chart->log_partition)) return;
        const RuleView<Real> rv{nt, pt, g.value(root.id).values(), g.value(binary.id).values()};
        std::span<const Real> pot;
        std::span<Real> g_pot;
        if (potentials) {
          pot = g.value(potentials->id).values();
          g_pot = g.grad(potentials->id).values();
        }
        auto g_root = g.grad(root.id).values();
        auto g_binary = g.grad(binary.id).values();
        auto g_em = g.grad(emissions.id).values();
        inside_backward(rv, g.value(emissions.id).values(), pot, *chart, up, g_root, g_binary,
                        g_em, g_pot);
      });
}

template InsideChart<float> inside_chart(const RuleView<float>&, std::span<const float>,
                                         std::span<const float>);
template InsideChart<double> inside_chart(const RuleView<double>&, std::span<const double>,
                                          std::span<const double>);
template void inside_backward(const RuleView<float>&, std::span<const float>,
                              std::span<const float>, const InsideChart<float>&, float,
                              std::span<float>, std::span<float>, std::span<float>,
                              std::span<float>);
template void inside_backward(const RuleView<double>&, std::span<const double>,
                              std::span<const double>, const InsideChart<double>&, double,
                              std::span<double>, std::span<double>, std::span<double>,
                              std::span<double>);
template Var<float> inside_log_partition(Var<float>, Var<float>, Var<float>,
                                         std::optional<Var<float>>);
template Var<double> inside_log_partition(Var<double>, Var<double>, Var<double>,
                                          std::optional<Var<double>>);

// ---------------------------------------------------------------------------
// Explicit-table API

std::vector<double> emission_scores(const RuleDistribution& rules, std::span<const std::size_t> ids) {
  std::vector<double> out(ids.size() * rules.preterminals);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rules.vocab_size) {
      fail(ErrorCode::kDimMismatch, "token id " + std::to_string(ids[i]) + " outside vocabulary");
    }
    for (std::size_t t = 0; t < rules.preterminals; ++t) {
      out[i * rules.preterminals + t] = rules.terminal_at(t, ids[i]);
    }
  }
  return out;
}

double inside_log_likelihood(const RuleDistribution& rules, std::span<const std::size_t> ids) {
  if (ids.empty()) fail(ErrorCode::kEmptyInput, "empty sentence");
  const auto em = emission_scores(rules, ids);
  return inside_chart(view(rules), std::span<const double>(em)).log_partition;
}

double brute_force_log_likelihood(const RuleDistribution& rules, std::span<const std::size_t> ids) {
  const std::size_t n = ids.size();
  if (n == 0) fail(ErrorCode::kEmptyInput, "empty sentence");
  if (n > kBruteForceMaxLength) {
    fail(ErrorCode::kTooLong, "enumeration is limited to " + std::to_string(kBruteForceMaxLength) +
                                  " tokens");
  }
  if (n == 1) return neg_inf<double>();
  for (auto id : ids) {
    if (id >= rules.vocab_size) fail(ErrorCode::kDimMismatch, "token id outside vocabulary");
  }

  // Every preorder node list for spans [start, end).
  std::function<std::vector<std::vector<BinaryTree::Node>>(std::size_t, std::size_t)> shapes =
      [&](std::size_t start, std::size_t end) -> std::vector<std::vector<BinaryTree::Node>> {
    if (end - start == 1) return {{}};
    std::vector<std::vector<BinaryTree::Node>> out;
    for (std::size_t k = start + 1; k < end; ++k) {
      for (const auto& left : shapes(start, k)) {
        for (const auto& right : shapes(k, end)) {
          std::vector<BinaryTree::Node> nodes{{start, end, k}};
          nodes.insert(nodes.end(), left.begin(), left.end());
          nodes.insert(nodes.end(), right.begin(), right.end());
          out.push_back(std::move(nodes));
        }
      }
    }
    return out;
  };

  const std::size_t nt = rules.nonterminals;
  const std::size_t pt = rules.preterminals;
  const std::size_t m = n - 1;
  // Label slots: internal nodes 0..m-1 take nonterminals, leaves m..m+n-1 preterminals.
  double total = 0;
  for (const auto& nodes : shapes(0, n)) {
    struct Children {
      std::size_t left;
      std::size_t right;
    };
    std::vector<Children> kids(m);
    for (std::size_t x = 0; x < m; ++x) {
      const auto& node = nodes[x];
      auto slot_of = [&](std::size_t start, std::size_t end) -> std::size_t {
        if (end - start == 1) return m + start;
        for (std::size_t y = 0; y < m; ++y) {
          if (nodes[y].start == start && nodes[y].end == end) return y;
        }
        return 0;  // unreachable for a valid shape
      };
      kids[x] = {slot_of(node.start, node.split), slot_of(node.split, node.end)};
    }
    auto symbol_of = [&](std::size_t slot, const std::vector<std::size_t>& labels) {
      return slot < m ? labels[slot] : nt + labels[slot];
    };
    std::vector<std::size_t> labels(m + n, 0);
    while (true) {
      double p = std::exp(rules.root[labels[0]]);
      for (std::size_t x = 0; x < m && p > 0; ++x) {
        p *= std::exp(rules.binary_at(labels[x], symbol_of(kids[x].left, labels),
                                      symbol_of(kids[x].right, labels)));
      }
      for (std::size_t i = 0; i < n && p > 0; ++i) {
        p *= std::exp(rules.terminal_at(labels[m + i], ids[i]));
      }
      total += p;
      // Odometer step with radix N for internal slots and P for leaves.
      std::size_t slot = 0;
      for (; slot < m + n; ++slot) {
        const std::size_t radix = slot < m ? nt : pt;
        if (++labels[slot] < radix) break;
        labels[slot] = 0;
      }
      if (slot == m + n) break;
    }
  }
  return total > 0 ? std::log(total) : neg_inf<double>();
}

double SpanPosterior::sum_wide_spans() const {
  double total = 0;
  for (std::size_t i = 0; i < length_; ++i) {
    for (std::size_t j = i + 2; j <= length_; ++j) total += at(i, j);
  }
  return total;
}

SpanPosterior span_posteriors(const RuleDistribution& rules, std::span<const std::size_t> ids,
                              double* log_likelihood) {
  const std::size_t n = ids.size();
  const auto em = emission_scores(rules, ids);
  const auto rv = view(rules);
  const auto chart = inside_chart(rv, std::span<const double>(em));
  const double log_z = chart.log_partition;
  if (log_likelihood != nullptr) *log_likelihood = log_z;
  if (!std::isfinite(log_z)) fail(ErrorCode::kZeroProbability, "sentence has no parse");

  const std::size_t nt = rules.nonterminals;
  const std::size_t s = rules.symbols();
  InsideChart<double> outside(n, nt, rules.preterminals);
  for (std::size_t a = 0; a < nt; ++a) outside.at(0, n, a) = rules.root[a];

  std::vector<double> parent(s * s);
  std::vector<double> terms;
  for (std::size_t w = n; w >= 2; --w) {
    for (std::size_t i = 0; i + w <= n; ++i) {
      const std::size_t j = i + w;
      // parent[BC] = log sum_A outside(i,j,A) pi(A -> B C)
      bool any = false;
      for (std::size_t bc = 0; bc < s * s; ++bc) {
        terms.clear();
        for (std::size_t a = 0; a < nt; ++a) {
          terms.push_back(outside.at(i, j, a) + rules.binary[a * s * s + bc]);
        }
        parent[bc] = logsumexp(std::span<const double>(terms));
        any = any || parent[bc] != neg_inf<double>();
      }
      if (!any) continue;
      for (std::size_t k = i + 1; k < j; ++k) {
        const auto br = child_range(k - i, nt, s);
        const auto cr = child_range(j - k, nt, s);
        for (std::size_t b = br.begin; b < br.end; ++b) {
          terms.clear();
          for (std::size_t c = cr.begin; c < cr.end; ++c) {
            terms.push_back(parent[b * s + c] + chart.at(k, j, c));
          }
          outside.at(i, k, b) = log_add(outside.at(i, k, b), logsumexp(std::span<const double>(terms)));
        }
        for (std::size_t c = cr.begin; c < cr.end; ++c) {
          terms.clear();
          for (std::size_t b = br.begin; b < br.end; ++b) {
            terms.push_back(parent[b * s + c] + chart.at(i, k, b));
          }
          outside.at(k, j, c) = log_add(outside.at(k, j, c), logsumexp(std::span<const double>(terms)));
        }
      }
    }
  }

  SpanPosterior post(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j <= n; ++j) {
      double p = 0;
      for (std::size_t sym = 0; sym < s; ++sym) {
        const double v = chart.at(i, j, sym) + outside.at(i, j, sym);
        if (v != neg_inf<double>()) p += std::exp(v - log_z);
      }
      post.at(i, j) = p;
    }
  }
  return post;
}

SpanPosterior span_posteriors_by_gradient(const RuleDistribution& rules,
                                          std::span<const std::size_t> ids) {
  const std::size_t n = ids.size();
  Graph<double> graph;
  auto root = graph.constant(Array<double>(Shape{rules.nonterminals}, rules.root));
  const std::size_t s = rules.symbols();
  auto binary = graph.constant(Array<double>(Shape{rules.nonterminals, s * s}, rules.binary));
  auto em = graph.constant(Array<double>(Shape{n, rules.preterminals}, emission_scores(rules, ids)));
  auto pot = graph.constant(Array<double>(Shape{(n + 1) * (n + 1)}));
  auto log_z = inside_log_partition(root, binary, em, pot);
  if (!std::isfinite(log_z.item())) fail(ErrorCode::kZeroProbability, "sentence has no parse");
  graph.backward(log_z);
  SpanPosterior post(n);
  const auto& g = graph.grad(pot.id);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j <= n; ++j) post.at(i, j) = g[i * (n + 1) + j];
  }
  return post;
}

BinaryTree mbr_decode(const SpanPosterior& posterior) {
  const std::size_t n = posterior.length();
  constexpr double kTieTolerance = 1e-10;
  std::vector<double> best((n + 1) * (n + 1), 0.0);
  std::vector<std::size_t> split((n + 1) * (n + 1), 0);
  auto idx = [n](std::size_t i, std::size_t j) { return i * (n + 1) + j; };
  for (std::size_t w = 2; w <= n; ++w) {
    for (std::size_t i = 0; i + w <= n; ++i) {
      const std::size_t j = i + w;
      double top = -std::numeric_limits<double>::infinity();
      std::size_t arg = i + 1;
      for (std::size_t k = i + 1; k < j; ++k) {
        const double v = best[idx(i, k)] + best[idx(k, j)];
        if (v > top + kTieTolerance) {
          top = v;
          arg = k;
        }
      }
      best[idx(i, j)] = top + posterior.at(i, j);
      split[idx(i, j)] = arg;
    }
  }
  return BinaryTree::build(n, [&](std::size_t i, std::size_t j) { return split[idx(i, j)]; });
}

ViterbiParse viterbi_decode(const RuleDistribution& rules, std::span<const std::size_t> ids) {
  const std::size_t n = ids.size();
  if (n == 0) fail(ErrorCode::kEmptyInput, "empty sentence");
  const std::size_t nt = rules.nonterminals;
  const std::size_t pt = rules.preterminals;
  const std::size_t s = rules.symbols();
  const auto em = emission_scores(rules, ids);
  InsideChart<double> chart(n, nt, pt);
  struct Back {
    std::size_t k = 0;
    std::size_t b = 0;
    std::size_t c = 0;
  };
  std::vector<Back> back((n + 1) * (n + 1) * nt);
  auto bp = [&](std::size_t i, std::size_t j, std::size_t a) -> Back& {
    return back[(i * (n + 1) + j) * nt + a];
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < pt; ++t) chart.at(i, i + 1, nt + t) = em[i * pt + t];
  }
  std::vector<double> pair(s * s);
  std::vector<std::size_t> pair_k(s * s);
  for (std::size_t w = 2; w <= n; ++w) {
    for (std::size_t i = 0; i + w <= n; ++i) {
      const std::size_t j = i + w;
      std::fill(pair.begin(), pair.end(), neg_inf<double>());
      for (std::size_t k = i + 1; k < j; ++k) {
        const auto br = child_range(k - i, nt, s);
        const auto cr = child_range(j - k, nt, s);
        for (std::size_t b = br.begin; b < br.end; ++b) {
          for (std::size_t c = cr.begin; c < cr.end; ++c) {
            const double v = chart.at(i, k, b) + chart.at(k, j, c);
            if (v > pair[b * s + c]) {
              pair[b * s + c] = v;
              pair_k[b * s + c] = k;
            }
          }
        }
      }
      for (std::size_t a = 0; a < nt; ++a) {
        double top = neg_inf<double>();
        for (std::size_t bc = 0; bc < s * s; ++bc) {
          const double v = rules.binary[a * s * s + bc] + pair[bc];
          if (v > top) {
            top = v;
            bp(i, j, a) = {pair_k[bc], bc / s, bc % s};
          }
        }
        chart.at(i, j, a) = top;
      }
    }
  }
  double best = neg_inf<double>();
  std::size_t best_a = 0;
  if (n >= 2) {
    for (std::size_t a = 0; a < nt; ++a) {
      const double v = rules.root[a] + chart.at(0, n, a);
      if (v > best) {
        best = v;
        best_a = a;
      }
    }
  }
  if (best == neg_inf<double>()) fail(ErrorCode::kZeroProbability, "sentence has no parse");

  std::vector<BinaryTree::Node> nodes;
  std::function<void(std::size_t, std::size_t, std::size_t)> walk = [&](std::size_t i,
                                                                        std::size_t j,
                                                                        std::size_t a) {
    if (j - i == 1) return;
    const Back b = bp(i, j, a);
    nodes.push_back({i, j, b.k});
    walk(i, b.k, b.b);
    walk(b.k, j, b.c);
  };
  walk(0, n, best_a);
  return {BinaryTree(n, std::move(nodes)), best};
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

std::size_t draw(std::span<const double> log_probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    if (log_probs[i] == neg_inf<double>()) continue;
    acc += std::exp(log_probs[i]);
    last = i;
    if (u < acc) return i;
  }
  return last;
}

}  // namespace

SampledCorpus sample_corpus(const ExplicitGrammar& grammar, std::size_t count,
                            std::size_t max_len, std::uint64_t seed) {
  if (max_len < 2) fail(ErrorCode::kConfig, "max_len must be at least 2");
  const auto& rules = grammar.rules;
  const std::size_t nt = rules.nonterminals;
  const std::size_t s = rules.symbols();
  std::mt19937_64 rng(seed);
  SampledCorpus out;
  std::size_t rejections = 0;
  while (out.sentences.size() < count) {
    std::vector<BinaryTree::Node> nodes;
    std::vector<std::size_t> ids;
    std::size_t frontier = 1;  // symbols awaiting expansion; each yields >= 1 token
    bool ok = true;
    std::function<void(std::size_t)> expand = [&](std::size_t sym) {
      if (!ok) return;
      if (sym >= nt) {
        const std::size_t t = sym - nt;
        ids.push_back(draw(std::span<const double>(rules.terminal)
                               .subspan(t * rules.vocab_size, rules.vocab_size),
                           rng));
        --frontier;
        return;
      }
      ++frontier;
      if (ids.size() + frontier > max_len) {
        ok = false;
        return;
      }
      const std::size_t bc = draw(std::span<const double>(rules.binary).subspan(sym * s * s, s * s), rng);
      const std::size_t start = ids.size();
      const std::size_t slot = nodes.size();
      nodes.push_back({start, 0, 0});
      expand(bc / s);
      nodes[slot].split = ids.size();
      expand(bc % s);
      nodes[slot].end = ids.size();
    };
    expand(draw(rules.root, rng));
    if (!ok) {
      if (++rejections >= kMaxConsecutiveRejections) {
        fail(ErrorCode::kUnproductiveGrammar, "no derivation within " + std::to_string(max_len) +
                                                  " tokens after " +
                                                  std::to_string(kMaxConsecutiveRejections) +
                                                  " attempts");
      }
      continue;
    }
    rejections = 0;
    std::vector<std::string> tokens;
    for (auto id : ids) tokens.push_back(grammar.terminals[id]);
    Sentence sentence;
    sentence.tokens = std::move(tokens);
    sentence.ids = ids;
    sentence.source_index = out.sentences.size();
    out.trees.emplace_back(ids.size(), std::move(nodes));
    out.sentences.push_back(std::move(sentence));
  }
  return out;
}

}  // namespace induce
