#include "induce/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "induce/error.hpp"
#include "induce/parallel.hpp"
#include "induce/parser.hpp"
#include "json.hpp"

namespace induce {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_parallel(std::span<const BinaryTree> pred, std::span<const BinaryTree> gold) {
  if (pred.size() != gold.size()) {
    fail(ErrorCode::kLeafMismatch, "prediction and gold lists differ in length");
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].leaf_count() != gold[i].leaf_count()) {
      fail(ErrorCode::kLeafMismatch, "sentence " + std::to_string(i) + ": predicted tree has " +
                                         std::to_string(pred[i].leaf_count()) + " leaves, gold has " +
                                         std::to_string(gold[i].leaf_count()));
    }
  }
}

std::size_t overlap(const SpanSet& a, const SpanSet& b) {
  std::size_t n = 0;
  for (const auto& s : a) n += b.contains(s) ? 1 : 0;
  return n;
}

}  // namespace

F1Score f1_from_counts(std::size_t matched, std::size_t predicted, std::size_t gold) {
  F1Score s;
  s.precision = predicted > 0 ? static_cast<double>(matched) / static_cast<double>(predicted) : 0.0;
  s.recall = gold > 0 ? static_cast<double>(matched) / static_cast<double>(gold) : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

F1Score span_f1(const SpanSet& pred, const SpanSet& gold) {
  return f1_from_counts(overlap(pred, gold), pred.size(), gold.size());
}

double sentence_f1(std::span<const BinaryTree> pred, std::span<const BinaryTree> gold, bool exclude_short) {
  require_parallel(pred, gold);
  double total = 0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto g = gold[i].spans(true);
    if (g.empty()) {
      if (exclude_short) continue;
      total += 1.0;
      ++counted;
      continue;
    }
    total += span_f1(pred[i].spans(true), g).f1;
    ++counted;
  }
  return counted > 0 ? total / static_cast<double>(counted) : 0.0;
}

F1Score corpus_f1(std::span<const BinaryTree> pred, std::span<const BinaryTree> gold) {
  require_parallel(pred, gold);
  std::size_t matched = 0;
  std::size_t predicted = 0;
  std::size_t golden = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto p = pred[i].spans(true);
    const auto g = gold[i].spans(true);
    matched += overlap(p, g);
    predicted += p.size();
    golden += g.size();
  }
  return f1_from_counts(matched, predicted, golden);
}

BaselineKind parse_baseline_kind(std::string_view text) {
  if (text == "left") return BaselineKind::kLeft;
  if (text == "right") return BaselineKind::kRight;
  if (text == "random") return BaselineKind::kRandom;
  fail(ErrorCode::kConfig, "unknown baseline '" + std::string(text) + "' (left|right|random)");
}

std::string_view baseline_kind_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kLeft: return "left";
    case BaselineKind::kRight: return "right";
    case BaselineKind::kRandom: return "random";
  }
  return "?";
}

BinaryTree baseline_tree(BaselineKind kind, std::size_t n, std::mt19937_64& rng) {
  switch (kind) {
    case BaselineKind::kLeft: return BinaryTree::left_branching(n);
    case BaselineKind::kRight: return BinaryTree::right_branching(n);
    case BaselineKind::kRandom:
      return BinaryTree::build(n, [&](std::size_t i, std::size_t j) {
        std::uniform_int_distribution<std::size_t> pick(i + 1, j - 1);
        return pick(rng);
      });
  }
  return BinaryTree::right_branching(n);
}

double mbf(const BinaryTree& tree) {
  const auto& nodes = tree.nodes();
  if (nodes.empty()) return 0.0;
  double total = 0;
  for (const auto& node : nodes) {
    total += static_cast<double>(node.end - node.split) / static_cast<double>(node.split - node.start);
  }
  return total / static_cast<double>(nodes.size());
}

double corpus_mbf(std::span<const BinaryTree> trees) {
  double total = 0;
  std::size_t counted = 0;
  for (const auto& t : trees) {
    if (t.leaf_count() < 2) continue;
    total += mbf(t);
    ++counted;
  }
  return counted > 0 ? total / static_cast<double>(counted) : 0.0;
}

PplScore ppl_score(std::span<const double> log_likelihoods, std::span<const std::size_t> lengths) {
  if (log_likelihoods.size() != lengths.size()) fail(ErrorCode::kDimMismatch, "ppl inputs differ in length");
  PplScore out;
  double nll = 0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (!std::isfinite(log_likelihoods[i])) {
      ++out.excluded;
      continue;
    }
    nll -= log_likelihoods[i];
    tokens += lengths[i];
  }
  out.score = tokens > 0 ? nll / static_cast<double>(tokens) : std::numeric_limits<double>::infinity();
  return out;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    fail(ErrorCode::kDimMismatch, "pearson needs two equal-length series of at least 2 values");
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0;
  double sxx = 0;
  double syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) fail(ErrorCode::kZeroVariance, "pearson of a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Model evaluation

namespace {

const EmbeddingRecord* embedding_for(const Dataset& data, std::size_t i) {
  return data.embeddings ? &(*data.embeddings)[i] : nullptr;
}

template <typename Real>
void check_inputs(const Model<Real>& model, const Dataset& data) {
  if (model.needs_embeddings() && !data.embeddings) {
    fail(ErrorCode::kConfig, "llm-mode model needs an embedding file");
  }
  if (data.embeddings && data.embeddings->size() != data.size()) {
    fail(ErrorCode::kAlignment, "embedding records do not match sentence count");
  }
  if (data.has_trees() && data.trees.size() != data.size()) {
    fail(ErrorCode::kAlignment, "gold trees do not match sentence count");
  }
}

}  // namespace

template <typename Real>
std::vector<std::vector<double>> posterior_means(const Model<Real>& model, const Dataset& data,
                                                 bool zero_input, std::size_t threads) {
  check_inputs(model, data);
  std::vector<std::vector<double>> out(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const auto& ids = data.sentences[i].ids;
    if (ids.size() < 2) return;
    out[i] = model.posterior_mean(ids, embedding_for(data, i), zero_input);
  });
  return out;
}

template <typename Real>
EvalResult evaluate(const Model<Real>& model, const Dataset& data, const EvalOptions& options) {
  check_inputs(model, data);
  if (options.latents != nullptr && options.latents->size() != data.size()) {
    fail(ErrorCode::kDimMismatch, "latent overrides do not match sentence count");
  }
  const std::size_t n = data.size();
  EvalResult result;
  result.trees.resize(n);
  result.log_likelihoods.assign(n, kNegInf);

  std::optional<RuleDistribution> shared;
  if (!model.latent()) shared = model.rule_distribution(std::nullopt);

  parallel_for(n, options.threads, [&](std::size_t i) {
    const auto& ids = data.sentences[i].ids;
    const std::size_t len = ids.size();
    if (len < 2) {
      result.trees[i] = BinaryTree(len, {});
      return;
    }
    RuleDistribution local;
    const RuleDistribution* rules = shared ? &*shared : nullptr;
    if (!rules) {
      if (options.latents != nullptr) {
        local = model.rule_distribution(std::span<const double>((*options.latents)[i]));
      } else {
        const auto mu = model.posterior_mean(ids, embedding_for(data, i), options.zero_input);
        local = model.rule_distribution(std::span<const double>(mu));
      }
      rules = &local;
    }
    try {
      if (options.decoder == Decoder::kMbr) {
        result.trees[i] = mbr_decode(span_posteriors(*rules, ids, &result.log_likelihoods[i]));
      } else {
        result.trees[i] = viterbi_decode(*rules, ids).tree;
        result.log_likelihoods[i] = inside_log_likelihood(*rules, ids);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kZeroProbability) throw;
      result.log_likelihoods[i] = kNegInf;
      result.trees[i] = BinaryTree::right_branching(len);
    }
  });

  std::vector<BinaryTree> pred;
  std::vector<BinaryTree> gold;
  std::vector<double> lls;
  std::vector<std::size_t> lengths;
  auto& m = result.metrics;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = data.sentences[i].size();
    if (len < 2) {
      ++m.too_short;
      continue;
    }
    pred.push_back(result.trees[i]);
    if (data.has_trees()) gold.push_back(data.trees[i].tree);
    lls.push_back(result.log_likelihoods[i]);
    lengths.push_back(len);
  }
  m.sentences = pred.size();
  const auto ppl = ppl_score(lls, lengths);
  m.ppl = ppl.score;
  m.unparsed = ppl.excluded;
  m.mbf = corpus_mbf(pred);
  if (data.has_trees()) {
    m.corpus_f1 = corpus_f1(pred, gold).f1;
    m.sentence_f1 = sentence_f1(pred, gold, options.exclude_short);
  }
  return result;
}

template std::vector<std::vector<double>> posterior_means(const Model<float>&, const Dataset&, bool,
                                                          std::size_t);
template std::vector<std::vector<double>> posterior_means(const Model<double>&, const Dataset&, bool,
                                                          std::size_t);
template EvalResult evaluate(const Model<float>&, const Dataset&, const EvalOptions&);
template EvalResult evaluate(const Model<double>&, const Dataset&, const EvalOptions&);

// ---------------------------------------------------------------------------
// Run selection

Selection select_runs(std::span<const RunRecord> records, SelectionKind criterion, std::size_t k,
                      double mbf_target) {
  if (k == 0) fail(ErrorCode::kConfig, "k must be at least 1");
  if (records.size() < k) {
    fail(ErrorCode::kTooFewRuns, "need " + std::to_string(k) + " runs, got " + std::to_string(records.size()));
  }
  auto key = [&](const RunRecord& r) {
    const auto& v = r.best_validation();
    double value = 0;
    switch (criterion) {
      case SelectionKind::kValF1:
        if (!v.corpus_f1) fail(ErrorCode::kFormat, "run with seed " + std::to_string(r.seed) + " has no validation F1");
        value = -*v.corpus_f1;
        break;
      case SelectionKind::kPpl: value = v.ppl; break;
      case SelectionKind::kMbf: value = std::abs(v.mbf - mbf_target); break;
    }
    return std::isnan(value) ? std::numeric_limits<double>::infinity() : value;
  };
  std::vector<std::pair<double, const RunRecord*>> order;
  for (const auto& r : records) order.emplace_back(key(r), &r);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second->seed < b.second->seed;
  });

  Selection s;
  std::vector<double> cf1;
  std::vector<double> sf1;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& r = *order[i].second;
    if (!r.test || !r.test->corpus_f1 || !r.test->sentence_f1) {
      fail(ErrorCode::kFormat, "run with seed " + std::to_string(r.seed) + " has no test F1");
    }
    s.chosen.push_back(r);
    cf1.push_back(*r.test->corpus_f1);
    sf1.push_back(*r.test->sentence_f1);
  }
  auto mean_std = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return std::make_pair(mean, 0.0);
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::make_pair(mean, std::sqrt(ss / static_cast<double>(v.size() - 1)));
  };
  std::tie(s.corpus_f1_mean, s.corpus_f1_std) = mean_std(cf1);
  std::tie(s.sentence_f1_mean, s.sentence_f1_std) = mean_std(sf1);
  return s;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string points(const std::optional<double>& f1) {
  return f1 ? fmt::format("{:.1f}", 100.0 * *f1) : std::string("-");
}

}  // namespace

std::string metrics_table(std::span<const ReportRow> rows) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::string out = fmt::format("{:<{}}  {:>6}  {:>6}  {:>8}  {:>6}  {:>9}\n", "model", width, "C-F1", "S-F1",
                                "PPL", "MBF", "sentences");
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out += fmt::format("{:<{}}  {:>6}  {:>6}  {:>8.4f}  {:>6.3f}  {:>9}\n", r.label, width,
                       points(m.corpus_f1), points(m.sentence_f1), m.ppl, m.mbf, m.sentences);
  }
  return out;
}

std::string selection_table(const Selection& selection, SelectionKind criterion) {
  std::string out = fmt::format("selection by {} (top {})\n", selection_name(criterion), selection.chosen.size());
  out += fmt::format("{:>8}  {:>10}  {:>6}  {:>6}\n", "seed", "criterion", "C-F1", "S-F1");
  for (const auto& r : selection.chosen) {
    const auto& v = r.best_validation();
    double c = 0;
    switch (criterion) {
      case SelectionKind::kValF1: c = 100.0 * v.corpus_f1.value_or(0.0); break;
      case SelectionKind::kPpl: c = v.ppl; break;
      case SelectionKind::kMbf: c = v.mbf; break;
    }
    out += fmt::format("{:>8}  {:>10.4f}  {:>6}  {:>6}\n", r.seed, c, points(r.test->corpus_f1),
                       points(r.test->sentence_f1));
  }
  out += fmt::format("C-F1 {:.1f} ± {:.1f}   S-F1 {:.1f} ± {:.1f}\n", 100.0 * selection.corpus_f1_mean,
                     100.0 * selection.corpus_f1_std, 100.0 * selection.sentence_f1_mean,
                     100.0 * selection.sentence_f1_std);
  return out;
}

std::string selection_json(const Selection& selection, SelectionKind criterion, const std::string& config_hash) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& r : selection.chosen) seeds.push_back(r.seed);
  nlohmann::json j = {{"criterion", std::string(selection_name(criterion))},
                      {"k", selection.chosen.size()},
                      {"seeds", seeds},
                      {"corpus_f1", {{"mean", selection.corpus_f1_mean}, {"std", selection.corpus_f1_std}}},
                      {"sentence_f1", {{"mean", selection.sentence_f1_mean}, {"std", selection.sentence_f1_std}}},
                      {"config_hash", config_hash}};
  return j.dump(2);
}

}  // namespace induce
