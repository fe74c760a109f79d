#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "expect_error.hpp"
#include "induce/ablate.hpp"
#include "json.hpp"
#include "synthetic.hpp"

using namespace induce;

namespace {

Config small(bool zero_train, EncoderMode mode = EncoderMode::kBaseline) {
  Config c;
  c.nonterminals = 3;
  c.preterminals = 4;
  c.symbol_dim = 8;
  c.z_dim = 3;
  c.word_dim = 5;
  c.mode = mode;
  c.zero_train = zero_train;
  return c;
}

Dataset corpus(const Vocabulary& vocab, std::size_t count, std::uint64_t seed) {
  return synthetic::dataset(synthetic::planted(), vocab, count, 8, seed);
}

void add_embeddings(Dataset& d, std::uint32_t dim) {
  EmbeddingStore store(dim);
  float x = 0;
  for (const auto& s : d.sentences) {
    std::vector<float> values;
    for (std::size_t i = 0; i < s.size() * dim; ++i) values.push_back(x += 0.37f);
    store.add(static_cast<std::uint32_t>(s.size()), std::move(values));
  }
  d.embeddings = std::move(store);
}

}  // namespace

TEST_CASE("mode names") {
  for (auto m : all_ablations()) CHECK(parse_ablation(ablation_name(m)) == m);
  CHECK(code_of([] { parse_ablation("zero-c"); }) == ErrorCode::kConfig);
}

TEST_CASE("non-identity permutations") {
  std::mt19937_64 rng(5);
  for (std::size_t n = 0; n <= 6; ++n) {
    for (int t = 0; t < 50; ++t) {
      auto p = non_identity_permutation(n, rng);
      std::vector<std::size_t> identity(n);
      std::iota(identity.begin(), identity.end(), std::size_t{0});
      if (n >= 2) CHECK(p != identity);
      std::sort(p.begin(), p.end());
      CHECK(p == identity);
    }
  }
}

TEST_CASE("shuffle permutes tokens and embedding rows together") {
  const auto g = synthetic::planted();
  const auto vocab = synthetic::vocabulary(g);
  auto d = corpus(vocab, 30, 1);
  add_embeddings(d, 2);
  const auto s = shuffle_dataset(d, 9);
  REQUIRE(s.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto a = d.sentences[i].tokens;
    auto b = s.sentences[i].tokens;
    CHECK(s.trees[i].tree == d.trees[i].tree);
    for (std::size_t k = 0; k < b.size(); ++k) {
      CHECK(s.sentences[i].ids[k] == vocab.encode(b[k]));
      // Each shuffled row is some original row; the token at that row matches.
      const auto& rec = (*s.embeddings)[i];
      const auto& orig = (*d.embeddings)[i];
      bool found = false;
      for (std::size_t j = 0; j < a.size(); ++j) {
        if (orig.values[j * 2] == rec.values[k * 2] && orig.values[j * 2 + 1] == rec.values[k * 2 + 1]) {
          CHECK(a[j] == b[k]);
          found = true;
        }
      }
      CHECK(found);
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  const auto again = shuffle_dataset(d, 9);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(again.sentences[i].tokens == s.sentences[i].tokens);
}

TEST_CASE("zero_z on a zero_train model is bit-identical to default") {
  const auto vocab = synthetic::vocabulary(synthetic::planted());
  Model<double> m(small(true), vocab);
  m.initialize(1);
  const auto d = corpus(vocab, 20, 2);
  AblationOptions opts;
  const auto base = ablated_eval(m, d, opts);
  opts.mode = AblationMode::kZeroZ;
  const auto z = ablated_eval(m, d, opts);
  CHECK(z.trees == base.trees);
  CHECK(z.log_likelihoods == base.log_likelihoods);
  CHECK(*z.metrics.corpus_f1 == *base.metrics.corpus_f1);
  opts.mode = AblationMode::kRandomZ;
  CHECK(code_of([&] { ablated_eval(m, d, opts); }) == ErrorCode::kModeUnsupported);
}

TEST_CASE("random_z with batch size one is default") {
  const auto vocab = synthetic::vocabulary(synthetic::planted());
  Model<double> m(small(false), vocab);
  m.initialize(2);
  const auto d = corpus(vocab, 12, 3);
  AblationOptions opts;
  const auto base = ablated_eval(m, d, opts);
  opts.mode = AblationMode::kRandomZ;
  opts.batch_size = 1;
  const auto r1 = ablated_eval(m, d, opts);
  CHECK(r1.log_likelihoods == base.log_likelihoods);
  CHECK(r1.trees == base.trees);

  // Larger batches hand every sentence another sentence's posterior mean.
  opts.batch_size = 4;
  const auto r4 = ablated_eval(m, d, opts);
  const auto means = posterior_means(m, d, false, 1);
  std::size_t moved = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    bool matched = false;
    const auto& ids = d.sentences[i].ids;
    for (const auto& mu : means) {
      const double ll = inside_log_likelihood(m.rule_distribution(std::span<const double>(mu)), ids);
      if (std::abs(ll - r4.log_likelihoods[i]) < 1e-12) matched = true;
    }
    CHECK(matched);
    moved += r4.log_likelihoods[i] != base.log_likelihoods[i] ? 1 : 0;
  }
  CHECK(moved > 0);
}

TEST_CASE("shuffle of a symmetric corpus is default") {
  const Vocabulary vocab({"w"});
  Dataset d;
  for (std::size_t i = 0; i < 5; ++i) d.sentences.push_back(make_sentence({"w", "w"}, &vocab, i));
  Model<double> m(small(false), vocab);
  m.initialize(3);
  AblationOptions opts;
  const auto base = ablated_eval(m, d, opts);
  opts.mode = AblationMode::kShuffle;
  const auto s = ablated_eval(m, d, opts);
  CHECK(s.log_likelihoods == base.log_likelihoods);
  CHECK(s.trees == base.trees);
}

TEST_CASE("zero_captions zeroes the encoder input") {
  const auto vocab = synthetic::vocabulary(synthetic::planted());
  Model<double> m(small(false, EncoderMode::kLlm), vocab, 2);
  m.initialize(4);
  auto d = corpus(vocab, 8, 4);
  add_embeddings(d, 2);
  AblationOptions opts;
  opts.mode = AblationMode::kZeroCaptions;
  const auto zc = ablated_eval(m, d, opts);
  EvalOptions direct;
  direct.zero_input = true;
  CHECK(zc.log_likelihoods == evaluate(m, d, direct).log_likelihoods);
  // With zero input every sentence gets the same latent: the encoder bias.
  const auto means = posterior_means(m, d, true, 1);
  for (const auto& mu : means) CHECK(mu == means[0]);
}

TEST_CASE("ablation report") {
  Metrics metrics;
  metrics.corpus_f1 = 0.5;
  Config c;
  const auto j = nlohmann::json::parse(ablation_json(AblationMode::kShuffle, metrics, c));
  CHECK(j["mode"] == "shuffle");
  CHECK(j["metrics"]["corpus_f1"] == 0.5);
  CHECK(j["config_hash"] == hash_hex(c.hash()));
  CHECK(j["config"]["train.batch_size"] == "4");
}
