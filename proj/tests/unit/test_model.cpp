#include <cmath>
#include <fstream>

#include "doctest.h"
#include "expect_error.hpp"
#include "induce/model.hpp"
#include "induce/parser.hpp"
#include "temp_dir.hpp"

using namespace induce;
using doctest::Approx;

namespace {

Config small_config(bool zero_train, EncoderMode mode = EncoderMode::kBaseline) {
  Config c;
  c.nonterminals = 2;
  c.preterminals = 3;
  c.symbol_dim = 6;
  c.z_dim = 3;
  c.word_dim = 5;
  c.mode = mode;
  c.zero_train = zero_train;
  return c;
}

Vocabulary vocab() { return Vocabulary({"a", "b", "c"}); }

bool is_bias(const std::string& name) {
  return name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2");
}

}  // namespace

TEST_CASE("model composition") {
  Model<double> zt(small_config(true), vocab());
  CHECK_FALSE(zt.latent());
  CHECK(zt.encoder() == nullptr);
  CHECK(zt.z_dim() == 0);
  CHECK_FALSE(zt.needs_embeddings());
  CHECK(zt.inventory().vocab_size == 4);
  CHECK(code_of([&] { zt.posterior_mean(std::vector<std::size_t>{1, 2}, nullptr); }) ==
        ErrorCode::kModeUnsupported);

  Model<double> base(small_config(false), vocab());
  CHECK(base.latent());
  CHECK(base.z_dim() == 3);
  CHECK(base.params().find("encoder.word_emb").has_value());

  CHECK(code_of([] { Model<double>(small_config(false, EncoderMode::kLlm), vocab()); }) == ErrorCode::kConfig);
  Model<double> llm(small_config(false, EncoderMode::kLlm), vocab(), 8);
  CHECK(llm.needs_embeddings());
  CHECK(llm.embedding_dim() == 8);
  CHECK_FALSE(llm.params().find("encoder.word_emb").has_value());
}

TEST_CASE("initialization is seeded, bounded and zeroes biases") {
  Model<double> a(small_config(false), vocab());
  Model<double> b(small_config(false), vocab());
  a.initialize(5);
  b.initialize(5);
  const auto& p = a.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p.value(i).values().size() == b.params().value(i).values().size());
    for (std::size_t k = 0; k < p.value(i).size(); ++k) CHECK(p.value(i)[k] == b.params().value(i)[k]);
    const auto& v = p.value(i);
    if (is_bias(p.name(i))) {
      for (double x : v.values()) CHECK(x == 0.0);
    } else {
      const double bound = std::sqrt(6.0 / static_cast<double>(v.rows() + v.cols()));
      for (double x : v.values()) CHECK(std::abs(x) <= bound);
    }
  }
  b.initialize(6);
  CHECK(b.params().value(0)[0] != p.value(0)[0]);
}

TEST_CASE("rule distribution is normalized and agrees with the graph likelihood") {
  for (bool zero_train : {true, false}) {
    Model<double> m(small_config(zero_train), vocab());
    m.initialize(1);
    const std::vector<double> z{0.3, -0.2, 1.0};
    std::optional<std::span<const double>> zs;
    if (!zero_train) zs = std::span<const double>(z);
    const auto rules = m.rule_distribution(zs);
    CHECK(rules.max_normalization_error() < 1e-9);

    Graph<double> g;
    ParamBinder<double> binder(g, m.params());
    std::optional<Var<double>> zv;
    if (!zero_train) zv = g.constant(Array<double>::vector(z));
    const auto logits = m.grammar().rule_distributions(binder, zv);
    const std::vector<std::size_t> ids{1, 2, 3, 1};
    CHECK(m.log_likelihood(logits, ids).item() == Approx(inside_log_likelihood(rules, ids)).epsilon(1e-10));
  }
  Model<double> latent(small_config(false), vocab());
  latent.initialize(2);
  CHECK(code_of([&] { latent.rule_distribution(std::nullopt); }) == ErrorCode::kDimMismatch);
}

TEST_CASE("checkpoint round trip") {
  TempDir dir;
  const auto path = dir.path() / "m.ckp";
  Model<float> m(small_config(false, EncoderMode::kLlm), vocab(), 8);
  m.initialize(9);
  save_checkpoint(m, path);
  CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  const auto back = load_checkpoint<float>(path);
  CHECK(back.config().hash() == m.config().hash());
  CHECK(back.vocab().tokens() == m.vocab().tokens());
  CHECK(back.embedding_dim() == 8);
  REQUIRE(back.params().size() == m.params().size());
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    CHECK(back.params().name(i) == m.params().name(i));
    CHECK(back.params().value(i).shape() == m.params().value(i).shape());
    for (std::size_t k = 0; k < m.params().value(i).size(); ++k) {
      CHECK(back.params().value(i)[k] == m.params().value(i)[k]);
    }
  }
  CHECK(checkpoint_config(path).to_text() == m.config().to_text());

  // A 64-bit model is stored in 32-bit floats.
  Model<double> d(small_config(true), vocab());
  d.initialize(4);
  save_checkpoint(d, path);
  const auto d2 = load_checkpoint<double>(path);
  for (std::size_t i = 0; i < d.params().size(); ++i) {
    for (std::size_t k = 0; k < d.params().value(i).size(); ++k) {
      CHECK(d2.params().value(i)[k] == static_cast<double>(static_cast<float>(d.params().value(i)[k])));
    }
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir dir;
  const auto path = dir.path() / "m.ckp";
  Model<float> m(small_config(true), vocab());
  m.initialize(1);
  save_checkpoint(m, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) { std::ofstream(path, std::ios::binary | std::ios::trunc) << b; };

  write(bytes + "x");
  CHECK(code_of([&] { load_checkpoint<float>(path); }) == ErrorCode::kFormat);
  write(bytes.substr(0, bytes.size() - 3));
  CHECK(code_of([&] { load_checkpoint<float>(path); }) == ErrorCode::kFormat);
  auto wrong_magic = bytes;
  wrong_magic[0] = 'X';
  write(wrong_magic);
  CHECK(code_of([&] { load_checkpoint<float>(path); }) == ErrorCode::kFormat);
  // Alter a config value without updating the stored hash.
  auto tampered = bytes;
  const auto at = tampered.find("train.epochs=10");
  REQUIRE(at != std::string::npos);
  tampered[at + 13] = '9';
  write(tampered);
  CHECK(code_of([&] { load_checkpoint<float>(path); }) == ErrorCode::kFormat);
  CHECK(code_of([&] { load_checkpoint<float>(dir.path() / "none.ckp"); }) == ErrorCode::kIo);
}
