#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "expect_error.hpp"
#include "induce/encoder.hpp"

using namespace induce;
using doctest::Approx;

namespace {

// Closed-form KL(N(mu, exp(lv)) || N(0, 1)) for a single coordinate.
double kl_1d(double mu, double lv) { return 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv); }

EmbeddingRecord record(std::size_t tokens, std::size_t dim, std::vector<float> values) {
  return EmbeddingRecord{static_cast<std::uint32_t>(tokens), static_cast<std::uint32_t>(dim), std::move(values)};
}

template <typename T>
std::vector<T> vec(std::span<const T> s) {
  return {s.begin(), s.end()};
}

}  // namespace

TEST_CASE("reparameterized sample") {
  const std::vector<double> mu{1.0};
  const std::vector<double> lv{std::log(4.0)};
  const std::vector<double> eps{0.5};
  const auto s = sample_latent(mu, lv, eps);
  CHECK(s.z[0] == Approx(2.0).epsilon(1e-12));
  CHECK(s.mu == mu);
  CHECK(s.noise == eps);
  const std::vector<double> bad{0.0, 0.0};
  CHECK(code_of([&] { sample_latent(mu, lv, bad); }) == ErrorCode::kDimMismatch);
}

TEST_CASE("kl against a standard normal") {
  CHECK(kl_standard_normal(std::vector<double>{0.0}, std::vector<double>{std::log(2.0)}) ==
        Approx(kl_1d(0.0, std::log(2.0))).epsilon(1e-12));
  CHECK(kl_standard_normal(std::vector<double>{0.0}, std::vector<double>{std::log(2.0)}) ==
        Approx(0.1534).epsilon(1e-4));
  CHECK(kl_standard_normal(std::vector<double>{1.0}, std::vector<double>{0.0}) == Approx(0.5));
  CHECK(kl_standard_normal(std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.0}) == 0.0);
}

TEST_CASE("kl is non-negative and additive over coordinates") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> mu(3);
    std::vector<double> lv(3);
    double expect = 0;
    for (int i = 0; i < 3; ++i) {
      mu[i] = g(rng);
      lv[i] = g(rng);
      expect += kl_1d(mu[i], lv[i]);
    }
    const double kl = kl_standard_normal(mu, lv);
    CHECK(kl >= 0.0);
    CHECK(kl == Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("graph kl and reparameterization gradients") {
  Graph<double> g;
  Array<double> mu_v = Array<double>::vector({0.3, -1.2});
  Array<double> lv_v = Array<double>::vector({0.5, -0.7});
  Array<double> mu_grad(Shape{2});
  Array<double> lv_grad(Shape{2});
  auto mu = g.param(mu_v, &mu_grad);
  auto lv = g.param(lv_v, &lv_grad);
  auto kl = kl_standard_normal(mu, lv);
  CHECK(kl.item() == Approx(kl_1d(0.3, 0.5) + kl_1d(-1.2, -0.7)).epsilon(1e-12));
  g.backward(kl);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(mu_grad[i] == Approx(mu_v[i]).epsilon(1e-12));
    CHECK(lv_grad[i] == Approx(0.5 * (std::exp(lv_v[i]) - 1.0)).epsilon(1e-12));
  }

  Graph<double> h;
  Array<double> mg(Shape{2});
  Array<double> lg(Shape{2});
  auto m2 = h.param(mu_v, &mg);
  auto l2 = h.param(lv_v, &lg);
  const auto eps = Array<double>::vector({0.25, -2.0});
  auto z = reparameterize(m2, l2, eps);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(z.value()[i] == Approx(mu_v[i] + std::exp(lv_v[i] / 2) * eps[i]).epsilon(1e-12));
  }
  h.backward(sum(z));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(mg[i] == Approx(1.0));
    CHECK(lg[i] == Approx(0.5 * std::exp(lv_v[i] / 2) * eps[i]).epsilon(1e-12));
  }
}

TEST_CASE("dropout mask is inverted and seeded") {
  std::mt19937_64 rng(3);
  const auto mask = dropout_mask<double>(10000, 0.5, rng);
  double total = 0;
  for (double m : mask.values()) {
    CHECK((m == 0.0 || m == 2.0));
    total += m;
  }
  CHECK(total / 10000.0 == Approx(1.0).epsilon(0.05));
  std::mt19937_64 a(11);
  std::mt19937_64 b(11);
  const auto ma = dropout_mask<float>(64, 0.3, a);
  const auto mb = dropout_mask<float>(64, 0.3, b);
  CHECK(vec(ma.values()) == vec(mb.values()));
  std::mt19937_64 c(1);
  const auto ones = dropout_mask<double>(16, 0.0, c);
  for (double m : ones.values()) CHECK(m == 1.0);
}

TEST_CASE("encoder configuration checks") {
  CHECK(parse_encoder_mode("llm") == EncoderMode::kLlm);
  CHECK(parse_encoder_mode("baseline") == EncoderMode::kBaseline);
  CHECK(code_of([] { parse_encoder_mode("bert"); }) == ErrorCode::kConfig);
  CHECK(code_of([] { Encoder<double>(EncoderConfig{EncoderMode::kLlm, 4, 2, 1.0}, 5); }) == ErrorCode::kConfig);
  CHECK(code_of([] { Encoder<double>(EncoderConfig{EncoderMode::kLlm, 0, 2, 0.5}, 5); }) == ErrorCode::kConfig);
}

TEST_CASE("llm encoder is an affine map of the mean embedding") {
  Encoder<double> enc(EncoderConfig{EncoderMode::kLlm, 3, 2, 0.5}, 5);
  ParamStore<double> store;
  enc.register_params(store);
  CHECK(store.find("encoder.word_emb") == std::nullopt);
  auto& w = store.value(store.index("encoder.head.w"));
  auto& b = store.value(store.index("encoder.head.b"));
  CHECK(w.shape() == Shape{4, 3});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.1 * static_cast<double>(i) - 0.4;
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = static_cast<double>(i);

  const std::vector<std::size_t> ids{1, 2};
  const auto rec = record(2, 3, {1, 2, 3, 3, 2, 1});
  Graph<double> g;
  ParamBinder<double> binder(g, store);
  const auto post = enc.encode(binder, ids, &rec, {});
  const double pooled[3] = {2, 2, 2};
  for (std::size_t r = 0; r < 4; ++r) {
    double expect = b[r];
    for (std::size_t c = 0; c < 3; ++c) expect += w[r * 3 + c] * pooled[c];
    const double got = r < 2 ? post.mu.value()[r] : post.log_var.value()[r - 2];
    CHECK(got == Approx(expect).epsilon(1e-12));
  }

  // Mean pooling ignores row order.
  const auto swapped = record(2, 3, {3, 2, 1, 1, 2, 3});
  Graph<double> g2;
  ParamBinder<double> binder2(g2, store);
  const auto post2 = enc.encode(binder2, ids, &swapped, {});
  CHECK(vec(post2.mu.value().values()) == vec(post.mu.value().values()));

  Graph<double> g3;
  ParamBinder<double> binder3(g3, store);
  const auto zeroed = enc.encode(binder3, ids, &rec, EncodeOptions{true, nullptr});
  CHECK(zeroed.mu.value()[0] == 0.0);
  CHECK(zeroed.mu.value()[1] == 1.0);
  CHECK(zeroed.log_var.value()[0] == 2.0);

  Graph<double> g4;
  ParamBinder<double> binder4(g4, store);
  CHECK(code_of([&] { enc.encode(binder4, ids, nullptr, {}); }) == ErrorCode::kConfig);
  const auto narrow = record(2, 2, {1, 2, 3, 4});
  CHECK(code_of([&] { enc.encode(binder4, ids, &narrow, {}); }) == ErrorCode::kDimMismatch);
  const auto short_rec = record(1, 3, {1, 2, 3});
  CHECK(code_of([&] { enc.encode(binder4, ids, &short_rec, {}); }) == ErrorCode::kDimMismatch);
}

TEST_CASE("baseline encoder looks up learned word embeddings") {
  Encoder<double> enc(EncoderConfig{EncoderMode::kBaseline, 2, 1, 0.5}, 4);
  ParamStore<double> store;
  enc.register_params(store);
  auto& emb = store.value(store.index("encoder.word_emb"));
  CHECK(emb.shape() == Shape{4, 2});
  for (std::size_t i = 0; i < emb.size(); ++i) emb[i] = static_cast<double>(i);
  auto& w = store.value(store.index("encoder.head.w"));
  w[0] = 1;
  w[1] = 0;
  w[2] = 0;
  w[3] = 1;
  Graph<double> g;
  ParamBinder<double> binder(g, store);
  const std::vector<std::size_t> ids{1, 3};
  const auto post = enc.encode(binder, ids, nullptr, {});
  CHECK(post.mu.value()[0] == Approx((2.0 + 6.0) / 2));
  CHECK(post.log_var.value()[0] == Approx((3.0 + 7.0) / 2));
}
