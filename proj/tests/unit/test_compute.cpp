#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "induce/compute.hpp"

using namespace induce;
using doctest::Approx;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an induce::Error");
  return ErrorCode::kIo;
}

Array<double> random_array(Shape shape, std::mt19937& rng, double scale = 1.0) {
  Array<double> a(std::move(shape));
  std::normal_distribution<double> normal(0.0, scale);
  for (auto& x : a.values()) x = normal(rng);
  return a;
}

}  // namespace

TEST_CASE("logsumexp is stable and handles -inf") {
  const std::vector<double> zeros = {0, 0};
  CHECK(logsumexp(std::span<const double>(zeros)) == Approx(std::log(2.0)).epsilon(1e-15));
  const std::vector<double> big = {1000, 1000};
  CHECK(logsumexp(std::span<const double>(big)) == Approx(1000 + std::log(2.0)).epsilon(1e-15));
  const std::vector<double> with_inf = {0, -kInf};
  CHECK(logsumexp(std::span<const double>(with_inf)) == 0.0);
  const std::vector<double> all_inf = {-kInf, -kInf};
  CHECK(logsumexp(std::span<const double>(all_inf)) == -kInf);
  const std::vector<double> empty;
  CHECK(code_of([&] { logsumexp(std::span<const double>(empty)); }) == ErrorCode::kEmptyInput);
}

TEST_CASE("log_softmax matches the closed form") {
  const std::vector<double> zeros = {0, 0};
  for (double v : log_softmax(std::span<const double>(zeros))) CHECK(v == Approx(-std::log(2.0)));
  const std::vector<double> one_zero = {1, 0};
  const auto out = log_softmax(std::span<const double>(one_zero));
  // 1 - log(e + 1) and -log(e + 1)
  const double z = std::log(std::exp(1.0) + 1.0);
  CHECK(out[0] == Approx(1 - z).epsilon(1e-12));
  CHECK(out[1] == Approx(-z).epsilon(1e-12));
  CHECK(out[0] == Approx(-0.31326).epsilon(1e-5));
  CHECK(out[1] == Approx(-1.31326).epsilon(1e-5));
}

TEST_CASE("log_softmax normalizes and is shift invariant") {
  std::mt19937 rng(5);
  std::normal_distribution<double> normal(0.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + rng() % 12);
    for (auto& x : v) x = normal(rng);
    const auto a = log_softmax(std::span<const double>(v));
    double total = 0;
    for (double x : a) total += std::exp(x);
    CHECK(std::abs(total - 1.0) <= 1e-6);
    const double c = normal(rng);
    auto shifted = v;
    for (auto& x : shifted) x += c;
    const auto b = log_softmax(std::span<const double>(shifted));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(a[i] == Approx(b[i]).epsilon(1e-9));
  }
}

TEST_CASE("backward on identity, product and logsumexp") {
  ParamStore<double> store;
  const auto p = store.add("p", {1});
  const auto q = store.add("q", {1});
  const auto unused = store.add("unused", {3});
  store.value(p)[0] = 2.0;
  store.value(q)[0] = 3.0;

  {
    Graph<double> g;
    auto root = g.param(store, p);
    g.backward(root);
    CHECK(store.grad(p)[0] == 1.0);
  }
  store.zero_grad();
  {
    Graph<double> g;
    auto root = mul(g.param(store, p), g.param(store, q));
    g.backward(root);
    CHECK(store.grad(p)[0] == 3.0);
    CHECK(store.grad(q)[0] == 2.0);
    for (double x : store.grad(unused).values()) CHECK(x == 0.0);
  }
  store.zero_grad();
  store.value(p)[0] = 0.0;
  {
    Graph<double> g;
    auto pair = concat(g.param(store, p), g.constant(Array<double>::scalar(0.0)));
    auto root = logsumexp(pair);
    g.backward(root);
    // d/dp log(e^p + 1) = e^p / (e^p + 1)
    CHECK(store.grad(p)[0] == Approx(std::exp(0.0) / (std::exp(0.0) + 1.0)));
  }
}

TEST_CASE("backward rejects non-scalar roots") {
  Graph<double> g;
  auto v = g.constant(Array<double>(Shape{3}));
  CHECK(code_of([&] { g.backward(v); }) == ErrorCode::kNonScalarRoot);
}

TEST_CASE("backward visits shared subexpressions once") {
  ParamStore<double> store;
  const auto p = store.add("p", {1});
  store.value(p)[0] = 1.5;
  Graph<double> g;
  auto x = g.param(store, p);
  auto y = mul(x, x);
  auto root = add(y, y);  // 2 p^2
  g.backward(root);
  CHECK(store.grad(p)[0] == Approx(4 * 1.5));
}

TEST_CASE("backward is linear in the root") {
  std::mt19937 rng(9);
  ParamStore<double> store;
  const auto w = store.add("w", {3, 4});
  const auto x = store.add("x", {4});
  store.value(w) = random_array({3, 4}, rng);
  store.value(x) = random_array({4}, rng);
  auto f = [&](Graph<double>& g) { return logsumexp(linear(g.param(store, x), g.param(store, w))); };
  auto h = [&](Graph<double>& g) { return sum(relu(linear(g.param(store, x), g.param(store, w)))); };
  const double a = 0.7;
  const double b = -1.3;

  auto grads_of = [&](auto build) {
    store.zero_grad();
    Graph<double> g;
    g.backward(build(g));
    return std::make_pair(store.grad(w), store.grad(x));
  };
  const auto gf = grads_of(f);
  const auto gh = grads_of(h);
  const auto gc = grads_of([&](Graph<double>& g) { return add(scale(f(g), a), scale(h(g), b)); });
  for (std::size_t i = 0; i < gc.first.size(); ++i) {
    CHECK(gc.first[i] == Approx(a * gf.first[i] + b * gh.first[i]).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < gc.second.size(); ++i) {
    CHECK(gc.second[i] == Approx(a * gf.second[i] + b * gh.second[i]).epsilon(1e-12));
  }
}

TEST_CASE("finite differences on simple losses") {
  std::mt19937 rng(1);
  ParamStore<double> store;
  const auto p = store.add("p", {5});
  store.value(p) = random_array({5}, rng);

  auto quadratic = [p](Graph<double>& g, ParamStore<double>& s) {
    auto v = g.param(s, p);
    return scale(sum(mul(v, v)), 0.5);
  };
  CHECK(finite_diff_check(quadratic, store, 1e-4).max_relative_error < 1e-8);

  auto constant = [](Graph<double>& g, ParamStore<double>&) {
    return g.constant(Array<double>::scalar(4.0));
  };
  const auto flat = finite_diff_check(constant, store, 1e-4);
  CHECK(flat.max_relative_error == 0.0);
  for (double x : store.grad(p).values()) CHECK(x == 0.0);

  int calls = 0;
  auto drifting = [&](Graph<double>& g, ParamStore<double>& s) {
    ++calls;
    return add_scalar(sum(g.param(s, p)), static_cast<double>(calls));
  };
  CHECK(code_of([&] { finite_diff_check(drifting, store, 1e-4); }) ==
        ErrorCode::kNonDeterministicLoss);
}

TEST_CASE("every operation passes a finite-difference check") {
  std::mt19937 rng(21);
  ParamStore<double> s;
  const auto w = s.add("w", {3, 5});
  const auto b = s.add("b", {3});
  const auto x = s.add("x", {4, 5});
  const auto z = s.add("z", {2});
  const auto v = s.add("v", {3});
  for (std::size_t i = 0; i < s.size(); ++i) s.value(i) = random_array(s.value(i).shape(), rng);
  Array<double> mask(Shape{3}, 0.0);
  mask[0] = 2.0;
  mask[2] = 2.0;

  auto loss = [&](Graph<double>& g, ParamStore<double>& st) {
    auto W = g.param(st, w);
    auto B = g.param(st, b);
    auto X = g.param(st, x);
    auto Z = g.param(st, z);
    auto V = g.param(st, v);
    auto h = linear(X, W, B);                        // [4,3]
    auto rows = log_softmax(concat_rows(h, Z));      // [4,5]
    auto pooled = mean_rows(gather_rows(X, {3, 0, 3}));  // [5]
    auto lv = logsumexp(rows);                       // [4]
    auto cols = select_columns(rows, {4, 1});        // [2,4]
    auto part = slice(concat(pooled, Z), 2, 6);      // [4]
    auto e = exp(scale(part, 0.3));
    auto m = mul_const(sub(V, add_scalar(V, 0.2)), mask);
    auto r = reshape(cols, {8});
    auto total = add(add(sum(mul(lv, e)), sum(relu(r))), sum(mul(m, V)));
    return add(total, logsumexp(linear(pooled, W)));
  };
  const auto res = finite_diff_check(loss, s, 1e-5);
  CHECK(res.max_relative_error < 1e-7);
  CHECK(res.coordinates == s.parameter_count());
}

TEST_CASE("shape mismatches raise DimMismatch") {
  Graph<double> g;
  auto a = g.constant(Array<double>(Shape{2}));
  auto b = g.constant(Array<double>(Shape{3}));
  CHECK(code_of([&] { add(a, b); }) == ErrorCode::kDimMismatch);
  auto w = g.constant(Array<double>(Shape{4, 4}));
  CHECK(code_of([&] { linear(a, w); }) == ErrorCode::kDimMismatch);
  auto empty = g.constant(Array<double>(Shape{0, 3}));
  CHECK(code_of([&] { mean_rows(empty); }) == ErrorCode::kEmptyInput);
}
