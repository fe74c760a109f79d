#pragma once

// Minimal reverse-mode differentiation over dense rank-1/rank-2 arrays.
//
// A Graph is a tape: every operation appends a node holding its value and a
// closure that pushes the node's gradient to its parents. Parents always have
// smaller ids than children, so walking ids downward from the root visits
// every node once in reverse topological order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <type_traits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "induce/error.hpp"

namespace induce {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

template <typename Real>
class Array {
 public:
  using value_type = Real;

  Array() = default;
  explicit Array(Shape shape, Real fill = Real(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Array(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      fail(ErrorCode::kDimMismatch, "data size does not match shape " + shape_string(shape_));
    }
  }

  static Array scalar(Real v) { return Array(Shape{1}, v); }
  static Array vector(std::vector<Real> v) {
    const auto n = v.size();
    return Array(Shape{n}, std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  // Rank-1 arrays behave as a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 1); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  std::span<Real> row(std::size_t r) { return std::span<Real>(data_).subspan(r * cols(), cols()); }
  std::span<const Real> row(std::size_t r) const {
    return std::span<const Real>(data_).subspan(r * cols(), cols());
  }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape(Shape shape) {
    if (shape_size(shape) != data_.size()) {
      fail(ErrorCode::kDimMismatch, "cannot reshape to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  template <typename Other>
  Array<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Array<Other>(shape_, std::move(out));
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

template <typename Real>
void add_into(std::span<Real> dst, std::span<const std::type_identity_t<Real>> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// ---------------------------------------------------------------------------
// Plain log-space helpers

template <typename Real>
Real logsumexp(std::span<const Real> v) {
  if (v.empty()) fail(ErrorCode::kEmptyInput, "logsumexp of empty vector");
  const Real m = *std::max_element(v.begin(), v.end());
  if (m == -std::numeric_limits<Real>::infinity()) return m;
  if (!std::isfinite(m)) return m;
  Real s = 0;
  for (Real x : v) s += std::exp(x - m);
  return m + std::log(s);
}

template <typename Real>
std::vector<Real> log_softmax(std::span<const Real> v) {
  const Real z = logsumexp(v);
  std::vector<Real> out(v.begin(), v.end());
  for (auto& x : out) x -= z;
  return out;
}

template <typename Real>
inline Real log_add(Real a, Real b) {
  constexpr Real kNegInf = -std::numeric_limits<Real>::infinity();
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

// ---------------------------------------------------------------------------
// Parameters

template <typename Real>
class ParamStore {
 public:
  std::size_t add(std::string name, Shape shape) {
    if (index_.contains(name)) fail(ErrorCode::kConfig, "duplicate parameter " + name);
    index_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    values_.emplace_back(shape);
    grads_.emplace_back(std::move(shape));
    return names_.size() - 1;
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Array<Real>& value(std::size_t i) { return values_[i]; }
  const Array<Real>& value(std::size_t i) const { return values_[i]; }
  Array<Real>& grad(std::size_t i) { return grads_[i]; }
  const Array<Real>& grad(std::size_t i) const { return grads_[i]; }
  std::vector<Array<Real>>& grads() { return grads_; }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t index(const std::string& name) const {
    auto i = find(name);
    if (!i) fail(ErrorCode::kConfig, "unknown parameter " + name);
    return *i;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  void zero_grad() {
    for (auto& g : grads_) g.fill(Real(0));
  }

  double grad_norm() const {
    double s = 0;
    for (const auto& g : grads_) {
      for (Real x : g.values()) s += static_cast<double>(x) * static_cast<double>(x);
    }
    return std::sqrt(s);
  }

  bool all_finite() const {
    for (const auto& v : values_) {
      for (Real x : v.values()) {
        if (!std::isfinite(x)) return false;
      }
    }
    return true;
  }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (std::size_t i = 0; i < size(); ++i) {
      out.add(names_[i], values_[i].shape());
      out.value(i) = values_[i].template cast<Other>();
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Array<Real>> values_;
  std::vector<Array<Real>> grads_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Tape

template <typename Real>
class Graph;

template <typename Real>
struct Var {
  Graph<Real>* graph = nullptr;
  std::size_t id = 0;

  const Array<Real>& value() const { return graph->value(id); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  Real item() const { return value()[0]; }
};

template <typename Real>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<Real> constant(Array<Real> value) { return push(std::move(value), nullptr); }

  // Leaf bound to a stored parameter; its gradient is accumulated into
  // store.grad(index) by backward().
  Var<Real> param(ParamStore<Real>& store, std::size_t index) {
    return param(store.value(index), &store.grad(index));
  }
  Var<Real> param(const Array<Real>& value, Array<Real>* grad_sink) {
    Node node;
    node.ref = &value;
    node.sink = grad_sink;
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
  }

  // Appends an operation result. fn reads grad(self) and adds into parents.
  Var<Real> record(Array<Real> value, BackwardFn fn) { return push(std::move(value), std::move(fn)); }

  const Array<Real>& value(std::size_t id) const {
    const auto& n = nodes_[id];
    return n.ref != nullptr ? *n.ref : n.value;
  }

  Array<Real>& grad(std::size_t id) {
    auto& n = nodes_[id];
    if (!n.live) {
      n.grad = Array<Real>(value(id).shape());
      n.live = true;
    }
    return n.grad;
  }
  bool has_grad(std::size_t id) const { return nodes_[id].live; }

  std::size_t size() const { return nodes_.size(); }

  void backward(Var<Real> root, Real seed = Real(1)) {
    if (root.graph != this) fail(ErrorCode::kNonScalarRoot, "root belongs to another graph");
    if (value(root.id).size() != 1) {
      fail(ErrorCode::kNonScalarRoot, "backward root has shape " + shape_string(root.shape()));
    }
    grad(root.id)[0] += seed;
    for (std::size_t id = root.id + 1; id-- > 0;) {
      auto& n = nodes_[id];
      if (!n.live) continue;
      if (n.fn) n.fn(*this, id);
      if (n.sink != nullptr) add_into(n.sink->values(), std::span<const Real>(n.grad.values()));
    }
  }

 private:
  struct Node {
    Array<Real> value;
    const Array<Real>* ref = nullptr;
    Array<Real> grad;
    bool live = false;
    Array<Real>* sink = nullptr;
    BackwardFn fn;
  };

  Var<Real> push(Array<Real> value, BackwardFn fn) {
    Node node;
    node.value = std::move(value);
    node.fn = std::move(fn);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::kDimMismatch, what);
}

template <typename Real>
void require_same(const Var<Real>& a, const Var<Real>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shapes " + shape_string(a.shape()) +
                                      " and " + shape_string(b.shape()) + " differ");
}

}  // namespace detail

template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  detail::require_same(a, b, "add");
  Array<Real> out = a.value();
  add_into(out.values(), b.value().values());
  return a.graph->record(std::move(out), [a, b](Graph<Real>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    add_into(g.grad(a.id).values(), gy.values());
    add_into(g.grad(b.id).values(), gy.values());
  });
}

template <typename Real>
Var<Real> sub(Var<Real> a, Var<Real> b) {
  detail::require_same(a, b, "sub");
  Array<Real> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.graph->record(std::move(out), [a, b](Graph<Real>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    add_into(g.grad(a.id).values(), gy.values());
    auto& gb = g.grad(b.id);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i];
  });
}

template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  detail::require_same(a, b, "mul");
  Array<Real> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.graph->record(std::move(out), [a, b](Graph<Real>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    const auto& av = g.value(a.id);
    const auto& bv = g.value(b.id);
    auto& ga = g.grad(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bv[i];
    auto& gb = g.grad(b.id);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * av[i];
  });
}

// Elementwise product with a constant array (dropout masks).
template <typename Real>
Var<Real> mul_const(Var<Real> a, Array<Real> mask) {
  detail::require(a.shape() == mask.shape(), "mul_const: mask shape differs");
  Array<Real> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return a.graph->record(std::move(out),
                         [a, mask = std::move(mask)](Graph<Real>& g, std::size_t self) {
                           const auto& gy = g.grad(self);
                           auto& ga = g.grad(a.id);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * mask[i];
                         });
}

template <typename Real>
Var<Real> scale(Var<Real> a, Real c) {
  Array<Real> out = a.value();
  for (auto& x : out.values()) x *= c;
  return a.graph->record(std::move(out), [a, c](Graph<Real>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    auto& ga = g.grad(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * gy[i];
  });
}

template <typename Real>
Var<Real> add_scalar(Var<Real> a, Real c) {
  Array<Real> out = a.value();
  for (auto& x : out.values()) x += c;
  return a.graph->record(std::move(out), [a](Graph<Real>& g, std::size_t self) {
    add_into(g.grad(a.id).values(), g.grad(self).values());
  });
}

template <typename Real>
Var<Real> exp(Var<Real> a) {
  Array<Real> out = a.value();
  for (auto& x : out.values()) x = std::exp(x);
  return a.graph->record(std::move(out), [a](Graph<Real>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    const auto& y = g.value(self);
    auto& ga = g.grad(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * y[i];
  });
}

template <typename Real>
Var<Real> relu(Var<Real> a) {
  Array<Real> out = a.value();
  for (auto& x : out.values()) x = x > Real(0) ? x : Real(0);
  return a.graph->record(std::move(out), [a](Graph<Real>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    const auto& x = g.value(a.id);
    auto& ga = g.grad(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (x[i] > Real(0)) ga[i] += gy[i];
    }
  });
}

template <typename Real>
Var<Real> sum(Var<Real> a) {
  const auto& v = a.value().values();
  Real s = std::accumulate(v.begin(), v.end(), Real(0));
  return a.graph->record(Array<Real>::scalar(s), [a](Graph<Real>& g, std::size_t self) {
    const Real gy = g.grad(self)[0];
    for (auto& x : g.grad(a.id).values()) x += gy;
  });
}

// y = x W^T + b. x is [in] or [m, in]; W is [out, in]; b is [out].
template <typename Real>
Var<Real> linear(Var<Real> x, Var<Real> weight,
                 std::optional<std::type_identity_t<Var<Real>>> bias = std::nullopt) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  detail::require(wv.rank() == 2, "linear: weight must be rank 2");
  detail::require(xv.rank() == 1 || xv.rank() == 2, "linear: input must be rank 1 or 2");
  const std::size_t m = xv.rows();
  const std::size_t in = xv.cols();
  const std::size_t out_dim = wv.shape()[0];
  detail::require(wv.shape()[1] == in, "linear: weight " + shape_string(wv.shape()) +
                                           " vs input " + shape_string(xv.shape()));
  if (bias) {
    detail::require(bias->shape() == Shape{out_dim}, "linear: bias shape");
  }
  Array<Real> out(xv.rank() == 1 ? Shape{out_dim} : Shape{m, out_dim});
  for (std::size_t r = 0; r < m; ++r) {
    const Real* xr = xv.data() + r * in;
    Real* yr = out.data() + r * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const Real* wo = wv.data() + o * in;
      Real acc = bias ? bias->value()[o] : Real(0);
      for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
      yr[o] = acc;
    }
  }
  return x.graph->record(std::move(out), [x, weight, bias, m, in, out_dim](Graph<Real>& g,
                                                                          std::size_t self) {
    const auto& gy = g.grad(self);
    const auto& xv = g.value(x.id);
    const auto& wv = g.value(weight.id);
    auto& gx = g.grad(x.id);
    auto& gw = g.grad(weight.id);
    for (std::size_t r = 0; r < m; ++r) {
      const Real* gyr = gy.data() + r * out_dim;
      const Real* xr = xv.data() + r * in;
      Real* gxr = gx.data() + r * in;
      for (std::size_t o = 0; o < out_dim; ++o) {
        const Real go = gyr[o];
        if (go == Real(0)) continue;
        const Real* wo = wv.data() + o * in;
        Real* gwo = gw.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) {
          gxr[i] += go * wo[i];
          gwo[i] += go * xr[i];
        }
      }
    }
    if (bias) {
      auto& gb = g.grad(bias->id);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t o = 0; o < out_dim; ++o) gb[o] += gy[r * out_dim + o];
      }
    }
  });
}

// Rank-1 concatenation.
template <typename Real>
Var<Real> concat(Var<Real> a, Var<Real> b) {
  detail::require(a.value().rank() == 1 && b.value().rank() == 1, "concat: rank-1 inputs only");
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  Array<Real> out(Shape{na + nb});
  std::copy_n(a.value().data(), na, out.data());
  std::copy_n(b.value().data(), nb, out.data() + na);
  return a.graph->record(std::move(out), [a, b, na, nb](Graph<Real>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    add_into(g.grad(a.id).values(), gy.values().subspan(0, na));
    add_into(g.grad(b.id).values(), gy.values().subspan(na, nb));
  });
}

// Appends the same vector z to every row of X: [m, d] x [k] -> [m, d + k].
template <typename Real>
Var<Real> concat_rows(Var<Real> x, Var<Real> z) {
  const auto& xv = x.value();
  detail::require(xv.rank() == 2 && z.value().rank() == 1, "concat_rows: expects [m,d] and [k]");
  const std::size_t m = xv.rows();
  const std::size_t d = xv.cols();
  const std::size_t k = z.size();
  Array<Real> out(Shape{m, d + k});
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(xv.data() + r * d, d, out.data() + r * (d + k));
    std::copy_n(z.value().data(), k, out.data() + r * (d + k) + d);
  }
  return x.graph->record(std::move(out), [x, z, m, d, k](Graph<Real>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    auto& gx = g.grad(x.id);
    auto& gz = g.grad(z.id);
    for (std::size_t r = 0; r < m; ++r) {
      const Real* src = gy.data() + r * (d + k);
      for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += src[c];
      for (std::size_t c = 0; c < k; ++c) gz[c] += src[d + c];
    }
  });
}

// Mean over the rows of [m, d]; throws kEmptyInput when m == 0.
template <typename Real>
Var<Real> mean_rows(Var<Real> x) {
  const auto& xv = x.value();
  detail::require(xv.rank() == 2, "mean_rows: expects rank 2");
  const std::size_t m = xv.rows();
  const std::size_t d = xv.cols();
  if (m == 0) fail(ErrorCode::kEmptyInput, "mean over zero rows");
  Array<Real> out(Shape{d});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < d; ++c) out[c] += xv(r, c);
  }
  const Real inv = Real(1) / static_cast<Real>(m);
  for (auto& v : out.values()) v *= inv;
  return x.graph->record(std::move(out), [x, m, d, inv](Graph<Real>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    auto& gx = g.grad(x.id);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += gy[c] * inv;
    }
  });
}

// Rows of X [V, d] picked by ids -> [n, d].
template <typename Real>
Var<Real> gather_rows(Var<Real> x, std::vector<std::size_t> ids) {
  const auto& xv = x.value();
  detail::require(xv.rank() == 2, "gather_rows: expects rank 2");
  const std::size_t d = xv.cols();
  Array<Real> out(Shape{ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    detail::require(ids[i] < xv.rows(), "gather_rows: index out of range");
    std::copy_n(xv.data() + ids[i] * d, d, out.data() + i * d);
  }
  return x.graph->record(std::move(out), [x, ids = std::move(ids), d](Graph<Real>& g,
                                                                      std::size_t self) {
    const auto& gy = g.grad(self);
    auto& gx = g.grad(x.id);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) gx[ids[i] * d + c] += gy[i * d + c];
    }
  });
}

// Columns of X [r, V] picked by ids, transposed: out[i][t] = X[t][ids[i]] -> [n, r].
template <typename Real>
Var<Real> select_columns(Var<Real> x, std::vector<std::size_t> ids) {
  const auto& xv = x.value();
  detail::require(xv.rank() == 2, "select_columns: expects rank 2");
  const std::size_t rows = xv.rows();
  const std::size_t cols = xv.cols();
  Array<Real> out(Shape{ids.size(), rows});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    detail::require(ids[i] < cols, "select_columns: index out of range");
    for (std::size_t t = 0; t < rows; ++t) out(i, t) = xv(t, ids[i]);
  }
  return x.graph->record(std::move(out), [x, ids = std::move(ids), rows, cols](Graph<Real>& g,
                                                                               std::size_t self) {
    const auto& gy = g.grad(self);
    auto& gx = g.grad(x.id);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t t = 0; t < rows; ++t) gx[t * cols + ids[i]] += gy[i * rows + t];
    }
  });
}

// Contiguous piece [begin, end) of a rank-1 array.
template <typename Real>
Var<Real> slice(Var<Real> a, std::size_t begin, std::size_t end) {
  detail::require(a.value().rank() == 1 && begin <= end && end <= a.size(), "slice: bad range");
  Array<Real> out(Shape{end - begin});
  std::copy(a.value().data() + begin, a.value().data() + end, out.data());
  return a.graph->record(std::move(out), [a, begin, end](Graph<Real>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    auto& ga = g.grad(a.id);
    for (std::size_t i = begin; i < end; ++i) ga[i] += gy[i - begin];
  });
}

template <typename Real>
Var<Real> reshape(Var<Real> a, Shape shape) {
  Array<Real> out = a.value();
  out.reshape(std::move(shape));
  return a.graph->record(std::move(out), [a](Graph<Real>& g, std::size_t self) {
    add_into(g.grad(a.id).values(), g.grad(self).values());
  });
}

// Normalizes each row (rank 2) or the whole vector (rank 1) in log space.
template <typename Real>
Var<Real> log_softmax(Var<Real> a) {
  const auto& av = a.value();
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  if (cols == 0) fail(ErrorCode::kEmptyInput, "log_softmax of empty rows");
  Array<Real> out = av;
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.row(r);
    const Real z = logsumexp(std::span<const Real>(row));
    for (auto& x : row) x -= z;
  }
  return a.graph->record(std::move(out), [a, rows, cols](Graph<Real>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    const auto& y = g.value(self);
    auto& ga = g.grad(a.id);
    for (std::size_t r = 0; r < rows; ++r) {
      Real total = 0;
      for (std::size_t c = 0; c < cols; ++c) total += gy[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        ga[i] += gy[i] - std::exp(y[i]) * total;
      }
    }
  });
}

// Rank 1 -> scalar; rank 2 -> one value per row.
template <typename Real>
Var<Real> logsumexp(Var<Real> a) {
  const auto& av = a.value();
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  Array<Real> out(av.rank() == 2 ? Shape{rows} : Shape{1});
  for (std::size_t r = 0; r < rows; ++r) out[r] = logsumexp(av.row(r));
  return a.graph->record(std::move(out), [a, rows, cols](Graph<Real>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    const auto& y = g.value(self);
    const auto& x = g.value(a.id);
    auto& ga = g.grad(a.id);
    for (std::size_t r = 0; r < rows; ++r) {
      if (!std::isfinite(y[r])) continue;
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        ga[i] += gy[r] * std::exp(x[i] - y[r]);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Gradient verification (64-bit)

struct GradCheckResult {
  double max_relative_error = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  std::size_t coordinates = 0;
};

using LossBuilder = std::function<Var<double>(Graph<double>&, ParamStore<double>&)>;

// Compares analytic gradients with central differences (f(p+eps) - f(p-eps)) / 2eps
// over every coordinate. The relative error of a coordinate is
// |a - n| / max(|a|, |n|, 1), so gradients below unit magnitude are judged on
// an absolute scale. Throws kNonDeterministicLoss if two evaluations at the
// same point differ.
GradCheckResult finite_diff_check(const LossBuilder& loss, ParamStore<double>& params, double eps);

}  // namespace induce
