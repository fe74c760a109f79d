#include "induce/compute.hpp"

#include <sstream>

namespace induce {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

double evaluate(const LossBuilder& loss, ParamStore<double>& params) {
  Graph<double> graph;
  return loss(graph, params).item();
}

}  // namespace

GradCheckResult finite_diff_check(const LossBuilder& loss, ParamStore<double>& params,
                                  double eps) {
  if (!(eps > 0)) fail(ErrorCode::kConfig, "finite difference step must be positive");
  params.zero_grad();
  double base = 0;
  {
    Graph<double> graph;
    auto root = loss(graph, params);
    base = root.item();
    graph.backward(root);
  }
  if (evaluate(loss, params) != base) {
    fail(ErrorCode::kNonDeterministicLoss, "loss differs between identical evaluations");
  }

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& values = params.value(p);
    const auto& grads = params.grad(p);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate(loss, params);
      values[i] = saved - eps;
      const double down = evaluate(loss, params);
      values[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = grads[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1.0});
      const double err = std::abs(analytic - numeric) / denom;
      ++result.coordinates;
      if (err > result.max_relative_error || !std::isfinite(err)) {
        result.max_relative_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
        result.worst_parameter = params.name(p);
        result.worst_index = i;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace induce
