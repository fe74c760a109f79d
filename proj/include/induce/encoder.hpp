#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "induce/compute.hpp"
#include "induce/embeddings.hpp"
#include "induce/grammar.hpp"

namespace induce {

enum class EncoderMode { kBaseline, kLlm };

std::string_view encoder_mode_name(EncoderMode mode);
EncoderMode parse_encoder_mode(std::string_view text);  // kConfig on failure

struct EncoderConfig {
  EncoderMode mode = EncoderMode::kLlm;
  std::size_t input_dim = 0;  // LLM embedding width, or learned word-embedding width
  std::size_t z_dim = 64;
  double dropout = 0.5;

  void validate() const;
};

// Plain-vector form of the variational sample.
struct LatentSample {
  std::vector<double> mu;
  std::vector<double> log_var;
  std::vector<double> z;
  std::vector<double> noise;
};

// z = mu + exp(log_var / 2) * noise. Throws kDimMismatch on unequal sizes.
LatentSample sample_latent(std::span<const double> mu, std::span<const double> log_var,
                           std::span<const double> noise);

// 0.5 * sum(mu^2 + exp(log_var) - 1 - log_var)
double kl_standard_normal(std::span<const double> mu, std::span<const double> log_var);

// Inverted-dropout mask: kept units are 1 / (1 - rate), dropped units 0.
template <typename Real>
Array<Real> dropout_mask(std::size_t size, double rate, std::mt19937_64& rng) {
  Array<Real> mask(Shape{size}, Real(0));
  if (rate <= 0) {
    mask.fill(Real(1));
    return mask;
  }
  std::bernoulli_distribution keep(1.0 - rate);
  const Real scale = static_cast<Real>(1.0 / (1.0 - rate));
  for (auto& m : mask.values()) m = keep(rng) ? scale : Real(0);
  return mask;
}

template <typename Real>
Var<Real> pool(Var<Real> token_embeddings) {
  return mean_rows(token_embeddings);
}

template <typename Real>
Var<Real> reparameterize(Var<Real> mu, Var<Real> log_var, Array<Real> noise) {
  return add(mu, mul_const(exp(scale(log_var, Real(0.5))), std::move(noise)));
}

template <typename Real>
Var<Real> kl_standard_normal(Var<Real> mu, Var<Real> log_var) {
  auto inner = sub(add(mul(mu, mu), exp(log_var)), add_scalar(log_var, Real(1)));
  return scale(sum(inner), Real(0.5));
}

template <typename Real>
struct Posterior {
  Var<Real> mu;
  Var<Real> log_var;
};

// Per-call switches. zero_input replaces the pooled vector by zeros; a
// non-null rng enables training-mode dropout.
struct EncodeOptions {
  bool zero_input = false;
  std::mt19937_64* dropout_rng = nullptr;
};

// Mean-pool then one affine layer producing [mu; log_var]. In baseline mode
// the pooled rows are learned word embeddings looked up by id; in llm mode
// they are the fixed embedding record of the sentence.
template <typename Real>
class Encoder {
 public:
  Encoder(EncoderConfig config, std::size_t vocab_size);

  const EncoderConfig& config() const { return config_; }

  void register_params(ParamStore<Real>& store) const;

  // Throws kDimMismatch when the record width differs from input_dim or its
  // token count from ids.size(), and kConfig when llm mode has no record.
  Posterior<Real> encode(ParamBinder<Real>& params, std::span<const std::size_t> ids,
                         const EmbeddingRecord* embedding, const EncodeOptions& options) const;

 private:
  EncoderConfig config_;
  std::size_t vocab_size_;
};

extern template class Encoder<float>;
extern template class Encoder<double>;

}  // namespace induce
