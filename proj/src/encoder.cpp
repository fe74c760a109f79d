#include "induce/encoder.hpp"

#include <cmath>

#include "induce/error.hpp"

namespace induce {

std::string_view encoder_mode_name(EncoderMode mode) {
  return mode == EncoderMode::kBaseline ? "baseline" : "llm";
}

EncoderMode parse_encoder_mode(std::string_view text) {
  if (text == "baseline") return EncoderMode::kBaseline;
  if (text == "llm") return EncoderMode::kLlm;
  fail(ErrorCode::kConfig, "unknown encoder mode '" + std::string(text) + "' (baseline|llm)");
}

void EncoderConfig::validate() const {
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorCode::kConfig, "dropout must be in [0, 1)");
  if (input_dim == 0) fail(ErrorCode::kConfig, "encoder input width must be positive");
  if (z_dim == 0) fail(ErrorCode::kConfig, "latent width must be positive");
}

LatentSample sample_latent(std::span<const double> mu, std::span<const double> log_var,
                           std::span<const double> noise) {
  if (mu.size() != log_var.size() || mu.size() != noise.size()) {
    fail(ErrorCode::kDimMismatch, "mu, log_var and noise must have equal sizes");
  }
  LatentSample s;
  s.mu.assign(mu.begin(), mu.end());
  s.log_var.assign(log_var.begin(), log_var.end());
  s.noise.assign(noise.begin(), noise.end());
  s.z.resize(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) s.z[i] = mu[i] + std::exp(log_var[i] / 2) * noise[i];
  return s;
}

double kl_standard_normal(std::span<const double> mu, std::span<const double> log_var) {
  if (mu.size() != log_var.size()) fail(ErrorCode::kDimMismatch, "mu and log_var differ in size");
  double total = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    total += mu[i] * mu[i] + std::exp(log_var[i]) - 1.0 - log_var[i];
  }
  return 0.5 * total;
}

template <typename Real>
Encoder<Real>::Encoder(EncoderConfig config, std::size_t vocab_size)
    : config_(config), vocab_size_(vocab_size) {
  config_.validate();
}

template <typename Real>
void Encoder<Real>::register_params(ParamStore<Real>& store) const {
  if (config_.mode == EncoderMode::kBaseline) {
    store.add("encoder.word_emb", {vocab_size_, config_.input_dim});
  }
  store.add("encoder.head.w", {2 * config_.z_dim, config_.input_dim});
  store.add("encoder.head.b", {2 * config_.z_dim});
}

template <typename Real>
Posterior<Real> Encoder<Real>::encode(ParamBinder<Real>& params, std::span<const std::size_t> ids,
                                      const EmbeddingRecord* embedding,
                                      const EncodeOptions& options) const {
  auto& graph = params.graph();
  const std::size_t d = config_.input_dim;
  Var<Real> pooled;
  if (options.zero_input) {
    pooled = graph.constant(Array<Real>(Shape{d}));
  } else if (config_.mode == EncoderMode::kBaseline) {
    pooled = pool(gather_rows(params("encoder.word_emb"), std::vector<std::size_t>(ids.begin(), ids.end())));
  } else {
    if (embedding == nullptr) fail(ErrorCode::kConfig, "llm encoder requires token embeddings");
    if (embedding->dim != d) {
      fail(ErrorCode::kDimMismatch, "embedding width " + std::to_string(embedding->dim) +
                                        " but encoder expects " + std::to_string(d));
    }
    if (embedding->token_count != ids.size()) {
      fail(ErrorCode::kDimMismatch, "embedding record has " + std::to_string(embedding->token_count) +
                                        " rows for a " + std::to_string(ids.size()) + "-token sentence");
    }
    std::vector<Real> rows(embedding->values.begin(), embedding->values.end());
    pooled = pool(graph.constant(Array<Real>(Shape{ids.size(), d}, std::move(rows))));
  }
  if (options.dropout_rng != nullptr) {
    pooled = mul_const(pooled, dropout_mask<Real>(d, config_.dropout, *options.dropout_rng));
  }
  auto out = linear(pooled, params("encoder.head.w"), params("encoder.head.b"));
  const std::size_t z = config_.z_dim;
  return {slice(out, 0, z), slice(out, z, 2 * z)};
}

template class Encoder<float>;
template class Encoder<double>;

}  // namespace induce
