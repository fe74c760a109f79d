#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "induce/config.hpp"
#include "induce/corpus.hpp"
#include "induce/encoder.hpp"
#include "induce/grammar.hpp"

namespace induce {

// Grammar network plus (unless zero_train) the inference network, sharing one
// parameter store.
template <typename Real>
class Model {
 public:
  // embedding_dim is the LLM embedding width and is required in llm mode.
  Model(Config config, Vocabulary vocab, std::size_t embedding_dim = 0);

  const Config& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const SymbolInventory& inventory() const { return grammar_.inventory(); }
  const GrammarNet<Real>& grammar() const { return grammar_; }
  const Encoder<Real>* encoder() const { return encoder_ ? &*encoder_ : nullptr; }
  bool latent() const { return encoder_.has_value(); }
  bool needs_embeddings() const { return latent() && config_.mode == EncoderMode::kLlm; }
  std::size_t embedding_dim() const { return embedding_dim_; }
  std::size_t z_dim() const { return inventory().z_dim; }

  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }

  // Xavier-uniform weights and zero biases.
  void initialize(std::uint64_t seed);

  // log p(x | rules) through the differentiable inside operation.
  Var<Real> log_likelihood(const RuleLogits<Real>& rules, std::span<const std::size_t> ids) const;

  // Posterior mean of z (no dropout). Throws kModeUnsupported for models
  // without a latent.
  std::vector<double> posterior_mean(std::span<const std::size_t> ids, const EmbeddingRecord* embedding,
                                     bool zero_input = false) const;

  // Normalized rule tables in 64-bit form at the given latent (nullopt for
  // models without one).
  RuleDistribution rule_distribution(std::optional<std::span<const double>> z) const;

 private:
  Config config_;
  Vocabulary vocab_;
  std::size_t embedding_dim_ = 0;
  GrammarNet<Real> grammar_;
  std::optional<Encoder<Real>> encoder_;
  ParamStore<Real> params_;
};

extern template class Model<float>;
extern template class Model<double>;

// Binary checkpoint (little-endian): "CKP1", u32 version, u64 config hash,
// u64 N, P, V, d, z_dim, u64 embedding_dim; config text; vocabulary tokens;
// u64 parameter count, then per parameter its name, u32 rank, u64 dims and
// f32 values. Written to a temporary file and renamed into place.
template <typename Real>
void save_checkpoint(const Model<Real>& model, const std::filesystem::path& path);

// Throws kFormat on a malformed file or a config hash mismatch.
template <typename Real>
Model<Real> load_checkpoint(const std::filesystem::path& path);

// Reads only the stored config.
Config checkpoint_config(const std::filesystem::path& path);

}  // namespace induce
