#include "induce/ablate.hpp"

#include <algorithm>
#include <numeric>

#include "induce/error.hpp"
#include "json.hpp"

namespace induce {

std::string_view ablation_name(AblationMode mode) {
  switch (mode) {
    case AblationMode::kDefault: return "default";
    case AblationMode::kZeroZ: return "zero_z";
    case AblationMode::kRandomZ: return "random_z";
    case AblationMode::kShuffle: return "shuffle";
    case AblationMode::kZeroCaptions: return "zero_captions";
  }
  return "?";
}

AblationMode parse_ablation(std::string_view text) {
  for (auto mode : all_ablations()) {
    if (ablation_name(mode) == text) return mode;
  }
  fail(ErrorCode::kConfig,
       "unknown ablation '" + std::string(text) + "' (default|zero_z|random_z|shuffle|zero_captions)");
}

const std::vector<AblationMode>& all_ablations() {
  static const std::vector<AblationMode> modes{AblationMode::kDefault, AblationMode::kZeroZ, AblationMode::kRandomZ,
                                               AblationMode::kShuffle, AblationMode::kZeroCaptions};
  return modes;
}

std::vector<std::size_t> non_identity_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (n < 2) return perm;
  const auto identity = perm;
  do {
    std::shuffle(perm.begin(), perm.end(), rng);
  } while (perm == identity);
  return perm;
}

Dataset shuffle_dataset(const Dataset& data, std::uint64_t seed) {
  Dataset out = data;
  std::optional<EmbeddingStore> embeddings;
  if (data.embeddings) embeddings.emplace(data.embeddings->dim());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::mt19937_64 rng(seq);
    const auto& src = data.sentences[i];
    const auto perm = non_identity_permutation(src.size(), rng);
    auto& dst = out.sentences[i];
    for (std::size_t k = 0; k < perm.size(); ++k) {
      dst.tokens[k] = src.tokens[perm[k]];
      if (!src.ids.empty()) dst.ids[k] = src.ids[perm[k]];
    }
    if (embeddings) {
      const auto& rec = (*data.embeddings)[i];
      if (rec.token_count != src.size()) fail(ErrorCode::kAlignment, "embedding record does not match its sentence");
      std::vector<float> values(rec.values.size());
      for (std::size_t k = 0; k < perm.size(); ++k) {
        std::copy_n(rec.values.begin() + static_cast<std::ptrdiff_t>(perm[k] * rec.dim), rec.dim,
                    values.begin() + static_cast<std::ptrdiff_t>(k * rec.dim));
      }
      embeddings->add(EmbeddingRecord{rec.token_count, rec.dim, std::move(values)});
    }
  }
  out.embeddings = std::move(embeddings);
  return out;
}

template <typename Real>
EvalResult ablated_eval(const Model<Real>& model, const Dataset& data, const AblationOptions& options) {
  auto eval = options.eval;
  switch (options.mode) {
    case AblationMode::kDefault: return evaluate(model, data, eval);
    case AblationMode::kShuffle: return evaluate(model, shuffle_dataset(data, options.seed), eval);
    case AblationMode::kZeroCaptions:
      eval.zero_input = true;
      return evaluate(model, data, eval);
    case AblationMode::kZeroZ: {
      if (!model.latent()) return evaluate(model, data, eval);
      const std::vector<std::vector<double>> zeros(data.size(), std::vector<double>(model.z_dim(), 0.0));
      eval.latents = &zeros;
      return evaluate(model, data, eval);
    }
    case AblationMode::kRandomZ: {
      if (!model.latent()) fail(ErrorCode::kModeUnsupported, "random_z needs a model with a latent variable");
      if (options.batch_size == 0) fail(ErrorCode::kConfig, "batch size must be positive");
      const auto means = posterior_means(model, data, eval.zero_input, eval.threads);
      std::vector<std::size_t> scored;
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.sentences[i].size() >= 2) scored.push_back(i);
      }
      auto latents = means;
      for (std::size_t start = 0, batch = 0; start < scored.size(); start += options.batch_size, ++batch) {
        const std::size_t len = std::min(options.batch_size, scored.size() - start);
        std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                          static_cast<std::uint32_t>(batch)};
        std::mt19937_64 rng(seq);
        const auto perm = non_identity_permutation(len, rng);
        for (std::size_t k = 0; k < len; ++k) latents[scored[start + k]] = means[scored[start + perm[k]]];
      }
      eval.latents = &latents;
      return evaluate(model, data, eval);
    }
  }
  fail(ErrorCode::kConfig, "unhandled ablation mode");
}

template EvalResult ablated_eval(const Model<float>&, const Dataset&, const AblationOptions&);
template EvalResult ablated_eval(const Model<double>&, const Dataset&, const AblationOptions&);

std::string ablation_json(AblationMode mode, const Metrics& metrics, const Config& config) {
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [key, value] : config.resolved()) cfg[key] = value;
  nlohmann::json j = {{"mode", std::string(ablation_name(mode))},
                      {"metrics", nlohmann::json::parse(to_json(metrics))},
                      {"config_hash", hash_hex(config.hash())},
                      {"config", cfg}};
  return j.dump();
}

}  // namespace induce
