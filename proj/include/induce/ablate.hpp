#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "induce/config.hpp"
#include "induce/corpus.hpp"
#include "induce/eval.hpp"
#include "induce/model.hpp"

namespace induce {

enum class AblationMode { kDefault, kZeroZ, kRandomZ, kShuffle, kZeroCaptions };

std::string_view ablation_name(AblationMode mode);
AblationMode parse_ablation(std::string_view text);  // kConfig on failure
const std::vector<AblationMode>& all_ablations();

// Uniform permutation of [0, n), redrawn while it is the identity (n > 1).
std::vector<std::size_t> non_identity_permutation(std::size_t n, std::mt19937_64& rng);

// Permutes the tokens of every sentence, and the matching embedding rows,
// with a per-sentence seeded non-identity permutation. Gold trees are kept.
Dataset shuffle_dataset(const Dataset& data, std::uint64_t seed);

struct AblationOptions {
  AblationMode mode = AblationMode::kDefault;
  std::uint64_t seed = 0;
  std::size_t batch_size = 16;  // random_z permutes latents within batches of this size
  EvalOptions eval;
};

// zero_z: z = 0. random_z: posterior means permuted within each batch (throws
// kModeUnsupported for models without a latent). shuffle: shuffle_dataset.
// zero_captions: encoder input replaced by zeros.
template <typename Real>
EvalResult ablated_eval(const Model<Real>& model, const Dataset& data, const AblationOptions& options);

extern template EvalResult ablated_eval(const Model<float>&, const Dataset&, const AblationOptions&);
extern template EvalResult ablated_eval(const Model<double>&, const Dataset&, const AblationOptions&);

// One JSON object: mode, metrics, config hash and resolved config.
std::string ablation_json(AblationMode mode, const Metrics& metrics, const Config& config);

}  // namespace induce
