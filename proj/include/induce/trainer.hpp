#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "induce/compute.hpp"
#include "induce/corpus.hpp"
#include "induce/model.hpp"
#include "induce/run_record.hpp"

namespace induce {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Real>
class Adam {
 public:
  Adam(const ParamStore<Real>& params, AdamConfig config);

  // Applies one update from params.grad(). Throws kNonFiniteGradient, leaving
  // the parameters and moments untouched, if any gradient is NaN or infinite.
  void step(ParamStore<Real>& params);
  std::size_t steps() const { return steps_; }

 private:
  AdamConfig config_;
  std::size_t steps_ = 0;
  std::vector<Array<Real>> m_;
  std::vector<Array<Real>> v_;
};

// Rescales all gradients so their joint L2 norm is at most max_norm and
// returns the norm before clipping.
template <typename Real>
double clip_grad_norm(ParamStore<Real>& params, double max_norm);

// Sampling sources for one loss evaluation. With rng set, the noise and the
// dropout masks are drawn from it (training). Without, dropout is off and the
// noise is taken from `noise` (zeros when empty).
struct ElboOptions {
  std::mt19937_64* rng = nullptr;
  std::span<const double> noise;
};

template <typename Real>
struct ElboTerms {
  Var<Real> loss;  // -log p(x | z) + KL for latent models, -log p(x) otherwise
  double nll = 0;
  double kl = 0;
};

template <typename Real>
ElboTerms<Real> elbo_loss(const Model<Real>& model, ParamBinder<Real>& params, std::span<const std::size_t> ids,
                          const EmbeddingRecord* embedding, const ElboOptions& options);

// Central-difference check of the per-sentence loss over every parameter.
GradCheckResult elbo_gradcheck(Model<double>& model, std::span<const std::size_t> ids,
                               const EmbeddingRecord* embedding, std::span<const double> noise, double eps = 1e-5);

struct TrainOptions {
  std::size_t threads = 1;  // evaluation workers
  std::optional<std::filesystem::path> checkpoint;  // best model is written here
  const Dataset* test = nullptr;  // scored with the best model when set
  std::function<void(const EpochRecord&)> on_epoch;
};

template <typename Real>
struct TrainResult {
  RunRecord record;
  Model<Real> model;  // parameters of the best epoch
};

// Trains from config.seed for config.epochs epochs with Adam on the negative
// ELBO, validating after each epoch and keeping the epoch that is best under
// config.checkpoint_criterion. Length-1 sentences are not trained on.
// Sentences with non-finite loss are skipped; kTrainingDiverged is thrown when
// an epoch skips more than config.max_skip_fraction of its sentences or the
// parameters stop being finite.
template <typename Real>
TrainResult<Real> train_run(const Config& config, const Vocabulary& vocab, const Dataset& train, const Dataset& val,
                            const TrainOptions& options = {});

// Per-sentence generator derived from (seed, epoch, index).
std::mt19937_64 sentence_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace induce
