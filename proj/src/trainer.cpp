#include "induce/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "induce/encoder.hpp"
#include "induce/error.hpp"
#include "induce/eval.hpp"

namespace induce {

template <typename Real>
Adam<Real>::Adam(const ParamStore<Real>& params, AdamConfig config) : config_(config) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params.value(i).shape());
    v_.emplace_back(params.value(i).shape());
  }
}

template <typename Real>
void Adam<Real>::step(ParamStore<Real>& params) {
  if (params.size() != m_.size()) fail(ErrorCode::kDimMismatch, "optimizer built for a different store");
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Real g : params.grad(i).values()) {
      if (!std::isfinite(g)) fail(ErrorCode::kNonFiniteGradient, "gradient of " + params.name(i) + " is not finite");
    }
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params.value(i).values();
    const auto grad = params.grad(i).values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      const double mk = b1 * m[k] + (1 - b1) * g;
      const double vk = b2 * v[k] + (1 - b2) * g * g;
      m[k] = static_cast<Real>(mk);
      v[k] = static_cast<Real>(vk);
      value[k] -= static_cast<Real>(config_.lr * (mk / c1) / (std::sqrt(vk / c2) + config_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

template <typename Real>
double clip_grad_norm(ParamStore<Real>& params, double max_norm) {
  const double norm = params.grad_norm();
  if (std::isfinite(norm) && norm > max_norm) {
    const Real s = static_cast<Real>(max_norm / norm);
    for (auto& g : params.grads()) {
      for (auto& x : g.values()) x *= s;
    }
  }
  return norm;
}

template double clip_grad_norm(ParamStore<float>&, double);
template double clip_grad_norm(ParamStore<double>&, double);

template <typename Real>
ElboTerms<Real> elbo_loss(const Model<Real>& model, ParamBinder<Real>& params, std::span<const std::size_t> ids,
                          const EmbeddingRecord* embedding, const ElboOptions& options) {
  ElboTerms<Real> out;
  if (!model.latent()) {
    const auto ll = model.log_likelihood(model.grammar().rule_distributions(params, std::nullopt), ids);
    out.loss = scale(ll, Real(-1));
    out.nll = -static_cast<double>(ll.item());
    return out;
  }
  const auto* encoder = model.encoder();
  const std::size_t zd = model.z_dim();
  EncodeOptions enc;
  enc.dropout_rng = options.rng;
  const auto post = encoder->encode(params, ids, embedding, enc);

  Array<Real> noise(Shape{zd});
  if (options.rng != nullptr) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& x : noise.values()) x = static_cast<Real>(normal(*options.rng));
  } else if (!options.noise.empty()) {
    if (options.noise.size() != zd) fail(ErrorCode::kDimMismatch, "noise width differs from z_dim");
    for (std::size_t i = 0; i < zd; ++i) noise[i] = static_cast<Real>(options.noise[i]);
  }
  auto z = reparameterize(post.mu, post.log_var, std::move(noise));
  if (options.rng != nullptr) {
    z = mul_const(z, dropout_mask<Real>(zd, encoder->config().dropout, *options.rng));
  }
  const auto ll = model.log_likelihood(model.grammar().rule_distributions(params, z), ids);
  const auto kl = kl_standard_normal(post.mu, post.log_var);
  out.loss = add(scale(ll, Real(-1)), kl);
  out.nll = -static_cast<double>(ll.item());
  out.kl = static_cast<double>(kl.item());
  return out;
}

template ElboTerms<float> elbo_loss(const Model<float>&, ParamBinder<float>&, std::span<const std::size_t>,
                                   const EmbeddingRecord*, const ElboOptions&);
template ElboTerms<double> elbo_loss(const Model<double>&, ParamBinder<double>&, std::span<const std::size_t>,
                                     const EmbeddingRecord*, const ElboOptions&);

GradCheckResult elbo_gradcheck(Model<double>& model, std::span<const std::size_t> ids,
                               const EmbeddingRecord* embedding, std::span<const double> noise, double eps) {
  ElboOptions options;
  options.noise = noise;
  return finite_diff_check(
      [&](Graph<double>& graph, ParamStore<double>& store) {
        ParamBinder<double> binder(graph, store, &store.grads());
        return elbo_loss(model, binder, ids, embedding, options).loss;
      },
      model.params(), eps);
}

std::mt19937_64 sentence_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

namespace {

// Groups sentences of similar length: a random order is stably sorted by
// length, cut into batches, and the batch order is shuffled.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& pool, const Dataset& data,
                                                   std::size_t batch_size, std::mt19937_64& rng) {
  auto order = pool;
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return data.sentences[a].size() < data.sentences[b].size(); });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

bool better(const Metrics& a, const Metrics& b, SelectionKind criterion) {
  if (criterion == SelectionKind::kValF1) return a.corpus_f1.value_or(0.0) > b.corpus_f1.value_or(0.0);
  return a.ppl < b.ppl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

template <typename Real>
TrainResult<Real> train_run(const Config& config, const Vocabulary& vocab, const Dataset& train, const Dataset& val,
                            const TrainOptions& options) {
  config.validate();
  const bool needs_emb = !config.zero_train && config.mode == EncoderMode::kLlm;
  if (needs_emb && !train.embeddings) fail(ErrorCode::kConfig, "llm mode needs training embeddings");
  if (config.checkpoint_criterion == SelectionKind::kValF1 && !val.has_trees()) {
    fail(ErrorCode::kConfig, "val_f1 checkpointing needs validation trees");
  }
  const std::size_t emb_dim = needs_emb ? train.embeddings->dim() : 0;

  const auto t0 = std::chrono::steady_clock::now();
  Model<Real> model(config, vocab, emb_dim);
  model.initialize(config.seed);
  Adam<Real> adam(model.params(), AdamConfig{config.learning_rate});

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train.sentences[i].size() >= 2) pool.push_back(i);
  }
  if (pool.empty()) fail(ErrorCode::kEmptyInput, "no training sentence has two or more tokens");

  RunRecord record;
  record.seed = config.seed;
  record.config_hash = hash_hex(config.hash());
  record.mode = std::string(encoder_mode_name(config.mode));
  record.zero_train = config.zero_train;

  EvalOptions eval_options;
  eval_options.decoder = config.decoder;
  eval_options.threads = options.threads;
  eval_options.exclude_short = config.exclude_short;

  std::optional<Model<Real>> best;
  std::mt19937_64 order_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  auto& params = model.params();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto e0 = std::chrono::steady_clock::now();
    double loss_total = 0;
    std::size_t counted = 0;
    std::size_t skipped = 0;
    for (const auto& batch : make_batches(pool, train, config.batch_size, order_rng)) {
      params.zero_grad();
      Graph<Real> graph;
      ParamBinder<Real> binder(graph, params, &params.grads());
      std::optional<Var<Real>> total;
      std::size_t used = 0;
      double batch_loss = 0;
      for (std::size_t idx : batch) {
        auto rng = sentence_rng(config.seed, epoch, idx);
        const EmbeddingRecord* emb = needs_emb ? &(*train.embeddings)[idx] : nullptr;
        const auto terms = elbo_loss(model, binder, train.sentences[idx].ids, emb, ElboOptions{&rng, {}});
        const double value = static_cast<double>(terms.loss.item());
        if (!std::isfinite(value)) {
          ++skipped;
          continue;
        }
        total = total ? add(*total, terms.loss) : terms.loss;
        batch_loss += value;
        ++used;
      }
      if (used == 0) continue;
      graph.backward(*total, Real(1) / static_cast<Real>(used));
      clip_grad_norm(params, config.max_grad_norm);
      try {
        adam.step(params);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonFiniteGradient) throw;
        spdlog::warn("epoch {}: skipping a batch with a non-finite gradient", epoch);
        skipped += used;
        continue;
      }
      loss_total += batch_loss;
      counted += used;
    }
    if (!params.all_finite()) fail(ErrorCode::kTrainingDiverged, "parameters became non-finite");
    const double skip_fraction = static_cast<double>(skipped) / static_cast<double>(pool.size());
    if (skip_fraction > config.max_skip_fraction) {
      fail(ErrorCode::kTrainingDiverged, "epoch " + std::to_string(epoch) + " skipped " + std::to_string(skipped) +
                                             " of " + std::to_string(pool.size()) + " sentences");
    }

    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = counted > 0 ? loss_total / static_cast<double>(counted) : 0.0;
    er.skipped = skipped;
    er.validation = evaluate(model, val, eval_options).metrics;
    er.seconds = seconds_since(e0);
    spdlog::info("seed {} epoch {}/{}: loss {:.4f}, val ppl {:.4f}, val C-F1 {}", config.seed, epoch, config.epochs,
                 er.train_loss, er.validation.ppl,
                 er.validation.corpus_f1 ? fmt::format("{:.1f}", 100 * *er.validation.corpus_f1) : "-");
    if (!best || better(er.validation, record.best_validation(), config.checkpoint_criterion)) {
      record.best_epoch = record.epochs.size() + 1;
      best = model;
    }
    record.epochs.push_back(er);
    if (record.best_epoch == record.epochs.size() && options.checkpoint) save_checkpoint(*best, *options.checkpoint);
    if (options.on_epoch) options.on_epoch(er);
  }
  record.training_seconds = seconds_since(t0);
  if (options.checkpoint) record.checkpoint = options.checkpoint->string();
  if (options.test != nullptr) record.test = evaluate(*best, *options.test, eval_options).metrics;
  return TrainResult<Real>{std::move(record), std::move(*best)};
}

template TrainResult<float> train_run(const Config&, const Vocabulary&, const Dataset&, const Dataset&,
                                      const TrainOptions&);
template TrainResult<double> train_run(const Config&, const Vocabulary&, const Dataset&, const Dataset&,
                                       const TrainOptions&);

}  // namespace induce
