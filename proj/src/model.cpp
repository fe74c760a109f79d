#include "induce/model.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "binary_io.hpp"
#include "induce/error.hpp"
#include "induce/parser.hpp"

namespace induce {

namespace {

constexpr char kMagic[4] = {'C', 'K', 'P', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

SymbolInventory inventory_for(const Config& c, std::size_t vocab_size) {
  SymbolInventory inv;
  inv.nonterminals = c.nonterminals;
  inv.preterminals = c.preterminals;
  inv.vocab_size = vocab_size;
  inv.symbol_dim = c.symbol_dim;
  inv.z_dim = c.zero_train ? 0 : c.z_dim;
  return inv;
}

bool is_bias(const std::string& name) {
  auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".b") || ends_with(".b1") || ends_with(".b2");
}

}  // namespace

template <typename Real>
Model<Real>::Model(Config config, Vocabulary vocab, std::size_t embedding_dim)
    : config_(std::move(config)),
      vocab_(std::move(vocab)),
      grammar_(inventory_for(config_, vocab_.size())) {
  config_.validate();
  if (!config_.zero_train) {
    EncoderConfig ec;
    ec.mode = config_.mode;
    ec.z_dim = config_.z_dim;
    ec.dropout = config_.dropout;
    if (config_.mode == EncoderMode::kLlm) {
      if (embedding_dim == 0) fail(ErrorCode::kConfig, "llm mode needs an embedding width");
      embedding_dim_ = embedding_dim;
      ec.input_dim = embedding_dim;
    } else {
      ec.input_dim = config_.word_dim;
    }
    encoder_.emplace(ec, vocab_.size());
  }
  grammar_.register_params(params_);
  if (encoder_) encoder_->register_params(params_);
}

template <typename Real>
void Model<Real>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& v = params_.value(i);
    if (is_bias(params_.name(i))) {
      v.fill(Real(0));
      continue;
    }
    const double fan_in = static_cast<double>(v.cols());
    const double fan_out = static_cast<double>(v.rows());
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> unif(-a, a);
    for (auto& x : v.values()) x = static_cast<Real>(unif(rng));
  }
}

template <typename Real>
Var<Real> Model<Real>::log_likelihood(const RuleLogits<Real>& rules,
                                      std::span<const std::size_t> ids) const {
  auto emissions = select_columns(rules.terminal, std::vector<std::size_t>(ids.begin(), ids.end()));
  return inside_log_partition(rules.root, rules.binary, emissions);
}

template <typename Real>
std::vector<double> Model<Real>::posterior_mean(std::span<const std::size_t> ids,
                                                const EmbeddingRecord* embedding,
                                                bool zero_input) const {
  if (!encoder_) fail(ErrorCode::kModeUnsupported, "model has no latent variable");
  Graph<Real> graph;
  ParamBinder<Real> binder(graph, params_);
  EncodeOptions options;
  options.zero_input = zero_input;
  const auto post = encoder_->encode(binder, ids, embedding, options);
  const auto mu = post.mu.value().values();
  return std::vector<double>(mu.begin(), mu.end());
}

template <typename Real>
RuleDistribution Model<Real>::rule_distribution(std::optional<std::span<const double>> z) const {
  Graph<Real> graph;
  ParamBinder<Real> binder(graph, params_);
  std::optional<Var<Real>> zv;
  if (z) zv = graph.constant(Array<Real>::vector(std::vector<Real>(z->begin(), z->end())));
  return to_distribution(grammar_.rule_distributions(binder, zv), inventory());
}

template class Model<float>;
template class Model<double>;

// ---------------------------------------------------------------------------
// Checkpoints

template <typename Real>
void save_checkpoint(const Model<Real>& model, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write checkpoint " + tmp.string());
    const auto& cfg = model.config();
    const auto& inv = model.inventory();
    out.write(kMagic, 4);
    binio::put_u32(out, kCheckpointVersion);
    binio::put_u64(out, cfg.hash());
    for (std::size_t v : {inv.nonterminals, inv.preterminals, inv.vocab_size, inv.symbol_dim, inv.z_dim,
                          model.embedding_dim()}) {
      binio::put_u64(out, v);
    }
    binio::put_string(out, cfg.to_text());
    const auto& tokens = model.vocab().tokens();
    binio::put_u64(out, tokens.size());
    for (const auto& t : tokens) binio::put_string(out, t);
    const auto& params = model.params();
    binio::put_u64(out, params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& v = params.value(i);
      binio::put_string(out, params.name(i));
      binio::put_u32(out, static_cast<std::uint32_t>(v.rank()));
      for (auto dim : v.shape()) binio::put_u64(out, dim);
      for (Real x : v.values()) binio::put_f32(out, static_cast<float>(x));
    }
    out.flush();
    if (!out) fail(ErrorCode::kIo, "failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kIo, "cannot move checkpoint into place: " + ec.message());
}

namespace {

struct CheckpointHeader {
  std::uint64_t hash = 0;
  std::uint64_t sizes[6] = {};
  Config config;
};

CheckpointHeader read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[4] = {};
  if (!in.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
    fail(ErrorCode::kFormat, path.string() + " is not a CKP1 checkpoint");
  }
  if (binio::get_u32(in) != kCheckpointVersion) fail(ErrorCode::kFormat, "unsupported checkpoint version");
  CheckpointHeader h;
  h.hash = binio::get_u64(in);
  for (auto& s : h.sizes) s = binio::get_u64(in);
  try {
    h.config = parse_config(binio::get_string(in));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kFormat) throw;
    fail(ErrorCode::kFormat, std::string("checkpoint config: ") + e.what());
  }
  if (h.config.hash() != h.hash) fail(ErrorCode::kFormat, "checkpoint config hash mismatch");
  return h;
}

}  // namespace

Config checkpoint_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open checkpoint " + path.string());
  return read_header(in, path).config;
}

template <typename Real>
Model<Real> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open checkpoint " + path.string());
  const auto header = read_header(in, path);
  const auto token_count = binio::get_u64(in);
  if (token_count == 0 || token_count != header.sizes[2]) fail(ErrorCode::kFormat, "vocabulary size mismatch");
  std::vector<std::string> tokens;
  tokens.reserve(token_count);
  for (std::uint64_t i = 0; i < token_count; ++i) tokens.push_back(binio::get_string(in));
  if (tokens[0] != Vocabulary::kUnkToken) fail(ErrorCode::kFormat, "vocabulary must start with UNK");
  Vocabulary vocab(std::vector<std::string>(tokens.begin() + 1, tokens.end()));
  if (vocab.size() != token_count) fail(ErrorCode::kFormat, "duplicate vocabulary entries");

  Model<Real> model(header.config, std::move(vocab), header.sizes[5]);
  const auto& inv = model.inventory();
  const std::uint64_t expect[5] = {inv.nonterminals, inv.preterminals, inv.vocab_size, inv.symbol_dim, inv.z_dim};
  for (int i = 0; i < 5; ++i) {
    if (expect[i] != header.sizes[i]) fail(ErrorCode::kFormat, "symbol inventory does not match config");
  }

  auto& params = model.params();
  if (binio::get_u64(in) != params.size()) fail(ErrorCode::kFormat, "parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name = binio::get_string(in);
    const auto idx = params.find(name);
    if (!idx) fail(ErrorCode::kFormat, "unknown parameter " + name);
    auto& v = params.value(*idx);
    const auto rank = binio::get_u32(in);
    Shape shape(rank);
    for (auto& d : shape) d = binio::get_u64(in);
    if (shape != v.shape()) {
      fail(ErrorCode::kFormat, "parameter " + name + " has shape " + shape_string(shape) + ", expected " +
                                   shape_string(v.shape()));
    }
    for (auto& x : v.values()) x = static_cast<Real>(binio::get_f32(in));
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorCode::kFormat, "trailing bytes in checkpoint");
  return model;
}

template void save_checkpoint(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint(const Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint(const std::filesystem::path&);
template Model<double> load_checkpoint(const std::filesystem::path&);

}  // namespace induce
