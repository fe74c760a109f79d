#include "induce/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include "induce/error.hpp"

namespace induce {

std::string_view decoder_name(Decoder d) { return d == Decoder::kMbr ? "mbr" : "viterbi"; }

Decoder parse_decoder(std::string_view text) {
  if (text == "mbr") return Decoder::kMbr;
  if (text == "viterbi") return Decoder::kViterbi;
  fail(ErrorCode::kConfig, "unknown decoder '" + std::string(text) + "' (mbr|viterbi)");
}

std::string_view precision_name(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view text) {
  if (text == "f32") return Precision::kF32;
  if (text == "f64") return Precision::kF64;
  fail(ErrorCode::kConfig, "unknown precision '" + std::string(text) + "' (f32|f64)");
}

std::string_view selection_name(SelectionKind k) {
  switch (k) {
    case SelectionKind::kValF1: return "val_f1";
    case SelectionKind::kPpl: return "ppl";
    case SelectionKind::kMbf: return "mbf";
  }
  return "?";
}

SelectionKind parse_selection(std::string_view text) {
  if (text == "val_f1") return SelectionKind::kValF1;
  if (text == "ppl") return SelectionKind::kPpl;
  if (text == "mbf") return SelectionKind::kMbf;
  fail(ErrorCode::kConfig, "unknown selection criterion '" + std::string(text) + "' (val_f1|ppl|mbf)");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  fail(ErrorCode::kConfig, "bad value '" + std::string(value) + "' for " + std::string(key) +
                               " (expected " + std::string(want) + ")");
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "non-negative integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true|false");
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

struct Entry {
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, std::string_view key, std::string_view)> set;
};

template <typename T>
Entry size_entry(T Config::*field) {
  return {[field](const Config& c) { return std::to_string(c.*field); },
          [field](Config& c, std::string_view k, std::string_view v) {
            c.*field = static_cast<T>(parse_u64(k, v));
          }};
}

Entry double_entry(double Config::*field) {
  return {[field](const Config& c) { return format_double(c.*field); },
          [field](Config& c, std::string_view k, std::string_view v) { c.*field = parse_double(k, v); }};
}

Entry bool_entry(bool Config::*field) {
  return {[field](const Config& c) { return std::string(c.*field ? "true" : "false"); },
          [field](Config& c, std::string_view k, std::string_view v) { c.*field = parse_bool(k, v); }};
}

const std::map<std::string, Entry, std::less<>>& table() {
  static const std::map<std::string, Entry, std::less<>> entries = {
      {"grammar.nonterminals", size_entry(&Config::nonterminals)},
      {"grammar.preterminals", size_entry(&Config::preterminals)},
      {"grammar.symbol_dim", size_entry(&Config::symbol_dim)},
      {"grammar.z_dim", size_entry(&Config::z_dim)},
      {"encoder.mode",
       {[](const Config& c) { return std::string(encoder_mode_name(c.mode)); },
        [](Config& c, std::string_view, std::string_view v) { c.mode = parse_encoder_mode(v); }}},
      {"encoder.word_dim", size_entry(&Config::word_dim)},
      {"encoder.dropout", double_entry(&Config::dropout)},
      {"train.epochs", size_entry(&Config::epochs)},
      {"train.batch_size", size_entry(&Config::batch_size)},
      {"train.lr", double_entry(&Config::learning_rate)},
      {"train.seed", size_entry(&Config::seed)},
      {"train.zero_train", bool_entry(&Config::zero_train)},
      {"train.max_grad_norm", double_entry(&Config::max_grad_norm)},
      {"train.max_skip_fraction", double_entry(&Config::max_skip_fraction)},
      {"train.checkpoint_criterion",
       {[](const Config& c) { return std::string(selection_name(c.checkpoint_criterion)); },
        [](Config& c, std::string_view, std::string_view v) { c.checkpoint_criterion = parse_selection(v); }}},
      {"corpus.max_length", size_entry(&Config::max_length)},
      {"corpus.vocab_size", size_entry(&Config::vocab_size)},
      {"eval.decoder",
       {[](const Config& c) { return std::string(decoder_name(c.decoder)); },
        [](Config& c, std::string_view, std::string_view v) { c.decoder = parse_decoder(v); }}},
      {"eval.batch_size", size_entry(&Config::eval_batch_size)},
      {"eval.exclude_short", bool_entry(&Config::exclude_short)},
      {"select.criterion",
       {[](const Config& c) { return std::string(selection_name(c.selection)); },
        [](Config& c, std::string_view, std::string_view v) { c.selection = parse_selection(v); }}},
      {"select.k", size_entry(&Config::select_k)},
      {"select.mbf_target", double_entry(&Config::mbf_target)},
      {"run.threads", size_entry(&Config::threads)},
      {"run.precision",
       {[](const Config& c) { return std::string(precision_name(c.precision)); },
        [](Config& c, std::string_view, std::string_view v) { c.precision = parse_precision(v); }}},
  };
  return entries;
}

}  // namespace

void Config::set(std::string_view key, std::string_view value) {
  const auto& t = table();
  auto it = t.find(key);
  if (it == t.end()) fail(ErrorCode::kConfig, "unknown config key '" + std::string(key) + "'");
  it->second.set(*this, key, trim(value));
}

std::string Config::get(std::string_view key) const {
  const auto& t = table();
  auto it = t.find(key);
  if (it == t.end()) fail(ErrorCode::kConfig, "unknown config key '" + std::string(key) + "'");
  return it->second.get(*this);
}

const std::vector<std::string>& Config::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [k, e] : table()) out.push_back(k);
    return out;
  }();
  return names;
}

std::vector<std::pair<std::string, std::string>> Config::resolved() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, e] : table()) out.emplace_back(k, e.get(*this));
  return out;
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, v] : resolved()) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t Config::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[hash & 0xf];
    hash >>= 4;
  }
  return out;
}

void Config::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::kConfig, what);
  };
  require(nonterminals >= 1 && preterminals >= 1, "grammar sizes must be at least 1");
  require(symbol_dim >= 1, "grammar.symbol_dim must be positive");
  require(zero_train || z_dim >= 1, "grammar.z_dim must be positive unless train.zero_train");
  require(word_dim >= 1, "encoder.word_dim must be positive");
  require(dropout >= 0 && dropout < 1, "encoder.dropout must be in [0, 1)");
  require(epochs >= 1, "train.epochs must be at least 1");
  require(batch_size >= 1, "train.batch_size must be at least 1");
  require(learning_rate > 0, "train.lr must be positive");
  require(max_grad_norm > 0, "train.max_grad_norm must be positive");
  require(max_skip_fraction >= 0 && max_skip_fraction <= 1, "train.max_skip_fraction must be in [0, 1]");
  require(checkpoint_criterion != SelectionKind::kMbf, "train.checkpoint_criterion must be ppl or val_f1");
  require(vocab_size >= 1, "corpus.vocab_size must be positive");
  require(eval_batch_size >= 1, "eval.batch_size must be at least 1");
  require(select_k >= 1, "select.k must be at least 1");
}

std::size_t Config::resolved_threads() const {
  if (threads > 0) return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

Config parse_config(std::string_view text, Config base) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::kConfig, "config line " + std::to_string(lineno) + ": expected key=value");
    }
    base.set(trim(std::string_view(content).substr(0, eq)), trim(std::string_view(content).substr(eq + 1)));
  }
  return base;
}

Config load_config(const std::filesystem::path& path, Config base) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::move(base));
}

}  // namespace induce
