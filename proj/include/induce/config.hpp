#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "induce/encoder.hpp"

namespace induce {

enum class Decoder { kMbr, kViterbi };
enum class Precision { kF32, kF64 };
enum class SelectionKind { kValF1, kPpl, kMbf };

std::string_view decoder_name(Decoder d);
Decoder parse_decoder(std::string_view text);
std::string_view precision_name(Precision p);
Precision parse_precision(std::string_view text);
std::string_view selection_name(SelectionKind k);
SelectionKind parse_selection(std::string_view text);

// Every tunable setting. Keys are flat and namespaced ("train.epochs").
struct Config {
  // grammar.*
  std::size_t nonterminals = 30;
  std::size_t preterminals = 60;
  std::size_t symbol_dim = 256;
  std::size_t z_dim = 64;
  // encoder.*
  EncoderMode mode = EncoderMode::kLlm;
  std::size_t word_dim = 256;  // baseline word-embedding width
  double dropout = 0.5;
  // train.*
  std::size_t epochs = 10;
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  bool zero_train = false;
  double max_grad_norm = 3.0;
  double max_skip_fraction = 0.01;
  SelectionKind checkpoint_criterion = SelectionKind::kPpl;
  // corpus.*
  std::size_t max_length = 45;
  std::size_t vocab_size = 10000;
  // eval.*
  Decoder decoder = Decoder::kMbr;
  std::size_t eval_batch_size = 16;
  bool exclude_short = false;  // drop length <= 2 sentences from S-F1 instead of scoring 1
  // select.*
  SelectionKind selection = SelectionKind::kValF1;
  std::size_t select_k = 4;
  double mbf_target = 1.0;
  // run.*
  std::size_t threads = 0;  // 0: hardware concurrency
  Precision precision = Precision::kF32;

  // Throws kConfig for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  // Sorted "key=value" lines of every setting.
  std::vector<std::pair<std::string, std::string>> resolved() const;
  std::string to_text() const;
  // FNV-1a 64 over to_text().
  std::uint64_t hash() const;

  void validate() const;
  std::size_t resolved_threads() const;
};

// "key = value" lines; '#' comments and blank lines ignored. Applied on top
// of base so that callers can layer defaults, files and flags.
Config parse_config(std::string_view text, Config base = {});
Config load_config(const std::filesystem::path& path, Config base = {});

std::string hash_hex(std::uint64_t hash);

}  // namespace induce
