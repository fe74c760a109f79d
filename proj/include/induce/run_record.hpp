#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace induce {

// Scores of one model on one dataset. F1 values are fractions in [0, 1] and
// are absent when the dataset has no gold trees.
struct Metrics {
  std::optional<double> corpus_f1;
  std::optional<double> sentence_f1;
  double ppl = 0;  // per-token negative log evidence
  double mbf = 0;  // mean branching factor of the predicted trees
  std::size_t sentences = 0;  // scored sentences
  std::size_t unparsed = 0;   // zero-probability sentences left out of ppl
  std::size_t too_short = 0;  // length-1 sentences left out entirely
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;  // mean per-sentence loss
  std::size_t skipped = 0;
  double seconds = 0;
  Metrics validation;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string mode;
  bool zero_train = false;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based index into epochs of the retained checkpoint
  std::optional<Metrics> test;
  double embedding_load_seconds = 0;
  double training_seconds = 0;
  std::string checkpoint;

  const Metrics& best_validation() const;  // kFormat when there are no epochs
};

std::string to_json(const Metrics& m, int indent = -1);
std::string to_json(const RunRecord& r, int indent = 2);
// Throws kFormat on malformed documents.
RunRecord run_record_from_json(const std::string& text);

void save_run_record(const RunRecord& r, const std::filesystem::path& path);
RunRecord load_run_record(const std::filesystem::path& path);

}  // namespace induce
