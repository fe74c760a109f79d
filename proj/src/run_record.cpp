#include "induce/run_record.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include "induce/error.hpp"
#include "json.hpp"

namespace induce {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json metrics_json(const Metrics& m) {
  return json{{"corpus_f1", optional_number(m.corpus_f1)},
              {"sentence_f1", optional_number(m.sentence_f1)},
              {"ppl", m.ppl},
              {"mbf", m.mbf},
              {"sentences", m.sentences},
              {"unparsed", m.unparsed},
              {"too_short", m.too_short}};
}

Metrics metrics_from(const json& j) {
  Metrics m;
  m.corpus_f1 = read_optional(j, "corpus_f1");
  m.sentence_f1 = read_optional(j, "sentence_f1");
  // Non-finite values are stored as null.
  m.ppl = j.at("ppl").is_null() ? std::numeric_limits<double>::infinity() : j.at("ppl").get<double>();
  m.mbf = j.at("mbf").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("mbf").get<double>();
  m.sentences = j.value("sentences", std::size_t{0});
  m.unparsed = j.value("unparsed", std::size_t{0});
  m.too_short = j.value("too_short", std::size_t{0});
  return m;
}

}  // namespace

const Metrics& RunRecord::best_validation() const {
  if (epochs.empty() || best_epoch == 0 || best_epoch > epochs.size()) {
    fail(ErrorCode::kFormat, "run record has no retained epoch");
  }
  return epochs[best_epoch - 1].validation;
}

std::string to_json(const Metrics& m, int indent) { return metrics_json(m).dump(indent); }

std::string to_json(const RunRecord& r, int indent) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"skipped", e.skipped},
                      {"seconds", e.seconds},
                      {"validation", metrics_json(e.validation)}});
  }
  json j = {{"seed", r.seed},
            {"config_hash", r.config_hash},
            {"mode", r.mode},
            {"zero_train", r.zero_train},
            {"epochs", epochs},
            {"best_epoch", r.best_epoch},
            {"test", r.test ? metrics_json(*r.test) : json(nullptr)},
            {"timing",
             {{"embedding_load_seconds", r.embedding_load_seconds},
              {"training_seconds", r.training_seconds}}},
            {"checkpoint", r.checkpoint}};
  return j.dump(indent);
}

RunRecord run_record_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    RunRecord r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.value("config_hash", std::string());
    r.mode = j.value("mode", std::string());
    r.zero_train = j.value("zero_train", false);
    for (const auto& e : j.at("epochs")) {
      EpochRecord er;
      er.epoch = e.at("epoch").get<std::size_t>();
      er.train_loss = e.at("train_loss").get<double>();
      er.skipped = e.value("skipped", std::size_t{0});
      er.seconds = e.value("seconds", 0.0);
      er.validation = metrics_from(e.at("validation"));
      r.epochs.push_back(er);
    }
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    if (j.contains("test") && !j.at("test").is_null()) r.test = metrics_from(j.at("test"));
    if (j.contains("timing")) {
      r.embedding_load_seconds = j.at("timing").value("embedding_load_seconds", 0.0);
      r.training_seconds = j.at("timing").value("training_seconds", 0.0);
    }
    r.checkpoint = j.value("checkpoint", std::string());
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("run record: ") + e.what());
  }
}

void save_run_record(const RunRecord& r, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out << to_json(r) << '\n';
    if (!out) fail(ErrorCode::kIo, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kIo, "cannot move run record into place: " + ec.message());
}

RunRecord load_run_record(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return run_record_from_json(buf.str());
}

}  // namespace induce
