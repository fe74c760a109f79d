#include "induce/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "induce/ablate.hpp"
#include "induce/config.hpp"
#include "induce/corpus.hpp"
#include "induce/error.hpp"
#include "induce/eval.hpp"
#include "induce/grammar.hpp"
#include "induce/model.hpp"
#include "induce/parser.hpp"
#include "induce/run_record.hpp"
#include "induce/trainer.hpp"

namespace induce {

namespace fs = std::filesystem;

void configure_logging() {
  static const bool once = [] {
    auto logger = spdlog::stderr_color_mt("induce");
    spdlog::set_default_logger(logger);
    return true;
  }();
  (void)once;
  if (const char* level = std::getenv("INDUCE_LOG")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

namespace {

struct CommonFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> mode;
  std::optional<std::string> decoder;
  std::optional<std::string> precision;
  bool zero_train = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config_file, "key=value config file")->check(CLI::ExistingFile);
  app->add_option("--set", f.sets, "config override key=value (repeatable)");
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("--threads", f.threads, "worker threads (0: all cores)");
  app->add_option("--mode", f.mode, "encoder mode")->check(CLI::IsMember({"baseline", "llm"}));
  app->add_flag("--zero-train", f.zero_train, "train without a latent");
  app->add_option("--decoder", f.decoder, "tree decoder")->check(CLI::IsMember({"mbr", "viterbi"}));
  app->add_option("--precision", f.precision, "float precision")->check(CLI::IsMember({"f32", "f64"}));
}

// Defaults < base < config file < --set < dedicated flags.
Config resolve(const CommonFlags& f, Config base = {}) {
  if (!f.config_file.empty()) base = load_config(f.config_file, base);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kConfig, "--set expects key=value, got '" + kv + "'");
    base.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) base.set("train.seed", std::to_string(*f.seed));
  if (f.threads) base.set("run.threads", std::to_string(*f.threads));
  if (f.mode) base.set("encoder.mode", *f.mode);
  if (f.zero_train) base.set("train.zero_train", "true");
  if (f.decoder) base.set("eval.decoder", *f.decoder);
  if (f.precision) base.set("run.precision", *f.precision);
  base.validate();
  spdlog::info("config {}\n{}", hash_hex(base.hash()), base.to_text());
  return base;
}

std::string config_hash(const Config& c) { return hash_hex(c.hash()); }

struct SplitPaths {
  std::string corpus;
  std::string trees;
  std::string embeddings;
};

void add_split(CLI::App* app, SplitPaths& p, const std::string& prefix, bool required) {
  const std::string stem = prefix.empty() ? "corpus" : prefix;
  const std::string dash = prefix.empty() ? "" : prefix + "-";
  auto* corpus = app->add_option("--" + stem, p.corpus, "sentence file")->check(CLI::ExistingFile);
  if (required) corpus->required();
  app->add_option("--" + dash + "trees", p.trees, "gold tree file")->check(CLI::ExistingFile);
  app->add_option("--" + dash + "emb", p.embeddings, "EMB1 embedding file")->check(CLI::ExistingFile);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Dataset load_split(const SplitPaths& p, const Vocabulary& vocab, std::size_t max_length,
                   double* embedding_seconds = nullptr) {
  Dataset data;
  if (!p.embeddings.empty()) {
    const auto start = std::chrono::steady_clock::now();
    data.embeddings = read_embeddings(p.embeddings);
    if (embedding_seconds) *embedding_seconds += seconds_since(start);
  }
  auto loaded = load_corpus(p.corpus, &vocab, max_length, data.embeddings ? &*data.embeddings : nullptr);
  if (!loaded.dropped.empty()) {
    spdlog::info("{}: dropped {} empty or over-length lines", p.corpus, loaded.dropped.size());
  }
  data.sentences = std::move(loaded.sentences);
  if (data.sentences.empty()) fail(ErrorCode::kEmptyInput, p.corpus + " has no usable sentences");
  if (!p.trees.empty()) data.trees = align_trees(load_trees(p.trees), data.sentences);
  return data;
}

template <typename F>
auto with_precision(Precision precision, F&& f) {
  if (precision == Precision::kF64) return f.template operator()<double>();
  return f.template operator()<float>();
}

EvalOptions eval_options(const Config& c) {
  EvalOptions o;
  o.decoder = c.decoder;
  o.threads = c.resolved_threads();
  o.exclude_short = c.exclude_short;
  return o;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

std::string metrics_line(const std::string& label, const Metrics& m, const Config& c) {
  nlohmann::json j = {{"model", label},
                      {"metrics", nlohmann::json::parse(to_json(m))},
                      {"config_hash", config_hash(c)}};
  return j.dump();
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  CommonFlags common;
  SplitPaths train, val, test;
  std::string out_dir;
  std::size_t runs = 1;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const Config base = resolve(a.common);
  const auto raw = load_corpus(a.train.corpus, nullptr, base.max_length);
  const Vocabulary vocab = build_vocabulary(raw.sentences, base.vocab_size);
  double embedding_seconds = 0;
  const Dataset train = load_split(a.train, vocab, base.max_length, &embedding_seconds);
  const Dataset val = a.val.corpus.empty() ? train : load_split(a.val, vocab, base.max_length, &embedding_seconds);
  std::optional<Dataset> test;
  if (!a.test.corpus.empty()) test = load_split(a.test, vocab, base.max_length, &embedding_seconds);
  fs::create_directories(a.out_dir);
  spdlog::info("vocabulary {} types, {} train / {} val sentences", vocab.size(), train.size(), val.size());

  for (std::size_t r = 0; r < a.runs; ++r) {
    Config config = base;
    config.seed = base.seed + r;
    const fs::path dir(a.out_dir);
    TrainOptions options;
    options.threads = config.resolved_threads();
    options.checkpoint = dir / fmt::format("model-{}.ckp", config.seed);
    options.test = test ? &*test : nullptr;
    RunRecord record = with_precision(config.precision, [&]<typename Real>() {
      return train_run<Real>(config, vocab, train, val, options).record;
    });
    record.embedding_load_seconds = embedding_seconds;
    const auto path = dir / fmt::format("run-{}.json", config.seed);
    save_run_record(record, path);
    const auto& v = record.best_validation();
    out << fmt::format("seed {}  best epoch {}  val ppl {:.4f}  test C-F1 {}  config {}  -> {}\n", record.seed,
                       record.best_epoch, v.ppl,
                       record.test && record.test->corpus_f1 ? fmt::format("{:.1f}", 100 * *record.test->corpus_f1)
                                                             : std::string("-"),
                       record.config_hash, path.string());
  }
  return kExitOk;
}

struct CheckpointArgs {
  CommonFlags common;
  SplitPaths data;
  std::string checkpoint;
};

void add_checkpoint_args(CLI::App* app, CheckpointArgs& a) {
  add_common(app, a.common);
  add_split(app, a.data, "", true);
  app->add_option("--checkpoint", a.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
}

int cmd_eval(const CheckpointArgs& a, const std::string& json_path, std::ostream& out) {
  const Config config = resolve(a.common, checkpoint_config(a.checkpoint));
  const Metrics m = with_precision(config.precision, [&]<typename Real>() {
    const auto model = load_checkpoint<Real>(a.checkpoint);
    const Dataset data = load_split(a.data, model.vocab(), config.max_length);
    return evaluate(model, data, eval_options(config)).metrics;
  });
  const std::vector<ReportRow> rows{{fs::path(a.checkpoint).stem().string(), m}};
  out << metrics_table(rows);
  const auto line = metrics_line(rows[0].label, m, config);
  out << line << "\n";
  if (!json_path.empty()) open_output(json_path) << line << "\n";
  return kExitOk;
}

int cmd_decode(const CheckpointArgs& a, const std::string& format, const std::string& out_path,
               std::ostream& out) {
  const Config config = resolve(a.common, checkpoint_config(a.checkpoint));
  std::ofstream file;
  if (!out_path.empty()) file = open_output(out_path);
  std::ostream& sink = out_path.empty() ? out : file;
  const std::string hash = config_hash(config);
  with_precision(config.precision, [&]<typename Real>() {
    const auto model = load_checkpoint<Real>(a.checkpoint);
    const Dataset data = load_split(a.data, model.vocab(), config.max_length);
    const auto result = evaluate(model, data, eval_options(config));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& s = data.sentences[i];
      const auto tree = result.trees[i].to_sexpr(s.tokens);
      if (format == "sexpr") {
        sink << tree << "\n";
      } else {
        nlohmann::json j = {{"line", s.source_index}, {"tree", tree}, {"config_hash", hash}};
        sink << j.dump() << "\n";
      }
    }
  });
  return kExitOk;
}

int cmd_ablate(const CheckpointArgs& a, const std::vector<std::string>& names, const std::string& out_path,
               std::ostream& out) {
  const Config config = resolve(a.common, checkpoint_config(a.checkpoint));
  std::vector<AblationMode> modes;
  if (names.empty() || (names.size() == 1 && names[0] == "all")) {
    modes = all_ablations();
  } else {
    for (const auto& n : names) modes.push_back(parse_ablation(n));
  }
  std::vector<ReportRow> rows;
  std::vector<std::string> lines;
  with_precision(config.precision, [&]<typename Real>() {
    const auto model = load_checkpoint<Real>(a.checkpoint);
    const Dataset data = load_split(a.data, model.vocab(), config.max_length);
    AblationOptions options;
    options.seed = config.seed;
    options.batch_size = config.eval_batch_size;
    options.eval = eval_options(config);
    std::optional<Metrics> baseline;
    for (const auto mode : modes) {
      options.mode = mode;
      Metrics m;
      if (mode == AblationMode::kRandomZ && !model.latent()) {
        spdlog::info("random_z: model has no latent, reporting the default metrics");
        if (!baseline) {
          options.mode = AblationMode::kDefault;
          baseline = ablated_eval(model, data, options).metrics;
        }
        m = *baseline;
      } else {
        m = ablated_eval(model, data, options).metrics;
        if (mode == AblationMode::kDefault) baseline = m;
      }
      rows.push_back({std::string(ablation_name(mode)), m});
      lines.push_back(ablation_json(mode, m, config));
    }
  });
  out << metrics_table(rows);
  std::ofstream file;
  if (!out_path.empty()) file = open_output(out_path);
  for (const auto& line : lines) {
    out << line << "\n";
    if (file.is_open()) file << line << "\n";
  }
  return kExitOk;
}

int cmd_select(const CommonFlags& common, const std::string& dir, const std::optional<std::string>& criterion,
               std::optional<std::size_t> k, std::ostream& out) {
  Config config = resolve(common);
  if (criterion) config.set("select.criterion", *criterion);
  if (k) config.set("select.k", std::to_string(*k));
  if (!fs::is_directory(dir)) fail(ErrorCode::kIo, dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> records;
  for (const auto& f : files) {
    try {
      records.push_back(load_run_record(f));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kFormat) throw;
      spdlog::warn("skipping {}: {}", f.string(), e.what());
    }
  }
  spdlog::info("{} run records under {}", records.size(), dir);
  const auto selection = select_runs(records, config.selection, config.select_k, config.mbf_target);
  out << selection_table(selection, config.selection);
  out << selection_json(selection, config.selection, config_hash(config)) << "\n";
  return kExitOk;
}

int cmd_baseline(const CommonFlags& common, const SplitPaths& paths, const std::string& kind_name,
                 std::size_t samples, std::ostream& out) {
  const Config config = resolve(common);
  const auto kind = parse_baseline_kind(kind_name);
  if (paths.trees.empty()) fail(ErrorCode::kConfig, "baseline needs --trees");
  if (samples == 0) fail(ErrorCode::kConfig, "--samples must be at least 1");
  const Dataset data = load_split(paths, Vocabulary(), config.max_length);
  std::vector<const GoldTree*> gold;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.sentences[i].size() >= 2) gold.push_back(&data.trees[i]);
  }
  std::vector<BinaryTree> gold_trees;
  for (const auto* g : gold) gold_trees.push_back(g->tree);
  const std::size_t draws = kind == BaselineKind::kRandom ? samples : 1;
  std::mt19937_64 rng(config.seed);
  Metrics m;
  m.sentences = gold.size();
  m.too_short = data.size() - gold.size();
  m.ppl = std::numeric_limits<double>::quiet_NaN();
  double cf1 = 0;
  double sf1 = 0;
  double branching = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    std::vector<BinaryTree> pred;
    for (const auto* g : gold) pred.push_back(baseline_tree(kind, g->leaf_count(), rng));
    cf1 += corpus_f1(pred, gold_trees).f1;
    sf1 += sentence_f1(pred, gold_trees, config.exclude_short);
    branching += corpus_mbf(pred);
  }
  m.corpus_f1 = cf1 / static_cast<double>(draws);
  m.sentence_f1 = sf1 / static_cast<double>(draws);
  m.mbf = branching / static_cast<double>(draws);
  const std::string label(baseline_kind_name(kind));
  const std::vector<ReportRow> rows{{label, m}};
  out << metrics_table(rows);
  out << metrics_line(label, m, config) << "\n";
  return kExitOk;
}

struct SampleArgs {
  CommonFlags common;
  std::string grammar;
  std::size_t count = 0;
  std::size_t max_len = 20;
  std::string corpus_out;
  std::string trees_out;
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  const Config config = resolve(a.common);
  const auto grammar = load_grammar(a.grammar);
  const auto sampled = sample_corpus(grammar, a.count, a.max_len, config.seed);
  auto corpus = open_output(a.corpus_out);
  auto trees = open_output(a.trees_out);
  for (std::size_t i = 0; i < sampled.sentences.size(); ++i) {
    const auto& tokens = sampled.sentences[i].tokens;
    corpus << fmt::format("{}\n", fmt::join(tokens, " "));
    trees << sampled.trees[i].to_sexpr(tokens) << "\n";
  }
  out << fmt::format("sampled {} sentences (seed {}, config {}) -> {}, {}\n", sampled.sentences.size(), config.seed,
                     config_hash(config), a.corpus_out, a.trees_out);
  return kExitOk;
}

int cmd_gradcheck(const CommonFlags& common, double tolerance, std::ostream& out) {
  Config config = resolve(common);
  config.nonterminals = 2;
  config.preterminals = 3;
  config.symbol_dim = 8;
  config.z_dim = 4;
  config.word_dim = 8;
  const Vocabulary vocab({"a", "b", "c", "d"});
  const std::vector<std::size_t> ids{1, 3, 2, 4};
  constexpr std::uint32_t kEmbeddingDim = 6;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal;
  EmbeddingRecord embedding{static_cast<std::uint32_t>(ids.size()), kEmbeddingDim, {}};
  for (std::size_t i = 0; i < ids.size() * kEmbeddingDim; ++i) embedding.values.push_back(static_cast<float>(normal(rng)));
  std::vector<double> noise(config.z_dim);
  for (auto& x : noise) x = normal(rng);

  struct Case {
    std::string name;
    EncoderMode mode;
    bool zero_train;
  };
  const std::vector<Case> cases{{"zero_train", EncoderMode::kBaseline, true},
                                {"baseline", EncoderMode::kBaseline, false},
                                {"llm", EncoderMode::kLlm, false}};
  bool ok = true;
  for (const auto& c : cases) {
    Config cc = config;
    cc.mode = c.mode;
    cc.zero_train = c.zero_train;
    Model<double> model(cc, vocab, c.mode == EncoderMode::kLlm ? kEmbeddingDim : 0);
    model.initialize(config.seed);
    const auto result = elbo_gradcheck(model, ids, model.needs_embeddings() ? &embedding : nullptr, noise);
    const bool pass = result.max_relative_error <= tolerance;
    ok = ok && pass;
    out << fmt::format("{} {:<10}  max rel err {:.3e} over {} coordinates (worst {}[{}])\n", pass ? "PASS" : "FAIL",
                       c.name, result.max_relative_error, result.coordinates, result.worst_parameter,
                       result.worst_index);
  }
  out << fmt::format("gradcheck {} (tolerance {:.0e}, config {})\n", ok ? "passed" : "failed", tolerance,
                     config_hash(config));
  return ok ? kExitOk : kExitData;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Grammar induction workbench", "induce"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train runs and write run records and checkpoints");
  add_common(train_cmd, train.common);
  add_split(train_cmd, train.train, "train", true);
  add_split(train_cmd, train.val, "val", false);
  add_split(train_cmd, train.test, "test", false);
  train_cmd->add_option("--out", train.out_dir, "output directory")->required();
  train_cmd->add_option("--runs", train.runs, "consecutive seeds to train")->check(CLI::PositiveNumber);

  CheckpointArgs eval;
  std::string eval_json;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a corpus");
  add_checkpoint_args(eval_cmd, eval);
  eval_cmd->add_option("--json", eval_json, "also write the metrics JSON here");

  CheckpointArgs decode;
  std::string decode_format = "jsonl";
  std::string decode_out;
  auto* decode_cmd = app.add_subcommand("decode", "print predicted trees");
  add_checkpoint_args(decode_cmd, decode);
  decode_cmd->add_option("--format", decode_format, "output format")->check(CLI::IsMember({"jsonl", "sexpr"}));
  decode_cmd->add_option("--out", decode_out, "output file (default stdout)");

  CheckpointArgs ablate;
  std::vector<std::string> ablate_modes;
  std::string ablate_out;
  auto* ablate_cmd = app.add_subcommand("ablate", "evaluate under input ablations");
  add_checkpoint_args(ablate_cmd, ablate);
  ablate_cmd->add_option("--ablation", ablate_modes,
                         "default|zero_z|random_z|shuffle|zero_captions|all (repeatable, default all)");
  ablate_cmd->add_option("--out", ablate_out, "JSON lines output file");

  CommonFlags select;
  std::string select_dir;
  std::optional<std::string> select_criterion;
  std::optional<std::size_t> select_k;
  auto* select_cmd = app.add_subcommand("select", "aggregate the top-k runs of a directory");
  add_common(select_cmd, select);
  select_cmd->add_option("dir", select_dir, "directory of run records")->required();
  select_cmd->add_option("--criterion", select_criterion, "val_f1|ppl|mbf");
  select_cmd->add_option("--k", select_k, "runs to keep");

  CommonFlags baseline;
  SplitPaths baseline_data;
  std::string baseline_kind;
  std::size_t baseline_samples = 10;
  auto* baseline_cmd = app.add_subcommand("baseline", "score a trivial tree baseline");
  add_common(baseline_cmd, baseline);
  add_split(baseline_cmd, baseline_data, "", true);
  baseline_cmd->add_option("--kind", baseline_kind, "left|right|random")->required();
  baseline_cmd->add_option("--samples", baseline_samples, "random-tree draws to average");

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample", "sample a corpus and trees from a grammar file");
  add_common(sample_cmd, sample.common);
  sample_cmd->add_option("--grammar", sample.grammar, "grammar file")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--count", sample.count, "sentences")->required();
  sample_cmd->add_option("--max-len", sample.max_len, "maximum sentence length");
  sample_cmd->add_option("--corpus-out", sample.corpus_out, "sentence file to write")->required();
  sample_cmd->add_option("--trees-out", sample.trees_out, "tree file to write")->required();

  CommonFlags gradcheck;
  double gradcheck_tolerance = 1e-6;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of the training loss");
  add_common(gradcheck_cmd, gradcheck);
  gradcheck_cmd->add_option("--tolerance", gradcheck_tolerance, "maximum relative error");

  if (!args.empty() && !args[0].starts_with('-') && app.get_subcommand_no_throw(args[0]) == nullptr) {
    err << "unknown subcommand '" << args[0] << "'\n" << app.help();
    return kExitUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train, out);
    if (*eval_cmd) return cmd_eval(eval, eval_json, out);
    if (*decode_cmd) return cmd_decode(decode, decode_format, decode_out, out);
    if (*ablate_cmd) return cmd_ablate(ablate, ablate_modes, ablate_out, out);
    if (*select_cmd) return cmd_select(select, select_dir, select_criterion, select_k, out);
    if (*baseline_cmd) return cmd_baseline(baseline, baseline_data, baseline_kind, baseline_samples, out);
    if (*sample_cmd) return cmd_sample(sample, out);
    if (*gradcheck_cmd) return cmd_gradcheck(gradcheck, gradcheck_tolerance, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kConfig ? kExitUsage : kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace induce
