#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "induce/cli.hpp"
#include "induce/corpus.hpp"
#include "induce/embeddings.hpp"
#include "induce/eval.hpp"
#include "synthetic.hpp"
#include "temp_dir.hpp"

namespace fs = std::filesystem;
using namespace induce;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Sampled train and val splits of the planted grammar.
struct Workspace {
  TempDir dir;
  fs::path grammar = dir.path() / "g.txt";
  fs::path train = dir.path() / "train.txt";
  fs::path train_trees = dir.path() / "train.trees";
  fs::path val = dir.path() / "val.txt";
  fs::path val_trees = dir.path() / "val.trees";

  Workspace() {
    write_text(grammar, synthetic::kPlantedGrammar);
    REQUIRE(run({"sample", "--grammar", grammar, "--count", "120", "--max-len", "8", "--seed", "1", "--corpus-out",
                 train, "--trees-out", train_trees})
                .code == 0);
    REQUIRE(run({"sample", "--grammar", grammar, "--count", "40", "--max-len", "8", "--seed", "2", "--corpus-out",
                 val, "--trees-out", val_trees})
                .code == 0);
  }

  std::vector<std::string> train_args(const fs::path& out, const std::string& runs) const {
    return {"train", "--train", train, "--val", val, "--val-trees", val_trees, "--test", val, "--test-trees",
            val_trees, "--zero-train", "--set", "grammar.nonterminals=3", "--set", "grammar.preterminals=4", "--set",
            "grammar.symbol_dim=8", "--set", "train.epochs=1", "--threads", "1", "--out", out, "--runs", runs};
  }
};

}  // namespace

TEST_CASE("unknown or missing subcommand is a usage error") {
  const auto bogus = run({"frobnicate"});
  CHECK(bogus.code == kExitUsage);
  CHECK(bogus.err.find("induce") != std::string::npos);
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"train"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("sample writes parallel corpus and tree files reproducibly") {
  Workspace ws;
  const auto sentences = lines_of(slurp(ws.train));
  const auto trees = load_trees(ws.train_trees);
  REQUIRE(sentences.size() == 120);
  REQUIRE(trees.size() == 120);
  for (std::size_t i = 0; i < trees.size(); ++i) {
    CHECK(trees[i].leaf_count() == preprocess(sentences[i]).size());
    CHECK(trees[i].leaf_count() <= 8);
  }
  const auto again = ws.dir.path() / "again.txt";
  REQUIRE(run({"sample", "--grammar", ws.grammar, "--count", "120", "--max-len", "8", "--seed", "1", "--corpus-out",
               again, "--trees-out", ws.dir.path() / "again.trees"})
              .code == 0);
  CHECK(slurp(again) == slurp(ws.train));
}

TEST_CASE("flag beats config file beats default") {
  Workspace ws;
  const auto cfg = ws.dir.path() / "run.cfg";
  write_text(cfg, "train.seed = 5\n");
  auto sample = [&](std::vector<std::string> extra) {
    std::vector<std::string> args{"sample", "--grammar", ws.grammar, "--count", "3", "--corpus-out",
                                  ws.dir.path() / "c.txt", "--trees-out", ws.dir.path() / "c.trees"};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };
  CHECK(sample({}).out.find("seed 0,") != std::string::npos);
  CHECK(sample({"--config", cfg}).out.find("seed 5,") != std::string::npos);
  CHECK(sample({"--config", cfg, "--seed", "7"}).out.find("seed 7,") != std::string::npos);
  CHECK(sample({"--set", "train.seed=9"}).out.find("seed 9,") != std::string::npos);
  CHECK(sample({"--set", "no.such_key=1"}).code == kExitUsage);
  CHECK(sample({"--set", "missing-equals"}).code == kExitUsage);
}

TEST_CASE("train, eval, decode, ablate and select chain together") {
  Workspace ws;
  const auto runs = ws.dir.path() / "runs";
  const auto trained = run(ws.train_args(runs, "3"));
  REQUIRE_MESSAGE(trained.code == 0, trained.err);
  for (int seed = 0; seed < 3; ++seed) {
    CHECK(fs::exists(runs / ("run-" + std::to_string(seed) + ".json")));
    CHECK(fs::exists(runs / ("model-" + std::to_string(seed) + ".ckp")));
  }
  const auto record = load_run_record(runs / "run-1.json");
  CHECK(record.seed == 1);
  CHECK(record.zero_train);
  REQUIRE(record.test.has_value());

  SUBCASE("retraining a seed reproduces the checkpoint") {
    const auto rerun = ws.dir.path() / "rerun";
    REQUIRE(run(ws.train_args(rerun, "1")).code == 0);
    CHECK(slurp(rerun / "model-0.ckp") == slurp(runs / "model-0.ckp"));
  }

  SUBCASE("eval reports the test metrics of the run record") {
    const auto json = ws.dir.path() / "eval.json";
    const auto r = run({"eval", "--checkpoint", runs / "model-1.ckp", "--corpus", ws.val, "--trees", ws.val_trees,
                        "--threads", "1", "--json", json});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("C-F1") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(json));
    CHECK(j["metrics"]["corpus_f1"].get<double>() == doctest::Approx(*record.test->corpus_f1).epsilon(1e-9));
    CHECK(j["metrics"]["ppl"].get<double>() == doctest::Approx(record.test->ppl).epsilon(1e-9));
    CHECK(j["config_hash"].get<std::string>().size() == 16);
  }

  SUBCASE("decode emits one tree per sentence") {
    const auto out = ws.dir.path() / "pred.trees";
    REQUIRE(run({"decode", "--checkpoint", runs / "model-0.ckp", "--corpus", ws.val, "--format", "sexpr", "--out",
                 out})
                .code == 0);
    const auto pred = load_trees(out);
    const auto gold = load_trees(ws.val_trees);
    REQUIRE(pred.size() == gold.size());
    for (std::size_t i = 0; i < pred.size(); ++i) CHECK(pred[i].leaf_count() == gold[i].leaf_count());

    const auto jsonl = run({"decode", "--checkpoint", runs / "model-0.ckp", "--corpus", ws.val});
    const auto lines = lines_of(jsonl.out);
    REQUIRE(lines.size() == gold.size());
    CHECK(nlohmann::json::parse(lines[0]).contains("config_hash"));
  }

  SUBCASE("ablate writes one JSON line per mode") {
    const auto out = ws.dir.path() / "ablate.jsonl";
    const auto r = run({"ablate", "--checkpoint", runs / "model-0.ckp", "--corpus", ws.val, "--trees", ws.val_trees,
                        "--out", out});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto lines = lines_of(slurp(out));
    REQUIRE(lines.size() == 5);
    const auto first = nlohmann::json::parse(lines[0]);
    CHECK(first["mode"] == "default");
    for (const auto& line : lines) {
      const auto j = nlohmann::json::parse(line);
      if (j["mode"] == "zero_z" || j["mode"] == "random_z") CHECK(j["metrics"] == first["metrics"]);
    }
    CHECK(run({"ablate", "--checkpoint", runs / "model-0.ckp", "--corpus", ws.val, "--ablation", "nope"}).code ==
          kExitUsage);
  }

  SUBCASE("select aggregates the top runs") {
    write_text(runs / "notes.json", "{\"unrelated\": true}");
    const auto r = run({"select", runs, "--criterion", "ppl", "--k", "2"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("±") != std::string::npos);
    const auto brace = r.out.find('{');
    REQUIRE(brace != std::string::npos);
    const auto j = nlohmann::json::parse(r.out.substr(brace));
    CHECK(j["k"] == 2);
    CHECK(j["criterion"] == "ppl");
    CHECK(run({"select", runs, "--k", "4"}).code == kExitData);
  }
}

TEST_CASE("llm-mode training reads embeddings") {
  Workspace ws;
  auto embed = [&](const fs::path& corpus, const fs::path& out) {
    const auto loaded = load_corpus(corpus);
    std::mt19937_64 rng(3);
    std::normal_distribution<float> normal;
    EmbeddingStore store(6);
    for (const auto& s : loaded.sentences) {
      EmbeddingRecord r{static_cast<std::uint32_t>(s.size()), 6, {}};
      for (std::size_t i = 0; i < s.size() * 6; ++i) r.values.push_back(normal(rng));
      store.add(std::move(r));
    }
    write_embeddings(store, out);
  };
  const auto train_emb = ws.dir.path() / "train.emb";
  const auto val_emb = ws.dir.path() / "val.emb";
  embed(ws.train, train_emb);
  embed(ws.val, val_emb);
  const auto runs = ws.dir.path() / "runs";
  const std::vector<std::string> common{"--mode", "llm", "--set", "grammar.nonterminals=3", "--set",
                                        "grammar.preterminals=4", "--set", "grammar.symbol_dim=8", "--set",
                                        "grammar.z_dim=2", "--set", "train.epochs=1", "--threads", "1"};
  auto args = std::vector<std::string>{"train", "--train", ws.train, "--train-emb", train_emb, "--val", ws.val,
                                       "--val-emb", val_emb, "--out", runs};
  args.insert(args.end(), common.begin(), common.end());
  const auto r = run(args);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto record = load_run_record(runs / "run-0.json");
  CHECK(record.mode == "llm");
  CHECK(record.embedding_load_seconds >= 0);

  CHECK(run({"eval", "--checkpoint", runs / "model-0.ckp", "--corpus", ws.val, "--emb", val_emb}).code == 0);
  // An llm model cannot be scored without its embeddings.
  CHECK(run({"eval", "--checkpoint", runs / "model-0.ckp", "--corpus", ws.val}).code == kExitUsage);
  // Embeddings built for another corpus do not align.
  CHECK(run({"eval", "--checkpoint", runs / "model-0.ckp", "--corpus", ws.val, "--emb", train_emb}).code ==
        kExitData);
}

TEST_CASE("baseline right reports right-branching scores") {
  Workspace ws;
  const auto r = run({"baseline", "--kind", "right", "--corpus", ws.val, "--trees", ws.val_trees});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("right") != std::string::npos);

  const auto gold = load_trees(ws.val_trees);
  std::vector<BinaryTree> g;
  std::vector<BinaryTree> p;
  for (const auto& t : gold) {
    if (t.leaf_count() < 2) continue;
    g.push_back(t.tree);
    p.push_back(BinaryTree::right_branching(t.leaf_count()));
  }
  const auto j = nlohmann::json::parse(lines_of(r.out).back());
  CHECK(j["metrics"]["corpus_f1"].get<double>() == doctest::Approx(corpus_f1(p, g).f1));
  CHECK(j["metrics"]["sentence_f1"].get<double>() == doctest::Approx(sentence_f1(p, g, false)));

  const auto a = run({"baseline", "--kind", "random", "--corpus", ws.val, "--trees", ws.val_trees, "--seed", "4"});
  const auto b = run({"baseline", "--kind", "random", "--corpus", ws.val, "--trees", ws.val_trees, "--seed", "4"});
  CHECK(a.out == b.out);
  CHECK(run({"baseline", "--kind", "diagonal", "--corpus", ws.val, "--trees", ws.val_trees}).code == kExitUsage);
}

TEST_CASE("data errors exit with 2") {
  Workspace ws;
  // Trees of another corpus: leaf counts disagree.
  CHECK(run({"baseline", "--kind", "left", "--corpus", ws.val, "--trees", ws.train_trees}).code == kExitData);
  const auto broken = ws.dir.path() / "broken.trees";
  write_text(broken, "(T a b\n");
  CHECK(run({"baseline", "--kind", "left", "--corpus", ws.val, "--trees", broken}).code == kExitData);
  const auto bad_grammar = ws.dir.path() / "bad.g";
  write_text(bad_grammar, "S -> A 0.5\n");
  CHECK(run({"sample", "--grammar", bad_grammar, "--count", "2", "--corpus-out", ws.dir.path() / "x",
             "--trees-out", ws.dir.path() / "y"})
            .code == kExitData);
  const auto fake = ws.dir.path() / "fake.ckp";
  write_text(fake, "not a checkpoint");
  CHECK(run({"eval", "--checkpoint", fake, "--corpus", ws.val}).code == kExitData);
}

TEST_CASE("gradcheck passes") {
  const auto r = run({"gradcheck"});
  CHECK(r.code == kExitOk);
  CHECK(lines_of(r.out).size() == 4);
  CHECK(r.out.find("FAIL") == std::string::npos);
}
