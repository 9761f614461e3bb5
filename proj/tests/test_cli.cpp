#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "telephone/analysis.hpp"
#include "telephone/chain_engine.hpp"
#include "telephone/cli.hpp"
#include "telephone/io.hpp"
#include "telephone/ngram_lm.hpp"
#include "telephone/pcfg_lm.hpp"

using namespace telephone;
namespace fs = std::filesystem;

namespace {

const std::string kData = TELEPHONE_DATA_DIR;

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("telephone_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> base_args(const fs::path& out) {
  return {"--out", out.string(), "--set", "corpus=" + kData + "/fixture_corpus.txt", "--set",
          "treebank=" + kData + "/fixture_treebank.txt", "--set", "norms=" + kData + "/fixture_norms.csv"};
}

Run cli_in(const fs::path& out, std::vector<std::string> extra) {
  auto args = base_args(out);
  args.insert(args.end(), extra.begin(), extra.end());
  return cli(args);
}

// "digest <hex>  <path>" lines
std::map<std::string, std::string> digests(const std::string& out) {
  std::map<std::string, std::string> d;
  std::istringstream in(out);
  std::string word, hex, path;
  while (in >> word) {
    if (word != "digest") continue;
    in >> hex >> path;
    d[path] = hex;
  }
  return d;
}

// trained models shared by the cases below
const fs::path& trained() {
  static fs::path dir = [] {
    auto p = scratch("trained");
    auto r = cli_in(p, {"train"});
    REQUIRE(r.code == 0);
    return p;
  }();
  return dir;
}

fs::path copy_trained(const std::string& name) {
  auto p = scratch(name);
  fs::create_directories(p);
  fs::copy(trained() / "models", p / "models", fs::copy_options::recursive);
  return p;
}

}  // namespace

TEST_CASE("config round trip and defaults file") {
  RunConfig cfg;
  cfg.set("lambda", "6.5");
  cfg.set("models", "unigram,trigram");
  cfg.set("prior", "trigram");
  CHECK(RunConfig::parse(cfg.serialize()) == cfg);

  auto file = RunConfig::load(std::string(TELEPHONE_CONFIG_DIR) + "/default.cfg");
  CHECK(RunConfig::parse(file.serialize()) == file);
  RunConfig defaults;
  for (const auto& [k, v] : defaults.values()) {
    if (std::find(kPathKeys.begin(), kPathKeys.end(), k) != kPathKeys.end()) continue;
    CHECK_MESSAGE(file.get(k) == v, k);
  }
  CHECK(fs::path(file.get("corpus")).is_absolute());
  CHECK(fs::is_regular_file(file.get("corpus")));
}

TEST_CASE("config errors name the key") {
  try {
    RunConfig::parse("lambda = 2\nbogus_key = 1\n", "x.cfg");
    FAIL("no error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
  }
  RunConfig cfg;
  cfg.set("lambda", "-1");
  try {
    cfg.validate();
    FAIL("no error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("lambda", 0) == 0);
  }
  CHECK_THROWS_AS(RunConfig::parse("no equals sign"), ConfigError);

  auto r = cli({"--set", "bogus_key=1", "train"});
  CHECK(r.code == 2);
  CHECK(r.err.find("bogus_key") != std::string::npos);
  CHECK(cli({"frobnicate"}).code == 2);
}

TEST_CASE("train with a bad path exits 2") {
  auto out = scratch("badpath");
  auto r = cli_in(out, {"--set", "corpus=/no/such/corpus.txt", "train"});
  CHECK(r.code == 2);
  CHECK(r.err.find("corpus") != std::string::npos);
}

TEST_CASE("train writes models that reload, byte-identical on retrain") {
  const auto& dir = trained();
  for (const char* id : {"unigram", "bigram", "trigram"}) {
    auto m = read_arpa_file((dir / "models" / (std::string(id) + ".arpa")).string());
    CHECK(m.order() == (id[0] == 'u' ? 1 : id[0] == 'b' ? 2 : 3));
  }
  auto g = read_grammar_file((dir / "models" / "pcfg.grammar").string());
  CHECK(g.rules().size() > 10);
  auto summary = nlohmann::json::parse(read_file((dir / "train_summary.json").string()));
  CHECK(summary.contains("trigram"));

  auto again = scratch("retrain");
  auto r1 = cli_in(again, {"train"});
  auto first = digests(r1.out);
  auto r2 = cli_in(again, {"train"});
  REQUIRE(r1.code == 0);
  REQUIRE(r2.code == 0);
  CHECK(first.size() >= 5);
  CHECK(first == digests(r2.out));
  CHECK(read_file((again / "models/trigram.arpa").string()) == read_file((dir / "models/trigram.arpa").string()));
}

TEST_CASE("simulate: chain count, row audit and determinism") {
  auto out = copy_trained("simulate");
  REQUIRE(cli_in(out, {"--set", "stimuli=2", "select-stimuli"}).code == 0);
  auto r1 = cli_in(out, {"--set", "stimuli=2", "--generations", "3", "simulate"});
  REQUIRE(r1.code == 0);
  auto j = nlohmann::json::parse(read_file((out / "chains.json").string()));
  auto log = ChainLog::from_json(j);
  auto chains = log.accepted_chains();
  CHECK(chains.size() == 2);
  for (const auto& c : chains) CHECK(c.size() == 4);

  // audit: csv and json agree, one protected seed per chain, accepted
  // generations 1..3 exactly once, every other row a flagged attempt
  std::ifstream csv(out / "chains.csv");
  CHECK(ChainLog::read_csv(csv) == log);
  CHECK(log.gap_free());
  std::map<std::size_t, std::vector<int>> accepted;
  std::size_t protected_rows = 0, flagged = 0;
  for (const auto& row : log.rows) {
    if (row.state == NodeState::protected_stimulus) {
      ++protected_rows;
      CHECK(row.generation == 0);
    } else if (row.state == NodeState::accepted) {
      accepted[row.chain_id].push_back(row.generation);
    } else {
      CHECK(is_flagged(row.state));
      CHECK(!row.flag_reason.empty());
      ++flagged;
    }
  }
  CHECK(protected_rows == 2);
  CHECK(protected_rows + flagged + 6 == log.rows.size());
  for (auto& [c, gens] : accepted) {
    std::sort(gens.begin(), gens.end());
    CHECK(gens == std::vector<int>{1, 2, 3});
  }
  CHECK(r1.out.find("chains: 2 (2 reached generation 3), " + std::to_string(log.rows.size()) + " recordings") !=
        std::string::npos);

  auto r2 = cli_in(out, {"--set", "stimuli=2", "--generations", "3", "simulate"});
  REQUIRE(r2.code == 0);
  CHECK(digests(r1.out) == digests(r2.out));
  auto r3 = cli_in(out, {"--set", "stimuli=2", "--generations", "3", "--seed", "99", "simulate"});
  CHECK(digests(r3.out) != digests(r1.out));
}

TEST_CASE("analyze writes every report and its AUC matches the library") {
  auto out = copy_trained("analyze");
  const std::vector<std::string> small = {"--set", "stimuli=8", "--generations", "6"};
  auto run = [&](const std::string& cmd) {
    auto args = small;
    args.push_back(cmd);
    auto r = cli_in(out, args);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return r;
  };
  run("select-stimuli");
  auto s1 = run("simulate");
  auto a1 = run("analyze");
  run("report");
  for (const char* f : {"analysis/trajectories.csv", "analysis/convergence.csv", "analysis/regression.json",
                        "analysis/auc.csv", "analysis/similarity.csv", "analysis/dendrogram.csv",
                        "analysis/summary.json", "report.md", "digests.txt"}) {
    CHECK_MESSAGE(fs::is_regular_file(out / f), f);
  }

  // the fullest model, refitted directly
  std::ifstream csv(out / "chains.csv");
  auto log = ChainLog::read_csv(csv);
  std::vector<NamedModel> models;
  for (const char* id : {"unigram", "trigram", "bigram"}) {
    models.push_back({id, std::make_shared<NGramModel>(
                              read_arpa_file((out / "models" / (std::string(id) + ".arpa")).string()))});
  }
  models.push_back({"pcfg", std::make_shared<PcfgModel>(std::make_shared<const Pcfg>(
                                read_grammar_file((out / "models/pcfg.grammar").string())))});
  auto table = build_predictors(log, models, read_norms(read_csv_file(kData + "/fixture_norms.csv")));
  LogisticOptions lo;
  lo.listener_intercepts = lo.speaker_intercepts = true;
  auto m = fit_logistic(table.x, table.columns, table.y, table.listener, table.speaker, lo);
  auto p = m.predict(table.x, table.listener, table.speaker);
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < table.y.size(); ++i) labels.push_back(static_cast<int>(table.y[i]));
  double expected = roc_auc({p.data(), p.data() + p.size()}, labels);

  auto auc = read_csv_file((out / "analysis/auc.csv").string());
  REQUIRE(auc.rows.size() == 5);
  const auto& last = auc.rows.back();
  CHECK(last[auc.column("model")] == "+pcfg");
  CHECK(std::stoul(last[auc.column("terms")]) == table.columns.size());
  CHECK(std::stod(last[auc.column("auc")]) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(read_file((out / "report.md").string()).find(last[auc.column("auc")]) != std::string::npos);

  // same seed, same bytes
  auto s2 = run("simulate");
  auto a2 = run("analyze");
  CHECK(digests(s1.out) == digests(s2.out));
  CHECK(digests(a1.out) == digests(a2.out));
  CHECK(digests(a1.out).size() == 7);
}

TEST_CASE("analyze names a missing norm column") {
  auto out = copy_trained("norms");
  REQUIRE(cli_in(out, {"--set", "stimuli=2", "select-stimuli"}).code == 0);
  REQUIRE(cli_in(out, {"--set", "stimuli=2", "--generations", "2", "simulate"}).code == 0);
  auto bad = out / "norms.csv";
  std::ofstream(bad) << "word,aoa,concreteness,n_phonemes,n_syllables\nthe,3,1,2,1\n";
  auto r = cli_in(out, {"--set", "norms=" + bad.string(), "analyze"});
  CHECK(r.code == 2);
  CHECK(r.err.find("pld20") != std::string::npos);
}
