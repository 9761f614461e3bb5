// Serial reference vs OpenMP run_chains on the fixture corpus, trigram prior.
// Set OMP_NUM_THREADS to vary the pool.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <fstream>
#include <stdexcept>

#include "telephone/chain_engine.hpp"
#include "telephone/ngram_lm.hpp"

using namespace telephone;

namespace {

struct Setup {
  std::vector<Utterance> stimuli;
  std::vector<ListenerAgent> agents;

  Setup() {
    std::ifstream in(std::string(TELEPHONE_DATA_DIR) + "/fixture_corpus.txt");
    if (!in) throw std::runtime_error("fixture corpus not found");
    std::vector<std::vector<std::string>> corpus;
    for (std::string line; std::getline(in, line);) corpus.push_back(tokenize(line));
    auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(corpus, 100000));
    auto prior =
        std::make_shared<const NGramModel>(fit_ngram(corpus, vocab, {3, Smoothing::modified_kneser_ney, 0.01}));
    auto noise = std::make_shared<const NoiseModel>(vocab, NoiseParams{8.0, 0.03, 0.01, 10});
    agents.assign(20, ListenerAgent{prior, noise, DecisionRule::map, {4, 256}, {}});
    for (const auto& s : corpus) {
      if (s.size() == 5) stimuli.push_back(vocab->encode(join_words(s)));
      if (stimuli.size() == 64) break;
    }
  }
};

const Setup& setup() {
  static Setup s;
  return s;
}

ChainConfig config() {
  ChainConfig cfg;
  cfg.generations = 10;
  cfg.seed = 3;
  return cfg;
}

std::vector<Utterance> first(std::int64_t n) {
  const auto& all = setup().stimuli;
  return {all.begin(), all.begin() + n};
}

void BM_run_chains_serial(benchmark::State& state) {
  auto stimuli = first(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_chains_serial(config(), stimuli, setup().agents));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_run_chains_openmp(benchmark::State& state) {
  auto stimuli = first(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_chains(config(), stimuli, setup().agents));
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.counters["threads"] = omp_get_max_threads();
}

BENCHMARK(BM_run_chains_serial)->Arg(8)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_run_chains_openmp)->Arg(8)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
