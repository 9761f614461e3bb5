#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "telephone/chain_engine.hpp"
#include "telephone/ngram_lm.hpp"
#include "telephone/random.hpp"

using namespace telephone;

namespace {

std::string rep(char c, std::size_t n) { return std::string(n, c); }

std::string words(std::size_t n, const std::string& w) {
  std::vector<std::string> v(n, w);
  return join_words(v);
}

// restricted Damerau distance by plain recursion over suffixes
std::size_t osa_oracle(const std::string& a, const std::string& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> d = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == 0) return j;
    if (j == 0) return i;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = std::min({d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1]) best = std::min(best, d(i - 2, j - 2) + 1);
    return memo[key] = best;
  };
  return d(a.size(), b.size());
}

struct Fixture {
  std::vector<std::vector<std::string>> corpus = {{"the", "cat", "sat"}, {"the", "hat", "sat"}, {"a", "cat", "ran"},
                                                  {"the", "cat", "ran"}, {"a", "bat", "sat"}};
  std::shared_ptr<const Vocabulary> vocab = std::make_shared<const Vocabulary>(build_vocabulary(corpus, 1000));
  std::shared_ptr<const LanguageModel> prior =
      std::make_shared<const NGramModel>(fit_ngram(corpus, vocab, {2, Smoothing::modified_kneser_ney, 0.01}));

  ListenerAgent agent(NoiseParams p, DecisionRule mode = DecisionRule::map) const {
    return {prior, std::make_shared<const NoiseModel>(vocab, p), mode, {4, 64}, {}};
  }
};

}  // namespace

TEST_CASE("normalized Levenshtein-Damerau") {
  CHECK(norm_lev_damerau("kitten", "sitting") == doctest::Approx(3.0 / 7.0).epsilon(1e-15));
  CHECK(norm_lev_damerau("ab", "ba") == 0.5);
  CHECK(norm_lev_damerau("same", "same") == 0.0);
  CHECK(norm_lev_damerau("", "") == 0.0);
  CHECK(norm_lev_damerau("", "abc") == 1.0);
  // optimal string alignment: "ca" -> "abc" cannot transpose and then insert between
  CHECK(norm_lev_damerau("ca", "abc") == 1.0);
  // code points, not bytes
  CHECK(norm_lev_damerau("caf\xc3\xa9", "cafe") == 0.25);

  std::mt19937_64 rng(11);
  for (int t = 0; t < 2000; ++t) {
    std::string a, b;
    for (std::size_t k = rng() % 7; k > 0; --k) a += static_cast<char>('a' + rng() % 3);
    for (std::size_t k = rng() % 7; k > 0; --k) b += static_cast<char>('a' + rng() % 3);
    std::size_t m = std::max(a.size(), b.size());
    double expect = m == 0 ? 0.0 : static_cast<double>(osa_oracle(a, b)) / static_cast<double>(m);
    CHECK(norm_lev_damerau(a, b) == expect);
  }
}

TEST_CASE("character length filter boundary") {
  FilterConfig cfg;
  const std::string prev = rep('a', 50);
  CHECK(nonspace_chars(prev) == 50);
  CHECK(apply_filters(cfg, prev, rep('a', 60)).accepted);
  auto v = apply_filters(cfg, prev, rep('a', 61));
  CHECK_FALSE(v.accepted);
  CHECK(v.reason == "length");
  CHECK(apply_filters(cfg, prev, rep('a', 40)).accepted);
  CHECK(apply_filters(cfg, prev, rep('a', 39)).reason == "length");
  // spaces do not count
  CHECK(nonspace_chars(" a b\tc ") == 3);
}

TEST_CASE("word count filter boundary") {
  FilterConfig cfg;
  const std::string prev = words(10, "abcdef");  // 60 nonspace chars
  CHECK(apply_filters(cfg, prev, words(12, "abcde")).accepted);
  CHECK(apply_filters(cfg, prev, words(8, "abcdefg")).accepted);
  // 13 words, still 60 chars
  auto v = apply_filters(cfg, prev, words(8, "abcde") + " " + words(5, "abcd"));
  CHECK_FALSE(v.accepted);
  CHECK(v.reason == "word_count");
  cfg.max_words = 11;
  CHECK(apply_filters(cfg, prev, words(12, "abcde")).reason == "max_words");
}

TEST_CASE("similarity threshold boundary") {
  FilterConfig cfg;
  // 29 substitutions over 50 characters is exactly .58
  CHECK(norm_lev_damerau(rep('a', 50), rep('b', 29) + rep('a', 21)) == 0.58);
  CHECK(apply_filters(cfg, rep('a', 50), rep('b', 29) + rep('a', 21)).accepted);
  CHECK(apply_filters(cfg, rep('a', 50), rep('b', 30) + rep('a', 20)).reason == "similarity");
  // .5800 vs .5801 needs 10000 characters
  const std::string a = rep('a', 10000);
  CHECK(apply_filters(cfg, a, rep('b', 5800) + rep('a', 4200)).accepted);
  auto v = apply_filters(cfg, a, rep('b', 5801) + rep('a', 4199));
  CHECK_FALSE(v.accepted);
  CHECK(v.reason == "similarity");
  CHECK(apply_filters(cfg, "the cat sat", "the cat sat").accepted);
}

TEST_CASE("blank responses and invalid filters") {
  FilterConfig cfg;
  CHECK(apply_filters(cfg, "the cat", "   ").reason == "blank");
  CHECK_THROWS_AS(apply_filters(cfg, " ", "the cat"), std::invalid_argument);
  cfg.similarity_threshold = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(TransmissionGraph({"x"}, cfg), std::invalid_argument);
  CHECK_THROWS_AS(TransmissionGraph({"  "}), std::invalid_argument);
}

TEST_CASE("fresh graph offers the protected node") {
  TransmissionGraph g({"the cat sat on the mat"});
  auto lease = g.next_input(0, 7, 0);
  const auto& n = g.node(lease.node);
  CHECK(n.state == NodeState::protected_stimulus);
  CHECK(n.generation == 0);
  CHECK(n.transcription == "the cat sat on the mat");
}

TEST_CASE("submission paths") {
  TransmissionGraph g({"the cat sat on the mat"});
  auto l1 = g.next_input(0, 1, 0);
  auto id1 = g.submit_recording(l1, "the cat sat on a mat", 0);
  REQUIRE(id1);
  CHECK(g.node(*id1).state == NodeState::accepted);
  CHECK(g.node(*id1).generation == 1);
  CHECK(g.node(*id1).listener == 1);
  CHECK(g.node(*id1).speaker == -1);
  CHECK_FALSE(g.active_lease(0));

  auto l2 = g.next_input(0, 2, 1);
  CHECK(l2.node == *id1);
  auto id2 = g.submit_recording(l2, "the cat", 1);
  CHECK(g.node(*id2).state == NodeState::auto_flagged);
  CHECK(g.node(*id2).flag_reason == "length");
  CHECK(g.current(0).id == *id1);

  auto l3 = g.next_input(0, 3, 2);
  auto id3 = g.submit_recording(l3, "the cat sat on the mat", 2, std::nullopt, std::string("speech_errors"));
  CHECK(g.node(*id3).state == NodeState::self_flagged);
  CHECK(g.current(0).id == *id1);

  auto l4 = g.next_input(0, 4, 3);
  auto id4 = g.submit_recording(l4, "the cat sat on the hat", 3);
  CHECK(g.node(*id4).speaker == 1);
  CHECK(g.node(*id4).generation == 2);
}

// p1 records s1, p2 records s2, p3 flags s2 and so p4 hears s1.
TEST_CASE("downstream flag returns the previous accepted recording") {
  TransmissionGraph g({"i bought a pear at the market"});
  auto s1 = *g.submit_recording(g.next_input(0, 1, 0), "i bought a pear at the market", 0);
  auto s2 = *g.submit_recording(g.next_input(0, 2, 1), "i bought a bear at the market", 1);
  CHECK(g.node(s2).generation == 2);

  auto l3 = g.next_input(0, 3, 2);
  CHECK(l3.node == s2);
  CHECK_FALSE(g.submit_recording(l3, "", 2, std::string("cut_off")));
  CHECK(g.node(s2).state == NodeState::downstream_flagged);
  CHECK(g.node(s2).flag_reason == "cut_off");

  auto l4 = g.next_input(0, 4, 3);
  CHECK(l4.node == s1);
  CHECK(g.node(l4.node).generation == 1);
  auto s4 = *g.submit_recording(l4, "i bought a pear at a market", 3);
  CHECK(g.node(s4).generation == 2);

  // flag cascade back to the stimulus, which cannot itself be flagged
  g.submit_recording(g.next_input(0, 5, 4), "", 4, std::string("other"));
  g.submit_recording(g.next_input(0, 6, 5), "", 5, std::string("other"));
  CHECK(g.current(0).state == NodeState::protected_stimulus);
  g.submit_recording(g.next_input(0, 7, 6), "", 6, std::string("other"));
  CHECK(g.current(0).state == NodeState::protected_stimulus);

  auto ch = g.chain(0);
  REQUIRE(ch.size() == 1);
  CHECK(g.node(ch[0]).state == NodeState::protected_stimulus);
}

TEST_CASE("lease exclusivity") {
  TransmissionGraph g({"the cat sat"}, {}, 3);
  auto a = g.next_input(0, 1, 0);
  CHECK_THROWS_AS(g.next_input(0, 2, 1), BusyError);
  CHECK_THROWS_AS(g.next_input(0, 2, 2), BusyError);
  CHECK(g.next_input(0, 1, 2).token == a.token);
  // expired: silently reassigned
  auto b = g.next_input(0, 2, 3);
  CHECK(b.agent == 2);
  CHECK_THROWS_AS(g.submit_recording(a, "the cat sat", 3), LeaseError);
  CHECK_THROWS_AS(g.submit_recording(b, "the cat sat", 6), LeaseError);
  auto c = g.next_input(0, 3, 6);
  CHECK(g.submit_recording(c, "the cat sat", 6));
  CHECK_THROWS_AS(g.submit_recording(c, "the cat sat", 6), LeaseError);
}

TEST_CASE("noiseless chain copies the stimulus") {
  Fixture f;
  ChainConfig cfg;
  cfg.generations = 3;
  cfg.flags = {0.0, 0.0};
  std::vector<ListenerAgent> agents = {f.agent({std::numeric_limits<double>::infinity(), 0.0, 0.0, 0})};
  auto log = run_chains(cfg, {f.vocab->encode("the cat sat")}, agents);
  auto chains = log.accepted_chains();
  REQUIRE(chains.size() == 1);
  CHECK(chains[0] == std::vector<std::string>(4, "the cat sat"));
  CHECK(log.rows.size() == 4);
  CHECK(log.gap_free());
}

TEST_CASE("flag rate one leaves only the protected node") {
  Fixture f;
  ChainConfig cfg;
  cfg.generations = 4;
  std::vector<ListenerAgent> agents = {f.agent({5.0, 0.05, 0.0, 0})};
  for (auto flags : {FlagRates{1.0, 0.0}, FlagRates{0.0, 1.0}}) {
    cfg.flags = flags;
    auto log = run_chains(cfg, {f.vocab->encode("the cat sat"), f.vocab->encode("a bat ran")}, agents);
    for (const auto& ch : log.accepted_chains()) CHECK(ch.size() == 1);
    for (const auto& r : log.rows) CHECK(r.state != NodeState::accepted);
  }
}

TEST_CASE("bad run configuration") {
  Fixture f;
  ChainConfig cfg;
  std::vector<Utterance> stim = {f.vocab->encode("the cat sat")};
  CHECK_THROWS_AS(run_chains(cfg, stim, {}), std::invalid_argument);
  CHECK_THROWS_AS(run_chains(cfg, {}, {f.agent({})}), std::invalid_argument);
  cfg.generations = 0;
  CHECK_THROWS_AS(run_chains(cfg, stim, {f.agent({})}), std::invalid_argument);
  cfg.generations = 2;
  cfg.flags.upstream = 1.2;
  CHECK_THROWS_AS(run_chains(cfg, stim, {f.agent({})}), std::invalid_argument);
}

TEST_CASE("batch run audit, determinism and serialization") {
  Fixture f;
  ChainConfig cfg;
  cfg.generations = 25;
  cfg.seed = 2024;
  std::vector<ListenerAgent> agents = {f.agent({6.0, 0.03, 0.01, 5}), f.agent({6.0, 0.03, 0.01, 5}, DecisionRule::posterior_sample)};
  std::vector<Utterance> stimuli;
  for (std::size_t i = 0; i < 40; ++i) stimuli.push_back(f.vocab->encode(join_words(f.corpus[i % f.corpus.size()])));

  auto log = run_chains(cfg, stimuli, agents);
  CHECK(log == run_chains_serial(cfg, stimuli, agents));
  CHECK(log == run_chains(cfg, stimuli, agents));
  CHECK(log.gap_free());

  // audit: one protected row per chain, accepted transitions pass the
  // filters, trial budget respected, each row's generation fits its chain
  std::map<std::size_t, std::vector<const ChainLogRow*>> by_chain;
  for (const auto& r : log.rows) by_chain[r.chain_id].push_back(&r);
  CHECK(by_chain.size() == 40);
  auto chains = log.accepted_chains();
  std::size_t flagged = 0;
  for (auto& [id, rows] : by_chain) {
    int protected_rows = 0, accepted = 0;
    for (auto* r : rows) {
      protected_rows += r->state == NodeState::protected_stimulus;
      accepted += r->state == NodeState::accepted;
      flagged += is_flagged(r->state);
      if (r->state == NodeState::protected_stimulus) CHECK(r->generation == 0);
      else CHECK(r->generation >= 1);
    }
    CHECK(protected_rows == 1);
    CHECK(accepted <= 25);
    CHECK(rows.size() <= 1 + 75);
    const auto& ch = chains[id];
    CHECK(ch.size() == static_cast<std::size_t>(accepted) + 1);
    for (std::size_t k = 1; k < ch.size(); ++k) CHECK(apply_filters(cfg.filters, ch[k - 1], ch[k]).accepted);
  }
  CHECK(flagged > 0);

  std::stringstream ss;
  log.write_csv(ss);
  CHECK(ChainLog::read_csv(ss) == log);
  CHECK(ChainLog::from_json(nlohmann::json::parse(log.to_json().dump())) == log);

  cfg.seed = 2025;
  CHECK_FALSE(run_chains(cfg, stimuli, agents) == log);
}

TEST_CASE("csv log quotes awkward transcriptions") {
  ChainLog log;
  log.rows.push_back({0, 0, -1, -1, "he said \"hi\", then\nleft", NodeState::protected_stimulus, "", 0});
  log.rows.push_back({0, 1, 3, -1, "x", NodeState::auto_flagged, "length", 18446744073709551615ULL});
  std::stringstream ss(log.csv());
  CHECK(ChainLog::read_csv(ss) == log);
}

using oracle::GibbsSpace;

TEST_CASE("posterior-sampling listeners leave the prior invariant") {
  GibbsSpace s;
  REQUIRE(s.vocab->size() == 6);  // five words and <unk>
  // longest observation: two words plus one insertion in each of three gaps
  auto t = transition_matrix(s.agent, 5);
  REQUIRE(t.states.size() == 30);
  auto pi = s.pi(t);
  for (const auto& row : t.p) {
    double sum = 0.0;
    for (double x : row) sum += x;
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
  double tv = 0.0;
  for (std::size_t j = 0; j < pi.size(); ++j) {
    double pt = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) pt += pi[i] * t.p[i][j];
    tv += std::abs(pt - pi[j]);
  }
  CHECK(0.5 * tv <= 1e-9);

  // MAP listeners are not Gibbs samplers
  ListenerAgent map = s.agent;
  map.mode = DecisionRule::map;
  auto tm = transition_matrix(map, 5);
  double tv_map = 0.0;
  for (std::size_t j = 0; j < pi.size(); ++j) {
    double pt = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) pt += pi[i] * tm.p[i][j];
    tv_map += std::abs(pt - pi[j]);
  }
  CHECK(0.5 * tv_map > 1e-3);
}
