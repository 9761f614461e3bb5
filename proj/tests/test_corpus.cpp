#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "telephone/corpus.hpp"

using namespace telephone;

TEST_CASE("tokenize lowercases, strips edge punctuation, collapses whitespace") {
  CHECK(tokenize("they found that they had many of the same interests").size() == 10);
  CHECK(tokenize("").empty());
  CHECK(tokenize("A  b.") == std::vector<std::string>{"a", "b"});
  CHECK(tokenize("\"Hello,\" she said -- don't!") ==
        std::vector<std::string>{"hello", "she", "said", "don't"});
  CHECK(tokenize("   \t\n").empty());
}

TEST_CASE("tokenize is idempotent on its joined output") {
  std::mt19937 rng(7);
  const std::string alphabet = "abcXYZ .,;!?'-\t";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    int len = static_cast<int>(rng() % 40);
    for (int i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
    auto once = tokenize(s);
    CHECK(tokenize(join_words(once)) == once);
  }
}

TEST_CASE("build_vocabulary keeps all types under the cap") {
  auto v = build_vocabulary({{"a", "a", "b"}}, 2);
  CHECK(v.size() == 3);
  CHECK(v.word(0) == "a");
  CHECK(v.word(1) == "b");
  CHECK(v.word(v.unk_id()) == "<unk>");
  CHECK(v.count(v.unk_id()) == 0);
}

TEST_CASE("build_vocabulary truncates by frequency") {
  auto v = build_vocabulary({{"a", "a", "b", "c"}}, 1);
  CHECK(v.size() == 2);
  CHECK(v.id("a") == 0);
  CHECK(v.id("b") == v.unk_id());
  CHECK(v.id("c") == v.unk_id());
  CHECK(v.count(v.unk_id()) == 2);
}

TEST_CASE("build_vocabulary breaks frequency ties lexicographically") {
  auto v = build_vocabulary({{"zeta", "beta", "alpha", "beta", "zeta"}}, 1);
  CHECK(v.word(0) == "beta");
  auto v2 = build_vocabulary({{"zeta", "beta", "alpha", "beta", "zeta"}}, 2);
  CHECK(v2.word(1) == "zeta");
  CHECK(v2.id("alpha") == v2.unk_id());
}

TEST_CASE("empty corpus yields only the unknown type") {
  auto v = build_vocabulary({}, 5);
  CHECK(v.size() == 1);
  CHECK(v.unk_id() == 0);
  CHECK_THROWS_AS(build_vocabulary({{"a"}}, 0), std::invalid_argument);
}

TEST_CASE("10k-type corpus with a 9999 cap") {
  std::vector<std::vector<std::string>> corpus;
  std::mt19937 rng(11);
  std::vector<std::string> utt;
  for (int t = 0; t < 10000; ++t) {
    int reps = 1 + static_cast<int>(rng() % 3);
    for (int r = 0; r < reps; ++r) utt.push_back("w" + std::to_string(t));
    if (utt.size() > 12) corpus.push_back(std::exchange(utt, {}));
  }
  if (!utt.empty()) corpus.push_back(utt);

  // independent count of distinct types
  std::set<std::string> types;
  std::size_t tokens = 0;
  for (const auto& u : corpus) {
    for (const auto& w : u) {
      types.insert(w);
      ++tokens;
    }
  }
  REQUIRE(types.size() == 10000);
  auto v = build_vocabulary(corpus, 9999);
  CHECK(v.size() == 10000);
  CHECK(v.size() == std::min<std::size_t>(types.size(), 9999) + 1);

  std::uint64_t sum = 0;
  for (auto c : v.counts()) sum += c;
  CHECK(sum == tokens);
}

TEST_CASE("vocabulary frequencies sum to the token count") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<std::string>> corpus(1 + rng() % 5);
    std::size_t tokens = 0;
    for (auto& u : corpus) {
      int len = static_cast<int>(rng() % 8);
      for (int i = 0; i < len; ++i) u.push_back(std::string(1, static_cast<char>('a' + rng() % 10)));
      tokens += u.size();
    }
    auto v = build_vocabulary(corpus, 1 + rng() % 12);
    std::uint64_t sum = 0;
    for (auto c : v.counts()) sum += c;
    CHECK(sum == tokens);
  }
}

TEST_CASE("encode maps unknown words to unk and never drops tokens") {
  auto v = build_vocabulary({{"the", "dog"}}, 10);
  auto u = v.encode("The cat, the DOG.");
  REQUIRE(u.size() == 4);
  CHECK(u.tokens[1] == v.unk_id());
  CHECK(u.text == "the cat the dog");
}

TEST_CASE("vocabulary dump round trip") {
  auto v = build_vocabulary({{"b", "a", "b", "c"}}, 2);
  std::stringstream ss;
  v.write(ss);
  CHECK(ss.str() == "b\t0\t2\na\t1\t1\n<unk>\t2\t1\n");
  auto r = Vocabulary::read(ss);
  CHECK(r.types() == v.types());
  CHECK(r.counts() == v.counts());
  CHECK(r.unk_id() == v.unk_id());
}

TEST_CASE("read_treebank reads a single tree") {
  auto tb = read_treebank("(S (NP (D the) (N dog)) (VP (V ran)))");
  REQUIRE(tb.sentences.size() == 1);
  CHECK(join_words(tree_yield(tb.sentences[0])) == "the dog ran");
  CHECK(tb.sentences[0].label == "S");
}

TEST_CASE("read_treebank unwraps an anonymous outer bracket") {
  auto tb = read_treebank("( (S (NP (N Dogs)) (VP (V bark))) )\n");
  REQUIRE(tb.sentences.size() == 1);
  CHECK(tb.sentences[0].label == "S");
  CHECK(tree_yield(tb.sentences[0]) == std::vector<std::string>{"dogs", "bark"});
}

TEST_CASE("read_treebank rejects malformed input with a line number") {
  try {
    read_treebank("(S (NP");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    std::string msg = e.what();
    CHECK(msg.find("line 1") != std::string::npos);
    CHECK(msg.find("unbalanced") != std::string::npos);
  }
  try {
    read_treebank("(S (NP (N a)))\n(S (NP ))");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("empty constituent") != std::string::npos);
  }
  CHECK_THROWS_AS(read_treebank("(S (A a)))"), ParseError);
}

TEST_CASE("treebank string round trip preserves structure") {
  std::mt19937 rng(5);
  std::function<Tree(int)> gen = [&](int depth) {
    Tree t;
    t.label = std::string(1, static_cast<char>('A' + rng() % 5));
    if (depth == 0 || rng() % 3 == 0) {
      Tree leaf;
      leaf.label = std::string(1, static_cast<char>('a' + rng() % 5));
      t.children.push_back(leaf);
      return t;
    }
    int kids = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < kids; ++i) t.children.push_back(gen(depth - 1));
    return t;
  };
  for (int trial = 0; trial < 100; ++trial) {
    Tree t = gen(4);
    auto tb = read_treebank(tree_to_string(t));
    REQUIRE(tb.sentences.size() == 1);
    CHECK(tb.sentences[0] == t);
  }
}
