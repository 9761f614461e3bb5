#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "telephone/corpus.hpp"
#include "telephone/language_model.hpp"

namespace telephone {

inline constexpr int kDefaultTopK = 50;

/// A rule in its original (unbinarized) form. A one-symbol rhs that is not a
/// nonterminal is a lexical rule.
struct PcfgRule {
  std::string lhs;
  std::vector<std::string> rhs;
  double logprob = 0.0;  // log2
};

class Pcfg {
 public:
  struct Binary {
    int lhs, left, right;
    double p;
  };
  struct Unary {
    int lhs, child;
    double p;
  };
  struct Lexical {
    int lhs;
    double p;
  };

  /// Checks per-lhs normalization (1e-9) and that the unary and left-corner
  /// closures exist. unknown: preterminal -> log2 score for out-of-vocabulary words.
  static Pcfg from_rules(const std::string& root, std::vector<PcfgRule> rules,
                         const std::vector<std::pair<std::string, double>>& unknown = {});

  const std::string& root() const { return names_[static_cast<std::size_t>(root_)]; }
  int root_id() const { return root_; }
  /// Original rules, sorted by (lhs, rhs).
  const std::vector<PcfgRule>& rules() const { return rules_; }
  const std::vector<std::pair<std::string, double>>& unknown_scores() const { return unknown_; }
  const Vocabulary& terminals() const { return *terminals_; }
  std::shared_ptr<const Vocabulary> terminals_ptr() const { return terminals_; }

  std::optional<double> rule_logprob(const std::string& lhs, const std::vector<std::string>& rhs) const;
  bool is_nonterminal(const std::string& symbol) const { return index_.count(symbol) > 0; }

  // Binarized internal form. Symbols include synthetic right-binarization
  // labels, each with a single rule of probability 1.
  std::size_t symbol_count() const { return names_.size(); }
  const std::string& symbol(int id) const { return names_[static_cast<std::size_t>(id)]; }
  bool synthetic(int id) const { return synthetic_[static_cast<std::size_t>(id)]; }
  const std::vector<Binary>& binary() const { return binary_; }
  const std::vector<Unary>& unary() const { return unary_; }
  /// Lexical entries for a terminal id; the unknown id gives the unknown scores.
  const std::vector<Lexical>& lexical(WordId w) const { return lexical_.at(static_cast<std::size_t>(w)); }

  /// Sparse rows of (I - P_U)^-1 and (I - P_L)^-1, where P_L adds binary
  /// left children to the unary relation.
  const std::vector<std::vector<std::pair<int, double>>>& unary_closure() const { return ru_; }
  const std::vector<std::vector<std::pair<int, double>>>& left_corner_closure() const { return rl_; }

  Utterance encode(const std::vector<std::string>& words) const { return terminals_->encode(words); }

 private:
  int intern(const std::string& name, bool synthetic);
  int binarize_suffix(const std::vector<int>& symbols, std::size_t from);

  std::vector<std::string> names_;
  std::vector<bool> synthetic_;
  std::unordered_map<std::string, int> index_;
  int root_ = 0;
  std::vector<PcfgRule> rules_;
  std::vector<std::pair<std::string, double>> unknown_;
  std::shared_ptr<const Vocabulary> terminals_;
  std::vector<Binary> binary_;
  std::vector<Unary> unary_;
  std::vector<std::vector<Lexical>> lexical_;
  std::unordered_map<std::string, double> rule_index_;
  std::vector<std::vector<std::pair<int, double>>> ru_, rl_;
};

/// Relative-frequency estimate from gold trees. Trees with different root
/// labels are joined under a synthetic "@TOP". Unknown words score
/// n1(A)/c(A) under preterminal A (n1: words seen once under A).
Pcfg fit_pcfg(const Treebank& tb);

/// log2 of the marginal over all parses; nullopt when no parse exists.
std::optional<double> inside_logprob(const Pcfg& g, const Utterance& u);

/// log2 of the summed probability of the k best parses.
std::optional<double> top_k_logprob(const Pcfg& g, const Utterance& u, int k = kDefaultTopK);

struct ScoredParse {
  Tree tree;  // debinarized, original labels
  double logprob;
};
/// Best parses in descending probability.
std::vector<ScoredParse> k_best_parses(const Pcfg& g, const Utterance& u, int k = kDefaultTopK);

/// Sum of rule log-probabilities; nullopt if a rule is not in the grammar.
std::optional<double> tree_logprob(const Pcfg& g, const Tree& tree);

/// Incremental prefix probabilities, one word at a time.
class PrefixParser {
 public:
  explicit PrefixParser(const Pcfg& g);

  /// Returns log2 P(word | prefix); -inf once the prefix cannot be continued.
  double push(WordId word);

  std::size_t size() const { return words_.size(); }
  /// log2 of the total probability of sentences starting with the prefix.
  double prefix_logprob() const { return prefix_.back(); }
  /// log2 probability that the sentence ends here: inside / prefix.
  double end_logprob() const;
  /// log2 inside probability of the prefix as a complete sentence.
  double inside_logprob() const;

 private:
  const Pcfg& g_;
  std::vector<std::vector<int>> by_left_;  // binary rules by left child
  std::vector<WordId> words_;
  std::vector<std::vector<double>> mass_;  // per column: left-corner predicted mass
  std::vector<double> seed_;               // waiting mass for the next column
  std::vector<std::vector<std::vector<double>>> beta_;  // [j][i][symbol], span (i, j]
  std::vector<double> prefix_{0.0};
};

struct PrefixSurprisal {
  std::vector<double> bits;  // per word; +inf from the first dead word on
  double end_bits = 0.0;     // -log2 P(end | whole prefix); +inf when no parse
  std::optional<std::size_t> dead_at;
};

PrefixSurprisal prefix_surprisals(const Pcfg& g, const Utterance& u);

/// `lhs<TAB>rhs...<TAB>log2prob` rows, led by `@root<TAB>S<TAB>0` and followed
/// by `@unk<TAB>A<TAB>score` rows.
void write_grammar(const Pcfg& g, std::ostream& out);
Pcfg read_grammar(std::istream& in);
Pcfg read_grammar_file(const std::string& path);

/// Sentence scores from the top-k parse sum (inside when k <= 0); word scores
/// from prefix probabilities. Unparseable input scores -inf.
class PcfgModel final : public LanguageModel {
 public:
  PcfgModel(std::shared_ptr<const Pcfg> g, int k = kDefaultTopK) : g_(std::move(g)), k_(k) {}

  const Vocabulary& vocabulary() const override { return g_->terminals(); }
  double sentence_logprob(std::span<const std::string> words) const override;
  std::vector<double> word_logprobs(std::span<const std::string> words) const override;
  double utterance_logprob(const Utterance& u) const override;
  const Pcfg& grammar() const { return *g_; }

 private:
  std::shared_ptr<const Pcfg> g_;
  int k_;
};

}  // namespace telephone
