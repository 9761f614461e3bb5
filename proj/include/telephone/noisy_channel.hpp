#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "telephone/corpus.hpp"
#include "telephone/language_model.hpp"

namespace telephone {

struct NoiseParams {
  double lambda = 8.0;  // kernel sharpness; +inf keeps every emitted word intact
  double p_delete = 0.03;
  double p_insert = 0.01;  // per gap, at most one inserted word
  int insert_top_n = 10;   // insertion words considered when reconstructing
};

/// Word-level corruption over a fixed vocabulary. A hypothesis of n words has
/// n + 1 gaps (before the first word and after each word). Each gap inserts
/// one word w with probability p_insert * q(w); each word is deleted with
/// probability p_delete, otherwise it is heard as o with probability
/// K(o|h) = exp(-lambda * ned(h, o)) / Z(h), ned being the character edit
/// distance over the longer length. <unk> is never produced by the channel.
class NoiseModel {
 public:
  /// insertion: distribution over vocabulary ids; empty means the unigram
  /// distribution of the vocabulary counts.
  NoiseModel(std::shared_ptr<const Vocabulary> vocab, NoiseParams params, std::vector<double> insertion = {});

  const NoiseParams& params() const { return params_; }
  const Vocabulary& vocabulary() const { return *vocab_; }
  std::shared_ptr<const Vocabulary> vocabulary_ptr() const { return vocab_; }

  /// K(observed | intended).
  double kernel(WordId observed, WordId intended) const;
  double insertion_prob(WordId w) const { return q_.at(static_cast<std::size_t>(w)); }
  /// The insert_top_n most probable insertion words.
  const std::vector<WordId>& insertion_candidates() const { return insert_top_; }
  /// Intended words ranked by K(observed | h), ties lexicographic. The
  /// observed word leads when it is in the vocabulary.
  std::vector<WordId> nearest(WordId observed, int beam) const;

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  NoiseParams params_;
  std::vector<double> q_;
  std::vector<WordId> insert_top_;
  std::vector<double> log_z_;  // natural log of Z(h)
};

/// Character edit distance normalized by the longer length.
double normalized_edit_distance(const std::string& a, const std::string& b);

struct Corrupted {
  Utterance utterance;
  bool degenerate = false;  // nothing survived
};

Corrupted corrupt(const NoiseModel& noise, const Utterance& u, std::uint64_t seed);

/// log2 p(observed | hypothesis), summed over all corruption paths.
double obs_likelihood(const NoiseModel& noise, const Utterance& observed, const Utterance& hypothesis);

struct CandidateOptions {
  int beam_width = 4;
  int max_candidates = 256;
};

/// Lazy best-first product over per-position options (beam words, or "this
/// word was inserted"), and per-gap options (nothing, or a restored deletion
/// from the insertion candidates). Always contains the observation. Sorted
/// lexicographically, deduplicated, nonempty hypotheses only.
std::vector<Utterance> candidate_hypotheses(const NoiseModel& noise, const Utterance& observed,
                                            const CandidateOptions& opts);

enum class DecisionRule { posterior_sample, map };

std::string to_string(DecisionRule r);
DecisionRule parse_decision_rule(const std::string& s);

struct ListenerAgent {
  std::shared_ptr<const LanguageModel> prior;
  std::shared_ptr<const NoiseModel> noise;
  DecisionRule mode = DecisionRule::map;
  CandidateOptions candidates;
  /// When set, the posterior ranges over exactly these hypotheses instead of
  /// generated candidates (exact small-space analysis).
  std::optional<std::vector<Utterance>> hypothesis_space;
};

struct Posterior {
  std::vector<Utterance> hypotheses;  // lexicographic order
  std::vector<double> log_likelihood;  // log2
  std::vector<double> log_prior;       // log2, unnormalized
  std::vector<double> prob;            // normalized posterior
};

struct NoSupportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Throws NoSupportError when every hypothesis has zero posterior.
Posterior posterior(const ListenerAgent& agent, const Utterance& observed);

/// Index chosen from unnormalized log2 scores: argmax (first on ties) or a
/// draw with the seed.
std::size_t choose(const std::vector<double>& log_scores, DecisionRule mode, std::uint64_t seed);

/// A posterior without support (a prior that rules out every candidate) is
/// retried with the whole vocabulary as beam and 16x the candidates; if that
/// fails too the listener repeats what it heard.
Utterance reconstruct(const ListenerAgent& agent, const Utterance& observed, std::uint64_t seed);

/// corrupt then reconstruct. A degenerate observation returns an empty
/// utterance unless the agent has a fixed hypothesis space.
Utterance step_chain(const ListenerAgent& agent, const Utterance& u, std::uint64_t seed);

/// Every word sequence of length lo..hi over the non-<unk> vocabulary.
std::vector<Utterance> enumerate_utterances(const Vocabulary& vocab, std::size_t lo, std::size_t hi);

struct TransitionMatrix {
  std::vector<Utterance> states;  // lexicographic order
  std::vector<std::vector<double>> p;  // p[h][h']
};

/// T(h'|h) = sum_d p(d|h) p(h'|d) over the agent's fixed hypothesis space,
/// observations d ranging over all sequences up to max_observed words. For MAP
/// listeners p(h'|d) is a point mass on the chosen hypothesis.
TransitionMatrix transition_matrix(const ListenerAgent& agent, std::size_t max_observed);

/// Orders utterances by their word strings.
bool lexicographic_less(const Vocabulary& vocab, const Utterance& a, const Utterance& b);

Utterance make_utterance(const Vocabulary& vocab, std::vector<WordId> tokens);

}  // namespace telephone
