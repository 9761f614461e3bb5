#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "telephone/corpus.hpp"

namespace telephone {

/// Any model assigning log2 probabilities to word sequences. Sentence scores
/// never include an end-of-sentence event.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const Vocabulary& vocabulary() const = 0;

  virtual double sentence_logprob(std::span<const std::string> words) const = 0;

  /// Per-word conditional log2 probabilities; sums to sentence_logprob for
  /// models with incremental structure.
  virtual std::vector<double> word_logprobs(std::span<const std::string> words) const = 0;

  /// Token ids are interpreted in vocabulary().
  virtual double utterance_logprob(const Utterance& u) const;
};

/// Bits per word: -log2 P(u) / |u|.
double avg_per_word_surprisal(const LanguageModel& model, std::span<const std::string> words);

/// Externally computed scores keyed by the space-joined word string. Lookups
/// of unlisted sentences throw.
class TabulatedModel final : public LanguageModel {
 public:
  TabulatedModel(std::unordered_map<std::string, double> sentence_bits,
                 std::unordered_map<std::string, std::vector<double>> word_bits = {});

  const Vocabulary& vocabulary() const override { return vocab_; }
  double sentence_logprob(std::span<const std::string> words) const override;
  std::vector<double> word_logprobs(std::span<const std::string> words) const override;

 private:
  Vocabulary vocab_;
  std::unordered_map<std::string, double> sentence_logprob_;
  std::unordered_map<std::string, std::vector<double>> word_logprobs_;
};

}  // namespace telephone
