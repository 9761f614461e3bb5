#include "telephone/language_model.hpp"

#include <stdexcept>

namespace telephone {

double LanguageModel::utterance_logprob(const Utterance& u) const {
  auto words = vocabulary().decode(u.tokens);
  return sentence_logprob(words);
}

double avg_per_word_surprisal(const LanguageModel& model, std::span<const std::string> words) {
  if (words.empty()) throw std::invalid_argument("avg_per_word_surprisal: empty utterance");
  return -model.sentence_logprob(words) / static_cast<double>(words.size());
}

TabulatedModel::TabulatedModel(std::unordered_map<std::string, double> sentence_bits,
                               std::unordered_map<std::string, std::vector<double>> word_bits)
    : sentence_logprob_(std::move(sentence_bits)), word_logprobs_(std::move(word_bits)) {
  std::vector<std::string> words;
  for (const auto& [text, _] : sentence_logprob_) {
    for (auto& w : tokenize(text)) words.push_back(std::move(w));
  }
  vocab_ = Vocabulary::from_words(words);
}

double TabulatedModel::sentence_logprob(std::span<const std::string> words) const {
  auto key = join_words({words.begin(), words.end()});
  auto it = sentence_logprob_.find(key);
  if (it == sentence_logprob_.end()) throw std::out_of_range("no tabulated score for: " + key);
  return it->second;
}

std::vector<double> TabulatedModel::word_logprobs(std::span<const std::string> words) const {
  auto key = join_words({words.begin(), words.end()});
  auto it = word_logprobs_.find(key);
  if (it == word_logprobs_.end()) throw std::out_of_range("no tabulated word scores for: " + key);
  return it->second;
}

}  // namespace telephone
