#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "telephone/corpus.hpp"
#include "telephone/language_model.hpp"

namespace telephone {

enum class Smoothing { mle_oov, good_turing, modified_kneser_ney };

std::string to_string(Smoothing s);
Smoothing parse_smoothing(std::string_view name);

/// Context padding symbol. Never predicted.
inline constexpr WordId kStartId = -1;
inline constexpr std::string_view kStartWord = "<s>";
inline constexpr int kMaxOrder = 8;
/// log2 of the conventional ARPA floor (10^-99); used for zero-mass events.
inline constexpr double kFloorLog2 = -99.0 * 3.32192809488736234787;

struct NGramKey {
  std::array<WordId, kMaxOrder> ids{};
  std::uint8_t len = 0;

  NGramKey() = default;
  explicit NGramKey(std::span<const WordId> s);
  std::span<const WordId> view() const { return {ids.data(), len}; }
  NGramKey prefix() const;  // drops the last id
  NGramKey suffix() const;  // drops the first id
  bool operator==(const NGramKey& o) const;
  bool operator<(const NGramKey& o) const;
};

struct NGramKeyHash {
  std::size_t operator()(const NGramKey& k) const noexcept;
};

struct NGramOptions {
  int order = 3;
  Smoothing smoothing = Smoothing::modified_kneser_ney;
  /// Unigram mass reserved for unseen types (mle_oov only).
  double oov_mass = 0.01;
};

class NGramModel final : public LanguageModel {
 public:
  struct Entry {
    double logprob = kFloorLog2;  // log2; NaN for context-only rows (start padding)
    double backoff = 0.0;         // log2
    bool is_context = false;
  };
  using Table = std::unordered_map<NGramKey, Entry, NGramKeyHash>;

  NGramModel(std::shared_ptr<const Vocabulary> vocab, int order);

  int order() const { return order_; }
  std::optional<Smoothing> smoothing() const { return smoothing_; }
  double oov_mass() const { return oov_mass_; }
  const Vocabulary& vocabulary() const override { return *vocab_; }
  std::shared_ptr<const Vocabulary> vocabulary_ptr() const { return vocab_; }

  /// Longest stored suffix of the last order-1 context ids, with backoff.
  double cond_logprob(std::span<const WordId> context, WordId word) const;

  /// Sum of cond_logprob over the words, context padded with start symbols.
  double utterance_logprob(const Utterance& u) const override;
  double sentence_logprob(std::span<const std::string> words) const override;
  std::vector<double> word_logprobs(std::span<const std::string> words) const override;
  std::vector<double> token_logprobs(std::span<const WordId> tokens) const;

  /// n-grams of length k (1-based).
  const Table& table(int k) const { return tables_.at(static_cast<std::size_t>(k - 1)); }

  /// Every context (length 0..order-1) with a stored distribution.
  std::vector<NGramKey> contexts() const;

  friend NGramModel fit_ngram(const std::vector<std::vector<std::string>>& corpus,
                              std::shared_ptr<const Vocabulary> vocab, const NGramOptions& opts);
  friend NGramModel read_arpa(std::istream& in);

 private:
  Table& mutable_table(int k) { return tables_.at(static_cast<std::size_t>(k - 1)); }

  std::shared_ptr<const Vocabulary> vocab_;
  int order_;
  std::optional<Smoothing> smoothing_;
  double oov_mass_ = 0.0;
  std::vector<Table> tables_;
};

/// Trains a backoff model. Sentences are padded with order-1 start symbols;
/// no end-of-sentence event is modeled.
NGramModel fit_ngram(const std::vector<std::vector<std::string>>& corpus,
                     std::shared_ptr<const Vocabulary> vocab, const NGramOptions& opts);

// Count-based estimators, exposed for inspection.

struct KneserNeyDiscounts {
  double d1 = 0.75;
  double d2 = 0.75;
  double d3plus = 0.75;
  double operator()(std::uint64_t count) const;
};

/// Chen-Goodman discounts from counts-of-counts n1..n4. A discount whose
/// formula is undefined or outside (0, i) becomes 0.75.
KneserNeyDiscounts kneser_ney_discounts(std::uint64_t n1, std::uint64_t n2, std::uint64_t n3,
                                        std::uint64_t n4);

struct SimpleGoodTuring {
  std::map<std::uint64_t, double> r_star;  // smoothed counts, 0 < r* < r
  double p0 = 0.0;                          // N1 / N
  double n_prime = 0.0;                     // sum_r N_r r*
  double intercept = 0.0, slope = 0.0;      // log Z_r = a + b log r
  bool regression_ok = false;

  /// (1 - p0) r* / N'
  double prob(std::uint64_t r) const;
};

/// Gale & Sampson simple Good-Turing over counts-of-counts (r -> N_r).
SimpleGoodTuring simple_good_turing(const std::map<std::uint64_t, std::uint64_t>& count_of_counts);

/// ARPA text: log10 values, `logprob<TAB>w1 .. wk<TAB>backoff` rows.
void write_arpa(const NGramModel& model, std::ostream& out);
NGramModel read_arpa(std::istream& in);
NGramModel read_arpa_file(const std::string& path);

}  // namespace telephone
