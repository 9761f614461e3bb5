#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace telephone {

using WordId = std::int32_t;

inline constexpr std::string_view kUnknownWord = "<unk>";

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lowercases ASCII, splits on whitespace and strips punctuation from both
/// token edges. Inner punctuation ("don't") is kept.
std::vector<std::string> tokenize(std::string_view text);

std::string join_words(const std::vector<std::string>& words);

struct Utterance {
  std::vector<WordId> tokens;
  std::string text;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  bool operator==(const Utterance&) const = default;
};

class Vocabulary {
 public:
  /// Only the unknown type.
  Vocabulary();

  /// Builds from an explicit word list (order gives ids). The unknown type is
  /// appended when absent.
  static Vocabulary from_words(const std::vector<std::string>& words,
                               std::size_t max_types = SIZE_MAX);

  std::size_t size() const { return types_.size(); }
  WordId unk_id() const { return unk_id_; }
  std::size_t max_types() const { return max_types_; }

  WordId id(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& word(WordId id) const { return types_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& types() const { return types_; }

  /// Corpus frequency recorded at construction (unknown type aggregates the
  /// truncated types).
  std::uint64_t count(WordId id) const { return counts_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  Utterance encode(std::string_view text) const;
  Utterance encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<WordId>& ids) const;

  /// `word<TAB>id<TAB>count` rows.
  void write(std::ostream& out) const;
  static Vocabulary read(std::istream& in);

  friend Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                                     std::size_t max_types);

 private:
  void add(std::string word, std::uint64_t count);

  std::vector<std::string> types_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, WordId> index_;
  WordId unk_id_ = 0;
  std::size_t max_types_ = 0;
};

/// The max_types most frequent types (ties lexicographic) get ids 0..k-1 and
/// the unknown type is appended last.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t max_types);

/// One utterance per nonempty line, tokenized.
std::vector<std::vector<std::string>> read_corpus(std::istream& in);
std::vector<std::vector<std::string>> read_corpus_file(const std::string& path);

// ---------------------------------------------------------------------------
// Treebank

struct Tree {
  std::string label;
  std::vector<Tree> children;

  bool is_leaf() const { return children.empty(); }
  /// Preterminal: exactly one child which is a leaf.
  bool is_preterminal() const { return children.size() == 1 && children[0].is_leaf(); }
  bool operator==(const Tree&) const = default;
};

struct Treebank {
  std::vector<Tree> sentences;
};

/// Penn-style bracketed trees, any number per text. A bare outer bracket with
/// no label, "( (S ...) )", is unwrapped. Terminals are lowercased.
Treebank read_treebank(std::string_view text);
Treebank read_treebank_file(const std::string& path);

std::string tree_to_string(const Tree& tree);
std::vector<std::string> tree_yield(const Tree& tree);

}  // namespace telephone
