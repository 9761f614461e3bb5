#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace telephone {

enum class EditOp : char { match = 'M', del = 'D', ins = 'I', sub = 'S' };

struct EditStep {
  EditOp op;
  std::optional<std::string> source;
  std::optional<std::string> target;

  bool operator==(const EditStep&) const = default;
};

struct EditScript {
  std::vector<EditStep> steps;

  /// "M M D I ..."
  std::string op_string() const;
  std::size_t cost() const;
  std::size_t count(EditOp op) const;
  std::vector<std::string> source_words() const;
  /// Replays the script: the target sequence.
  std::vector<std::string> target_words() const;
  std::size_t source_length() const;

  /// CSV rows op,source_word,target_word,source_position (1-based, empty for
  /// insertions).
  void write_csv(std::ostream& out, bool header = true) const;

  bool operator==(const EditScript&) const = default;
};

/// Word-level Levenshtein alignment with unit costs. Among optimal scripts the
/// backtrace from the end prefers M, then S, then D, then I.
EditScript align(const std::vector<std::string>& source, const std::vector<std::string>& target);
EditScript align_texts(const std::string& source, const std::string& target);

/// (D + I + S) / source length. Throws std::domain_error for an empty source.
double wer(const EditScript& script);

struct TransmissionMeta {
  std::size_t chain_id = 0;
  int generation = 0;  // generation of the target utterance
  int listener_id = -1;
  int speaker_id = -1;
};

struct WordChangeRecord {
  std::string word;
  int position = 0;  // 1-based over source words
  int changed = 0;   // 1 for deletion or substitution
  std::size_t chain_id = 0;
  int generation = 0;
  int listener_id = -1;
  int speaker_id = -1;
};

/// One record per source word; insertions produce none.
std::vector<WordChangeRecord> word_change_events(const EditScript& script, const TransmissionMeta& meta);

}  // namespace telephone
