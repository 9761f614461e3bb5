#include "telephone/alignment.hpp"

#include <algorithm>
#include <stdexcept>

#include "telephone/corpus.hpp"
#include "telephone/io.hpp"

namespace telephone {

std::string EditScript::op_string() const {
  std::string s;
  for (const auto& st : steps) {
    if (!s.empty()) s += ' ';
    s += static_cast<char>(st.op);
  }
  return s;
}

std::size_t EditScript::count(EditOp op) const {
  return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [&](const EditStep& s) { return s.op == op; }));
}

std::size_t EditScript::cost() const { return steps.size() - count(EditOp::match); }

std::vector<std::string> EditScript::source_words() const {
  std::vector<std::string> out;
  for (const auto& s : steps) {
    if (s.source) out.push_back(*s.source);
  }
  return out;
}

std::vector<std::string> EditScript::target_words() const {
  std::vector<std::string> out;
  for (const auto& s : steps) {
    if (s.target) out.push_back(*s.target);
  }
  return out;
}

std::size_t EditScript::source_length() const { return steps.size() - count(EditOp::ins); }

void EditScript::write_csv(std::ostream& out, bool header) const {
  if (header) write_csv_row(out, {"op", "source_word", "target_word", "source_position"});
  int pos = 0;
  for (const auto& s : steps) {
    std::string p;
    if (s.source) p = std::to_string(++pos);
    write_csv_row(out, {std::string(1, static_cast<char>(s.op)), s.source.value_or(""), s.target.value_or(""), p});
  }
}

EditScript align(const std::vector<std::string>& source, const std::vector<std::string>& target) {
  const std::size_t n = source.size(), m = target.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      std::size_t diag = d[i - 1][j - 1] + (source[i - 1] == target[j - 1] ? 0 : 1);
      d[i][j] = std::min({diag, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }

  EditScript script;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && source[i - 1] == target[j - 1] && d[i][j] == d[i - 1][j - 1]) {
      script.steps.push_back({EditOp::match, source[i - 1], target[j - 1]});
      --i, --j;
    } else if (i > 0 && j > 0 && source[i - 1] != target[j - 1] && d[i][j] == d[i - 1][j - 1] + 1) {
      script.steps.push_back({EditOp::sub, source[i - 1], target[j - 1]});
      --i, --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      script.steps.push_back({EditOp::del, source[i - 1], std::nullopt});
      --i;
    } else {
      script.steps.push_back({EditOp::ins, std::nullopt, target[j - 1]});
      --j;
    }
  }
  std::reverse(script.steps.begin(), script.steps.end());
  return script;
}

EditScript align_texts(const std::string& source, const std::string& target) {
  return align(tokenize(source), tokenize(target));
}

double wer(const EditScript& script) {
  const std::size_t n = script.source_length();
  if (n == 0) throw std::domain_error("word error rate is undefined for an empty source");
  return static_cast<double>(script.cost()) / static_cast<double>(n);
}

std::vector<WordChangeRecord> word_change_events(const EditScript& script, const TransmissionMeta& meta) {
  std::vector<WordChangeRecord> out;
  int pos = 0;
  for (const auto& s : script.steps) {
    if (s.op == EditOp::ins) continue;
    WordChangeRecord r;
    r.word = *s.source;
    r.position = ++pos;
    r.changed = s.op == EditOp::match ? 0 : 1;
    r.chain_id = meta.chain_id;
    r.generation = meta.generation;
    r.listener_id = meta.listener_id;
    r.speaker_id = meta.speaker_id;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace telephone
