#include "telephone/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace telephone {

namespace {

bool is_edge_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (start == i) break;
    std::size_t b = start, e = i;
    while (b < e && is_edge_punct(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && is_edge_punct(static_cast<unsigned char>(text[e - 1]))) --e;
    if (b == e) continue;
    std::string tok(text.substr(b, e - b));
    for (char& c : tok) {
      if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    out.push_back(std::move(tok));
  }
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() { add(std::string(kUnknownWord), 0); }

void Vocabulary::add(std::string word, std::uint64_t count) {
  auto id = static_cast<WordId>(types_.size());
  index_.emplace(word, id);
  types_.push_back(std::move(word));
  counts_.push_back(count);
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words, std::size_t max_types) {
  Vocabulary v;
  v.types_.clear();
  v.counts_.clear();
  v.index_.clear();
  for (const auto& w : words) {
    if (v.index_.count(w)) continue;
    v.add(w, 0);
  }
  auto it = v.index_.find(std::string(kUnknownWord));
  if (it == v.index_.end()) {
    v.add(std::string(kUnknownWord), 0);
    it = v.index_.find(std::string(kUnknownWord));
  }
  v.unk_id_ = it->second;
  v.max_types_ = max_types == SIZE_MAX ? v.types_.size() - 1 : max_types;
  return v;
}

WordId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? unk_id_ : it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  return index_.count(std::string(word)) != 0;
}

Utterance Vocabulary::encode(std::string_view text) const { return encode(tokenize(text)); }

Utterance Vocabulary::encode(const std::vector<std::string>& words) const {
  Utterance u;
  u.tokens.reserve(words.size());
  for (const auto& w : words) u.tokens.push_back(id(w));
  u.text = join_words(words);
  return u;
}

std::vector<std::string> Vocabulary::decode(const std::vector<WordId>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (WordId i : ids) out.push_back(word(i));
  return out;
}

void Vocabulary::write(std::ostream& out) const {
  for (std::size_t i = 0; i < types_.size(); ++i) {
    out << types_[i] << '\t' << i << '\t' << counts_[i] << '\n';
  }
}

Vocabulary Vocabulary::read(std::istream& in) {
  std::vector<std::pair<std::string, std::uint64_t>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word, id_s, count_s;
    if (!std::getline(ss, word, '\t') || !std::getline(ss, id_s, '\t') || !std::getline(ss, count_s)) {
      throw ParseError("vocabulary line " + std::to_string(lineno) + ": expected word<TAB>id<TAB>count");
    }
    if (std::stoul(id_s) != rows.size()) {
      throw ParseError("vocabulary line " + std::to_string(lineno) + ": ids must be dense and ordered");
    }
    rows.emplace_back(word, std::stoull(count_s));
  }
  Vocabulary v;
  v.types_.clear();
  v.counts_.clear();
  v.index_.clear();
  for (auto& [w, c] : rows) v.add(w, c);
  auto it = v.index_.find(std::string(kUnknownWord));
  if (it == v.index_.end()) throw ParseError("vocabulary has no " + std::string(kUnknownWord) + " row");
  v.unk_id_ = it->second;
  v.max_types_ = v.types_.size() - 1;
  return v;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t max_types) {
  if (max_types < 1) throw std::invalid_argument("max_types must be >= 1");
  std::map<std::string, std::uint64_t> freq;
  for (const auto& utt : corpus) {
    for (const auto& w : utt) {
      if (w == kUnknownWord) continue;
      ++freq[w];
    }
  }
  std::uint64_t unk_count = 0;
  for (const auto& utt : corpus) {
    for (const auto& w : utt) unk_count += (w == kUnknownWord);
  }
  std::vector<std::pair<std::string, std::uint64_t>> ranked(freq.begin(), freq.end());
  // map iteration is lexicographic, so a stable sort by count keeps ties ordered
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary v;
  v.types_.clear();
  v.counts_.clear();
  v.index_.clear();
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i < max_types) {
      v.add(ranked[i].first, ranked[i].second);
    } else {
      unk_count += ranked[i].second;
    }
  }
  v.add(std::string(kUnknownWord), unk_count);
  v.unk_id_ = static_cast<WordId>(v.types_.size() - 1);
  v.max_types_ = max_types;
  return v;
}

std::vector<std::vector<std::string>> read_corpus(std::istream& in) {
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = tokenize(line);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

std::vector<std::vector<std::string>> read_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return read_corpus(in);
}

// ---------------------------------------------------------------------------
// Treebank reader

namespace {

class TreeReader {
 public:
  explicit TreeReader(std::string_view text) : text_(text) {}

  Treebank read_all() {
    Treebank tb;
    skip_space();
    while (pos_ < text_.size()) {
      if (text_[pos_] != '(') fail("expected '(' at start of tree");
      Tree t = read_node();
      // "( (S ...) )": anonymous wrapper around a single tree
      while (t.label.empty() && t.children.size() == 1 && !t.children[0].is_leaf()) {
        Tree inner = std::move(t.children[0]);
        t = std::move(inner);
      }
      if (t.label.empty()) fail("tree without a root label");
      tb.sentences.push_back(std::move(t));
      skip_space();
    }
    return tb;
  }

 private:
  Tree read_node() {
    std::size_t open_line = line_;
    ++pos_;  // '('
    skip_space();
    Tree node;
    if (pos_ < text_.size() && text_[pos_] != '(' && text_[pos_] != ')') node.label = read_atom();
    skip_space();
    while (true) {
      if (pos_ >= text_.size()) {
        fail("unbalanced parentheses: constituent opened on line " + std::to_string(open_line) +
             " is never closed");
      }
      char c = text_[pos_];
      if (c == ')') {
        ++pos_;
        break;
      }
      if (c == '(') {
        node.children.push_back(read_node());
      } else {
        Tree leaf;
        leaf.label = read_atom();
        for (char& ch : leaf.label) {
          if (static_cast<unsigned char>(ch) < 0x80) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        }
        node.children.push_back(std::move(leaf));
      }
      skip_space();
    }
    if (node.children.empty()) {
      fail("empty constituent" + (node.label.empty() ? std::string() : " (" + node.label + ")"));
    }
    return node;
  }

  std::string read_atom() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
           text_[pos_] != '(' && text_[pos_] != ')') {
      ++pos_;
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("treebank line " + std::to_string(line_) + ": " + what);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

void write_tree(const Tree& t, std::string& out) {
  if (t.is_leaf()) {
    out += t.label;
    return;
  }
  out += '(';
  out += t.label;
  for (const auto& c : t.children) {
    out += ' ';
    write_tree(c, out);
  }
  out += ')';
}

void collect_yield(const Tree& t, std::vector<std::string>& out) {
  if (t.is_leaf()) {
    out.push_back(t.label);
    return;
  }
  for (const auto& c : t.children) collect_yield(c, out);
}

}  // namespace

Treebank read_treebank(std::string_view text) { return TreeReader(text).read_all(); }

Treebank read_treebank_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open treebank file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return read_treebank(ss.str());
}

std::string tree_to_string(const Tree& tree) {
  std::string out;
  write_tree(tree, out);
  return out;
}

std::vector<std::string> tree_yield(const Tree& tree) {
  std::vector<std::string> out;
  collect_yield(tree, out);
  return out;
}

}  // namespace telephone
