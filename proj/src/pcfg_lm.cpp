#include "telephone/pcfg_lm.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

namespace telephone {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string rule_key(const std::string& lhs, const std::vector<std::string>& rhs) {
  std::string k = lhs;
  k += '\t';
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    if (i) k += ' ';
    k += rhs[i];
  }
  return k;
}

double safe_log2(double p) { return p > 0.0 ? std::log2(p) : kNegInf; }

// Rows of (I - P)^-1 for a nonnegative substochastic relation P. Throws when
// the series sum_k P^k does not converge (a cycle carrying all the mass).
std::vector<std::vector<std::pair<int, double>>> closure_rows(
    std::size_t n, const std::vector<Eigen::Triplet<double>>& relation, const char* what) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(relation.size() + n);
  for (std::size_t i = 0; i < n; ++i) t.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
  for (const auto& e : relation) t.emplace_back(e.row(), e.col(), -e.value());
  // work on the transpose so a column solve yields a row of the inverse
  Eigen::SparseMatrix<double> mt(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<Eigen::Triplet<double>> tt;
  tt.reserve(t.size());
  for (const auto& e : t) tt.emplace_back(e.col(), e.row(), e.value());
  mt.setFromTriplets(tt.begin(), tt.end());
  mt.makeCompressed();

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(mt);
  if (lu.info() != Eigen::Success) throw std::invalid_argument(std::string("grammar ") + what + " closure is singular");

  std::vector<std::vector<std::pair<int, double>>> rows(n);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    e.setZero();
    e(static_cast<Eigen::Index>(i)) = 1.0;
    Eigen::VectorXd x = lu.solve(e);
    for (std::size_t j = 0; j < n; ++j) {
      double v = x(static_cast<Eigen::Index>(j));
      if (!std::isfinite(v) || v < -1e-9) {
        throw std::invalid_argument(std::string("grammar ") + what + " relation does not converge (inconsistent grammar)");
      }
      if (v > 0.0) rows[i].emplace_back(static_cast<int>(j), v);
    }
  }
  return rows;
}

// Inside probabilities for spans ending at the next position.
// cols[j][i][a] is the inside probability of a over words i+1..j.
void extend_inside(const Pcfg& g, const std::vector<std::vector<int>>& by_left,
                   std::vector<std::vector<std::vector<double>>>& cols, WordId w) {
  const std::size_t N = g.symbol_count();
  if (cols.empty()) cols.emplace_back();  // column 0 has no spans
  const std::size_t j = cols.size();
  cols.emplace_back(j, std::vector<double>(N, 0.0));
  auto& col = cols[j];
  const auto& ru = g.unary_closure();
  std::vector<double> gamma(N);

  auto close = [&](std::vector<double>& out) {
    for (std::size_t a = 0; a < N; ++a) {
      double s = 0.0;
      for (auto [b, r] : ru[a]) s += r * gamma[static_cast<std::size_t>(b)];
      out[a] = s;
    }
  };

  std::fill(gamma.begin(), gamma.end(), 0.0);
  for (const auto& lex : g.lexical(w)) gamma[static_cast<std::size_t>(lex.lhs)] += lex.p;
  close(col[j - 1]);

  const auto& bin = g.binary();
  for (std::size_t i = j - 1; i-- > 0;) {
    std::fill(gamma.begin(), gamma.end(), 0.0);
    for (std::size_t m = i + 1; m < j; ++m) {
      const auto& left = cols[m][i];
      const auto& right = col[m];
      for (std::size_t b = 0; b < N; ++b) {
        if (left[b] == 0.0) continue;
        for (int r : by_left[b]) {
          const auto& rule = bin[static_cast<std::size_t>(r)];
          double rv = right[static_cast<std::size_t>(rule.right)];
          if (rv != 0.0) gamma[static_cast<std::size_t>(rule.lhs)] += rule.p * left[b] * rv;
        }
      }
    }
    close(col[i]);
  }
}

std::vector<std::vector<int>> binary_by_left(const Pcfg& g) {
  std::vector<std::vector<int>> by(g.symbol_count());
  for (std::size_t r = 0; r < g.binary().size(); ++r) by[static_cast<std::size_t>(g.binary()[r].left)].push_back(static_cast<int>(r));
  return by;
}

void check_tokens(const Pcfg& g, const Utterance& u) {
  for (WordId w : u.tokens) {
    if (w < 0 || static_cast<std::size_t>(w) >= g.terminals().size()) throw std::out_of_range("token id outside grammar vocabulary");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Grammar

int Pcfg::intern(const std::string& name, bool synthetic) {
  auto [it, inserted] = index_.try_emplace(name, static_cast<int>(names_.size()));
  if (inserted) {
    names_.push_back(name);
    synthetic_.push_back(synthetic);
  }
  return it->second;
}

int Pcfg::binarize_suffix(const std::vector<int>& symbols, std::size_t from) {
  if (symbols.size() - from == 1) return symbols[from];
  std::string name = "@";
  for (std::size_t i = from; i < symbols.size(); ++i) {
    if (i > from) name += '|';
    name += names_[static_cast<std::size_t>(symbols[i])];
  }
  auto found = index_.find(name);
  if (found != index_.end()) return found->second;
  int id = intern(name, true);
  int right = binarize_suffix(symbols, from + 1);
  binary_.push_back({id, symbols[from], right, 1.0});
  return id;
}

Pcfg Pcfg::from_rules(const std::string& root, std::vector<PcfgRule> rules,
                      const std::vector<std::pair<std::string, double>>& unknown) {
  if (rules.empty()) throw std::invalid_argument("grammar has no rules");
  std::sort(rules.begin(), rules.end(), [](const PcfgRule& a, const PcfgRule& b) {
    return std::tie(a.lhs, a.rhs) < std::tie(b.lhs, b.rhs);
  });

  Pcfg g;
  std::set<std::string> lhs_set;
  for (const auto& r : rules) {
    if (r.rhs.empty()) throw std::invalid_argument("empty right-hand side for " + r.lhs);
    lhs_set.insert(r.lhs);
  }
  if (!lhs_set.count(root)) throw std::invalid_argument("root " + root + " has no rules");
  for (const auto& a : lhs_set) g.intern(a, false);
  g.root_ = g.index_.at(root);

  std::map<std::string, double> totals;
  std::set<std::string> words;
  for (const auto& r : rules) {
    auto [it, inserted] = g.rule_index_.emplace(rule_key(r.lhs, r.rhs), r.logprob);
    if (!inserted) throw std::invalid_argument("duplicate rule " + rule_key(r.lhs, r.rhs));
    totals[r.lhs] += std::exp2(r.logprob);
    for (const auto& s : r.rhs) {
      if (lhs_set.count(s)) continue;
      if (r.rhs.size() > 1) throw std::invalid_argument("terminal '" + s + "' inside a multi-symbol rule of " + r.lhs);
      words.insert(s);
    }
  }
  for (const auto& [lhs, total] : totals) {
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("rules for " + lhs + " sum to " + std::to_string(total));
    }
  }

  g.terminals_ = std::make_shared<const Vocabulary>(Vocabulary::from_words({words.begin(), words.end()}));
  g.lexical_.assign(g.terminals_->size(), {});

  for (const auto& r : rules) {
    const double p = std::exp2(r.logprob);
    if (p == 0.0) continue;
    const int lhs = g.index_.at(r.lhs);
    if (r.rhs.size() == 1) {
      auto nt = g.index_.find(r.rhs[0]);
      if (nt == g.index_.end()) {
        g.lexical_[static_cast<std::size_t>(g.terminals_->id(r.rhs[0]))].push_back({lhs, p});
      } else {
        g.unary_.push_back({lhs, nt->second, p});
      }
      continue;
    }
    std::vector<int> syms;
    for (const auto& s : r.rhs) syms.push_back(g.index_.at(s));
    g.binary_.push_back({lhs, syms[0], g.binarize_suffix(syms, 1), p});
  }

  for (const auto& [a, lp] : unknown) {
    auto it = g.index_.find(a);
    if (it == g.index_.end() || g.synthetic_[static_cast<std::size_t>(it->second)]) {
      throw std::invalid_argument("unknown-word score for undefined nonterminal " + a);
    }
    if (lp > 0.0) throw std::invalid_argument("unknown-word score above 1 for " + a);
    g.lexical_[static_cast<std::size_t>(g.terminals_->unk_id())].push_back({it->second, std::exp2(lp)});
  }
  g.unknown_ = unknown;
  std::sort(g.unknown_.begin(), g.unknown_.end());
  g.rules_ = std::move(rules);

  const std::size_t n = g.names_.size();
  std::vector<Eigen::Triplet<double>> pu, pl;
  for (const auto& u : g.unary_) pu.emplace_back(u.lhs, u.child, u.p);
  pl = pu;
  for (const auto& b : g.binary_) pl.emplace_back(b.lhs, b.left, b.p);
  g.ru_ = closure_rows(n, pu, "unary");
  g.rl_ = closure_rows(n, pl, "left-corner");
  return g;
}

std::optional<double> Pcfg::rule_logprob(const std::string& lhs, const std::vector<std::string>& rhs) const {
  auto it = rule_index_.find(rule_key(lhs, rhs));
  if (it == rule_index_.end()) return std::nullopt;
  return it->second;
}

Pcfg fit_pcfg(const Treebank& tb) {
  if (tb.sentences.empty()) throw std::invalid_argument("fit_pcfg: empty treebank");
  std::map<std::string, std::map<std::vector<std::string>, std::uint64_t>> counts;
  std::set<std::string> words;

  auto visit = [&](auto&& self, const Tree& t) -> void {
    if (t.is_leaf()) throw std::invalid_argument("fit_pcfg: bare terminal where a constituent was expected");
    if (t.is_preterminal()) {
      ++counts[t.label][{t.children[0].label}];
      words.insert(t.children[0].label);
      return;
    }
    std::vector<std::string> rhs;
    for (const auto& c : t.children) {
      if (c.is_leaf()) throw std::invalid_argument("fit_pcfg: terminal '" + c.label + "' mixed with constituents under " + t.label);
      rhs.push_back(c.label);
    }
    ++counts[t.label][rhs];
    for (const auto& c : t.children) self(self, c);
  };

  std::map<std::string, std::uint64_t> roots;
  for (const auto& t : tb.sentences) {
    visit(visit, t);
    ++roots[t.label];
  }
  for (const auto& w : words) {
    if (counts.count(w)) throw std::invalid_argument("fit_pcfg: word '" + w + "' is also a constituent label");
  }
  std::string root = roots.begin()->first;
  if (roots.size() > 1) {
    root = "@TOP";
    for (const auto& [label, c] : roots) counts[root][{label}] += c;
  }

  std::vector<PcfgRule> rules;
  std::vector<std::pair<std::string, double>> unknown;
  for (const auto& [lhs, expansions] : counts) {
    std::uint64_t total = 0, singletons = 0;
    for (const auto& [rhs, c] : expansions) {
      total += c;
      if (rhs.size() == 1 && !counts.count(rhs[0]) && c == 1) ++singletons;
    }
    for (const auto& [rhs, c] : expansions) {
      rules.push_back({lhs, rhs, std::log2(static_cast<double>(c) / static_cast<double>(total))});
    }
    if (singletons > 0) unknown.emplace_back(lhs, std::log2(static_cast<double>(singletons) / static_cast<double>(total)));
  }
  return Pcfg::from_rules(root, std::move(rules), unknown);
}

// ---------------------------------------------------------------------------
// Inside

std::optional<double> inside_logprob(const Pcfg& g, const Utterance& u) {
  if (u.empty()) return std::nullopt;
  check_tokens(g, u);
  auto by_left = binary_by_left(g);
  std::vector<std::vector<std::vector<double>>> cols;
  for (WordId w : u.tokens) extend_inside(g, by_left, cols, w);
  double p = cols[u.size()][0][static_cast<std::size_t>(g.root_id())];
  if (p <= 0.0) return std::nullopt;
  return std::log2(p);
}

// ---------------------------------------------------------------------------
// k-best

namespace {

struct Deriv {
  double lp;
  int sym;
  enum Kind : std::uint8_t { lexical, unary, binary } kind;
  int rule;  // unary/binary index
  int left;  // child derivation (unary) or left child (binary); word position (lexical)
  int right;
};

class KBestChart {
 public:
  KBestChart(const Pcfg& g, const Utterance& u, int k) : g_(g), u_(u), k_(static_cast<std::size_t>(k)), n_(u.size()) {
    const std::size_t N = g.symbol_count();
    lists_.assign((n_ + 1) * (n_ + 1), std::vector<std::vector<int>>(N));
    by_lhs_.resize(N);
    for (std::size_t r = 0; r < g.binary().size(); ++r) by_lhs_[static_cast<std::size_t>(g.binary()[r].lhs)].push_back(static_cast<int>(r));
    unary_by_child_.resize(N);
    for (std::size_t r = 0; r < g.unary().size(); ++r) unary_by_child_[static_cast<std::size_t>(g.unary()[r].child)].push_back(static_cast<int>(r));

    for (std::size_t len = 1; len <= n_; ++len) {
      for (std::size_t i = 0; i + len <= n_; ++i) fill(i, i + len);
    }
  }

  const std::vector<int>& list(std::size_t i, std::size_t j, int a) const {
    return lists_[i * (n_ + 1) + j][static_cast<std::size_t>(a)];
  }
  const Deriv& deriv(int d) const { return arena_[static_cast<std::size_t>(d)]; }

  std::vector<Tree> build(int d, const std::vector<std::string>& words) const {
    const Deriv& x = deriv(d);
    std::vector<Tree> kids;
    switch (x.kind) {
      case Deriv::lexical:
        kids.push_back(Tree{words[static_cast<std::size_t>(x.left)], {}});
        break;
      case Deriv::unary:
        kids = build(x.left, words);
        break;
      case Deriv::binary: {
        kids = build(x.left, words);
        auto r = build(x.right, words);
        kids.insert(kids.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
        break;
      }
    }
    if (g_.synthetic(x.sym)) return kids;
    return {Tree{g_.symbol(x.sym), std::move(kids)}};
  }

 private:
  int add(Deriv d) {
    arena_.push_back(d);
    return static_cast<int>(arena_.size() - 1);
  }

  void fill(std::size_t i, std::size_t j) {
    const std::size_t N = g_.symbol_count();
    std::vector<std::vector<int>> pre(N);
    if (j == i + 1) {
      for (const auto& lex : g_.lexical(u_.tokens[i])) {
        pre[static_cast<std::size_t>(lex.lhs)].push_back(
            add({std::log2(lex.p), lex.lhs, Deriv::lexical, -1, static_cast<int>(i), -1}));
      }
    } else {
      for (std::size_t a = 0; a < N; ++a) {
        if (!by_lhs_[a].empty()) pre[a] = best_binary(i, j, static_cast<int>(a));
      }
    }

    // Unary chains: best-first over the closure, so each list comes out sorted.
    struct Item {
      double lp;
      std::uint64_t seq;
      int sym;
      bool from_pre;
      int a, b;  // pre position | unary rule, child derivation
    };
    auto worse = [](const Item& x, const Item& y) { return x.lp < y.lp || (x.lp == y.lp && x.seq > y.seq); };
    std::priority_queue<Item, std::vector<Item>, decltype(worse)> heap(worse);
    std::uint64_t seq = 0;
    for (std::size_t a = 0; a < N; ++a) {
      if (!pre[a].empty()) heap.push({deriv(pre[a][0]).lp, seq++, static_cast<int>(a), true, 0, -1});
    }
    auto& cell = lists_[i * (n_ + 1) + j];
    while (!heap.empty()) {
      Item it = heap.top();
      heap.pop();
      auto& out = cell[static_cast<std::size_t>(it.sym)];
      if (out.size() >= k_) continue;
      int d;
      if (it.from_pre) {
        const auto& src = pre[static_cast<std::size_t>(it.sym)];
        d = src[static_cast<std::size_t>(it.a)];
        if (static_cast<std::size_t>(it.a + 1) < src.size()) {
          heap.push({deriv(src[static_cast<std::size_t>(it.a + 1)]).lp, seq++, it.sym, true, it.a + 1, -1});
        }
      } else {
        d = add({it.lp, it.sym, Deriv::unary, it.a, it.b, -1});
      }
      out.push_back(d);
      for (int r : unary_by_child_[static_cast<std::size_t>(it.sym)]) {
        const auto& rule = g_.unary()[static_cast<std::size_t>(r)];
        heap.push({it.lp + std::log2(rule.p), seq++, rule.lhs, false, r, d});
      }
    }
  }

  // Lazy k-best over (rule, split, left rank, right rank).
  std::vector<int> best_binary(std::size_t i, std::size_t j, int a) {
    struct Cand {
      double lp;
      int rule, split, l, r;
    };
    auto worse = [](const Cand& x, const Cand& y) {
      if (x.lp != y.lp) return x.lp < y.lp;
      return std::tie(x.rule, x.split, x.l, x.r) > std::tie(y.rule, y.split, y.l, y.r);
    };
    std::priority_queue<Cand, std::vector<Cand>, decltype(worse)> heap(worse);
    std::set<std::array<int, 4>> seen;
    auto score = [&](int rule, int split, int l, int r, double& lp) {
      const auto& b = g_.binary()[static_cast<std::size_t>(rule)];
      const auto& L = list(i, static_cast<std::size_t>(split), b.left);
      const auto& R = list(static_cast<std::size_t>(split), j, b.right);
      if (static_cast<std::size_t>(l) >= L.size() || static_cast<std::size_t>(r) >= R.size()) return false;
      lp = std::log2(b.p) + deriv(L[static_cast<std::size_t>(l)]).lp + deriv(R[static_cast<std::size_t>(r)]).lp;
      return true;
    };
    auto offer = [&](int rule, int split, int l, int r) {
      double lp;
      if (!score(rule, split, l, r, lp)) return;
      if (!seen.insert({rule, split, l, r}).second) return;
      heap.push({lp, rule, split, l, r});
    };
    for (int rule : by_lhs_[static_cast<std::size_t>(a)]) {
      for (std::size_t m = i + 1; m < j; ++m) offer(rule, static_cast<int>(m), 0, 0);
    }
    std::vector<int> out;
    while (!heap.empty() && out.size() < k_) {
      Cand c = heap.top();
      heap.pop();
      const auto& b = g_.binary()[static_cast<std::size_t>(c.rule)];
      int dl = list(i, static_cast<std::size_t>(c.split), b.left)[static_cast<std::size_t>(c.l)];
      int dr = list(static_cast<std::size_t>(c.split), j, b.right)[static_cast<std::size_t>(c.r)];
      out.push_back(add({c.lp, a, Deriv::binary, c.rule, dl, dr}));
      offer(c.rule, c.split, c.l + 1, c.r);
      offer(c.rule, c.split, c.l, c.r + 1);
    }
    return out;
  }

  const Pcfg& g_;
  const Utterance& u_;
  std::size_t k_, n_;
  std::vector<Deriv> arena_;
  std::vector<std::vector<std::vector<int>>> lists_;
  std::vector<std::vector<int>> by_lhs_, unary_by_child_;
};

}  // namespace

std::optional<double> top_k_logprob(const Pcfg& g, const Utterance& u, int k) {
  if (k < 1) throw std::invalid_argument("top_k_logprob: k must be >= 1");
  if (u.empty()) return std::nullopt;
  check_tokens(g, u);
  KBestChart chart(g, u, k);
  const auto& best = chart.list(0, u.size(), g.root_id());
  if (best.empty()) return std::nullopt;
  // log-sum-exp around the best parse
  const double top = chart.deriv(best[0]).lp;
  double s = 0.0;
  for (int d : best) s += std::exp2(chart.deriv(d).lp - top);
  return top + std::log2(s);
}

std::vector<ScoredParse> k_best_parses(const Pcfg& g, const Utterance& u, int k) {
  if (k < 1) throw std::invalid_argument("k_best_parses: k must be >= 1");
  if (u.empty()) return {};
  check_tokens(g, u);
  auto words = tokenize(u.text);
  if (words.size() != u.size()) words = g.terminals().decode(u.tokens);
  KBestChart chart(g, u, k);
  std::vector<ScoredParse> out;
  for (int d : chart.list(0, u.size(), g.root_id())) {
    auto trees = chart.build(d, words);
    out.push_back({std::move(trees.front()), chart.deriv(d).lp});
  }
  return out;
}

std::optional<double> tree_logprob(const Pcfg& g, const Tree& t) {
  if (t.is_leaf()) return std::nullopt;
  if (t.is_preterminal() && !g.is_nonterminal(t.children[0].label)) {
    const auto& w = t.children[0].label;
    if (g.terminals().contains(w)) return g.rule_logprob(t.label, {w});
    for (const auto& [a, lp] : g.unknown_scores()) {
      if (a == t.label) return lp;
    }
    return std::nullopt;
  }
  std::vector<std::string> rhs;
  for (const auto& c : t.children) rhs.push_back(c.label);
  auto lp = g.rule_logprob(t.label, rhs);
  if (!lp) return std::nullopt;
  double total = *lp;
  for (const auto& c : t.children) {
    auto sub = tree_logprob(g, c);
    if (!sub) return std::nullopt;
    total += *sub;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Prefix probabilities

PrefixParser::PrefixParser(const Pcfg& g) : g_(g), by_left_(binary_by_left(g)), seed_(g.symbol_count(), 0.0) {
  seed_[static_cast<std::size_t>(g.root_id())] = 1.0;
}

double PrefixParser::push(WordId w) {
  if (w < 0 || static_cast<std::size_t>(w) >= g_.terminals().size()) throw std::out_of_range("token id outside grammar vocabulary");
  const std::size_t N = g_.symbol_count();
  const std::size_t i = words_.size();

  // Mass of each nonterminal being expanded at column i, after left-corner
  // closure of everything waiting there.
  std::vector<double> mass(N, 0.0);
  const auto& rl = g_.left_corner_closure();
  for (std::size_t z = 0; z < N; ++z) {
    if (seed_[z] == 0.0) continue;
    for (auto [y, r] : rl[z]) mass[static_cast<std::size_t>(y)] += seed_[z] * r;
  }
  mass_.push_back(std::move(mass));

  double scanned = 0.0;
  for (const auto& lex : g_.lexical(w)) scanned += mass_[i][static_cast<std::size_t>(lex.lhs)] * lex.p;

  words_.push_back(w);
  extend_inside(g_, by_left_, beta_, w);

  // Items A -> B . C completed up to column i+1 wait for C there.
  const std::size_t j = i + 1;
  std::fill(seed_.begin(), seed_.end(), 0.0);
  for (std::size_t k = 0; k < j; ++k) {
    const auto& mk = mass_[k];
    const auto& bk = beta_[j][k];
    for (const auto& b : g_.binary()) {
      double m = mk[static_cast<std::size_t>(b.lhs)];
      if (m == 0.0) continue;
      double in = bk[static_cast<std::size_t>(b.left)];
      if (in != 0.0) seed_[static_cast<std::size_t>(b.right)] += m * b.p * in;
    }
  }

  const double prev = prefix_.back();
  const double cur = safe_log2(scanned);
  prefix_.push_back(cur);
  if (prev == kNegInf || cur == kNegInf) return kNegInf;
  // prefix mass never grows; clip round-off
  return std::min(cur - prev, 0.0);
}

double PrefixParser::inside_logprob() const {
  if (words_.empty()) throw std::logic_error("PrefixParser: no words");
  return safe_log2(beta_[words_.size()][0][static_cast<std::size_t>(g_.root_id())]);
}

double PrefixParser::end_logprob() const {
  double in = inside_logprob();
  if (in == kNegInf) return kNegInf;
  return std::min(in - prefix_logprob(), 0.0);
}

PrefixSurprisal prefix_surprisals(const Pcfg& g, const Utterance& u) {
  if (u.empty()) throw std::invalid_argument("prefix_surprisals: empty utterance");
  PrefixParser parser(g);
  PrefixSurprisal out;
  for (std::size_t i = 0; i < u.size(); ++i) {
    double lp = parser.push(u.tokens[i]);
    if (lp == kNegInf && !out.dead_at) out.dead_at = i;
    out.bits.push_back(-lp);
  }
  out.end_bits = -parser.end_logprob();
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

void write_grammar(const Pcfg& g, std::ostream& out) {
  char buf[64];
  out << "@root\t" << g.root() << "\t0\n";
  for (const auto& r : g.rules()) {
    std::snprintf(buf, sizeof buf, "%.17g", r.logprob);
    out << rule_key(r.lhs, r.rhs) << '\t' << buf << '\n';
  }
  for (const auto& [a, lp] : g.unknown_scores()) {
    std::snprintf(buf, sizeof buf, "%.17g", lp);
    out << "@unk\t" << a << '\t' << buf << '\n';
  }
}

Pcfg read_grammar(std::istream& in) {
  std::string line, root;
  std::vector<PcfgRule> rules;
  std::vector<std::pair<std::string, double>> unknown;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto fail = [&](const std::string& why) { return ParseError("grammar line " + std::to_string(lineno) + ": " + why); };
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) throw fail("expected lhs<TAB>rhs<TAB>log2prob");
    std::string lhs = line.substr(0, t1);
    std::string rhs_text = line.substr(t1 + 1, t2 - t1 - 1);
    double lp;
    try {
      std::size_t used;
      lp = std::stod(line.substr(t2 + 1), &used);
      if (used != line.size() - t2 - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw fail("bad log probability");
    }
    std::istringstream rs(rhs_text);
    std::vector<std::string> rhs;
    for (std::string s; rs >> s;) rhs.push_back(s);
    if (lhs.empty() || rhs.empty()) throw fail("empty lhs or rhs");
    if (lhs == "@root") {
      if (rhs.size() != 1) throw fail("@root takes one symbol");
      root = rhs[0];
    } else if (lhs == "@unk") {
      if (rhs.size() != 1) throw fail("@unk takes one symbol");
      unknown.emplace_back(rhs[0], lp);
    } else {
      rules.push_back({lhs, rhs, lp});
    }
  }
  if (root.empty()) throw ParseError("grammar: missing @root row");
  try {
    return Pcfg::from_rules(root, std::move(rules), unknown);
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("grammar: ") + e.what());
  }
}

Pcfg read_grammar_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grammar file: " + path);
  return read_grammar(in);
}

// ---------------------------------------------------------------------------

double PcfgModel::utterance_logprob(const Utterance& u) const {
  auto lp = k_ > 0 ? top_k_logprob(*g_, u, k_) : inside_logprob(*g_, u);
  return lp ? *lp : kNegInf;
}

double PcfgModel::sentence_logprob(std::span<const std::string> words) const {
  return utterance_logprob(g_->encode({words.begin(), words.end()}));
}

std::vector<double> PcfgModel::word_logprobs(std::span<const std::string> words) const {
  auto s = prefix_surprisals(*g_, g_->encode({words.begin(), words.end()}));
  std::vector<double> out;
  for (double b : s.bits) out.push_back(-b);
  return out;
}

}  // namespace telephone
