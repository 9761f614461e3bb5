#include "telephone/ngram_lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace telephone {

std::string to_string(Smoothing s) {
  switch (s) {
    case Smoothing::mle_oov: return "mle_oov";
    case Smoothing::good_turing: return "good_turing";
    case Smoothing::modified_kneser_ney: return "modified_kneser_ney";
  }
  return "unknown";
}

Smoothing parse_smoothing(std::string_view name) {
  if (name == "mle_oov" || name == "mle") return Smoothing::mle_oov;
  if (name == "good_turing" || name == "gt") return Smoothing::good_turing;
  if (name == "modified_kneser_ney" || name == "kn" || name == "mkn") return Smoothing::modified_kneser_ney;
  throw std::invalid_argument("unknown smoothing: " + std::string(name));
}

// ---------------------------------------------------------------------------
// NGramKey

NGramKey::NGramKey(std::span<const WordId> s) {
  if (s.size() > static_cast<std::size_t>(kMaxOrder)) throw std::length_error("n-gram longer than kMaxOrder");
  std::copy(s.begin(), s.end(), ids.begin());
  len = static_cast<std::uint8_t>(s.size());
}

NGramKey NGramKey::prefix() const {
  NGramKey k = *this;
  k.ids[len - 1] = 0;
  --k.len;
  return k;
}

NGramKey NGramKey::suffix() const { return NGramKey(view().subspan(1)); }

bool NGramKey::operator==(const NGramKey& o) const {
  return len == o.len && std::equal(ids.begin(), ids.begin() + len, o.ids.begin());
}

bool NGramKey::operator<(const NGramKey& o) const {
  return std::lexicographical_compare(ids.begin(), ids.begin() + len, o.ids.begin(), o.ids.begin() + o.len);
}

std::size_t NGramKeyHash::operator()(const NGramKey& k) const noexcept {
  std::uint64_t h = 1469598103934665603ULL ^ k.len;
  for (std::size_t i = 0; i < k.len; ++i) {
    h ^= static_cast<std::uint32_t>(k.ids[i]);
    h *= 1099511628211ULL;
  }
  return static_cast<std::size_t>(h ^ (h >> 29));
}

// ---------------------------------------------------------------------------
// Estimators

double KneserNeyDiscounts::operator()(std::uint64_t count) const {
  if (count == 0) return 0.0;
  if (count == 1) return d1;
  if (count == 2) return d2;
  return d3plus;
}

KneserNeyDiscounts kneser_ney_discounts(std::uint64_t n1, std::uint64_t n2, std::uint64_t n3,
                                        std::uint64_t n4) {
  constexpr double kFallback = 0.75;
  KneserNeyDiscounts d;
  if (n1 == 0 || n2 == 0) return d;
  const double y = static_cast<double>(n1) / (static_cast<double>(n1) + 2.0 * static_cast<double>(n2));
  auto valid = [](double v, double upper) { return std::isfinite(v) && v > 0.0 && v < upper; };
  double d1 = 1.0 - 2.0 * y * static_cast<double>(n2) / static_cast<double>(n1);
  double d2 = 2.0 - 3.0 * y * static_cast<double>(n3) / static_cast<double>(n2);
  d.d1 = valid(d1, 1.0) ? d1 : kFallback;
  d.d2 = valid(d2, 2.0) ? d2 : kFallback;
  if (n3 > 0) {
    double d3 = 3.0 - 4.0 * y * static_cast<double>(n4) / static_cast<double>(n3);
    d.d3plus = valid(d3, 3.0) ? d3 : kFallback;
  }
  return d;
}

double SimpleGoodTuring::prob(std::uint64_t r) const {
  return (1.0 - p0) * r_star.at(r) / n_prime;
}

SimpleGoodTuring simple_good_turing(const std::map<std::uint64_t, std::uint64_t>& n_r) {
  SimpleGoodTuring sgt;
  if (n_r.empty()) return sgt;
  double total = 0.0;
  for (auto [r, n] : n_r) total += static_cast<double>(r) * static_cast<double>(n);
  auto n_of = [&](std::uint64_t r) -> double {
    auto it = n_r.find(r);
    return it == n_r.end() ? 0.0 : static_cast<double>(it->second);
  };
  sgt.p0 = n_of(1) / total;

  std::vector<std::uint64_t> rs;
  for (auto [r, n] : n_r) {
    if (n > 0 && r > 0) rs.push_back(r);
  }

  if (rs.size() >= 2) {
    // Z_r = N_r / (0.5 (t - q)) over neighbouring nonzero r
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      double q = i == 0 ? 0.0 : static_cast<double>(rs[i - 1]);
      double r = static_cast<double>(rs[i]);
      double t = i + 1 < rs.size() ? static_cast<double>(rs[i + 1]) : 2.0 * r - q;
      double z = n_of(rs[i]) / (0.5 * (t - q));
      lx.push_back(std::log(r));
      ly.push_back(std::log(z));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      mx += lx[i];
      my += ly[i];
    }
    mx /= static_cast<double>(lx.size());
    my /= static_cast<double>(ly.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxy += (lx[i] - mx) * (ly[i] - my);
      sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    sgt.slope = sxy / sxx;
    sgt.intercept = my - sgt.slope * mx;
    sgt.regression_ok = true;
  }

  bool use_lgt = false;
  for (std::uint64_t r : rs) {
    const double rd = static_cast<double>(r);
    double r_star = rd - 0.75;
    if (sgt.regression_ok) {
      double y = (rd + 1.0) * std::pow((rd + 1.0) / rd, sgt.slope);
      if (!use_lgt) {
        double n_next = n_of(r + 1);
        if (n_next == 0.0) {
          use_lgt = true;
        } else {
          double nr = n_of(r);
          double x = (rd + 1.0) * n_next / nr;
          double thr = 1.96 * std::sqrt((rd + 1.0) * (rd + 1.0) * (n_next / (nr * nr)) * (1.0 + n_next / nr));
          if (std::abs(x - y) <= thr) {
            use_lgt = true;
          } else {
            r_star = x;
          }
        }
      }
      if (use_lgt) r_star = y;
    }
    // tiny corpora can push r* outside (0, r); absolute discounting keeps mass for unseen events
    if (!(r_star > 0.0 && r_star < rd)) r_star = rd - 0.75;
    sgt.r_star[r] = r_star;
    sgt.n_prime += n_of(r) * r_star;
  }
  return sgt;
}

// ---------------------------------------------------------------------------
// NGramModel

NGramModel::NGramModel(std::shared_ptr<const Vocabulary> vocab, int order)
    : vocab_(std::move(vocab)), order_(order), tables_(static_cast<std::size_t>(order)) {
  if (order < 1 || order > kMaxOrder) throw std::invalid_argument("n-gram order out of range");
}

double NGramModel::cond_logprob(std::span<const WordId> context, WordId word) const {
  const std::size_t max_ctx = static_cast<std::size_t>(order_ - 1);
  if (context.size() > max_ctx) context = context.subspan(context.size() - max_ctx);
  std::array<WordId, kMaxOrder> buf{};
  double acc = 0.0;
  for (std::size_t len = context.size() + 1; len-- > 0;) {
    auto ctx = context.subspan(context.size() - len);
    std::copy(ctx.begin(), ctx.end(), buf.begin());
    buf[len] = word;
    NGramKey key(std::span<const WordId>(buf.data(), len + 1));
    const auto& tab = tables_[len];
    auto it = tab.find(key);
    if (it != tab.end() && !std::isnan(it->second.logprob)) return acc + it->second.logprob;
    if (len > 0) {
      auto cit = tables_[len - 1].find(NGramKey(ctx));
      if (cit != tables_[len - 1].end()) acc += cit->second.backoff;
    }
  }
  return acc + kFloorLog2;
}

std::vector<double> NGramModel::token_logprobs(std::span<const WordId> tokens) const {
  std::vector<WordId> padded(static_cast<std::size_t>(order_ - 1), kStartId);
  padded.insert(padded.end(), tokens.begin(), tokens.end());
  std::vector<double> out;
  out.reserve(tokens.size());
  const std::size_t ctx = static_cast<std::size_t>(order_ - 1);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::span<const WordId> context(padded.data() + i, ctx);
    out.push_back(cond_logprob(context, tokens[i]));
  }
  return out;
}

double NGramModel::utterance_logprob(const Utterance& u) const {
  double total = 0.0;
  for (double lp : token_logprobs(u.tokens)) total += lp;
  return total;
}

double NGramModel::sentence_logprob(std::span<const std::string> words) const {
  double total = 0.0;
  for (double lp : word_logprobs(words)) total += lp;
  return total;
}

std::vector<double> NGramModel::word_logprobs(std::span<const std::string> words) const {
  std::vector<WordId> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(vocab_->id(w));
  return token_logprobs(ids);
}

std::vector<NGramKey> NGramModel::contexts() const {
  std::vector<NGramKey> out;
  out.emplace_back();  // empty context: the unigram distribution
  for (int k = 1; k < order_; ++k) {
    for (const auto& [key, e] : table(k)) {
      if (e.is_context) out.push_back(key);
    }
  }
  std::sort(out.begin(), out.end(), [](const NGramKey& a, const NGramKey& b) {
    return a.len != b.len ? a.len < b.len : a < b;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

using CountTable = std::unordered_map<NGramKey, std::uint64_t, NGramKeyHash>;

std::map<std::uint64_t, std::uint64_t> count_of_counts(const CountTable& t) {
  std::map<std::uint64_t, std::uint64_t> out;
  for (const auto& [_, c] : t) ++out[c];
  return out;
}

std::uint64_t coc(const std::map<std::uint64_t, std::uint64_t>& m, std::uint64_t r) {
  auto it = m.find(r);
  return it == m.end() ? 0 : it->second;
}

/// Seen probabilities plus a leftover mass spread evenly across unseen types
/// (zero-count types and always the unknown type).
void fill_unigrams(NGramModel::Table& table, const Vocabulary& vocab, const std::vector<double>& seen,
                   double leftover) {
  std::vector<WordId> unseen;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    auto id = static_cast<WordId>(i);
    if (seen[i] <= 0.0 || id == vocab.unk_id()) unseen.push_back(id);
  }
  const double share = leftover / static_cast<double>(unseen.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    double p = seen[i];
    auto id = static_cast<WordId>(i);
    if (std::find(unseen.begin(), unseen.end(), id) != unseen.end()) p += share;
    NGramModel::Entry e;
    e.logprob = p > 0.0 ? std::log2(p) : kFloorLog2;
    WordId key_id = id;
    table[NGramKey(std::span<const WordId>(&key_id, 1))] = e;
  }
}

}  // namespace

NGramModel fit_ngram(const std::vector<std::vector<std::string>>& corpus,
                     std::shared_ptr<const Vocabulary> vocab, const NGramOptions& opts) {
  if (!vocab) throw std::invalid_argument("fit_ngram: null vocabulary");
  const int n = opts.order;
  if (n < 1 || n > kMaxOrder) throw std::invalid_argument("fit_ngram: order out of range");
  if (opts.smoothing == Smoothing::mle_oov && n != 1) {
    throw std::invalid_argument("fit_ngram: mle_oov smoothing is unigram-only");
  }
  if (opts.smoothing != Smoothing::mle_oov && n == 1) {
    throw std::invalid_argument("fit_ngram: " + to_string(opts.smoothing) +
                                " requires order >= 2 (unsupported combination)");
  }
  if (opts.oov_mass < 0.0 || opts.oov_mass >= 1.0) throw std::invalid_argument("fit_ngram: oov_mass must be in [0,1)");

  std::size_t n_tokens = 0;
  for (const auto& s : corpus) n_tokens += s.size();
  if (n_tokens == 0) throw std::invalid_argument("fit_ngram: empty corpus");

  NGramModel model(vocab, n);
  model.smoothing_ = opts.smoothing;
  model.oov_mass_ = opts.smoothing == Smoothing::mle_oov ? opts.oov_mass : 0.0;
  const Vocabulary& v = *vocab;

  // raw[k-1]: k-grams ending at each predicted word
  std::vector<CountTable> raw(static_cast<std::size_t>(n));
  for (const auto& sent : corpus) {
    std::vector<WordId> padded(static_cast<std::size_t>(n - 1), kStartId);
    for (const auto& w : sent) padded.push_back(v.id(w));
    for (std::size_t i = static_cast<std::size_t>(n - 1); i < padded.size(); ++i) {
      for (int k = 1; k <= n; ++k) {
        std::span<const WordId> g(padded.data() + i + 1 - static_cast<std::size_t>(k), static_cast<std::size_t>(k));
        ++raw[static_cast<std::size_t>(k - 1)][NGramKey(g)];
      }
    }
  }

  // Counts actually used per order
  std::vector<CountTable> counts = raw;
  if (opts.smoothing == Smoothing::modified_kneser_ney) {
    for (int k = 1; k < n; ++k) {
      CountTable adj;
      for (const auto& [g, c] : raw[static_cast<std::size_t>(k - 1)]) {
        if (g.ids[0] == kStartId) adj[g] = c;
      }
      for (const auto& [g, c] : raw[static_cast<std::size_t>(k)]) {
        NGramKey lower = g.suffix();
        if (lower.ids[0] == kStartId) continue;
        ++adj[lower];
      }
      counts[static_cast<std::size_t>(k - 1)] = std::move(adj);
    }
  }

  // Order 1
  {
    const auto& uni = counts[0];
    std::vector<double> seen(v.size(), 0.0);
    double leftover = 0.0;
    double total = 0.0;
    for (const auto& [g, c] : uni) total += static_cast<double>(c);
    switch (opts.smoothing) {
      case Smoothing::mle_oov: {
        for (const auto& [g, c] : uni) seen[static_cast<std::size_t>(g.ids[0])] = (1.0 - opts.oov_mass) * static_cast<double>(c) / total;
        leftover = opts.oov_mass;
        break;
      }
      case Smoothing::good_turing: {
        auto sgt = simple_good_turing(count_of_counts(uni));
        for (const auto& [g, c] : uni) seen[static_cast<std::size_t>(g.ids[0])] = sgt.prob(c);
        leftover = sgt.p0;
        break;
      }
      case Smoothing::modified_kneser_ney: {
        auto cc = count_of_counts(uni);
        auto d = kneser_ney_discounts(coc(cc, 1), coc(cc, 2), coc(cc, 3), coc(cc, 4));
        for (const auto& [g, c] : uni) {
          seen[static_cast<std::size_t>(g.ids[0])] = (static_cast<double>(c) - d(c)) / total;
          leftover += d(c) / total;
        }
        break;
      }
    }
    fill_unigrams(model.mutable_table(1), v, seen, leftover);
  }

  // Orders 2..n, lowest first so backoff denominators can query the lower model
  for (int k = 2; k <= n; ++k) {
    const auto& ck = counts[static_cast<std::size_t>(k - 1)];
    std::map<NGramKey, std::vector<std::pair<WordId, std::uint64_t>>> by_context;
    for (const auto& [g, c] : ck) by_context[g.prefix()].emplace_back(g.ids[static_cast<std::size_t>(k - 1)], c);

    auto cc = count_of_counts(ck);
    KneserNeyDiscounts kn;
    SimpleGoodTuring sgt;
    if (opts.smoothing == Smoothing::modified_kneser_ney) {
      kn = kneser_ney_discounts(coc(cc, 1), coc(cc, 2), coc(cc, 3), coc(cc, 4));
    } else {
      sgt = simple_good_turing(cc);
    }

    auto& table = model.mutable_table(k);
    auto& lower_table = model.mutable_table(k - 1);
    for (auto& [ctx, words] : by_context) {
      std::sort(words.begin(), words.end());
      double ctx_total = 0.0;
      for (auto [w, c] : words) ctx_total += static_cast<double>(c);
      std::vector<double> probs;
      probs.reserve(words.size());
      double seen_mass = 0.0;
      for (auto [w, c] : words) {
        double p = opts.smoothing == Smoothing::modified_kneser_ney
                       ? (static_cast<double>(c) - kn(c)) / ctx_total
                       : sgt.r_star.at(c) / ctx_total;
        probs.push_back(p);
        seen_mass += p;
      }
      double lower_seen = 0.0;
      NGramKey lower_ctx = ctx.suffix();
      for (auto [w, c] : words) lower_seen += std::exp2(model.cond_logprob(lower_ctx.view(), w));
      const double denom = 1.0 - lower_seen;
      double backoff = 0.0;
      if (denom <= 1e-12) {
        // every vocabulary type was seen after this context
        for (double& p : probs) p /= seen_mass;
      } else {
        backoff = std::log2((1.0 - seen_mass) / denom);
      }
      for (std::size_t i = 0; i < words.size(); ++i) {
        std::array<WordId, kMaxOrder> buf{};
        std::copy(ctx.ids.begin(), ctx.ids.begin() + ctx.len, buf.begin());
        buf[ctx.len] = words[i].first;
        NGramModel::Entry e;
        e.logprob = std::log2(probs[i]);
        table[NGramKey(std::span<const WordId>(buf.data(), ctx.len + 1u))] = e;
      }
      // contexts made only of start padding have no row of their own yet
      auto [ce, inserted] = lower_table.try_emplace(ctx);
      if (inserted) ce->second.logprob = std::numeric_limits<double>::quiet_NaN();
      ce->second.is_context = true;
      ce->second.backoff = backoff;
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// ARPA

namespace {

constexpr double kLog2Of10 = 3.32192809488736234787;

std::string word_of(const Vocabulary& v, WordId id) {
  return id == kStartId ? std::string(kStartWord) : v.word(id);
}

std::string fmt_log10(double log2v) {
  char buf[64];
  if (std::isnan(log2v) || log2v <= kFloorLog2 + 1e-9) return "-99";
  std::snprintf(buf, sizeof buf, "%.8f", log2v / kLog2Of10);
  return buf;
}

double parse_log10(const std::string& s, std::size_t lineno) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v <= -99.0 ? kFloorLog2 : v * kLog2Of10;
  } catch (const std::exception&) {
    throw ParseError("ARPA line " + std::to_string(lineno) + ": bad number '" + s + "'");
  }
}

}  // namespace

void write_arpa(const NGramModel& model, std::ostream& out) {
  const auto& v = model.vocabulary();
  out << "# telephone n-gram model";
  if (model.smoothing()) out << " smoothing=" << to_string(*model.smoothing());
  out << " oov_mass=" << model.oov_mass() << "\n\n";
  out << "\\data\\\n";
  std::vector<std::vector<NGramKey>> keys(static_cast<std::size_t>(model.order()));
  for (int k = 1; k <= model.order(); ++k) {
    for (const auto& [key, _] : model.table(k)) keys[static_cast<std::size_t>(k - 1)].push_back(key);
    std::sort(keys[static_cast<std::size_t>(k - 1)].begin(), keys[static_cast<std::size_t>(k - 1)].end());
    out << "ngram " << k << "=" << keys[static_cast<std::size_t>(k - 1)].size() << "\n";
  }
  for (int k = 1; k <= model.order(); ++k) {
    out << "\n\\" << k << "-grams:\n";
    for (const auto& key : keys[static_cast<std::size_t>(k - 1)]) {
      const auto& e = model.table(k).at(key);
      out << fmt_log10(e.logprob) << '\t';
      for (std::size_t i = 0; i < key.len; ++i) {
        if (i) out << ' ';
        out << word_of(v, key.ids[i]);
      }
      if (k < model.order() && e.is_context) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.8f", e.backoff / kLog2Of10);
        out << '\t' << buf;
      }
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
}

NGramModel read_arpa(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::optional<Smoothing> smoothing;
  double oov_mass = 0.0;

  auto next_nonblank = [&](std::string& l) {
    while (std::getline(in, l)) {
      ++lineno;
      if (!l.empty() && l.back() == '\r') l.pop_back();
      if (l.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  };

  bool found_data = false;
  while (next_nonblank(line)) {
    if (line == "\\data\\") {
      found_data = true;
      break;
    }
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) {
      if (tok.rfind("smoothing=", 0) == 0) smoothing = parse_smoothing(tok.substr(10));
      if (tok.rfind("oov_mass=", 0) == 0) oov_mass = std::stod(tok.substr(9));
    }
  }
  if (!found_data) throw ParseError("ARPA: missing \\data\\ header");

  std::vector<std::size_t> declared;
  while (next_nonblank(line)) {
    if (line.rfind("ngram ", 0) != 0) break;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("ARPA line " + std::to_string(lineno) + ": malformed count line");
    int k = std::stoi(line.substr(6, eq - 6));
    if (k != static_cast<int>(declared.size()) + 1) {
      throw ParseError("ARPA line " + std::to_string(lineno) + ": n-gram counts out of order");
    }
    declared.push_back(std::stoul(line.substr(eq + 1)));
  }
  const int order = static_cast<int>(declared.size());
  if (order < 1 || order > kMaxOrder) throw ParseError("ARPA: bad or missing n-gram counts");

  struct Row {
    double logprob;
    std::vector<std::string> words;
    std::optional<double> backoff;
  };
  std::vector<std::vector<Row>> sections(static_cast<std::size_t>(order));
  for (int k = 1; k <= order; ++k) {
    const std::string header = "\\" + std::to_string(k) + "-grams:";
    if (line != header) {
      throw ParseError("ARPA line " + std::to_string(lineno) + ": expected section header " + header);
    }
    bool more = false;
    while ((more = next_nonblank(line))) {
      if (line[0] == '\\') break;
      std::istringstream ss(line);
      std::vector<std::string> f;
      std::string tok;
      while (ss >> tok) f.push_back(tok);
      const auto need = static_cast<std::size_t>(k) + 1;
      if (f.size() != need && f.size() != need + 1) {
        throw ParseError("ARPA line " + std::to_string(lineno) + ": expected " + std::to_string(k) + "-gram row");
      }
      Row r;
      r.logprob = parse_log10(f[0], lineno);
      r.words.assign(f.begin() + 1, f.begin() + static_cast<std::ptrdiff_t>(need));
      if (f.size() == need + 1) r.backoff = parse_log10(f[need], lineno);
      sections[static_cast<std::size_t>(k - 1)].push_back(std::move(r));
    }
    if (sections[static_cast<std::size_t>(k - 1)].size() != declared[static_cast<std::size_t>(k - 1)]) {
      throw ParseError("ARPA: " + std::to_string(k) + "-gram count mismatch: header says " +
                       std::to_string(declared[static_cast<std::size_t>(k - 1)]) + ", found " +
                       std::to_string(sections[static_cast<std::size_t>(k - 1)].size()));
    }
    if (!more) {
      if (k != order) throw ParseError("ARPA: truncated file");
      line.clear();
    }
  }
  if (line != "\\end\\") throw ParseError("ARPA line " + std::to_string(lineno) + ": expected \\end\\");

  std::vector<std::string> words;
  for (const auto& r : sections[0]) {
    if (r.words[0] != kStartWord) words.push_back(r.words[0]);
  }
  auto vocab = std::make_shared<Vocabulary>(Vocabulary::from_words(words));
  NGramModel model(vocab, order);
  model.smoothing_ = smoothing;
  model.oov_mass_ = oov_mass;
  for (int k = 1; k <= order; ++k) {
    auto& table = model.mutable_table(k);
    for (const auto& r : sections[static_cast<std::size_t>(k - 1)]) {
      std::array<WordId, kMaxOrder> buf{};
      for (std::size_t i = 0; i < r.words.size(); ++i) {
        buf[i] = r.words[i] == kStartWord ? kStartId : vocab->id(r.words[i]);
      }
      NGramKey key(std::span<const WordId>(buf.data(), r.words.size()));
      NGramModel::Entry e;
      e.logprob = r.words.back() == kStartWord ? std::numeric_limits<double>::quiet_NaN() : r.logprob;
      if (r.backoff) {
        e.backoff = *r.backoff;
        e.is_context = true;
      }
      table[key] = e;
    }
  }
  // an absent <unk> row still needs a finite score
  WordId unk = vocab->unk_id();
  NGramKey unk_key(std::span<const WordId>(&unk, 1));
  if (!model.table(1).count(unk_key)) model.mutable_table(1)[unk_key] = NGramModel::Entry{};
  return model;
}

NGramModel read_arpa_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ARPA file: " + path);
  return read_arpa(in);
}

}  // namespace telephone
