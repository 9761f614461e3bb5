#include "telephone/noisy_channel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <stdexcept>

#include "telephone/random.hpp"

namespace telephone {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t idx(WordId w) { return static_cast<std::size_t>(w); }

// Draws an index with probability proportional to weights.
std::size_t draw(const std::vector<double>& weights, double u) {
  double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double r = u * total, acc = 0.0;
  std::size_t last = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = i;
    if (r < acc) return i;
  }
  if (last == weights.size()) throw std::logic_error("draw from an all-zero distribution");
  return last;
}

}  // namespace

double normalized_edit_distance(const std::string& a, const std::string& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 && m == 0) return 0.0;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

Utterance make_utterance(const Vocabulary& vocab, std::vector<WordId> tokens) {
  Utterance u;
  u.text = join_words(vocab.decode(tokens));
  u.tokens = std::move(tokens);
  return u;
}

bool lexicographic_less(const Vocabulary& vocab, const Utterance& a, const Utterance& b) {
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end(),
                                      [&](WordId x, WordId y) { return vocab.word(x) < vocab.word(y); });
}

// ---------------------------------------------------------------------------
// NoiseModel

NoiseModel::NoiseModel(std::shared_ptr<const Vocabulary> vocab, NoiseParams params, std::vector<double> insertion)
    : vocab_(std::move(vocab)), params_(params) {
  if (!vocab_) throw std::invalid_argument("NoiseModel: no vocabulary");
  if (!(params_.lambda >= 0.0)) throw std::invalid_argument("NoiseModel: lambda must be >= 0");
  if (!(params_.p_delete >= 0.0 && params_.p_delete <= 1.0)) throw std::invalid_argument("NoiseModel: p_delete outside [0,1]");
  if (!(params_.p_insert >= 0.0 && params_.p_insert <= 1.0)) throw std::invalid_argument("NoiseModel: p_insert outside [0,1]");
  if (params_.insert_top_n < 0) throw std::invalid_argument("NoiseModel: insert_top_n must be >= 0");

  const std::size_t V = vocab_->size();
  const WordId unk = vocab_->unk_id();
  if (insertion.empty()) {
    insertion.resize(V);
    for (std::size_t w = 0; w < V; ++w) insertion[w] = static_cast<double>(vocab_->count(static_cast<WordId>(w)));
  }
  if (insertion.size() != V) throw std::invalid_argument("NoiseModel: insertion distribution size mismatch");
  insertion[idx(unk)] = 0.0;
  double total = 0.0;
  for (double x : insertion) {
    if (!(x >= 0.0)) throw std::invalid_argument("NoiseModel: negative insertion weight");
    total += x;
  }
  if (total == 0.0) {
    // nothing counted: uniform over real words
    for (std::size_t w = 0; w < V; ++w) insertion[w] = static_cast<WordId>(w) == unk ? 0.0 : 1.0;
    total = static_cast<double>(V - 1);
  }
  q_.resize(V);
  for (std::size_t w = 0; w < V; ++w) q_[w] = total > 0.0 ? insertion[w] / total : 0.0;

  std::vector<WordId> order;
  for (std::size_t w = 0; w < V; ++w) {
    if (q_[w] > 0.0) order.push_back(static_cast<WordId>(w));
  }
  std::sort(order.begin(), order.end(), [&](WordId a, WordId b) {
    if (q_[idx(a)] != q_[idx(b)]) return q_[idx(a)] > q_[idx(b)];
    return vocab_->word(a) < vocab_->word(b);
  });
  if (order.size() > static_cast<std::size_t>(params_.insert_top_n)) order.resize(static_cast<std::size_t>(params_.insert_top_n));
  insert_top_ = std::move(order);

  // Z(h) over every real word plus h itself. The identity term is 1, so Z >= 1.
  log_z_.assign(V, 0.0);
  if (std::isfinite(params_.lambda)) {
    const long long n = static_cast<long long>(V);
#pragma omp parallel for schedule(dynamic, 16)
    for (long long h = 0; h < n; ++h) {
      double z = 0.0;
      for (std::size_t o = 0; o < V; ++o) {
        if (static_cast<WordId>(o) == unk && h != unk) continue;
        z += std::exp(-params_.lambda * normalized_edit_distance(vocab_->word(static_cast<WordId>(h)), vocab_->word(static_cast<WordId>(o))));
      }
      log_z_[static_cast<std::size_t>(h)] = std::log(z);
    }
  }
}

double NoiseModel::kernel(WordId observed, WordId intended) const {
  if (observed == intended) {
    if (!std::isfinite(params_.lambda)) return 1.0;
    return std::exp(-log_z_[idx(intended)]);
  }
  if (observed == vocab_->unk_id() || !std::isfinite(params_.lambda)) return 0.0;
  return std::exp(-params_.lambda * normalized_edit_distance(vocab_->word(intended), vocab_->word(observed)) -
                  log_z_[idx(intended)]);
}

std::vector<WordId> NoiseModel::nearest(WordId observed, int beam) const {
  if (beam < 1) throw std::invalid_argument("nearest: beam must be >= 1");
  const WordId unk = vocab_->unk_id();
  std::vector<std::pair<double, WordId>> scored;
  for (std::size_t h = 0; h < vocab_->size(); ++h) {
    WordId w = static_cast<WordId>(h);
    if (w == unk || w == observed) continue;
    double k = kernel(observed, w);
    if (k > 0.0) scored.emplace_back(k, w);
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return vocab_->word(a.second) < vocab_->word(b.second);
  });
  std::vector<WordId> out;
  if (observed != unk) out.push_back(observed);
  for (const auto& [k, w] : scored) {
    if (out.size() >= static_cast<std::size_t>(beam)) break;
    out.push_back(w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel

Corrupted corrupt(const NoiseModel& noise, const Utterance& u, std::uint64_t seed) {
  const auto& vocab = noise.vocabulary();
  const auto& p = noise.params();
  std::mt19937_64 rng(seed);
  std::vector<double> q(vocab.size());
  for (std::size_t w = 0; w < q.size(); ++w) q[w] = noise.insertion_prob(static_cast<WordId>(w));

  std::vector<WordId> out;
  auto gap = [&] {
    if (uniform01(rng) < p.p_insert) out.push_back(static_cast<WordId>(draw(q, uniform01(rng))));
  };
  gap();
  std::vector<double> k(vocab.size());
  for (WordId h : u.tokens) {
    if (uniform01(rng) < p.p_delete) {
      // dropped
    } else {
      for (std::size_t o = 0; o < k.size(); ++o) k[o] = noise.kernel(static_cast<WordId>(o), h);
      out.push_back(static_cast<WordId>(draw(k, uniform01(rng))));
    }
    gap();
  }
  Corrupted c;
  c.degenerate = out.empty();
  c.utterance = make_utterance(vocab, std::move(out));
  return c;
}

double obs_likelihood(const NoiseModel& noise, const Utterance& observed, const Utterance& hypothesis) {
  const auto& p = noise.params();
  const std::size_t n = hypothesis.size(), m = observed.size();
  const auto& o = observed.tokens;
  // f[j]: probability of having produced o_1..o_j after the current gap
  std::vector<double> f(m + 1, 0.0), h(m + 1, 0.0);
  auto apply_gap = [&](const std::vector<double>& before, std::vector<double>& after) {
    for (std::size_t j = 0; j <= m; ++j) {
      after[j] = before[j] * (1.0 - p.p_insert);
      if (j > 0) after[j] += before[j - 1] * p.p_insert * noise.insertion_prob(o[j - 1]);
    }
  };
  std::vector<double> start(m + 1, 0.0);
  start[0] = 1.0;
  apply_gap(start, f);
  for (std::size_t i = 0; i < n; ++i) {
    const WordId w = hypothesis.tokens[i];
    for (std::size_t j = 0; j <= m; ++j) {
      h[j] = f[j] * p.p_delete;
      if (j > 0) h[j] += f[j - 1] * (1.0 - p.p_delete) * noise.kernel(o[j - 1], w);
    }
    apply_gap(h, f);
  }
  return f[m] > 0.0 ? std::log2(f[m]) : kNegInf;
}

std::vector<Utterance> candidate_hypotheses(const NoiseModel& noise, const Utterance& observed,
                                            const CandidateOptions& opts) {
  if (observed.empty()) throw std::invalid_argument("candidate_hypotheses: empty observation");
  if (opts.beam_width < 1) throw std::invalid_argument("candidate_hypotheses: beam_width must be >= 1");
  if (opts.max_candidates < 1) throw std::invalid_argument("candidate_hypotheses: max_candidates must be >= 1");
  const auto& vocab = noise.vocabulary();
  const auto& p = noise.params();
  const double smooth = 1.0 / static_cast<double>(vocab.size());

  // Dimensions alternate gap, word, gap, ..., gap. Option word -1 means "no word".
  struct Option {
    double log_score;
    WordId word;
  };
  std::vector<std::vector<Option>> dims;
  auto sort_dim = [&](std::vector<Option>& d) {
    std::stable_sort(d.begin(), d.end(), [&](const Option& a, const Option& b) {
      if (a.log_score != b.log_score) return a.log_score > b.log_score;
      if ((a.word < 0) != (b.word < 0)) return a.word >= 0;
      return a.word >= 0 && vocab.word(a.word) < vocab.word(b.word);
    });
  };
  auto gap_dim = [&] {
    std::vector<Option> d = {{0.0, -1}};
    if (p.p_delete > 0.0) {
      for (WordId w : noise.insertion_candidates()) d.push_back({std::log(p.p_delete * noise.insertion_prob(w)), w});
    }
    sort_dim(d);
    return d;
  };
  dims.push_back(gap_dim());
  for (WordId o : observed.tokens) {
    std::vector<Option> d;
    if (p.p_delete < 1.0) {
      for (WordId h : noise.nearest(o, opts.beam_width)) {
        double s = (1.0 - p.p_delete) * noise.kernel(o, h) * (noise.insertion_prob(h) + smooth);
        if (s > 0.0) d.push_back({std::log(s), h});
      }
    }
    double drop = p.p_insert * noise.insertion_prob(o);
    if (drop > 0.0) d.push_back({std::log(drop), -1});
    if (d.empty()) d.push_back({kNegInf, -1});
    sort_dim(d);
    dims.push_back(std::move(d));
    dims.push_back(gap_dim());
  }

  // Best-first enumeration of index vectors.
  using State = std::vector<int>;
  auto score = [&](const State& s) {
    double t = 0.0;
    for (std::size_t k = 0; k < dims.size(); ++k) t += dims[k][static_cast<std::size_t>(s[k])].log_score;
    return t;
  };
  auto worse = [](const std::pair<double, State>& a, const std::pair<double, State>& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second > b.second;
  };
  std::priority_queue<std::pair<double, State>, std::vector<std::pair<double, State>>, decltype(worse)> heap(worse);
  std::set<State> seen;
  State zero(dims.size(), 0);
  heap.push({score(zero), zero});
  seen.insert(zero);

  const std::size_t cap = static_cast<std::size_t>(opts.max_candidates);
  std::map<std::vector<std::string>, Utterance> found;
  std::vector<std::vector<std::string>> found_order;
  std::size_t pops = 0;
  while (!heap.empty() && found.size() < cap && pops < 64 * cap) {
    auto [sc, s] = heap.top();
    heap.pop();
    ++pops;
    if (sc == kNegInf) break;
    std::vector<WordId> words;
    for (std::size_t k = 0; k < dims.size(); ++k) {
      WordId w = dims[k][static_cast<std::size_t>(s[k])].word;
      if (w >= 0) words.push_back(w);
    }
    if (!words.empty()) {
      auto key = vocab.decode(words);
      if (!found.count(key)) {
        found_order.push_back(key);
        found.emplace(key, make_utterance(vocab, std::move(words)));
      }
    }
    for (std::size_t k = 0; k < dims.size(); ++k) {
      if (static_cast<std::size_t>(s[k]) + 1 >= dims[k].size()) continue;
      State next = s;
      ++next[k];
      if (seen.insert(next).second) heap.push({score(next), next});
    }
  }

  auto key = vocab.decode(observed.tokens);
  if (!found.count(key)) {
    if (found.size() >= cap) {
      found.erase(found_order.back());
    }
    found.emplace(key, make_utterance(vocab, observed.tokens));
  }
  std::vector<Utterance> out;
  for (auto& [k, u] : found) out.push_back(std::move(u));
  return out;  // std::map keeps word-string order
}

// ---------------------------------------------------------------------------
// Listener

std::string to_string(DecisionRule r) { return r == DecisionRule::map ? "map" : "posterior_sample"; }

DecisionRule parse_decision_rule(const std::string& s) {
  if (s == "map") return DecisionRule::map;
  if (s == "posterior_sample" || s == "sample") return DecisionRule::posterior_sample;
  throw std::invalid_argument("unknown decision rule: " + s);
}

Posterior posterior(const ListenerAgent& agent, const Utterance& observed) {
  if (!agent.prior || !agent.noise) throw std::invalid_argument("listener needs a prior and a noise model");
  const auto& vocab = agent.noise->vocabulary();
  Posterior post;
  if (agent.hypothesis_space) {
    post.hypotheses = *agent.hypothesis_space;
    std::sort(post.hypotheses.begin(), post.hypotheses.end(),
              [&](const Utterance& a, const Utterance& b) { return lexicographic_less(vocab, a, b); });
  } else {
    post.hypotheses = candidate_hypotheses(*agent.noise, observed, agent.candidates);
  }
  if (post.hypotheses.empty()) throw std::runtime_error("empty hypothesis set");

  const std::size_t n = post.hypotheses.size();
  post.log_likelihood.resize(n);
  post.log_prior.resize(n);
  post.prob.resize(n);
  double best = kNegInf;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& h = post.hypotheses[i];
    post.log_likelihood[i] = obs_likelihood(*agent.noise, observed, h);
    post.log_prior[i] = post.log_likelihood[i] == kNegInf ? kNegInf : agent.prior->sentence_logprob(vocab.decode(h.tokens));
    best = std::max(best, post.log_likelihood[i] + post.log_prior[i]);
  }
  if (best == kNegInf) throw NoSupportError("no hypothesis has positive posterior for: " + observed.text);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += (post.prob[i] = std::exp2(post.log_likelihood[i] + post.log_prior[i] - best));
  for (auto& x : post.prob) x /= z;
  return post;
}

std::size_t choose(const std::vector<double>& log_scores, DecisionRule mode, std::uint64_t seed) {
  if (log_scores.empty()) throw std::invalid_argument("choose: no scores");
  const double best = *std::max_element(log_scores.begin(), log_scores.end());
  if (best == kNegInf || std::isnan(best)) throw std::runtime_error("choose: no candidate with positive score");
  if (mode == DecisionRule::map) {
    return static_cast<std::size_t>(std::find(log_scores.begin(), log_scores.end(), best) - log_scores.begin());
  }
  std::vector<double> w(log_scores.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp2(log_scores[i] - best);
  std::mt19937_64 rng(seed);
  return draw(w, uniform01(rng));
}

Utterance reconstruct(const ListenerAgent& agent, const Utterance& observed, std::uint64_t seed) {
  if (observed.empty() && !agent.hypothesis_space) throw std::invalid_argument("reconstruct: empty observation");
  Posterior post;
  try {
    post = posterior(agent, observed);
  } catch (const NoSupportError&) {
    if (agent.hypothesis_space) throw;
    ListenerAgent wide = agent;
    wide.candidates.beam_width = static_cast<int>(agent.noise->vocabulary().size());
    wide.candidates.max_candidates = agent.candidates.max_candidates * 16;
    try {
      post = posterior(wide, observed);
    } catch (const NoSupportError&) {
      return observed;
    }
  }
  std::vector<double> scores(post.hypotheses.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = post.log_likelihood[i] + post.log_prior[i];
  return post.hypotheses[choose(scores, agent.mode, seed)];
}

Utterance step_chain(const ListenerAgent& agent, const Utterance& u, std::uint64_t seed) {
  Corrupted c = corrupt(*agent.noise, u, derive_seed(seed, {0}));
  if (c.degenerate && !agent.hypothesis_space) return c.utterance;
  return reconstruct(agent, c.utterance, derive_seed(seed, {1}));
}

std::vector<Utterance> enumerate_utterances(const Vocabulary& vocab, std::size_t lo, std::size_t hi) {
  std::vector<WordId> words;
  for (std::size_t w = 0; w < vocab.size(); ++w) {
    if (static_cast<WordId>(w) != vocab.unk_id()) words.push_back(static_cast<WordId>(w));
  }
  std::vector<Utterance> out;
  std::vector<std::vector<WordId>> layer = {{}};
  for (std::size_t len = 0; len <= hi; ++len) {
    if (len >= lo) {
      for (const auto& t : layer) out.push_back(make_utterance(vocab, t));
    }
    if (len == hi) break;
    std::vector<std::vector<WordId>> next;
    for (const auto& t : layer) {
      for (WordId w : words) {
        auto x = t;
        x.push_back(w);
        next.push_back(std::move(x));
      }
    }
    layer = std::move(next);
  }
  return out;
}

TransitionMatrix transition_matrix(const ListenerAgent& agent, std::size_t max_observed) {
  if (!agent.hypothesis_space) throw std::invalid_argument("transition_matrix: agent has no fixed hypothesis space");
  const auto& vocab = agent.noise->vocabulary();
  TransitionMatrix t;
  t.states = *agent.hypothesis_space;
  std::sort(t.states.begin(), t.states.end(), [&](const Utterance& a, const Utterance& b) { return lexicographic_less(vocab, a, b); });
  const std::size_t n = t.states.size();
  t.p.assign(n, std::vector<double>(n, 0.0));
  for (const auto& d : enumerate_utterances(vocab, 0, max_observed)) {
    std::vector<double> lik(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      double ll = obs_likelihood(*agent.noise, d, t.states[i]);
      lik[i] = ll == kNegInf ? 0.0 : std::exp2(ll);
      any = any || lik[i] > 0.0;
    }
    if (!any) continue;
    Posterior post = posterior(agent, d);
    if (agent.mode == DecisionRule::map) {
      std::vector<double> scores(n);
      for (std::size_t j = 0; j < n; ++j) scores[j] = post.log_likelihood[j] + post.log_prior[j];
      std::size_t pick = choose(scores, DecisionRule::map, 0);
      std::fill(post.prob.begin(), post.prob.end(), 0.0);
      post.prob[pick] = 1.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (lik[i] == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) t.p[i][j] += lik[i] * post.prob[j];
    }
  }
  return t;
}

}  // namespace telephone
