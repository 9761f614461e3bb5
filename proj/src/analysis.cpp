#include "telephone/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "telephone/random.hpp"

namespace telephone {

namespace {

std::vector<std::size_t> ascending_order(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

// bucket = floor(k * rank / n), ties sharing the bucket of their lowest rank
std::vector<int> rank_buckets(const std::vector<double>& v, int k) {
  auto order = ascending_order(v);
  const std::size_t n = v.size();
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t i = order[r];
    if (r > 0 && v[i] == v[order[r - 1]]) {
      out[i] = out[order[r - 1]];
    } else {
      out[i] = static_cast<int>(static_cast<std::size_t>(k) * r / n);
    }
  }
  return out;
}

double log1pexp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// first column (in order) that adds no rank to the ones before it
std::optional<std::size_t> first_collinear(const Eigen::MatrixXd& a) {
  for (Eigen::Index k = 1; k <= a.cols(); ++k) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a.leftCols(k));
    qr.setThreshold(1e-10);
    if (qr.rank() < k) return static_cast<std::size_t>(k - 1);
  }
  return std::nullopt;
}

std::string column_name(const std::vector<std::string>& names, std::size_t k) {
  return k < names.size() ? names[k] : "column " + std::to_string(k);
}

}  // namespace

// ---------------------------------------------------------------------------
// Trajectories and convergence

std::vector<std::vector<double>> chain_surprisals(const std::vector<std::vector<std::string>>& chains,
                                                  const LanguageModel& model) {
  std::vector<std::vector<double>> out;
  for (const auto& chain : chains) {
    std::vector<double> row;
    for (const auto& text : chain) row.push_back(avg_per_word_surprisal(model, tokenize(text)));
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<TrajectoryPoint> surprisal_trajectory(const std::vector<std::vector<std::string>>& chains,
                                                  const LanguageModel& model, const std::string& model_id) {
  auto s = chain_surprisals(chains, model);
  std::size_t gens = 0;
  for (const auto& row : s) gens = std::max(gens, row.size());
  std::vector<TrajectoryPoint> out;
  for (std::size_t g = 0; g < gens; ++g) {
    std::vector<double> vals;
    for (const auto& row : s) {
      if (g < row.size() && std::isfinite(row[g])) vals.push_back(row[g]);
    }
    if (vals.empty()) continue;
    TrajectoryPoint p;
    p.model = model_id;
    p.generation = static_cast<int>(g);
    p.count = vals.size();
    p.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    if (vals.size() > 1) {
      double ss = 0.0;
      for (double v : vals) ss += (v - p.mean) * (v - p.mean);
      p.se = std::sqrt(ss / static_cast<double>(vals.size() - 1)) / std::sqrt(static_cast<double>(vals.size()));
    }
    out.push_back(p);
  }
  return out;
}

SignTest surprisal_sign_test(const std::vector<std::vector<double>>& surprisals, int from, int to) {
  SignTest t;
  t.from = from;
  t.to = to;
  const auto a = static_cast<std::size_t>(from), b = static_cast<std::size_t>(to);
  for (const auto& row : surprisals) {
    if (a >= row.size() || b >= row.size() || !std::isfinite(row[a]) || !std::isfinite(row[b])) continue;
    if (row[b] < row[a]) ++t.decreases;
    else if (row[b] > row[a]) ++t.increases;
    else ++t.ties;
  }
  const std::size_t n = t.decreases + t.increases;
  // upper binomial tail in log space
  double p = 0.0;
  for (std::size_t k = t.decreases; k <= n; ++k) {
    double lc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(static_cast<double>(n - k) + 1.0);
    p += std::exp(lc - static_cast<double>(n) * std::log(2.0));
  }
  t.p_value = std::min(1.0, p);
  return t;
}

QuartileGroups quartile_groups(const std::vector<double>& initial_logprobs) {
  if (initial_logprobs.size() < 4) throw std::invalid_argument("quartile_groups needs at least 4 chains");
  QuartileGroups q;
  q.group_of = rank_buckets(initial_logprobs, 4);
  for (std::size_t i = 0; i < q.group_of.size(); ++i) q.groups[static_cast<std::size_t>(q.group_of[i])].push_back(i);
  const auto [lo, hi] = std::minmax_element(initial_logprobs.begin(), initial_logprobs.end());
  if (*lo == *hi) q.warning = "all initial values are equal; every chain is in the first quartile";
  return q;
}

std::vector<ConvergencePoint> interquartile_variance_ratio(const std::vector<std::vector<double>>& surprisals,
                                                           const QuartileGroups& groups, const std::string& model_id) {
  std::size_t gens = 0;
  for (const auto& row : surprisals) gens = std::max(gens, row.size());
  std::vector<ConvergencePoint> out;
  double base = 0.0;
  for (std::size_t g = 0; g < gens; ++g) {
    ConvergencePoint p;
    p.model = model_id;
    p.generation = static_cast<int>(g);
    p.present = true;
    for (std::size_t q = 0; q < 4; ++q) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t c : groups.groups[q]) {
        if (c < surprisals.size() && g < surprisals[c].size() && std::isfinite(surprisals[c][g])) {
          sum += surprisals[c][g];
          ++n;
        }
      }
      if (n == 0) {
        p.present = false;
        break;
      }
      p.group_means[q] = sum / static_cast<double>(n);
    }
    if (p.present) {
      double m = (p.group_means[0] + p.group_means[1] + p.group_means[2] + p.group_means[3]) / 4.0;
      for (double x : p.group_means) p.variance += (x - m) * (x - m) / 4.0;
    }
    if (g == 0) {
      if (!p.present) throw std::runtime_error("generation 0 is missing a quartile group");
      if (p.variance == 0.0) throw std::runtime_error("quartile groups are identical at generation 0 (degenerate)");
      base = p.variance;
    }
    if (p.present) p.ratio = g == 0 ? 1.0 : p.variance / base;
    out.push_back(p);
  }
  return out;
}

std::vector<ConvergencePoint> convergence_report(const std::vector<std::vector<std::string>>& chains,
                                                 const LanguageModel& model, const std::string& model_id) {
  std::vector<double> initial;
  for (const auto& c : chains) {
    if (c.empty()) throw std::invalid_argument("chain without a stimulus");
    initial.push_back(model.sentence_logprob(tokenize(c[0])));
  }
  return interquartile_variance_ratio(chain_surprisals(chains, model), quartile_groups(initial), model_id);
}

// ---------------------------------------------------------------------------
// Stimulus selection

bool acceptable_stimulus(const std::vector<std::string>& words) {
  static const std::set<std::string> question_openers = {"who",  "what", "when",  "where", "why",    "how",
                                                         "which", "whose", "is",  "are",   "was",    "were",
                                                         "do",   "does", "did",   "can",   "could",  "would",
                                                         "will", "should", "shall", "have", "has",   "am"};
  if (words.empty()) return false;
  if (question_openers.count(words[0])) return false;
  for (const auto& w : words) {
    for (char c : w) {
      if (c == '?' || c == '-' || c == '\'' || std::isdigit(static_cast<unsigned char>(c))) return false;
    }
    if (w.find("\xe2\x80\x99") != std::string::npos) return false;  // right single quote
    if (w == "n't") return false;
  }
  return true;
}

std::vector<int> rank_tranches(const std::vector<double>& values, int tranches) {
  if (tranches < 1) throw std::invalid_argument("tranches must be >= 1");
  return rank_buckets(values, tranches);
}

StimulusSelection select_stimuli(const std::vector<std::vector<std::string>>& corpus, const LanguageModel& unigram,
                                 const LanguageModel& trigram, const SelectOptions& opts) {
  std::vector<std::vector<std::string>> pool;
  std::set<std::string> seen;
  for (const auto& s : corpus) {
    if (!acceptable_stimulus(s)) continue;
    if (seen.insert(join_words(s)).second) pool.push_back(s);
  }
  if (pool.empty()) throw std::runtime_error("select_stimuli: no acceptable sentences");

  auto mode_of = [](const std::map<int, int>& counts) {
    int best = 0, best_n = -1;
    for (auto [k, n] : counts) {
      if (n > best_n) best = k, best_n = n;
    }
    return best;
  };
  StimulusSelection sel;
  sel.words = opts.words;
  if (sel.words == 0) {
    std::map<int, int> counts;
    for (const auto& s : pool) ++counts[static_cast<int>(s.size())];
    sel.words = mode_of(counts);
  }
  sel.chars = opts.chars;
  if (sel.chars == 0) {
    std::map<int, int> counts;
    for (const auto& s : pool) {
      if (static_cast<int>(s.size()) == sel.words) ++counts[static_cast<int>(join_words(s).size())];
    }
    sel.chars = mode_of(counts);
  }

  std::vector<std::string> texts;
  std::vector<double> uni, tri;
  for (const auto& s : pool) {
    if (static_cast<int>(s.size()) != sel.words) continue;
    std::string t = join_words(s);
    if (sel.chars > 0 && static_cast<int>(t.size()) != sel.chars) continue;
    double u = unigram.sentence_logprob(s), r = trigram.sentence_logprob(s);
    if (!std::isfinite(u) || !std::isfinite(r)) continue;
    texts.push_back(t);
    uni.push_back(u);
    tri.push_back(r);
  }
  sel.cohort_size = texts.size();
  if (texts.empty()) throw std::runtime_error("select_stimuli: empty length cohort");

  auto uni_t = rank_tranches(uni, opts.tranches), tri_t = rank_tranches(tri, opts.tranches);
  std::set<std::size_t> taken;
  const std::vector<std::pair<std::string, const std::vector<int>*>> models = {{"unigram", &uni_t},
                                                                                {"trigram", &tri_t}};
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (int t = 0; t < opts.tranches; ++t) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < texts.size(); ++i) {
        if ((*models[m].second)[i] == t) members.push_back(i);
      }
      // seeded Fisher-Yates, spelled out so the order is the same everywhere
      std::mt19937_64 rng(derive_seed(opts.seed, {m, static_cast<std::uint64_t>(t)}));
      for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng() % i]);
      auto it = std::find_if(members.begin(), members.end(), [&](std::size_t i) { return !taken.count(i); });
      if (it == members.end()) {
        sel.empty_tranches.push_back(models[m].first + ":" + std::to_string(t));
        continue;
      }
      taken.insert(*it);
      sel.chosen.push_back({texts[*it], models[m].first, t, uni[*it], tri[*it], uni_t[*it], tri_t[*it]});
    }
  }
  return sel;
}

// ---------------------------------------------------------------------------
// Regression

Eigen::VectorXd residualize(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const std::vector<std::string>& names) {
  if (x.rows() != y.size()) throw std::invalid_argument("residualize: row count mismatch");
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  if (auto k = first_collinear(a)) {
    if (*k == 0) throw std::runtime_error("residualize: no rows");
    throw std::runtime_error("residualize: column '" + column_name(names, *k - 1) + "' is collinear");
  }
  Eigen::VectorXd beta = a.colPivHouseholderQr().solve(y);
  return y - a * beta;
}

double LogisticProblem::log_likelihood(const Eigen::VectorXd& w) const {
  Eigen::VectorXd eta = z * w;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - log1pexp(eta[i]);
  return ll;
}

double LogisticProblem::objective(const Eigen::VectorXd& w) const {
  return log_likelihood(w) - 0.5 * (penalty.array() * w.array().square()).sum();
}

Eigen::VectorXd LogisticProblem::gradient(const Eigen::VectorXd& w) const {
  Eigen::VectorXd eta = z * w;
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) r[i] = y[i] - sigmoid(eta[i]);
  return z.transpose() * r - (penalty.array() * w.array()).matrix();
}

Eigen::MatrixXd LogisticProblem::hessian(const Eigen::VectorXd& w) const {
  Eigen::VectorXd eta = z * w;
  Eigen::VectorXd v(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    double p = sigmoid(eta[i]);
    v[i] = p * (1 - p);
  }
  Eigen::MatrixXd h = -(z.transpose() * v.asDiagonal() * z);
  h.diagonal() -= penalty;
  return h;
}

LogisticProblem logistic_problem(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& listener,
                                 const std::vector<int>& speaker, const LogisticOptions& opts,
                                 std::vector<int>* listener_levels, std::vector<int>* speaker_levels) {
  const Eigen::Index n = x.rows();
  if (y.size() != n) throw std::invalid_argument("logistic: label count mismatch");
  auto levels = [&](const std::vector<int>& ids, bool on, const char* what) {
    std::vector<int> lv;
    if (!on) return lv;
    if (static_cast<Eigen::Index>(ids.size()) != n) throw std::invalid_argument(std::string("logistic: missing ") + what + " ids");
    lv = ids;
    std::sort(lv.begin(), lv.end());
    lv.erase(std::unique(lv.begin(), lv.end()), lv.end());
    return lv;
  };
  auto ll = levels(listener, opts.listener_intercepts, "listener");
  auto sl = levels(speaker, opts.speaker_intercepts, "speaker");
  if ((!ll.empty() || !sl.empty()) && opts.group_l2 <= 0.0) {
    throw std::invalid_argument("group intercepts need a positive group_l2 penalty");
  }
  const Eigen::Index p = 1 + x.cols() + static_cast<Eigen::Index>(ll.size() + sl.size());
  LogisticProblem prob;
  prob.z = Eigen::MatrixXd::Zero(n, p);
  prob.z.col(0).setOnes();
  prob.z.middleCols(1, x.cols()) = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto ui = static_cast<std::size_t>(i);
    if (!ll.empty()) {
      auto k = std::lower_bound(ll.begin(), ll.end(), listener[ui]) - ll.begin();
      prob.z(i, 1 + x.cols() + k) = 1.0;
    }
    if (!sl.empty()) {
      auto k = std::lower_bound(sl.begin(), sl.end(), speaker[ui]) - sl.begin();
      prob.z(i, 1 + x.cols() + static_cast<Eigen::Index>(ll.size()) + k) = 1.0;
    }
  }
  prob.y = y;
  prob.penalty = Eigen::VectorXd::Constant(p, opts.group_l2);
  prob.penalty[0] = 0.0;
  prob.penalty.segment(1, x.cols()).setConstant(opts.l2);
  if (listener_levels) *listener_levels = ll;
  if (speaker_levels) *speaker_levels = sl;
  return prob;
}

LogisticModel fit_logistic(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                           const std::vector<int>& listener, const std::vector<int>& speaker,
                           const LogisticOptions& opts) {
  if (static_cast<Eigen::Index>(names.size()) != x.cols()) throw std::invalid_argument("logistic: term names mismatch");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw std::invalid_argument("logistic: labels must be 0 or 1");
  }
  const double pos = y.sum();
  if (pos == 0.0 || pos == static_cast<double>(y.size())) throw std::invalid_argument("logistic: need both classes");

  std::vector<int> ll, sl;
  LogisticProblem prob = logistic_problem(x, y, listener, speaker, opts, &ll, &sl);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(prob.z.cols());
  LogisticModel m;
  double obj = prob.objective(w);
  m.objective_trace.push_back(obj);
  bool converged = false;
  for (int it = 0; it < opts.max_iter; ++it) {
    Eigen::VectorXd g = prob.gradient(w);
    m.grad_norm = g.lpNorm<Eigen::Infinity>();
    if (m.grad_norm < opts.tol) {
      converged = true;
      break;
    }
    if (opts.l2 == 0.0 && prob.log_likelihood(w) > -1e-6 * static_cast<double>(y.size())) break;
    Eigen::MatrixXd neg_h = -prob.hessian(w);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
    Eigen::VectorXd step = ldlt.solve(g);
    if (!step.allFinite()) break;
    // Newton decrement; the gradient alone stalls on rounding for large n
    if (g.dot(step) < opts.decrement_tol) {
      converged = true;
      break;
    }
    double t = 1.0, next = prob.objective(w + step);
    while (next < obj && t > 1e-12) {
      t *= 0.5;
      next = prob.objective(w + t * step);
    }
    if (next < obj) break;
    w += t * step;
    obj = next;
    m.objective_trace.push_back(obj);
    m.iterations = it + 1;
  }
  if (!converged) {
    if (opts.l2 == 0.0) {
      throw std::runtime_error("logistic fit diverged (the classes may be perfectly separated); set a positive l2 penalty");
    }
    throw std::runtime_error("logistic fit did not converge in " + std::to_string(opts.max_iter) + " iterations");
  }

  const Eigen::Index p = 1 + x.cols();
  Eigen::MatrixXd cov = (-prob.hessian(w)).inverse();
  m.terms.push_back("(intercept)");
  m.terms.insert(m.terms.end(), names.begin(), names.end());
  m.beta = w.head(p);
  m.se = cov.diagonal().head(p).cwiseSqrt();
  m.z = m.beta.cwiseQuotient(m.se);
  for (std::size_t k = 0; k < ll.size(); ++k) m.listener_effects[ll[k]] = w[p + static_cast<Eigen::Index>(k)];
  for (std::size_t k = 0; k < sl.size(); ++k) {
    m.speaker_effects[sl[k]] = w[p + static_cast<Eigen::Index>(ll.size() + k)];
  }
  m.log_likelihood = prob.log_likelihood(w);
  m.k = static_cast<int>(p) + (opts.listener_intercepts ? 1 : 0) + (opts.speaker_intercepts ? 1 : 0);
  m.aic = 2.0 * m.k - 2.0 * m.log_likelihood;
  return m;
}

Eigen::VectorXd LogisticModel::predict(const Eigen::MatrixXd& x, const std::vector<int>& listener,
                                       const std::vector<int>& speaker) const {
  Eigen::VectorXd eta = (x * beta.tail(beta.size() - 1)).array() + beta[0];
  Eigen::VectorXd p(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    auto ui = static_cast<std::size_t>(i);
    if (ui < listener.size()) {
      if (auto it = listener_effects.find(listener[ui]); it != listener_effects.end()) eta[i] += it->second;
    }
    if (ui < speaker.size()) {
      if (auto it = speaker_effects.find(speaker[ui]); it != speaker_effects.end()) eta[i] += it->second;
    }
    p[i] = sigmoid(eta[i]);
  }
  return p;
}

double LinearModel::coefficient(const std::string& term) const {
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i] == term) return beta[static_cast<Eigen::Index>(i)];
  }
  throw std::out_of_range("no term " + term);
}

LinearModel fit_linear(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw std::invalid_argument("linear: row count mismatch");
  if (static_cast<Eigen::Index>(names.size()) != x.cols()) throw std::invalid_argument("linear: term names mismatch");
  if (auto k = first_collinear(x)) throw std::runtime_error("linear: column '" + column_name(names, *k) + "' is collinear");
  LinearModel m;
  m.terms = names;
  m.n = static_cast<std::size_t>(x.rows());
  m.beta = x.colPivHouseholderQr().solve(y);
  Eigen::VectorXd r = y - x * m.beta;
  m.rss = r.squaredNorm();
  const double n = static_cast<double>(x.rows()), p = static_cast<double>(x.cols());
  m.sigma2 = n > p ? m.rss / (n - p) : 0.0;
  Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
  m.se = (m.sigma2 * xtx_inv.diagonal()).cwiseSqrt();
  m.log_likelihood = m.rss > 0 ? -0.5 * n * (std::log(2 * M_PI * m.rss / n) + 1.0) : std::numeric_limits<double>::infinity();
  m.aic = 2.0 * (p + 1.0) - 2.0 * m.log_likelihood;
  return m;
}

LinearModel fit_linear_fe(const std::vector<SurprisalRecord>& rows, bool chain_effects) {
  if (rows.empty()) throw std::invalid_argument("fit_linear_fe: no rows");
  std::vector<std::string> names = {"(intercept)",
                                    "generation",
                                    "abstract_structure",
                                    "dataset",
                                    "generation:abstract_structure",
                                    "generation:dataset"};
  std::vector<std::size_t> chains;
  if (chain_effects) {
    for (const auto& r : rows) chains.push_back(r.chain);
    std::sort(chains.begin(), chains.end());
    chains.erase(std::unique(chains.begin(), chains.end()), chains.end());
    for (std::size_t k = 1; k < chains.size(); ++k) names.push_back("chain[" + std::to_string(chains[k]) + "]");
    for (std::size_t k = 1; k < chains.size(); ++k) names.push_back("generation:chain[" + std::to_string(chains[k]) + "]");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index nc = chains.empty() ? 0 : static_cast<Eigen::Index>(chains.size()) - 1;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(names.size()));
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    const double g = r.generation;
    x.row(i).head(6) << 1.0, g, r.abstract_structure, r.dataset, g * r.abstract_structure, g * r.dataset;
    if (nc > 0) {
      auto k = std::lower_bound(chains.begin(), chains.end(), r.chain) - chains.begin();
      if (k > 0) {
        x(i, 6 + k - 1) = 1.0;
        x(i, 6 + nc + k - 1) = g;
      }
    }
    y[i] = r.surprisal;
  }
  // terms that add no rank are left out: a constant indicator, or chain
  // terms for chains nested in one structure/dataset cell
  std::vector<Eigen::Index> keep = {0, 1};
  Eigen::MatrixXd kept = x.leftCols(2);
  Eigen::Index rank = 2;
  for (Eigen::Index k = 2; k < x.cols(); ++k) {
    Eigen::MatrixXd trial(n, kept.cols() + 1);
    trial << kept, x.col(k);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(trial.rows(), trial.cols());
    qr.setThreshold(1e-10);
    qr.compute(trial);
    if (qr.rank() > rank) {
      kept = std::move(trial);
      keep.push_back(k);
      ++rank;
    }
  }
  std::vector<std::string> kept_names;
  for (auto k : keep) kept_names.push_back(names[static_cast<std::size_t>(k)]);
  return fit_linear(kept, kept_names, y);
}

// ---------------------------------------------------------------------------
// ROC, correlation, clustering

namespace {

void check_binary(const std::vector<double>& scores, const std::vector<int>& labels, std::size_t& pos, std::size_t& neg) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc: score and label counts differ");
  pos = neg = 0;
  for (int l : labels) {
    if (l == 1) ++pos;
    else if (l == 0) ++neg;
    else throw std::invalid_argument("roc: labels must be 0 or 1");
  }
  if (pos == 0 || neg == 0) throw std::domain_error("roc: AUC is undefined with a single class");
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::size_t pos, neg;
  check_binary(scores, labels, pos, neg);
  auto ranks = average_ranks(scores);
  double sum = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (labels[i] == 1) sum += ranks[i];
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (sum - p * (p + 1) / 2) / (p * q);
}

double roc_auc_trapezoid(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::size_t pos, neg;
  check_binary(scores, labels, pos, neg);
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0.0, tpr = 0.0, fpr = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t tp = 0, fp = 0, j = i;
    for (; j < idx.size() && scores[idx[j]] == scores[idx[i]]; ++j) (labels[idx[j]] == 1 ? tp : fp)++;
    double ntpr = tpr + static_cast<double>(tp) / static_cast<double>(pos);
    double nfpr = fpr + static_cast<double>(fp) / static_cast<double>(neg);
    area += (nfpr - fpr) * (tpr + ntpr) / 2;
    tpr = ntpr;
    fpr = nfpr;
    i = j;
  }
  return area;
}

Correlation pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson_r: length mismatch");
  if (x.size() < 3) throw std::invalid_argument("pearson_r: need at least 3 points");
  const double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw std::domain_error("pearson_r: zero variance");
  double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return {r, r * r};
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  auto order = ascending_order(v);
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson_r(average_ranks(x), average_ranks(y)).r;
}

SimilarityMatrix spearman_matrix(const std::map<std::string, std::vector<double>>& per_model) {
  SimilarityMatrix s;
  std::vector<const std::vector<double>*> cols;
  for (const auto& [name, v] : per_model) {
    s.names.push_back(name);
    cols.push_back(&v);
  }
  const auto k = static_cast<Eigen::Index>(cols.size());
  for (const auto* c : cols) {
    if (c->size() != cols[0]->size()) throw std::invalid_argument("spearman_matrix: vectors differ in length");
    if (c->size() < 3) throw std::invalid_argument("spearman_matrix: need at least 3 sentences");
  }
  s.rho = Eigen::MatrixXd::Identity(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      double r = spearman_rho(*cols[static_cast<std::size_t>(i)], *cols[static_cast<std::size_t>(j)]);
      s.rho(i, j) = s.rho(j, i) = r;
    }
  }
  return s;
}

Dendrogram ward_dendrogram(const Eigen::MatrixXd& d) {
  const Eigen::Index n = d.rows();
  if (d.cols() != n) throw std::invalid_argument("ward: matrix is not square");
  if (n < 1) throw std::invalid_argument("ward: empty matrix");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d(i, i) != 0.0) throw std::invalid_argument("ward: nonzero diagonal");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (d(i, j) != d(j, i)) throw std::invalid_argument("ward: matrix is asymmetric");
      if (!(d(i, j) >= 0.0)) throw std::invalid_argument("ward: negative dissimilarity");
    }
  }
  // slot i holds cluster ids[i]
  Eigen::MatrixXd dist = d;
  std::vector<int> ids(static_cast<std::size_t>(n)), size(static_cast<std::size_t>(n), 1);
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<bool> alive(static_cast<std::size_t>(n), true);
  std::vector<std::pair<int, int>> children;
  Dendrogram out;
  for (Eigen::Index step = 0; step + 1 < n; ++step) {
    Eigen::Index bi = -1, bj = -1;
    double best = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!alive[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (!alive[static_cast<std::size_t>(j)]) continue;
        auto lo = std::min(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
        auto hi = std::max(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
        bool better = bi < 0 || dist(i, j) < best;
        if (!better && dist(i, j) == best) {
          auto blo = std::min(ids[static_cast<std::size_t>(bi)], ids[static_cast<std::size_t>(bj)]);
          auto bhi = std::max(ids[static_cast<std::size_t>(bi)], ids[static_cast<std::size_t>(bj)]);
          better = std::make_pair(lo, hi) < std::make_pair(blo, bhi);
        }
        if (better) bi = i, bj = j, best = dist(i, j);
      }
    }
    auto ui = static_cast<std::size_t>(bi), uj = static_cast<std::size_t>(bj);
    const double ni = size[ui], nj = size[uj];
    for (Eigen::Index k = 0; k < n; ++k) {
      auto uk = static_cast<std::size_t>(k);
      if (!alive[uk] || k == bi || k == bj) continue;
      const double nk = size[uk];
      double v = ((ni + nk) * dist(bi, k) + (nj + nk) * dist(bj, k) - nk * best) / (ni + nj + nk);
      dist(bi, k) = dist(k, bi) = v;
    }
    Merge m;
    m.a = std::min(ids[ui], ids[uj]);
    m.b = std::max(ids[ui], ids[uj]);
    m.height = best;
    m.size = size[ui] + size[uj];
    out.merges.push_back(m);
    children.push_back({m.a, m.b});
    ids[ui] = static_cast<int>(n + step);
    size[ui] = m.size;
    alive[uj] = false;
  }
  // leaves left to right
  std::vector<int> stack = {static_cast<int>(n == 1 ? 0 : 2 * n - 2)};
  while (!stack.empty()) {
    int c = stack.back();
    stack.pop_back();
    if (c < n) {
      out.leaf_order.push_back(c);
    } else {
      auto [a, b] = children[static_cast<std::size_t>(c - n)];
      stack.push_back(b);
      stack.push_back(a);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Word-change predictors

const std::vector<std::string> kNormColumns = {"aoa", "concreteness", "n_phonemes", "n_syllables", "pld20"};

std::unordered_map<std::string, WordNorms> read_norms(const CsvTable& table) {
  const std::size_t w = table.column("word");
  std::vector<std::size_t> cols;
  for (const auto& c : kNormColumns) cols.push_back(table.column(c));
  std::unordered_map<std::string, WordNorms> out;
  for (const auto& row : table.rows) {
    double v[5];
    bool ok = true;
    for (std::size_t k = 0; k < 5 && ok; ++k) {
      const std::string& cell = row[cols[k]];
      if (cell.empty()) {
        ok = false;
        break;
      }
      try {
        std::size_t used = 0;
        v[k] = std::stod(cell, &used);
        ok = used == cell.size() && std::isfinite(v[k]);
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (ok) out[row[w]] = {v[0], v[1], v[2], v[3], v[4]};
  }
  return out;
}

std::vector<Transmission> transmissions(const ChainLog& log) {
  std::map<std::size_t, std::vector<const ChainLogRow*>> by_chain;
  for (const auto& r : log.rows) {
    if (r.state == NodeState::protected_stimulus || r.state == NodeState::accepted) by_chain[r.chain_id].push_back(&r);
  }
  std::vector<Transmission> out;
  for (auto& [id, rows] : by_chain) {
    std::stable_sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->generation < b->generation; });
    for (std::size_t k = 1; k < rows.size(); ++k) {
      out.push_back({rows[k - 1]->transcription, rows[k]->transcription,
                     {id, rows[k]->generation, rows[k]->listener_id, rows[k]->speaker_id}});
    }
  }
  return out;
}

PredictorTable build_predictors(const ChainLog& log, const std::vector<NamedModel>& models,
                                const std::unordered_map<std::string, WordNorms>& norms) {
  if (models.size() < 2) throw std::invalid_argument("build_predictors needs a unigram and a trigram model");
  const bool use_norms = !norms.empty();
  PredictorTable t;
  std::vector<std::vector<double>> surprisal(models.size());
  std::vector<double> position;
  std::vector<WordNorms> word_norms;
  for (const auto& tr : transmissions(log)) {
    auto src = tokenize(tr.source);
    if (src.empty()) continue;
    std::vector<std::vector<double>> lp;
    for (const auto& m : models) lp.push_back(m.model->word_logprobs(src));
    for (const auto& ev : word_change_events(align(src, tokenize(tr.target)), tr.meta)) {
      const auto pos = static_cast<std::size_t>(ev.position - 1);
      bool finite = true;
      for (const auto& v : lp) finite = finite && std::isfinite(v[pos]);
      if (!finite) {
        ++t.dropped_infinite;
        continue;
      }
      WordNorms wn;
      if (use_norms) {
        auto it = norms.find(ev.word);
        if (it == norms.end()) {
          ++t.dropped_missing_norms;
          continue;
        }
        wn = it->second;
      }
      for (std::size_t m = 0; m < models.size(); ++m) surprisal[m].push_back(-lp[m][pos]);
      position.push_back(ev.position);
      word_norms.push_back(wn);
      t.listener.push_back(ev.listener_id);
      t.speaker.push_back(ev.speaker_id);
      t.records.push_back(ev);
    }
  }
  const auto n = static_cast<Eigen::Index>(t.records.size());
  if (n == 0) throw std::runtime_error("build_predictors: no usable word-change rows");

  auto vec = [](const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())); };
  Eigen::VectorXd uni = vec(surprisal[0]);
  Eigen::VectorXd tri = residualize(vec(surprisal[1]), uni, {models[0].id});
  std::vector<Eigen::VectorXd> cols = {uni, tri};
  t.columns = {models[0].id + "_surprisal", models[1].id + "_residual"};
  Eigen::MatrixXd base(n, 2);
  base << vec(surprisal[0]), vec(surprisal[1]);
  for (std::size_t m = 2; m < models.size(); ++m) {
    cols.push_back(residualize(vec(surprisal[m]), base, {models[0].id, models[1].id}));
    t.columns.push_back(models[m].id + "_residual");
  }
  cols.push_back(vec(position));
  t.columns.push_back("position");
  if (use_norms) {
    for (std::size_t k = 0; k < kNormColumns.size(); ++k) {
      Eigen::VectorXd c(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& w = word_norms[static_cast<std::size_t>(i)];
        const double vals[5] = {w.aoa, w.concreteness, w.n_phonemes, w.n_syllables, w.pld20};
        c[i] = vals[k];
      }
      cols.push_back(c);
      t.columns.push_back(kNormColumns[k]);
    }
  }
  t.x.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) t.x.col(static_cast<Eigen::Index>(k)) = cols[k];
  t.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) t.y[i] = t.records[static_cast<std::size_t>(i)].changed;
  return t;
}

}  // namespace telephone
