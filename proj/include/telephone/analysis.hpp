#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "telephone/alignment.hpp"
#include "telephone/chain_engine.hpp"
#include "telephone/io.hpp"
#include "telephone/language_model.hpp"

namespace telephone {

// ---------------------------------------------------------------------------
// Trajectories and convergence

struct TrajectoryPoint {
  std::string model;
  int generation = 0;
  double mean = 0.0;  // average per-word surprisal, bits
  double se = 0.0;    // sample sd / sqrt(count); 0 for a single chain
  std::size_t count = 0;
};

/// chains: accepted transcriptions per chain, index = generation.
std::vector<TrajectoryPoint> surprisal_trajectory(const std::vector<std::vector<std::string>>& chains,
                                                  const LanguageModel& model, const std::string& model_id);

/// Average per-word surprisal of every accepted utterance: [chain][generation].
std::vector<std::vector<double>> chain_surprisals(const std::vector<std::vector<std::string>>& chains,
                                                  const LanguageModel& model);

struct SignTest {
  int from = 0, to = 0;
  std::size_t decreases = 0, increases = 0, ties = 0;
  double p_value = 1.0;  // one-sided: P(at least `decreases` of the untied pairs) at 1/2
};

/// Compares each chain's surprisal at generation `to` with generation `from`.
/// Chains missing either generation or with a non-finite value are skipped.
SignTest surprisal_sign_test(const std::vector<std::vector<double>>& surprisals, int from, int to);

struct QuartileGroups {
  std::array<std::vector<std::size_t>, 4> groups;  // chain indices, lowest values first
  std::vector<int> group_of;                       // per chain
  std::string warning;                             // set when values are all equal
};

/// Chains ranked by value; rank r of n goes to quartile floor(4 r / n), and
/// tied values all take the quartile of their lowest rank.
QuartileGroups quartile_groups(const std::vector<double>& initial_logprobs);

struct ConvergencePoint {
  std::string model;
  int generation = 0;
  bool present = false;  // every group has a chain at this generation
  std::array<double, 4> group_means{};
  double variance = 0.0;  // population variance of the four means
  double ratio = 0.0;     // variance / generation-0 variance
};

/// surprisals: [chain][generation]. Throws std::runtime_error when the
/// generation-0 variance is zero or generation 0 is absent.
std::vector<ConvergencePoint> interquartile_variance_ratio(const std::vector<std::vector<double>>& surprisals,
                                                           const QuartileGroups& groups, const std::string& model_id);

/// Groups chains by the probability of their initial sentence under the model
/// and tracks the spread of quartile means in average surprisal.
std::vector<ConvergencePoint> convergence_report(const std::vector<std::vector<std::string>>& chains,
                                                 const LanguageModel& model, const std::string& model_id);

// ---------------------------------------------------------------------------
// Stimulus selection

struct SelectOptions {
  int tranches = 20;
  int words = 0;       // 0: modal word count
  int chars = 0;       // total characters incl. spaces; 0: modal for the word count, -1: any
  std::uint64_t seed = 1;
};

struct StimulusChoice {
  std::string text;
  std::string model;  // tranche model: unigram or trigram
  int tranche = 0;    // 0-based
  double unigram_logprob = 0.0;
  double trigram_logprob = 0.0;
  int unigram_tranche = 0;
  int trigram_tranche = 0;
};

struct StimulusSelection {
  std::vector<StimulusChoice> chosen;
  std::vector<std::string> empty_tranches;  // "unigram:7"
  std::size_t cohort_size = 0;
  int words = 0;
  int chars = 0;
};

/// Questions, numerals, hyphens and contractions are rejected.
bool acceptable_stimulus(const std::vector<std::string>& words);

/// Tranche of each value by ascending rank, ties sharing their lowest rank.
std::vector<int> rank_tranches(const std::vector<double>& values, int tranches);

StimulusSelection select_stimuli(const std::vector<std::vector<std::string>>& corpus, const LanguageModel& unigram,
                                 const LanguageModel& trigram, const SelectOptions& opts = {});

// ---------------------------------------------------------------------------
// Regression

/// OLS residuals of y on [1, X]. Throws std::runtime_error naming the first
/// column that is collinear with the ones before it.
Eigen::VectorXd residualize(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                            const std::vector<std::string>& names = {});

struct LogisticOptions {
  double l2 = 0.0;        // on fixed effects, not the intercept
  double group_l2 = 1.0;  // on listener and speaker intercepts
  bool listener_intercepts = false;
  bool speaker_intercepts = false;
  double tol = 1e-8;      // gradient infinity norm
  double decrement_tol = 1e-12;  // or g' (-H)^-1 g
  int max_iter = 100;
};

/// Penalized log-likelihood over a full design (intercept and group dummies
/// already expanded) with a per-coefficient penalty weight.
struct LogisticProblem {
  Eigen::MatrixXd z;
  Eigen::VectorXd y;
  Eigen::VectorXd penalty;  // objective subtracts 0.5 * sum penalty_i w_i^2

  double log_likelihood(const Eigen::VectorXd& w) const;
  double objective(const Eigen::VectorXd& w) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& w) const;
};

struct LogisticModel {
  std::vector<std::string> terms;  // "(intercept)" then the predictors
  Eigen::VectorXd beta, se, z;
  std::map<int, double> listener_effects, speaker_effects;
  double log_likelihood = 0.0;
  double aic = 0.0;
  int k = 0;
  int iterations = 0;
  double grad_norm = 0.0;
  std::vector<double> objective_trace;

  /// P(changed = 1). Unknown group ids contribute 0.
  Eigen::VectorXd predict(const Eigen::MatrixXd& x, const std::vector<int>& listener = {},
                          const std::vector<int>& speaker = {}) const;
};

LogisticProblem logistic_problem(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& listener,
                                 const std::vector<int>& speaker, const LogisticOptions& opts,
                                 std::vector<int>* listener_levels = nullptr, std::vector<int>* speaker_levels = nullptr);

/// Newton ascent with step halving, so the objective never decreases.
/// AIC counts fixed coefficients plus one parameter per grouping factor.
LogisticModel fit_logistic(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                           const std::vector<int>& listener = {}, const std::vector<int>& speaker = {},
                           const LogisticOptions& opts = {});

struct LinearModel {
  std::vector<std::string> terms;
  Eigen::VectorXd beta, se;
  double rss = 0.0;
  double sigma2 = 0.0;
  double log_likelihood = 0.0;
  double aic = 0.0;
  std::size_t n = 0;

  double coefficient(const std::string& term) const;
};

/// OLS of y on x (columns used as given; include an intercept column).
LinearModel fit_linear(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const Eigen::VectorXd& y);

struct SurprisalRecord {
  std::size_t chain = 0;
  int generation = 0;
  std::string model;
  double surprisal = 0.0;
  int abstract_structure = 0;
  int dataset = 0;
};

/// Surprisal on generation, structure and dataset indicators and their
/// generation interactions, plus per-chain intercepts and slopes (first chain
/// as reference) when chain_effects is set. Terms beyond the intercept and
/// generation that add no rank to the ones before them are dropped.
LinearModel fit_linear_fe(const std::vector<SurprisalRecord>& rows, bool chain_effects = true);

// ---------------------------------------------------------------------------
// ROC, correlation, clustering

/// Probability a random positive outscores a random negative, ties counting
/// one half. Throws std::domain_error when a class is missing.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);
/// Same quantity by trapezoidal integration of the ROC curve.
double roc_auc_trapezoid(const std::vector<double>& scores, const std::vector<int>& labels);

struct Correlation {
  double r = 0.0;
  double r2 = 0.0;
};

Correlation pearson_r(const std::vector<double>& x, const std::vector<double>& y);

/// 1-based ranks, ties averaged.
std::vector<double> average_ranks(const std::vector<double>& v);
double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

struct SimilarityMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd rho;
};

SimilarityMatrix spearman_matrix(const std::map<std::string, std::vector<double>>& per_model);

struct Merge {
  int a = 0, b = 0;  // cluster ids: leaves 0..n-1, merge k creates n + k
  double height = 0.0;
  int size = 0;
};

struct Dendrogram {
  std::vector<Merge> merges;
  std::vector<int> leaf_order;
};

/// Lance-Williams Ward update applied to the given dissimilarities directly
/// (squared Euclidean input gives twice the increase in within-cluster sum of
/// squares). Ties merge the lowest-numbered pair.
Dendrogram ward_dendrogram(const Eigen::MatrixXd& d);

// ---------------------------------------------------------------------------
// Word-change predictors

struct WordNorms {
  double aoa = 0, concreteness = 0, n_phonemes = 0, n_syllables = 0, pld20 = 0;
};

extern const std::vector<std::string> kNormColumns;

/// CSV with columns word,aoa,concreteness,n_phonemes,n_syllables,pld20.
/// Empty cells leave the word out.
std::unordered_map<std::string, WordNorms> read_norms(const CsvTable& table);

struct NamedModel {
  std::string id;
  std::shared_ptr<const LanguageModel> model;
};

struct PredictorTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;  // changed
  std::vector<int> listener, speaker;
  std::vector<WordChangeRecord> records;  // fitted rows only
  std::size_t dropped_missing_norms = 0;
  std::size_t dropped_infinite = 0;
};

/// models[0] is the unigram, models[1] the trigram; any further model is
/// residualized on both. Transmissions are consecutive accepted utterances.
PredictorTable build_predictors(const ChainLog& log, const std::vector<NamedModel>& models,
                                const std::unordered_map<std::string, WordNorms>& norms);

/// Consecutive accepted pairs with their metadata.
struct Transmission {
  std::string source, target;
  TransmissionMeta meta;
};
std::vector<Transmission> transmissions(const ChainLog& log);

}  // namespace telephone
