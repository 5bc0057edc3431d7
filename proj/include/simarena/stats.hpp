#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simarena/error.hpp"

namespace simarena::stats {

// ---------------------------------------------------------------------------
// Rank transforms and correlations
// ---------------------------------------------------------------------------

/// Average (fractional) ranks, 1-based; ties share the mean of the rank
/// positions they occupy.
std::vector<double> average_ranks(std::span<const double> x);

/// Pearson's r. Throws ErrorKind::Argument on length mismatch or n < 2,
/// ErrorKind::Validation when either vector is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Spearman's rho: Pearson over average-rank transforms.
double spearman(std::span<const double> x, std::span<const double> y);

/// Kendall's tau-b (tie-corrected pair counting).
double kendall(std::span<const double> x, std::span<const double> y);

struct CorrelationTriple {
  double spearman = 0.0;
  double pearson = 0.0;
  double kendall = 0.0;
  int n = 0;
};

/// All three correlations, or nullopt when undefined (n < 2 or a constant
/// vector). Undefined results are represented explicitly, never as NaN.
std::optional<CorrelationTriple> correlation_triple(std::span<const double> x,
                                                    std::span<const double> y);

// ---------------------------------------------------------------------------
// Rating normalization
// ---------------------------------------------------------------------------

struct RatingRecord {
  std::string annotator_id;
  std::string conversation_id;
  double raw = 0.0;  // 1-10
  std::optional<double> normalized;
};

/// Z-score normalization per annotator. Annotators with more than
/// `pool_threshold` ratings are normalized against their own mean and
/// population standard deviation; the rest are pooled into a single group
/// and normalized against the pool. Zero-variance groups map to all zeros.
std::vector<RatingRecord> zscore_normalize(std::vector<RatingRecord> ratings,
                                           int pool_threshold = 2);

// ---------------------------------------------------------------------------
// Aggregation levels
// ---------------------------------------------------------------------------

struct GroupKey {
  std::string model;
  std::string stratum;  // difficulty for math, doc_type for documents

  auto operator<=>(const GroupKey&) const = default;
};

struct AlignedPair {
  double human = 0.0;
  double sim = 0.0;
  GroupKey key;
};

struct LevelResult {
  std::optional<CorrelationTriple> corr;  // nullopt when undefined
  int n = 0;
  bool low_n = false;  // n defined but < 3
};

struct LevelReport {
  LevelResult instance;
  LevelResult intermediate;  // per (model, stratum) means
  LevelResult system;        // per model means
};

LevelReport aggregate_levels(std::span<const AlignedPair> pairs);

// ---------------------------------------------------------------------------
// Outcome alignment
// ---------------------------------------------------------------------------

enum class Correctness { Correct, Incorrect };

struct MacroF1 {
  double f1_correct = 0.0;
  double f1_incorrect = 0.0;
  double macro = 0.0;
};

/// Human labels are ground truth, simulator labels the prediction.
/// Per-class F1 with 0/0 defined as 0.
MacroF1 macro_f1(std::span<const Correctness> human,
                 std::span<const Correctness> sim);

// ---------------------------------------------------------------------------
// Turing deviation
// ---------------------------------------------------------------------------

struct TuringDeviation {
  double accuracy_percent = 0.0;  // p
  double deviation = 0.0;         // |p - 50|
  int n_trials = 0;
};

TuringDeviation turing_deviation(int picked_real, int n_trials);

// ---------------------------------------------------------------------------
// Significance tests
// ---------------------------------------------------------------------------

struct WilliamsResult {
  double t = 0.0;
  double p_two_sided = 1.0;
  int df = 0;
};

/// Williams' t for comparing two dependent correlations r12 and r13 that
/// share variable 1, with r23 the correlation of the two competing
/// predictors. df = n - 3.
WilliamsResult williams_test(double r12, double r13, double r23, int n);

/// Exact McNemar test on discordant pair counts: two-sided binomial
/// p = min(1, 2 * P(X <= min(b, c))) with X ~ Binomial(b + c, 1/2).
double mcnemar_exact(int b, int c);

/// Regularized incomplete beta function I_x(a, b); exposed because the
/// Student-t tail is computed through it.
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value for a Student-t statistic with df degrees of freedom.
double student_t_two_sided_p(double t, int df);

// ---------------------------------------------------------------------------
// Leaderboard
// ---------------------------------------------------------------------------

struct LeaderboardRow {
  std::string model;
  std::map<std::string, double> metrics;
  double mean_z = 0.0;
};

/// Ranks models by the mean z-score across the named metrics (population
/// std per metric across models). Descending by mean_z, ties broken by
/// model id. Throws ErrorKind::Argument when a model is missing a metric.
std::vector<LeaderboardRow> leaderboard(
    const std::map<std::string, std::map<std::string, double>>& table,
    const std::vector<std::string>& metric_names);

// ---------------------------------------------------------------------------
// Rater alignment & self-bias
// ---------------------------------------------------------------------------

struct SelfBiasCell {
  std::string rater;
  std::string assistant;
  double mean_rating = 0.0;
  int n = 0;
  bool own_family = false;
};

struct RaterRating {
  std::string rater;
  std::string assistant;
  double rating = 0.0;
};

struct RaterAlignmentReport {
  LevelReport alignment;
  std::vector<SelfBiasCell> self_bias;  // sorted by (rater, assistant)
};

/// Alignment of one rater with normalized human ratings plus the per-rater
/// mean-rating table used to eyeball self-bias. `same_family(rater,
/// assistant)` marks the rater's own assistant rows; no statistical decision
/// is taken here.
RaterAlignmentReport rater_alignment(
    std::span<const AlignedPair> pairs, std::span<const RaterRating> ratings,
    const std::function<bool(const std::string&, const std::string&)>&
        same_family);

}  // namespace simarena::stats
