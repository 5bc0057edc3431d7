#include "simarena/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace simarena::stats {

namespace {

void require_paired(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(ErrorKind::Argument, "correlation inputs differ in length");
  if (x.size() < 2)
    throw Error(ErrorKind::Argument, "correlation needs at least 2 samples");
}

bool is_constant(std::span<const double> v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] != v[0]) return false;
  return true;
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double population_variance(std::span<const double> v, double mu) {
  double acc = 0.0;
  for (double t : v) acc += (t - mu) * (t - mu);
  return acc / double(v.size());
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    // positions i..j (0-based) share the average of ranks i+1..j+1
    const double shared = (double(i + 1) + double(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require_paired(x, y);
  if (is_constant(x) || is_constant(y))
    throw Error(ErrorKind::Validation,
                "correlation undefined for a constant vector");

  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require_paired(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double kendall(std::span<const double> x, std::span<const double> y) {
  require_paired(x, y);
  if (is_constant(x) || is_constant(y))
    throw Error(ErrorKind::Validation,
                "correlation undefined for a constant vector");

  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;  // tied in both: dropped by tau-b
      if (dx == 0.0)
        ++ties_x;
      else if (dy == 0.0)
        ++ties_y;
      else if (dx * dy > 0.0)
        ++concordant;
      else
        ++discordant;
    }
  }
  const double cd = double(concordant + discordant);
  const double denom =
      std::sqrt((cd + double(ties_x)) * (cd + double(ties_y)));
  return double(concordant - discordant) / denom;
}

std::optional<CorrelationTriple> correlation_triple(
    std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(ErrorKind::Argument, "correlation inputs differ in length");
  if (x.size() < 2 || is_constant(x) || is_constant(y)) return std::nullopt;
  CorrelationTriple t;
  t.spearman = spearman(x, y);
  t.pearson = pearson(x, y);
  t.kendall = kendall(x, y);
  t.n = int(x.size());
  return t;
}

std::vector<RatingRecord> zscore_normalize(std::vector<RatingRecord> ratings,
                                           int pool_threshold) {
  if (ratings.empty()) return ratings;

  std::map<std::string, std::vector<std::size_t>> by_annotator;
  for (std::size_t i = 0; i < ratings.size(); ++i)
    by_annotator[ratings[i].annotator_id].push_back(i);

  // Small annotators share a single pool.
  std::vector<std::size_t> pool;
  for (const auto& [annotator, idx] : by_annotator) {
    if (int(idx.size()) <= pool_threshold)
      pool.insert(pool.end(), idx.begin(), idx.end());
  }

  auto normalize_group = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> vals;
    vals.reserve(idx.size());
    for (auto i : idx) vals.push_back(ratings[i].raw);
    const double mu = mean(vals);
    const double sd = std::sqrt(population_variance(vals, mu));
    for (auto i : idx)
      ratings[i].normalized = sd == 0.0 ? 0.0 : (ratings[i].raw - mu) / sd;
  };

  for (const auto& [annotator, idx] : by_annotator)
    if (int(idx.size()) > pool_threshold) normalize_group(idx);
  if (!pool.empty()) normalize_group(pool);
  return ratings;
}

namespace {

LevelResult level_from(std::span<const double> h, std::span<const double> s) {
  LevelResult r;
  r.n = int(h.size());
  std::vector<double> hv(h.begin(), h.end());
  std::vector<double> sv(s.begin(), s.end());
  r.corr = correlation_triple(hv, sv);
  r.low_n = r.corr.has_value() && r.n < 3;
  return r;
}

}  // namespace

LevelReport aggregate_levels(std::span<const AlignedPair> pairs) {
  LevelReport report;

  std::vector<double> h, s;
  for (const auto& p : pairs) {
    h.push_back(p.human);
    s.push_back(p.sim);
  }
  report.instance = level_from(h, s);

  struct Acc {
    double h = 0.0, s = 0.0;
    int n = 0;
  };
  std::map<GroupKey, Acc> groups;
  std::map<std::string, Acc> models;
  for (const auto& p : pairs) {
    auto& g = groups[p.key];
    g.h += p.human;
    g.s += p.sim;
    ++g.n;
    auto& m = models[p.key.model];
    m.h += p.human;
    m.s += p.sim;
    ++m.n;
  }

  std::vector<double> gh, gs;
  for (const auto& [key, acc] : groups) {
    gh.push_back(acc.h / acc.n);
    gs.push_back(acc.s / acc.n);
  }
  report.intermediate = level_from(gh, gs);

  std::vector<double> mh, ms;
  for (const auto& [model, acc] : models) {
    mh.push_back(acc.h / acc.n);
    ms.push_back(acc.s / acc.n);
  }
  report.system = level_from(mh, ms);
  return report;
}

MacroF1 macro_f1(std::span<const Correctness> human,
                 std::span<const Correctness> sim) {
  if (human.size() != sim.size() || human.empty())
    throw Error(ErrorKind::Argument,
                "macro F1 needs equal-length, non-empty label vectors");

  auto f1_for = [&](Correctness positive) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < human.size(); ++i) {
      const bool truth = human[i] == positive;
      const bool pred = sim[i] == positive;
      if (truth && pred) ++tp;
      if (!truth && pred) ++fp;
      if (truth && !pred) ++fn;
    }
    const double precision = (tp + fp) == 0 ? 0.0 : tp / (tp + fp);
    const double recall = (tp + fn) == 0 ? 0.0 : tp / (tp + fn);
    return (precision + recall) == 0.0
               ? 0.0
               : 2.0 * precision * recall / (precision + recall);
  };

  MacroF1 r;
  r.f1_correct = f1_for(Correctness::Correct);
  r.f1_incorrect = f1_for(Correctness::Incorrect);
  r.macro = (r.f1_correct + r.f1_incorrect) / 2.0;
  return r;
}

TuringDeviation turing_deviation(int picked_real, int n_trials) {
  if (n_trials <= 0)
    throw Error(ErrorKind::Argument, "turing deviation needs at least 1 trial");
  if (picked_real < 0 || picked_real > n_trials)
    throw Error(ErrorKind::Argument, "picked_real out of [0, n_trials]");
  TuringDeviation d;
  d.n_trials = n_trials;
  d.accuracy_percent = 100.0 * double(picked_real) / double(n_trials);
  // Single division keeps |p - 50| exact for decimal-friendly counts.
  d.deviation = std::fabs(100.0 * double(picked_real) - 50.0 * double(n_trials)) /
                double(n_trials);
  return d;
}

// ---------------------------------------------------------------------------
// Student-t machinery (Lentz continued fraction for the incomplete beta)
// ---------------------------------------------------------------------------

namespace {

double beta_cont_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;

  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0))
    return front * beta_cont_fraction(a, b, x) / a;
  return 1.0 - front * beta_cont_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, int df) {
  if (df < 1) throw Error(ErrorKind::Argument, "t distribution needs df >= 1");
  const double x = double(df) / (double(df) + t * t);
  return incomplete_beta(double(df) / 2.0, 0.5, x);
}

WilliamsResult williams_test(double r12, double r13, double r23, int n) {
  if (n < 4)
    throw Error(ErrorKind::Argument, "Williams' test needs n >= 4 (df = n-3)");
  auto open_unit = [](double r) { return r > -1.0 && r < 1.0; };
  if (!open_unit(r12) || !open_unit(r13) || !open_unit(r23))
    throw Error(ErrorKind::Argument,
                "Williams' test needs correlations in (-1, 1)");

  WilliamsResult res;
  res.df = n - 3;
  if (r12 == r13) {
    res.t = 0.0;
    res.p_two_sided = 1.0;
    return res;
  }
  const double det = 1.0 - r12 * r12 - r13 * r13 - r23 * r23 +
                     2.0 * r12 * r13 * r23;
  const double rbar = (r12 + r13) / 2.0;
  const double denom = 2.0 * det * double(n - 1) / double(n - 3) +
                       rbar * rbar * std::pow(1.0 - r23, 3);
  res.t = (r12 - r13) *
          std::sqrt(double(n - 1) * (1.0 + r23) / denom);
  res.p_two_sided = student_t_two_sided_p(res.t, res.df);
  return res;
}

double mcnemar_exact(int b, int c) {
  if (b < 0 || c < 0)
    throw Error(ErrorKind::Argument, "discordant counts must be >= 0");
  const int n = b + c;
  if (n == 0) return 1.0;
  const int m = std::min(b, c);
  double tail = 0.0;
  for (int k = 0; k <= m; ++k) {
    const double ln_pmf = std::lgamma(double(n) + 1.0) -
                          std::lgamma(double(k) + 1.0) -
                          std::lgamma(double(n - k) + 1.0) -
                          double(n) * std::log(2.0);
    tail += std::exp(ln_pmf);
  }
  return std::min(1.0, 2.0 * tail);
}

std::vector<LeaderboardRow> leaderboard(
    const std::map<std::string, std::map<std::string, double>>& table,
    const std::vector<std::string>& metric_names) {
  if (table.empty())
    throw Error(ErrorKind::Argument, "leaderboard needs at least one model");

  for (const auto& [model, metrics] : table)
    for (const auto& name : metric_names)
      if (!metrics.count(name))
        throw Error(ErrorKind::Argument,
                    "model '" + model + "' is missing metric '" + name + "'");

  std::vector<LeaderboardRow> rows;
  for (const auto& [model, metrics] : table) {
    LeaderboardRow row;
    row.model = model;
    for (const auto& name : metric_names) row.metrics[name] = metrics.at(name);
    rows.push_back(std::move(row));
  }

  for (const auto& name : metric_names) {
    std::vector<double> column;
    for (const auto& row : rows) column.push_back(row.metrics.at(name));
    const double mu = mean(column);
    const double sd = std::sqrt(population_variance(column, mu));
    for (auto& row : rows) {
      const double z = sd == 0.0 ? 0.0 : (row.metrics.at(name) - mu) / sd;
      row.mean_z += z / double(metric_names.size());
    }
  }

  std::stable_sort(rows.begin(), rows.end(),
                   [](const LeaderboardRow& a, const LeaderboardRow& b) {
                     if (a.mean_z != b.mean_z) return a.mean_z > b.mean_z;
                     return a.model < b.model;
                   });
  return rows;
}

RaterAlignmentReport rater_alignment(
    std::span<const AlignedPair> pairs, std::span<const RaterRating> ratings,
    const std::function<bool(const std::string&, const std::string&)>&
        same_family) {
  RaterAlignmentReport report;
  report.alignment = aggregate_levels(pairs);

  struct Acc {
    double sum = 0.0;
    int n = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> cells;
  for (const auto& r : ratings) {
    auto& cell = cells[{r.rater, r.assistant}];
    cell.sum += r.rating;
    ++cell.n;
  }
  for (const auto& [key, acc] : cells) {
    SelfBiasCell cell;
    cell.rater = key.first;
    cell.assistant = key.second;
    cell.mean_rating = acc.sum / acc.n;
    cell.n = acc.n;
    cell.own_family = same_family ? same_family(key.first, key.second) : false;
    report.self_bias.push_back(std::move(cell));
  }
  return report;
}

}  // namespace simarena::stats
