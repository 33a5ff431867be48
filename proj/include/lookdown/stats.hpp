#pragma once

// Estimators and tests over simulated paths and point processes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "lookdown/error.hpp"
#include "lookdown/lookdown.hpp"
#include "lookdown/rng.hpp"
#include "lookdown/treelength.hpp"

namespace lookdown {

// Count, mean and sum of squared deviations; batches merge associatively
// (Chan et al.).
struct RunningStats {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x) noexcept {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  void merge(const RunningStats& other) noexcept {
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    const double n_a = static_cast<double>(count);
    const double n_b = static_cast<double>(other.count);
    const double n = n_a + n_b;
    const double delta = other.mean - mean;
    mean += delta * n_b / n;
    m2 += other.m2 + delta * delta * n_a * n_b / n;
    count += other.count;
  }

  double variance() const noexcept { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
  double stddev() const noexcept { return std::sqrt(variance()); }
  double standard_error() const noexcept { return count > 0 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0; }
};

inline RunningStats summarize(std::span<const double> xs) {
  RunningStats s;
  for (const double x : xs) s.push(x);
  return s;
}

// ---------------------------------------------------------------------------
// Partitions and quadratic variation.

class Partition {
 public:
  static Partition uniform(double s, double t, std::uint64_t cells) {
    detail::require(s < t, "Partition: need s < t");
    detail::require(cells >= 1, "Partition: need at least one cell");
    Partition p;
    p.s_ = s;
    p.t_ = t;
    p.cells_ = cells;
    return p;
  }

  static Partition explicit_points(std::vector<double> endpoints) {
    detail::require(endpoints.size() >= 2, "Partition: need at least two endpoints");
    for (std::size_t i = 1; i < endpoints.size(); ++i)
      detail::require(endpoints[i] > endpoints[i - 1], "Partition: endpoints must be strictly increasing");
    Partition p;
    p.s_ = endpoints.front();
    p.t_ = endpoints.back();
    p.cells_ = endpoints.size() - 1;
    p.points_ = std::move(endpoints);
    return p;
  }

  // Sorted uniform draws in (s, t) plus the two ends. Not used by the
  // acceptance runs.
  static Partition random(double s, double t, std::uint64_t cells, RngStream& stream) {
    detail::require(s < t && cells >= 1, "Partition: invalid random partition request");
    std::vector<double> pts;
    pts.reserve(cells + 1);
    pts.push_back(s);
    for (std::uint64_t i = 1; i < cells; ++i) pts.push_back(s + (t - s) * stream.uniform_open_closed());
    std::sort(pts.begin() + 1, pts.end());
    pts.push_back(t);
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.back() != t) pts.push_back(t);
    return explicit_points(std::move(pts));
  }

  double start() const noexcept { return s_; }
  double end() const noexcept { return t_; }
  std::uint64_t cells() const noexcept { return cells_; }
  bool is_uniform() const noexcept { return points_.empty(); }

  double endpoint(std::uint64_t i) const noexcept {
    if (!points_.empty()) return points_[i];
    if (i == cells_) return t_;
    return s_ + (t_ - s_) * (static_cast<double>(i) / static_cast<double>(cells_));
  }

  double mesh() const noexcept {
    if (points_.empty()) return (t_ - s_) / static_cast<double>(cells_);
    double m = 0.0;
    for (std::size_t i = 1; i < points_.size(); ++i) m = std::max(m, points_[i] - points_[i - 1]);
    return m;
  }

  // Index c of the cell (endpoint(c-1), endpoint(c)] holding x, for s < x <= t.
  std::uint64_t cell_of(double x) const {
    if (!points_.empty()) {
      const auto it = std::lower_bound(points_.begin(), points_.end(), x);
      return static_cast<std::uint64_t>(it - points_.begin());
    }
    const double frac = (x - s_) / (t_ - s_) * static_cast<double>(cells_);
    auto c = static_cast<std::uint64_t>(std::clamp(std::ceil(frac), 1.0, static_cast<double>(cells_)));
    while (c < cells_ && x > endpoint(c)) ++c;
    while (c > 1 && x <= endpoint(c - 1)) --c;
    return c;
  }

 private:
  double s_ = 0.0;
  double t_ = 1.0;
  std::uint64_t cells_ = 1;
  std::vector<double> points_;
};

// Sum over cells of squared path increments. Between jumps the increment is
// slope * width, so only cells containing jumps need individual attention.
inline double quadratic_variation(const TreeLengthPath& path, const Partition& partition) {
  detail::require(partition.start() >= path.t0(), "quadratic_variation: partition starts before the path");
  const double slope = path.slope();
  double total = 0.0;
  if (partition.is_uniform()) {
    const double drift = slope * partition.mesh();
    total = static_cast<double>(partition.cells()) * drift * drift;
  } else {
    for (std::uint64_t c = 1; c <= partition.cells(); ++c) {
      const double drift = slope * (partition.endpoint(c) - partition.endpoint(c - 1));
      total += drift * drift;
    }
  }

  const double s = partition.start();
  const double t = partition.end();
  const auto jumps = path.jumps();
  auto it = std::upper_bound(jumps.begin(), jumps.end(), s, [](double x, const Jump& j) { return x < j.time; });
  while (it != jumps.end() && it->time <= t) {
    const std::uint64_t cell = partition.cell_of(it->time);
    const double upper = partition.endpoint(cell);
    double dropped = 0.0;
    while (it != jumps.end() && it->time <= upper) {
      dropped += it->magnitude;
      ++it;
    }
    const double drift = slope * (upper - partition.endpoint(cell - 1));
    total += (drift - dropped) * (drift - dropped) - drift * drift;
  }
  return total;
}

struct QvRow {
  int level = 0;
  double mesh = 0.0;
  double qv = 0.0;
};

// QV on uniform partitions of [s, t] with 2^m cells, m = min_level..max_level.
inline std::vector<QvRow> qv_mesh_scan(const TreeLengthPath& path, double s, double t, int min_level,
                                       int max_level) {
  detail::require(min_level >= 1 && min_level <= max_level && max_level <= 40, "qv_mesh_scan: bad level range");
  std::vector<QvRow> rows;
  for (int m = min_level; m <= max_level; ++m) {
    const auto part = Partition::uniform(s, t, std::uint64_t{1} << m);
    rows.push_back(QvRow{m, part.mesh(), quadratic_variation(path, part)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Squared life lengths.

struct CumulativeSquares {
  int level = 2;
  double cumulative = 0.0;
};

// S^(K') = sum_{k <= K'} sum_i T_ik^2, one row per supplied level in order.
inline std::vector<CumulativeSquares> sum_squared_lifelengths(std::span<const PointProcessSample> samples) {
  std::vector<CumulativeSquares> table;
  table.reserve(samples.size());
  double acc = 0.0;
  for (const auto& sample : samples) {
    if (sample.s != samples.front().s || sample.t != samples.front().t)
      throw ParameterError("sum_squared_lifelengths: samples do not share one window");
    for (const double life : sample.life_lengths) acc += life * life;
    table.push_back(CumulativeSquares{sample.level, acc});
  }
  return table;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov.

struct KSResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

// P(K > lambda) for the limiting Kolmogorov distribution. Series are summed
// until terms drop below 1e-10; the small-lambda form is the Jacobi theta
// transform of the alternating series.
inline double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  constexpr double kTermFloor = 1e-10;
  if (lambda < 1.18) {
    const double pi2 = std::numbers::pi * std::numbers::pi;
    const double w = -pi2 / (8.0 * lambda * lambda);
    double sum = 0.0;
    for (int j = 1;; j += 2) {
      const double term = std::exp(w * j * j);
      sum += term;
      if (term < kTermFloor) break;
    }
    const double cdf = std::sqrt(2.0 * std::numbers::pi) / lambda * sum;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j < 1000; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    sign = -sign;
    if (term < kTermFloor) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline constexpr std::size_t kMinKsSample = 8;

inline KSResult ks_test(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw ParameterError("ks_test: empty sample");
  if (samples.size() < kMinKsSample) throw ParameterError("ks_test: need at least 8 observations");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return KSResult{d, kolmogorov_survival(std::sqrt(n) * d), samples.size()};
}

inline KSResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.size() < kMinKsSample || b.size() < kMinKsSample)
    throw ParameterError("ks_two_sample: need at least 8 observations per sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  return KSResult{d, kolmogorov_survival(std::sqrt(ne) * d), a.size() + b.size()};
}

inline double gumbel_cdf(double x) { return std::exp(-std::exp(-x)); }

inline double exponential_cdf(double rate, double x) { return x <= 0.0 ? 0.0 : -std::expm1(-rate * x); }

// ---------------------------------------------------------------------------
// Poisson checks for death processes.

struct PoissonSuiteReport {
  int level = 2;
  double window_length = 0.0;
  std::size_t replicates = 0;
  KSResult gap_ks;
  double mean_count = 0.0;
  double expected_count = 0.0;
  double mean_count_se = 0.0;
  bool mean_ok = false;
  double dispersion = 0.0;
  double dispersion_se = 0.0;
  bool dispersion_ok = false;
};

// Gaps pooled over replicates: s -> first death, consecutive deaths, and the
// last death -> next_death_time when known. Every collected gap starts at a
// point fixed before the gap is observed, so the pooled empirical law is
// unbiased for the gap law (Wald).
inline std::vector<double> pooled_gaps(std::span<const PointProcessSample> reps) {
  std::vector<double> gaps;
  for (const auto& r : reps) {
    double prev = r.s;
    for (const double d : r.death_times) {
      gaps.push_back(d - prev);
      prev = d;
    }
    if (r.next_death_time) gaps.push_back(*r.next_death_time - prev);
  }
  return gaps;
}

inline PoissonSuiteReport poisson_suite(std::span<const PointProcessSample> reps) {
  detail::require(reps.size() >= 2, "poisson_suite: need at least two replicates");
  const auto& first = reps.front();
  for (const auto& r : reps) {
    if (r.level != first.level) throw ParameterError("poisson_suite: level mismatch");
    if (r.s != first.s || r.t != first.t) throw ParameterError("poisson_suite: window mismatch");
  }
  PoissonSuiteReport out;
  out.level = first.level;
  out.window_length = first.t - first.s;
  out.replicates = reps.size();

  const double rate = static_cast<double>(first.level - 1);
  out.gap_ks = ks_test(pooled_gaps(reps), [rate](double x) { return exponential_cdf(rate, x); });

  RunningStats counts;
  for (const auto& r : reps) counts.push(static_cast<double>(r.count()));
  const double n = static_cast<double>(reps.size());
  out.mean_count = counts.mean;
  out.expected_count = rate * out.window_length;
  out.mean_count_se = counts.standard_error();
  out.mean_ok = std::abs(out.mean_count - out.expected_count) <= 3.0 * out.mean_count_se;
  out.dispersion = counts.mean > 0.0 ? counts.variance() / counts.mean : 0.0;
  out.dispersion_se = std::sqrt(2.0 / (n - 1.0));
  out.dispersion_ok = std::abs(out.dispersion - 1.0) <= 3.0 * out.dispersion_se;
  return out;
}

struct IndependenceResult {
  double max_abs_correlation = 0.0;
  std::pair<std::size_t, std::size_t> argmax{0, 0};
  // correlation[a][b]; NaN where a column is excluded.
  std::vector<std::vector<double>> correlation;
  std::vector<std::size_t> excluded_columns;
};

// Pairwise Pearson correlations between columns of a reps x levels matrix.
inline IndependenceResult independence_check(const std::vector<std::vector<double>>& matrix) {
  detail::require(matrix.size() >= 50, "independence_check: need at least 50 replicates");
  const std::size_t cols = matrix.front().size();
  detail::require(cols >= 2, "independence_check: need at least two levels");
  for (const auto& row : matrix) detail::require(row.size() == cols, "independence_check: ragged matrix");

  std::vector<double> mean(cols, 0.0);
  std::vector<double> sd(cols, 0.0);
  for (std::size_t c = 0; c < cols; ++c) {
    RunningStats s;
    for (const auto& row : matrix) s.push(row[c]);
    mean[c] = s.mean;
    sd[c] = std::sqrt(s.m2);
  }

  IndependenceResult out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.correlation.assign(cols, std::vector<double>(cols, nan));
  for (std::size_t c = 0; c < cols; ++c)
    if (!(sd[c] > 0.0)) out.excluded_columns.push_back(c);
  auto excluded = [&](std::size_t c) { return !(sd[c] > 0.0); };

  for (std::size_t a = 0; a < cols; ++a) {
    if (excluded(a)) continue;
    out.correlation[a][a] = 1.0;
    for (std::size_t b = a + 1; b < cols; ++b) {
      if (excluded(b)) continue;
      double cross = 0.0;
      for (const auto& row : matrix) cross += (row[a] - mean[a]) * (row[b] - mean[b]);
      const double r = cross / (sd[a] * sd[b]);
      out.correlation[a][b] = out.correlation[b][a] = r;
      if (std::abs(r) > out.max_abs_correlation) {
        out.max_abs_correlation = std::abs(r);
        out.argmax = {a, b};
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Infinitesimal variance.

struct VarianceScalingRow {
  double eps = 0.0;
  double mean_square = 0.0;
  double mean_square_se = 0.0;
  double ratio = 0.0;
  double ratio_se = 0.0;
};

// Increment source: returns (L(t0), L(t0 + eps)) for replicate `rep`.
using IncrementSampler = std::function<TwoTimeLengths(double eps, std::size_t rep)>;

inline VarianceScalingRow variance_scaling_row(double eps, std::span<const double> squared_increments) {
  detail::require(eps > 0.0 && eps < 1.0, "variance_scaling: eps must lie in (0, 1)");
  const auto s = summarize(squared_increments);
  const double norm = eps * std::abs(std::log(eps));
  return VarianceScalingRow{eps, s.mean, s.standard_error(), s.mean / norm, s.standard_error() / norm};
}

// E[(L(t0+eps) - L(t0))^2] / (eps |ln eps|) for each eps.
inline std::vector<VarianceScalingRow> variance_scaling(std::span<const double> epsilons, std::size_t reps,
                                                        const IncrementSampler& sampler) {
  detail::require(reps >= 1, "variance_scaling: need at least one replicate");
  std::vector<VarianceScalingRow> rows;
  for (const double eps : epsilons) {
    detail::require(eps > 0.0 && eps < 1.0, "variance_scaling: eps must lie in (0, 1)");
    std::vector<double> sq(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      const auto pair = sampler(eps, r);
      const double d = pair.at_end - pair.at_start;
      sq[r] = d * d;
    }
    rows.push_back(variance_scaling_row(eps, sq));
  }
  return rows;
}

// ---------------------------------------------------------------------------

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Ordinary least squares of ys on xs.
inline LinearFit fit_log_slope(std::span<const double> xs, std::span<const double> ys) {
  detail::require(xs.size() == ys.size(), "fit_log_slope: size mismatch");
  detail::require(xs.size() >= 3, "fit_log_slope: need at least three points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw ParameterError("fit_log_slope: xs are all equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace lookdown
