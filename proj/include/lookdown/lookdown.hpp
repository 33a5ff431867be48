#pragma once

// Finite-N look-down particle system and line sampling in the infinite
// look-down graph.
//
// Levels are 1-based. Level 1 holds the immortal line and carries no birth
// time; levels 2..N each hold one line identified by its birth time. When
// the clock of the pair (i, k), i < k, rings at time u, the line at level N
// exits, lines at levels k..N-1 move up one level and a new line with birth
// time u is placed at level k.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/factorials.hpp>
#include <boost/math/special_functions/polygamma.hpp>

#include "lookdown/error.hpp"
#include "lookdown/rng.hpp"

namespace lookdown {

constexpr std::uint64_t binom2(std::uint64_t n) noexcept { return n * (n - 1) / 2; }

struct Event {
  double time = 0.0;
  int source_level = 1;
  int target_level = 2;

  friend bool operator==(const Event&, const Event&) = default;
};

struct EventLog {
  int N = 2;
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<Event> events;
  // Number of generated times that collided with their predecessor and were
  // moved up by one ulp.
  std::uint64_t tie_warnings = 0;
};

// Pair index u in [0, C(N,2)) <-> ordered pair (i, k), enumerated by target
// level first and source level second: u = C(k-1, 2) + (i - 1).
inline std::pair<int, int> decode_pair(std::uint64_t u) noexcept {
  auto j = static_cast<std::uint64_t>((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(u))) / 2.0);
  while (j > 1 && binom2(j) > u) --j;
  while (binom2(j + 1) <= u) ++j;
  return {static_cast<int>(u - binom2(j) + 1), static_cast<int>(j + 1)};
}

inline std::uint64_t encode_pair(int source, int target) noexcept {
  return binom2(static_cast<std::uint64_t>(target - 1)) + static_cast<std::uint64_t>(source - 1);
}

// Superposition of the C(N,2) unit-rate clocks on (a, b]: one exponential
// gap and one uniform pair index per event.
inline EventLog simulate_events(int N, double a, double b, RngStream& stream) {
  detail::require(N >= 2, "simulate_events: N must be at least 2");
  detail::require(a < b, "simulate_events: window must satisfy a < b");
  EventLog log;
  log.N = N;
  log.t_start = a;
  log.t_end = b;
  const std::uint64_t pairs = binom2(static_cast<std::uint64_t>(N));
  const double rate = static_cast<double>(pairs);
  log.events.reserve(static_cast<std::size_t>(rate * (b - a) * 1.05) + 16);
  double t = a;
  for (;;) {
    double next = t + sample_exponential(stream, rate);
    if (next > b) break;
    if (next <= t) {
      next = std::nextafter(t, std::numeric_limits<double>::infinity());
      ++log.tie_warnings;
      if (next > b) break;
    }
    t = next;
    const auto [source, target] = decode_pair(stream.uniform_index(pairs));
    log.events.push_back(Event{t, source, target});
  }
  return log;
}

struct LineRecord {
  double birth_time = 0.0;
  int birth_level = 2;
  double exit_time = 0.0;
  double life_length = 0.0;
  std::optional<std::uint64_t> truncation_level;
  double tail_bias_bound = 0.0;
};

struct StepOutcome {
  LineRecord exited;
  // True when the exiting line was the oldest line on levels 2..N.
  bool root_corrected = false;
  // Birth time of the new oldest line minus that of the exiting one; 0 unless root_corrected.
  double root_correction = 0.0;
};

class LookdownState {
 public:
  struct Slot {
    double birth = 0.0;
    std::uint64_t id = 0;
    int birth_level = 2;
  };

  // births[j] is the birth time of the line at level j + 2. Unknown birth
  // levels default to the current level.
  static LookdownState from_births(double now, std::span<const double> births,
                                   std::span<const int> birth_levels = {}) {
    detail::require(births.size() >= 1, "LookdownState: need at least one level above 1");
    detail::require(birth_levels.empty() || birth_levels.size() == births.size(),
                    "LookdownState: birth_levels size mismatch");
    std::vector<Slot> slots(births.size());
    for (std::size_t j = 0; j < births.size(); ++j) {
      detail::require(births[j] <= now, "LookdownState: birth time after current time");
      const int level = static_cast<int>(j) + 2;
      const int born_at = birth_levels.empty() ? level : birth_levels[j];
      detail::require(born_at >= 2 && born_at <= level, "LookdownState: invalid birth level");
      slots[j] = Slot{births[j], 0, born_at};
    }
    return LookdownState(now, std::move(slots));
  }

  // All lines born at `now`: the degenerate star.
  static LookdownState star(int N, double now) {
    detail::require(N >= 2, "LookdownState: N must be at least 2");
    std::vector<double> births(static_cast<std::size_t>(N - 1), now);
    return from_births(now, births);
  }

  int N() const noexcept { return static_cast<int>(slots_.size()) + 1; }
  double now() const noexcept { return now_; }
  double birth_time(int level) const { return slots_.at(static_cast<std::size_t>(level - 2)).birth; }
  int birth_level(int level) const { return slots_.at(static_cast<std::size_t>(level - 2)).birth_level; }
  std::span<const Slot> slots() const noexcept { return slots_; }
  double sum_births() const noexcept { return sum_ + sum_comp_; }

  std::vector<double> births() const {
    std::vector<double> out(slots_.size());
    std::transform(slots_.begin(), slots_.end(), out.begin(), [](const Slot& s) { return s.birth; });
    return out;
  }

  double oldest_birth() const {
    clean_top();
    return heap_.front().first;
  }

  StepOutcome apply(const Event& event) {
    if (!(event.time > now_)) throw SequencingError("step: event time does not exceed current time");
    if (event.target_level < 2 || event.target_level > N())
      throw ParameterError("step: target level outside 2..N");
    if (event.source_level < 1 || event.source_level >= event.target_level)
      throw ParameterError("step: source level must lie in 1..target-1");

    clean_top();
    const std::uint64_t oldest_id = heap_.front().second;
    const Slot exiting = slots_.back();

    const auto target_index = static_cast<std::size_t>(event.target_level - 2);
    std::copy_backward(slots_.begin() + static_cast<std::ptrdiff_t>(target_index), slots_.end() - 1, slots_.end());
    const std::uint64_t id = alive_.size();
    slots_[target_index] = Slot{event.time, id, event.target_level};
    alive_[exiting.id] = 0;
    alive_.push_back(1);
    push_heap_entry(event.time, id);

    add_to_sum(event.time);
    add_to_sum(-exiting.birth);
    if (++steps_since_resum_ >= slots_.size()) resum();
    if (heap_.size() > 4 * slots_.size() + 64) rebuild_heap();

    StepOutcome out;
    out.exited.birth_time = exiting.birth;
    out.exited.birth_level = exiting.birth_level;
    out.exited.exit_time = event.time;
    out.exited.life_length = event.time - exiting.birth;
    if (exiting.id == oldest_id) {
      out.root_corrected = true;
      out.root_correction = oldest_birth() - exiting.birth;
    }
    now_ = event.time;
    return out;
  }

  // Checks the documented state invariants; used by tests.
  bool check_invariants(double rel_tol = 1e-9) const {
    double exact = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& s : slots_) {
      if (s.birth > now_) return false;
      exact += s.birth;
      lo = std::min(lo, s.birth);
    }
    const double scale = std::max(1.0, std::abs(exact));
    if (std::abs(sum_births() - exact) > rel_tol * scale) return false;
    return oldest_birth() == lo;
  }

 private:
  using HeapEntry = std::pair<double, std::uint64_t>;

  LookdownState(double now, std::vector<Slot> slots) : now_(now), slots_(std::move(slots)) {
    alive_.assign(slots_.size(), 1);
    for (std::size_t j = 0; j < slots_.size(); ++j) slots_[j].id = j;
    rebuild_heap();
    resum();
  }

  void push_heap_entry(double birth, std::uint64_t id) {
    heap_.emplace_back(birth, id);
    std::push_heap(heap_.begin(), heap_.end(), std::greater<>{});
  }

  // Lazy deletion: drop dead entries sitting on top of the heap.
  void clean_top() const {
    while (!alive_[heap_.front().second]) {
      std::pop_heap(heap_.begin(), heap_.end(), std::greater<>{});
      heap_.pop_back();
    }
  }

  void rebuild_heap() {
    heap_.clear();
    heap_.reserve(2 * slots_.size() + 64);
    for (const auto& s : slots_) heap_.emplace_back(s.birth, s.id);
    std::make_heap(heap_.begin(), heap_.end(), std::greater<>{});
  }

  // Neumaier-compensated running sum of birth times.
  void add_to_sum(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      sum_comp_ += (sum_ - t) + x;
    else
      sum_comp_ += (x - t) + sum_;
    sum_ = t;
  }

  void resum() noexcept {
    sum_ = 0.0;
    sum_comp_ = 0.0;
    for (const auto& s : slots_) add_to_sum(s.birth);
    steps_since_resum_ = 0;
  }

  double now_ = 0.0;
  std::vector<Slot> slots_;
  std::vector<std::uint8_t> alive_;
  mutable std::vector<HeapEntry> heap_;
  double sum_ = 0.0;
  double sum_comp_ = 0.0;
  std::size_t steps_since_resum_ = 0;
};

// Value-semantics form of LookdownState::apply.
inline std::pair<LookdownState, LineRecord> step(LookdownState state, const Event& event) {
  auto outcome = state.apply(event);
  return {std::move(state), outcome.exited};
}

// Exact draw from the stationary law of the level birth times at time t.
// Traced backward from t, the lines still unresolved always occupy the
// contiguous levels 2..m; the next event with target <= m arrives at rate
// C(m,2) and hits level k with probability (k-1)/C(m,2), resolving the line
// found there (it was born at level k at that event).
inline LookdownState sample_stationary_state(int N, double t, RngStream& stream) {
  detail::require(N >= 2, "sample_stationary_state: N must be at least 2");
  std::vector<int> unresolved(static_cast<std::size_t>(N - 1));
  std::iota(unresolved.begin(), unresolved.end(), 2);
  std::vector<double> births(static_cast<std::size_t>(N - 1));
  std::vector<int> levels(static_cast<std::size_t>(N - 1));
  double age = 0.0;
  for (auto m = static_cast<std::uint64_t>(N); m >= 2; --m) {
    const std::uint64_t pairs = binom2(m);
    age += sample_exponential(stream, static_cast<double>(pairs));
    const int k = decode_pair(stream.uniform_index(pairs)).second;
    const auto pos = unresolved.begin() + (k - 2);
    births[static_cast<std::size_t>(*pos - 2)] = t - age;
    levels[static_cast<std::size_t>(*pos - 2)] = k;
    unresolved.erase(pos);
  }
  return LookdownState::from_births(t, births, levels);
}

// ---------------------------------------------------------------------------
// Life lengths in the infinite look-down graph.

struct LifeLengthDraw {
  double life_length = 0.0;
  std::uint64_t truncation_level = 0;
  double tail_bias_bound = 0.0;
};

namespace detail {

// Hurwitz zeta zeta(q, z) for even q >= 2 via the odd-order polygamma.
inline long double hurwitz_zeta_even(int q, long double z) {
  return boost::math::polygamma(q - 1, z) / boost::math::factorial<long double>(static_cast<unsigned>(q - 1));
}

// sum_{j=a}^{J-1} C(j,2)^{-p}. With x = j - 1/2, C(j,2) = (x^2 - 1/4)/2, so
// C(j,2)^{-p} = 2^p sum_n binom(p+n-1, n) 4^{-n} x^{-2p-2n}; summing over
// half-integers x turns each power into a Hurwitz zeta difference. All terms
// are positive, so there is no cancellation.
inline long double inverse_pair_power_sum(int p, std::uint64_t a, std::uint64_t J) {
  if (a >= J) return 0.0L;
  const long double za = static_cast<long double>(a) - 0.5L;
  const long double zJ = static_cast<long double>(J) - 0.5L;
  long double total = 0.0L;
  long double coeff = std::pow(2.0L, p);
  for (int n = 0; n < 80; ++n) {
    const int q = 2 * p + 2 * n;
    const long double term = coeff * (hurwitz_zeta_even(q, za) - hurwitz_zeta_even(q, zJ));
    total += term;
    if (term < 1e-21L * total) break;
    coeff *= static_cast<long double>(p + n) / static_cast<long double>(n + 1) / 4.0L;
  }
  return total;
}

}  // namespace detail

// Sampler of T = sum_{j >= l} X_j, X_j ~ Exp(C(j,2)) independent.
//
// The sum is truncated at the first level J with 2/(J-1) <= tol and the
// remainder replaced by its mean 2/(J-1). The first `exact_head` terms are
// drawn one by one; the block of levels [l + exact_head, J) is drawn as a
// shifted gamma whose first three cumulants equal those of the block sum.
class LifeLengthSampler {
 public:
  static constexpr double kDefaultTol = 1e-9;
  static constexpr int kAutoExactHead = -1;

  // Levels below 64 keep four exact terms; above, the block is already close
  // to Gaussian and one exact term suffices.
  static constexpr int default_exact_head(int birth_level) noexcept { return birth_level < 64 ? 4 : 1; }

  explicit LifeLengthSampler(int birth_level, double tol = kDefaultTol, int exact_head = kAutoExactHead)
      : level_(birth_level), tol_(tol) {
    if (exact_head == kAutoExactHead) exact_head = default_exact_head(birth_level);
    detail::require(birth_level >= 2, "sample_line_lifelength: birth level must be at least 2");
    detail::require(tol > 0.0 && std::isfinite(tol), "sample_line_lifelength: tol must be positive");
    detail::require(exact_head >= 0, "sample_line_lifelength: exact_head must be non-negative");
    const double jm1 = std::ceil(2.0 / tol);
    detail::require(jm1 < 9e18, "sample_line_lifelength: tol too small");
    const auto l = static_cast<std::uint64_t>(birth_level);
    J_ = std::max(l, static_cast<std::uint64_t>(jm1) + 1);
    tail_mean_ = 2.0 / static_cast<double>(J_ - 1);
    head_end_ = std::min<std::uint64_t>(J_, l + static_cast<std::uint64_t>(exact_head));
    head_rates_.reserve(static_cast<std::size_t>(head_end_ - l));
    for (std::uint64_t j = l; j < head_end_; ++j) head_rates_.push_back(static_cast<double>(binom2(j)));

    if (head_end_ < J_) {
      const long double k1 = 2.0L / static_cast<long double>(head_end_ - 1) - 2.0L / static_cast<long double>(J_ - 1);
      const long double k2 = detail::inverse_pair_power_sum(2, head_end_, J_);
      const long double k3 = 2.0L * detail::inverse_pair_power_sum(3, head_end_, J_);
      long double scale = k3 / (2.0L * k2);
      long double shape = k2 / (scale * scale);
      long double shift = k1 - shape * scale;
      if (!(shift >= 0.0L)) {
        shape = k1 * k1 / k2;
        scale = k2 / k1;
        shift = 0.0L;
      }
      gamma_shape_ = static_cast<double>(shape);
      gamma_scale_ = static_cast<double>(scale);
      gamma_shift_ = static_cast<double>(shift);
      block_mean_ = static_cast<double>(k1);
      block_variance_ = static_cast<double>(k2);
    }
  }

  double operator()(RngStream& stream) const {
    double t = 0.0;
    for (const double rate : head_rates_) t += sample_exponential(stream, rate);
    if (gamma_shape_ > 0.0) {
      std::gamma_distribution<double> block(gamma_shape_, gamma_scale_);
      t += gamma_shift_ + block(stream);
    }
    return t + tail_mean_;
  }

  // Fills `out` with independent draws. Shares one gamma generator across the
  // batch, so the stream is consumed differently from repeated operator().
  void draw_into(RngStream& stream, std::span<double> out) const {
    std::gamma_distribution<double> block(gamma_shape_ > 0.0 ? gamma_shape_ : 1.0,
                                          gamma_shape_ > 0.0 ? gamma_scale_ : 1.0);
    for (double& x : out) {
      double t = 0.0;
      for (const double rate : head_rates_) t += sample_exponential(stream, rate);
      if (gamma_shape_ > 0.0) t += gamma_shift_ + block(stream);
      x = t + tail_mean_;
    }
  }

  int exact_head() const noexcept { return static_cast<int>(head_rates_.size()); }

  int birth_level() const noexcept { return level_; }
  double tol() const noexcept { return tol_; }
  std::uint64_t truncation_level() const noexcept { return J_; }

  // Exact moments of the truncated representation.
  double mean() const noexcept {
    double m = tail_mean_ + block_mean_;
    for (const double rate : head_rates_) m += 1.0 / rate;
    return m;
  }
  double variance() const noexcept {
    double v = block_variance_;
    for (const double rate : head_rates_) v += 1.0 / (rate * rate);
    return v;
  }

 private:
  int level_;
  double tol_;
  std::uint64_t J_ = 0;
  std::uint64_t head_end_ = 0;
  double tail_mean_ = 0.0;
  std::vector<double> head_rates_;
  double gamma_shape_ = 0.0;
  double gamma_scale_ = 0.0;
  double gamma_shift_ = 0.0;
  double block_mean_ = 0.0;
  double block_variance_ = 0.0;
};

inline LifeLengthDraw sample_line_lifelength(int birth_level, RngStream& stream,
                                             double tol = LifeLengthSampler::kDefaultTol) {
  const LifeLengthSampler sampler(birth_level, tol);
  return LifeLengthDraw{sampler(stream), sampler.truncation_level(), tol};
}

struct PointProcessSample {
  int level = 2;
  double s = 0.0;
  double t = 0.0;
  std::vector<double> death_times;
  std::vector<double> life_lengths;
  // First death after t, when the look-ahead window contained one.
  std::optional<double> next_death_time;

  std::size_t count() const noexcept { return death_times.size(); }
};

inline constexpr double kDefaultBurnIn = 50.0;

// Lines born at level k whose death time falls in (s, t]. Births are
// Poisson(k-1) on (s - B/(k-1), t + B/(k-1)]; the look-ahead past t only
// serves to locate next_death_time.
inline PointProcessSample sample_infinite_deaths(const LifeLengthSampler& sampler, double s, double t, double burn_in,
                                                 RngStream& stream) {
  const int k = sampler.birth_level();
  detail::require(s < t, "sample_infinite_deaths: window must satisfy s < t");
  detail::require(burn_in > 0.0, "sample_infinite_deaths: burn-in must be positive");
  const double rate = static_cast<double>(k - 1);
  const double margin = burn_in / rate;
  const auto births = sample_poisson_times(stream, rate, s - margin, t + margin);

  PointProcessSample out;
  out.level = k;
  out.s = s;
  out.t = t;
  std::vector<double> lives(births.size());
  sampler.draw_into(stream, lives);
  std::vector<std::pair<double, double>> deaths;
  double next = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < births.size(); ++i) {
    const double life = lives[i];
    const double d = births[i] + life;
    if (d > s && d <= t)
      deaths.emplace_back(d, life);
    else if (d > t)
      next = std::min(next, d);
  }
  std::sort(deaths.begin(), deaths.end());
  out.death_times.reserve(deaths.size());
  out.life_lengths.reserve(deaths.size());
  for (const auto& [d, life] : deaths) {
    out.death_times.push_back(d);
    out.life_lengths.push_back(life);
  }
  if (next <= t + margin) out.next_death_time = next;
  return out;
}

inline PointProcessSample sample_infinite_deaths(int k, double s, double t, double burn_in, RngStream& stream,
                                                 double tol = LifeLengthSampler::kDefaultTol) {
  detail::require(k >= 2, "sample_infinite_deaths: level must be at least 2");
  return sample_infinite_deaths(LifeLengthSampler(k, tol), s, t, burn_in, stream);
}

}  // namespace lookdown
