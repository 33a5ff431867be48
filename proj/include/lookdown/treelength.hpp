#pragma once

// Tree length of the evolving look-down genealogy.
//
// For a state with per-level birth times b_2..b_N at time t the genealogy
// of levels 1..N has length
//
//   l(t) = (t - min_j b_j) + sum_{j=2}^{N} (t - b_j).
//
// Traced backward from t, the lineage at level j >= 2 merges exactly at its
// birth; the level-1 lineage runs until the last merger, which is the birth
// of the oldest line. Between events l grows with slope N; at an event the
// exiting line's age is removed, plus the gap between the two oldest birth
// times when the exiting line was the oldest.

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "lookdown/error.hpp"
#include "lookdown/lookdown.hpp"
#include "lookdown/rng.hpp"

namespace lookdown {

struct Jump {
  double time = 0.0;
  double magnitude = 0.0;  // exact drop of the tree length
  double exit_age = 0.0;   // life length up to N of the exiting line (uncorrected drop)
  bool root_corrected = false;
};

class TreeLengthPath {
 public:
  TreeLengthPath(int N, double t0, double t_end, double v0, bool compensated, std::vector<Jump> jumps)
      : N_(N), t0_(t0), t_end_(t_end), v0_(v0), slope_(static_cast<double>(N)), compensated_(compensated),
        jumps_(std::move(jumps)) {
    detail::require(N >= 2, "TreeLengthPath: N must be at least 2");
    detail::require(t0 <= t_end, "TreeLengthPath: t_end before t0");
    cumulative_.reserve(jumps_.size());
    double acc = 0.0;
    double prev = t0;
    for (const auto& j : jumps_) {
      detail::require(j.time > prev, "TreeLengthPath: jump times must be strictly increasing and after t0");
      detail::require(j.magnitude > 0.0, "TreeLengthPath: jump magnitudes must be positive");
      prev = j.time;
      acc += j.magnitude;
      cumulative_.push_back(acc);
    }
  }

  // Arbitrary slope between jumps; for synthetic checks.
  static TreeLengthPath synthetic(double t0, double t_end, double v0, double slope, std::vector<Jump> jumps = {}) {
    TreeLengthPath p(2, t0, t_end, v0, false, std::move(jumps));
    p.slope_ = slope;
    return p;
  }

  static TreeLengthPath drift_only(double t0, double t_end, double v0, double slope) {
    return synthetic(t0, t_end, v0, slope);
  }

  int N() const noexcept { return N_; }
  double t0() const noexcept { return t0_; }
  double t_end() const noexcept { return t_end_; }
  double v0() const noexcept { return v0_; }
  double slope() const noexcept { return slope_; }
  bool compensated() const noexcept { return compensated_; }
  std::span<const Jump> jumps() const noexcept { return jumps_; }

  // Sum of magnitudes of jumps with time <= t.
  double jump_total_through(double t) const {
    const auto it = std::upper_bound(jumps_.begin(), jumps_.end(), t,
                                     [](double x, const Jump& j) { return x < j.time; });
    const auto n = static_cast<std::size_t>(it - jumps_.begin());
    return n == 0 ? 0.0 : cumulative_[n - 1];
  }

  // Right-continuous value.
  double eval(double t) const {
    if (t < t0_) throw DomainError("eval: time before path start");
    return v0_ + slope_ * (t - t0_) - jump_total_through(t);
  }

  // Left limit.
  double eval_left(double t) const {
    if (t < t0_) throw DomainError("eval: time before path start");
    const auto it = std::lower_bound(jumps_.begin(), jumps_.end(), t,
                                     [](const Jump& j, double x) { return j.time < x; });
    const auto n = static_cast<std::size_t>(it - jumps_.begin());
    return v0_ + slope_ * (t - t0_) - (n == 0 ? 0.0 : cumulative_[n - 1]);
  }

  // Polyline of the path on [t0, t1]: drift segments joined by vertical drops.
  std::vector<std::pair<double, double>> polyline(double t1) const {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(2 * jumps_.size() + 2);
    pts.emplace_back(t0_, v0_);
    for (const auto& j : jumps_) {
      if (j.time > t1) break;
      pts.emplace_back(j.time, eval_left(j.time));
      pts.emplace_back(j.time, eval(j.time));
    }
    if (pts.back().first < t1) pts.emplace_back(t1, eval(t1));
    return pts;
  }

 private:
  int N_;
  double t0_;
  double t_end_;
  double v0_;
  double slope_;
  bool compensated_;
  std::vector<Jump> jumps_;
  std::vector<double> cumulative_;
};

inline double tree_length_of_state(const LookdownState& state) {
  const double t = state.now();
  const double n_lines = static_cast<double>(state.N() - 1);
  return (t - state.oldest_birth()) + (n_lines * t - state.sum_births());
}

inline double compensation(int N) { return 2.0 * std::log(static_cast<double>(N)); }

// Replays `log` through `state` (mutated in place) and records the jumps.
inline TreeLengthPath replay_into_path(const EventLog& log, LookdownState& state, bool compensated) {
  detail::require(log.N == state.N(), "build_path: log and state disagree on N");
  detail::require(state.now() == log.t_start, "build_path: state time differs from log window start");
  const double v0 = tree_length_of_state(state) - (compensated ? compensation(state.N()) : 0.0);
  std::vector<Jump> jumps;
  jumps.reserve(log.events.size());
  for (const auto& e : log.events) {
    const auto out = state.apply(e);
    jumps.push_back(Jump{e.time, out.exited.life_length + out.root_correction, out.exited.life_length,
                         out.root_corrected});
  }
  return TreeLengthPath(state.N(), log.t_start, log.t_end, v0, compensated, std::move(jumps));
}

inline TreeLengthPath build_path(const EventLog& log, const LookdownState& initial_state, bool compensated) {
  LookdownState state = initial_state;
  return replay_into_path(log, state, compensated);
}

// Jumps with time in (s, t].
inline std::vector<Jump> extract_jumps(const TreeLengthPath& path, double s, double t) {
  std::vector<Jump> out;
  for (const auto& j : path.jumps()) {
    if (j.time > t) break;
    if (j.time > s) out.push_back(j);
  }
  return out;
}

// Stationary N-coalescent length: sum_k k * Exp(C(k,2)).
inline double sample_static_kingman_length(int N, RngStream& stream) {
  detail::require(N >= 2, "sample_static_kingman_length: N must be at least 2");
  double length = 0.0;
  for (int k = N; k >= 2; --k)
    length += k * sample_exponential(stream, static_cast<double>(binom2(static_cast<std::uint64_t>(k))));
  return length;
}

// Independent oracle: reconstructs l(t) by running the events at or before t
// backward. Lineages sit on levels 1..N; reversing (i -> k) sends the
// lineage at k (if any) to its parent at i and moves lineages above k down
// one level. Length accrues as (number of lineages) x (backward time) until
// one lineage is left.
inline double reconstruct_length_backward(const EventLog& log, const EventLog& pre_window_log, double t) {
  detail::require(log.N == pre_window_log.N, "reconstruct_length_backward: logs disagree on N");
  detail::require(pre_window_log.events.empty() || pre_window_log.t_end == log.t_start,
                  "reconstruct_length_backward: pre-window log must end where the window starts");
  detail::require(t >= log.t_start && t <= log.t_end, "reconstruct_length_backward: t outside the log window");
  const int N = log.N;
  std::vector<std::uint8_t> occupied(static_cast<std::size_t>(N) + 1, 1);
  occupied[0] = 0;
  int lineages = N;
  double length = 0.0;
  double cursor = t;

  auto reverse_apply = [&](const Event& e) -> bool {
    length += lineages * (cursor - e.time);
    cursor = e.time;
    const auto k = static_cast<std::size_t>(e.target_level);
    const auto i = static_cast<std::size_t>(e.source_level);
    if (occupied[k]) {
      if (occupied[i])
        --lineages;
      else
        occupied[i] = 1;
    }
    std::copy(occupied.begin() + static_cast<std::ptrdiff_t>(k) + 1, occupied.end(),
              occupied.begin() + static_cast<std::ptrdiff_t>(k));
    occupied.back() = 0;
    return lineages == 1;
  };

  auto in_window_end = std::upper_bound(log.events.begin(), log.events.end(), t,
                                        [](double x, const Event& e) { return x < e.time; });
  for (auto it = std::make_reverse_iterator(in_window_end); it != log.events.rend(); ++it)
    if (reverse_apply(*it)) return length;
  for (auto it = pre_window_log.events.rbegin(); it != pre_window_log.events.rend(); ++it)
    if (reverse_apply(*it)) return length;
  throw InsufficientHistoryError("reconstruct_length_backward: lineages did not merge within the supplied history");
}

struct TwoTimeLengths {
  double at_start = 0.0;
  double at_end = 0.0;
};

// Joint draw of (l(0), l(eps)) in the stationary population, without
// simulating the events in between.
//
// Backward from eps the N lineages coalesce as a Kingman coalescent for a
// time eps, leaving A ancestors at time 0. Forward dynamics on (0, eps] are
// independent of the exchangeable genealogy at time 0, so the ancestors are
// a uniform A-subset of the time-0 population. The time-0 N-coalescent is
// run once while tracking how many blocks carry a marked (ancestor) leaf;
// l(eps) is the part of the eps-tree inside (0, eps] plus the marked subtree.
inline TwoTimeLengths sample_two_time_lengths(int N, double eps, RngStream& stream) {
  detail::require(N >= 2, "sample_two_time_lengths: N must be at least 2");
  detail::require(eps > 0.0, "sample_two_time_lengths: eps must be positive");

  double recent = 0.0;
  double elapsed = 0.0;
  std::uint64_t k = static_cast<std::uint64_t>(N);
  while (k >= 2) {
    const double wait = sample_exponential(stream, static_cast<double>(binom2(k)));
    if (elapsed + wait >= eps) {
      recent += static_cast<double>(k) * (eps - elapsed);
      break;
    }
    recent += static_cast<double>(k) * wait;
    elapsed += wait;
    --k;
  }
  const std::uint64_t ancestors = k;  // k == 1 if the eps-tree already has its root inside (0, eps]

  double start_length = 0.0;
  double marked_length = 0.0;
  std::uint64_t marked = ancestors;
  for (std::uint64_t blocks = static_cast<std::uint64_t>(N); blocks >= 2; --blocks) {
    const std::uint64_t pairs = binom2(blocks);
    const double wait = sample_exponential(stream, static_cast<double>(pairs));
    start_length += static_cast<double>(blocks) * wait;
    if (marked >= 2) {
      marked_length += static_cast<double>(marked) * wait;
      if (stream.uniform_index(pairs) < binom2(marked)) --marked;
    }
  }
  return TwoTimeLengths{start_length, recent + marked_length};
}

}  // namespace lookdown
