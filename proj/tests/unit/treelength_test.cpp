#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lookdown/error.hpp"
#include "lookdown/experiments.hpp"
#include "lookdown/stats.hpp"
#include "lookdown/treelength.hpp"

using namespace lookdown;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

double harmonic(int n) {
  double h = 0.0;
  for (int i = 1; i <= n; ++i) h += 1.0 / i;
  return h;
}

// Star state at `start` plus `history` of events, then a window log.
struct Scenario {
  EventLog pre;
  EventLog window;
  LookdownState at_start;
};

Scenario scenario(int N, double s, double t, double history, RngStream& stream) {
  Scenario sc{simulate_events(N, s - history, s, stream), {}, LookdownState::star(N, s - history)};
  auto state = LookdownState::star(N, s - history);
  for (const auto& e : sc.pre.events) state.apply(e);
  std::vector<int> levels;
  for (int j = 2; j <= N; ++j) levels.push_back(state.birth_level(j));
  const auto births = state.births();
  sc.at_start = LookdownState::from_births(s, births, levels);
  sc.window = simulate_events(N, s, t, stream);
  return sc;
}

}  // namespace

TEST(TreeLength, TwoLevels) {
  const std::vector<double> births{0.25};
  EXPECT_DOUBLE_EQ(tree_length_of_state(LookdownState::from_births(1.5, births)), 2.5);
}

TEST(TreeLength, ThreeLevels) {
  const std::vector<double> births{0.5, 0.2};
  EXPECT_NEAR(tree_length_of_state(LookdownState::from_births(1.0, births)), 2.1, 1e-15);
}

TEST(TreeLength, StarIsZero) { EXPECT_EQ(tree_length_of_state(LookdownState::star(10, 3.0)), 0.0); }

TEST(BuildPath, EmptyLogIsPureDrift) {
  const EventLog log{7, 0.0, 2.0, {}, 0};
  const auto path = build_path(log, LookdownState::star(7, 0.0), false);
  EXPECT_TRUE(path.jumps().empty());
  EXPECT_DOUBLE_EQ(path.eval(2.0), 14.0);
}

TEST(BuildPath, TwoLevelJumpsAreTwiceTheGap) {
  auto s = make_stream(41, 0);
  const auto log = simulate_events(2, 0.0, 20.0, s);
  ASSERT_GE(log.events.size(), 3u);
  const std::vector<double> births{0.0};
  const auto path = build_path(log, LookdownState::from_births(0.0, births), false);
  double prev = 0.0;
  for (const auto& j : path.jumps()) {
    EXPECT_TRUE(j.root_corrected);
    EXPECT_NEAR(j.magnitude, 2.0 * (j.time - prev), 1e-12);
    prev = j.time;
  }
}

TEST(BuildPath, RejectsMismatch) {
  const EventLog log{5, 1.0, 2.0, {}, 0};
  EXPECT_THROW(build_path(log, LookdownState::star(4, 1.0), false), ParameterError);
  EXPECT_THROW(build_path(log, LookdownState::star(5, 0.5), false), ParameterError);
}

TEST(BuildPath, JumpCountEqualsEventCount) {
  auto s = make_stream(42, 0);
  const auto log = simulate_events(25, 0.0, 3.0, s);
  const auto path = build_path(log, sample_stationary_state(25, 0.0, s), false);
  EXPECT_EQ(path.jumps().size(), log.events.size());
  EXPECT_EQ(extract_jumps(path, 0.0, 3.0).size(), log.events.size());
}

TEST(BuildPath, CompensationIsConstantShift) {
  auto s = make_stream(43, 0);
  const int N = 40;
  const auto log = simulate_events(N, 0.0, 1.0, s);
  const auto init = sample_stationary_state(N, 0.0, s);
  const auto raw = build_path(log, init, false);
  const auto comp = build_path(log, init, true);
  for (double t = 0.0; t <= 1.0; t += 0.01) EXPECT_NEAR(raw.eval(t) - comp.eval(t), 2.0 * std::log(N), 1e-9);
}

TEST(BuildPath, DriftBetweenJumpsIsN) {
  auto s = make_stream(44, 0);
  const int N = 30;
  const auto log = simulate_events(N, 0.0, 1.0, s);
  const auto path = build_path(log, sample_stationary_state(N, 0.0, s), false);
  const auto jumps = path.jumps();
  for (std::size_t i = 1; i < jumps.size(); ++i) {
    const double drift = path.eval_left(jumps[i].time) - path.eval(jumps[i - 1].time);
    EXPECT_NEAR(drift, N * (jumps[i].time - jumps[i - 1].time), 1e-12 * std::abs(path.eval(jumps[i].time)) + 1e-12);
  }
}

TEST(Eval, PureDrift) {
  const auto p = TreeLengthPath::drift_only(1.0, 5.0, 0.0, 3.0);
  EXPECT_DOUBLE_EQ(p.eval(3.0), 6.0);
}

TEST(Eval, RightContinuous) {
  const auto p = TreeLengthPath::synthetic(0.0, 2.0, 0.0, 0.0, {Jump{1.0, 5.0, 5.0, false}});
  EXPECT_DOUBLE_EQ(p.eval(1.0), -5.0);
  EXPECT_DOUBLE_EQ(p.eval(0.999), 0.0);
  EXPECT_DOUBLE_EQ(p.eval_left(1.0) - p.eval(1.0), 5.0);
  EXPECT_THROW(p.eval(-0.1), DomainError);
}

TEST(Eval, InvalidJumpsRejected) {
  EXPECT_THROW(TreeLengthPath(2, 0.0, 1.0, 0.0, false, {Jump{0.0, 1.0, 1.0, false}}), ParameterError);
  EXPECT_THROW(TreeLengthPath(2, 0.0, 1.0, 0.0, false, {Jump{0.5, 0.0, 0.0, false}}), ParameterError);
  EXPECT_THROW(TreeLengthPath(2, 0.0, 1.0, 0.0, false, {Jump{0.5, 1.0, 1.0, false}, Jump{0.5, 1.0, 1.0, false}}),
               ParameterError);
}

TEST(StaticLength, SmallNMeans) {
  auto s = make_stream(45, 0);
  for (const int N : {2, 3, 11}) {
    RunningStats st;
    for (int i = 0; i < 100000; ++i) st.push(sample_static_kingman_length(N, s));
    EXPECT_NEAR(st.mean, 2.0 * harmonic(N - 1), 0.01 * 2.0 * harmonic(N - 1)) << N;
  }
  EXPECT_NEAR(2.0 * harmonic(10), 5.8579365, 1e-7);
}

TEST(StaticLength, VarianceMatchesSum) {
  auto s = make_stream(46, 0);
  const int N = 20;
  RunningStats st;
  for (int i = 0; i < 200000; ++i) st.push(sample_static_kingman_length(N, s));
  double var = 0.0;
  for (int k = 1; k < N; ++k) var += 4.0 / (static_cast<double>(k) * k);
  EXPECT_NEAR(st.variance(), var, 0.03 * var);
}

TEST(Backward, SingleMerger) {
  const EventLog pre{2, -1.0, 0.0, {Event{-0.4, 1, 2}}, 0};
  const EventLog window{2, 0.0, 1.0, {}, 0};
  EXPECT_DOUBLE_EQ(reconstruct_length_backward(window, pre, 0.5), 2.0 * 0.9);
}

TEST(Backward, HandBuiltThreeLevelLog) {
  // From the star at 0: (1->2) at 0.3 then (1->3) at 0.7.
  const EventLog pre{3, 0.0, 1.0, {Event{0.3, 1, 2}, Event{0.7, 1, 3}}, 0};
  auto state = LookdownState::star(3, 0.0);
  for (const auto& e : pre.events) state.apply(e);
  const EventLog window{3, 1.0, 2.0, {}, 0};
  // b_2 = 0.3, b_3 = 0.7 after the pushes; levels 2,3 born at 0.3 and 0.7
  const std::vector<double> births{state.birth_time(2), state.birth_time(3)};
  const double forward = tree_length_of_state(LookdownState::from_births(1.0, births));
  EXPECT_DOUBLE_EQ(reconstruct_length_backward(window, pre, 1.0), forward);
}

TEST(Backward, InsufficientHistoryThrows) {
  const EventLog pre{4, -1.0, 0.0, {Event{-0.5, 1, 2}}, 0};
  const EventLog window{4, 0.0, 1.0, {}, 0};
  EXPECT_THROW(reconstruct_length_backward(window, pre, 0.5), InsufficientHistoryError);
}

TEST(Backward, AgreesWithEngineOnRandomLogs) {
  auto s = make_stream(47, 0);
  for (const int N : {2, 3, 5, 20, 50}) {
    for (int rep = 0; rep < 5; ++rep) {
      const auto sc = scenario(N, 0.0, 1.0, 30.0, s);
      const auto path = build_path(sc.window, sc.at_start, false);
      for (int q = 0; q < 50; ++q) {
        const double t = s.uniform_open_closed();
        ASSERT_LT(rel(path.eval(t), reconstruct_length_backward(sc.window, sc.pre, t)), 1e-9) << N << " " << t;
      }
      auto end_state = sc.at_start;
      for (const auto& e : sc.window.events) end_state.apply(e);
      EXPECT_LT(rel(tree_length_of_state(end_state) + N * (1.0 - end_state.now()),
                    reconstruct_length_backward(sc.window, sc.pre, 1.0)),
                1e-9);
    }
  }
}

TEST(Backward, DroppedEventIsDetected) {
  auto s = make_stream(48, 0);
  const auto sc = scenario(50, 0.0, 1.0, 30.0, s);
  auto broken = sc.window;
  broken.events.pop_back();  // an early drop can be washed out by t = 1
  const auto path = build_path(broken, sc.at_start, false);
  EXPECT_GT(rel(path.eval(1.0), reconstruct_length_backward(sc.window, sc.pre, 1.0)), 1e-9);
}

TEST(Stationarity, LengthLawIsTimeInvariant) {
  auto s = make_stream(49, 0);
  const int N = 10;
  std::vector<double> start, end;
  for (int r = 0; r < 2000; ++r) {
    const auto init = sample_stationary_state(N, 0.0, s);
    const auto path = build_path(simulate_events(N, 0.0, 5.0, s), init, false);
    start.push_back(path.eval(0.0));
    end.push_back(path.eval(5.0));
  }
  EXPECT_GT(ks_two_sample(start, end).p_value, 0.001);
}

TEST(Stationarity, StationaryStateLengthIsKingman) {
  auto a = make_stream(50, 0);
  auto b = make_stream(50, 1);
  std::vector<double> st, kg;
  for (int r = 0; r < 4000; ++r) {
    st.push_back(tree_length_of_state(sample_stationary_state(30, 0.0, a)));
    kg.push_back(sample_static_kingman_length(30, b));
  }
  EXPECT_GT(ks_two_sample(st, kg).p_value, 0.001);
}

// The root correction becomes rare as N grows. Windows hold ~2e5 jumps each.
TEST(RootCorrection, FractionShrinksWithN) {
  auto s = make_stream(51, 0);
  double prev = 1.0;
  for (const int N : {5, 20, 50}) {
    const double window = 2e5 / static_cast<double>(binom2(N));
    const auto path = build_path(simulate_events(N, 0.0, window, s), sample_stationary_state(N, 0.0, s), false);
    std::size_t corrected = 0;
    for (const auto& j : path.jumps()) {
      corrected += j.root_corrected;
      if (j.root_corrected) {
        EXPECT_GT(j.magnitude, j.exit_age);
      } else {
        EXPECT_EQ(j.magnitude, j.exit_age);
      }
    }
    const double frac = static_cast<double>(corrected) / static_cast<double>(path.jumps().size());
    EXPECT_LT(frac, prev);
    prev = frac;
  }
}

TEST(TwoTime, MatchesPathRoute) {
  const int N = 60;
  const double eps = 0.05;
  auto a = make_stream(52, 0);
  const auto by_path = path_increment_sampler(N, RunOptions{52, 1});
  std::vector<double> fast_start, fast_inc, path_start, path_inc;
  for (std::size_t r = 0; r < 3000; ++r) {
    const auto f = sample_two_time_lengths(N, eps, a);
    fast_start.push_back(f.at_start);
    fast_inc.push_back(f.at_end - f.at_start);
    const auto p = by_path(eps, r);
    path_start.push_back(p.at_start + compensation(N));
    path_inc.push_back(p.at_end - p.at_start);
  }
  EXPECT_GT(ks_two_sample(fast_start, path_start).p_value, 0.001);
  EXPECT_GT(ks_two_sample(fast_inc, path_inc).p_value, 0.001);
}

TEST(TwoTime, EndLengthIsKingman) {
  auto a = make_stream(53, 0);
  auto b = make_stream(53, 1);
  std::vector<double> ends, kg;
  for (int r = 0; r < 4000; ++r) {
    ends.push_back(sample_two_time_lengths(40, 0.2, a).at_end);
    kg.push_back(sample_static_kingman_length(40, b));
  }
  EXPECT_GT(ks_two_sample(ends, kg).p_value, 0.001);
}
