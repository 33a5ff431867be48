// Acceptance gate: runs criteria 1-8 at their stated sizes and tolerances and
// prints one PASS/FAIL line per criterion. Exit status is nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lookdown/cli.hpp"
#include "lookdown/experiments.hpp"

using namespace lookdown;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double cell(const ExperimentReport& r, const std::string& table, std::size_t row, const std::string& col) {
  const auto* t = r.find_table(table);
  return t->rows.at(row).at(*t->column_index(col)).get<double>();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Outcome mean_length() {
  const auto r = run_mean_length(100, 20000, {1, 1});
  const double rel = cell(r, "summary", 0, "relative_error");
  return {rel < 0.005, fmt("relative error %.5f (< 0.005)", rel)};
}

Outcome gumbel() {
  const auto r = run_gumbel(10000, 2000, {1, 1});
  const double d = cell(r, "ks", 0, "D");
  const double p = cell(r, "ks", 0, "p_value");
  return {d < 0.06 && p > 0.001, fmt("D %.4f (< 0.06), p %.4f (> 0.001)", d, p)};
}

Outcome poisson() {
  const auto r = run_poisson_deaths(40, 0.0, 5.0, 200, {1, 1});
  const double frac = cell(r, "summary", 0, "ks_rejection_fraction");
  const double misses = cell(r, "summary", 0, "mean_failures");
  const double rho = cell(r, "summary", 0, "max_abs_correlation");
  const double bonf = cell(r, "summary", 0, "bonferroni_threshold");
  return {frac <= 0.15 && misses == 0.0 && rho < 0.2,
          fmt("gap-KS rejection fraction %.3f (<= 0.15), levels off by > 3 SE %.0f (= 0), ", frac, misses) +
              fmt("max |rho| %.3f (< 0.2; family-wise 5%% null threshold %.3f)", rho, bonf)};
}

Outcome divergence() {
  const auto r = run_divergence({16, 32, 64, 128, 256, 512, 1024, 2048, 4096}, 0.0, 1.0, 100, {1, 1});
  const double slope = cell(r, "fit", 0, "slope");
  const double bad = cell(r, "fit", 0, "non_monotone_replicates");
  return {std::abs(slope - 4.0) <= 1.0 && bad == 0.0,
          fmt("slope %.3f (within 25%% of 4), non-increasing replicates %.0f", slope, bad)};
}

Outcome qv() {
  const auto single = run_qv_scan({500}, 0.0, 1.0, 5, {1, 1});
  const double worst500 = cell(single, "by_N", 0, "max_relative_error");
  const auto scan = run_qv_scan({50, 100, 200, 400, 800}, 0.0, 1.0, 20, {1, 1});
  const double slope = cell(scan, "fit", 0, "slope");
  return {worst500 <= 0.05 && std::abs(slope - 4.0) <= 0.3 * 4.0,
          fmt("N=500 finest-mesh QV vs jump squares max rel %.4f (<= 0.05), plateau slope %.3f (within 30%% of 4)",
              worst500, slope)};
}

Outcome variance() {
  const std::vector<double> eps{std::pow(10.0, -1.5), 1e-2, std::pow(10.0, -2.5)};
  const auto r = run_variance_scaling(10000, eps, 10000, {1, 1});
  bool ok = true;
  std::string detail = "ratios";
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double ratio = cell(r, "ratios", i, "ratio");
    const double se = cell(r, "ratios", i, "ratio_se");
    ok = ok && std::abs(ratio - 4.0) <= 0.35 * 4.0;
    detail += fmt(" eps=%.4g: %.3f +- %.3f;", eps[i], ratio, se);
  }
  return {ok, detail + " (each within 35% of 4)"};
}

Outcome oracle() {
  const auto r = run_crosscheck(50, 0.0, 1.0, {1, 1});
  const double err = cell(r, "exact", 0, "max_relative_error");
  const double neg = cell(r, "exact", 0, "negative_control_error");
  return {err < 1e-9 && neg > 1e-9,
          fmt("max relative error %.3g (< 1e-9) over 100 queries, dropped-event control error %.3g (> 1e-9)", err, neg)};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lookdown");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

double max_relative_difference(const ExperimentReport& a, const ExperimentReport& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.tables.size(); ++t)
    for (std::size_t r = 0; r < a.tables[t].rows.size(); ++r)
      for (std::size_t c = 0; c < a.tables[t].columns.size(); ++c) {
        const auto& x = a.tables[t].rows[r][c];
        const auto& y = b.tables.at(t).rows.at(r).at(c);
        if (x.is_number_float()) {
          const double u = x.get<double>(), v = y.get<double>();
          if (u != v) worst = std::max(worst, std::abs(u - v) / std::max(std::abs(u), std::abs(v)));
        } else if (x != y) {
          return INFINITY;
        }
      }
  return worst;
}

Outcome reproducibility() {
  const fs::path dir = fs::temp_directory_path() / "lookdown_acceptance_repro";
  fs::remove_all(dir);
  const std::vector<std::vector<std::string>> runs{
      {"simulate-path", "--n", "30", "--t1", "5", "--seed", "7"},
      {"mean-length", "--n", "50", "--reps", "2000", "--seed", "3"},
      {"gumbel", "--n", "1000", "--reps", "300", "--seed", "3"},
      {"poisson-deaths", "--levels", "10", "--reps", "60", "--seed", "3"},
      {"divergence", "--k-grid", "4,16,64,400", "--reps", "10", "--seed", "3"},
      {"qv-scan", "--n-grid", "20,40,80", "--reps", "3", "--seed", "3"},
      {"variance-scaling", "--n", "1000", "--eps", "0.01", "--reps", "500", "--seed", "3"},
      {"crosscheck", "--n", "30", "--samples", "300", "--seed", "3"}};
  std::size_t files = 0;
  bool identical = true;
  for (const auto& base : runs) {
    for (const char* fmt_name : {"csv", "json"}) {
      std::string texts[2][2];
      for (int rep = 0; rep < 2; ++rep) {
        const fs::path sub = dir / (base.front() + "_" + fmt_name + "_" + std::to_string(rep));
        fs::create_directories(sub);
        auto args = base;
        args.insert(args.end(), {"--format", fmt_name, "--out", (sub / "out.dat").string(), "--svg"});
        if (cli(args) >= kExitUsage) return {false, "run failed: " + base.front()};
        texts[rep][0] = slurp(sub / "out.dat");
        texts[rep][1] = slurp(sub / "out.svg");
      }
      files += 2;
      identical = identical && texts[0][0] == texts[1][0] && texts[0][1] == texts[1][1] && !texts[0][0].empty();
    }
  }
  fs::remove_all(dir);

  double worst = 0.0;
  const auto cmp = [&](const std::function<ExperimentReport(unsigned)>& f) {
    worst = std::max(worst, max_relative_difference(f(1), f(4)));
  };
  cmp([](unsigned w) { return run_mean_length(50, 2000, {3, w}); });
  cmp([](unsigned w) { return run_gumbel(1000, 300, {3, w}); });
  cmp([](unsigned w) { return run_poisson_deaths(10, 0.0, 5.0, 60, {3, w}); });
  cmp([](unsigned w) { return run_divergence({4, 16, 64, 400}, 0.0, 1.0, 10, {3, w}); });
  cmp([](unsigned w) { return run_qv_scan({20, 40, 80}, 0.0, 1.0, 3, {3, w}); });
  cmp([](unsigned w) { return run_variance_scaling(1000, {0.01}, 500, {3, w}); });
  cmp([](unsigned w) { return run_crosscheck(30, 0.0, 1.0, {3, w}, 300); });
  return {identical && worst <= 1e-12,
          fmt("%.0f output files byte-identical across reruns: ", static_cast<double>(files)) +
              (identical ? "yes" : "no") + fmt("; max relative change 1 vs 4 workers %.3g (<= 1e-12)", worst)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "stationary mean length", 10, mean_length},
      {2, "Gumbel limit", 60, gumbel},
      {3, "Poisson death processes", 120, poisson},
      {4, "divergence rate of squared life lengths", 120, divergence},
      {5, "empirical quadratic variation", 300, qv},
      {6, "infinitesimal variance", 600, variance},
      {7, "oracle equivalence", 5, oracle},
      {8, "reproducibility", 600, reproducibility},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail
              << fmt(" | runtime %.1fs (< %.0fs)", secs, c.budget_seconds) << (in_time ? "" : " OVER BUDGET") << "\n"
              << std::flush;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << "\n";
  return failures == 0 ? 0 : 1;
}
