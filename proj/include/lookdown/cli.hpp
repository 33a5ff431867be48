#pragma once

// Command-line front end. Flags are shared by all subcommands; a flag left
// unset falls back to the --config file, then to the subcommand default.
//
// Exit codes: 0 no failed verdict, 1 some verdict failed, 2 usage error,
// 3 runtime error.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lookdown/error.hpp"
#include "lookdown/experiments.hpp"
#include "lookdown/report.hpp"
#include "lookdown/svg.hpp"
#include "lookdown/treelength.hpp"

namespace lookdown {

inline constexpr const char* kOutDirEnv = "LOOKDOWN_OUT_DIR";
inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitError = 3;

struct CliConfig {
  std::string subcommand;
  std::optional<int> n;
  std::optional<double> t0;
  std::optional<double> t1;
  std::uint64_t seed = 1;
  std::optional<std::size_t> reps;
  std::optional<int> levels;
  std::vector<int> k_grid;
  std::vector<int> n_grid;
  std::optional<int> mesh_min;
  std::optional<int> mesh_max;
  std::optional<double> mesh_factor;
  std::vector<double> eps;
  std::optional<std::string> out;
  std::string format = "csv";
  bool svg = false;
  unsigned workers = 1;
  std::optional<double> burn_in;
  std::optional<double> tol;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> queries;
  std::optional<double> history;
  std::optional<std::string> events;
  std::optional<std::string> lines;
  bool raw = false;
};

namespace cli_detail {

inline std::vector<double> column(const ExperimentReport& report, std::string_view table, std::string_view name) {
  const auto* t = report.find_table(table);
  if (t == nullptr) return {};
  const auto c = t->column_index(name);
  if (!c) return {};
  std::vector<double> out;
  for (const auto& row : t->rows) out.push_back(row[*c].get<double>());
  return out;
}

inline Series zip(std::string label, const std::vector<double>& xs, const std::vector<double>& ys) {
  Series s{std::move(label), {}};
  for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i) s.points.emplace_back(xs[i], ys[i]);
  return s;
}

inline std::string chart_for(const ExperimentReport& r) {
  AxesConfig axes;
  axes.title = r.experiment;
  std::vector<Series> series;
  const auto& e = r.experiment;
  if (e == "mean-length") {
    auto n = column(r, "convergence", "reps_used");
    for (auto& x : n) x = std::log2(x);
    series.push_back(zip("running mean", n, column(r, "convergence", "running_mean")));
    series.push_back(zip("2 h(N-1)", n, column(r, "convergence", "expected")));
    axes.x_label = "log2 replicates";
    axes.y_label = "mean length";
  } else if (e == "gumbel") {
    const auto x = column(r, "ecdf", "x");
    series.push_back(zip("empirical", x, column(r, "ecdf", "empirical")));
    series.push_back(zip("Gumbel", x, column(r, "ecdf", "gumbel")));
    axes.x_label = "length/2 - ln N";
    axes.y_label = "CDF";
    axes.step = true;
  } else if (e == "poisson-deaths") {
    const auto k = column(r, "levels", "level");
    series.push_back(zip("mean count", k, column(r, "levels", "mean_count")));
    series.push_back(zip("(k-1)(t-s)", k, column(r, "levels", "expected_count")));
    axes.x_label = "level k";
    axes.y_label = "deaths in window";
  } else if (e == "divergence") {
    const auto x = column(r, "summary", "ln_K");
    const auto fit_slope = column(r, "fit", "slope");
    const auto fit_icpt = column(r, "fit", "intercept");
    std::vector<double> line;
    for (const double v : x) line.push_back(fit_icpt.at(0) + fit_slope.at(0) * v);
    series.push_back(zip("mean S", x, column(r, "summary", "mean_S")));
    series.push_back(zip("OLS fit", x, line));
    axes.x_label = "ln K";
    axes.y_label = "sum of squared life lengths";
  } else if (e == "qv-scan") {
    const auto ns = column(r, "scan", "N");
    const auto lv = column(r, "scan", "level");
    const auto qv = column(r, "scan", "mean_qv");
    for (std::size_t i = 0; i < ns.size();) {
      Series s{"N=" + format_double(ns[i]), {}};
      const double n = ns[i];
      for (; i < ns.size() && ns[i] == n; ++i) s.points.emplace_back(lv[i], qv[i]);
      if (s.points.size() >= 2) series.push_back(std::move(s));
    }
    axes.x_label = "dyadic level m (mesh (t-s)/2^m)";
    axes.y_label = "mean QV";
  } else if (e == "variance-scaling") {
    const auto x = column(r, "ratios", "log10_eps");
    series.push_back(zip("ratio", x, column(r, "ratios", "ratio")));
    series.push_back(zip("limit 4", x, std::vector<double>(x.size(), tolerances::kVarianceLimit)));
    axes.x_label = "log10 eps";
    axes.y_label = "E[increment^2] / (eps |ln eps|)";
  } else if (e == "crosscheck") {
    const auto p = column(r, "quantiles", "probability");
    series.push_back(zip("static", column(r, "quantiles", "static"), p));
    series.push_back(zip("evolved", column(r, "quantiles", "evolved"), p));
    axes.x_label = "tree length";
    axes.y_label = "CDF";
    axes.step = true;
  }
  std::erase_if(series, [](const Series& s) { return s.points.empty(); });
  if (series.empty()) throw ParameterError("svg: report has no chartable table");
  return emit_svg(series, axes);
}

inline std::filesystem::path default_dir() {
  if (const char* dir = std::getenv(kOutDirEnv); dir != nullptr && *dir != '\0') return dir;
  return ".";
}

// Opened before any work starts so an unwritable path is a usage error.
inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw ParameterError("cannot write output file: " + p.string());
  return os;
}

template <class T>
T value_or(const std::optional<T>& v, T fallback) {
  return v ? *v : fallback;
}

inline std::vector<double> default_eps() { return {std::pow(10.0, -1.5), 1e-2, std::pow(10.0, -2.5)}; }

inline ExperimentReport run_experiment(const CliConfig& c) {
  const RunOptions opts{c.seed, c.workers};
  const auto& s = c.subcommand;
  if (s == "mean-length") return run_mean_length(value_or(c.n, 100), value_or<std::size_t>(c.reps, 20000), opts);
  if (s == "gumbel") return run_gumbel(value_or(c.n, 10000), value_or<std::size_t>(c.reps, 2000), opts);
  const double t0 = value_or(c.t0, 0.0);
  const double burn_in = value_or(c.burn_in, kDefaultBurnIn);
  const double tol = value_or(c.tol, LifeLengthSampler::kDefaultTol);
  if (s == "poisson-deaths")
    return run_poisson_deaths(value_or(c.levels, 40), t0, value_or(c.t1, t0 + 5.0), value_or<std::size_t>(c.reps, 200),
                              opts, burn_in, tol);
  if (s == "divergence") {
    const std::vector<int> grid =
        c.k_grid.empty() ? std::vector<int>{16, 32, 64, 128, 256, 512, 1024, 2048, 4096} : c.k_grid;
    return run_divergence(grid, t0, value_or(c.t1, t0 + 1.0), value_or<std::size_t>(c.reps, 100), opts, burn_in, tol);
  }
  if (s == "qv-scan") {
    std::vector<int> grid = c.n_grid;
    if (grid.empty()) grid = c.n ? std::vector<int>{*c.n} : std::vector<int>{50, 100, 200, 400, 800};
    return run_qv_scan(grid, t0, value_or(c.t1, t0 + 1.0), value_or<std::size_t>(c.reps, 20), opts,
                       value_or(c.mesh_min, 1), value_or(c.mesh_factor, tolerances::kQvMeshFactor), c.mesh_max);
  }
  if (s == "variance-scaling")
    return run_variance_scaling(value_or(c.n, 10000), c.eps.empty() ? default_eps() : c.eps,
                                value_or<std::size_t>(c.reps, 10000), opts);
  if (s == "crosscheck")
    return run_crosscheck(value_or(c.n, 50), t0, value_or(c.t1, t0 + 1.0), opts, value_or<std::size_t>(c.samples, 2000),
                          value_or<std::size_t>(c.queries, 100), value_or(c.history, kDefaultHistory));
  throw ParameterError("unknown subcommand " + s);
}

inline std::filesystem::path svg_path_for(const CliConfig& c) {
  if (c.out) return std::filesystem::path(*c.out).replace_extension(".svg");
  return default_dir() / (c.subcommand + ".svg");
}

inline int simulate_path_command(const CliConfig& c, std::ostream& out) {
  const int N = value_or(c.n, 30);
  const double t0 = value_or(c.t0, 0.0);
  const double t1 = value_or(c.t1, t0 + 5.0);
  detail::require(N >= 2, "simulate-path: N must be at least 2");
  detail::require(t0 < t1, "simulate-path: need t0 < t1");

  std::optional<std::ofstream> file, events, lines, svg;
  if (c.out) file = open_output(*c.out);
  if (c.events) events = open_output(*c.events);
  if (c.lines) lines = open_output(*c.lines);
  if (c.svg) svg = open_output(svg_path_for(c));

  auto stream = replicate_stream({c.seed, 1}, ExperimentOrdinal::kSimulatePath, 0);
  const auto sim = simulate_stationary_path(N, t0, t1, stream, !c.raw);
  const Json params{{"N", N}, {"t0", t0}, {"t1", t1}, {"compensated", !c.raw}};

  std::ostream& os = file ? static_cast<std::ostream&>(*file) : out;
  if (c.format == "json") {
    Json j{{"experiment", "simulate-path"}, {"params", params}, {"seed", c.seed}, {"generator", kGeneratorId},
           {"version", kToolVersion}, {"v0", sim.path.v0()}};
    Json rows = Json::array();
    for (const auto& jump : sim.path.jumps())
      rows.push_back({jump.time, sim.path.eval(jump.time), jump.magnitude, jump.exit_age, jump.root_corrected});
    j["jumps"] = {{"columns", {"time", "value_right_limit", "jump_magnitude", "exit_age", "root_corrected"}},
                  {"rows", std::move(rows)}};
    os << j.dump(2) << "\n";
  } else {
    write_path_csv(os, sim.path, c.seed, Json{{"t1", t1}});
  }
  if (events) write_event_log_csv(*events, sim.log, c.seed);
  if (lines) write_line_records_csv(*lines, sim.exited, c.seed, params);
  if (svg) {
    AxesConfig axes;
    axes.title = std::string(c.raw ? "tree length" : "compensated tree length") + ", N=" + std::to_string(N) +
                 ", seed=" + std::to_string(c.seed);
    axes.x_label = "time";
    axes.y_label = c.raw ? "length" : "length - 2 ln N";
    *svg << emit_svg({Series{"path", sim.path.polyline(t1)}}, axes);
  }
  return kExitPass;
}

inline int experiment_command(const CliConfig& c, std::ostream& out, std::ostream& err) {
  std::optional<std::ofstream> file, svg;
  if (c.out)
    file = open_output(*c.out);
  else if (std::getenv(kOutDirEnv) != nullptr)
    file = open_output(default_dir() / (c.subcommand + (c.format == "json" ? ".json" : ".csv")));
  if (c.svg) svg = open_output(svg_path_for(c));

  const auto report = run_experiment(c);
  std::ostream& os = file ? static_cast<std::ostream&>(*file) : out;
  if (c.format == "json")
    os << to_json(report).dump(2) << "\n";
  else
    write_report_csv(os, report);
  if (svg) *svg << chart_for(report);

  for (const auto& v : report.verdicts)
    err << to_string(v.status) << "  " << v.name << "  observed=" << format_double(v.observed)
        << "  expected=" << format_double(v.expected) << "  tolerance=" << format_double(v.tolerance) << "\n";
  return report.any_failed() ? kExitFail : kExitPass;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CliConfig c;
  CLI::App app{"Look-down tree length simulator and experiment runner", "lookdown"};
  app.set_version_flag("--version", kToolVersion);
  app.set_config("--config", "", "key = value file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1, 1);

  app.add_option("--n", c.n, "population size N")->check(CLI::Range(2, 100000000));
  app.add_option("--t0", c.t0, "window start");
  app.add_option("--t1", c.t1, "window end");
  app.add_option("--seed", c.seed, "root seed");
  app.add_option("--reps", c.reps, "replicates")->check(CLI::PositiveNumber);
  app.add_option("--levels", c.levels, "highest level K (levels 2..K)")->check(CLI::Range(3, 100000000));
  app.add_option("--k-grid", c.k_grid, "comma-separated K grid")->delimiter(',')->check(CLI::Range(2, 100000000));
  app.add_option("--n-grid", c.n_grid, "comma-separated N grid")->delimiter(',')->check(CLI::Range(2, 100000000));
  app.add_option("--mesh-min", c.mesh_min, "coarsest dyadic level")->check(CLI::Range(1, 40));
  app.add_option("--mesh-max", c.mesh_max, "finest dyadic level (default from mesh factor)")->check(CLI::Range(1, 40));
  app.add_option("--mesh-factor", c.mesh_factor, "finest mesh below 1/(factor C(N,2))")->check(CLI::Range(1.0, 1e6));
  app.add_option("--eps", c.eps, "comma-separated eps grid")->delimiter(',');
  app.add_option("--out", c.out, "output file (default stdout, or $" + std::string(kOutDirEnv) + ")");
  app.add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app.add_flag("--svg", c.svg, "also write an SVG chart next to the output");
  app.add_option("--workers", c.workers, "worker threads")->check(CLI::Range(1u, 1024u));
  app.add_option("--burn-in", c.burn_in, "burn-in in units of mean inter-birth time")->check(CLI::PositiveNumber);
  app.add_option("--tol", c.tol, "life-length truncation tolerance")->check(CLI::Range(1e-15, 1.0));
  app.add_option("--samples", c.samples, "crosscheck samples per arm")->check(CLI::PositiveNumber);
  app.add_option("--queries", c.queries, "crosscheck query times")->check(CLI::PositiveNumber);
  app.add_option("--history", c.history, "crosscheck pre-window history length")->check(CLI::PositiveNumber);
  app.add_option("--events", c.events, "simulate-path: event log CSV");
  app.add_option("--lines", c.lines, "simulate-path: exited line records CSV");
  app.add_flag("--raw", c.raw, "simulate-path: uncompensated length");

  static constexpr std::pair<const char*, const char*> kSubcommands[] = {
      {"simulate-path", "tree length path on [t0, t1] from a stationary start"},
      {"mean-length", "stationary mean length vs 2 h(N-1)"},
      {"gumbel", "length/2 - ln N against the Gumbel law"},
      {"poisson-deaths", "death times of levels 2..K as rate k-1 Poisson processes"},
      {"divergence", "sum of squared life lengths up to level K vs ln K"},
      {"qv-scan", "dyadic quadratic variation of the path vs mesh and N"},
      {"variance-scaling", "E[increment^2] / (eps |ln eps|) over an eps grid"},
      {"crosscheck", "incremental length vs backward reconstruction and static Kingman"},
  };
  for (const auto& [name, about] : kSubcommands) {
    app.add_subcommand(name, about)->fallthrough()->callback([&c, n = name] { c.subcommand = n; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }
  for (const double e : c.eps)
    if (!(e > 0.0)) {
      err << "usage error: --eps values must be positive\n" << app.help();
      return kExitUsage;
    }

  try {
    if (c.subcommand == "simulate-path") return cli_detail::simulate_path_command(c, out);
    return cli_detail::experiment_command(c, out, err);
  } catch (const ParameterError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace lookdown
