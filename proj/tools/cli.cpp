#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <type_traits>

#include "CLI11.hpp"
#include "ergodic/catalog.hpp"
#include "ergodic/diagnostics.hpp"
#include "ergodic/errors.hpp"
#include "ergodic/format.hpp"
#include "ergodic/harness.hpp"

namespace ergodic::cli {

namespace {

struct ExperimentFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> model, scheme, innovation, weights, f, checkpoints, steps_kind;
  std::optional<double> xi, gamma1;
  std::optional<std::uint64_t> n_steps, replications, seed;
  std::optional<unsigned> threads;
  std::string out_path;
  std::string format;
  bool assert_pass = false;
  bool verbose = false;
};

struct ProbeFlags {
  std::string kind = "recursive";
  std::vector<double> gammas{1e-3};
  double alpha = 2.0;
  double beta = 4.0;
  std::optional<double> alpha_tilde;
  double p = 1.0;
  double a = 1.0;
  int order = 5;
  std::vector<double> point{1.0};
  std::size_t mc_samples = 0;
};

void add_experiment_flags(CLI::App& app, ExperimentFlags& flags) {
  app.add_option("--config", flags.config_path, "flat key = value config file");
  app.add_option("--set", flags.sets, "override one config key, key=value (repeatable)");
  app.add_option("--model", flags.model, "ou1d | double_well | ou_nd");
  app.add_option("--scheme", flags.scheme, "euler | talay2");
  app.add_option("--innovation", flags.innovation, "gaussian | rademacher | three_point");
  app.add_option("--step-kind", flags.steps_kind, "power_law | constant");
  app.add_option("--xi", flags.xi, "step decay exponent");
  app.add_option("--gamma1", flags.gamma1, "first step");
  app.add_option("--weights", flags.weights, "proportional | trapezoidal | power");
  app.add_option("--f", flags.f, "observable, e.g. x^2 or x1*x2");
  app.add_option("--n-steps", flags.n_steps, "number of steps");
  app.add_option("--replications", flags.replications, "number of replications");
  app.add_option("--seed", flags.seed, "master seed (default $ERGODIC_SEED or 1)");
  app.add_option("--checkpoints", flags.checkpoints, "comma-separated increasing n values");
  app.add_option("--threads", flags.threads, "worker cap (default: available parallelism)");
  app.add_option("--out", flags.out_path, "output file (default: stdout)");
  app.add_option("--format", flags.format, "csv | json (default: from the --out extension, else csv)");
  app.add_flag("--assert", flags.assert_pass, "exit 1 when the report misses its tolerance");
  app.add_flag("-v,--verbose", flags.verbose, "print report details on stderr");
}

ExperimentConfig resolve_config(const ExperimentFlags& flags) {
  ExperimentConfig config;
  if (const char* env = std::getenv("ERGODIC_SEED"); env && *env) {
    set_config_value(config, "seed", env);
  }
  if (!flags.config_path.empty()) config = load_config(flags.config_path, config);
  auto set = [&](const char* key, const auto& value) {
    if (!value) return;
    if constexpr (std::is_same_v<std::decay_t<decltype(*value)>, std::string>) {
      set_config_value(config, key, *value);
    } else if constexpr (std::is_same_v<std::decay_t<decltype(*value)>, double>) {
      set_config_value(config, key, format_double(*value));
    } else {
      set_config_value(config, key, std::to_string(*value));
    }
  };
  set("model", flags.model);
  set("scheme", flags.scheme);
  set("innovation", flags.innovation);
  set("step.kind", flags.steps_kind);
  set("step.xi", flags.xi);
  set("step.gamma1", flags.gamma1);
  set("weight.kind", flags.weights);
  set("f", flags.f);
  set("checkpoints", flags.checkpoints);
  set("n_steps", flags.n_steps);
  set("replications", flags.replications);
  set("seed", flags.seed);
  set("threads", flags.threads);
  for (const auto& assignment : flags.sets) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    set_config_value(config, assignment.substr(0, eq), assignment.substr(eq + 1));
  }
  return config;
}

std::optional<std::filesystem::path> output_path(const ExperimentFlags& flags, const ExperimentConfig& config) {
  if (!flags.out_path.empty()) return std::filesystem::path(flags.out_path);
  if (!config.output.empty()) return std::filesystem::path(config.output);
  return std::nullopt;
}

Format output_format(const ExperimentFlags& flags, const std::optional<std::filesystem::path>& path) {
  if (!flags.format.empty()) return parse_format(flags.format);
  return path ? format_for(*path) : Format::csv;
}

template <class Report>
void deliver(const Report& report, const ExperimentFlags& flags, const ExperimentConfig& config, std::ostream& out) {
  const auto path = output_path(flags, config);
  const Format format = output_format(flags, path);
  if (path) {
    emit(report, format, *path);
  } else if (format == Format::json) {
    out << to_json(report).dump(2) << '\n';
  } else {
    write_csv(report, out);
  }
}

void deliver_json(const nlohmann::json& json, const ExperimentFlags& flags, const ExperimentConfig& config,
                  std::ostream& out) {
  const auto path = output_path(flags, config);
  if (!flags.format.empty() && parse_format(flags.format) != Format::json) {
    throw ConfigError("probe reports are written as JSON only");
  }
  if (path) {
    write_file(*path, json.dump(2) + "\n");
  } else {
    out << json.dump(2) << '\n';
  }
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

int run_simulate(const ExperimentFlags& flags, std::ostream& out, std::ostream& err) {
  const ExperimentConfig config = resolve_config(flags);
  const auto trace = run_trace(config);
  const auto path = output_path(flags, config);
  const Format format = output_format(flags, path);
  std::string text;
  if (format == Format::json) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : trace) rows.push_back({{"n", r.n}, {"gamma_n", r.gamma}, {"H_n", r.h}, {"value", r.value}});
    text = nlohmann::json{{"kind", "simulate"}, {"config", to_json(config)}, {"trace", rows}}.dump(2) + "\n";
  } else {
    std::ostringstream csv;
    write_csv(trace, csv);
    text = csv.str();
  }
  if (path) {
    write_file(*path, text);
  } else {
    out << text;
  }
  if (!trace.empty()) err << "nu_n(" << config.f << ") = " << format_double(trace.back().value) << " at n = " << trace.back().n << '\n';
  return kExitOk;
}

int run_clt(const ExperimentFlags& flags, std::ostream& out, std::ostream& err) {
  const ExperimentConfig config = resolve_config(flags);
  const CltReport report = run_clt_experiment(config);
  deliver(report, flags, config, out);
  print_warnings(report.warnings, err);
  err << "regime " << to_string(report.regime) << ", predicted variance " << format_double(report.predicted_variance)
      << " (" << report.variance_source << ")\n";
  bool pass = !report.failed && !report.summaries.empty();
  for (const auto& s : report.summaries) {
    err << "n = " << s.n << ": mean " << format_double(s.stats.mean) << " (hypothesis "
        << format_double(s.mean_hypothesis) << "), variance " << format_double(s.stats.variance) << ", KS "
        << format_double(s.ks.distance) << " vs " << format_double(s.ks.critical) << (s.ks.pass ? " pass" : " fail")
        << '\n';
  }
  if (!report.summaries.empty()) pass = pass && report.summaries.back().ks.pass;
  if (report.failed) err << "too many replications diverged\n";
  return flags.assert_pass && !pass ? kExitFail : kExitOk;
}

int run_rate(const ExperimentFlags& flags, std::ostream& out, std::ostream& err) {
  const ExperimentConfig config = resolve_config(flags);
  const RateReport report = run_rate_experiment(config);
  deliver(report, flags, config, out);
  if (flags.verbose) print_warnings(report.warnings, err);
  err << "slope " << format_double(report.fit.slope) << " [" << format_double(report.fit.ci_low) << ", "
      << format_double(report.fit.ci_high) << "], target " << format_double(report.target) << " +- "
      << format_double(report.tolerance) << (report.within_tolerance ? ": within tolerance" : ": outside tolerance")
      << '\n';
  const bool pass = report.within_tolerance && !report.failed;
  return flags.assert_pass && !pass ? kExitFail : kExitOk;
}

int run_wasserstein(const ExperimentFlags& flags, std::ostream& out, std::ostream& err) {
  const ExperimentConfig config = resolve_config(flags);
  const ErgodicReport report = run_ergodic_experiment(config);
  deliver(report, flags, config, out);
  print_warnings(report.warnings, err);
  bool decreasing = !report.mean_w1.empty();
  for (std::size_t i = 0; i < report.checkpoints.size(); ++i) {
    err << "n = " << report.checkpoints[i] << ": mean nu_n(f) " << format_double(report.mean_value[i]);
    if (!report.mean_w1.empty()) {
      err << ", mean W1 " << format_double(report.mean_w1[i]);
      if (i > 0 && !(report.mean_w1[i] < report.mean_w1[i - 1])) decreasing = false;
    }
    err << '\n';
  }
  const bool pass = decreasing && !report.failed;
  return flags.assert_pass && !pass ? kExitFail : kExitOk;
}

int run_probe(const ExperimentFlags& flags, const ProbeFlags& probe, std::ostream& out, std::ostream& err) {
  const ExperimentConfig config = resolve_config(flags);
  const Experiment e = build_experiment(config);
  if (probe.kind == "moments") {
    const MomentMatchReport report = moment_match_report(e.chain.innovation, probe.order);
    deliver_json(to_json(report), flags, config, out);
    err << to_string(config.innovation) << " matches Gaussian moments through order " << report.matched_order << '\n';
    return flags.assert_pass && report.matched_order < report.up_to ? kExitFail : kExitOk;
  }
  if (probe.kind == "weak-order") {
    const std::vector<double>& x = probe.point;
    if (x.size() != e.model.dim) throw ConfigError("--x needs " + std::to_string(e.model.dim) + " coordinates");
    const WeakOrderReport report = weak_order_probe(config.scheme, e.model, e.f, x, probe.gammas, e.chain.innovation);
    deliver_json(to_json(report), flags, config, out);
    const double expected = std::pow(2.0, weak_order(config.scheme) + 1);
    bool pass = !report.ratios.empty();
    for (double r : report.ratios) {
      err << "error ratio " << format_double(r) << '\n';
      if (!(std::abs(r - expected) <= 0.25 * expected)) pass = false;
    }
    return flags.assert_pass && !pass ? kExitFail : kExitOk;
  }
  if (probe.kind != "recursive") {
    throw ConfigError("unknown probe kind '" + probe.kind + "' (expected recursive, moments or weak-order)");
  }
  const LyapunovSpec lyapunov = quadratic_lyapunov(e.model.dim, probe.alpha, probe.beta, probe.p, probe.a);
  RecursiveControlOptions options;
  options.innovation = e.chain.innovation;
  options.alpha_tilde = probe.alpha_tilde;
  if (probe.mc_samples > 0) options.quadrature = MonteCarlo{probe.mc_samples, config.seed};
  const auto grid = default_grid(e.model.dim);
  if (probe.gammas.size() == 1) {
    const ProbeReport report = recursive_control_probe(config.scheme, e.model, lyapunov, probe.gammas[0], grid, options);
    deliver_json(to_json(report), flags, config, out);
    err << "recursive control at gamma = " << format_double(probe.gammas[0]) << ": " << to_string(report.verdict)
        << ", worst margin " << format_double(report.worst_margin) << '\n';
    return flags.assert_pass && report.verdict != Verdict::pass ? kExitFail : kExitOk;
  }
  const StepSweep sweep = recursive_control_sweep(config.scheme, e.model, lyapunov, probe.gammas, grid, options);
  nlohmann::json json = {{"kind", "recursive_control_sweep"}, {"gammas", sweep.gammas}};
  for (auto v : sweep.verdicts) json["verdicts"].push_back(to_string(v));
  json["holds_up_to"] = sweep.holds_up_to ? nlohmann::json(*sweep.holds_up_to) : nlohmann::json();
  deliver_json(json, flags, config, out);
  bool pass = true;
  for (std::size_t i = 0; i < sweep.gammas.size(); ++i) {
    err << "gamma = " << format_double(sweep.gammas[i]) << ": " << to_string(sweep.verdicts[i]) << '\n';
    pass = pass && sweep.verdicts[i] == Verdict::pass;
  }
  return flags.assert_pass && !pass ? kExitFail : kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Invariant measures of ergodic diffusions by decreasing-step weighted empirical measures"};
  app.name("ergodic");
  app.require_subcommand(1);

  ExperimentFlags flags;
  ProbeFlags probe;
  auto* simulate = app.add_subcommand("simulate", "one trajectory: trace of nu_n(f)");
  auto* clt = app.add_subcommand("clt", "normalized CLT statistic over replications");
  auto* rate = app.add_subcommand("rate", "RMS error of nu_n(Af) and its log-log slope");
  auto* wasserstein = app.add_subcommand("wasserstein", "W1 distance of nu_n to the invariant law");
  auto* probe_cmd = app.add_subcommand("probe", "recursive control, moment matching and weak order probes");
  for (auto* sub : {simulate, clt, rate, wasserstein, probe_cmd}) add_experiment_flags(*sub, flags);
  probe_cmd->add_option("--kind", probe.kind, "recursive | moments | weak-order");
  probe_cmd->add_option("--gamma", probe.gammas, "step(s); several steps run a sweep")->delimiter(',');
  probe_cmd->add_option("--alpha", probe.alpha, "Lyapunov alpha for V = 1 + |x|^2");
  probe_cmd->add_option("--beta", probe.beta, "Lyapunov beta");
  probe_cmd->add_option("--alpha-tilde", probe.alpha_tilde, "discrete-time alpha (default alpha)");
  probe_cmd->add_option("--p", probe.p, "exponent of psi_p(y) = y^p");
  probe_cmd->add_option("--a", probe.a, "exponent of phi(y) = y^a");
  probe_cmd->add_option("--order", probe.order, "highest moment order checked");
  probe_cmd->add_option("--x", probe.point, "starting point for the weak order probe, comma-separated")->delimiter(',');
  probe_cmd->add_option("--mc-samples", probe.mc_samples, "Monte Carlo samples instead of enumeration");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (simulate->parsed()) return run_simulate(flags, out, err);
    if (clt->parsed()) return run_clt(flags, out, err);
    if (rate->parsed()) return run_rate(flags, out, err);
    if (wasserstein->parsed()) return run_wasserstein(flags, out, err);
    return run_probe(flags, probe, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFail;
  } catch (const InsufficientOrderError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFail;
  }
}

}  // namespace ergodic::cli
