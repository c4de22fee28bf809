#include "ergodic/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "ergodic/errors.hpp"
#include "ergodic/format.hpp"

namespace ergodic {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) parts.push_back(trim(part));
  return parts;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError("invalid value '" + value + "' for key '" + key + "': " + why);
}

double to_double(const std::string& key, const std::string& value) {
  const std::string t = trim(value);
  double out = 0.0;
  const auto result = std::from_chars(t.data(), t.data() + t.size(), out);
  if (t.empty() || result.ec != std::errc{} || result.ptr != t.data() + t.size() || !std::isfinite(out)) {
    bad_value(key, value, "expected a finite number");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  const std::string t = trim(value);
  std::uint64_t out = 0;
  const auto result = std::from_chars(t.data(), t.data() + t.size(), out);
  if (t.empty() || result.ec != std::errc{} || result.ptr != t.data() + t.size()) {
    // Accept integral scientific notation such as 1e5.
    const double d = to_double(key, value);
    if (d < 0.0 || d != std::floor(d) || d > 1.8e19) bad_value(key, value, "expected a non-negative integer");
    return static_cast<std::uint64_t>(d);
  }
  return out;
}

template <class Parse>
auto wrap(const std::string& key, const std::string& value, Parse&& parse) {
  try {
    return parse(trim(value));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    bad_value(key, value, e.what());
  }
}

using Setter = void (*)(ExperimentConfig&, const std::string&, const std::string&);

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"model", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.model = trim(v); }},
      {"model.theta", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.theta = to_double(k, v); }},
      {"model.sigma", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.sigma = to_double(k, v); }},
      {"model.theta_matrix",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         wrap(k, v, [](const std::string& t) { return parse_matrix(t); });
         c.theta_matrix = trim(v);
       }},
      {"model.sigma_matrix",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         wrap(k, v, [](const std::string& t) { return parse_matrix(t); });
         c.sigma_matrix = trim(v);
       }},
      {"scheme",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.scheme = wrap(k, v, [](const std::string& t) { return parse_scheme(t); });
       }},
      {"innovation",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.innovation = wrap(k, v, [](const std::string& t) { return parse_innovation_kind(t); });
       }},
      {"step.kind",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.step_kind = wrap(k, v, [](const std::string& t) { return parse_step_kind(t); });
       }},
      {"step.gamma1", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.gamma1 = to_double(k, v); }},
      {"step.xi", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.xi = to_double(k, v); }},
      {"weight.kind",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.weight_kind = wrap(k, v, [](const std::string& t) { return parse_weight_kind(t); });
       }},
      {"weight.c", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.weight_c = to_double(k, v); }},
      {"weight.r", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.weight_r = to_double(k, v); }},
      {"f", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.f = trim(v); }},
      {"n_steps", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.n_steps = to_u64(k, v); }},
      {"replications",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.replications = to_u64(k, v); }},
      {"seed", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); }},
      {"checkpoints",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         std::vector<std::uint64_t> list;
         if (!trim(v).empty()) {
           for (const auto& item : split(v, ',')) list.push_back(to_u64(k, item));
         }
         for (std::size_t i = 0; i < list.size(); ++i) {
           if (list[i] == 0 || (i > 0 && list[i] <= list[i - 1])) {
             bad_value(k, v, "checkpoints must be positive and strictly increasing");
           }
         }
         c.checkpoints = std::move(list);
       }},
      {"x0",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         std::vector<double> x;
         if (!trim(v).empty()) {
           for (const auto& item : split(v, ',')) x.push_back(to_double(k, item));
         }
         c.x0 = std::move(x);
       }},
      {"output", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output = trim(v); }},
      {"threads",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.threads = static_cast<unsigned>(to_u64(k, v));
       }},
      {"buffer_capacity",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.buffer_capacity = to_u64(k, v); }},
      {"burn_in", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.burn_in = to_u64(k, v); }},
      {"regime_horizon",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.regime_horizon = to_u64(k, v); }},
  };
  return table;
}

std::string join(const std::vector<std::uint64_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_double(values[i]);
  return out;
}

unsigned resolve_threads(unsigned requested, std::size_t work) {
  unsigned t = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(t, work)));
}

// Runs body(experiment, r) for r = 0..count-1 on up to `threads` workers. Each
// worker builds its own Experiment; results are stored by replication index.
template <class Result, class Body>
std::vector<Result> run_replications(const ExperimentConfig& config, std::size_t count, Body body) {
  std::vector<Result> results(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    try {
      Experiment experiment = build_experiment(config);
      for (std::size_t r = next++; r < count; r = next++) results[r] = body(experiment, r);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = count;
    }
  };
  const unsigned threads = resolve_threads(config.threads, count);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& thread : pool) thread.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

// Calls back after the measure has absorbed the record of X_{k-1} for each checkpoint k.
class CheckpointTrigger final : public StateSink {
 public:
  template <class Callback>
  CheckpointTrigger(std::span<const std::uint64_t> checkpoints, Callback&& callback)
      : checkpoints_(checkpoints), callback_(std::forward<Callback>(callback)) {}

  void observe(std::uint64_t k, ConstVec, double, double) override {
    while (next_ < checkpoints_.size() && checkpoints_[next_] == k) {
      callback_(next_, k);
      ++next_;
    }
  }

 private:
  std::span<const std::uint64_t> checkpoints_;
  std::function<void(std::size_t, std::uint64_t)> callback_;
  std::size_t next_ = 0;
};

// Feeds a measure with weights gamma_k instead of eta_k.
class StepWeighted final : public StateSink {
 public:
  explicit StepWeighted(WeightedEmpiricalMeasure& measure) : measure_(measure) {}
  void observe(std::uint64_t, ConstVec x, double gamma, double) override { measure_.record(x, gamma); }

 private:
  WeightedEmpiricalMeasure& measure_;
};

struct Outcome {
  bool diverged = false;
  DivergedReplication divergence;
};

// Simulates one replication, turning a divergence into a record.
Outcome run_chain(const ExperimentConfig& config, const Experiment& e, std::size_t r, std::uint64_t n_steps,
                  std::span<StateSink* const> sinks) {
  Outcome outcome;
  RandomStream rng(config.seed, r);
  try {
    simulate(e.chain, e.model, e.weights, n_steps, e.x0, rng, sinks);
  } catch (const DivergenceError& err) {
    outcome.diverged = true;
    outcome.divergence = {r, config.seed, err.step(), err.what()};
  }
  return outcome;
}

bool too_many_excluded(std::size_t excluded, std::size_t total) {
  return static_cast<double>(excluded) > 0.05 * static_cast<double>(total);
}

Quadrature operator_quadrature(const InnovationDist& innovation, std::uint64_t seed) {
  if (innovation.finite_support()) return Enumerate{};
  return MonteCarlo{4096, seed};
}

void require_clt_schedule(const ExperimentConfig& config) {
  if (config.step_kind != StepKind::power_law) throw ConfigError("CLT and rate experiments need power-law steps");
  if (config.weight_kind == WeightKind::power) {
    throw ConfigError("CLT and rate experiments need proportional or trapezoidal weights");
  }
  if (config.burn_in != 0) throw ConfigError("burn_in is not supported for CLT and rate experiments");
}

void add_order_warnings(const ExperimentConfig& config, int q, std::vector<std::string>& warnings) {
  const InnovationDist innovation{config.innovation, 1};
  if (innovation.matching_order() < 2 * q + 1) {
    warnings.push_back("innovation " + to_string(config.innovation) + " matches Gaussian moments only through order " +
                       std::to_string(innovation.matching_order()) + ", below the required " +
                       std::to_string(2 * q + 1));
  }
  const WeightKind expected = q == 2 ? WeightKind::trapezoidal : WeightKind::proportional;
  if (config.weight_kind != expected) {
    warnings.push_back(to_string(config.weight_kind) + " weights do not match the order-" + std::to_string(q) +
                       " expansion of the " + to_string(config.scheme) + " scheme");
  } else if (config.scheme == Scheme::talay2 && q == 1) {
    warnings.push_back("talay2 with proportional weights uses the first-order expansion");
  }
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [key, setter] : setters()) out.push_back(key);
    return out;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const std::string k = trim(key);
  for (const auto& [name, setter] : setters()) {
    if (name == k) {
      setter(config, k, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + k + "'");
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
    }
    set_config_value(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"model", c.model},
          {"model.theta", c.theta},
          {"model.sigma", c.sigma},
          {"model.theta_matrix", c.theta_matrix},
          {"model.sigma_matrix", c.sigma_matrix},
          {"scheme", to_string(c.scheme)},
          {"innovation", to_string(c.innovation)},
          {"step.kind", to_string(c.step_kind)},
          {"step.gamma1", c.gamma1},
          {"step.xi", c.xi},
          {"weight.kind", to_string(c.weight_kind)},
          {"weight.c", c.weight_c},
          {"weight.r", c.weight_r},
          {"f", c.f},
          {"n_steps", c.n_steps},
          {"replications", c.replications},
          {"seed", c.seed},
          {"checkpoints", join(c.checkpoints)},
          {"x0", join(c.x0)},
          {"buffer_capacity", c.buffer_capacity},
          {"burn_in", c.burn_in},
          {"regime_horizon", c.regime_horizon}};
}

std::vector<std::uint64_t> effective_checkpoints(const ExperimentConfig& config) {
  std::vector<std::uint64_t> out = config.checkpoints;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] == 0 || (i > 0 && out[i] <= out[i - 1])) {
      throw ConfigError("checkpoints must be positive and strictly increasing");
    }
  }
  if (!out.empty() && out.back() > config.n_steps) {
    throw ConfigError("checkpoint " + std::to_string(out.back()) + " exceeds n_steps = " +
                      std::to_string(config.n_steps));
  }
  if (config.n_steps == 0) throw ConfigError("n_steps must be positive");
  if (out.empty() || out.back() != config.n_steps) out.push_back(config.n_steps);
  return out;
}

Experiment build_experiment(const ExperimentConfig& config) {
  Experiment e;
  if (config.model == "ou1d") {
    e.model = ou1d(config.theta, config.sigma);
    if (config.theta > 0.0 && config.sigma != 0.0) e.law = ou1d_invariant(config.theta, config.sigma);
  } else if (config.model == "double_well") {
    e.model = double_well(config.sigma);
    if (config.sigma != 0.0) e.law = double_well_invariant(config.sigma);
  } else if (config.model == "ou_nd") {
    if (config.theta_matrix.empty() || config.sigma_matrix.empty()) {
      throw ConfigError("model ou_nd needs model.theta_matrix and model.sigma_matrix");
    }
    const Matrix theta = parse_matrix(config.theta_matrix);
    const Matrix sigma = parse_matrix(config.sigma_matrix);
    e.model = ou_nd(theta, sigma);
    try {
      e.law = ou_nd_invariant(theta, sigma);
    } catch (const Error&) {
      e.law.reset();
    }
  } else {
    throw ConfigError("unknown model '" + config.model + "' (expected ou1d, double_well or ou_nd)");
  }

  try {
    e.steps = config.step_kind == StepKind::power_law ? StepSchedule::power_law(config.gamma1, config.xi)
                                                      : StepSchedule::constant(config.gamma1);
    switch (config.weight_kind) {
      case WeightKind::proportional:
        e.weights = WeightSchedule::proportional(e.steps, config.weight_c);
        break;
      case WeightKind::trapezoidal:
        e.weights = WeightSchedule::trapezoidal(e.steps, config.weight_c);
        break;
      case WeightKind::power:
        e.weights = WeightSchedule::power(e.steps, config.weight_r);
        break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& err) {
    throw ConfigError(std::string("invalid schedule: ") + err.what());
  }

  e.f = parse_observable(config.f, e.model.dim);
  e.chain = ChainSpec{config.scheme, InnovationDist{config.innovation, e.model.noise_dim}};
  if (config.x0.empty()) {
    e.x0.assign(e.model.dim, 0.0);
  } else if (config.x0.size() == e.model.dim) {
    e.x0 = config.x0;
  } else {
    throw ConfigError("x0 has " + std::to_string(config.x0.size()) + " coordinates, the model has " +
                      std::to_string(e.model.dim));
  }
  return e;
}

int clt_order(Scheme scheme, WeightKind weights) {
  return scheme == Scheme::talay2 && weights == WeightKind::trapezoidal ? 2 : 1;
}

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::A_centered:
      return "A_centered";
    case Regime::B_mixed:
      return "B_mixed";
    case Regime::C_bias:
      return "C_bias";
  }
  return "unknown";
}

double regime_exponent(double xi, int q) { return (1.0 - xi) / 2.0 - std::max(0.0, 1.0 - (q + 1) * xi); }

Regime analytic_regime(double xi, int q) {
  const double e = regime_exponent(xi, q);
  if (e > kRegimeSlopeThreshold) return Regime::A_centered;
  if (e < -kRegimeSlopeThreshold) return Regime::C_bias;
  return Regime::B_mixed;
}

RegimeClassification classify_regime(const StepSchedule& steps, int q, std::uint64_t n_max) {
  if (steps.kind() != StepKind::power_law) throw ConfigError("regime classification needs power-law steps");
  if (q < 1) throw ConfigError("regime classification needs q >= 1");
  if (n_max < 10'000) throw ConfigError("regime classification needs a horizon of at least 10^4");

  std::vector<std::uint64_t> grid;
  for (int j = 0;; ++j) {
    const auto n = static_cast<std::uint64_t>(std::llround(std::pow(10.0, 3.0 + j / 4.0)));
    if (n >= n_max) break;
    grid.push_back(n);
  }
  grid.push_back(n_max);

  RegimeClassification out;
  out.n = grid;
  CompensatedSum big_gamma;
  CompensatedSum h;
  std::size_t next = 0;
  for (std::uint64_t k = 1; k <= n_max; ++k) {
    const double g = steps.gamma(k);
    big_gamma.add(g);
    h.add(std::pow(g, q + 1));
    if (k == grid[next]) {
      out.ratio.push_back(std::sqrt(big_gamma.value()) / h.value());
      ++next;
    }
  }

  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (10 * grid[i] >= n_max) {
      lx.push_back(std::log(static_cast<double>(grid[i])));
      ly.push_back(std::log(out.ratio[i]));
    }
  }
  const auto m = static_cast<double>(lx.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i] / m;
    my += ly[i] / m;
  }
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  out.slope = sxy / sxx;
  out.regime = out.slope > kRegimeSlopeThreshold    ? Regime::A_centered
               : out.slope < -kRegimeSlopeThreshold ? Regime::C_bias
                                                    : Regime::B_mixed;
  out.analytic = analytic_regime(steps.xi(), q);
  if (out.regime != out.analytic) {
    throw Error("internal inconsistency: regime trend " + to_string(out.regime) + " (slope " +
                format_double(out.slope) + ") disagrees with the analytic rule " + to_string(out.analytic) +
                " for xi = " + format_double(steps.xi()) + ", q = " + std::to_string(q));
  }
  return out;
}

KsResult ks_normality(std::span<const double> samples, double variance, double mean) {
  if (!(variance > 0.0) || !std::isfinite(variance)) throw Error("KS test needs a positive variance hypothesis");
  if (samples.size() < 50) throw Error("KS test needs at least 50 samples, got " + std::to_string(samples.size()));
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const boost::math::normal_distribution<double> law(mean, std::sqrt(variance));
  const auto r = static_cast<double>(sorted.size());
  KsResult out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = boost::math::cdf(law, sorted[i]);
    out.distance = std::max({out.distance, (i + 1) / r - f, f - i / r});
  }
  out.critical = kKsCoefficient01 / std::sqrt(r);
  out.pass = out.distance < out.critical;
  return out;
}

CltReport run_clt_experiment(const ExperimentConfig& config) {
  require_clt_schedule(config);
  if (config.replications < 2) throw ConfigError("CLT experiments need at least 2 replications");

  CltReport report;
  report.config = config;
  report.q = clt_order(config.scheme, config.weight_kind);
  report.checkpoints = effective_checkpoints(config);
  const Experiment base = build_experiment(config);
  report.classification = classify_regime(base.steps, report.q, config.regime_horizon);
  report.regime = report.classification.regime;
  add_order_warnings(config, report.q, report.warnings);

  const std::size_t capacity = config.buffer_capacity ? config.buffer_capacity : 4096;
  const std::size_t pooled = std::min<std::size_t>(4, config.replications);
  const std::uint64_t n_last = report.checkpoints.back();

  struct Replication {
    Outcome outcome;
    std::vector<double> statistic;
    double vf = 0.0;
    std::vector<double> states;
    std::vector<double> weights;
  };
  const auto results = run_replications<Replication>(config, config.replications, [&](Experiment& e, std::size_t r) {
    Replication rep;
    MeasureOptions options;
    if (r < pooled) options.buffer_capacity = capacity;
    WeightedEmpiricalMeasure af(e.model.dim, options);
    af.add_observable("Af", generator_observable(e.model, e.f));
    WeightedEmpiricalMeasure vf(e.model.dim);
    const DiffusionModel* model = &e.model;
    const Observable* f = &e.f;
    vf.add_observable("Vf", Observable{[model, f](ConstVec x) { return vf_operator(*model, *f, x); }, nullptr, 0});
    StepWeighted vf_sink(vf);
    rep.statistic.resize(report.checkpoints.size());
    CheckpointTrigger trigger(report.checkpoints, [&](std::size_t i, std::uint64_t n) {
      const double norm = e.weights.big_h(n) / (e.weights.c() * std::sqrt(e.steps.big_gamma(n)));
      rep.statistic[i] = norm * af.value("Af");
    });
    StateSink* sinks[] = {&af, &vf_sink, &trigger};
    rep.outcome = run_chain(config, e, r, n_last, sinks);
    if (rep.outcome.diverged) return rep;
    rep.vf = vf.value("Vf");
    if (const auto& buffer = af.buffer()) {
      for (std::size_t i = 0; i < buffer->size(); ++i) {
        const auto s = buffer->state(i);
        rep.states.insert(rep.states.end(), s.begin(), s.end());
        rep.weights.push_back(buffer->weight(i));
      }
    }
    return rep;
  });

  report.samples.assign(report.checkpoints.size(), {});
  double vf_sum = 0.0;
  std::vector<double> states;
  std::vector<double> weights;
  for (std::size_t r = 0; r < results.size(); ++r) {
    const auto& rep = results[r];
    if (rep.outcome.diverged) {
      report.diverged.push_back(rep.outcome.divergence);
      continue;
    }
    report.replications.push_back(r);
    for (std::size_t i = 0; i < report.checkpoints.size(); ++i) report.samples[i].push_back(rep.statistic[i]);
    vf_sum += rep.vf;
    states.insert(states.end(), rep.states.begin(), rep.states.end());
    weights.insert(weights.end(), rep.weights.begin(), rep.weights.end());
  }
  report.failed = too_many_excluded(report.diverged.size(), config.replications);
  if (!report.diverged.empty()) {
    report.warnings.push_back(std::to_string(report.diverged.size()) + " replication(s) diverged and were excluded");
  }
  const std::size_t kept = report.replications.size();
  if (kept == 0) return report;
  report.ergodic_variance = vf_sum / static_cast<double>(kept);

  const Experiment& e = base;
  if (e.law) {
    report.predicted_variance = e.law->expect([&](ConstVec x) { return vf_operator(e.model, e.f, x); });
    report.variance_source = "analytic";
    if (std::abs(report.ergodic_variance - report.predicted_variance) > 0.1 * std::abs(report.predicted_variance)) {
      report.warnings.push_back("ergodic estimate of nu(Vf) " + format_double(report.ergodic_variance) +
                                " differs from the analytic value " + format_double(report.predicted_variance) +
                                " by more than 10%");
    }
  } else {
    report.predicted_variance = report.ergodic_variance;
    report.variance_source = "ergodic";
  }

  if (report.regime != Regime::A_centered) {
    const Quadrature quadrature = operator_quadrature(e.chain.innovation, config.seed);
    const Observable af = generator_observable(e.model, e.f);
    auto mf = [&](ConstVec x) {
      if (report.q == 2) return m2_talay(e.model, e.f, af, x, e.chain.innovation, quadrature).value;
      if (config.scheme == Scheme::talay2) return m1_talay(e.model, e.f, x, e.chain.innovation, quadrature).value;
      return m1_euler(e.model, e.f, x, e.chain.innovation, quadrature).value;
    };
    if (!weights.empty()) {
      CompensatedSum num;
      CompensatedSum den;
      const std::size_t d = e.model.dim;
      for (std::size_t i = 0; i < weights.size(); ++i) {
        num.add(weights[i] * mf(ConstVec(states).subspan(i * d, d)));
        den.add(weights[i]);
      }
      report.nu_mf_empirical = num.value() / den.value();
    }
    if (e.law) {
      report.nu_mf = e.law->expect(mf);
      report.nu_mf_source = "analytic";
    } else if (report.nu_mf_empirical) {
      report.nu_mf = report.nu_mf_empirical;
      report.nu_mf_source = "empirical";
    }
  }

  // H_{gamma^{q+1}, n} at every checkpoint in one pass.
  std::vector<double> h_bias(report.checkpoints.size());
  {
    CompensatedSum h;
    std::size_t next = 0;
    for (std::uint64_t k = 1; k <= n_last; ++k) {
      h.add(std::pow(e.steps.gamma(k), report.q + 1));
      if (k == report.checkpoints[next]) h_bias[next++] = h.value();
    }
  }

  for (std::size_t i = 0; i < report.checkpoints.size(); ++i) {
    const std::uint64_t n = report.checkpoints[i];
    CheckpointSummary s;
    s.n = n;
    s.normalization = e.weights.big_h(n) / (e.weights.c() * std::sqrt(e.steps.big_gamma(n)));
    if (report.nu_mf) {
      const double lhat_inverse = h_bias[i] / std::sqrt(e.steps.big_gamma(n));
      s.mean_hypothesis = lhat_inverse * *report.nu_mf;
      if (i + 1 == report.checkpoints.size()) report.lhat_inverse = lhat_inverse;
    }
    if (kept >= 2) s.stats = merge_statistics(report.samples[i]);
    s.ks.critical = kKsCoefficient01 / std::sqrt(static_cast<double>(kept));
    s.ks.distance = std::numeric_limits<double>::quiet_NaN();
    if (report.predicted_variance > 0.0 && kept >= 50) {
      s.ks = ks_normality(report.samples[i], report.predicted_variance, s.mean_hypothesis);
    }
    report.summaries.push_back(s);
  }
  if (!(report.predicted_variance > 0.0)) {
    report.warnings.push_back("predicted variance is not positive; KS test skipped");
  } else if (kept < 50) {
    report.warnings.push_back("fewer than 50 replications; KS test skipped");
  }
  return report;
}

LogLogFit fit_log_log(std::span<const double> n, std::span<const double> error) {
  if (n.size() != error.size()) throw Error("log-log fit needs matching n and error lists");
  if (n.size() < 2) throw Error("log-log fit needs at least 2 points");
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!(n[i] > 0.0) || !(error[i] > 0.0)) throw Error("log-log fit needs positive n and error values");
    lx.push_back(std::log(n[i]));
    ly.push_back(std::log(error[i]));
  }
  const auto m = static_cast<double>(lx.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw Error("log-log fit needs distinct n values");
  LogLogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.ci_low = fit.ci_high = std::numeric_limits<double>::quiet_NaN();
  if (lx.size() > 2) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      const double res = ly[i] - fit.intercept - fit.slope * lx[i];
      ssr += res * res;
    }
    const double se = std::sqrt(ssr / (m - 2.0) / sxx);
    const boost::math::students_t_distribution<double> t(m - 2.0);
    const double half = boost::math::quantile(t, 0.975) * se;
    fit.ci_low = fit.slope - half;
    fit.ci_high = fit.slope + half;
  }
  return fit;
}

double rate_target(double xi, int q) { return -std::min(q * xi, 0.5 - xi / 2.0); }

RateReport run_rate_experiment(const ExperimentConfig& config) {
  require_clt_schedule(config);
  if (config.replications < 50) throw ConfigError("rate experiments need at least 50 replications");
  RateReport report;
  report.config = config;
  report.n = effective_checkpoints(config);
  if (report.n.size() < 3) throw ConfigError("rate experiments need at least 3 grid points");
  report.q = clt_order(config.scheme, config.weight_kind);
  add_order_warnings(config, report.q, report.warnings);
  report.warnings.push_back("grid points share trajectories, so the slope interval treats correlated errors as independent");

  struct Replication {
    Outcome outcome;
    std::vector<double> value;
  };
  const auto results = run_replications<Replication>(config, config.replications, [&](Experiment& e, std::size_t r) {
    Replication rep;
    WeightedEmpiricalMeasure af(e.model.dim);
    af.add_observable("Af", generator_observable(e.model, e.f));
    rep.value.resize(report.n.size());
    CheckpointTrigger trigger(report.n, [&](std::size_t i, std::uint64_t) { rep.value[i] = af.value("Af"); });
    StateSink* sinks[] = {&af, &trigger};
    rep.outcome = run_chain(config, e, r, report.n.back(), sinks);
    return rep;
  });

  std::vector<CompensatedSum> squares(report.n.size());
  std::size_t kept = 0;
  for (const auto& rep : results) {
    if (rep.outcome.diverged) {
      report.diverged.push_back(rep.outcome.divergence);
      continue;
    }
    ++kept;
    for (std::size_t i = 0; i < report.n.size(); ++i) squares[i].add(rep.value[i] * rep.value[i]);
  }
  report.failed = too_many_excluded(report.diverged.size(), config.replications);
  report.target = rate_target(config.xi, report.q);
  if (kept == 0) return report;
  std::vector<double> n;
  for (std::size_t i = 0; i < report.n.size(); ++i) {
    report.rms_error.push_back(std::sqrt(squares[i].value() / static_cast<double>(kept)));
    n.push_back(static_cast<double>(report.n[i]));
  }
  report.fit = fit_log_log(n, report.rms_error);
  report.within_tolerance = std::abs(report.fit.slope - report.target) <= report.tolerance;
  return report;
}

ErgodicReport run_ergodic_experiment(const ExperimentConfig& config) {
  if (config.replications < 1) throw ConfigError("replications must be positive");
  ErgodicReport report;
  report.config = config;
  report.checkpoints = effective_checkpoints(config);
  const Experiment base = build_experiment(config);
  const bool with_w1 = base.law && base.law->law1d && base.model.dim == 1;
  if (!with_w1) report.warnings.push_back("no one-dimensional invariant law; W1 distances skipped");
  if (base.law) report.reference = base.law->expect([&](ConstVec x) { return base.f.value(x); });

  struct Replication {
    Outcome outcome;
    std::vector<double> value;
    std::vector<double> w1;
  };
  const std::size_t capacity = config.buffer_capacity ? config.buffer_capacity : 8192;
  const auto results = run_replications<Replication>(config, config.replications, [&](Experiment& e, std::size_t r) {
    Replication rep;
    MeasureOptions options;
    options.burn_in = config.burn_in;
    if (with_w1) options.buffer_capacity = capacity;
    WeightedEmpiricalMeasure measure(e.model.dim, options);
    measure.add_observable("f", e.f);
    rep.value.resize(report.checkpoints.size());
    if (with_w1) rep.w1.resize(report.checkpoints.size());
    CheckpointTrigger trigger(report.checkpoints, [&](std::size_t i, std::uint64_t) {
      rep.value[i] = measure.value("f");
      if (with_w1) rep.w1[i] = wasserstein1_to(measure, *e.law->law1d);
    });
    StateSink* sinks[] = {&measure, &trigger};
    rep.outcome = run_chain(config, e, r, report.checkpoints.back(), sinks);
    return rep;
  });

  report.values.assign(report.checkpoints.size(), {});
  if (with_w1) report.w1.assign(report.checkpoints.size(), {});
  for (std::size_t r = 0; r < results.size(); ++r) {
    const auto& rep = results[r];
    if (rep.outcome.diverged) {
      report.diverged.push_back(rep.outcome.divergence);
      continue;
    }
    report.replications.push_back(r);
    for (std::size_t i = 0; i < report.checkpoints.size(); ++i) {
      report.values[i].push_back(rep.value[i]);
      if (with_w1) report.w1[i].push_back(rep.w1[i]);
    }
  }
  report.failed = too_many_excluded(report.diverged.size(), config.replications);
  const auto mean = [](const std::vector<double>& v) {
    CompensatedSum s;
    for (double x : v) s.add(x);
    return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s.value() / static_cast<double>(v.size());
  };
  for (std::size_t i = 0; i < report.checkpoints.size(); ++i) {
    report.mean_value.push_back(mean(report.values[i]));
    if (with_w1) report.mean_w1.push_back(mean(report.w1[i]));
  }
  return report;
}

std::vector<TraceRow> run_trace(const ExperimentConfig& config) {
  std::vector<std::uint64_t> grid;
  if (config.checkpoints.empty()) {
    for (std::uint64_t decade = 1; decade <= config.n_steps; decade *= 10) {
      for (std::uint64_t m : {1, 2, 5}) {
        if (m * decade <= config.n_steps) grid.push_back(m * decade);
      }
      if (decade > config.n_steps / 10) break;
    }
    if (grid.empty() || grid.back() != config.n_steps) grid.push_back(config.n_steps);
  } else {
    grid = effective_checkpoints(config);
  }
  Experiment e = build_experiment(config);
  MeasureOptions options;
  options.burn_in = config.burn_in;
  WeightedEmpiricalMeasure measure(e.model.dim, options);
  measure.add_observable("f", e.f);
  std::vector<TraceRow> rows;
  CheckpointTrigger trigger(grid, [&](std::size_t, std::uint64_t n) {
    if (measure.count() == 0) return;
    rows.push_back({n, e.steps.gamma(n), measure.total_weight(), measure.value("f")});
  });
  StateSink* sinks[] = {&measure, &trigger};
  RandomStream rng(config.seed, 0);
  simulate(e.chain, e.model, e.weights, grid.back(), e.x0, rng, sinks);
  return rows;
}

Format parse_format(const std::string& text) {
  if (text == "csv") return Format::csv;
  if (text == "json") return Format::json;
  throw ConfigError("unknown format '" + text + "' (expected csv or json)");
}

Format format_for(const std::filesystem::path& path) {
  return path.extension() == ".json" ? Format::json : Format::csv;
}

namespace {

nlohmann::json diverged_json(const std::vector<DivergedReplication>& list) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& d : list) {
    out.push_back({{"replication", d.replication}, {"master_seed", d.master_seed}, {"step", d.step},
                   {"message", d.message}});
  }
  return out;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

template <class Report>
std::string render(const Report& report, Format format) {
  if (format == Format::json) return to_json(report).dump(2) + "\n";
  std::ostringstream out;
  write_csv(report, out);
  return out.str();
}

}  // namespace

nlohmann::json to_json(const CltReport& report) {
  nlohmann::json summaries = nlohmann::json::array();
  for (const auto& s : report.summaries) {
    summaries.push_back({{"n", s.n},
                         {"normalization", s.normalization},
                         {"mean_hypothesis", s.mean_hypothesis},
                         {"count", s.stats.count},
                         {"mean", s.stats.mean},
                         {"variance", s.stats.variance},
                         {"skewness", s.stats.skewness},
                         {"excess_kurtosis", s.stats.excess_kurtosis},
                         {"se_mean", s.stats.se_mean},
                         {"se_variance", s.stats.se_variance},
                         {"se_skewness", s.stats.se_skewness},
                         {"se_kurtosis", s.stats.se_kurtosis},
                         {"ks_distance", s.ks.distance},
                         {"ks_critical", s.ks.critical},
                         {"ks_pass", s.ks.pass}});
  }
  return {{"kind", "clt"},
          {"config", to_json(report.config)},
          {"q", report.q},
          {"regime", to_string(report.regime)},
          {"classification",
           {{"analytic", to_string(report.classification.analytic)},
            {"slope", report.classification.slope},
            {"n", report.classification.n},
            {"ratio", report.classification.ratio}}},
          {"checkpoints", report.checkpoints},
          {"replications", report.replications},
          {"samples", report.samples},
          {"summaries", summaries},
          {"predicted_variance", report.predicted_variance},
          {"variance_source", report.variance_source},
          {"ergodic_variance", report.ergodic_variance},
          {"nu_mf", optional_json(report.nu_mf)},
          {"nu_mf_source", report.nu_mf_source},
          {"nu_mf_empirical", optional_json(report.nu_mf_empirical)},
          {"lhat_inverse", optional_json(report.lhat_inverse)},
          {"diverged", diverged_json(report.diverged)},
          {"failed", report.failed},
          {"warnings", report.warnings}};
}

nlohmann::json to_json(const RateReport& report) {
  return {{"kind", "rate"},
          {"config", to_json(report.config)},
          {"q", report.q},
          {"n", report.n},
          {"rms_error", report.rms_error},
          {"slope", report.fit.slope},
          {"intercept", report.fit.intercept},
          {"slope_ci", {report.fit.ci_low, report.fit.ci_high}},
          {"target", report.target},
          {"tolerance", report.tolerance},
          {"within_tolerance", report.within_tolerance},
          {"diverged", diverged_json(report.diverged)},
          {"failed", report.failed},
          {"warnings", report.warnings}};
}

nlohmann::json to_json(const ErgodicReport& report) {
  return {{"kind", "wasserstein"},
          {"config", to_json(report.config)},
          {"checkpoints", report.checkpoints},
          {"replications", report.replications},
          {"values", report.values},
          {"w1", report.w1},
          {"mean_value", report.mean_value},
          {"mean_w1", report.mean_w1},
          {"reference", optional_json(report.reference)},
          {"diverged", diverged_json(report.diverged)},
          {"failed", report.failed},
          {"warnings", report.warnings}};
}

void write_csv(const CltReport& report, std::ostream& out) {
  out << "checkpoint_n,replication,statistic\n";
  for (std::size_t i = 0; i < report.samples.size(); ++i) {
    for (std::size_t j = 0; j < report.samples[i].size(); ++j) {
      out << report.checkpoints[i] << ',' << report.replications[j] << ',' << format_double(report.samples[i][j])
          << '\n';
    }
  }
}

void write_csv(const RateReport& report, std::ostream& out) {
  out << "n,rms_error\n";
  for (std::size_t i = 0; i < report.rms_error.size(); ++i) {
    out << report.n[i] << ',' << format_double(report.rms_error[i]) << '\n';
  }
}

void write_csv(const ErgodicReport& report, std::ostream& out) {
  out << "checkpoint_n,replication,value,w1\n";
  for (std::size_t i = 0; i < report.values.size(); ++i) {
    for (std::size_t j = 0; j < report.values[i].size(); ++j) {
      out << report.checkpoints[i] << ',' << report.replications[j] << ',' << format_double(report.values[i][j]) << ',';
      if (!report.w1.empty()) out << format_double(report.w1[i][j]);
      out << '\n';
    }
  }
}

void write_csv(std::span<const TraceRow> trace, std::ostream& out) {
  out << "n,gamma_n,H_n,value\n";
  for (const auto& row : trace) {
    out << row.n << ',' << format_double(row.gamma) << ',' << format_double(row.h) << ',' << format_double(row.value)
        << '\n';
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

void emit(const CltReport& report, Format format, const std::filesystem::path& path) {
  write_file(path, render(report, format));
}

void emit(const RateReport& report, Format format, const std::filesystem::path& path) {
  write_file(path, render(report, format));
}

void emit(const ErgodicReport& report, Format format, const std::filesystem::path& path) {
  write_file(path, render(report, format));
}

}  // namespace ergodic
