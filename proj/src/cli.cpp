#include "cfdro/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "cfdro/data.hpp"
#include "cfdro/errors.hpp"
#include "cfdro/intervals.hpp"
#include "cfdro/numeric.hpp"
#include "cfdro/optimize.hpp"

#ifndef CFDRO_VERSION
#define CFDRO_VERSION "0.0.0"
#endif
#ifndef CFDRO_REVISION
#define CFDRO_REVISION "unknown"
#endif

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace cfdro {

std::string version_string() { return std::string("cfdro ") + CFDRO_VERSION + " (" + CFDRO_REVISION + ")"; }

namespace {

// Bad flags, bad paths, bad values: exit code 1.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// 7 points, log-spaced over [1e-4, 1]
const std::vector<double> kDefaultLambdaGrid = [] {
  std::vector<double> g;
  for (int k = 0; k <= 6; ++k) g.push_back(std::pow(10.0, -4.0 + 2.0 * k / 3.0));
  return g;
}();

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

// --- shared option groups ----------------------------------------------------

struct CommonArgs {
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned jobs = 1;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("CF_DRO_SEED"); env && *env) {
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(env, &pos);
      if (pos != std::string(env).size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw UsageError(std::string("CF_DRO_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  return 0;
}

void add_common(CLI::App* cmd, CommonArgs& a, bool out_required) {
  cmd->add_option("--seed", a.seed, "Base random seed (falls back to CF_DRO_SEED, then 0)");
  auto* o = cmd->add_option("--out", a.out, "Fresh output directory");
  if (out_required) o->required();
  cmd->add_option("--jobs", a.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

void prepare_out_dir(const std::string& path) {
  const fs::path p(path);
  if (fs::exists(p)) {
    if (!fs::is_directory(p)) throw UsageError("--out '" + path + "' exists and is not a directory");
    if (!fs::is_empty(p)) throw UsageError("--out '" + path + "' is not empty; outputs go to a fresh directory");
  }
  fs::create_directories(p);
}

void require_file(const std::string& path, const char* flag) {
  if (!fs::is_regular_file(path)) throw UsageError(std::string(flag) + ": no such file '" + path + "'");
}

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw UsageError("--delta must lie in (0, 1)");
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
  return f;
}

void write_config(const std::string& dir, ojson config) {
  config["version"] = version_string();
  auto f = open_out(fs::path(dir) / "config.json");
  f << config.dump(2) << '\n';
}

struct SplitArgs {
  double train = 0.5, validation = 0.25, test = 0.25, logging = 0.1;
  std::optional<std::size_t> num_labels;
  double temperature = 2.0;
  std::string action_space = "factorized";
};

void add_split(CLI::App* cmd, SplitArgs& a) {
  cmd->add_option("--train-frac", a.train, "Train fraction")->capture_default_str();
  cmd->add_option("--validation-frac", a.validation, "Validation fraction")->capture_default_str();
  cmd->add_option("--test-frac", a.test, "Test fraction")->capture_default_str();
  cmd->add_option("--logging-frac", a.logging, "Fraction of train used to fit the logging policy")
      ->capture_default_str();
  cmd->add_option("--num-labels", a.num_labels, "Label count (default: max label id + 1)");
  cmd->add_option("--logging-temperature", a.temperature, "Softmax temperature of the logging policy")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--action-space", a.action_space, "factorized or multiclass (2^L label sets)")
      ->capture_default_str()
      ->check(CLI::IsMember({"factorized", "multiclass"}));
}

SplitSpec split_spec(const SplitArgs& a, std::uint64_t seed) {
  SplitSpec s{a.train, a.validation, a.test, a.logging, seed};
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return s;
}

LoggingPolicyConfig logging_config(const SplitArgs& a, std::size_t num_labels) {
  LoggingPolicyConfig c;
  c.temperature = a.temperature;
  if (a.action_space == "multiclass") {
    if (num_labels > 20) throw UsageError("--action-space multiclass supports at most 20 labels");
    c.action_space = ActionSpace::multiclass(std::size_t{1} << num_labels);
  }
  return c;
}

ojson split_json(const SplitArgs& a) {
  return {{"train_frac", a.train},
          {"validation_frac", a.validation},
          {"test_frac", a.test},
          {"logging_frac", a.logging},
          {"logging_temperature", a.temperature},
          {"action_space", a.action_space}};
}

LabeledDataset load_dataset(const std::string& path, const SplitArgs& a) {
  require_file(path, "--data");
  LibsvmOptions opts;
  opts.num_labels = a.num_labels;
  return parse_libsvm_multilabel(path, opts);
}

std::vector<DivergenceKind> parse_divergences(const std::vector<std::string>& names) {
  std::vector<DivergenceKind> out;
  for (const auto& n : names) {
    if (n == "all") {
      for (auto k : kAllDivergences)
        if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
      continue;
    }
    const auto k = parse_divergence(n);
    if (!k) throw UsageError("unknown divergence '" + n + "'");
    if (std::find(out.begin(), out.end(), *k) == out.end()) out.push_back(*k);
  }
  return out;
}

void check_policy_matches(const LinearPolicy& policy, const ActionSpace& space, std::size_t dim) {
  if (policy.action_space() != space)
    throw UsageError("policy action space " + to_string(policy.action_space()) + " does not match the log's " +
                     to_string(space));
  if (policy.input_dim() != dim)
    throw UsageError("policy expects " + std::to_string(policy.input_dim()) + " features but the data has " +
                     std::to_string(dim));
}

// --- convert -----------------------------------------------------------------

struct ConvertArgs {
  CommonArgs common;
  SplitArgs split;
  std::string data;
  std::size_t replay_count = 4;
};

int cmd_convert(const ConvertArgs& a, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(a.common.seed);
  if (a.replay_count < 1) throw UsageError("--replay-count must be at least 1");
  const SplitSpec spec = split_spec(a.split, seed);
  const LabeledDataset data = load_dataset(a.data, a.split);
  prepare_out_dir(a.common.out);

  const DatasetSplit split = split_dataset(data, spec);
  const LinearPolicy pi0 = train_logging_policy(split.logging, logging_config(a.split, data.num_labels));
  const BanditLog log = collect_bandit_log(split.train, pi0, a.replay_count, derive_seed(seed, 1));

  const fs::path dir(a.common.out);
  write_bandit_log((dir / "log.jsonl").string(), log);
  save_policy((dir / "logging_policy.txt").string(), pi0);
  {
    ojson manifest = {{"rows", data.size()},
                      {"feature_dim", data.feature_dim()},
                      {"num_labels", data.num_labels},
                      {"train", split.train_idx},
                      {"validation", split.validation_idx},
                      {"test", split.test_idx},
                      {"logging", split.logging_idx}};
    auto f = open_out(dir / "split.json");
    f << manifest.dump() << '\n';
  }
  write_config(a.common.out, {{"command", "convert"},
                              {"data", a.data},
                              {"seed", seed},
                              {"replay_count", a.replay_count},
                              {"split", split_json(a.split)}});
  out << "rows " << data.size() << ", features " << data.feature_dim() << ", labels " << data.num_labels << '\n'
      << "train " << split.train.size() << ", validation " << split.validation.size() << ", test "
      << split.test.size() << ", logging " << split.logging.size() << '\n'
      << "wrote " << log.size() << " records to " << (dir / "log.jsonl").string() << '\n';
  return 0;
}

// --- evaluate ----------------------------------------------------------------

struct EvaluateArgs {
  CommonArgs common;
  std::string log;
  std::string policy;
  double delta = 0.05;
  std::vector<std::string> divergences = {"all"};
  std::vector<std::string> methods = {"dro", "hoeffding", "bernstein"};
  std::optional<double> weight_bound;
  std::optional<double> max_weight;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  check_delta(a.delta);
  require_file(a.log, "--log");
  require_file(a.policy, "--policy");
  const auto kinds = parse_divergences(a.divergences);
  if (a.weight_bound && !(*a.weight_bound > 0.0)) throw UsageError("--weight-bound must be positive");
  if (a.max_weight && !(*a.max_weight > 0.0)) throw UsageError("--max-weight must be positive");
  const BanditLog log = read_bandit_log(a.log);
  const LinearPolicy policy = load_policy(a.policy);
  check_policy_matches(policy, log.action_space(), log.feature_dim());
  if (!a.common.out.empty()) prepare_out_dir(a.common.out);

  EstimatorOptions est;
  est.max_weight = a.max_weight;
  const WeightedCosts z = WeightedCostModel::ips(log, est).evaluate(policy);
  const double estimate = mean(z.values);

  std::vector<RiskInterval> intervals;
  for (const auto& m : a.methods) {
    if (m == "dro") {
      for (auto k : kinds) intervals.push_back(dro_interval(z, k, a.delta));
    } else if (m == "hoeffding") {
      intervals.push_back(hoeffding_interval(z, a.delta, a.weight_bound.value_or(default_weight_bound(z))));
    } else if (m == "bernstein") {
      intervals.push_back(bernstein_interval(z, a.delta, a.weight_bound.value_or(default_weight_bound(z))));
    } else {
      throw UsageError("unknown method '" + m + "'");
    }
  }

  std::ostringstream csv;
  csv << "method,divergence,n,delta,estimate,lower,upper,width\n";
  for (const auto& iv : intervals) {
    csv << to_string(iv.method) << ',' << (iv.divergence ? std::string(to_string(*iv.divergence)) : "") << ','
        << iv.n << ',' << num(iv.delta) << ',' << num(estimate) << ',' << num(iv.lower) << ',' << num(iv.upper)
        << ',' << num(iv.width()) << '\n';
  }
  out << csv.str();
  if (!a.common.out.empty()) {
    auto f = open_out(fs::path(a.common.out) / "intervals.csv");
    f << csv.str();
    ojson cfg = {{"command", "evaluate"},
                 {"log", a.log},
                 {"policy", a.policy},
                 {"delta", a.delta},
                 {"divergences", a.divergences},
                 {"methods", a.methods}};
    cfg["weight_bound"] = a.weight_bound ? ojson(*a.weight_bound) : ojson(nullptr);
    cfg["max_weight"] = a.max_weight ? ojson(*a.max_weight) : ojson(nullptr);
    write_config(a.common.out, cfg);
  }
  return 0;
}

// --- optimize ----------------------------------------------------------------

struct OptimizeArgs {
  CommonArgs common;
  SplitArgs split;
  std::string data;
  std::vector<std::string> algos = {"poem", "dro-chi2", "dro-kl", "dro-burg", "dro-hellinger"};
  std::string mode = "batch";
  bool cv = false;
  bool log_trick = false;
  std::size_t repetitions = 20;
  std::size_t replay_count = 4;
  double delta = 0.05;
  std::vector<double> lambda_grid = kDefaultLambdaGrid;
  int max_iters = 300;
  std::size_t batch_size = 64;
  double step = 0.1;
  int outer_iters = 5;
};

struct AlgoSpec {
  std::string name;
  bool poem = false;
  DivergenceKind kind = DivergenceKind::ChiSquare;
  enum { Plain, Cv, LogTrick } variant = Plain;
};

struct RunRow {
  std::string algorithm;
  double risk = 0.0, greedy = 0.0;
  std::optional<double> lambda;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

std::vector<AlgoSpec> expand_algos(const OptimizeArgs& a) {
  const std::string tag = a.mode == "batch" ? "b" : "s";
  std::vector<AlgoSpec> specs;
  for (const auto& name : a.algos) {
    if (name == "poem") {
      specs.push_back({"poem-" + tag, true, DivergenceKind::ChiSquare, AlgoSpec::Plain});
      continue;
    }
    std::vector<DivergenceKind> kinds;
    if (name == "dro-all") kinds.assign(kAllDivergences.begin(), kAllDivergences.end());
    else if (name.rfind("dro-", 0) == 0) kinds = parse_divergences({name.substr(4)});
    else throw UsageError("unknown algorithm '" + name + "'");
    for (auto k : kinds) {
      const std::string base = "dro-" + tag + "-" + std::string(to_string(k));
      specs.push_back({base, false, k, AlgoSpec::Plain});
      if (a.cv) specs.push_back({base + "-cv", false, k, AlgoSpec::Cv});
      if (a.log_trick) specs.push_back({"dro-b-" + std::string(to_string(k)) + "-logtrick", false, k, AlgoSpec::LogTrick});
    }
  }
  if (specs.empty()) throw UsageError("no algorithm requested");
  return specs;
}

std::vector<RunRow> run_repetition(const OptimizeArgs& a, const LabeledDataset& data,
                                   const std::vector<AlgoSpec>& specs, std::uint64_t seed) {
  const DatasetSplit split = split_dataset(data, split_spec(a.split, seed));
  const LinearPolicy pi0 = train_logging_policy(split.logging, logging_config(a.split, data.num_labels));
  const BanditLog train_log = collect_bandit_log(split.train, pi0, a.replay_count, derive_seed(seed, 1));

  OptimizerConfig cfg;
  cfg.mode = a.mode == "batch" ? OptimizerMode::Batch : OptimizerMode::Stochastic;
  cfg.max_iters = a.max_iters;
  cfg.batch_size = std::min(a.batch_size, train_log.size());
  cfg.initial_step = a.step;
  cfg.seed = derive_seed(seed, 3);
  const bool batch = cfg.mode == OptimizerMode::Batch;

  std::vector<RunRow> rows;
  rows.push_back({"logging", true_risk(pi0, split.test), greedy_risk(pi0, split.test), std::nullopt, 0.0, 0, true});
  std::optional<BanditLog> val_log;
  for (const auto& s : specs) {
    RunRow row;
    row.algorithm = s.name;
    std::optional<TrainResult> res;
    if (s.poem) {
      if (!val_log) val_log = collect_bandit_log(split.validation, pi0, a.replay_count, derive_seed(seed, 2));
      double best_val = std::numeric_limits<double>::infinity();
      for (double lambda : a.lambda_grid) {
        TrainResult r = batch ? train_poem(train_log, lambda, pi0, cfg) : train_poem_stochastic(train_log, lambda, pi0, cfg);
        const double v = ips_risk(*val_log, r.policy);
        if (v < best_val) {
          best_val = v;
          row.lambda = lambda;
          res = std::move(r);
        }
      }
    } else if (s.variant == AlgoSpec::Cv) {
      res = train_dro_cv(train_log, s.kind, a.delta, std::nullopt, pi0, cfg);
    } else if (s.variant == AlgoSpec::LogTrick) {
      OptimizerConfig inner = cfg;
      inner.mode = OptimizerMode::Batch;
      res = train_log_trick(train_log, s.kind, a.delta, pi0, inner, a.outer_iters);
    } else {
      res = batch ? train_dro(train_log, s.kind, a.delta, pi0, cfg)
                  : train_dro_stochastic(train_log, s.kind, a.delta, pi0, cfg);
    }
    row.risk = true_risk(res->policy, split.test);
    row.greedy = greedy_risk(res->policy, split.test);
    row.objective = res->report.objective;
    row.iterations = res->report.iterations;
    row.converged = res->report.converged;
    rows.push_back(std::move(row));
  }
  return rows;
}

double sample_sd(const std::vector<double>& v) { return v.size() < 2 ? 0.0 : std::sqrt(sample_variance(v)); }

int cmd_optimize(const OptimizeArgs& a, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(a.common.seed);
  check_delta(a.delta);
  if (a.replay_count < 1) throw UsageError("--replay-count must be at least 1");
  if (a.repetitions < 1) throw UsageError("--repetitions must be at least 1");
  if (a.lambda_grid.empty()) throw UsageError("--lambda-grid must not be empty");
  for (double l : a.lambda_grid)
    if (!(l >= 0.0) || !std::isfinite(l)) throw UsageError("--lambda-grid values must be finite and nonnegative");
  split_spec(a.split, seed);
  const auto specs = expand_algos(a);
  const LabeledDataset data = load_dataset(a.data, a.split);
  prepare_out_dir(a.common.out);

  std::vector<std::vector<RunRow>> per_rep(a.repetitions);
  parallel_for(a.repetitions, a.common.jobs,
               [&](std::size_t r) { per_rep[r] = run_repetition(a, data, specs, derive_seed(seed, 100 + r)); });

  const fs::path dir(a.common.out);
  {
    auto f = open_out(dir / "runs.csv");
    f << "repetition,algorithm,risk,greedy_risk,lambda,objective,iterations,converged\n";
    for (std::size_t r = 0; r < per_rep.size(); ++r)
      for (const auto& row : per_rep[r])
        f << r << ',' << csv_field(row.algorithm) << ',' << num(row.risk) << ',' << num(row.greedy) << ','
          << (row.lambda ? num(*row.lambda) : "") << ',' << num(row.objective) << ',' << row.iterations << ','
          << (row.converged ? 1 : 0) << '\n';
  }
  std::ostringstream csv;
  csv << "algorithm,risk_mean,risk_std,greedy_mean,greedy_std,repetitions\n";
  for (std::size_t j = 0; j < per_rep.front().size(); ++j) {
    std::vector<double> risk, greedy;
    for (const auto& rep : per_rep) {
      risk.push_back(rep[j].risk);
      greedy.push_back(rep[j].greedy);
    }
    csv << csv_field(per_rep.front()[j].algorithm) << ',' << num(mean(risk)) << ',' << num(sample_sd(risk)) << ','
        << num(mean(greedy)) << ',' << num(sample_sd(greedy)) << ',' << a.repetitions << '\n';
  }
  {
    auto f = open_out(dir / "results.csv");
    f << csv.str();
  }
  out << csv.str();

  write_config(a.common.out, {{"command", "optimize"},
                              {"data", a.data},
                              {"seed", seed},
                              {"algorithms", a.algos},
                              {"mode", a.mode},
                              {"cv", a.cv},
                              {"log_trick", a.log_trick},
                              {"repetitions", a.repetitions},
                              {"replay_count", a.replay_count},
                              {"delta", a.delta},
                              {"lambda_grid", a.lambda_grid},
                              {"max_iters", a.max_iters},
                              {"batch_size", a.batch_size},
                              {"initial_step", a.step},
                              {"outer_iters", a.outer_iters},
                              {"split", split_json(a.split)}});
  return 0;
}

// --- coverage ----------------------------------------------------------------

struct CoverageArgs {
  CommonArgs common;
  SplitArgs split;
  std::string data;
  std::string policy;
  std::vector<std::size_t> replay_counts = {1, 2, 4, 8};
  std::size_t replications = 100;
  double delta = 0.05;
  std::optional<double> weight_bound;
};

int cmd_coverage(const CoverageArgs& a, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(a.common.seed);
  check_delta(a.delta);
  if (a.replications < 1) throw UsageError("--replications must be at least 1");
  for (auto p : a.replay_counts)
    if (p < 1) throw UsageError("--replay-count values must be at least 1");
  if (a.weight_bound && !(*a.weight_bound > 0.0)) throw UsageError("--weight-bound must be positive");
  const SplitSpec spec = split_spec(a.split, seed);
  const LabeledDataset data = load_dataset(a.data, a.split);
  if (!a.policy.empty()) require_file(a.policy, "--policy");
  prepare_out_dir(a.common.out);

  const DatasetSplit split = split_dataset(data, spec);
  const LinearPolicy pi0 = train_logging_policy(split.logging, logging_config(a.split, data.num_labels));
  // Default target: the logging policy without smoothing.
  const LinearPolicy target = a.policy.empty() ? pi0.with_temperature(1.0) : load_policy(a.policy);
  check_policy_matches(target, pi0.action_space(), data.feature_dim());
  const CostScale scale = CostScale::hamming(data.num_labels);
  const double truth = scale.to_scaled(true_risk(target, split.train));

  const std::size_t R = a.replications;
  std::vector<std::vector<CoverageRow>> cells(a.replay_counts.size() * R);
  parallel_for(cells.size(), a.common.jobs, [&](std::size_t c) {
    const std::size_t pi = c / R, r = c % R;
    const BanditLog log =
        collect_bandit_log(split.train, pi0, a.replay_counts[pi], derive_seed(seed, 1000 * (pi + 1) + r));
    const WeightedCosts z = WeightedCostModel::ips(log).evaluate(target);
    cells[c] = coverage_rows(z, truth, a.delta, r, a.weight_bound);
  });

  std::vector<CoverageRow> rows;
  for (auto& c : cells) rows.insert(rows.end(), c.begin(), c.end());
  const fs::path dir(a.common.out);
  {
    auto f = open_out(dir / "coverage.csv");
    write_coverage_csv(f, rows);
  }

  // method, divergence, n -> (covered count, width sum, count), in first-seen order
  struct Agg {
    std::string method, divergence;
    std::size_t n = 0, count = 0, covered = 0;
    double width = 0.0;
  };
  std::vector<Agg> aggs;
  for (const auto& row : rows) {
    auto it = std::find_if(aggs.begin(), aggs.end(), [&](const Agg& g) {
      return g.method == row.method && g.divergence == row.divergence && g.n == row.n;
    });
    if (it == aggs.end()) {
      aggs.push_back({row.method, row.divergence, row.n});
      it = std::prev(aggs.end());
    }
    ++it->count;
    it->covered += row.covered ? 1 : 0;
    it->width += row.upper - row.lower;
  }
  std::ostringstream csv;
  csv << "method,divergence,n,replications,coverage,mean_width\n";
  for (const auto& g : aggs)
    csv << g.method << ',' << g.divergence << ',' << g.n << ',' << g.count << ','
        << num(static_cast<double>(g.covered) / static_cast<double>(g.count)) << ','
        << num(g.width / static_cast<double>(g.count)) << '\n';
  {
    auto f = open_out(dir / "summary.csv");
    f << csv.str();
  }
  out << "true risk (scaled) " << num(truth) << '\n' << csv.str();

  ojson cfg = {{"command", "coverage"},
               {"data", a.data},
               {"policy", a.policy.empty() ? ojson(nullptr) : ojson(a.policy)},
               {"seed", seed},
               {"replay_counts", a.replay_counts},
               {"replications", a.replications},
               {"delta", a.delta},
               {"split", split_json(a.split)}};
  cfg["weight_bound"] = a.weight_bound ? ojson(*a.weight_bound) : ojson(nullptr);
  write_config(a.common.out, cfg);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Counterfactual risk evaluation and minimization with divergence-based ambiguity sets", "cfdro"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  ConvertArgs conv;
  auto* c = app.add_subcommand("convert", "Turn a multilabel LibSVM dataset into a bandit log");
  add_common(c, conv.common, true);
  add_split(c, conv.split);
  c->add_option("--data", conv.data, "Multilabel LibSVM file")->required();
  c->add_option("--replay-count,-P", conv.replay_count, "Passes over the train split")->capture_default_str();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Confidence intervals for a policy's risk from a bandit log");
  add_common(e, ev.common, false);
  e->add_option("--log", ev.log, "Bandit log (JSONL)")->required();
  e->add_option("--policy", ev.policy, "Policy checkpoint")->required();
  e->add_option("--delta", ev.delta, "Failure probability")->capture_default_str();
  e->add_option("--divergence", ev.divergences, "chi2, kl, burg, hellinger or all")
      ->delimiter(',')
      ->capture_default_str();
  e->add_option("--methods", ev.methods, "dro, hoeffding, bernstein")->delimiter(',')->capture_default_str();
  e->add_option("--weight-bound", ev.weight_bound, "Range bound W for the comparators (default max |w c|)");
  e->add_option("--max-weight", ev.max_weight, "Clip importance weights at this value");

  OptimizeArgs opt;
  auto* o = app.add_subcommand("optimize", "Train policies and report test risks over repetitions");
  add_common(o, opt.common, true);
  add_split(o, opt.split);
  o->add_option("--data", opt.data, "Multilabel LibSVM file")->required();
  o->add_option("--algo", opt.algos, "poem, dro-chi2, dro-kl, dro-burg, dro-hellinger, dro-all")
      ->delimiter(',')
      ->capture_default_str();
  o->add_option("--mode", opt.mode, "batch or stochastic")
      ->capture_default_str()
      ->check(CLI::IsMember({"batch", "stochastic"}));
  o->add_flag("--cv", opt.cv, "Also run the control-variate variant of each DRO algorithm");
  o->add_flag("--log-trick", opt.log_trick, "Also run the log-trick majorize-minimize variant");
  o->add_option("--repetitions", opt.repetitions, "Independent splits and logs")->capture_default_str();
  o->add_option("--replay-count,-P", opt.replay_count, "Passes over the train split")->capture_default_str();
  o->add_option("--delta", opt.delta, "Failure probability for the radius")->capture_default_str();
  o->add_option("--lambda-grid", opt.lambda_grid, "POEM variance penalties tried on the validation log")
      ->delimiter(',')
      ->capture_default_str();
  o->add_option("--max-iters", opt.max_iters, "Optimizer iterations")->capture_default_str()->check(CLI::PositiveNumber);
  o->add_option("--batch-size", opt.batch_size, "Mini-batch size (stochastic)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  o->add_option("--step", opt.step, "Initial SGD step")->capture_default_str()->check(CLI::PositiveNumber);
  o->add_option("--outer-iters", opt.outer_iters, "Log-trick outer steps")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  CoverageArgs cov;
  auto* v = app.add_subcommand("coverage", "Empirical coverage and width of the intervals");
  add_common(v, cov.common, true);
  add_split(v, cov.split);
  v->add_option("--data", cov.data, "Multilabel LibSVM file")->required();
  v->add_option("--policy", cov.policy, "Target policy checkpoint (default: unsmoothed logging policy)");
  v->add_option("--replay-count,-P", cov.replay_counts, "Replay counts, comma separated")
      ->delimiter(',')
      ->capture_default_str();
  v->add_option("--replications", cov.replications, "Logs drawn per replay count")->capture_default_str();
  v->add_option("--delta", cov.delta, "Failure probability")->capture_default_str();
  v->add_option("--weight-bound", cov.weight_bound, "Range bound W for the comparators (default max |w c|)");

  try {
    // CLI11 consumes the argument vector from the back.
    std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(rest.begin(), rest.end());
    app.parse(rest);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c->parsed()) return cmd_convert(conv, out);
    if (e->parsed()) return cmd_evaluate(ev, out);
    if (o->parsed()) return cmd_optimize(opt, out);
    if (v->parsed()) return cmd_coverage(cov, out);
  } catch (const SolverError& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  } catch (const ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  } catch (const std::domain_error& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  }
  return 1;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace cfdro
