#include "cfdro/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <json.hpp>
#include <ostream>
#include <stdexcept>

#include "cfdro/errors.hpp"
#include "cfdro/intervals.hpp"
#include "cfdro/lbfgs.hpp"
#include "cfdro/numeric.hpp"

namespace cfdro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

// A finite starting dual point with gamma > gamma_min: the exact minimizer for
// the initial policy when it is interior, otherwise beta = mean(z) and
// gamma = max(stdev(z), 1e-3), inflated until g is finite.
DualPoint initial_dual_point(std::span<const double> z, DivergenceKind kind, AmbiguityRadius eps, double gamma_min) {
  const DualSolution sol = robust_risk_dual(z, kind, eps);
  if (std::isfinite(sol.argmin.gamma) && sol.argmin.gamma > 2.0 * gamma_min) {
    const double v = dual_objective(z, kind, eps, sol.argmin.beta, sol.argmin.gamma);
    if (std::isfinite(v)) return {sol.argmin.beta, sol.argmin.gamma, v};
  }
  const double beta = mean(z);
  double gamma = std::max(z.size() > 1 ? std::sqrt(sample_variance(z)) : 0.0, 1e-3);
  gamma = std::max(gamma, 2.0 * gamma_min);
  for (int k = 0; k < 200; ++k) {
    const double v = dual_objective(z, kind, eps, beta, gamma);
    if (std::isfinite(v)) return {beta, gamma, v};
    gamma *= 2.0;
  }
  throw SolverError("could not find a finite starting point for the dual", kInf);
}

TrainRecord make_record(int iteration, double objective, double gnorm, double beta, double gamma,
                        Clock::time_point start) {
  return {iteration, objective, gnorm, beta, gamma, seconds_since(start)};
}

}  // namespace

void OptimizerConfig::validate() const {
  if (max_iters < 0) throw std::invalid_argument("max_iters must be nonnegative");
  if (!(tolerance > 0.0) || !(gradient_tolerance > 0.0)) throw std::invalid_argument("tolerances must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(initial_step > 0.0) || !(step_decay > 0.0)) throw std::invalid_argument("step schedule must be positive");
  if (!(gradient_clip_norm > 0.0)) throw std::invalid_argument("gradient_clip_norm must be positive");
  if (!(gamma_min > 0.0)) throw std::invalid_argument("gamma_min must be positive");
  if (lbfgs_memory < 1) throw std::invalid_argument("lbfgs_memory must be at least 1");
  if (dual_resolve_every < 0 || eval_every < 0) throw std::invalid_argument("intervals must be nonnegative");
}

void write_train_report_jsonl(std::ostream& out, const TrainReport& report) {
  for (const auto& r : report.records) {
    nlohmann::json j = {{"iteration", r.iteration}, {"objective", r.objective}, {"gradient_norm", r.gradient_norm},
                        {"beta", r.beta},           {"gamma", r.gamma},         {"elapsed", r.elapsed}};
    out << j.dump() << '\n';
  }
}

double robust_risk(const BanditLog& log, const LinearPolicy& policy, DivergenceKind kind, double delta) {
  const WeightedCosts z = importance_weights(log, policy);
  return robust_risk_dual(z.values, kind, calibrated_radius(delta, log.size(), kind)).value;
}

TrainResult train_dro_model(const WeightedCostModel& model, DivergenceKind kind, AmbiguityRadius eps,
                            const LinearPolicy& policy_init, const OptimizerConfig& config) {
  config.validate();
  const auto start = Clock::now();
  const Eigen::Index rows = policy_init.theta().rows(), cols = policy_init.theta().cols();
  const Eigen::Index p = rows * cols;
  const double gamma_min = config.gamma_min;

  auto unpack_gamma = [gamma_min](double eta) { return gamma_min + std::exp(eta); };

  auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) -> double {
    const LinearPolicy policy = policy_init.with_theta(unflatten(x.head(p), rows, cols));
    const double beta = x(p);
    const double gamma = unpack_gamma(x(p + 1));
    if (!std::isfinite(gamma)) return kInf;
    try {
      const DualGradient dg = dual_gradient(model, policy, kind, eps, beta, gamma);
      grad.resize(x.size());
      grad.head(p) = flatten(dg.d_theta);
      grad(p) = dg.d_beta;
      grad(p + 1) = dg.d_gamma * (gamma - gamma_min);
      return dg.value;
    } catch (const DomainError&) {
      return kInf;
    }
  };

  auto pack = [&](const Eigen::MatrixXd& theta, const DualPoint& dual) {
    Eigen::VectorXd x(p + 2);
    x.head(p) = flatten(theta);
    x(p) = dual.beta;
    x(p + 1) = std::log(dual.gamma - gamma_min);
    return x;
  };

  DualPoint dual = initial_dual_point(model.evaluate(policy_init).values, kind, eps, gamma_min);
  Eigen::VectorXd x = pack(policy_init.theta(), dual);

  TrainReport report;
  LbfgsOptions lopts;
  lopts.memory = config.lbfgs_memory;
  lopts.value_tolerance = config.tolerance;
  lopts.gradient_tolerance = config.gradient_tolerance;

  int done = 0;
  bool first_chunk = true;
  LbfgsResult res;
  while (true) {
    const int chunk = config.dual_resolve_every > 0 ? std::min(config.dual_resolve_every, config.max_iters - done)
                                                    : config.max_iters - done;
    lopts.max_iterations = chunk;
    res = minimize_lbfgs(objective, x, lopts, [&](const LbfgsIteration& it, const Eigen::VectorXd& xi) {
      report.records.push_back(
          make_record(done + it.iteration, it.value, it.gradient_norm, xi(p), unpack_gamma(xi(p + 1)), start));
      report.trajectory.push_back(it.value);
    });
    if (first_chunk) {
      const auto& h0 = res.history.front();
      report.records.insert(report.records.begin(),
                            make_record(0, h0.value, h0.gradient_norm, x(p), unpack_gamma(x(p + 1)), start));
      report.trajectory.insert(report.trajectory.begin(), h0.value);
      first_chunk = false;
    }
    done += res.iterations;
    x = res.x;
    if (res.converged || config.dual_resolve_every == 0 || done >= config.max_iters || res.iterations == 0) break;
    // Stabilization: replace (beta, gamma) by the exact minimizer for the current theta.
    const LinearPolicy current = policy_init.with_theta(unflatten(x.head(p), rows, cols));
    const DualPoint fresh = initial_dual_point(model.evaluate(current).values, kind, eps, gamma_min);
    if (fresh.value <= res.value) x = pack(current.theta(), fresh);
  }

  if (!std::isfinite(res.value)) throw SolverError("DRO training produced a non-finite objective", res.value);
  report.objective = res.value;
  report.iterations = done;
  report.converged = res.converged;
  report.dual = {x(p), unpack_gamma(x(p + 1)), res.value};
  report.wall_time = seconds_since(start);
  return {policy_init.with_theta(unflatten(x.head(p), rows, cols)), std::move(report)};
}

TrainResult train_dro(const BanditLog& log, DivergenceKind kind, double delta, const LinearPolicy& policy_init,
                      const OptimizerConfig& config) {
  const auto model = WeightedCostModel::ips(log);
  if (config.mode == OptimizerMode::Stochastic)
    return train_dro_stochastic_model(model, kind, calibrated_radius(delta, log.size(), kind), policy_init, config);
  return train_dro_model(model, kind, calibrated_radius(delta, log.size(), kind), policy_init, config);
}

TrainResult train_dro_cv(const BanditLog& log, DivergenceKind kind, double delta, std::optional<double> rho,
                         const LinearPolicy& policy_init, const OptimizerConfig& config) {
  const auto model = WeightedCostModel::control_variate(log, rho.value_or(estimate_rho(log)));
  const AmbiguityRadius eps = calibrated_radius(delta, log.size(), kind);
  if (config.mode == OptimizerMode::Stochastic) return train_dro_stochastic_model(model, kind, eps, policy_init, config);
  return train_dro_model(model, kind, eps, policy_init, config);
}

TrainResult train_dro_stochastic(const BanditLog& log, DivergenceKind kind, double delta,
                                 const LinearPolicy& policy_init, const OptimizerConfig& config) {
  return train_dro_stochastic_model(WeightedCostModel::ips(log), kind, calibrated_radius(delta, log.size(), kind),
                                    policy_init, config);
}

TrainResult train_dro_stochastic_model(const WeightedCostModel& model, DivergenceKind kind, AmbiguityRadius eps,
                                       const LinearPolicy& policy_init, const OptimizerConfig& config) {
  config.validate();
  const auto start = Clock::now();
  const std::size_t n = model.size();
  const std::size_t batch = std::min(config.batch_size, n);
  const int eval_every =
      config.eval_every > 0 ? config.eval_every : static_cast<int>((n + batch - 1) / batch);
  Rng rng(config.seed);

  auto full_robust = [&](const LinearPolicy& policy) { return robust_risk_dual(model.evaluate(policy).values, kind, eps); };

  DualPoint dual = initial_dual_point(model.evaluate(policy_init).values, kind, eps, config.gamma_min);
  Eigen::MatrixXd theta = policy_init.theta();
  double beta = dual.beta, gamma = dual.gamma;

  TrainReport report;
  DualSolution best_sol = full_robust(policy_init);
  Eigen::MatrixXd best_theta = theta;
  report.trajectory.push_back(best_sol.value);
  report.records.push_back(make_record(0, best_sol.value, 0.0, beta, gamma, start));

  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  std::vector<std::size_t> subset;

  for (int t = 0; t < config.max_iters; ++t) {
    // Uniform mini-batch without replacement (partial Fisher-Yates).
    subset.clear();
    if (batch < n) {
      for (std::size_t k = 0; k < batch; ++k) {
        const auto j = k + static_cast<std::size_t>(uniform_index(rng, n - k));
        std::swap(pool[k], pool[j]);
        subset.push_back(pool[k]);
      }
    }
    const LinearPolicy policy = policy_init.with_theta(theta);
    DualGradient g;
    for (int inflations = 0;; ++inflations) {
      try {
        g = dual_gradient(model, policy, kind, eps, beta, gamma, subset);
        if (std::isfinite(g.value) && g.d_theta.allFinite() && std::isfinite(g.d_beta) && std::isfinite(g.d_gamma))
          break;
      } catch (const DomainError&) {
      }
      if (inflations >= 100) throw SolverError("stochastic DRO: objective stayed infinite after 100 gamma inflations",
                                               best_sol.value);
      gamma *= 2.0;
    }
    double norm = std::sqrt(g.d_theta.squaredNorm() + g.d_beta * g.d_beta + g.d_gamma * g.d_gamma);
    double scale = norm > config.gradient_clip_norm ? config.gradient_clip_norm / norm : 1.0;
    const double step = config.initial_step / std::sqrt(1.0 + t / config.step_decay);
    theta -= step * scale * g.d_theta;
    beta -= step * scale * g.d_beta;
    gamma = std::max(config.gamma_min, gamma - step * scale * g.d_gamma);

    if ((t + 1) % eval_every == 0 || t + 1 == config.max_iters) {
      const DualSolution sol = full_robust(policy_init.with_theta(theta));
      report.trajectory.push_back(sol.value);
      report.records.push_back(make_record(t + 1, sol.value, norm, beta, gamma, start));
      if (sol.value < best_sol.value) {
        best_sol = sol;
        best_theta = theta;
      }
    }
  }
  report.iterations = config.max_iters;
  report.objective = best_sol.value;
  report.dual = best_sol.argmin;
  report.converged = true;
  report.wall_time = seconds_since(start);
  return {policy_init.with_theta(best_theta), std::move(report)};
}

TrainResult train_log_trick(const BanditLog& log, DivergenceKind kind, double delta, const LinearPolicy& policy_init,
                            const OptimizerConfig& config, int outer_iters) {
  config.validate();
  if (outer_iters < 1) throw std::invalid_argument("train_log_trick: outer_iters must be positive");
  const auto start = Clock::now();
  const AmbiguityRadius eps = calibrated_radius(delta, log.size(), kind);
  const auto ips = WeightedCostModel::ips(log);

  LinearPolicy current = policy_init;
  DualSolution current_sol = robust_risk_dual(ips.evaluate(current).values, kind, eps);
  LinearPolicy best = current;
  DualSolution best_sol = current_sol;

  TrainReport report;
  report.trajectory.push_back(current_sol.value);
  report.records.push_back(make_record(0, current_sol.value, 0.0, current_sol.argmin.beta, current_sol.argmin.gamma, start));

  OptimizerConfig inner = config;
  inner.mode = OptimizerMode::Batch;
  int k = 1;
  for (; k <= outer_iters; ++k) {
    const auto surrogate = WeightedCostModel::log_trick(log, current);
    std::optional<TrainResult> step;
    try {
      step = train_dro_model(surrogate, kind, eps, current, inner);
    } catch (const SolverError&) {
      break;
    }
    const DualSolution sol = robust_risk_dual(ips.evaluate(step->policy).values, kind, eps);
    report.trajectory.push_back(sol.value);
    report.records.push_back(make_record(k, sol.value, 0.0, sol.argmin.beta, sol.argmin.gamma, start));
    const double decrease = current_sol.value - sol.value;
    current = step->policy;
    current_sol = sol;
    if (sol.value < best_sol.value) {
      best = current;
      best_sol = sol;
    }
    if (decrease <= config.tolerance * std::max(1.0, std::abs(sol.value))) {
      report.converged = true;
      break;
    }
  }
  report.iterations = std::min(k, outer_iters);
  report.objective = best_sol.value;
  report.dual = best_sol.argmin;
  report.wall_time = seconds_since(start);
  return {best, std::move(report)};
}

namespace {

// d/dz_i of mean(z) + lambda sqrt(var(z) / n).
std::vector<double> crm_coefficients(const std::vector<double>& z, double lambda) {
  const std::size_t n = z.size();
  const double nd = static_cast<double>(n);
  const double m = mean(z);
  const double var = sample_variance(z);
  const double sd = std::sqrt(var / nd);
  std::vector<double> coef(n, 1.0 / nd);
  if (sd > 0.0 && lambda > 0.0)
    for (std::size_t i = 0; i < n; ++i) coef[i] += lambda * (z[i] - m) / ((nd - 1.0) * nd * sd);
  return coef;
}

}  // namespace

TrainResult train_poem(const BanditLog& log, double lambda, const LinearPolicy& policy_init,
                       const OptimizerConfig& config) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("train_poem: lambda must be nonnegative");
  if (log.size() < 2) throw std::invalid_argument("train_poem: needs at least two records");
  if (config.mode == OptimizerMode::Stochastic) return train_poem_stochastic(log, lambda, policy_init, config);
  config.validate();
  const auto start = Clock::now();
  const auto model = WeightedCostModel::ips(log);
  const Eigen::Index rows = policy_init.theta().rows(), cols = policy_init.theta().cols();

  auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) -> double {
    const LinearPolicy policy = policy_init.with_theta(unflatten(x, rows, cols));
    const WeightedCosts z = model.evaluate(policy);
    const auto coef = crm_coefficients(z.values, lambda);
    grad = flatten(model.pullback(policy, coef));
    return crm_objective(z, lambda);
  };

  LbfgsOptions lopts;
  lopts.max_iterations = config.max_iters;
  lopts.memory = config.lbfgs_memory;
  lopts.value_tolerance = config.tolerance;
  lopts.gradient_tolerance = config.gradient_tolerance;
  TrainReport report;
  const LbfgsResult res = minimize_lbfgs(objective, flatten(policy_init.theta()), lopts,
                                         [&](const LbfgsIteration& it, const Eigen::VectorXd&) {
                                           report.records.push_back(
                                               make_record(it.iteration, it.value, it.gradient_norm, 0.0, 0.0, start));
                                         });
  report.records.insert(report.records.begin(),
                        make_record(0, res.history.front().value, res.history.front().gradient_norm, 0.0, 0.0, start));
  for (const auto& h : res.history) report.trajectory.push_back(h.value);
  report.objective = res.value;
  report.iterations = res.iterations;
  report.converged = res.converged;
  report.wall_time = seconds_since(start);
  return {policy_init.with_theta(unflatten(res.x, rows, cols)), std::move(report)};
}

TrainResult train_poem_stochastic(const BanditLog& log, double lambda, const LinearPolicy& policy_init,
                                  const OptimizerConfig& config) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("train_poem: lambda must be nonnegative");
  config.validate();
  const auto start = Clock::now();
  const auto model = WeightedCostModel::ips(log);
  const std::size_t n = log.size();
  const double nd = static_cast<double>(n);
  const std::size_t batch = std::min(config.batch_size, n);
  Rng rng(config.seed);

  Eigen::MatrixXd theta = policy_init.theta();
  TrainReport report;
  double best_value = crm_objective(model.evaluate(policy_init), lambda);
  Eigen::MatrixXd best_theta = theta;
  report.trajectory.push_back(best_value);
  report.records.push_back(make_record(0, best_value, 0.0, 0.0, 0.0, start));

  std::vector<std::size_t> order(n);
  std::vector<std::size_t> subset;
  std::vector<double> coef;
  int t = 0;
  while (t < config.max_iters) {
    // Majorize the penalty around the current policy using the whole log.
    const WeightedCosts z_full = model.evaluate(policy_init.with_theta(theta));
    const double m = mean(z_full.values);
    const double var = sample_variance(z_full.values);
    double a = 1.0, b = 0.0;
    if (var > 0.0 && lambda > 0.0) {
      const double root = std::sqrt(nd * var);
      a = 1.0 - lambda * nd * m / ((nd - 1.0) * root);
      b = lambda * nd / (2.0 * (nd - 1.0) * root);
    }
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle_indices(order, rng);
    for (std::size_t offset = 0; offset < n && t < config.max_iters; offset += batch, ++t) {
      subset.assign(order.begin() + static_cast<std::ptrdiff_t>(offset),
                    order.begin() + static_cast<std::ptrdiff_t>(std::min(n, offset + batch)));
      const LinearPolicy policy = policy_init.with_theta(theta);
      const WeightedCosts zb = model.evaluate(policy, subset);
      coef.assign(subset.size(), 0.0);
      for (std::size_t k = 0; k < subset.size(); ++k)
        coef[k] = (a + 2.0 * b * zb.values[k]) / static_cast<double>(subset.size());
      Eigen::MatrixXd g = model.pullback(policy, coef, subset);
      const double norm = g.norm();
      if (norm > config.gradient_clip_norm) g *= config.gradient_clip_norm / norm;
      theta -= config.initial_step / std::sqrt(1.0 + t / config.step_decay) * g;
    }
    const double value = crm_objective(model.evaluate(policy_init.with_theta(theta)), lambda);
    report.trajectory.push_back(value);
    report.records.push_back(make_record(t, value, 0.0, 0.0, 0.0, start));
    if (value < best_value) {
      best_value = value;
      best_theta = theta;
    }
  }
  report.objective = best_value;
  report.iterations = t;
  report.converged = true;
  report.wall_time = seconds_since(start);
  return {policy_init.with_theta(best_theta), std::move(report)};
}

}  // namespace cfdro
