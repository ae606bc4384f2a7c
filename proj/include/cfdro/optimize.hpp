#pragma once

// Policy optimization on a bandit log.
//
// The DRO trainers minimize the dual g(theta, beta, gamma) jointly, which by
// duality equals minimizing the robust risk over policies. The radius is always
// calibrated from the confidence level, see calibrated_radius(delta, n, kind).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "cfdro/divergence.hpp"
#include "cfdro/dro.hpp"
#include "cfdro/estimators.hpp"
#include "cfdro/policy.hpp"

namespace cfdro {

enum class OptimizerMode { Batch, Stochastic };

struct OptimizerConfig {
  OptimizerMode mode = OptimizerMode::Batch;
  int max_iters = 300;             // L-BFGS iterations (batch) or SGD steps (stochastic)
  double tolerance = 1e-10;        // relative objective decrease that stops batch runs
  double gradient_tolerance = 1e-8;
  std::size_t batch_size = 64;
  double initial_step = 0.1;       // step_t = initial_step / sqrt(1 + t / step_decay)
  double step_decay = 1000.0;
  double gradient_clip_norm = 10.0;
  std::uint64_t seed = 0;
  double gamma_min = 1e-8;
  int lbfgs_memory = 10;
  /// When positive, re-solve (beta, gamma) exactly every this many L-BFGS steps.
  int dual_resolve_every = 0;
  /// Stochastic mode: evaluate the full robust risk every this many steps (0 = once per pass over the data).
  int eval_every = 0;

  /// Throws std::invalid_argument on non-positive sizes or tolerances.
  void validate() const;
};

struct TrainRecord {
  int iteration = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double elapsed = 0.0;  // seconds since the start of training
};

struct TrainReport {
  double objective = 0.0;
  int iterations = 0;
  double wall_time = 0.0;
  std::vector<double> trajectory;
  std::vector<TrainRecord> records;
  DualPoint dual;
  bool converged = false;
};

struct TrainResult {
  LinearPolicy policy;
  TrainReport report;
};

/// One JSON object per record: iteration, objective, gradient_norm, beta, gamma, elapsed.
void write_train_report_jsonl(std::ostream& out, const TrainReport& report);

/// Joint minimization of the dual over (theta, beta, gamma) for the IPS weighted costs.
TrainResult train_dro(const BanditLog& log, DivergenceKind kind, double delta, const LinearPolicy& policy_init,
                      const OptimizerConfig& config);

/// train_dro over an arbitrary weighted-cost model (IPS, control variate, log trick).
TrainResult train_dro_model(const WeightedCostModel& model, DivergenceKind kind, AmbiguityRadius eps,
                            const LinearPolicy& policy_init, const OptimizerConfig& config);

/// Mini-batch SGD on (theta, beta, gamma) with clipping and gamma projection.
/// Returns the best iterate by full robust risk among the periodic evaluations.
TrainResult train_dro_stochastic(const BanditLog& log, DivergenceKind kind, double delta,
                                 const LinearPolicy& policy_init, const OptimizerConfig& config);

TrainResult train_dro_stochastic_model(const WeightedCostModel& model, DivergenceKind kind, AmbiguityRadius eps,
                                       const LinearPolicy& policy_init, const OptimizerConfig& config);

/// Majorize-minimize with the log-trick bound: each outer step minimizes the
/// robust risk of the convex surrogate anchored at the current policy. The
/// trajectory holds the robust IPS risk after each outer step (entry 0 = init).
TrainResult train_log_trick(const BanditLog& log, DivergenceKind kind, double delta, const LinearPolicy& policy_init,
                            const OptimizerConfig& config, int outer_iters);

/// Control-variate DRO. rho defaults to estimate_rho(log).
TrainResult train_dro_cv(const BanditLog& log, DivergenceKind kind, double delta, std::optional<double> rho,
                         const LinearPolicy& policy_init, const OptimizerConfig& config);

/// Minimizes the variance-penalized IPS objective (non-convex) with L-BFGS.
TrainResult train_poem(const BanditLog& log, double lambda, const LinearPolicy& policy_init,
                       const OptimizerConfig& config);

/// Stochastic variant: once per epoch the penalty is majorized over the whole
/// log into a per-record quadratic a z + b z^2, then one SGD pass follows.
/// Needs the full log in memory at every epoch.
TrainResult train_poem_stochastic(const BanditLog& log, double lambda, const LinearPolicy& policy_init,
                                  const OptimizerConfig& config);

/// Exact robust risk of a policy at the calibrated radius.
double robust_risk(const BanditLog& log, const LinearPolicy& policy, DivergenceKind kind, double delta);

}  // namespace cfdro
