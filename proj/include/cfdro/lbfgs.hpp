#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace cfdro {

/// Returns f(x) and writes its gradient. Points outside the domain return +inf
/// (or NaN, treated the same); the gradient is ignored there.
using DifferentiableObjective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct LbfgsOptions {
  int max_iterations = 500;
  int memory = 10;
  double gradient_tolerance = 1e-8;  // on the infinity norm
  double value_tolerance = 1e-12;    // relative decrease per accepted step
  int max_backtracks = 60;
  double armijo = 1e-4;
};

struct LbfgsIteration {
  int iteration = 0;
  double value = 0.0;
  double gradient_norm = 0.0;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  std::vector<LbfgsIteration> history;  // entry 0 is the starting point
};

/// Called after every accepted step with the new iterate.
using LbfgsCallback = std::function<void(const LbfgsIteration& it, const Eigen::VectorXd& x)>;

/// Limited-memory BFGS with a backtracking Armijo line search. The objective
/// value is nonincreasing along the returned history. Throws SolverError if the
/// starting point is outside the domain.
LbfgsResult minimize_lbfgs(const DifferentiableObjective& f, Eigen::VectorXd x0, const LbfgsOptions& opts = {},
                           const LbfgsCallback& on_step = {});

}  // namespace cfdro
