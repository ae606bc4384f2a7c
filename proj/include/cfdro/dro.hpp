#pragma once

// Robust and optimistic risks over a phi-divergence ball around the uniform
// reweighting, computed through the convex dual
//
//   g(beta, gamma) = beta + gamma * eps + (1/n) sum_i (gamma phi)*(z_i - beta),
//   robust(z, eps) = inf_{beta, gamma >= 0} g(beta, gamma).

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "cfdro/divergence.hpp"
#include "cfdro/estimators.hpp"

namespace cfdro {

struct DualPoint {
  double beta = 0.0;
  double gamma = 0.0;  // +inf when eps == 0 (the infimum is approached as gamma grows)
  double value = 0.0;
};

/// Radius of the ambiguity set {q in simplex : d_phi(q, 1_n) <= epsilon}.
class AmbiguityRadius {
 public:
  explicit AmbiguityRadius(double epsilon);
  double epsilon() const { return epsilon_; }

 private:
  double epsilon_;
};

struct DualSolverOptions {
  int max_iterations = 200;
  /// Bits of relative precision requested from the bracketing root finders.
  int precision_bits = 48;
};

struct DualSolution {
  double value = 0.0;
  DualPoint argmin;
  int iterations = 0;
  /// True when the optimum sits on the gamma = 0 face (value = max z).
  bool boundary = false;
};

/// g(beta, gamma); +inf where a conjugate leaves its domain. Throws for gamma < 0.
double dual_objective(std::span<const double> z, DivergenceKind kind, AmbiguityRadius eps, double beta, double gamma);

/// Partial derivatives of g at a point strictly inside its domain.
struct DualPartials {
  double value = 0.0;
  double d_beta = 0.0;
  double d_gamma = 0.0;
  std::vector<double> d_z;  // dg/dz_i = (phi*)'((z_i - beta) / gamma) / n
};

/// Throws DomainError when (beta, gamma) lies outside the open domain of g.
DualPartials dual_partials(std::span<const double> z, DivergenceKind kind, AmbiguityRadius eps, double beta,
                           double gamma);

/// Exact minimization of g. Eliminates beta by a monotone root-find of dg/dbeta
/// and gamma by a root-find of the envelope derivative in log(gamma). eps == 0
/// returns mean(z). Throws SolverError if a root finder fails to converge.
DualSolution robust_risk_dual(std::span<const double> z, DivergenceKind kind, AmbiguityRadius eps,
                              const DualSolverOptions& opts = {});

/// inf over the same ambiguity set, computed as -robust(-z). The returned
/// argmin refers to the negated problem.
DualSolution optimistic_risk_dual(std::span<const double> z, DivergenceKind kind, AmbiguityRadius eps,
                                  const DualSolverOptions& opts = {});

/// Direct grid maximization of sum_i q_i z_i over {q in simplex : d_phi(q, 1_n) <= eps}
/// for n <= 4, refined locally around the best grid point. Every evaluated q is
/// feasible, so the result is a lower bound on the robust risk. Test oracle.
double primal_oracle(std::span<const double> z, DivergenceKind kind, double epsilon, double grid_resolution);

/// KL dual with beta eliminated: gamma * eps + gamma * log((1/n) sum_i exp(z_i / gamma)).
double kl_reduced_dual(std::span<const double> z, AmbiguityRadius eps, double gamma);

/// Softmax-weighted risk sum_i softmax(z / gamma)_i z_i at a fixed temperature gamma.
double kl_softmax_risk(std::span<const double> z, double gamma);

struct DualGradient {
  double value = 0.0;
  double d_beta = 0.0;
  double d_gamma = 0.0;
  Eigen::MatrixXd d_theta;
};

/// Gradient of g(theta, beta, gamma) where z = model.evaluate(policy). With a
/// non-empty `subset` the sample average runs over those records only, which is
/// an unbiased estimate of the full gradient for a uniformly drawn subset.
/// Throws DomainError outside the open domain of g.
DualGradient dual_gradient(const WeightedCostModel& model, const LinearPolicy& policy, DivergenceKind kind,
                           AmbiguityRadius eps, double beta, double gamma, std::span<const std::size_t> subset = {});

}  // namespace cfdro
