#pragma once

// Confidence intervals for the true risk of a policy from logged data.
//
// The DRO interval [optimistic, robust] at radius eps = rho_delta phi''(1) / (2 n),
// with rho_delta the (1 - delta)-quantile of chi-square(1), has asymptotic
// coverage 1 - delta. For chi-square this is rho_delta / n. Hoeffding and empirical-Bernstein intervals are finite-sample
// comparators and need a bound W on |w_i c_i|.
//
// delta is always the failure probability: delta = 0.05 gives 95% intervals.

#include <optional>
#include <string>
#include <vector>

#include "cfdro/divergence.hpp"
#include "cfdro/dro.hpp"
#include "cfdro/estimators.hpp"

namespace cfdro {

enum class IntervalMethod { Dro, Hoeffding, EmpiricalBernstein };

std::string_view to_string(IntervalMethod method);

struct RiskInterval {
  double lower = 0.0;
  double upper = 0.0;
  double delta = 0.05;
  IntervalMethod method = IntervalMethod::Dro;
  std::optional<DivergenceKind> divergence;  // set for Dro only
  std::size_t n = 0;

  double width() const { return upper - lower; }
  bool contains(double value) const { return lower <= value && value <= upper; }
  /// "dro-chi2", "hoeffding", ...
  std::string label() const;
};

/// x with P(chi2_1 <= x) = p, by bisection on the erf-based CDF over [0, 200].
/// Throws DomainError unless 0 < p < 1.
double chi2_quantile_1dof(double p);

/// eps = chi2_quantile_1dof(1 - delta) / n.
AmbiguityRadius calibrated_radius(double delta, std::size_t n);

/// The same radius rescaled by phi''(1) / 2. The asymptotic (1 - delta)
/// coverage holds for generators with phi''(1) = 2; the generators here have
/// different curvatures, so chi-square keeps rho / n and the others are
/// adjusted to match it. Used by dro_interval and every DRO trainer.
AmbiguityRadius calibrated_radius(double delta, std::size_t n, DivergenceKind kind);

RiskInterval dro_interval(const WeightedCosts& z, DivergenceKind kind, double delta, const DualSolverOptions& opts = {});
RiskInterval dro_interval(const BanditLog& log, const LinearPolicy& policy, DivergenceKind kind, double delta,
                          const EstimatorOptions& est = {}, const DualSolverOptions& opts = {});

/// Default comparator range: max_i w_i |c_i|.
double default_weight_bound(const WeightedCosts& z);

/// ips +- W sqrt(log(2 / delta) / (2 n)).
/// Both comparators throw std::invalid_argument unless every |z_i| <= W.
RiskInterval hoeffding_interval(const WeightedCosts& z, double delta, double weight_bound);
RiskInterval hoeffding_interval(const BanditLog& log, const LinearPolicy& policy, double delta,
                                std::optional<double> weight_bound, const EstimatorOptions& est = {});

/// ips +- (sqrt(2 Var log(2 / delta) / n) + 7 W log(2 / delta) / (3 (n - 1))).
RiskInterval bernstein_interval(const WeightedCosts& z, double delta, double weight_bound);
RiskInterval bernstein_interval(const BanditLog& log, const LinearPolicy& policy, double delta,
                                std::optional<double> weight_bound, const EstimatorOptions& est = {});

/// One row of a coverage study.
struct CoverageRow {
  std::string method;      // "dro", "hoeffding", "bernstein"
  std::string divergence;  // divergence name, empty for comparators
  std::size_t n = 0;
  std::size_t replication = 0;
  double lower = 0.0;
  double upper = 0.0;
  double true_risk = 0.0;
  bool covered = false;
};

/// All intervals (four DRO divergences + the two comparators) for one weighted-cost sample.
std::vector<CoverageRow> coverage_rows(const WeightedCosts& z, double true_risk, double delta, std::size_t replication,
                                       std::optional<double> weight_bound = std::nullopt);

/// Header: method,divergence,n,replication,lower,upper,true_risk,covered
void write_coverage_csv(std::ostream& out, const std::vector<CoverageRow>& rows);

}  // namespace cfdro
