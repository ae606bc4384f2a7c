#include "cfdro/intervals.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "cfdro/errors.hpp"
#include "cfdro/numeric.hpp"

namespace cfdro {

std::string_view to_string(IntervalMethod method) {
  switch (method) {
    case IntervalMethod::Dro: return "dro";
    case IntervalMethod::Hoeffding: return "hoeffding";
    case IntervalMethod::EmpiricalBernstein: return "bernstein";
  }
  return "unknown";
}

std::string RiskInterval::label() const {
  std::string s(to_string(method));
  if (divergence) s += "-" + std::string(to_string(*divergence));
  return s;
}

double chi2_quantile_1dof(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("chi2_quantile_1dof: p must lie in (0, 1)");
  auto cdf = [](double x) { return std::erf(std::sqrt(0.5 * x)); };
  double lo = 0.0, hi = 200.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

AmbiguityRadius calibrated_radius(double delta, std::size_t n) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
  if (n == 0) throw DomainError("calibrated_radius: n must be positive");
  return AmbiguityRadius(chi2_quantile_1dof(1.0 - delta) / static_cast<double>(n));
}

AmbiguityRadius calibrated_radius(double delta, std::size_t n, DivergenceKind kind) {
  return AmbiguityRadius(calibrated_radius(delta, n).epsilon() * phi_curvature(kind) / 2.0);
}

RiskInterval dro_interval(const WeightedCosts& z, DivergenceKind kind, double delta, const DualSolverOptions& opts) {
  if (z.size() < 2) throw std::invalid_argument("dro_interval: needs at least two records");
  const AmbiguityRadius eps = calibrated_radius(delta, z.size(), kind);
  RiskInterval out;
  out.method = IntervalMethod::Dro;
  out.divergence = kind;
  out.delta = delta;
  out.n = z.size();
  out.lower = optimistic_risk_dual(z.values, kind, eps, opts).value;
  out.upper = robust_risk_dual(z.values, kind, eps, opts).value;
  return out;
}

RiskInterval dro_interval(const BanditLog& log, const LinearPolicy& policy, DivergenceKind kind, double delta,
                          const EstimatorOptions& est, const DualSolverOptions& opts) {
  return dro_interval(importance_weights(log, policy, est), kind, delta, opts);
}

double default_weight_bound(const WeightedCosts& z) {
  double w = 0.0;
  for (double v : z.values) w = std::max(w, std::abs(v));
  return w;
}

namespace {

void check_comparator(const WeightedCosts& z, double delta, double weight_bound, std::size_t min_n) {
  if (z.size() < min_n) throw std::invalid_argument("interval: not enough records");
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
  if (!std::isfinite(weight_bound) || weight_bound < 0.0)
    throw std::invalid_argument("interval: a finite nonnegative weight bound is required");
  if (default_weight_bound(z) > weight_bound * (1.0 + 1e-12))
    throw std::invalid_argument("interval: some |w c| exceeds the weight bound");
}

RiskInterval centered(const WeightedCosts& z, double delta, double half_width, IntervalMethod method) {
  const double center = ips_risk(z);
  RiskInterval out;
  out.method = method;
  out.delta = delta;
  out.n = z.size();
  out.lower = center - half_width;
  out.upper = center + half_width;
  return out;
}

}  // namespace

RiskInterval hoeffding_interval(const WeightedCosts& z, double delta, double weight_bound) {
  check_comparator(z, delta, weight_bound, 1);
  const double n = static_cast<double>(z.size());
  const double half = weight_bound * std::sqrt(std::log(2.0 / delta) / (2.0 * n));
  return centered(z, delta, half, IntervalMethod::Hoeffding);
}

RiskInterval hoeffding_interval(const BanditLog& log, const LinearPolicy& policy, double delta,
                                std::optional<double> weight_bound, const EstimatorOptions& est) {
  const WeightedCosts z = importance_weights(log, policy, est);
  return hoeffding_interval(z, delta, weight_bound.value_or(default_weight_bound(z)));
}

RiskInterval bernstein_interval(const WeightedCosts& z, double delta, double weight_bound) {
  check_comparator(z, delta, weight_bound, 2);
  const double n = static_cast<double>(z.size());
  const double log_term = std::log(2.0 / delta);
  const double half = std::sqrt(2.0 * empirical_variance(z) * log_term / n) +
                      7.0 * weight_bound * log_term / (3.0 * (n - 1.0));
  return centered(z, delta, half, IntervalMethod::EmpiricalBernstein);
}

RiskInterval bernstein_interval(const BanditLog& log, const LinearPolicy& policy, double delta,
                                std::optional<double> weight_bound, const EstimatorOptions& est) {
  const WeightedCosts z = importance_weights(log, policy, est);
  return bernstein_interval(z, delta, weight_bound.value_or(default_weight_bound(z)));
}

std::vector<CoverageRow> coverage_rows(const WeightedCosts& z, double true_risk, double delta, std::size_t replication,
                                       std::optional<double> weight_bound) {
  std::vector<RiskInterval> intervals;
  for (auto kind : kAllDivergences) intervals.push_back(dro_interval(z, kind, delta));
  const double w = weight_bound.value_or(default_weight_bound(z));
  intervals.push_back(hoeffding_interval(z, delta, w));
  intervals.push_back(bernstein_interval(z, delta, w));

  std::vector<CoverageRow> rows;
  for (const auto& iv : intervals) {
    CoverageRow row;
    row.method = std::string(to_string(iv.method));
    row.divergence = iv.divergence ? std::string(to_string(*iv.divergence)) : std::string();
    row.n = iv.n;
    row.replication = replication;
    row.lower = iv.lower;
    row.upper = iv.upper;
    row.true_risk = true_risk;
    row.covered = iv.contains(true_risk);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_coverage_csv(std::ostream& out, const std::vector<CoverageRow>& rows) {
  out << "method,divergence,n,replication,lower,upper,true_risk,covered\n";
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(17);
  for (const auto& r : rows)
    out << r.method << ',' << r.divergence << ',' << r.n << ',' << r.replication << ',' << r.lower << ','
        << r.upper << ',' << r.true_risk << ',' << (r.covered ? 1 : 0) << '\n';
  out.flags(flags);
  out.precision(prec);
}

}  // namespace cfdro
