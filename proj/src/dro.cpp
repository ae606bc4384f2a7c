#include "cfdro/dro.hpp"

#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "cfdro/errors.hpp"
#include "cfdro/numeric.hpp"

namespace cfdro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Upper end for the inner variable t = (max z - beta) / gamma: at this t the
// largest term alone pushes mean (phi*)'(u) to at least 1.
double inner_cap(DivergenceKind kind, std::size_t n) {
  const double nd = static_cast<double>(n);
  switch (kind) {
    case DivergenceKind::ChiSquare: return 2.0 * (nd - 1.0) + 1.0;
    case DivergenceKind::KL: return std::log(nd) + 1.0;
    case DivergenceKind::Burg:
    case DivergenceKind::Hellinger: return 1.0 - 1.0 / (2.0 * nd);
  }
  return kInf;
}

// Reduced problem in (gamma, t) where beta = zmax - gamma * t and u_i = d_i / gamma + t,
// d_i = z_i - zmax <= 0. Working with offsets from the maximum keeps u exact near
// the Burg/Hellinger barrier u < 1.
class ReducedDual {
 public:
  ReducedDual(std::span<const double> z, DivergenceKind kind, double eps, const DualSolverOptions& opts)
      : kind_(kind), eps_(eps), opts_(opts), d_(z.size()), scratch_(z.size()) {
    zmax_ = *std::max_element(z.begin(), z.end());
    zmin_ = *std::min_element(z.begin(), z.end());
    for (std::size_t i = 0; i < z.size(); ++i) d_[i] = z[i] - zmax_;
    cap_ = inner_cap(kind, z.size());
  }

  double zmax() const { return zmax_; }
  double range() const { return zmax_ - zmin_; }
  int iterations() const { return iterations_; }

  // mean (phi*)'(u) - 1, nondecreasing in t.
  double inner_residual(double gamma, double t) {
    for (std::size_t i = 0; i < d_.size(); ++i) scratch_[i] = phi_conjugate_derivative(kind_, d_[i] / gamma + t);
    return mean(scratch_) - 1.0;
  }

  // argmin over beta of g(., gamma), expressed as t.
  double solve_inner(double gamma) {
    const double f0 = inner_residual(gamma, 0.0);
    if (f0 >= 0.0) return 0.0;
    const double hi = std::min(range() / gamma, cap_);
    const double fhi = inner_residual(gamma, hi);
    if (fhi <= 0.0) return hi;
    std::uintmax_t iters = static_cast<std::uintmax_t>(opts_.max_iterations);
    auto tol = [](double a, double b) { return std::abs(a - b) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b)); };
    auto [a, b] = boost::math::tools::toms748_solve([&](double t) { return inner_residual(gamma, t); }, 0.0, hi, f0,
                                                    fhi, tol, iters);
    iterations_ += static_cast<int>(iters);
    if (iters >= static_cast<std::uintmax_t>(opts_.max_iterations))
      throw SolverError("dual solver: beta root-find did not converge", kInf);
    return 0.5 * (a + b);
  }

  // h(gamma) = min_beta g(beta, gamma) and its derivative (envelope theorem).
  struct Eval {
    double t;
    double value;
    double slope;
  };

  Eval evaluate(double gamma) {
    const double t = solve_inner(gamma);
    for (std::size_t i = 0; i < d_.size(); ++i) scratch_[i] = phi_conjugate(kind_, d_[i] / gamma + t);
    const double conj_mean = mean(scratch_);
    for (std::size_t i = 0; i < d_.size(); ++i) {
      const double u = d_[i] / gamma + t;
      scratch_[i] = phi_conjugate(kind_, u) - u * phi_conjugate_derivative(kind_, u);
    }
    const double psi_mean = mean(scratch_);
    return {t, zmax_ + gamma * (eps_ - t + conj_mean), eps_ + psi_mean};
  }

 private:
  DivergenceKind kind_;
  double eps_;
  DualSolverOptions opts_;
  std::vector<double> d_;
  std::vector<double> scratch_;
  double zmax_ = 0.0;
  double zmin_ = 0.0;
  double cap_ = 0.0;
  int iterations_ = 0;
};

void check_input(std::span<const double> z) {
  if (z.empty()) throw std::invalid_argument("dual solver: empty cost vector");
  for (double v : z)
    if (!std::isfinite(v)) throw std::invalid_argument("dual solver: non-finite weighted cost");
}

}  // namespace

AmbiguityRadius::AmbiguityRadius(double epsilon) : epsilon_(epsilon) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
    throw DomainError("ambiguity radius must be finite and nonnegative");
}

double dual_objective(std::span<const double> z, DivergenceKind kind, AmbiguityRadius eps, double beta, double gamma) {
  if (!(gamma >= 0.0)) throw DomainError("dual_objective: gamma must be nonnegative");
  std::vector<double> terms(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    terms[i] = scaled_conjugate(kind, gamma, z[i] - beta);
    if (terms[i] == kInf) return kInf;
  }
  const double value = beta + gamma * eps.epsilon() + mean(terms);
  return std::isnan(value) ? kInf : value;
}

DualPartials dual_partials(std::span<const double> z, DivergenceKind kind, AmbiguityRadius eps, double beta,
                           double gamma) {
  if (!(gamma > 0.0)) throw DomainError("dual_partials: gamma must be positive");
  const std::size_t n = z.size();
  const double nd = static_cast<double>(n);
  std::vector<double> conj(n), deriv(n), psi(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (z[i] - beta) / gamma;
    if (!(u < conjugate_domain_bound(kind))) throw DomainError("dual_partials: outside the conjugate domain");
    conj[i] = phi_conjugate(kind, u);
    deriv[i] = phi_conjugate_derivative(kind, u);
    psi[i] = conj[i] - u * deriv[i];
    if (!std::isfinite(conj[i]) || !std::isfinite(deriv[i])) throw DomainError("dual_partials: conjugate overflow");
  }
  DualPartials out;
  out.value = beta + gamma * eps.epsilon() + gamma * mean(conj);
  out.d_beta = 1.0 - mean(deriv);
  out.d_gamma = eps.epsilon() + mean(psi);
  out.d_z.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.d_z[i] = deriv[i] / nd;
  return out;
}

DualSolution robust_risk_dual(std::span<const double> z, DivergenceKind kind, AmbiguityRadius eps,
                              const DualSolverOptions& opts) {
  check_input(z);
  const double z_mean = mean(z);
  if (eps.epsilon() == 0.0) return {z_mean, {z_mean, kInf, z_mean}, 0, false};

  ReducedDual dual(z, kind, eps.epsilon(), opts);
  const double zmax = dual.zmax();
  const double range = dual.range();
  if (range <= 1e-14 * std::max(1.0, std::abs(zmax))) return {zmax, {zmax, 0.0, zmax}, 0, true};

  DualSolution sol;
  auto finish = [&](double gamma, const ReducedDual::Eval& e) {
    sol.argmin = {zmax - gamma * e.t, gamma, std::clamp(e.value, z_mean, zmax)};
    sol.value = sol.argmin.value;
    sol.iterations = dual.iterations();
    return sol;
  };

  // h is convex in gamma, so h' changes sign at most once. A nonnegative slope at
  // a tiny gamma puts the optimum on the gamma = 0 face where h(0+) = max z.
  const double gamma_lo = range * 1e-10;
  const auto lo = dual.evaluate(gamma_lo);
  if (lo.slope >= 0.0) {
    sol.boundary = true;
    if (lo.value >= zmax) {
      sol.argmin = {zmax, 0.0, zmax};
      sol.value = zmax;
      sol.iterations = dual.iterations();
      return sol;
    }
    return finish(gamma_lo, lo);
  }

  double gamma_hi = range;
  auto hi = dual.evaluate(gamma_hi);
  for (int k = 0; hi.slope < 0.0; ++k) {
    if (k > 200) throw SolverError("dual solver: could not bracket gamma", hi.value);
    gamma_hi *= 4.0;
    hi = dual.evaluate(gamma_hi);
  }
  if (hi.slope == 0.0) return finish(gamma_hi, hi);

  std::uintmax_t iters = static_cast<std::uintmax_t>(opts.max_iterations);
  const double rel = std::ldexp(1.0, -opts.precision_bits);
  auto tol = [rel](double a, double b) { return std::abs(a - b) <= rel * std::max(1.0, std::abs(a)); };
  auto slope = [&](double log_gamma) { return dual.evaluate(std::exp(log_gamma)).slope; };
  const double a0 = std::log(gamma_lo), b0 = std::log(gamma_hi);
  auto [a, b] = boost::math::tools::toms748_solve(slope, a0, b0, lo.slope, hi.slope, tol, iters);
  if (iters >= static_cast<std::uintmax_t>(opts.max_iterations))
    throw SolverError("dual solver: gamma root-find did not converge after " + std::to_string(iters) + " iterations",
                      hi.value);
  const double gamma = std::exp(0.5 * (a + b));
  return finish(gamma, dual.evaluate(gamma));
}

DualSolution optimistic_risk_dual(std::span<const double> z, DivergenceKind kind, AmbiguityRadius eps,
                                  const DualSolverOptions& opts) {
  std::vector<double> neg(z.size());
  std::transform(z.begin(), z.end(), neg.begin(), [](double v) { return -v; });
  DualSolution sol = robust_risk_dual(neg, kind, eps, opts);
  sol.value = -sol.value;
  return sol;
}

double kl_reduced_dual(std::span<const double> z, AmbiguityRadius eps, double gamma) {
  if (!(gamma > 0.0)) throw DomainError("kl_reduced_dual: gamma must be positive");
  check_input(z);
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) e[i] = std::exp((z[i] - m) / gamma);
  return gamma * eps.epsilon() + m + gamma * std::log(mean(e));
}

double kl_softmax_risk(std::span<const double> z, double gamma) {
  if (!(gamma > 0.0)) throw DomainError("kl_softmax_risk: gamma must be positive");
  check_input(z);
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size()), ez(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp((z[i] - m) / gamma);
    ez[i] = e[i] * z[i];
  }
  return pairwise_sum(ez) / pairwise_sum(e);
}

namespace {

// Lattice enumeration of q in the simplex with denominators `steps`.
template <typename F>
void for_each_simplex_point(std::size_t n, std::int64_t steps, F&& visit) {
  std::vector<double> q(n);
  std::vector<std::int64_t> k(n, 0);
  const double h = 1.0 / static_cast<double>(steps);
  auto rec = [&](auto&& self, std::size_t pos, std::int64_t remaining) -> void {
    if (pos + 1 == n) {
      k[pos] = remaining;
      for (std::size_t i = 0; i < n; ++i) q[i] = static_cast<double>(k[i]) * h;
      visit(q);
      return;
    }
    for (std::int64_t c = 0; c <= remaining; ++c) {
      k[pos] = c;
      self(self, pos + 1, remaining - c);
    }
  };
  rec(rec, 0, steps);
}

}  // namespace

double primal_oracle(std::span<const double> z, DivergenceKind kind, double epsilon, double grid_resolution) {
  const std::size_t n = z.size();
  if (n == 0 || n > 4) throw std::invalid_argument("primal_oracle: supports 1 <= n <= 4");
  if (!(epsilon >= 0.0)) throw DomainError("primal_oracle: epsilon must be nonnegative");
  if (!(grid_resolution > 0.0 && grid_resolution <= 0.5))
    throw std::invalid_argument("primal_oracle: resolution must lie in (0, 0.5]");
  if (n == 1) return z[0];

  auto objective = [&](const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += q[i] * z[i];
    return s;
  };
  auto feasible = [&](const std::vector<double>& q) { return divergence_from_uniform(kind, q) <= epsilon; };

  // The uniform point is always feasible.
  std::vector<double> best(n, 1.0 / static_cast<double>(n));
  double best_value = objective(best);
  const auto steps = static_cast<std::int64_t>(std::llround(1.0 / grid_resolution));
  for_each_simplex_point(n, steps, [&](const std::vector<double>& q) {
    const double v = objective(q);
    if (v > best_value && feasible(q)) {
      best_value = v;
      best = q;
    }
  });

  // Local refinement on a shrinking box in the first n-1 coordinates.
  constexpr int kPerSide = 10;
  double half_width = 2.0 / static_cast<double>(steps);
  std::vector<double> q(n);
  const std::size_t free = n - 1;
  std::size_t cells = 1;
  for (std::size_t i = 0; i < free; ++i) cells *= 2 * kPerSide + 1;
  while (half_width > 1e-13) {
    const std::vector<double> center = best;
    const double h = half_width / kPerSide;
    for (std::size_t cell = 0; cell < cells; ++cell) {
      std::size_t rem = cell;
      double partial = 0.0;
      bool ok = true;
      for (std::size_t i = 0; i < free; ++i) {
        const auto offset = static_cast<int>(rem % (2 * kPerSide + 1)) - kPerSide;
        rem /= 2 * kPerSide + 1;
        q[i] = center[i] + offset * h;
        if (q[i] < 0.0) ok = false;
        partial += q[i];
      }
      q[n - 1] = 1.0 - partial;
      if (!ok || q[n - 1] < 0.0) continue;
      const double v = objective(q);
      if (v > best_value && feasible(q)) {
        best_value = v;
        best = q;
      }
    }
    half_width *= 0.25;
  }
  return best_value;
}

DualGradient dual_gradient(const WeightedCostModel& model, const LinearPolicy& policy, DivergenceKind kind,
                           AmbiguityRadius eps, double beta, double gamma, std::span<const std::size_t> subset) {
  const WeightedCosts z = model.evaluate(policy, subset);
  const DualPartials p = dual_partials(z.values, kind, eps, beta, gamma);
  return {p.value, p.d_beta, p.d_gamma, model.pullback(policy, p.d_z, subset)};
}

}  // namespace cfdro
