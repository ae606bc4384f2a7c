#include "cfdro/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "cfdro/errors.hpp"

namespace cfdro {

namespace {

double safe_eval(const DifferentiableObjective& f, const Eigen::VectorXd& x, Eigen::VectorXd& g) {
  const double v = f(x, g);
  if (std::isnan(v) || !g.allFinite()) return std::numeric_limits<double>::infinity();
  return v;
}

}  // namespace

LbfgsResult minimize_lbfgs(const DifferentiableObjective& f, Eigen::VectorXd x0, const LbfgsOptions& opts,
                           const LbfgsCallback& on_step) {
  LbfgsResult res;
  res.x = std::move(x0);
  res.gradient = Eigen::VectorXd::Zero(res.x.size());
  res.value = safe_eval(f, res.x, res.gradient);
  if (!std::isfinite(res.value)) throw SolverError("L-BFGS: objective is not finite at the starting point", res.value);
  res.history.push_back({0, res.value, res.gradient.lpNorm<Eigen::Infinity>()});

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  Eigen::VectorXd x_new(res.x.size()), g_new(res.x.size());

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    if (res.gradient.lpNorm<Eigen::Infinity>() <= opts.gradient_tolerance) {
      res.converged = true;
      res.stop_reason = "gradient tolerance";
      return res;
    }

    // Two-loop recursion.
    Eigen::VectorXd d = -res.gradient;
    const std::size_t m = s_hist.size();
    std::vector<double> alpha(m);
    for (std::size_t k = m; k-- > 0;) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(d);
      d -= alpha[k] * y_hist[k];
    }
    if (m > 0) d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < m; ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(d);
      d += (alpha[k] - beta) * s_hist[k];
    }

    double slope = res.gradient.dot(d);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -res.gradient;
      slope = -res.gradient.squaredNorm();
    }
    double step = m == 0 ? std::min(1.0, 1.0 / res.gradient.lpNorm<Eigen::Infinity>()) : 1.0;

    bool accepted = false;
    double v_new = 0.0;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      x_new = res.x + step * d;
      v_new = safe_eval(f, x_new, g_new);
      if (v_new <= res.value + opts.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.stop_reason = "line search failed";
      res.converged = res.gradient.lpNorm<Eigen::Infinity>() <= 1e3 * opts.gradient_tolerance;
      return res;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - res.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (static_cast<int>(s_hist.size()) == opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
    }

    const double decrease = res.value - v_new;
    res.x = x_new;
    res.gradient = g_new;
    res.value = v_new;
    res.iterations = iter;
    res.history.push_back({iter, res.value, res.gradient.lpNorm<Eigen::Infinity>()});
    if (on_step) on_step(res.history.back(), res.x);

    if (decrease <= opts.value_tolerance * std::max(1.0, std::abs(res.value))) {
      res.converged = true;
      res.stop_reason = "value tolerance";
      return res;
    }
  }
  res.stop_reason = "iteration limit";
  return res;
}

}  // namespace cfdro
