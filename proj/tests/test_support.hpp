#pragma once

// Shared fixtures for the unit and acceptance tests: hand-built logs and a
// tabular environment (finitely many contexts, known probabilities and mean
// costs) whose true risk is known in closed form.

#include <cmath>
#include <vector>

#include "cfdro/estimators.hpp"
#include "cfdro/numeric.hpp"
#include "cfdro/policy.hpp"

namespace cfdro::testing {

inline Eigen::VectorXd one_hot(std::size_t dim, std::size_t k) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  x(static_cast<Eigen::Index>(k)) = 1.0;
  return x;
}

/// Multiclass policy on one-hot contexts with pi(a | context k) = probs[k][a].
inline LinearPolicy tabular_policy(const std::vector<std::vector<double>>& probs) {
  const std::size_t C = probs.size(), K = probs.front().size();
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(C + 1), static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < C; ++k)
    for (std::size_t a = 0; a < K; ++a)
      theta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(a)) = std::log(probs[k][a]);
  return LinearPolicy(theta, ActionSpace::multiclass(K));
}

inline std::size_t sample_categorical(const std::vector<double>& p, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return p.size() - 1;
}

/// Contexts drawn uniformly; cost = -1 with probability mu[k][a], else 0.
struct TabularEnv {
  std::vector<std::vector<double>> logging;
  std::vector<std::vector<double>> target;
  std::vector<std::vector<double>> mu;

  std::size_t contexts() const { return logging.size(); }
  std::size_t actions() const { return logging.front().size(); }

  double true_risk() const {
    double r = 0.0;
    for (std::size_t k = 0; k < contexts(); ++k)
      for (std::size_t a = 0; a < actions(); ++a) r -= target[k][a] * mu[k][a];
    return r / static_cast<double>(contexts());
  }

  /// Weighted costs of the target policy on a fresh log of size n.
  WeightedCosts sample_z(std::size_t n, Rng& rng) const {
    WeightedCosts z;
    z.values.reserve(n);
    z.weights.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = uniform_index(rng, contexts());
      const std::size_t a = sample_categorical(logging[k], rng);
      const double c = uniform01(rng) < mu[k][a] ? -1.0 : 0.0;
      const double w = target[k][a] / logging[k][a];
      z.weights.push_back(w);
      z.values.push_back(w * c);
    }
    return z;
  }

  /// The same draw as a BanditLog over one-hot contexts (raw cost 0 or 1, scaled -1 or 0).
  BanditLog sample_log(std::size_t n, Rng& rng) const {
    std::vector<BanditRecord> recs;
    recs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = uniform_index(rng, contexts());
      const std::size_t a = sample_categorical(logging[k], rng);
      const bool hit = uniform01(rng) < mu[k][a];
      BanditRecord r;
      r.features = one_hot(contexts(), k);
      r.action = Action{a};
      r.propensity = logging[k][a];
      r.cost_raw = hit ? 0.0 : 1.0;
      r.cost = hit ? -1.0 : 0.0;
      recs.push_back(std::move(r));
    }
    return BanditLog(std::move(recs), ActionSpace::multiclass(actions()), CostScale{1.0, -1.0});
  }
};

/// Four contexts, four actions, importance weights at most 2.5.
inline TabularEnv coverage_env() {
  TabularEnv e;
  e.logging = {{0.25, 0.25, 0.25, 0.25}, {0.4, 0.3, 0.2, 0.1}, {0.1, 0.2, 0.3, 0.4}, {0.3, 0.2, 0.3, 0.2}};
  e.target = {{0.4, 0.3, 0.2, 0.1}, {0.25, 0.25, 0.25, 0.25}, {0.1, 0.1, 0.3, 0.5}, {0.5, 0.1, 0.3, 0.1}};
  e.mu = {{0.8, 0.5, 0.3, 0.1}, {0.2, 0.6, 0.4, 0.9}, {0.5, 0.5, 0.7, 0.3}, {0.9, 0.1, 0.6, 0.4}};
  return e;
}

/// Cost independent of the action and context: mu constant.
inline TabularEnv independence_env() {
  TabularEnv e = coverage_env();
  for (auto& row : e.mu)
    for (auto& m : row) m = 0.6;
  return e;
}

/// Two-record log from the estimator examples: pi0 = (0.3, 0.4), c = (-1, -0.5)
/// and a policy with pi(a_1|x_1) = 0.6, pi(a_2|x_2) = 0.2.
struct TwoRecordFixture {
  BanditLog log;
  LinearPolicy policy;
};

inline TwoRecordFixture two_record_fixture() {
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  // Multiclass K=2, one feature; logit of action 0 minus action 1 is w x + b.
  const double b = logit(0.2), w = logit(0.6) - b;
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(2, 2);
  theta(0, 0) = w;
  theta(1, 0) = b;
  LinearPolicy policy(theta, ActionSpace::multiclass(2));
  std::vector<BanditRecord> recs(2);
  recs[0].features = Eigen::VectorXd::Constant(1, 1.0);
  recs[0].action = Action{0};
  recs[0].propensity = 0.3;
  recs[0].cost_raw = 0.0;
  recs[0].cost = -1.0;
  recs[1].features = Eigen::VectorXd::Constant(1, 0.0);
  recs[1].action = Action{0};
  recs[1].propensity = 0.4;
  recs[1].cost_raw = 1.0;
  recs[1].cost = -0.5;
  return {BanditLog(std::move(recs), ActionSpace::multiclass(2), CostScale::hamming(2)), policy};
}

/// Random log for a random factorized policy; costs are Hamming to random labels.
inline BanditLog random_factorized_log(std::size_t n, std::size_t dim, std::size_t labels, const LinearPolicy& pi0,
                                       Rng& rng) {
  const CostScale scale = CostScale::hamming(labels);
  std::vector<BanditRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    BanditRecord r;
    r.features = Eigen::VectorXd(static_cast<Eigen::Index>(dim));
    for (Eigen::Index j = 0; j < r.features.size(); ++j) r.features(j) = 2.0 * uniform01(rng) - 1.0;
    r.action = pi0.sample_action(r.features, rng);
    r.propensity = pi0.action_prob(r.features, r.action);
    const std::uint64_t t = uniform_index(rng, std::uint64_t{1} << labels);
    r.cost_raw = hamming(r.action.code, t);
    r.cost = scale.to_scaled(r.cost_raw);
    recs.push_back(std::move(r));
  }
  return BanditLog(std::move(recs), pi0.action_space(), scale);
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * (2.0 * uniform01(rng) - 1.0);
  return m;
}

inline std::vector<double> random_costs(std::size_t n, Rng& rng, double lo = -1.0, double hi = 0.0) {
  std::vector<double> z(n);
  for (auto& v : z) v = lo + (hi - lo) * uniform01(rng);
  return z;
}

}  // namespace cfdro::testing
