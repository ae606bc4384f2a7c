#include "cfdro/estimators.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "cfdro/errors.hpp"
#include "cfdro/numeric.hpp"

namespace cfdro {

namespace {

void check_policy(const BanditLog& log, const LinearPolicy& policy) {
  if (!(policy.action_space() == log.action_space()))
    throw std::invalid_argument("policy action space " + to_string(policy.action_space()) +
                                " does not match the log's " + to_string(log.action_space()));
  if (policy.input_dim() != log.feature_dim())
    throw std::invalid_argument("policy and log feature dimensions differ");
}

}  // namespace

CostScale CostScale::hamming(std::size_t num_labels) {
  if (num_labels == 0) throw std::invalid_argument("CostScale::hamming: zero labels");
  return {1.0 / static_cast<double>(num_labels), -1.0};
}

BanditLog::BanditLog(std::vector<BanditRecord> records, ActionSpace space, CostScale cost_scale)
    : records_(std::move(records)), space_(space), cost_scale_(cost_scale) {
  if (records_.empty()) throw InvalidLogError("bandit log is empty");
  if (!(cost_scale_.scale > 0.0)) throw InvalidLogError("cost scale must be positive");
  feature_dim_ = static_cast<std::size_t>(records_.front().features.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    const std::string where = " (record " + std::to_string(i) + ")";
    if (static_cast<std::size_t>(r.features.size()) != feature_dim_)
      throw InvalidLogError("feature dimension mismatch" + where);
    if (!(r.propensity > 0.0) || r.propensity > 1.0)
      throw InvalidLogError("propensity must lie in (0, 1]" + where);
    if (!(r.cost >= -1.0 && r.cost <= 0.0)) throw InvalidLogError("rescaled cost outside [-1, 0]" + where);
    if (std::abs(cost_scale_.to_scaled(r.cost_raw) - r.cost) > 1e-9)
      throw InvalidLogError("rescaled cost disagrees with the cost scale" + where);
    if (!space_.contains(r.action)) throw InvalidLogError("action outside the action space" + where);
  }
}

std::vector<double> BanditLog::costs() const {
  std::vector<double> c(records_.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = records_[i].cost;
  return c;
}

WeightedCosts importance_weights(const BanditLog& log, const LinearPolicy& policy, const EstimatorOptions& opts) {
  check_policy(log, policy);
  WeightedCosts out;
  out.values.resize(log.size());
  out.weights.resize(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& r = log[i];
    double w = policy.action_prob(r.features, r.action) / r.propensity;
    if (opts.max_weight) w = std::min(w, *opts.max_weight);
    out.weights[i] = w;
    out.values[i] = w * r.cost;
  }
  return out;
}

double ips_risk(const WeightedCosts& z) { return mean(z.values); }

double ips_risk(const BanditLog& log, const LinearPolicy& policy, const EstimatorOptions& opts) {
  return ips_risk(importance_weights(log, policy, opts));
}

double empirical_variance(const WeightedCosts& z) { return sample_variance(z.values); }

double empirical_variance(const BanditLog& log, const LinearPolicy& policy, const EstimatorOptions& opts) {
  return empirical_variance(importance_weights(log, policy, opts));
}

double crm_objective(const WeightedCosts& z, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("crm_objective: lambda must be nonnegative");
  const double n = static_cast<double>(z.size());
  return ips_risk(z) + lambda * std::sqrt(empirical_variance(z) / n);
}

double crm_objective(const BanditLog& log, const LinearPolicy& policy, double lambda, const EstimatorOptions& opts) {
  return crm_objective(importance_weights(log, policy, opts), lambda);
}

WeightedCosts control_variate_costs(const BanditLog& log, const LinearPolicy& policy, double rho,
                                    const EstimatorOptions& opts) {
  WeightedCosts z = importance_weights(log, policy, opts);
  for (std::size_t i = 0; i < z.size(); ++i) z.values[i] = (log[i].cost - rho) * z.weights[i] + rho;
  return z;
}

double cv_risk(const BanditLog& log, const LinearPolicy& policy, double rho, const EstimatorOptions& opts) {
  return mean(control_variate_costs(log, policy, rho, opts).values);
}

double estimate_rho(const BanditLog& log) { return mean(log.costs()); }

WeightedCosts log_trick_costs(const BanditLog& log, const LinearPolicy& policy, const LinearPolicy& anchor) {
  check_policy(log, policy);
  check_policy(log, anchor);
  WeightedCosts out;
  out.values.resize(log.size());
  out.weights.resize(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& r = log[i];
    if (r.cost > 0.0) throw InvalidLogError("log-trick bound requires nonpositive costs");
    const double log_p = policy.log_action_prob(r.features, r.action);
    const double log_anchor = anchor.log_action_prob(r.features, r.action);
    if (!std::isfinite(log_p) || !std::isfinite(log_anchor))
      throw DomainError("log-trick bound: zero probability on a logged action");
    const double w_anchor = std::exp(log_anchor) / r.propensity;
    out.weights[i] = w_anchor;
    out.values[i] = w_anchor * (1.0 + log_p - log_anchor) * r.cost;
  }
  return out;
}

double log_trick_upper_bound(const BanditLog& log, const LinearPolicy& policy, const LinearPolicy& anchor) {
  return mean(log_trick_costs(log, policy, anchor).values);
}

}  // namespace cfdro

namespace cfdro {

WeightedCostModel WeightedCostModel::ips(const BanditLog& log, EstimatorOptions opts) {
  WeightedCostModel m(log, Kind::Ips);
  m.opts_ = opts;
  return m;
}

WeightedCostModel WeightedCostModel::control_variate(const BanditLog& log, double rho, EstimatorOptions opts) {
  WeightedCostModel m(log, Kind::ControlVariate);
  m.opts_ = opts;
  m.rho_ = rho;
  return m;
}

WeightedCostModel WeightedCostModel::log_trick(const BanditLog& log, const LinearPolicy& anchor) {
  check_policy(log, anchor);
  WeightedCostModel m(log, Kind::LogTrick);
  m.log_anchor_.resize(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log[i].cost > 0.0) throw InvalidLogError("log-trick bound requires nonpositive costs");
    m.log_anchor_[i] = anchor.log_action_prob(log[i].features, log[i].action);
    if (!std::isfinite(m.log_anchor_[i])) throw DomainError("log-trick bound: zero anchor probability");
  }
  return m;
}

WeightedCosts WeightedCostModel::evaluate(const LinearPolicy& policy, std::span<const std::size_t> subset) const {
  check_policy(*log_, policy);
  const std::size_t m = subset.empty() ? log_->size() : subset.size();
  WeightedCosts out;
  out.values.resize(m);
  out.weights.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = subset.empty() ? k : subset[k];
    const auto& r = (*log_)[i];
    const double log_p = policy.log_action_prob(r.features, r.action);
    switch (kind_) {
      case Kind::Ips:
      case Kind::ControlVariate: {
        double w = std::exp(log_p) / r.propensity;
        if (opts_.max_weight) w = std::min(w, *opts_.max_weight);
        out.weights[k] = w;
        out.values[k] = kind_ == Kind::Ips ? w * r.cost : w * (r.cost - rho_) + rho_;
        break;
      }
      case Kind::LogTrick: {
        const double w_anchor = std::exp(log_anchor_[i]) / r.propensity;
        out.weights[k] = w_anchor;
        out.values[k] = w_anchor * (1.0 + log_p - log_anchor_[i]) * r.cost;
        break;
      }
    }
  }
  return out;
}

Eigen::MatrixXd WeightedCostModel::pullback(const LinearPolicy& policy, std::span<const double> coeffs,
                                            std::span<const std::size_t> subset) const {
  check_policy(*log_, policy);
  const std::size_t m = subset.empty() ? log_->size() : subset.size();
  if (coeffs.size() != m) throw std::invalid_argument("pullback: coefficient count mismatch");
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(policy.theta().rows(), policy.theta().cols());
  for (std::size_t k = 0; k < m; ++k) {
    if (coeffs[k] == 0.0) continue;
    const std::size_t i = subset.empty() ? k : subset[k];
    const auto& r = (*log_)[i];
    // dz/dtheta = scale * grad log pi(a|x)
    double scale = 0.0;
    switch (kind_) {
      case Kind::Ips:
      case Kind::ControlVariate: {
        const double w = policy.action_prob(r.features, r.action) / r.propensity;
        if (opts_.max_weight && w >= *opts_.max_weight) continue;  // clipped: locally constant
        scale = w * (kind_ == Kind::Ips ? r.cost : r.cost - rho_);
        break;
      }
      case Kind::LogTrick:
        scale = std::exp(log_anchor_[i]) / r.propensity * r.cost;
        break;
    }
    policy.accumulate_grad_log_prob(r.features, r.action, coeffs[k] * scale, grad);
  }
  return grad;
}

}  // namespace cfdro
