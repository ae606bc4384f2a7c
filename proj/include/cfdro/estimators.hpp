#pragma once

// Counterfactual risk estimators over a logged bandit history.

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "cfdro/policy.hpp"

namespace cfdro {

/// Affine map from raw (e.g. Hamming) cost to the rescaled cost in [-1, 0]:
/// scaled = raw * scale + offset.
struct CostScale {
  double scale = 1.0;
  double offset = 0.0;

  /// raw / L - 1: the best multilabel action maps to -1, the worst to 0.
  static CostScale hamming(std::size_t num_labels);

  double to_scaled(double raw) const { return raw * scale + offset; }
  double to_raw(double scaled) const { return (scaled - offset) / scale; }
  friend bool operator==(const CostScale&, const CostScale&) = default;
};

struct BanditRecord {
  Eigen::VectorXd features;
  Action action;
  double propensity = 1.0;  // pi_0(a | x)
  double cost_raw = 0.0;
  double cost = 0.0;        // rescaled, in [-1, 0]
};

/// Immutable logged history. Construction validates every record: positive
/// propensity in (0, 1], rescaled cost in [-1, 0] and consistent with the raw
/// cost, matching dimensions, action inside the action space.
class BanditLog {
 public:
  BanditLog(std::vector<BanditRecord> records, ActionSpace space, CostScale cost_scale);

  const std::vector<BanditRecord>& records() const { return records_; }
  const BanditRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  std::size_t feature_dim() const { return feature_dim_; }
  const ActionSpace& action_space() const { return space_; }
  const CostScale& cost_scale() const { return cost_scale_; }
  std::vector<double> costs() const;

 private:
  std::vector<BanditRecord> records_;
  ActionSpace space_;
  CostScale cost_scale_;
  std::size_t feature_dim_ = 0;
};

/// Per-record importance weights and weighted costs z_i = w_i c_i.
struct WeightedCosts {
  std::vector<double> values;
  std::vector<double> weights;
  std::size_t size() const { return values.size(); }
};

struct EstimatorOptions {
  /// Optional cap W_max applied to every importance weight.
  std::optional<double> max_weight;
};

WeightedCosts importance_weights(const BanditLog& log, const LinearPolicy& policy, const EstimatorOptions& opts = {});

double ips_risk(const WeightedCosts& z);
double ips_risk(const BanditLog& log, const LinearPolicy& policy, const EstimatorOptions& opts = {});

double empirical_variance(const WeightedCosts& z);
double empirical_variance(const BanditLog& log, const LinearPolicy& policy, const EstimatorOptions& opts = {});

/// IPS risk plus lambda * sqrt(variance / n).
double crm_objective(const WeightedCosts& z, double lambda);
double crm_objective(const BanditLog& log, const LinearPolicy& policy, double lambda,
                     const EstimatorOptions& opts = {});

/// Per-record terms (c_i - rho) w_i + rho of the additive control-variate
/// estimator; their mean is cv_risk. `weights` are the importance weights.
WeightedCosts control_variate_costs(const BanditLog& log, const LinearPolicy& policy, double rho,
                                    const EstimatorOptions& opts = {});

double cv_risk(const BanditLog& log, const LinearPolicy& policy, double rho, const EstimatorOptions& opts = {});

/// Empirical mean of the logged (rescaled) costs.
double estimate_rho(const BanditLog& log);

/// Per-record terms of the log-trick majorizer anchored at `anchor`:
/// (pi_anchor / pi_0) * (1 + log(pi / pi_anchor)) * c. Requires c <= 0.
WeightedCosts log_trick_costs(const BanditLog& log, const LinearPolicy& policy, const LinearPolicy& anchor);

/// Convex (in theta) upper bound of the IPS risk, tight at policy == anchor.
double log_trick_upper_bound(const BanditLog& log, const LinearPolicy& policy, const LinearPolicy& anchor);

/// The per-record weighted costs z_i(theta) of one estimator, with their
/// theta-derivatives. Used by the dual gradient and the trainers.
///
///   Ips             z_i = w_i c_i
///   ControlVariate  z_i = w_i (c_i - rho) + rho
///   LogTrick        z_i = w_anchor_i (1 + log pi(a_i|x_i) - log pi_anchor(a_i|x_i)) c_i
class WeightedCostModel {
 public:
  enum class Kind { Ips, ControlVariate, LogTrick };

  static WeightedCostModel ips(const BanditLog& log, EstimatorOptions opts = {});
  static WeightedCostModel control_variate(const BanditLog& log, double rho, EstimatorOptions opts = {});
  static WeightedCostModel log_trick(const BanditLog& log, const LinearPolicy& anchor);

  Kind kind() const { return kind_; }
  const BanditLog& log() const { return *log_; }
  std::size_t size() const { return log_->size(); }
  double rho() const { return rho_; }

  /// z over all records, or over `subset` (record indices) when non-empty.
  WeightedCosts evaluate(const LinearPolicy& policy, std::span<const std::size_t> subset = {}) const;

  /// sum_k coeffs[k] * dz_{i_k}/dtheta where i_k = subset[k] (or k when subset is empty).
  Eigen::MatrixXd pullback(const LinearPolicy& policy, std::span<const double> coeffs,
                           std::span<const std::size_t> subset = {}) const;

 private:
  WeightedCostModel(const BanditLog& log, Kind kind) : log_(&log), kind_(kind) {}

  const BanditLog* log_;
  Kind kind_;
  EstimatorOptions opts_;
  double rho_ = 0.0;
  std::vector<double> log_anchor_;  // log pi_anchor(a_i | x_i), LogTrick only
};

}  // namespace cfdro
