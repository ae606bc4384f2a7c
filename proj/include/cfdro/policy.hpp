#pragma once

// Log-linear policies over a finite action space.
//
// The joint feature map is block one-hot: each logit owns one column of theta
// and sees the context with a constant bias feature appended, so theta has
// (input_dim + 1) rows. Two action spaces are supported:
//
//   Multiclass(K)         pi(a|x) = softmax(theta^T [x;1] / T)_a, a in [0, K)
//   FactorizedLabels(L)   pi(a|x) = prod_j Bernoulli(a_j; sigmoid(theta_j^T [x;1] / T))
//
// For multilabel data the multiclass action index doubles as a label bitmask,
// so both spaces share the Hamming cost.

#include <Eigen/Dense>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cfdro/numeric.hpp"

namespace cfdro {

/// Action identifier. For FactorizedLabels (and multiclass over label sets) bit j
/// of `code` is label j.
struct Action {
  std::uint64_t code = 0;
  friend auto operator<=>(const Action&, const Action&) = default;
};

enum class ActionSpaceKind { Multiclass, FactorizedLabels };

struct ActionSpace {
  ActionSpaceKind kind = ActionSpaceKind::FactorizedLabels;
  std::size_t size = 0;  // K for Multiclass, L for FactorizedLabels

  static ActionSpace multiclass(std::size_t k) { return {ActionSpaceKind::Multiclass, k}; }
  static ActionSpace factorized(std::size_t labels) { return {ActionSpaceKind::FactorizedLabels, labels}; }

  std::size_t logits_dim() const { return size; }
  /// Number of distinct actions (K or 2^L). Throws if 2^L does not fit.
  std::uint64_t num_actions() const;
  bool contains(Action a) const;
  friend bool operator==(const ActionSpace&, const ActionSpace&) = default;
};

std::string to_string(const ActionSpace& space);

/// Hamming distance between two label bitmasks.
int hamming(std::uint64_t a, std::uint64_t b);

class LinearPolicy {
 public:
  LinearPolicy(Eigen::MatrixXd theta, ActionSpace space, double temperature = 1.0);

  /// theta = 0: the uniform policy.
  static LinearPolicy zeros(std::size_t input_dim, ActionSpace space, double temperature = 1.0);

  const Eigen::MatrixXd& theta() const { return theta_; }
  const ActionSpace& action_space() const { return space_; }
  double temperature() const { return temperature_; }
  std::size_t input_dim() const { return static_cast<std::size_t>(theta_.rows()) - 1; }

  LinearPolicy with_theta(Eigen::MatrixXd theta) const;
  LinearPolicy with_temperature(double temperature) const;

  Eigen::VectorXd logits(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  double action_prob(const Eigen::Ref<const Eigen::VectorXd>& x, Action a) const;
  double log_action_prob(const Eigen::Ref<const Eigen::VectorXd>& x, Action a) const;

  /// Multiclass: the K action probabilities. Factorized: the L per-label
  /// probabilities P(a_j = 1 | x).
  Eigen::VectorXd probabilities(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  Action sample_action(const Eigen::Ref<const Eigen::VectorXd>& x, Rng& rng) const;

  /// Most probable action; ties go to the lowest action code.
  Action greedy_action(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Gradient of log pi(a|x) w.r.t. theta (same shape as theta).
  Eigen::MatrixXd grad_log_prob(const Eigen::Ref<const Eigen::VectorXd>& x, Action a) const;

  /// out += scale * grad_log_prob(x, a), without allocating the temporary.
  void accumulate_grad_log_prob(const Eigen::Ref<const Eigen::VectorXd>& x, Action a, double scale,
                                Eigen::MatrixXd& out) const;

 private:
  Eigen::MatrixXd theta_;
  ActionSpace space_;
  double temperature_;
};

/// Supervised multilabel data: one feature row and one label bitmask per example.
struct LabeledDataset {
  Eigen::MatrixXd features;            // m x feature_dim
  std::vector<std::uint64_t> labels;   // m bitmasks over num_labels labels
  std::size_t num_labels = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }
  Eigen::VectorXd row(std::size_t i) const { return features.row(static_cast<Eigen::Index>(i)).transpose(); }

  /// Throws std::invalid_argument on inconsistent shapes, empty data, or labels
  /// with bits beyond num_labels.
  void validate() const;
  LabeledDataset subset(const std::vector<std::size_t>& indices) const;
};

/// Exact expected Hamming cost of the stochastic policy averaged over rows.
double true_risk(const LinearPolicy& policy, const LabeledDataset& data);

/// Hamming cost of the greedy (argmax) version of the policy averaged over rows.
double greedy_risk(const LinearPolicy& policy, const LabeledDataset& data);

// Policy checkpoint, textual:
//
//   cfdro-policy 1
//   action_space <multiclass|factorized> <size>
//   temperature <T>
//   shape <rows> <cols>
//   <rows lines of cols values, %.17g>
//
void write_policy(std::ostream& out, const LinearPolicy& policy);
LinearPolicy read_policy(std::istream& in);
void save_policy(const std::string& path, const LinearPolicy& policy);
LinearPolicy load_policy(const std::string& path);

}  // namespace cfdro
