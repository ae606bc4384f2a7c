#include "cfdro/policy.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cfdro/errors.hpp"

namespace cfdro {

namespace {

// log(sigmoid(u)) without overflow.
double log_sigmoid(double u) {
  return u >= 0.0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u));
}

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

std::uint64_t ActionSpace::num_actions() const {
  if (kind == ActionSpaceKind::Multiclass) return size;
  if (size >= 64) throw std::out_of_range("factorized action space too large to enumerate");
  return std::uint64_t{1} << size;
}

bool ActionSpace::contains(Action a) const {
  if (kind == ActionSpaceKind::Multiclass) return a.code < size;
  return size >= 64 || (a.code >> size) == 0;
}

std::string to_string(const ActionSpace& space) {
  return (space.kind == ActionSpaceKind::Multiclass ? "multiclass(" : "factorized(") +
         std::to_string(space.size) + ")";
}

int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

LinearPolicy::LinearPolicy(Eigen::MatrixXd theta, ActionSpace space, double temperature)
    : theta_(std::move(theta)), space_(space), temperature_(temperature) {
  if (space_.size == 0) throw std::invalid_argument("LinearPolicy: empty action space");
  if (space_.kind == ActionSpaceKind::FactorizedLabels && space_.size > 63)
    throw std::invalid_argument("LinearPolicy: at most 63 labels are supported");
  if (theta_.rows() < 1 || static_cast<std::size_t>(theta_.cols()) != space_.logits_dim())
    throw std::invalid_argument("LinearPolicy: theta shape does not match the action space");
  if (!(temperature_ > 0.0) || !std::isfinite(temperature_))
    throw std::invalid_argument("LinearPolicy: temperature must be positive");
}

LinearPolicy LinearPolicy::zeros(std::size_t input_dim, ActionSpace space, double temperature) {
  return LinearPolicy(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(input_dim + 1),
                                            static_cast<Eigen::Index>(space.logits_dim())),
                      space, temperature);
}

LinearPolicy LinearPolicy::with_theta(Eigen::MatrixXd theta) const {
  return LinearPolicy(std::move(theta), space_, temperature_);
}

LinearPolicy LinearPolicy::with_temperature(double temperature) const {
  return LinearPolicy(theta_, space_, temperature);
}

Eigen::VectorXd LinearPolicy::logits(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const auto d = static_cast<Eigen::Index>(input_dim());
  if (x.size() != d) throw std::invalid_argument("LinearPolicy: context dimension mismatch");
  Eigen::VectorXd out = theta_.topRows(d).transpose() * x;
  out += theta_.row(d).transpose();
  out /= temperature_;
  return out;
}

double LinearPolicy::log_action_prob(const Eigen::Ref<const Eigen::VectorXd>& x, Action a) const {
  if (!space_.contains(a)) throw std::out_of_range("LinearPolicy: action outside the action space");
  const Eigen::VectorXd u = logits(x);
  if (space_.kind == ActionSpaceKind::Multiclass) return u(static_cast<Eigen::Index>(a.code)) - log_sum_exp(u);
  double lp = 0.0;
  for (Eigen::Index j = 0; j < u.size(); ++j) lp += ((a.code >> j) & 1U) ? log_sigmoid(u(j)) : log_sigmoid(-u(j));
  return lp;
}

double LinearPolicy::action_prob(const Eigen::Ref<const Eigen::VectorXd>& x, Action a) const {
  return std::exp(log_action_prob(x, a));
}

Eigen::VectorXd LinearPolicy::probabilities(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd u = logits(x);
  if (space_.kind == ActionSpaceKind::Multiclass) {
    u.array() -= u.maxCoeff();
    u = u.array().exp();
    return u / u.sum();
  }
  for (Eigen::Index j = 0; j < u.size(); ++j) u(j) = sigmoid(u(j));
  return u;
}

Action LinearPolicy::sample_action(const Eigen::Ref<const Eigen::VectorXd>& x, Rng& rng) const {
  const Eigen::VectorXd p = probabilities(x);
  if (space_.kind == ActionSpaceKind::Multiclass) {
    const double u = uniform01(rng);
    double cum = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      cum += p(k);
      if (u < cum) return {static_cast<std::uint64_t>(k)};
    }
    // Rounding left u above the final cumulative sum: take the last action with mass.
    for (Eigen::Index k = p.size() - 1; k >= 0; --k)
      if (p(k) > 0.0) return {static_cast<std::uint64_t>(k)};
    return {0};
  }
  std::uint64_t code = 0;
  for (Eigen::Index j = 0; j < p.size(); ++j)
    if (uniform01(rng) < p(j)) code |= std::uint64_t{1} << j;
  return {code};
}

Action LinearPolicy::greedy_action(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd u = logits(x);
  if (space_.kind == ActionSpaceKind::Multiclass) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < u.size(); ++k)
      if (u(k) > u(best)) best = k;
    return {static_cast<std::uint64_t>(best)};
  }
  std::uint64_t code = 0;
  for (Eigen::Index j = 0; j < u.size(); ++j)
    if (u(j) > 0.0) code |= std::uint64_t{1} << j;
  return {code};
}

void LinearPolicy::accumulate_grad_log_prob(const Eigen::Ref<const Eigen::VectorXd>& x, Action a, double scale,
                                            Eigen::MatrixXd& out) const {
  if (!space_.contains(a)) throw std::out_of_range("LinearPolicy: action outside the action space");
  const Eigen::VectorXd p = probabilities(x);
  // d log pi / d logit_k, then chain through logit_k = theta_k^T [x;1] / T.
  Eigen::VectorXd dlogit(p.size());
  if (space_.kind == ActionSpaceKind::Multiclass) {
    dlogit = -p;
    dlogit(static_cast<Eigen::Index>(a.code)) += 1.0;
  } else {
    for (Eigen::Index j = 0; j < p.size(); ++j) dlogit(j) = (((a.code >> j) & 1U) ? 1.0 : 0.0) - p(j);
  }
  dlogit *= scale / temperature_;
  const auto d = static_cast<Eigen::Index>(input_dim());
  out.topRows(d).noalias() += x * dlogit.transpose();
  out.row(d) += dlogit.transpose();
}

Eigen::MatrixXd LinearPolicy::grad_log_prob(const Eigen::Ref<const Eigen::VectorXd>& x, Action a) const {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(theta_.rows(), theta_.cols());
  accumulate_grad_log_prob(x, a, 1.0, g);
  return g;
}

void LabeledDataset::validate() const {
  if (labels.empty()) throw std::invalid_argument("LabeledDataset: no rows");
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw std::invalid_argument("LabeledDataset: feature rows and label count differ");
  if (num_labels == 0 || num_labels > 63) throw std::invalid_argument("LabeledDataset: label count must be in [1, 63]");
  for (auto t : labels)
    if (t >> num_labels) throw std::invalid_argument("LabeledDataset: label index beyond num_labels");
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
  LabeledDataset out;
  out.num_labels = num_labels;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(labels.at(indices[r]));
  }
  return out;
}

namespace {

void check_compatible(const LinearPolicy& policy, const LabeledDataset& data) {
  if (policy.input_dim() != data.feature_dim())
    throw std::invalid_argument("policy and dataset feature dimensions differ");
  const auto& space = policy.action_space();
  if (space.kind == ActionSpaceKind::FactorizedLabels && space.size != data.num_labels)
    throw std::invalid_argument("factorized policy label count differs from the dataset");
  if (space.kind == ActionSpaceKind::Multiclass && space.size != (std::uint64_t{1} << data.num_labels))
    throw std::invalid_argument("multiclass policy over label sets needs K = 2^L actions");
}

}  // namespace

double true_risk(const LinearPolicy& policy, const LabeledDataset& data) {
  check_compatible(policy, data);
  std::vector<double> per_row(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Eigen::VectorXd p = policy.probabilities(data.row(i));
    const std::uint64_t t = data.labels[i];
    double r = 0.0;
    if (policy.action_space().kind == ActionSpaceKind::FactorizedLabels) {
      for (Eigen::Index j = 0; j < p.size(); ++j) r += ((t >> j) & 1U) ? 1.0 - p(j) : p(j);
    } else {
      for (Eigen::Index a = 0; a < p.size(); ++a) r += p(a) * hamming(static_cast<std::uint64_t>(a), t);
    }
    per_row[i] = r;
  }
  return mean(per_row);
}

double greedy_risk(const LinearPolicy& policy, const LabeledDataset& data) {
  check_compatible(policy, data);
  std::vector<double> per_row(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    per_row[i] = hamming(policy.greedy_action(data.row(i)).code, data.labels[i]);
  return mean(per_row);
}

void write_policy(std::ostream& out, const LinearPolicy& policy) {
  const auto& space = policy.action_space();
  out << "cfdro-policy 1\n";
  out << "action_space " << (space.kind == ActionSpaceKind::Multiclass ? "multiclass" : "factorized") << ' '
      << space.size << '\n';
  out << std::setprecision(17);
  out << "temperature " << policy.temperature() << '\n';
  const auto& th = policy.theta();
  out << "shape " << th.rows() << ' ' << th.cols() << '\n';
  for (Eigen::Index r = 0; r < th.rows(); ++r) {
    for (Eigen::Index c = 0; c < th.cols(); ++c) out << (c ? " " : "") << th(r, c);
    out << '\n';
  }
}

LinearPolicy read_policy(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "cfdro-policy") throw ParseError("not a policy checkpoint", 1);
  if (version != 1) throw ParseError("unsupported policy checkpoint version " + std::to_string(version), 1);
  std::string key, kind;
  std::size_t size = 0;
  if (!(in >> key >> kind >> size) || key != "action_space") throw ParseError("missing action_space", 2);
  ActionSpace space;
  if (kind == "multiclass") space = ActionSpace::multiclass(size);
  else if (kind == "factorized") space = ActionSpace::factorized(size);
  else throw ParseError("unknown action space '" + kind + "'", 2);
  double temperature = 0.0;
  if (!(in >> key >> temperature) || key != "temperature") throw ParseError("missing temperature", 3);
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> key >> rows >> cols) || key != "shape" || rows < 1 || cols < 1) throw ParseError("missing shape", 4);
  Eigen::MatrixXd theta(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      if (!(in >> theta(r, c))) throw ParseError("truncated parameter matrix", static_cast<std::size_t>(5 + r));
  return LinearPolicy(std::move(theta), space, temperature);
}

void save_policy(const std::string& path, const LinearPolicy& policy) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_policy(out, policy);
}

LinearPolicy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_policy(in);
}

}  // namespace cfdro
