#include "cfdro/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <stdexcept>

#include "cfdro/errors.hpp"
#include "cfdro/lbfgs.hpp"

namespace cfdro {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

struct ParsedRow {
  std::uint64_t labels = 0;
  std::vector<std::pair<std::size_t, double>> features;
};

}  // namespace

LabeledDataset parse_libsvm_multilabel(std::istream& in, const LibsvmOptions& opts) {
  std::vector<ParsedRow> rows;
  std::size_t max_label = 0, max_index = 0;
  bool any_label = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    std::istringstream tokens{std::string(text)};
    std::string tok;
    ParsedRow row;
    bool first = true;
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (first && colon == std::string::npos) {
        std::string_view rest = tok;
        while (true) {
          const auto comma = rest.find(',');
          const std::string_view piece = rest.substr(0, comma);
          std::size_t label = 0;
          if (!parse_number(piece, label)) throw ParseError("malformed label '" + std::string(piece) + "'", line_no);
          if (label > 62) throw ParseError("label id " + std::to_string(label) + " exceeds the supported 63 labels", line_no);
          row.labels |= std::uint64_t{1} << label;
          max_label = std::max(max_label, label);
          any_label = true;
          if (comma == std::string_view::npos) break;
          rest = rest.substr(comma + 1);
        }
        first = false;
        continue;
      }
      first = false;
      if (colon == std::string::npos) throw ParseError("expected index:value, got '" + tok + "'", line_no);
      std::size_t index = 0;
      double value = 0.0;
      if (!parse_number(std::string_view(tok).substr(0, colon), index) || index == 0)
        throw ParseError("malformed feature index in '" + tok + "'", line_no);
      if (!parse_number(std::string_view(tok).substr(colon + 1), value) || !std::isfinite(value))
        throw ParseError("malformed feature value in '" + tok + "'", line_no);
      for (const auto& [seen, _] : row.features)
        if (seen == index) throw ParseError("duplicate feature index " + std::to_string(index), line_no);
      row.features.emplace_back(index, value);
      max_index = std::max(max_index, index);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("no examples found", 0);

  LabeledDataset data;
  data.num_labels = opts.num_labels.value_or(any_label ? max_label + 1 : 1);
  if (any_label && max_label >= data.num_labels)
    throw ParseError("label id " + std::to_string(max_label) + " exceeds the declared label count", 0);
  const std::size_t dim = opts.feature_dim.value_or(max_index);
  if (max_index > dim) throw ParseError("feature index " + std::to_string(max_index) + " exceeds the declared dimension", 0);
  data.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  data.labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const auto& [index, value] : rows[r].features)
      data.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(index - 1)) = value;
    data.labels.push_back(rows[r].labels);
  }
  data.validate();
  return data;
}

LabeledDataset parse_libsvm_multilabel(const std::string& path, const LibsvmOptions& opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return parse_libsvm_multilabel(in, opts);
}

void write_libsvm_multilabel(std::ostream& out, const LabeledDataset& data) {
  char buf[32];
  for (std::size_t r = 0; r < data.size(); ++r) {
    bool first = true;
    for (std::size_t j = 0; j < data.num_labels; ++j) {
      if ((data.labels[r] >> j) & 1U) {
        out << (first ? "" : ",") << j;
        first = false;
      }
    }
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
      const double v = data.features(static_cast<Eigen::Index>(r), c);
      if (v == 0.0) continue;
      // shortest representation that parses back to the same double
      const auto res = std::to_chars(buf, buf + sizeof(buf), v);
      out << ' ' << (c + 1) << ':' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

LabeledDataset make_synthetic_multilabel(std::size_t rows, std::size_t feature_dim, std::size_t num_labels,
                                         std::uint64_t seed) {
  Rng rng(seed);
  auto gaussian = [&rng] {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    const double u = 1.0 - uniform01(rng), v = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * 3.14159265358979323846 * v);
  };
  const auto d = static_cast<Eigen::Index>(feature_dim);
  const auto L = static_cast<Eigen::Index>(num_labels);
  Eigen::MatrixXd w(d, L);
  for (Eigen::Index j = 0; j < L; ++j)
    for (Eigen::Index i = 0; i < d; ++i) w(i, j) = gaussian();
  LabeledDataset data;
  data.num_labels = num_labels;
  data.features.resize(static_cast<Eigen::Index>(rows), d);
  for (std::size_t r = 0; r < rows; ++r) {
    for (Eigen::Index i = 0; i < d; ++i)
      data.features(static_cast<Eigen::Index>(r), i) = std::round(gaussian() * 1e4) / 1e4;
    std::uint64_t t = 0;
    for (Eigen::Index j = 0; j < L; ++j) {
      const double score = data.features.row(static_cast<Eigen::Index>(r)).dot(w.col(j)) + 0.75 * gaussian();
      if (score > 0.0) t |= std::uint64_t{1} << j;
    }
    data.labels.push_back(t);
  }
  data.validate();
  return data;
}

void SplitSpec::validate() const {
  for (double f : {train_frac, validation_frac, test_frac, logging_frac})
    if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("split fractions must lie in (0, 1)");
  if (std::abs(train_frac + validation_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("train, validation and test fractions must sum to 1");
}

DatasetSplit split_dataset(const LabeledDataset& data, const SplitSpec& spec) {
  spec.validate();
  const std::size_t m = data.size();
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_frac * static_cast<double>(m)));
  const auto n_val = static_cast<std::size_t>(std::llround(spec.validation_frac * static_cast<double>(m)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= m)
    throw std::invalid_argument("dataset too small for the requested split");
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) idx[i] = i;
  Rng rng(spec.seed);
  shuffle_indices(idx, rng);

  DatasetSplit s;
  s.train_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                          idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  const auto n_log = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.logging_frac * n_train)));
  std::vector<std::size_t> train_order = s.train_idx;
  shuffle_indices(train_order, rng);
  s.logging_idx.assign(train_order.begin(), train_order.begin() + static_cast<std::ptrdiff_t>(n_log));
  s.train = data.subset(s.train_idx);
  s.validation = data.subset(s.validation_idx);
  s.test = data.subset(s.test_idx);
  s.logging = data.subset(s.logging_idx);
  return s;
}

LinearPolicy train_logging_policy(const LabeledDataset& data, const LoggingPolicyConfig& config) {
  data.validate();
  ActionSpace space = config.action_space;
  if (space.size == 0) space = ActionSpace::factorized(data.num_labels);
  const LinearPolicy init = LinearPolicy::zeros(data.feature_dim(), space);
  const Eigen::Index rows = init.theta().rows(), cols = init.theta().cols();
  const double m = static_cast<double>(data.size());

  std::vector<Eigen::VectorXd> xs;
  xs.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) xs.push_back(data.row(i));

  // Mean negative log-likelihood of the observed label sets plus L2 decay.
  auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) -> double {
    const LinearPolicy policy = init.with_theta(Eigen::Map<const Eigen::MatrixXd>(x.data(), rows, cols));
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(rows, cols);
    std::vector<double> nll(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Action a{data.labels[i]};
      nll[i] = -policy.log_action_prob(xs[i], a);
      policy.accumulate_grad_log_prob(xs[i], a, -1.0 / m, g);
    }
    g += config.weight_decay * policy.theta();
    grad = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    return mean(nll) + 0.5 * config.weight_decay * x.squaredNorm();
  };

  LbfgsOptions opts;
  opts.max_iterations = config.max_iters;
  opts.value_tolerance = config.tolerance;
  const LbfgsResult res = minimize_lbfgs(objective, Eigen::VectorXd::Zero(rows * cols), opts);
  if (!res.converged)
    std::clog << "warning: logging policy fit stopped before convergence (" << res.stop_reason << ")\n";
  return LinearPolicy(Eigen::Map<const Eigen::MatrixXd>(res.x.data(), rows, cols), space, config.temperature);
}

BanditLog collect_bandit_log(const LabeledDataset& data, const LinearPolicy& policy0, std::size_t replay_count,
                             Rng& rng) {
  if (replay_count == 0) throw std::invalid_argument("replay count must be at least 1");
  data.validate();
  const CostScale scale = CostScale::hamming(data.num_labels);
  std::vector<BanditRecord> records;
  records.reserve(replay_count * data.size());
  for (std::size_t p = 0; p < replay_count; ++p) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      BanditRecord r;
      r.features = data.row(i);
      r.action = policy0.sample_action(r.features, rng);
      r.propensity = policy0.action_prob(r.features, r.action);
      r.cost_raw = hamming(r.action.code, data.labels[i]);
      r.cost = scale.to_scaled(r.cost_raw);
      records.push_back(std::move(r));
    }
  }
  return BanditLog(std::move(records), policy0.action_space(), scale);
}

BanditLog collect_bandit_log(const LabeledDataset& data, const LinearPolicy& policy0, std::size_t replay_count,
                             std::uint64_t seed) {
  Rng rng(seed);
  return collect_bandit_log(data, policy0, replay_count, rng);
}

void write_bandit_log(std::ostream& out, const BanditLog& log) {
  const auto& space = log.action_space();
  const bool factorized = space.kind == ActionSpaceKind::FactorizedLabels;
  nlohmann::json header = {
      {"format", "cfdro-bandit-log"},
      {"version", 1},
      {"n", log.size()},
      {"feature_dim", log.feature_dim()},
      {"action_space", {{"kind", factorized ? "factorized" : "multiclass"}, {"size", space.size}}},
      {"cost_scale", {{"scale", log.cost_scale().scale}, {"offset", log.cost_scale().offset}}}};
  out << header.dump() << '\n';
  for (const auto& r : log.records()) {
    nlohmann::json rec;
    rec["features"] = std::vector<double>(r.features.data(), r.features.data() + r.features.size());
    if (factorized) {
      std::vector<int> bits(space.size);
      for (std::size_t j = 0; j < space.size; ++j) bits[j] = static_cast<int>((r.action.code >> j) & 1U);
      rec["action"] = bits;
    } else {
      rec["action"] = r.action.code;
    }
    rec["propensity"] = r.propensity;
    rec["cost_raw"] = r.cost_raw;
    rec["cost_scaled"] = r.cost;
    out << rec.dump() << '\n';
  }
}

BanditLog read_bandit_log(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty bandit log", 0);
  ++line_no;
  ActionSpace space;
  CostScale scale;
  std::size_t n = 0, dim = 0;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("format") != "cfdro-bandit-log") throw ParseError("not a cfdro bandit log", 1);
    if (header.at("version") != 1) throw ParseError("unsupported bandit log version", 1);
    n = header.at("n").get<std::size_t>();
    dim = header.at("feature_dim").get<std::size_t>();
    const auto& as = header.at("action_space");
    const auto kind = as.at("kind").get<std::string>();
    const auto size = as.at("size").get<std::size_t>();
    if (kind == "factorized") space = ActionSpace::factorized(size);
    else if (kind == "multiclass") space = ActionSpace::multiclass(size);
    else throw ParseError("unknown action space kind '" + kind + "'", 1);
    scale = {header.at("cost_scale").at("scale").get<double>(), header.at("cost_scale").at("offset").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad bandit log header: ") + e.what(), 1);
  }

  std::vector<BanditRecord> records;
  records.reserve(n);
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      BanditRecord r;
      const auto feats = j.at("features").get<std::vector<double>>();
      if (feats.size() != dim) throw ParseError("feature dimension disagrees with the header", line_no);
      r.features = Eigen::Map<const Eigen::VectorXd>(feats.data(), static_cast<Eigen::Index>(feats.size()));
      const auto& a = j.at("action");
      if (a.is_array()) {
        if (space.kind != ActionSpaceKind::FactorizedLabels || a.size() != space.size)
          throw ParseError("action bitvector does not match the action space", line_no);
        for (std::size_t b = 0; b < a.size(); ++b) {
          const int bit = a[b].get<int>();
          if (bit != 0 && bit != 1) throw ParseError("action bits must be 0 or 1", line_no);
          if (bit) r.action.code |= std::uint64_t{1} << b;
        }
      } else {
        r.action.code = a.get<std::uint64_t>();
      }
      r.propensity = j.at("propensity").get<double>();
      if (!(r.propensity > 0.0)) throw ParseError("propensity must be positive", line_no);
      r.cost_raw = j.at("cost_raw").get<double>();
      r.cost = j.at("cost_scaled").get<double>();
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad bandit log record: ") + e.what(), line_no);
    }
  }
  if (records.size() != n)
    throw ParseError("header declares " + std::to_string(n) + " records but " + std::to_string(records.size()) +
                         " were found",
                     0);
  try {
    return BanditLog(std::move(records), space, scale);
  } catch (const InvalidLogError& e) {
    throw ParseError(e.what(), 0);
  }
}

void write_bandit_log(const std::string& path, const BanditLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_bandit_log(out, log);
}

BanditLog read_bandit_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_bandit_log(in);
}

}  // namespace cfdro
