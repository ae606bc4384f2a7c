#pragma once

// Supervised-to-bandit conversion: multilabel LibSVM parsing, splitting,
// logging-policy training, replayed log collection and bandit-log persistence.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cfdro/estimators.hpp"
#include "cfdro/numeric.hpp"
#include "cfdro/policy.hpp"

namespace cfdro {

// ---- LibSVM multilabel text -------------------------------------------------
//
// One example per line:  [label[,label]*] index:value [index:value]*
// Labels are 0-based label ids, feature indices are 1-based and strictly
// positive. Missing features are zero. Blank lines and lines starting with '#'
// are skipped.

struct LibsvmOptions {
  std::optional<std::size_t> num_labels;   // inferred as max label id + 1 when absent
  std::optional<std::size_t> feature_dim;  // inferred as max feature index when absent
};

LabeledDataset parse_libsvm_multilabel(std::istream& in, const LibsvmOptions& opts = {});
LabeledDataset parse_libsvm_multilabel(const std::string& path, const LibsvmOptions& opts = {});

/// Writes nonzero features only, each value in its shortest round-trip form.
void write_libsvm_multilabel(std::ostream& out, const LabeledDataset& data);

/// Deterministic toy multilabel data: Gaussian features, labels thresholded from
/// noisy random linear scores.
LabeledDataset make_synthetic_multilabel(std::size_t rows, std::size_t feature_dim, std::size_t num_labels,
                                         std::uint64_t seed);

// ---- Splitting --------------------------------------------------------------

struct SplitSpec {
  double train_frac = 0.5;
  double validation_frac = 0.25;
  double test_frac = 0.25;
  double logging_frac = 0.1;  // fraction of train used to fit the logging policy
  std::uint64_t seed = 0;

  /// Fractions in (0, 1) and train + validation + test == 1 within 1e-9.
  void validate() const;
};

struct DatasetSplit {
  std::vector<std::size_t> train_idx, validation_idx, test_idx, logging_idx;
  LabeledDataset train, validation, test, logging;
};

/// Seeded shuffle into disjoint parts; logging_idx is a subset of train_idx.
DatasetSplit split_dataset(const LabeledDataset& data, const SplitSpec& spec);

// ---- Logging policy ---------------------------------------------------------

struct LoggingPolicyConfig {
  ActionSpace action_space = ActionSpace::factorized(0);  // size 0: factorized over the dataset's labels
  double weight_decay = 1e-4;
  double temperature = 2.0;  // applied after fitting; keeps every propensity away from zero
  int max_iters = 500;
  double tolerance = 1e-10;
};

/// Supervised fit (per-label logistic regression, or cross-entropy over label
/// sets for Multiclass(2^L)) followed by temperature smoothing.
LinearPolicy train_logging_policy(const LabeledDataset& data, const LoggingPolicyConfig& config = {});

// ---- Log collection and persistence ----------------------------------------

/// P passes over `data`; each pass samples a ~ policy0(x_i) for every row and
/// logs the exact propensity and the Hamming cost (raw and rescaled to [-1, 0]).
BanditLog collect_bandit_log(const LabeledDataset& data, const LinearPolicy& policy0, std::size_t replay_count,
                             Rng& rng);
BanditLog collect_bandit_log(const LabeledDataset& data, const LinearPolicy& policy0, std::size_t replay_count,
                             std::uint64_t seed);

// JSON lines. The first line is a header
//   {"format":"cfdro-bandit-log","version":1,"n":..,"feature_dim":..,
//    "action_space":{"kind":"factorized"|"multiclass","size":..},
//    "cost_scale":{"scale":..,"offset":..}}
// followed by n records
//   {"features":[..],"action":..,"propensity":..,"cost_raw":..,"cost_scaled":..}
// where "action" is a 0/1 array of length L for factorized spaces and an
// integer index for multiclass ones.
void write_bandit_log(std::ostream& out, const BanditLog& log);
BanditLog read_bandit_log(std::istream& in);
void write_bandit_log(const std::string& path, const BanditLog& log);
BanditLog read_bandit_log(const std::string& path);

}  // namespace cfdro
