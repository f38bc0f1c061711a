#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpars/dataset.hpp"
#include "dpars/matrix.hpp"
#include "dpars/model.hpp"
#include "dpars/train.hpp"

namespace dpars::eval {

// ---------------------------------------------------------------------------
// Accuracy

struct MetricsReport {
  /// NaN where the truth column has zero variance.
  std::vector<double> r2;
  std::vector<bool> defined;
  /// Mean over defined fingers only.
  double mean_r2 = 0.0;
  /// R^2 over all outputs pooled into one vector.
  double pooled_r2 = 0.0;
  std::vector<double> mae;
  std::vector<std::string> warnings;
};

/// Per-column coefficient of determination between [N x F] predictions and
/// truth. Needs N >= 2.
MetricsReport r2(const Matrix& pred, const Matrix& truth);

/// Model outputs on one split, in item order.
struct Predictions {
  Matrix y;
  Matrix y_attr;
  Matrix y_refn;
  Matrix truth;
  std::vector<std::vector<std::vector<double>>> probs;  // [item][finger][state]
  double mean_loss = 0.0;
};

Predictions predict(const dataset::LabeledDataset& data, const DparsParams& params, dataset::Split split,
                    double lambda = 0.0);

// ---------------------------------------------------------------------------
// Attractor sparsity

struct EntropyReport {
  std::vector<double> mean_entropy;   // per finger
  std::vector<double> top1_mass;      // mean largest probability
  std::vector<double> top2_mass;      // mean sum of two largest
  std::vector<std::vector<double>> mean_probs;  // per finger, per state
  std::vector<std::vector<std::size_t>> support;  // states with mean prob > epsilon
  double epsilon = 0.01;

  double average_top2() const;
};

/// `probs[item][finger][state]`; throws if empty.
EntropyReport entropy_stats(const std::vector<std::vector<std::vector<double>>>& probs, double epsilon = 0.01);

// ---------------------------------------------------------------------------
// Hardware cost

using StageMacs = MacCounter;

struct CostReport {
  model::ParamCount params;
  StageMacs dense;
  StageMacs pruned;  // equals dense when no supports were given
  std::vector<std::size_t> support_sizes;
  double input_compression = 0.0;     // c_in / d_enc
  double temporal_compression = 0.0;  // t_seq
  double reduction_factor = 0.0;      // product of the two
  double attractor_output_ratio = 1.0;
  double total_ratio = 1.0;
};

/// Streaming per-prediction MACs (one new frame encoded). Empty
/// `support_sizes` means dense. Throws ConfigError if a size exceeds n_states
/// or is zero.
CostReport mac_count(const DparsConfig& config, const std::vector<std::size_t>& support_sizes = {});

struct PrunedModel {
  DparsParams params;
  CostReport cost;
};

/// Keeps only the given state indices of each finger's attractor output.
PrunedModel prune_attractor_heads(const DparsParams& params, const std::vector<std::vector<std::size_t>>& support);

// ---------------------------------------------------------------------------
// Baseline and sweeps

struct BaselineResult {
  MetricsReport test;
  MetricsReport val;
  double alpha = 0.0;
};

/// Ridge regression from the flattened window to the six angles; alpha is
/// picked on the validation split.
BaselineResult baseline_linear(const dataset::LabeledDataset& data);

struct SweepRow {
  double value = 0.0;  // d_enc or lambda
  double mean_r2 = 0.0;
  double var_r2 = 0.0;
  std::vector<double> per_seed;
};

std::vector<SweepRow> encoding_size_sweep(const dataset::LabeledDataset& data, const DparsConfig& base,
                                          const train::TrainConfig& train, const std::vector<std::size_t>& sizes,
                                          const std::vector<std::uint64_t>& seeds);

std::vector<SweepRow> lambda_sweep(const dataset::LabeledDataset& data, const DparsConfig& config,
                                   const train::TrainConfig& train, const std::vector<double>& lambdas,
                                   const std::vector<std::uint64_t>& seeds);

/// `<name>,mean_r2,var_r2`
std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& key);

std::string format_metrics(const MetricsReport& m);
std::string format_entropy(const EntropyReport& e);
std::string format_cost(const CostReport& c);

}  // namespace dpars::eval
