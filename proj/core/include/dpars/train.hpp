#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dpars/autodiff.hpp"
#include "dpars/dataset.hpp"
#include "dpars/model.hpp"

namespace dpars::train {

struct TrainConfig {
  double learning_rate = 0.01;
  double lambda = 0.02;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  bool shuffle = true;

  void validate() const;
  static TrainConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
  static const std::set<std::string>& keys();
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_r2 = 0.0;
  std::vector<double> mean_entropy;  // per finger, over the validation split
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  double wall_seconds = 0.0;
  /// Times the learning rate was halved because the first epoch did not
  /// reduce the training loss.
  int lr_halvings = 0;
  double learning_rate = 0.0;

  const EpochStats& best() const { return epochs.at(best_epoch); }
  /// `epoch,train_loss,val_loss,val_r2,mean_entropy_f0..f5`
  void write_csv(const std::filesystem::path& path, const std::vector<std::string>& comments = {}) const;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights, zero biases.
DparsParams init_params(const DparsConfig& config, std::uint64_t seed);

/// L1 error plus lambda times the summed attractor entropies, for one window.
double loss(const ForwardTrace& trace, std::span<const double> target, double lambda);

/// Records the same loss on a tape.
ad::Var loss_graph(ad::Tape& tape, const model::GraphOutputs& out, std::span<const double> target, double lambda);

/// theta <- theta - lr * grad. Throws NumericalError on a non-finite gradient.
void sgd_step(DparsParams& params, double learning_rate);

struct TrainResult {
  DparsParams best;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochStats&)>;

TrainResult train_loop(const dataset::LabeledDataset& data, const DparsConfig& config, const TrainConfig& train,
                       const EpochCallback& on_epoch = {});

/// Continues training from `initial` (e.g. a pruned model).
TrainResult train_from(const dataset::LabeledDataset& data, DparsParams initial, const TrainConfig& train,
                       const EpochCallback& on_epoch = {});

}  // namespace dpars::train
