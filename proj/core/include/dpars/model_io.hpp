#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "dpars/dataset.hpp"
#include "dpars/manifest.hpp"
#include "dpars/model.hpp"
#include "dpars/sigproc.hpp"

namespace dpars {

struct TrainingMeta {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double lambda = 0.0;
  double learning_rate = 0.0;
  std::size_t batch_size = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double best_val_r2 = 0.0;

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

/// Everything needed to run a trained decoder on raw EMG.
struct ModelFile {
  DparsParams params;
  dataset::NormalizationStats normalization;
  sigproc::PreprocessConfig preprocess;
  dataset::WindowGeometry geometry;
  TrainingMeta training;
  RunManifest manifest;
};

/// JSON text. Doubles are written in shortest round-trip form, so
/// to_text(from_text(s)) == s for any s produced here.
std::string model_to_text(const ModelFile& m);
/// Throws FormatError on malformed JSON, missing fields or shape mismatches.
ModelFile model_from_text(const std::string& text);

void save_model(const std::filesystem::path& path, const ModelFile& m);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace dpars
