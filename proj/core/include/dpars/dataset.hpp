#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dpars/matrix.hpp"
#include "dpars/rng.hpp"
#include "dpars/sigproc.hpp"

namespace dpars::dataset {

enum class Split { train, val, test };

const char* to_string(Split s);

/// Finger angles in degrees, [time x 6]: five flexions then thumb opposition.
struct AngleStream {
  std::vector<double> times;
  Matrix angles;
  /// Values clamped into [90, 180] while loading.
  std::size_t clamped = 0;
};

inline constexpr double kAngleMin = 90.0;
inline constexpr double kAngleMax = 180.0;
inline constexpr std::size_t kFingers = 6;

/// Per-channel z-score statistics from training windows only.
struct NormalizationStats {
  static constexpr double kStdFloor = 1e-8;

  std::vector<double> mean;
  std::vector<double> stddev;

  void apply(std::span<double> frame) const;
  Matrix apply(const Matrix& frames) const;
  bool empty() const { return mean.empty(); }

  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

struct WindowGeometry {
  std::size_t window_samples = 20;
  std::size_t hop = 1;
};

struct Item {
  std::size_t end_index = 0;
  std::vector<double> target;
  Split split = Split::train;
  int rep = 0;
};

/// Windows of a normalized envelope stream paired with the angles at each
/// window's newest frame.
struct LabeledDataset {
  sigproc::EnvelopeStream stream;  // normalized frames
  WindowGeometry geometry;
  std::vector<Item> items;
  NormalizationStats normalization;
  std::size_t clamped_angles = 0;

  std::size_t size() const { return items.size(); }
  sigproc::WindowView window(std::size_t i) const;
  std::vector<std::size_t> indices(Split s) const;
  std::size_t count(Split s) const;
};

/// Repetitions 1-4 train, 5 validation, 6 test. Throws ProtocolError otherwise.
Split split_for_repetition(int rep);
std::vector<Split> split_by_repetition(std::span<const int> rep_ids);

/// Mean/std over the distinct frames covered by training windows of `stream`.
NormalizationStats fit_normalization(const sigproc::EnvelopeStream& stream, std::span<const Item> items,
                                     std::size_t window_samples);

/// Nearest-frame target index into `angles` for each envelope frame. Throws
/// AlignmentError when lengths differ by more than one frame.
std::vector<std::size_t> align_targets(const sigproc::EnvelopeStream& stream, const AngleStream& angles);

/// Windows, targets, splits and normalization from an unnormalized stream.
/// When `normalization` is given it is applied as-is instead of being fitted.
LabeledDataset build_dataset(const sigproc::EnvelopeStream& stream, const AngleStream& angles,
                             const WindowGeometry& geometry, const NormalizationStats* normalization = nullptr);

LabeledDataset load_dataset(const std::filesystem::path& emg_csv, const std::filesystem::path& angles_csv,
                            const sigproc::PreprocessConfig& preprocess, const WindowGeometry& geometry);

/// CSV `t,f0,f1,f2,f3,f4,f5`; clamps to [90, 180] and counts clamps.
AngleStream load_angles(const std::filesystem::path& path);
AngleStream parse_angles(const std::string& text);
void save_angles(const std::filesystem::path& path, const AngleStream& angles,
                 const std::vector<std::string>& comments = {});

// ---------------------------------------------------------------------------
// Synthetic benchmark

/// Parameters of the synthetic EMG/finger-angle generator.
struct SyntheticConfig {
  std::uint64_t seed = 42;
  double duration_s = 30.0;  // per repetition
  int n_repetitions = 6;
  std::size_t n_channels = 64;
  double sample_rate_hz = 2400.0;
  double angle_rate_hz = 100.0;
  std::vector<double> plateau_states = {90.0, 112.5, 135.0, 157.5, 180.0};
  /// Distinct plateau levels each finger uses, drawn once per finger from
  /// plateau_states; 0 means every level.
  std::size_t postures_per_finger = 0;
  double hold_min_s = 0.6;
  double hold_max_s = 1.8;
  double transition_ms = 300.0;
  double mixing_spread = 1.5;   // electrode-grid units
  double mixing_floor = 0.05;
  double noise_std = 2.0;       // additive sensor noise, microvolts
  double nonlinearity = 2.0;    // exponent of the angle -> drive map
  double velocity_gain = 1.0;
  double tonic = 0.1;
  double effort_min = 0.6;
  double effort_max = 1.4;
  double effort_hold_s = 2.0;
  double amplitude_uv = 50.0;

  static SyntheticConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
  static const std::set<std::string>& keys();
};

/// Deterministic generative model behind synthesize(): trajectories, muscle
/// drives and channel mixing for one seed.
class SyntheticModel {
 public:
  explicit SyntheticModel(const SyntheticConfig& config);

  std::size_t muscles() const { return 2 * kFingers; }
  double total_duration() const;
  /// Angle of every finger at time t (seconds from stream start).
  std::array<double, kFingers> angles(double t) const;
  /// Nonnegative muscle activations at time t.
  std::vector<double> activations(double t) const;
  /// Modulating amplitude (microvolts) per channel at time t.
  std::vector<double> amplitude(double t) const;
  const Matrix& mixing() const { return mixing_; }
  int repetition_at(double t) const;

 private:
  struct Segment {
    double start, end;
    double from, to;  // levels
  };
  using Track = std::vector<Segment>;

  static double eval_track(const Track& track, double t, double* slope);
  Track make_track(double t0, double t1, std::span<const double> levels, double hold_min, double hold_max,
                   double transition, Rng& rng) const;

  SyntheticConfig config_;
  std::array<Track, kFingers> fingers_;
  Track effort_;
  Matrix mixing_;  // [channels x muscles]
};

struct SyntheticData {
  sigproc::RawEmgRecording recording;
  AngleStream angles;
};

SyntheticData synthesize(const SyntheticConfig& config);

}  // namespace dpars::dataset
