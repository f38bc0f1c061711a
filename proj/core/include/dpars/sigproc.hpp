#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpars/kv_config.hpp"
#include "dpars/matrix.hpp"

namespace dpars::sigproc {

/// Raw multichannel EMG at acquisition rate. `samples` is [time x channels]
/// in microvolts; `rep_ids` labels every time step with its repetition.
struct RawEmgRecording {
  double sample_rate_hz = 2400.0;
  std::vector<double> times;
  Matrix samples;
  std::vector<int> rep_ids;

  std::size_t channels() const { return samples.cols; }
  std::size_t length() const { return samples.rows; }

  /// Throws FormatError if any invariant is broken.
  void validate() const;
};

enum class FilterKind { bandpass, notch, lowpass };

struct FilterSpec {
  FilterKind kind = FilterKind::lowpass;
  double low_cut_hz = 0.0;   // bandpass
  double high_cut_hz = 0.0;  // bandpass, lowpass
  double center_hz = 0.0;    // notch
  double q = 0.0;            // notch
  int order = 2;

  static FilterSpec bandpass(double low_hz, double high_hz, int order);
  static FilterSpec notch(double center_hz, double q);
  static FilterSpec lowpass(double cutoff_hz, int order);
};

/// One second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

/// Cascade of second-order sections for a causal recursive filter.
struct FilterCoefficients {
  std::vector<Biquad> sections;
};

/// Butterworth (bandpass, lowpass) via bilinear transform with prewarping;
/// notch as a single RBJ biquad. Throws InvalidSpecError for cutoffs outside
/// (0, fs/2) or order < 1.
FilterCoefficients design_filter(const FilterSpec& spec, double sample_rate_hz);

/// Per-channel transposed direct-form II state. Processes one frame (all
/// channels at one time step) per call, so batch and streaming filtering run
/// exactly the same arithmetic.
class FilterState {
 public:
  FilterState(const FilterCoefficients& coeffs, std::size_t channels);

  void step(std::span<const double> in, std::span<double> out);
  void reset();

 private:
  std::vector<Biquad> sections_;
  std::size_t channels_;
  std::vector<double> state_;  // [section][channel][2]
};

/// Causal filtering from zero initial state, each column independently.
Matrix apply_filter(const FilterCoefficients& coeffs, const Matrix& signal);

/// |x| -> lowpass -> clamp at 0.
Matrix envelope(const Matrix& signal, const FilterSpec& lowpass, double sample_rate_hz);

/// Keeps frames 0, factor, 2*factor, ... for each complete decimation period
/// (output length floor(n / factor)). Throws InvalidSpecError if factor < 1.
Matrix decimate(const Matrix& stream, int factor);

struct PreprocessConfig {
  double bandpass_low_hz = 5.0;
  double bandpass_high_hz = 500.0;
  int bandpass_order = 4;
  double notch_hz = 50.0;
  double notch_q = 30.0;
  double envelope_cutoff_hz = 5.0;
  int envelope_order = 2;
  int decim_factor = 24;

  static PreprocessConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
  static const std::set<std::string>& keys();

  friend bool operator==(const PreprocessConfig&, const PreprocessConfig&) = default;
};

/// 100 Hz (nominal) envelope frames with their time stamps, repetition labels
/// and the chain that produced them.
struct EnvelopeStream {
  double sample_rate_hz = 100.0;
  std::vector<double> times;
  Matrix frames;
  std::vector<int> rep_ids;
  PreprocessConfig chain;

  std::size_t channels() const { return frames.cols; }
  std::size_t length() const { return frames.rows; }
};

/// Bandpass -> notch -> envelope -> decimate.
EnvelopeStream preprocess(const RawEmgRecording& rec, const PreprocessConfig& chain);

/// Sample-by-sample equivalent of preprocess(). push() returns a frame every
/// decim_factor input samples (after the period completes).
class StreamingPreprocessor {
 public:
  StreamingPreprocessor(const PreprocessConfig& chain, double sample_rate_hz, std::size_t channels);

  std::optional<std::vector<double>> push(std::span<const double> raw);
  void reset();

 private:
  PreprocessConfig chain_;
  std::size_t channels_;
  FilterState bandpass_;
  FilterState notch_;
  FilterState lowpass_;
  std::vector<double> scratch_;
  std::vector<double> held_;
  long long count_ = 0;
};

/// Non-owning view of a [T x channels] window ending at `end_index`.
struct WindowView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t end_index = 0;

  std::span<const double> frame(std::size_t r) const { return data.subspan(r * cols, cols); }
};

struct Window {
  Matrix data;
  std::size_t end_index = 0;

  WindowView view() const { return {data.data, data.rows, data.cols, end_index}; }
};

/// End indices of every window of `window_samples` frames advancing by `hop`
/// that does not straddle a repetition boundary. Empty rep_ids means a single
/// repetition.
std::vector<std::size_t> window_end_indices(std::size_t length, std::span<const int> rep_ids,
                                            std::size_t window_samples, std::size_t hop);

std::vector<Window> window_stream(const EnvelopeStream& stream, std::size_t window_samples,
                                  std::size_t hop);

/// CSV `t,ch0..ch{C-1},rep`.
RawEmgRecording load_recording(const std::filesystem::path& path);
void save_recording(const std::filesystem::path& path, const RawEmgRecording& rec,
                    const std::vector<std::string>& comments = {});

/// CSV `t,ch0..ch{C-1},rep` at the envelope rate.
void save_envelope(const std::filesystem::path& path, const EnvelopeStream& stream,
                   const std::vector<std::string>& comments = {});

}  // namespace dpars::sigproc
