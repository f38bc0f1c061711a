#include "dpars/sigproc.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "dpars/csv.hpp"
#include "dpars/error.hpp"

namespace dpars::sigproc {
namespace {

using cplx = std::complex<double>;

constexpr double kPi = std::numbers::pi;

cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

double prewarp(double f_hz, double fs) { return 2.0 * fs * std::tan(kPi * f_hz / fs); }

// Left-half-plane poles of the order-n Butterworth prototype (cutoff 1 rad/s).
std::vector<cplx> butterworth_prototype(int n) {
  std::vector<cplx> poles;
  poles.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double theta = kPi * (2.0 * k + n + 1) / (2.0 * n);
    poles.push_back(std::polar(1.0, theta));
  }
  return poles;
}

cplx section_response(const Biquad& s, double omega) {
  const cplx z1 = std::polar(1.0, -omega);
  const cplx z2 = z1 * z1;
  return (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
}

// Groups digital poles into second-order denominators: conjugate pairs first,
// then real poles two at a time (a leftover real pole gets a first-order
// section).
std::vector<std::pair<double, double>> pair_poles(const std::vector<cplx>& poles) {
  constexpr double kRealTol = 1e-12;
  std::vector<std::pair<double, double>> dens;
  std::vector<double> reals;
  for (const auto& p : poles) {
    if (std::abs(p.imag()) <= kRealTol) {
      reals.push_back(p.real());
    } else if (p.imag() > 0.0) {
      dens.emplace_back(-2.0 * p.real(), std::norm(p));
    }
  }
  std::sort(reals.begin(), reals.end());
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    dens.emplace_back(-(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]);
  }
  if (reals.size() % 2 == 1) dens.emplace_back(-reals.back(), 0.0);
  return dens;
}

void check_cut(double f, double fs, const char* what) {
  if (!(f > 0.0) || !(f < fs / 2.0)) {
    throw InvalidSpecError("sigproc", std::string(what) + " " + std::to_string(f) +
                                          " Hz must lie strictly inside (0, " +
                                          std::to_string(fs / 2.0) + ") Hz");
  }
}

FilterCoefficients design_lowpass(int order, double cutoff, double fs) {
  const double wc = prewarp(cutoff, fs);
  std::vector<cplx> digital;
  for (const auto& p : butterworth_prototype(order)) digital.push_back(bilinear(wc * p, fs));
  FilterCoefficients out;
  for (const auto& [a1, a2] : pair_poles(digital)) {
    Biquad s;
    if (a2 == 0.0) {
      // First-order section: zero at z = -1.
      s.b0 = 1.0;
      s.b1 = 1.0;
      s.b2 = 0.0;
      s.a1 = a1;
      s.a2 = 0.0;
      const double g = (1.0 + a1) / 2.0;
      s.b0 *= g;
      s.b1 *= g;
    } else {
      const double g = (1.0 + a1 + a2) / 4.0;
      s.b0 = g;
      s.b1 = 2.0 * g;
      s.b2 = g;
      s.a1 = a1;
      s.a2 = a2;
    }
    out.sections.push_back(s);
  }
  return out;
}

FilterCoefficients design_bandpass(int order, double low, double high, double fs) {
  const double w1 = prewarp(low, fs);
  const double w2 = prewarp(high, fs);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;
  std::vector<cplx> digital;
  for (const auto& q : butterworth_prototype(order)) {
    const cplx half = q * bw / 2.0;
    const cplx root = std::sqrt(half * half - w0sq);
    digital.push_back(bilinear(half + root, fs));
    digital.push_back(bilinear(half - root, fs));
  }
  // Digital center frequency of the prewarped band.
  const double omega0 = 2.0 * std::atan(std::sqrt(w0sq) / (2.0 * fs));
  FilterCoefficients out;
  for (const auto& [a1, a2] : pair_poles(digital)) {
    Biquad s;
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;
    s.a1 = a1;
    s.a2 = a2;
    const double g = 1.0 / std::abs(section_response(s, omega0));
    s.b0 *= g;
    s.b2 *= g;
    out.sections.push_back(s);
  }
  return out;
}

FilterCoefficients design_notch(double center, double q, double fs) {
  const double w0 = 2.0 * kPi * center / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  Biquad s;
  s.b0 = 1.0 / a0;
  s.b1 = -2.0 * std::cos(w0) / a0;
  s.b2 = 1.0 / a0;
  s.a1 = -2.0 * std::cos(w0) / a0;
  s.a2 = (1.0 - alpha) / a0;
  return FilterCoefficients{{s}};
}

void check_finite(const Matrix& m, const char* what) {
  for (double v : m.data) {
    if (!std::isfinite(v)) throw NumericalError("sigproc", std::string(what) + ": non-finite input");
  }
}

}  // namespace

void RawEmgRecording::validate() const {
  if (samples.cols < 1 || samples.rows < 1) {
    throw FormatError("sigproc", "recording needs at least one channel and one time step");
  }
  if (!(sample_rate_hz > 0.0)) throw FormatError("sigproc", "sample rate must be positive");
  if (times.size() != samples.rows || rep_ids.size() != samples.rows) {
    throw FormatError("sigproc", "times/rep_ids length does not match sample count");
  }
  for (double v : samples.data) {
    if (!std::isfinite(v)) throw FormatError("sigproc", "recording contains non-finite samples");
  }
  for (std::size_t i = 1; i < rep_ids.size(); ++i) {
    if (rep_ids[i] < rep_ids[i - 1]) {
      throw FormatError("sigproc", "repetition ranges must be contiguous and ordered in time");
    }
  }
}

FilterSpec FilterSpec::bandpass(double low_hz, double high_hz, int order) {
  FilterSpec s;
  s.kind = FilterKind::bandpass;
  s.low_cut_hz = low_hz;
  s.high_cut_hz = high_hz;
  s.order = order;
  return s;
}

FilterSpec FilterSpec::notch(double center_hz, double q) {
  FilterSpec s;
  s.kind = FilterKind::notch;
  s.center_hz = center_hz;
  s.q = q;
  s.order = 2;
  return s;
}

FilterSpec FilterSpec::lowpass(double cutoff_hz, int order) {
  FilterSpec s;
  s.kind = FilterKind::lowpass;
  s.high_cut_hz = cutoff_hz;
  s.order = order;
  return s;
}

FilterCoefficients design_filter(const FilterSpec& spec, double fs) {
  if (!(fs > 0.0)) throw InvalidSpecError("sigproc", "sample rate must be positive");
  if (spec.order < 1) throw InvalidSpecError("sigproc", "filter order must be >= 1");
  switch (spec.kind) {
    case FilterKind::bandpass:
      check_cut(spec.low_cut_hz, fs, "bandpass low cut");
      check_cut(spec.high_cut_hz, fs, "bandpass high cut");
      if (!(spec.low_cut_hz < spec.high_cut_hz)) {
        throw InvalidSpecError("sigproc", "bandpass low cut must be below high cut");
      }
      return design_bandpass(spec.order, spec.low_cut_hz, spec.high_cut_hz, fs);
    case FilterKind::notch:
      check_cut(spec.center_hz, fs, "notch center");
      if (!(spec.q > 0.0)) throw InvalidSpecError("sigproc", "notch Q must be positive");
      return design_notch(spec.center_hz, spec.q, fs);
    case FilterKind::lowpass:
      check_cut(spec.high_cut_hz, fs, "lowpass cutoff");
      return design_lowpass(spec.order, spec.high_cut_hz, fs);
  }
  throw InvalidSpecError("sigproc", "unknown filter kind");
}

FilterState::FilterState(const FilterCoefficients& coeffs, std::size_t channels)
    : sections_(coeffs.sections), channels_(channels), state_(coeffs.sections.size() * channels * 2, 0.0) {}

void FilterState::step(std::span<const double> in, std::span<double> out) {
  if (out.data() != in.data()) std::copy(in.begin(), in.end(), out.begin());
  double* st = state_.data();
  for (const auto& s : sections_) {
    for (std::size_t c = 0; c < channels_; ++c, st += 2) {
      const double x = out[c];
      const double y = s.b0 * x + st[0];
      st[0] = s.b1 * x - s.a1 * y + st[1];
      st[1] = s.b2 * x - s.a2 * y;
      out[c] = y;
    }
  }
}

void FilterState::reset() { std::fill(state_.begin(), state_.end(), 0.0); }

Matrix apply_filter(const FilterCoefficients& coeffs, const Matrix& signal) {
  check_finite(signal, "apply_filter");
  Matrix out(signal.rows, signal.cols);
  FilterState state(coeffs, signal.cols);
  for (std::size_t t = 0; t < signal.rows; ++t) state.step(signal.row(t), out.row(t));
  return out;
}

Matrix envelope(const Matrix& signal, const FilterSpec& lowpass, double sample_rate_hz) {
  check_finite(signal, "envelope");
  const auto coeffs = design_filter(lowpass, sample_rate_hz);
  Matrix out(signal.rows, signal.cols);
  FilterState state(coeffs, signal.cols);
  for (std::size_t t = 0; t < signal.rows; ++t) {
    auto dst = out.row(t);
    const auto src = signal.row(t);
    for (std::size_t c = 0; c < signal.cols; ++c) dst[c] = std::abs(src[c]);
    state.step(dst, dst);
    for (double& v : dst) v = std::max(v, 0.0);
  }
  return out;
}

Matrix decimate(const Matrix& stream, int factor) {
  if (factor < 1) throw InvalidSpecError("sigproc", "decimation factor must be >= 1");
  const auto f = static_cast<std::size_t>(factor);
  Matrix out(stream.rows / f, stream.cols);
  for (std::size_t i = 0; i < out.rows; ++i) {
    const auto src = stream.row(i * f);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

const std::set<std::string>& PreprocessConfig::keys() {
  static const std::set<std::string> k = {"bandpass_low_hz",    "bandpass_high_hz", "bandpass_order",
                                          "notch_hz",           "notch_q",          "envelope_cutoff_hz",
                                          "envelope_order",     "decim_factor"};
  return k;
}

PreprocessConfig PreprocessConfig::from_kv(const KvConfig& kv) {
  PreprocessConfig c;
  c.bandpass_low_hz = kv.get_double("bandpass_low_hz", c.bandpass_low_hz);
  c.bandpass_high_hz = kv.get_double("bandpass_high_hz", c.bandpass_high_hz);
  c.bandpass_order = static_cast<int>(kv.get_int("bandpass_order", c.bandpass_order));
  c.notch_hz = kv.get_double("notch_hz", c.notch_hz);
  c.notch_q = kv.get_double("notch_q", c.notch_q);
  c.envelope_cutoff_hz = kv.get_double("envelope_cutoff_hz", c.envelope_cutoff_hz);
  c.envelope_order = static_cast<int>(kv.get_int("envelope_order", c.envelope_order));
  c.decim_factor = static_cast<int>(kv.get_int("decim_factor", c.decim_factor));
  return c;
}

KvConfig PreprocessConfig::to_kv() const {
  KvConfig kv;
  kv.set("bandpass_low_hz", csv::format_double(bandpass_low_hz));
  kv.set("bandpass_high_hz", csv::format_double(bandpass_high_hz));
  kv.set("bandpass_order", std::to_string(bandpass_order));
  kv.set("notch_hz", csv::format_double(notch_hz));
  kv.set("notch_q", csv::format_double(notch_q));
  kv.set("envelope_cutoff_hz", csv::format_double(envelope_cutoff_hz));
  kv.set("envelope_order", std::to_string(envelope_order));
  kv.set("decim_factor", std::to_string(decim_factor));
  return kv;
}

EnvelopeStream preprocess(const RawEmgRecording& rec, const PreprocessConfig& chain) {
  rec.validate();
  const double fs = rec.sample_rate_hz;
  const auto bp = design_filter(FilterSpec::bandpass(chain.bandpass_low_hz, chain.bandpass_high_hz,
                                                     chain.bandpass_order), fs);
  const auto notch = design_filter(FilterSpec::notch(chain.notch_hz, chain.notch_q), fs);
  const auto lp = FilterSpec::lowpass(chain.envelope_cutoff_hz, chain.envelope_order);
  if (chain.decim_factor < 1) throw InvalidSpecError("sigproc", "decimation factor must be >= 1");

  const Matrix filtered = apply_filter(notch, apply_filter(bp, rec.samples));
  EnvelopeStream out;
  out.frames = decimate(envelope(filtered, lp, fs), chain.decim_factor);
  out.sample_rate_hz = fs / chain.decim_factor;
  out.chain = chain;
  const auto f = static_cast<std::size_t>(chain.decim_factor);
  out.times.resize(out.frames.rows);
  out.rep_ids.resize(out.frames.rows);
  for (std::size_t i = 0; i < out.frames.rows; ++i) {
    out.times[i] = rec.times[i * f];
    out.rep_ids[i] = rec.rep_ids[i * f];
  }
  return out;
}

StreamingPreprocessor::StreamingPreprocessor(const PreprocessConfig& chain, double fs, std::size_t channels)
    : chain_(chain),
      channels_(channels),
      bandpass_(design_filter(FilterSpec::bandpass(chain.bandpass_low_hz, chain.bandpass_high_hz,
                                                   chain.bandpass_order), fs),
                channels),
      notch_(design_filter(FilterSpec::notch(chain.notch_hz, chain.notch_q), fs), channels),
      lowpass_(design_filter(FilterSpec::lowpass(chain.envelope_cutoff_hz, chain.envelope_order), fs),
               channels),
      scratch_(channels),
      held_(channels) {
  if (chain.decim_factor < 1) throw InvalidSpecError("sigproc", "decimation factor must be >= 1");
}

std::optional<std::vector<double>> StreamingPreprocessor::push(std::span<const double> raw) {
  if (raw.size() != channels_) throw ShapeError("sigproc", "streaming frame has wrong channel count");
  for (double v : raw) {
    if (!std::isfinite(v)) throw NumericalError("sigproc", "streaming frame contains non-finite samples");
  }
  bandpass_.step(raw, scratch_);
  notch_.step(scratch_, scratch_);
  for (double& v : scratch_) v = std::abs(v);
  lowpass_.step(scratch_, scratch_);
  for (double& v : scratch_) v = std::max(v, 0.0);

  const long long phase = count_ % chain_.decim_factor;
  ++count_;
  if (phase == 0) held_ = scratch_;
  if (phase == chain_.decim_factor - 1) return held_;
  return std::nullopt;
}

void StreamingPreprocessor::reset() {
  bandpass_.reset();
  notch_.reset();
  lowpass_.reset();
  count_ = 0;
}

std::vector<std::size_t> window_end_indices(std::size_t length, std::span<const int> rep_ids,
                                            std::size_t window_samples, std::size_t hop) {
  std::vector<std::size_t> ends;
  if (window_samples == 0 || hop == 0 || window_samples > length) return ends;
  for (std::size_t end = window_samples - 1; end < length; end += hop) {
    if (!rep_ids.empty() && rep_ids[end + 1 - window_samples] != rep_ids[end]) continue;
    ends.push_back(end);
  }
  return ends;
}

std::vector<Window> window_stream(const EnvelopeStream& stream, std::size_t window_samples, std::size_t hop) {
  std::vector<Window> out;
  for (const auto end : window_end_indices(stream.length(), stream.rep_ids, window_samples, hop)) {
    Window w;
    w.end_index = end;
    w.data = Matrix(window_samples, stream.channels());
    const auto first = stream.frames.data.begin() +
                       static_cast<std::ptrdiff_t>((end + 1 - window_samples) * stream.channels());
    std::copy(first, first + static_cast<std::ptrdiff_t>(window_samples * stream.channels()),
              w.data.data.begin());
    out.push_back(std::move(w));
  }
  return out;
}

RawEmgRecording load_recording(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto& h = table.header;
  if (h.size() < 3 || h.front() != "t" || h.back() != "rep") {
    throw FormatError("sigproc", path.string() + ": expected header 't,ch0..ch{C-1},rep'");
  }
  const std::size_t channels = h.size() - 2;
  for (std::size_t c = 0; c < channels; ++c) {
    if (h[c + 1] != "ch" + std::to_string(c)) {
      throw FormatError("sigproc", path.string() + ": expected column 'ch" + std::to_string(c) + "'");
    }
  }
  RawEmgRecording rec;
  const auto& v = table.values;
  rec.samples = Matrix(v.rows, channels);
  rec.times.resize(v.rows);
  rec.rep_ids.resize(v.rows);
  for (std::size_t r = 0; r < v.rows; ++r) {
    rec.times[r] = v(r, 0);
    for (std::size_t c = 0; c < channels; ++c) rec.samples(r, c) = v(r, c + 1);
    rec.rep_ids[r] = static_cast<int>(std::lround(v(r, channels + 1)));
  }
  if (v.rows >= 2) {
    const double dt = (rec.times.back() - rec.times.front()) / static_cast<double>(v.rows - 1);
    if (!(dt > 0.0)) throw FormatError("sigproc", path.string() + ": time column must increase");
    rec.sample_rate_hz = std::round(1.0 / dt * 1e6) / 1e6;
  }
  rec.validate();
  return rec;
}

namespace {

csv::Table stream_table(const std::vector<double>& times, const Matrix& m, const std::vector<int>& reps,
                        const std::vector<std::string>& comments) {
  csv::Table t;
  t.comments = comments;
  t.header.push_back("t");
  for (std::size_t c = 0; c < m.cols; ++c) t.header.push_back("ch" + std::to_string(c));
  t.header.push_back("rep");
  t.values = Matrix(m.rows, m.cols + 2);
  for (std::size_t r = 0; r < m.rows; ++r) {
    t.values(r, 0) = times[r];
    for (std::size_t c = 0; c < m.cols; ++c) t.values(r, c + 1) = m(r, c);
    t.values(r, m.cols + 1) = reps[r];
  }
  return t;
}

}  // namespace

void save_recording(const std::filesystem::path& path, const RawEmgRecording& rec,
                    const std::vector<std::string>& comments) {
  csv::write(path, stream_table(rec.times, rec.samples, rec.rep_ids, comments));
}

void save_envelope(const std::filesystem::path& path, const EnvelopeStream& stream,
                   const std::vector<std::string>& comments) {
  csv::write(path, stream_table(stream.times, stream.frames, stream.rep_ids, comments));
}

}  // namespace dpars::sigproc
