#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "dpars/error.hpp"
#include "dpars/rng.hpp"
#include "dpars/sigproc.hpp"
#include "oracles.hpp"

using namespace dpars;
using namespace dpars::sigproc;

namespace {

constexpr double kFs = 2400.0;

Matrix sine(std::size_t n, double freq, double amp = 1.0, double fs = kFs) {
  Matrix m(n, 1);
  for (std::size_t i = 0; i < n; ++i) m(i, 0) = amp * std::sin(2.0 * std::numbers::pi * freq * i / fs);
  return m;
}

RawEmgRecording recording(const Matrix& samples, double fs = kFs) {
  RawEmgRecording r;
  r.sample_rate_hz = fs;
  r.samples = samples;
  r.times.resize(samples.rows);
  r.rep_ids.assign(samples.rows, 1);
  for (std::size_t i = 0; i < samples.rows; ++i) r.times[i] = i / fs;
  return r;
}

double steady_amplitude(const Matrix& y, std::size_t skip) {
  double peak = 0.0;
  for (std::size_t i = skip; i < y.rows; ++i) peak = std::max(peak, std::abs(y(i, 0)));
  return peak;
}

}  // namespace

TEST(DesignFilter, BandpassPassesFiftyHertzNearUnity) {
  const auto c = design_filter(FilterSpec::bandpass(5, 500, 4), kFs);
  EXPECT_EQ(c.sections.size(), 4u);
  EXPECT_NEAR(oracle::db(oracle::magnitude(c, 50, kFs)), 0.0, 1.0);
  EXPECT_NEAR(oracle::db(oracle::magnitude(c, 100, kFs)), 0.0, 1.0);
  EXPECT_LT(oracle::db(oracle::magnitude(c, 1100, kFs)), -20.0);
  EXPECT_LT(oracle::db(oracle::magnitude(c, 0.5, kFs)), -20.0);
}

TEST(DesignFilter, NotchRejectsMainsHum) {
  const auto c = design_filter(FilterSpec::notch(50, 30), kFs);
  EXPECT_LE(oracle::db(oracle::magnitude(c, 50, kFs)), -30.0);
  EXPECT_NEAR(oracle::db(oracle::magnitude(c, 100, kFs)), 0.0, 0.1);
}

TEST(DesignFilter, LowpassHasUnitDcGainAndHalfPowerAtCutoff) {
  for (int order : {1, 2, 3, 4}) {
    const auto c = design_filter(FilterSpec::lowpass(5, order), kFs);
    EXPECT_NEAR(oracle::magnitude(c, 0, kFs), 1.0, 1e-12) << order;
    EXPECT_NEAR(oracle::magnitude(c, 5, kFs), std::sqrt(0.5), 1e-6) << order;
  }
}

TEST(DesignFilter, RejectsCutoffsOutsideNyquist) {
  EXPECT_THROW(design_filter(FilterSpec::lowpass(1300, 2), kFs), InvalidSpecError);
  EXPECT_THROW(design_filter(FilterSpec::lowpass(1200, 2), kFs), InvalidSpecError);
  EXPECT_THROW(design_filter(FilterSpec::lowpass(0, 2), kFs), InvalidSpecError);
  EXPECT_THROW(design_filter(FilterSpec::bandpass(500, 5, 4), kFs), InvalidSpecError);
  EXPECT_THROW(design_filter(FilterSpec::bandpass(5, 500, 0), kFs), InvalidSpecError);
  EXPECT_THROW(design_filter(FilterSpec::notch(50, 0), kFs), InvalidSpecError);
}

TEST(ApplyFilter, ZeroInZeroOut) {
  const auto c = design_filter(FilterSpec::bandpass(5, 500, 4), kFs);
  const auto y = apply_filter(c, Matrix(500, 3));
  for (double v : y.data) EXPECT_EQ(v, 0.0);
}

TEST(ApplyFilter, ImpulseResponseMatchesRecurrence) {
  for (const auto& spec : {FilterSpec::bandpass(5, 500, 4), FilterSpec::notch(50, 30), FilterSpec::lowpass(5, 2)}) {
    const auto c = design_filter(spec, kFs);
    Matrix impulse(400, 1);
    impulse(0, 0) = 1.0;
    const auto y = apply_filter(c, impulse);
    const auto ref = oracle::direct_form(c, impulse.data);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y(i, 0), ref[i], 1e-12 + 1e-9 * std::abs(ref[i]));
  }
}

TEST(ApplyFilter, ChannelsAreIndependent) {
  Rng rng(3);
  Matrix both(300, 2);
  Matrix a(300, 1), b(300, 1);
  for (std::size_t i = 0; i < 300; ++i) {
    a(i, 0) = both(i, 0) = rng.normal();
    b(i, 0) = both(i, 1) = rng.normal();
  }
  const auto c = design_filter(FilterSpec::bandpass(5, 500, 4), kFs);
  const auto yb = apply_filter(c, both);
  const auto y0 = apply_filter(c, a);
  const auto y1 = apply_filter(c, b);
  for (std::size_t i = 0; i < 300; ++i) {
    EXPECT_EQ(yb(i, 0), y0(i, 0));
    EXPECT_EQ(yb(i, 1), y1(i, 0));
  }
}

TEST(Envelope, ZeroIsZero) {
  const auto e = envelope(Matrix(100, 2), FilterSpec::lowpass(5, 2), kFs);
  for (double v : e.data) EXPECT_EQ(v, 0.0);
}

TEST(Envelope, RectifiedSineMeanIsTwoOverPi) {
  const auto e = envelope(sine(kFs * 10, 100.0), FilterSpec::lowpass(5, 2), kFs);
  double mean = 0.0;
  const std::size_t from = e.rows / 2;
  for (std::size_t i = from; i < e.rows; ++i) mean += e(i, 0);
  mean /= static_cast<double>(e.rows - from);
  EXPECT_NEAR(mean, 2.0 / std::numbers::pi, 0.02 * 2.0 / std::numbers::pi);
}

TEST(Envelope, SignInvariantAndNonNegative) {
  Rng rng(11);
  Matrix x(2000, 2);
  for (double& v : x.data) v = rng.normal();
  Matrix neg = x;
  for (double& v : neg.data) v = -v;
  const auto a = envelope(x, FilterSpec::lowpass(5, 2), kFs);
  const auto b = envelope(neg, FilterSpec::lowpass(5, 2), kFs);
  EXPECT_EQ(a, b);
  for (double v : a.data) EXPECT_GE(v, 0.0);
}

TEST(Decimate, KeepsCompletePeriods) {
  Matrix m(48, 1);
  for (std::size_t i = 0; i < 48; ++i) m(i, 0) = static_cast<double>(i);
  const auto d = decimate(m, 24);
  ASSERT_EQ(d.rows, 2u);
  EXPECT_EQ(d(0, 0), 0.0);
  EXPECT_EQ(d(1, 0), 24.0);
  EXPECT_EQ(decimate(m, 1), m);
  EXPECT_EQ(decimate(Matrix(50, 1), 24).rows, 2u);
  EXPECT_THROW(decimate(m, 0), InvalidSpecError);
}

TEST(Windows, Counting) {
  EXPECT_EQ(window_end_indices(100, {}, 20, 1).size(), 81u);
  EXPECT_EQ(window_end_indices(20, {}, 20, 1).size(), 1u);
  EXPECT_EQ(window_end_indices(19, {}, 20, 1).size(), 0u);
  const auto w = window_end_indices(100, {}, 20, 1);
  EXPECT_EQ(w.front(), 19u);
  EXPECT_EQ(w.back(), 99u);
  EXPECT_EQ(window_end_indices(100, {}, 20, 5).size(), 17u);
}

TEST(Windows, DoNotStraddleRepetitions) {
  std::vector<int> reps(60, 1);
  for (std::size_t i = 30; i < 60; ++i) reps[i] = 2;
  const auto w = window_end_indices(60, reps, 20, 1);
  EXPECT_EQ(w.size(), 22u);
  for (auto e : w) EXPECT_EQ(reps[e], reps[e + 1 - 20]);
}

TEST(Preprocess, ZeroRecordingGivesZeroStream) {
  const auto s = preprocess(recording(Matrix(2400, 4)), PreprocessConfig{});
  EXPECT_EQ(s.length(), 100u);
  EXPECT_EQ(s.channels(), 4u);
  for (double v : s.frames.data) EXPECT_EQ(v, 0.0);
  EXPECT_DOUBLE_EQ(s.sample_rate_hz, 100.0);
}

TEST(Preprocess, MainsToneSuppressedRelativeToSignalBand) {
  const auto hum = preprocess(recording(sine(kFs * 6, 50.0)), PreprocessConfig{});
  const auto tone = preprocess(recording(sine(kFs * 6, 100.0)), PreprocessConfig{});
  const double a50 = steady_amplitude(hum.frames, 300);
  const double a100 = steady_amplitude(tone.frames, 300);
  EXPECT_LE(a50, 0.03 * a100);
}

TEST(Preprocess, TimesAndRepsFollowDecimatedSamples) {
  auto rec = recording(Matrix(4800, 1));
  for (std::size_t i = 2400; i < 4800; ++i) rec.rep_ids[i] = 2;
  const auto s = preprocess(rec, PreprocessConfig{});
  ASSERT_EQ(s.length(), 200u);
  EXPECT_DOUBLE_EQ(s.times[1], 24.0 / kFs);
  EXPECT_EQ(s.rep_ids[99], 1);
  EXPECT_EQ(s.rep_ids[100], 2);
}

TEST(StreamingPreprocessor, MatchesBatchExactly) {
  Rng rng(5);
  Matrix x(24 * 50 + 7, 3);
  for (double& v : x.data) v = 20.0 * rng.normal();
  const auto rec = recording(x);
  const auto batch = preprocess(rec, PreprocessConfig{});
  StreamingPreprocessor sp(PreprocessConfig{}, kFs, 3);
  std::size_t k = 0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    if (auto f = sp.push(x.row(i))) {
      ASSERT_LT(k, batch.length());
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ((*f)[c], batch.frames(k, c));
      ++k;
    }
  }
  EXPECT_EQ(k, batch.length());
}

TEST(RawEmgRecording, ValidateRejectsBrokenInvariants) {
  auto r = recording(Matrix(10, 2));
  EXPECT_NO_THROW(r.validate());
  auto bad = r;
  bad.samples(3, 1) = std::nan("");
  EXPECT_THROW(bad.validate(), FormatError);
  bad = r;
  bad.rep_ids[5] = 2;
  bad.rep_ids[7] = 1;  // rep 1 resumes after rep 2
  EXPECT_THROW(bad.validate(), FormatError);
  bad = r;
  bad.samples = Matrix(10, 0);
  EXPECT_THROW(bad.validate(), FormatError);
}

TEST(RecordingCsv, RoundTrip) {
  Rng rng(9);
  Matrix x(240, 2);
  for (double& v : x.data) v = rng.normal();
  auto rec = recording(x);
  for (std::size_t i = 120; i < 240; ++i) rec.rep_ids[i] = 2;
  const auto path = std::filesystem::temp_directory_path() / "dpars_sigproc_roundtrip.csv";
  save_recording(path, rec, {"note: test"});
  const auto back = load_recording(path);
  EXPECT_EQ(back.samples, rec.samples);
  EXPECT_EQ(back.rep_ids, rec.rep_ids);
  EXPECT_EQ(back.times, rec.times);
  EXPECT_DOUBLE_EQ(back.sample_rate_hz, kFs);
  std::filesystem::remove(path);
}
