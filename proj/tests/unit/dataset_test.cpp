#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dpars/dataset.hpp"
#include "dpars/error.hpp"
#include "dpars/rng.hpp"

using namespace dpars;
using namespace dpars::dataset;

namespace {

sigproc::EnvelopeStream stream_with_reps(std::size_t per_rep, int reps, std::size_t channels, Rng& rng) {
  sigproc::EnvelopeStream s;
  const std::size_t n = per_rep * static_cast<std::size_t>(reps);
  s.frames = Matrix(n, channels);
  for (double& v : s.frames.data) v = 3.0 + rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    s.times.push_back(static_cast<double>(i) / 100.0);
    s.rep_ids.push_back(static_cast<int>(i / per_rep) + 1);
  }
  return s;
}

AngleStream angles_for(const sigproc::EnvelopeStream& s) {
  AngleStream a;
  a.times = s.times;
  a.angles = Matrix(s.length(), kFingers);
  for (std::size_t i = 0; i < s.length(); ++i)
    for (std::size_t f = 0; f < kFingers; ++f) a.angles(i, f) = 90.0 + std::fmod(i + 7.0 * f, 90.0);
  return a;
}

SyntheticConfig small_synth() {
  SyntheticConfig c;
  c.duration_s = 2.0;
  c.n_channels = 8;
  return c;
}

}  // namespace

TEST(Splits, RepetitionProtocol) {
  EXPECT_EQ(split_for_repetition(1), Split::train);
  EXPECT_EQ(split_for_repetition(4), Split::train);
  EXPECT_EQ(split_for_repetition(5), Split::val);
  EXPECT_EQ(split_for_repetition(6), Split::test);
  EXPECT_THROW(split_for_repetition(7), ProtocolError);
  EXPECT_THROW(split_for_repetition(0), ProtocolError);
  const std::vector<int> reps = {1, 2, 5, 6};
  EXPECT_EQ(split_by_repetition(reps), (std::vector<Split>{Split::train, Split::train, Split::val, Split::test}));
}

TEST(BuildDataset, EqualRepetitionsSplitFourOneOne) {
  Rng rng(1);
  const auto s = stream_with_reps(100, 6, 3, rng);
  const auto ds = build_dataset(s, angles_for(s), WindowGeometry{20, 1});
  EXPECT_EQ(ds.count(Split::train), 4u * 81u);
  EXPECT_EQ(ds.count(Split::val), 81u);
  EXPECT_EQ(ds.count(Split::test), 81u);
  for (const auto& it : ds.items) {
    EXPECT_EQ(it.target.size(), kFingers);
    EXPECT_EQ(it.split, split_for_repetition(it.rep));
  }
}

TEST(BuildDataset, TargetIsAngleAtNewestFrame) {
  Rng rng(2);
  const auto s = stream_with_reps(50, 6, 2, rng);
  const auto a = angles_for(s);
  const auto ds = build_dataset(s, a, WindowGeometry{20, 1});
  for (const auto& it : ds.items)
    for (std::size_t f = 0; f < kFingers; ++f) EXPECT_EQ(it.target[f], a.angles(it.end_index, f));
  const auto w = ds.window(0);
  EXPECT_EQ(w.rows, 20u);
  EXPECT_EQ(w.cols, 2u);
  EXPECT_EQ(w.end_index, ds.items[0].end_index);
}

TEST(Normalization, UsesTrainingFramesOnly) {
  Rng rng(3);
  auto s = stream_with_reps(100, 6, 2, rng);
  for (std::size_t i = 400; i < 600; ++i) s.frames(i, 0) += 1000.0;  // val/test shifted
  const auto ds = build_dataset(s, angles_for(s), WindowGeometry{20, 1});
  EXPECT_LT(std::abs(ds.normalization.mean[0] - 3.0), 0.3);
  // Validation frames carry the offset through train statistics.
  EXPECT_GT(ds.stream.frames(450, 0), 100.0);
}

TEST(Normalization, ConstantChannelFloorsStd) {
  Rng rng(4);
  auto s = stream_with_reps(50, 6, 2, rng);
  for (std::size_t i = 0; i < s.length(); ++i) s.frames(i, 1) = 5.0;
  const auto ds = build_dataset(s, angles_for(s), WindowGeometry{20, 1});
  EXPECT_EQ(ds.normalization.stddev[1], NormalizationStats::kStdFloor);
  for (std::size_t i = 0; i < s.length(); ++i) EXPECT_EQ(ds.stream.frames(i, 1), 0.0);
}

TEST(Normalization, StandardizedDataGivesUnitStats) {
  Rng rng(5);
  sigproc::EnvelopeStream s;
  s.frames = Matrix(20000, 1);
  for (double& v : s.frames.data) v = rng.normal();
  for (std::size_t i = 0; i < 20000; ++i) s.rep_ids.push_back(1);
  std::vector<Item> items(1);
  items[0].end_index = 19999;
  const auto st = fit_normalization(s, items, 20000);
  EXPECT_NEAR(st.mean[0], 0.0, 0.03);
  EXPECT_NEAR(st.stddev[0], 1.0, 0.03);
}

TEST(Normalization, EmptyTrainingSplitIsProtocolError) {
  Rng rng(6);
  const auto s = stream_with_reps(50, 1, 2, rng);
  std::vector<Item> items(1);
  items[0].split = Split::val;
  items[0].end_index = 30;
  EXPECT_THROW(fit_normalization(s, items, 20), ProtocolError);
}

TEST(Alignment, MismatchedLengthsThrow) {
  Rng rng(7);
  const auto s = stream_with_reps(100, 6, 1, rng);
  auto a = angles_for(s);
  a.angles = Matrix(590, kFingers, 120.0);
  a.times.resize(590);
  EXPECT_THROW(align_targets(s, a), AlignmentError);
  a.angles = Matrix(601, kFingers, 120.0);
  a.times.resize(601);
  for (std::size_t i = 0; i < 601; ++i) a.times[i] = i / 100.0;
  EXPECT_NO_THROW(align_targets(s, a));
}

TEST(AngleCsv, ClampsAndCounts) {
  const auto a = parse_angles("t,f0,f1,f2,f3,f4,f5\n0,200,90,91,92,93,80\n0.01,100,100,100,100,100,100\n");
  EXPECT_EQ(a.angles(0, 0), 180.0);
  EXPECT_EQ(a.angles(0, 5), 90.0);
  EXPECT_EQ(a.clamped, 2u);
  EXPECT_EQ(a.angles.rows, 2u);
}

TEST(AngleCsv, EmptyOrMalformedIsFormatError) {
  EXPECT_THROW(parse_angles(""), FormatError);
  EXPECT_THROW(parse_angles("t,f0,f1,f2,f3,f4,f5\n"), FormatError);
  EXPECT_THROW(parse_angles("t,f0,f1\n0,1,2\n"), FormatError);
}

TEST(AngleCsv, RoundTrip) {
  Rng rng(8);
  const auto s = stream_with_reps(30, 1, 1, rng);
  const auto a = angles_for(s);
  const auto path = std::filesystem::temp_directory_path() / "dpars_angles_roundtrip.csv";
  save_angles(path, a, {"seed: 1"});
  const auto b = load_angles(path);
  EXPECT_EQ(b.angles, a.angles);
  EXPECT_EQ(b.times, a.times);
  std::filesystem::remove(path);
}

TEST(Synthesize, SeedDeterminesOutput) {
  const auto a = synthesize(small_synth());
  const auto b = synthesize(small_synth());
  EXPECT_EQ(a.recording.samples, b.recording.samples);
  EXPECT_EQ(a.angles.angles, b.angles.angles);
  auto other = small_synth();
  other.seed = 43;
  EXPECT_NE(synthesize(other).recording.samples, a.recording.samples);
}

TEST(Synthesize, ShapesAndRanges) {
  const auto d = synthesize(small_synth());
  EXPECT_EQ(d.recording.length(), 2u * 2400u * 6u);
  EXPECT_EQ(d.recording.channels(), 8u);
  EXPECT_EQ(d.angles.angles.rows, 2u * 100u * 6u);
  for (double v : d.angles.angles.data) {
    EXPECT_GE(v, 90.0);
    EXPECT_LE(v, 180.0);
  }
  EXPECT_EQ(d.recording.rep_ids.front(), 1);
  EXPECT_EQ(d.recording.rep_ids.back(), 6);
  EXPECT_NO_THROW(d.recording.validate());
}

TEST(Synthesize, PosturesPerFingerLimitsLevels) {
  auto c = small_synth();
  c.duration_s = 20.0;
  c.plateau_states = {90, 135, 180};
  c.postures_per_finger = 2;
  const SyntheticModel m(c);
  std::array<std::set<double>, kFingers> seen;
  for (double t = 0.0; t < m.total_duration(); t += 0.01) {
    const auto a = m.angles(t);
    for (std::size_t f = 0; f < kFingers; ++f)
      if (a[f] == 90.0 || a[f] == 135.0 || a[f] == 180.0) seen[f].insert(a[f]);
  }
  for (const auto& s : seen) EXPECT_EQ(s.size(), 2u);
}

TEST(Synthesize, FrozenPlateauGivesConstantEnvelope) {
  auto c = small_synth();
  c.duration_s = 4.0;
  c.n_repetitions = 1;
  c.noise_std = 0.0;
  c.plateau_states = {135.0};
  c.effort_min = c.effort_max = 1.0;
  const SyntheticModel m(c);
  const auto ref = m.amplitude(0.0);
  for (double t = 0.0; t < 4.0; t += 0.05) {
    const auto a = m.amplitude(t);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], ref[k]);
  }
  // The measured envelope rides a random carrier, so compare one-second
  // channel averages after the filters settle.
  const auto env = sigproc::preprocess(synthesize(c).recording, sigproc::PreprocessConfig{});
  std::vector<double> blocks;
  for (std::size_t b = 1; b < 4; ++b) {
    double s = 0.0;
    for (std::size_t r = b * 100; r < (b + 1) * 100; ++r)
      for (std::size_t k = 0; k < env.channels(); ++k) s += env.frames(r, k);
    blocks.push_back(s);
  }
  for (double v : blocks) EXPECT_NEAR(v / blocks[0], 1.0, 0.01);
}

TEST(SyntheticConfig, KvRoundTripAndValidation) {
  auto c = small_synth();
  c.plateau_states = {90, 120.5, 180};
  c.postures_per_finger = 2;
  const auto back = SyntheticConfig::from_kv(c.to_kv());
  EXPECT_EQ(back.plateau_states, c.plateau_states);
  EXPECT_EQ(back.postures_per_finger, 2u);
  EXPECT_EQ(back.to_kv().to_text(), c.to_kv().to_text());
  c.plateau_states = {200};
  EXPECT_THROW(SyntheticModel{c}, ConfigError);
}
