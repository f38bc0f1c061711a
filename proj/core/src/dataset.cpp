#include "dpars/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "dpars/csv.hpp"
#include "dpars/error.hpp"

namespace dpars::dataset {

const char* to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

void NormalizationStats::apply(std::span<double> frame) const {
  if (frame.size() != mean.size()) throw ShapeError("dataset", "normalization: channel count mismatch");
  for (std::size_t c = 0; c < frame.size(); ++c) frame[c] = (frame[c] - mean[c]) / stddev[c];
}

Matrix NormalizationStats::apply(const Matrix& frames) const {
  Matrix out = frames;
  for (std::size_t r = 0; r < out.rows; ++r) apply(out.row(r));
  return out;
}

sigproc::WindowView LabeledDataset::window(std::size_t i) const {
  const auto& item = items.at(i);
  const std::size_t t = geometry.window_samples;
  const std::size_t c = stream.channels();
  const std::size_t first = item.end_index + 1 - t;
  return {std::span<const double>(stream.frames.data).subspan(first * c, t * c), t, c, item.end_index};
}

std::vector<std::size_t> LabeledDataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].split == s) out.push_back(i);
  }
  return out;
}

std::size_t LabeledDataset::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(items.begin(), items.end(), [s](const Item& it) { return it.split == s; }));
}

Split split_for_repetition(int rep) {
  if (rep >= 1 && rep <= 4) return Split::train;
  if (rep == 5) return Split::val;
  if (rep == 6) return Split::test;
  throw ProtocolError("dataset", "repetition id " + std::to_string(rep) + " outside 1..6");
}

std::vector<Split> split_by_repetition(std::span<const int> rep_ids) {
  std::vector<Split> out;
  out.reserve(rep_ids.size());
  for (const int r : rep_ids) out.push_back(split_for_repetition(r));
  return out;
}

NormalizationStats fit_normalization(const sigproc::EnvelopeStream& stream, std::span<const Item> items,
                                     std::size_t window_samples) {
  std::vector<char> used(stream.length(), 0);
  std::size_t n_train = 0;
  for (const auto& it : items) {
    if (it.split != Split::train) continue;
    ++n_train;
    for (std::size_t r = it.end_index + 1 - window_samples; r <= it.end_index; ++r) used[r] = 1;
  }
  if (n_train == 0) throw ProtocolError("dataset", "cannot fit normalization: training split is empty");

  const std::size_t c = stream.channels();
  NormalizationStats stats;
  stats.mean.assign(c, 0.0);
  stats.stddev.assign(c, 0.0);
  double count = 0.0;
  for (std::size_t r = 0; r < stream.length(); ++r) {
    if (!used[r]) continue;
    count += 1.0;
    const auto row = stream.frames.row(r);
    for (std::size_t k = 0; k < c; ++k) stats.mean[k] += row[k];
  }
  for (auto& m : stats.mean) m /= count;
  for (std::size_t r = 0; r < stream.length(); ++r) {
    if (!used[r]) continue;
    const auto row = stream.frames.row(r);
    for (std::size_t k = 0; k < c; ++k) {
      const double d = row[k] - stats.mean[k];
      stats.stddev[k] += d * d;
    }
  }
  for (auto& s : stats.stddev) s = std::max(std::sqrt(s / count), NormalizationStats::kStdFloor);
  return stats;
}

std::vector<std::size_t> align_targets(const sigproc::EnvelopeStream& stream, const AngleStream& angles) {
  if (angles.angles.rows == 0) throw FormatError("dataset", "angle stream is empty");
  const std::size_t n_ang = angles.angles.rows;
  double ang_period = 1.0 / stream.sample_rate_hz;
  if (n_ang >= 2) ang_period = (angles.times.back() - angles.times.front()) / static_cast<double>(n_ang - 1);
  if (!(ang_period > 0.0)) throw AlignmentError("dataset", "angle time column must increase");

  // Length of the angle stream expressed in envelope frames.
  const double ang_frames = static_cast<double>(n_ang) * ang_period * stream.sample_rate_hz;
  if (std::abs(ang_frames - static_cast<double>(stream.length())) > 1.0 + 1e-6) {
    throw AlignmentError("dataset", "angle stream covers " + std::to_string(ang_frames) +
                                        " envelope frames but the EMG stream has " +
                                        std::to_string(stream.length()));
  }
  std::vector<std::size_t> idx(stream.length());
  const double t0 = angles.times.front();
  for (std::size_t e = 0; e < stream.length(); ++e) {
    const double pos = std::round((stream.times[e] - t0) / ang_period);
    idx[e] = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(n_ang - 1)));
  }
  return idx;
}

LabeledDataset build_dataset(const sigproc::EnvelopeStream& stream, const AngleStream& angles,
                             const WindowGeometry& geometry, const NormalizationStats* normalization) {
  if (angles.angles.cols != kFingers) throw FormatError("dataset", "angle stream must have 6 columns");
  const auto target_idx = align_targets(stream, angles);

  LabeledDataset ds;
  ds.geometry = geometry;
  ds.clamped_angles = angles.clamped;
  for (const auto end : sigproc::window_end_indices(stream.length(), stream.rep_ids, geometry.window_samples,
                                                    geometry.hop)) {
    Item it;
    it.end_index = end;
    it.rep = stream.rep_ids[end];
    it.split = split_for_repetition(it.rep);
    const auto row = angles.angles.row(target_idx[end]);
    it.target.assign(row.begin(), row.end());
    ds.items.push_back(std::move(it));
  }
  if (normalization) {
    if (normalization->mean.size() != stream.channels() || normalization->stddev.size() != stream.channels()) {
      throw ShapeError("dataset", "normalization stats do not match the stream's channel count");
    }
    ds.normalization = *normalization;
  } else {
    ds.normalization = fit_normalization(stream, ds.items, geometry.window_samples);
  }
  ds.stream = stream;
  ds.stream.frames = ds.normalization.apply(stream.frames);
  return ds;
}

LabeledDataset load_dataset(const std::filesystem::path& emg_csv, const std::filesystem::path& angles_csv,
                            const sigproc::PreprocessConfig& preprocess, const WindowGeometry& geometry) {
  const auto rec = sigproc::load_recording(emg_csv);
  const auto angles = load_angles(angles_csv);
  return build_dataset(sigproc::preprocess(rec, preprocess), angles, geometry);
}

namespace {

AngleStream angles_from_table(const csv::Table& table, const std::string& source) {
  static const char* kCols[] = {"t", "f0", "f1", "f2", "f3", "f4", "f5"};
  std::size_t idx[7];
  for (std::size_t i = 0; i < 7; ++i) {
    try {
      idx[i] = table.column(kCols[i]);
    } catch (const FormatError&) {
      throw FormatError("dataset", source + ": missing column '" + kCols[i] + "'");
    }
  }
  if (table.values.rows == 0) throw FormatError("dataset", source + ": angle file has no rows");
  AngleStream out;
  out.times.resize(table.values.rows);
  out.angles = Matrix(table.values.rows, kFingers);
  for (std::size_t r = 0; r < table.values.rows; ++r) {
    out.times[r] = table.values(r, idx[0]);
    for (std::size_t f = 0; f < kFingers; ++f) {
      double v = table.values(r, idx[f + 1]);
      if (v < kAngleMin || v > kAngleMax) {
        v = std::clamp(v, kAngleMin, kAngleMax);
        ++out.clamped;
      }
      out.angles(r, f) = v;
    }
  }
  return out;
}

}  // namespace

AngleStream load_angles(const std::filesystem::path& path) {
  return angles_from_table(csv::read(path), path.string());
}

AngleStream parse_angles(const std::string& text) { return angles_from_table(csv::parse(text), "<string>"); }

void save_angles(const std::filesystem::path& path, const AngleStream& angles,
                 const std::vector<std::string>& comments) {
  csv::Table t;
  t.comments = comments;
  t.header = {"t", "f0", "f1", "f2", "f3", "f4", "f5"};
  t.values = Matrix(angles.angles.rows, 7);
  for (std::size_t r = 0; r < angles.angles.rows; ++r) {
    t.values(r, 0) = angles.times[r];
    for (std::size_t f = 0; f < kFingers; ++f) t.values(r, f + 1) = angles.angles(r, f);
  }
  csv::write(path, t);
}

}  // namespace dpars::dataset
