#include "dpars/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "dpars/csv.hpp"
#include "dpars/error.hpp"

namespace dpars::dataset {
namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto kv = KvConfig::parse("v = " + item);
    out.push_back(kv.get_double("v", 0.0));
  }
  return out;
}

std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += csv::format_double(v[i]);
  }
  return out;
}

}  // namespace

const std::set<std::string>& SyntheticConfig::keys() {
  static const std::set<std::string> k = {
      "seed",         "duration_s",    "n_repetitions", "n_channels",   "sample_rate_hz", "angle_rate_hz",
      "plateau_states", "postures_per_finger", "hold_min_s",  "hold_max_s",    "transition_ms", "mixing_spread", "mixing_floor",
      "noise_std",    "nonlinearity",  "velocity_gain", "tonic",        "effort_min",     "effort_max",
      "effort_hold_s", "amplitude_uv"};
  return k;
}

SyntheticConfig SyntheticConfig::from_kv(const KvConfig& kv) {
  SyntheticConfig c;
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.duration_s = kv.get_double("duration_s", c.duration_s);
  c.n_repetitions = static_cast<int>(kv.get_int("n_repetitions", c.n_repetitions));
  c.n_channels = static_cast<std::size_t>(kv.get_int("n_channels", static_cast<long long>(c.n_channels)));
  c.sample_rate_hz = kv.get_double("sample_rate_hz", c.sample_rate_hz);
  c.angle_rate_hz = kv.get_double("angle_rate_hz", c.angle_rate_hz);
  if (kv.has("plateau_states")) c.plateau_states = parse_list(kv.get_string("plateau_states", ""));
  c.postures_per_finger = static_cast<std::size_t>(kv.get_int("postures_per_finger", 0));
  c.hold_min_s = kv.get_double("hold_min_s", c.hold_min_s);
  c.hold_max_s = kv.get_double("hold_max_s", c.hold_max_s);
  c.transition_ms = kv.get_double("transition_ms", c.transition_ms);
  c.mixing_spread = kv.get_double("mixing_spread", c.mixing_spread);
  c.mixing_floor = kv.get_double("mixing_floor", c.mixing_floor);
  c.noise_std = kv.get_double("noise_std", c.noise_std);
  c.nonlinearity = kv.get_double("nonlinearity", c.nonlinearity);
  c.velocity_gain = kv.get_double("velocity_gain", c.velocity_gain);
  c.tonic = kv.get_double("tonic", c.tonic);
  c.effort_min = kv.get_double("effort_min", c.effort_min);
  c.effort_max = kv.get_double("effort_max", c.effort_max);
  c.effort_hold_s = kv.get_double("effort_hold_s", c.effort_hold_s);
  c.amplitude_uv = kv.get_double("amplitude_uv", c.amplitude_uv);
  return c;
}

KvConfig SyntheticConfig::to_kv() const {
  KvConfig kv;
  kv.set("seed", std::to_string(seed));
  kv.set("duration_s", csv::format_double(duration_s));
  kv.set("n_repetitions", std::to_string(n_repetitions));
  kv.set("n_channels", std::to_string(n_channels));
  kv.set("sample_rate_hz", csv::format_double(sample_rate_hz));
  kv.set("angle_rate_hz", csv::format_double(angle_rate_hz));
  kv.set("plateau_states", format_list(plateau_states));
  kv.set("postures_per_finger", std::to_string(postures_per_finger));
  kv.set("hold_min_s", csv::format_double(hold_min_s));
  kv.set("hold_max_s", csv::format_double(hold_max_s));
  kv.set("transition_ms", csv::format_double(transition_ms));
  kv.set("mixing_spread", csv::format_double(mixing_spread));
  kv.set("mixing_floor", csv::format_double(mixing_floor));
  kv.set("noise_std", csv::format_double(noise_std));
  kv.set("nonlinearity", csv::format_double(nonlinearity));
  kv.set("velocity_gain", csv::format_double(velocity_gain));
  kv.set("tonic", csv::format_double(tonic));
  kv.set("effort_min", csv::format_double(effort_min));
  kv.set("effort_max", csv::format_double(effort_max));
  kv.set("effort_hold_s", csv::format_double(effort_hold_s));
  kv.set("amplitude_uv", csv::format_double(amplitude_uv));
  return kv;
}

namespace {

void validate(const SyntheticConfig& c) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError("dataset", std::string("synthetic ") + name + " must be positive");
  };
  positive(c.duration_s, "duration_s");
  positive(c.sample_rate_hz, "sample_rate_hz");
  positive(c.angle_rate_hz, "angle_rate_hz");
  positive(c.hold_min_s, "hold_min_s");
  positive(c.transition_ms, "transition_ms");
  positive(c.mixing_spread, "mixing_spread");
  positive(c.nonlinearity, "nonlinearity");
  if (c.n_repetitions < 1) throw ConfigError("dataset", "synthetic n_repetitions must be >= 1");
  if (c.n_channels < 1) throw ConfigError("dataset", "synthetic n_channels must be >= 1");
  if (c.hold_max_s < c.hold_min_s) throw ConfigError("dataset", "synthetic hold_max_s < hold_min_s");
  if (c.effort_max < c.effort_min || c.effort_min < 0.0) {
    throw ConfigError("dataset", "synthetic effort range must satisfy 0 <= effort_min <= effort_max");
  }
  if (c.plateau_states.empty()) throw ConfigError("dataset", "synthetic plateau_states is empty");
  for (double s : c.plateau_states) {
    if (s < kAngleMin || s > kAngleMax) throw ConfigError("dataset", "plateau states must lie in [90, 180]");
  }
  if (c.noise_std < 0.0 || c.mixing_floor < 0.0 || c.tonic < 0.0 || c.velocity_gain < 0.0 ||
      c.amplitude_uv < 0.0) {
    throw ConfigError("dataset", "synthetic noise/mixing/tonic/gain values must be non-negative");
  }
}

using LevelDraw = std::function<double(double previous, Rng&)>;

}  // namespace

double SyntheticModel::total_duration() const {
  return config_.duration_s * static_cast<double>(config_.n_repetitions);
}

double SyntheticModel::eval_track(const Track& track, double t, double* slope) {
  auto it = std::upper_bound(track.begin(), track.end(), t,
                             [](double v, const Segment& s) { return v < s.end; });
  if (it == track.end()) it = std::prev(track.end());
  const Segment& s = *it;
  if (s.from == s.to) {
    if (slope) *slope = 0.0;
    return s.from;
  }
  const double dur = s.end - s.start;
  const double x = std::clamp((t - s.start) / dur, 0.0, 1.0);
  const double pi = std::numbers::pi;
  if (slope) *slope = (s.to - s.from) * pi / (2.0 * dur) * std::sin(pi * x);
  return s.from + (s.to - s.from) * 0.5 * (1.0 - std::cos(pi * x));
}

SyntheticModel::SyntheticModel(const SyntheticConfig& config) : config_(config) {
  validate(config_);
  Rng rng(config_.seed);
  const double t_end = total_duration();
  const double transition = config_.transition_ms / 1000.0;

  auto build = [&](const LevelDraw& draw, double hold_min, double hold_max, double trans) {
    Track track;
    double t = 0.0;
    double level = draw(std::nan(""), rng);
    while (t < t_end) {
      const double hold = rng.uniform(hold_min, hold_max);
      track.push_back({t, t + hold, level, level});
      t += hold;
      if (t >= t_end) break;
      const double next = draw(level, rng);
      track.push_back({t, t + trans, level, next});
      t += trans;
      level = next;
    }
    track.back().end = std::max(track.back().end, t_end) + 1.0;
    return track;
  };

  for (auto& f : fingers_) {
    std::vector<double> levels = config_.plateau_states;
    const std::size_t k = config_.postures_per_finger;
    if (k > 0 && k < levels.size()) {
      rng.shuffle(levels);
      levels.resize(k);
      std::sort(levels.begin(), levels.end());
    }
    const LevelDraw plateau = [&levels](double previous, Rng& r) {
      if (levels.size() == 1) return levels[0];
      double v = levels[r.index(levels.size())];
      while (v == previous) v = levels[r.index(levels.size())];
      return v;
    };
    f = build(plateau, config_.hold_min_s, config_.hold_max_s, transition);
  }

  const double emin = config_.effort_min;
  const double emax = config_.effort_max;
  const LevelDraw effort = [emin, emax](double, Rng& r) { return r.uniform(emin, emax); };
  effort_ = build(effort, 0.5 * config_.effort_hold_s, 1.5 * config_.effort_hold_s, 0.5);

  // Muscles sit at random spots over a square electrode grid; each channel
  // picks up nearby muscles with a Gaussian falloff plus a small floor.
  const std::size_t channels = config_.n_channels;
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(channels))));
  std::vector<std::pair<double, double>> spots(muscles());
  for (auto& s : spots) s = {rng.uniform(0.0, static_cast<double>(side)), rng.uniform(0.0, static_cast<double>(side))};
  mixing_ = Matrix(channels, muscles());
  const double two_var = 2.0 * config_.mixing_spread * config_.mixing_spread;
  for (std::size_t ch = 0; ch < channels; ++ch) {
    const double ex = static_cast<double>(ch % side) + 0.5;
    const double ey = static_cast<double>(ch / side) + 0.5;
    for (std::size_t m = 0; m < muscles(); ++m) {
      const double dx = ex - spots[m].first;
      const double dy = ey - spots[m].second;
      mixing_(ch, m) = std::exp(-(dx * dx + dy * dy) / two_var) + config_.mixing_floor * rng.uniform();
    }
  }
}

std::array<double, kFingers> SyntheticModel::angles(double t) const {
  std::array<double, kFingers> out{};
  for (std::size_t f = 0; f < kFingers; ++f) out[f] = eval_track(fingers_[f], t, nullptr);
  return out;
}

std::vector<double> SyntheticModel::activations(double t) const {
  const double effort = eval_track(effort_, t, nullptr);
  const double speed_unit = (kAngleMax - kAngleMin) / (config_.transition_ms / 1000.0);
  std::vector<double> a(muscles());
  for (std::size_t f = 0; f < kFingers; ++f) {
    double slope = 0.0;
    const double theta = eval_track(fingers_[f], t, &slope);
    const double flex = (kAngleMax - theta) / (kAngleMax - kAngleMin);
    const double v = slope / speed_unit;
    const double drive_flex = std::pow(flex, config_.nonlinearity);
    const double drive_ext = std::pow(1.0 - flex, config_.nonlinearity);
    // Flexing (angle decreasing) bursts the flexor in proportion to its drive;
    // extending bursts the extensor.
    a[2 * f] = effort * (config_.tonic + drive_flex * (1.0 + config_.velocity_gain * std::max(-v, 0.0)));
    a[2 * f + 1] = effort * (config_.tonic + drive_ext * (1.0 + config_.velocity_gain * std::max(v, 0.0)));
  }
  return a;
}

std::vector<double> SyntheticModel::amplitude(double t) const {
  const auto a = activations(t);
  std::vector<double> amp(config_.n_channels, 0.0);
  for (std::size_t ch = 0; ch < config_.n_channels; ++ch) {
    double s = 0.0;
    for (std::size_t m = 0; m < muscles(); ++m) s += mixing_(ch, m) * a[m];
    amp[ch] = config_.amplitude_uv * s;
  }
  return amp;
}

int SyntheticModel::repetition_at(double t) const {
  const int rep = static_cast<int>(std::floor(t / config_.duration_s)) + 1;
  return std::clamp(rep, 1, config_.n_repetitions);
}

SyntheticData synthesize(const SyntheticConfig& config) {
  const SyntheticModel model(config);
  const auto per_rep = static_cast<std::size_t>(std::llround(config.duration_s * config.sample_rate_hz));
  const std::size_t n = per_rep * static_cast<std::size_t>(config.n_repetitions);
  const std::size_t channels = config.n_channels;

  SyntheticData out;
  auto& rec = out.recording;
  rec.sample_rate_hz = config.sample_rate_hz;
  rec.samples = Matrix(n, channels);
  rec.times.resize(n);
  rec.rep_ids.resize(n);

  Rng carrier(config.seed ^ 0x9E3779B97F4A7C15ULL);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / config.sample_rate_hz;
    rec.times[i] = t;
    rec.rep_ids[i] = static_cast<int>(i / per_rep) + 1;
    const auto amp = model.amplitude(t);
    auto row = rec.samples.row(i);
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const double noise = config.noise_std > 0.0 ? config.noise_std * carrier.normal() : 0.0;
      row[ch] = amp[ch] * carrier.normal() + noise;
    }
  }

  const auto n_ang = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * config.angle_rate_hz / config.sample_rate_hz + 1e-9));
  out.angles.times.resize(n_ang);
  out.angles.angles = Matrix(n_ang, kFingers);
  for (std::size_t k = 0; k < n_ang; ++k) {
    const double t = static_cast<double>(k) / config.angle_rate_hz;
    out.angles.times[k] = t;
    const auto a = model.angles(t);
    std::copy(a.begin(), a.end(), out.angles.angles.row(k).begin());
  }
  return out;
}

}  // namespace dpars::dataset
