#include "dpars/train.hpp"

#include <chrono>
#include <limits>
#include <cmath>
#include <fstream>

#include "dpars/csv.hpp"
#include "dpars/error.hpp"
#include "dpars/eval.hpp"
#include "dpars/kernels.hpp"
#include "dpars/rng.hpp"

namespace dpars::train {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train", "batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train", "epochs must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train", "learning_rate must be a non-negative number");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("train", "lambda must be >= 0");
}

const std::set<std::string>& TrainConfig::keys() {
  static const std::set<std::string> k = {"learning_rate", "lambda", "batch_size", "epochs", "seed", "shuffle"};
  return k;
}

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
  TrainConfig c;
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.lambda = kv.get_double("lambda", c.lambda);
  const long long batch = kv.get_int("batch_size", static_cast<long long>(c.batch_size));
  const long long epochs = kv.get_int("epochs", static_cast<long long>(c.epochs));
  if (batch < 1) throw ConfigError("train", "batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train", "epochs must be >= 1");
  c.batch_size = static_cast<std::size_t>(batch);
  c.epochs = static_cast<std::size_t>(epochs);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.shuffle = kv.get_bool("shuffle", c.shuffle);
  c.validate();
  return c;
}

KvConfig TrainConfig::to_kv() const {
  KvConfig kv;
  kv.set("learning_rate", csv::format_double(learning_rate));
  kv.set("lambda", csv::format_double(lambda));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("epochs", std::to_string(epochs));
  kv.set("seed", std::to_string(seed));
  kv.set("shuffle", shuffle ? "true" : "false");
  return kv;
}

void TrainReport::write_csv(const std::filesystem::path& path, const std::vector<std::string>& comments) const {
  csv::Table t;
  t.comments = comments;
  t.header = {"epoch", "train_loss", "val_loss", "val_r2"};
  const std::size_t fingers = epochs.empty() ? 0 : epochs.front().mean_entropy.size();
  for (std::size_t f = 0; f < fingers; ++f) t.header.push_back("mean_entropy_f" + std::to_string(f));
  t.values = Matrix(epochs.size(), 4 + fingers);
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& e = epochs[i];
    t.values(i, 0) = static_cast<double>(e.epoch);
    t.values(i, 1) = e.train_loss;
    t.values(i, 2) = e.val_loss;
    t.values(i, 3) = e.val_r2;
    for (std::size_t f = 0; f < fingers; ++f) t.values(i, 4 + f) = e.mean_entropy[f];
  }
  csv::write(path, t);
}

DparsParams init_params(const DparsConfig& config, std::uint64_t seed) {
  DparsParams p = DparsParams::zeros(config);
  Rng rng(seed);
  for (auto* param : p.all()) {
    // Vectors stored as [n x 1] are biases.
    if (param->value.cols == 1) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(param->value.cols));
    for (double& w : param->value.data) w = rng.uniform(-bound, bound);
  }
  return p;
}

double loss(const ForwardTrace& trace, std::span<const double> target, double lambda) {
  if (target.size() != trace.y.size()) throw ShapeError("train", "target size does not match model output");
  double total = kernels::l1(trace.y.data(), target.data(), target.size());
  double h = 0.0;
  for (const auto& p : trace.probs) h += kernels::entropy(p.data(), p.size());
  return total + lambda * h;
}

ad::Var loss_graph(ad::Tape& tape, const model::GraphOutputs& out, std::span<const double> target, double lambda) {
  ad::Var total = tape.l1_loss(out.y, tape.view(target, target.size()));
  if (lambda != 0.0) {
    ad::Var h = tape.entropy(out.probs[0]);
    for (std::size_t f = 1; f < out.probs.size(); ++f) h = tape.add(h, tape.entropy(out.probs[f]));
    total = tape.add(total, tape.scale(lambda, h));
  }
  return total;
}

void sgd_step(DparsParams& params, double learning_rate) {
  for (auto* p : params.all()) {
    for (double g : p->grad.data) {
      if (!std::isfinite(g)) throw NumericalError("train", "non-finite gradient in parameter '" + p->name + "'");
    }
  }
  if (learning_rate == 0.0) return;
  for (auto* p : params.all()) {
    auto& v = p->value.data;
    const auto& g = p->grad.data;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= learning_rate * g[i];
  }
}

namespace {

struct EpochResult {
  double mean_loss = 0.0;
  double head_loss = 0.0;  // mean over the first tenth of batches
  double tail_loss = 0.0;  // mean over the last tenth
};

EpochResult run_epoch(const dataset::LabeledDataset& data, DparsParams& params, const TrainConfig& cfg,
                      std::vector<std::size_t>& order, Rng& shuffler, ad::Tape& tape) {
  if (cfg.shuffle) shuffler.shuffle(order);
  const std::size_t n = order.size();
  const std::size_t n_batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t tenth = std::max<std::size_t>(1, n_batches / 10);
  EpochResult r;
  double head_n = 0.0, tail_n = 0.0, total = 0.0;
  for (std::size_t b = 0; b < n_batches; ++b) {
    const std::size_t lo = b * cfg.batch_size;
    const std::size_t hi = std::min(n, lo + cfg.batch_size);
    const double inv = 1.0 / static_cast<double>(hi - lo);
    params.zero_grad();
    double batch_loss = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t i = order[k];
      tape.reset();
      const auto out = model::build_graph(tape, data.window(i), params);
      const ad::Var l = loss_graph(tape, out, data.items[i].target, cfg.lambda);
      batch_loss += tape.scalar(l);
      tape.backward(l, inv);
    }
    batch_loss *= inv;
    sgd_step(params, cfg.learning_rate);
    total += batch_loss * static_cast<double>(hi - lo);
    if (b < tenth) {
      r.head_loss += batch_loss;
      head_n += 1.0;
    }
    if (b + tenth >= n_batches) {
      r.tail_loss += batch_loss;
      tail_n += 1.0;
    }
  }
  r.mean_loss = total / static_cast<double>(n);
  r.head_loss /= head_n;
  r.tail_loss /= tail_n;
  return r;
}

EpochStats validate_epoch(const dataset::LabeledDataset& data, const DparsParams& params, double lambda) {
  const auto pred = eval::predict(data, params, dataset::Split::val, lambda);
  EpochStats s;
  s.val_loss = pred.mean_loss;
  s.val_r2 = eval::r2(pred.y, pred.truth).mean_r2;
  s.mean_entropy.assign(params.config.n_fingers, 0.0);
  for (const auto& item : pred.probs) {
    for (std::size_t f = 0; f < item.size(); ++f) s.mean_entropy[f] += kernels::entropy(item[f].data(), item[f].size());
  }
  for (auto& h : s.mean_entropy) h /= static_cast<double>(pred.probs.size());
  return s;
}

}  // namespace

TrainResult train_from(const dataset::LabeledDataset& data, DparsParams initial, const TrainConfig& cfg,
                       const EpochCallback& on_epoch) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto train_idx = data.indices(dataset::Split::train);
  if (train_idx.empty()) throw ProtocolError("train", "training split is empty");
  if (data.count(dataset::Split::val) < 2) throw ProtocolError("train", "validation split needs at least 2 windows");

  TrainResult result;
  TrainConfig run = cfg;
  const DparsParams pristine = initial;
  constexpr int kMaxHalvings = 3;
  ad::Tape tape;

  for (int attempt = 0;; ++attempt) {
    DparsParams params = pristine;
    std::vector<std::size_t> order = train_idx;
    Rng shuffler(run.seed ^ 0xD1B54A32D192ED03ULL);
    TrainReport report;
    report.lr_halvings = attempt;
    report.learning_rate = run.learning_rate;
    DparsParams best = params;
    double best_val = std::numeric_limits<double>::infinity();
    bool restart = false;

    for (std::size_t epoch = 0; epoch < run.epochs; ++epoch) {
      const auto er = run_epoch(data, params, run, order, shuffler, tape);
      if (epoch == 0 && run.learning_rate > 0.0 && !(er.tail_loss < er.head_loss) && attempt < kMaxHalvings) {
        run.learning_rate *= 0.5;
        restart = true;
        break;
      }
      auto stats = validate_epoch(data, params, run.lambda);
      stats.epoch = epoch + 1;
      stats.train_loss = er.mean_loss;
      if (!std::isfinite(stats.val_loss)) {
        throw NumericalError("train", "validation loss diverged at epoch " + std::to_string(epoch));
      }
      if (stats.val_loss < best_val) {
        best_val = stats.val_loss;
        best = params;
        report.best_epoch = epoch;
      }
      if (on_epoch) on_epoch(stats);
      report.epochs.push_back(std::move(stats));
    }
    if (restart) continue;

    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    best.zero_grad();
    result.best = std::move(best);
    result.report = std::move(report);
    return result;
  }
}

TrainResult train_loop(const dataset::LabeledDataset& data, const DparsConfig& config, const TrainConfig& cfg,
                       const EpochCallback& on_epoch) {
  config.validate();
  if (data.stream.channels() != config.c_in) {
    throw ConfigError("train", "dataset has " + std::to_string(data.stream.channels()) +
                                   " channels but the model expects c_in = " + std::to_string(config.c_in));
  }
  if (data.geometry.window_samples != config.t_seq) {
    throw ConfigError("train", "window length does not match t_seq");
  }
  return train_from(data, init_params(config, cfg.seed), cfg, on_epoch);
}

}  // namespace dpars::train
