#include "dpars_cli/commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "dpars/csv.hpp"
#include "dpars/dataset.hpp"
#include "dpars/error.hpp"
#include "dpars/eval.hpp"
#include "dpars/model_io.hpp"
#include "dpars/train.hpp"

namespace dpars::cli {

namespace fs = std::filesystem;

namespace {

KvConfig subset(const KvConfig& kv, const std::set<std::string>& keys) {
  KvConfig out;
  for (const auto& [k, v] : kv.entries())
    if (keys.contains(k)) out.set(k, v);
  return out;
}

std::set<std::string> union_of(std::initializer_list<const std::set<std::string>*> sets) {
  std::set<std::string> out;
  for (const auto* s : sets) out.insert(s->begin(), s->end());
  return out;
}

const std::set<std::string>& training_keys() {
  static const auto k = union_of({&DparsConfig::keys(), &train::TrainConfig::keys(),
                                  &sigproc::PreprocessConfig::keys()});
  return k;
}

struct TrainingSetup {
  DparsConfig model;
  train::TrainConfig train;
  sigproc::PreprocessConfig preprocess;
};

TrainingSetup training_setup(const Invocation& inv) {
  inv.kv.require_known(training_keys());
  TrainingSetup s;
  s.model = DparsConfig::from_kv(subset(inv.kv, DparsConfig::keys()));
  s.model.validate();
  s.train = train::TrainConfig::from_kv(subset(inv.kv, train::TrainConfig::keys()));
  s.preprocess = sigproc::PreprocessConfig::from_kv(subset(inv.kv, sigproc::PreprocessConfig::keys()));
  return s;
}

RunManifest manifest_for(const Invocation& inv, std::uint64_t seed, std::vector<std::string> inputs,
                         std::vector<std::string> outputs) {
  auto m = RunManifest::make(inv.command);
  m.config_files = inv.config_files;
  m.seed = seed;
  m.inputs = std::move(inputs);
  m.outputs = std::move(outputs);
  return m;
}

void ensure_parent(const fs::path& file) {
  const auto dir = file.parent_path();
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cli", "cannot create directory " + dir.string() + ": " + ec.message());
}

dataset::LabeledDataset load_data(const DataPaths& data, const sigproc::PreprocessConfig& chain,
                                  std::size_t window) {
  auto ds = dataset::load_dataset(data.emg, data.angles, chain, dataset::WindowGeometry{window, 1});
  return ds;
}

void warn_clamped(const dataset::LabeledDataset& ds, std::ostream& out) {
  if (ds.clamped_angles > 0) {
    out << "warning: " << ds.clamped_angles << " angle values were clamped into [90, 180]\n";
  }
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cli", "cannot write " + path.string());
  f << text;
}

std::string with_comments(const std::vector<std::string>& comments, const std::string& body) {
  std::string s;
  for (const auto& c : comments) s += "# " + c + "\n";
  return s + body;
}

}  // namespace

void cmd_synth(const Invocation& inv, const fs::path& out_dir, std::ostream& out) {
  inv.kv.require_known(dataset::SyntheticConfig::keys());
  const auto config = dataset::SyntheticConfig::from_kv(inv.kv);
  const auto data = dataset::synthesize(config);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cli", "cannot create output directory " + out_dir.string() + ": " + ec.message());
  const auto emg = out_dir / "emg.csv";
  const auto angles = out_dir / "angles.csv";
  auto comments = manifest_for(inv, config.seed, {}, {emg.string(), angles.string()}).comment_lines();
  const auto synth_kv = config.to_kv();
  for (const auto& [k, v] : synth_kv.entries()) comments.push_back(k + " = " + v);

  sigproc::save_recording(emg, data.recording, comments);
  dataset::save_angles(angles, data.angles, comments);
  out << "wrote " << data.recording.length() << " EMG samples x " << data.recording.channels() << " channels to "
      << emg.string() << "\nwrote " << data.angles.angles.rows << " angle rows to " << angles.string() << "\n";
}

void cmd_preprocess(const Invocation& inv, const fs::path& emg, const fs::path& out_csv, std::ostream& out) {
  inv.kv.require_known(sigproc::PreprocessConfig::keys());
  const auto chain = sigproc::PreprocessConfig::from_kv(inv.kv);
  const auto stream = sigproc::preprocess(sigproc::load_recording(emg), chain);
  ensure_parent(out_csv);
  auto comments = manifest_for(inv, 0, {emg.string()}, {out_csv.string()}).comment_lines();
  const auto chain_kv = chain.to_kv();
  for (const auto& [k, v] : chain_kv.entries()) comments.push_back(k + " = " + v);
  sigproc::save_envelope(out_csv, stream, comments);
  out << "wrote " << stream.length() << " envelope frames at " << stream.sample_rate_hz << " Hz to "
      << out_csv.string() << "\n";
}

void cmd_train(const Invocation& inv, const DataPaths& data, const fs::path& model_out, const fs::path& report_out,
               std::ostream& out) {
  const auto setup = training_setup(inv);
  const auto ds = load_data(data, setup.preprocess, setup.model.t_seq);
  warn_clamped(ds, out);
  out << "windows: train " << ds.count(dataset::Split::train) << ", val " << ds.count(dataset::Split::val)
      << ", test " << ds.count(dataset::Split::test) << "\n";

  const auto result = train::train_loop(ds, setup.model, setup.train, [&](const train::EpochStats& e) {
    out << "epoch " << e.epoch << "  train_loss " << fixed(e.train_loss) << "  val_loss " << fixed(e.val_loss)
        << "  val_r2 " << fixed(e.val_r2) << "\n";
  });
  const auto& report = result.report;
  if (report.lr_halvings > 0) {
    out << "learning rate halved " << report.lr_halvings << " time(s) to " << report.learning_rate << "\n";
  }

  ModelFile m;
  m.params = result.best;
  m.normalization = ds.normalization;
  m.preprocess = setup.preprocess;
  m.geometry = ds.geometry;
  m.training.seed = setup.train.seed;
  m.training.epochs = setup.train.epochs;
  m.training.lambda = setup.train.lambda;
  m.training.learning_rate = report.learning_rate;
  m.training.batch_size = setup.train.batch_size;
  m.training.best_epoch = report.best().epoch;
  m.training.best_val_loss = report.best().val_loss;
  m.training.best_val_r2 = report.best().val_r2;
  m.manifest = manifest_for(inv, setup.train.seed, {data.emg.string(), data.angles.string()},
                            {model_out.string(), report_out.string()});
  ensure_parent(model_out);
  save_model(model_out, m);
  ensure_parent(report_out);
  report.write_csv(report_out, m.manifest.comment_lines());

  const auto val = eval::predict(ds, result.best, dataset::Split::val);
  const auto test = eval::predict(ds, result.best, dataset::Split::test);
  out << "best epoch " << report.best().epoch << "\nfinal val R^2 " << fixed(eval::r2(val.y, val.truth).mean_r2)
      << "\nfinal test R^2 " << fixed(eval::r2(test.y, test.truth).mean_r2) << "\nmodel written to "
      << model_out.string() << "\n";
}

void cmd_eval(const Invocation& inv, const fs::path& model_path, const DataPaths& data, double epsilon,
              std::ostream& out) {
  inv.kv.require_known({});
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("cli", "epsilon must lie in [0, 1)");
  const auto m = load_model(model_path);
  const auto& cfg = m.params.config;
  const auto stream = sigproc::preprocess(sigproc::load_recording(data.emg), m.preprocess);
  if (stream.channels() != cfg.c_in) {
    throw ConfigError("cli", "data has " + std::to_string(stream.channels()) +
                                 " channels but the model expects c_in = " + std::to_string(cfg.c_in));
  }
  // Evaluate with the model's own normalization, not statistics refit on this data.
  const auto normalized = dataset::build_dataset(stream, dataset::load_angles(data.angles), m.geometry,
                                                 &m.normalization);
  warn_clamped(normalized, out);

  out << (m.training.lambda > 0.0 ? "DPARS (+entropy)" : "DPARS") << ", lambda " << m.training.lambda << "\n";
  for (auto split : {dataset::Split::train, dataset::Split::val, dataset::Split::test}) {
    const auto p = eval::predict(normalized, m.params, split);
    out << "[" << dataset::to_string(split) << "] " << eval::format_metrics(eval::r2(p.y, p.truth));
  }
  const auto test = eval::predict(normalized, m.params, dataset::Split::test);
  const auto val = eval::predict(normalized, m.params, dataset::Split::val);
  const auto test_entropy = eval::entropy_stats(test.probs, epsilon);
  out << "[test] " << eval::format_entropy(test_entropy);

  // Supports are chosen on validation data, then applied to test.
  const auto support = eval::entropy_stats(val.probs, epsilon).support;
  const auto pruned = eval::prune_attractor_heads(m.params, support);
  const auto pruned_test = eval::predict(normalized, pruned.params, dataset::Split::test);
  const double dense_r2 = eval::r2(test.y, test.truth).mean_r2;
  const double pruned_r2 = eval::r2(pruned_test.y, pruned_test.truth).mean_r2;
  out << eval::format_cost(pruned.cost);
  out << "pruned test mean R^2 " << fixed(pruned_r2) << " (dense " << fixed(dense_r2) << ", drop "
      << fixed(dense_r2 - pruned_r2) << ")\n";
}

void cmd_predict(const Invocation& inv, const fs::path& model_path, const fs::path& emg, const fs::path& out_csv,
                 std::ostream& out) {
  inv.kv.require_known({});
  const auto m = load_model(model_path);
  const auto rec = sigproc::load_recording(emg);
  const auto& cfg = m.params.config;
  if (rec.channels() != cfg.c_in) {
    throw ConfigError("cli", "recording has " + std::to_string(rec.channels()) +
                                 " channels but the model expects c_in = " + std::to_string(cfg.c_in));
  }
  sigproc::StreamingPreprocessor pre(m.preprocess, rec.sample_rate_hz, rec.channels());
  StreamingDecoder decoder(m.params);

  csv::Table table;
  table.comments = manifest_for(inv, m.training.seed, {model_path.string(), emg.string()}, {out_csv.string()})
                       .comment_lines();
  table.header.push_back("t");
  for (const char* suffix : {"", "_attr", "_refn"})
    for (std::size_t f = 0; f < cfg.n_fingers; ++f) table.header.push_back("f" + std::to_string(f) + suffix);

  const auto factor = static_cast<std::size_t>(m.preprocess.decim_factor);
  std::vector<double> rows;
  std::size_t frame_index = 0;
  for (std::size_t i = 0; i < rec.length(); ++i) {
    auto frame = pre.push(rec.samples.row(i));
    if (!frame) continue;
    m.normalization.apply(*frame);
    if (auto trace = decoder.step(*frame)) {
      rows.push_back(rec.times[frame_index * factor]);
      rows.insert(rows.end(), trace->y.begin(), trace->y.end());
      rows.insert(rows.end(), trace->y_attr.begin(), trace->y_attr.end());
      rows.insert(rows.end(), trace->y_refn.begin(), trace->y_refn.end());
    }
    ++frame_index;
  }
  table.values.cols = table.header.size();
  table.values.rows = rows.size() / table.values.cols;
  table.values.data = std::move(rows);
  ensure_parent(out_csv);
  csv::write(out_csv, table);
  out << "wrote " << table.values.rows << " predictions to " << out_csv.string() << "\n";
}

void cmd_info(const fs::path& model_path, std::ostream& out) {
  const auto m = load_model(model_path);
  const auto& cfg = m.params.config;
  out << "model " << model_path.string() << "\n\n[config]\n" << cfg.to_kv().to_text() << "\n[preprocess]\n"
      << m.preprocess.to_kv().to_text() << "\n";

  std::vector<std::size_t> sizes;
  bool pruned = false;
  for (const auto& head : m.params.attractor) {
    sizes.push_back(head.states.size());
    pruned = pruned || head.states.size() != cfg.n_states;
  }
  const auto cost = eval::mac_count(cfg, pruned ? sizes : std::vector<std::size_t>{});
  out << "[cost]\n" << eval::format_cost(cost);
  out << "total parameters " << cost.params.total << "\n\n[training]\n"
      << "seed " << m.training.seed << "\nepochs " << m.training.epochs << "\nlambda " << m.training.lambda
      << "\nlearning_rate " << m.training.learning_rate << "\nbatch_size " << m.training.batch_size
      << "\nbest_epoch " << m.training.best_epoch << "\nbest_val_loss " << fixed(m.training.best_val_loss)
      << "\nbest_val_r2 " << fixed(m.training.best_val_r2) << "\n\n[manifest]\n";
  for (const auto& line : m.manifest.comment_lines()) out << line << "\n";
}

void cmd_sweep_encoding(const Invocation& inv, const DataPaths& data, const std::vector<std::size_t>& sizes,
                        const std::vector<std::uint64_t>& seeds, const fs::path& out_csv, std::ostream& out) {
  const auto setup = training_setup(inv);
  const auto ds = load_data(data, setup.preprocess, setup.model.t_seq);
  const auto rows = eval::encoding_size_sweep(ds, setup.model, setup.train, sizes, seeds);
  const auto comments =
      manifest_for(inv, seeds.front(), {data.emg.string(), data.angles.string()}, {out_csv.string()}).comment_lines();
  write_text(out_csv, with_comments(comments, eval::sweep_csv(rows, "d_enc")));
  for (const auto& r : rows) out << "d_enc " << r.value << "  mean R^2 " << fixed(r.mean_r2) << "  var " << r.var_r2 << "\n";
}

void cmd_sweep_lambda(const Invocation& inv, const DataPaths& data, const std::vector<double>& lambdas,
                      const std::vector<std::uint64_t>& seeds, const fs::path& out_csv, std::ostream& out) {
  const auto setup = training_setup(inv);
  const auto ds = load_data(data, setup.preprocess, setup.model.t_seq);
  const auto rows = eval::lambda_sweep(ds, setup.model, setup.train, lambdas, seeds);
  const auto comments =
      manifest_for(inv, seeds.front(), {data.emg.string(), data.angles.string()}, {out_csv.string()}).comment_lines();
  write_text(out_csv, with_comments(comments, eval::sweep_csv(rows, "lambda")));
  for (const auto& r : rows) out << "lambda " << r.value << "  mean R^2 " << fixed(r.mean_r2) << "  var " << r.var_r2 << "\n";
}

}  // namespace dpars::cli
