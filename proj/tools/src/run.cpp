#include <map>
#include <ostream>

#include <CLI11.hpp>

#include "dpars/dataset.hpp"
#include "dpars/error.hpp"
#include "dpars/manifest.hpp"
#include "dpars/model.hpp"
#include "dpars/sigproc.hpp"
#include "dpars/train.hpp"
#include "dpars_cli/commands.hpp"

namespace dpars::cli {

namespace {

// Collects `--config` files and one `--key value` flag per config key;
// flags are overlaid on the merged files when the command runs.
struct KeyFlags {
  std::vector<std::string> config_files;
  std::map<std::string, std::string> values;

  void attach(CLI::App* sub, const std::set<std::string>& keys) {
    sub->add_option("--config", config_files, "key = value config file (repeatable, later files win)");
    for (const auto& key : keys) sub->add_option("--" + key, values[key], "override config key '" + key + "'");
  }

  Invocation invocation(const std::string& command, const CLI::App* sub) const {
    Invocation inv;
    inv.command = command;
    inv.config_files = config_files;
    for (const auto& f : config_files) inv.kv.merge(KvConfig::load(f));
    for (const auto& [key, value] : values) {
      if (sub->count("--" + key) > 0) inv.kv.set(key, value);
    }
    return inv;
  }
};

std::set<std::string> merged(std::initializer_list<const std::set<std::string>*> sets) {
  std::set<std::string> out;
  for (const auto* s : sets) out.insert(s->begin(), s->end());
  return out;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"DPARS: EMG envelopes to finger angles with attractor heads", "dpars"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version());

  const auto train_keys =
      merged({&DparsConfig::keys(), &train::TrainConfig::keys(), &sigproc::PreprocessConfig::keys()});

  DataPaths data;
  std::string out_path, report_path, model_path, emg_path;
  double epsilon = 0.01;
  std::vector<std::size_t> sizes = {1, 2, 4, 6, 8, 10, 12, 16};
  std::vector<double> lambdas = {0.0, 0.005, 0.01, 0.02, 0.05, 0.1};
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--emg", data.emg, "raw EMG CSV (t,ch0..,rep)")->required();
    sub->add_option("--angles", data.angles, "finger angle CSV (t,f0..f5)")->required();
  };

  KeyFlags synth_flags, pre_flags, train_flags, eval_flags, predict_flags, enc_flags, lam_flags;

  auto* synth = app.add_subcommand("synth", "generate a synthetic EMG/angle dataset");
  synth_flags.attach(synth, dataset::SyntheticConfig::keys());
  synth->add_option("--out", out_path, "output directory")->required();

  auto* pre = app.add_subcommand("preprocess", "raw EMG to 100 Hz envelope CSV");
  pre_flags.attach(pre, sigproc::PreprocessConfig::keys());
  pre->add_option("--emg", emg_path, "raw EMG CSV")->required();
  pre->add_option("--out", out_path, "envelope CSV")->required();

  auto* tr = app.add_subcommand("train", "train a model and write it with its report");
  train_flags.attach(tr, train_keys);
  add_data(tr);
  tr->add_option("--out", out_path, "model file")->required();
  tr->add_option("--report", report_path, "training report CSV (default: <out>.report.csv)");

  auto* ev = app.add_subcommand("eval", "accuracy, attractor sparsity and cost of a model");
  eval_flags.attach(ev, {});
  ev->add_option("--model", model_path, "model file")->required();
  add_data(ev);
  ev->add_option("--epsilon", epsilon, "support threshold on mean state probability")->capture_default_str();

  auto* pr = app.add_subcommand("predict", "streaming inference over a raw EMG recording");
  predict_flags.attach(pr, {});
  pr->add_option("--model", model_path, "model file")->required();
  pr->add_option("--emg", emg_path, "raw EMG CSV")->required();
  pr->add_option("--out", out_path, "prediction CSV")->required();

  auto* info = app.add_subcommand("info", "architecture, cost and training summary of a model");
  info->add_option("--model", model_path, "model file")->required();

  auto* se = app.add_subcommand("sweep-encoding", "test R^2 across encoder widths");
  enc_flags.attach(se, train_keys);
  add_data(se);
  se->add_option("--sizes", sizes, "encoder widths")->delimiter(',')->capture_default_str();
  se->add_option("--seeds", seeds, "training seeds")->delimiter(',')->capture_default_str();
  se->add_option("--out", out_path, "sweep CSV")->required();

  auto* sl = app.add_subcommand("sweep-lambda", "test R^2 across entropy weights");
  lam_flags.attach(sl, train_keys);
  add_data(sl);
  sl->add_option("--lambdas", lambdas, "entropy weights")->delimiter(',')->capture_default_str();
  sl->add_option("--seeds", seeds, "training seeds")->delimiter(',')->capture_default_str();
  sl->add_option("--out", out_path, "sweep CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      cmd_synth(synth_flags.invocation("synth", synth), out_path, out);
    } else if (*pre) {
      cmd_preprocess(pre_flags.invocation("preprocess", pre), emg_path, out_path, out);
    } else if (*tr) {
      std::filesystem::path report = report_path;
      if (report.empty()) report = std::filesystem::path(out_path).replace_extension(".report.csv");
      cmd_train(train_flags.invocation("train", tr), data, out_path, report, out);
    } else if (*ev) {
      cmd_eval(eval_flags.invocation("eval", ev), model_path, data, epsilon, out);
    } else if (*pr) {
      cmd_predict(predict_flags.invocation("predict", pr), model_path, emg_path, out_path, out);
    } else if (*info) {
      cmd_info(model_path, out);
    } else if (*se) {
      cmd_sweep_encoding(enc_flags.invocation("sweep-encoding", se), data, sizes, seeds, out_path, out);
    } else if (*sl) {
      cmd_sweep_lambda(lam_flags.invocation("sweep-lambda", sl), data, lambdas, seeds, out_path, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.is_usage_error() ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace dpars::cli
