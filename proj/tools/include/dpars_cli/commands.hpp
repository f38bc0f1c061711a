#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dpars/kv_config.hpp"

namespace dpars::cli {

/// Merged configuration for one command: every `--config` file in order,
/// then explicit `--key value` flags on top.
struct Invocation {
  std::string command;
  KvConfig kv;
  std::vector<std::string> config_files;
};

struct DataPaths {
  std::filesystem::path emg;
  std::filesystem::path angles;
};

void cmd_synth(const Invocation& inv, const std::filesystem::path& out_dir, std::ostream& out);
void cmd_preprocess(const Invocation& inv, const std::filesystem::path& emg, const std::filesystem::path& out_csv,
                    std::ostream& out);
void cmd_train(const Invocation& inv, const DataPaths& data, const std::filesystem::path& model_out,
               const std::filesystem::path& report_out, std::ostream& out);
void cmd_eval(const Invocation& inv, const std::filesystem::path& model, const DataPaths& data, double epsilon,
              std::ostream& out);
void cmd_predict(const Invocation& inv, const std::filesystem::path& model, const std::filesystem::path& emg,
                 const std::filesystem::path& out_csv, std::ostream& out);
void cmd_info(const std::filesystem::path& model, std::ostream& out);
void cmd_sweep_encoding(const Invocation& inv, const DataPaths& data, const std::vector<std::size_t>& sizes,
                        const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_csv,
                        std::ostream& out);
void cmd_sweep_lambda(const Invocation& inv, const DataPaths& data, const std::vector<double>& lambdas,
                      const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_csv,
                      std::ostream& out);

/// Parses argv, dispatches, and maps failures to exit codes: 0 success,
/// 1 runtime or numerical failure, 2 usage or configuration error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dpars::cli
