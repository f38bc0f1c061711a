#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dpars {

/// Provenance block embedded in every artifact the tools write.
struct RunManifest {
  std::string command;
  std::vector<std::string> config_files;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string tool_version;
  /// ISO-8601 UTC from SOURCE_DATE_EPOCH, or empty so reruns stay byte-identical.
  std::string timestamp;

  /// Fills tool_version and timestamp from the build and environment.
  static RunManifest make(std::string command);

  /// `key: value` lines without the leading '#'.
  std::vector<std::string> comment_lines() const;

  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

std::string tool_version();

}  // namespace dpars
