#include <cstdlib>
#include <ctime>

#include "dpars/manifest.hpp"

namespace dpars {

std::string tool_version() { return DPARS_VERSION; }

RunManifest RunManifest::make(std::string command) {
  RunManifest m;
  m.command = std::move(command);
  m.tool_version = dpars::tool_version();
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    char* end = nullptr;
    const long long secs = std::strtoll(epoch, &end, 10);
    if (end && *end == '\0' && secs >= 0) {
      const std::time_t t = static_cast<std::time_t>(secs);
      std::tm utc{};
      gmtime_r(&t, &utc);
      char buf[32];
      std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
      m.timestamp = buf;
    }
  }
  return m;
}

std::vector<std::string> RunManifest::comment_lines() const {
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + v[i];
    return s;
  };
  return {
      "command: " + command,
      "config_files: " + join(config_files),
      "seed: " + std::to_string(seed),
      "inputs: " + join(inputs),
      "outputs: " + join(outputs),
      "tool_version: " + tool_version,
      "timestamp: " + timestamp,
  };
}

}  // namespace dpars
