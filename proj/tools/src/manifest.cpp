#include "svicli/manifest.hpp"

#include "svi/version.hpp"

namespace svi::cli {

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string hex(16, '0');
  for (int i = 15; i >= 0; --i) {
    hex[static_cast<std::size_t>(i)] = digits[hash & 0xF];
    hash >>= 4;
  }
  return hex;
}

json make_manifest(const std::string& subcommand, json config_echo, std::uint64_t seed,
                   const std::vector<OutputRecord>& outputs, double duration_seconds) {
  json manifest = json::object();
  manifest["subcommand"] = subcommand;
  manifest["config"] = std::move(config_echo);
  manifest["seed"] = seed;
  manifest["version"] = version_string;
  manifest["duration_seconds"] = duration_seconds;
  json outs = json::array();
  for (const OutputRecord& record : outputs) {
    outs.push_back({{"path", record.path}, {"fnv1a64", record.digest}});
  }
  manifest["outputs"] = std::move(outs);
  return manifest;
}

}  // namespace svi::cli
