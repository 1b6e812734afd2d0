#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svicli/json_io.hpp"

namespace svi::cli {

// FNV-1a over the byte string, as 16 lowercase hex digits.
std::string fnv1a64_hex(const std::string& bytes);

struct OutputRecord {
  std::string path;    // "-" for the standard-output payload
  std::string digest;  // fnv1a64 of the emitted bytes
};

// Run manifest: what ran, with which configuration and seed, which tool
// version, how long it took, and digests of everything written. The duration
// necessarily varies between runs, which is why the manifest is not part of
// the byte-determinism contract of the payload outputs.
json make_manifest(const std::string& subcommand, json config_echo, std::uint64_t seed,
                   const std::vector<OutputRecord>& outputs, double duration_seconds);

}  // namespace svi::cli
