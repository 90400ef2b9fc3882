#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "kattn/config.hpp"

namespace kattn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNotSi = 4;
inline constexpr int kExitUnknownExample = 5;

/// Version string baked in at configure time (git describe when available).
const char* version();

std::string sha256_file(const std::filesystem::path& path);

struct InputDigest {
  std::string path;
  std::uint64_t bytes = 0;
  std::string sha256;
};

/// Everything needed to rerun a training command; written before training.
struct RunManifest {
  ModelConfig config;
  std::vector<std::string> ablations;
  std::vector<InputDigest> inputs;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  std::string version;

  std::string to_json() const;
};

/// Runs the kattn command line. Output and diagnostics go to the given streams.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kattn::cli
