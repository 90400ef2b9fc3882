#pragma once

// Binary checkpoint: magic bytes, format version, a JSON metadata block
// (config, vocabulary, lexicon), then (name, shape, raw float64) records for
// every parameter and buffer. Values are stored little-endian bit-for-bit.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "kattn/model.hpp"

namespace kattn {

inline constexpr char kCheckpointMagic[8] = {'K', 'A', 'T', 'T', 'N', 'C', 'K', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const RelationModel& model);
/// Rebuilds the model from the stored metadata and restores every tensor.
/// Throws DataError on a bad header, missing or unexpected tensors, or shape
/// mismatches.
std::unique_ptr<RelationModel> load_checkpoint(const std::filesystem::path& path);

}  // namespace kattn
