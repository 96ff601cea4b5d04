#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "resobj/model.hpp"

namespace resobj {

struct Checkpoint {
    ModelConfig config;
    ModelParameters params;
    std::uint64_t iteration = 0;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// "ROBJCKPT", u32 version, u32 metadata length, JSON metadata (config,
/// iteration, tensor names and shapes), then every tensor as little-endian
/// float32 in metadata order. Values are rounded to float32 on write.
void write_checkpoint(std::ostream& os, const Checkpoint& checkpoint);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws FormatError on bad magic, unsupported version, malformed metadata or
/// truncation; nothing is returned on failure.
Checkpoint read_checkpoint(std::istream& is);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters of `checkpoint` checked against the layout `config` expects.
/// A missing, extra or differently shaped tensor raises FormatError naming it.
ModelParameters parameters_for(const Checkpoint& checkpoint, const ModelConfig& config);

/// Round every value to float32, as a save/load cycle would.
void quantize_to_f32(ModelParameters& params);

}  // namespace resobj
