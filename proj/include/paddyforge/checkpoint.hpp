#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "paddyforge/nn.hpp"

namespace pf {

struct CheckpointMeta {
    std::uint64_t epochs = 0;
    std::string config_hash;
    std::uint64_t seed = 0;
};

struct LoadedCheckpoint {
    Network net;  // trainable flags reset to all-trainable, Full32 working
    std::vector<std::string> classes;
    CheckpointMeta meta;
};

// On-disk layout: 8-byte magic "PDYFORGE", u16 little-endian format version,
// u32 little-endian header length, UTF-8 JSON header (architecture, shapes,
// class names, metadata), then each parameter's Full32 master as raw
// little-endian floats in layer order. Round-trips masters bit-exactly.
void save_checkpoint(const Network& net, const std::vector<std::string>& classes,
                     const CheckpointMeta& meta, const std::filesystem::path& path);

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pf
