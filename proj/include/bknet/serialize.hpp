#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bknet/network.hpp"

namespace bknet {

struct ModelIoError : std::runtime_error {
    enum class Kind { Io, Version, Checksum, Parse };
    Kind kind;
    ModelIoError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// BKNET v1 container: 8-byte magic "BKNETv01", u32 header length, UTF-8
// JSON header declaring layers/shapes/d/skips and payload order, raw
// little-endian f32 payloads, bit-packed prune masks, trailing CRC32 of
// everything before it. save/load round-trips bit-identically.
void save_model(const Network& net, const std::string& path);
Network load_model(const std::string& path);

std::vector<std::uint8_t> serialize_model(const Network& net);
Network deserialize_model(const std::vector<std::uint8_t>& bytes);

std::uint32_t crc32(const std::uint8_t* data, std::size_t len);

}  // namespace bknet
