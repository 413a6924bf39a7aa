#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bknet {

// SHA-1 digest as lowercase hex; used for artifact content hashes.
std::string sha1_hex(const std::uint8_t* data, std::size_t len);
std::string sha1_hex(const std::vector<std::uint8_t>& bytes);
std::string sha1_file(const std::string& path);

}  // namespace bknet
