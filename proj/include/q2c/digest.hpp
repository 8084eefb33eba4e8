#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace q2c {

// Hex-encoded SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);

// Hex-encoded SHA-256 of a file's contents. Throws q2c::Error on I/O failure.
std::string sha256_file(const std::string& path);

// Derives a step-specific seed from a base seed and a step name, so that one
// top-level seed fans out into independent, stable streams. The derivation is
// the first 8 bytes of SHA-256(name), little-endian, XORed with the base.
std::uint64_t derive_seed(std::uint64_t base, std::string_view name);

}  // namespace q2c
