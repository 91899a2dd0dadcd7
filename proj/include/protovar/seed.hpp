#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

namespace protovar {

using Rng = std::mt19937_64;

// SHA-256 of an arbitrary byte buffer.
inline std::array<std::uint8_t, 32> sha256(const std::uint8_t* data, std::size_t size) {
    std::array<std::uint8_t, 32> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data, size, digest.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
        throw std::runtime_error("SHA-256 digest failed");
    return digest;
}

namespace detail {
inline void put_be64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8)
        out.push_back(static_cast<std::uint8_t>(v >> shift));
}
}  // namespace detail

// Task seed: first 8 bytes (big-endian) of
// SHA-256(master as be64 || label bytes || index as be64).
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index) {
    std::vector<std::uint8_t> msg;
    msg.reserve(16 + label.size());
    detail::put_be64(msg, master);
    msg.insert(msg.end(), label.begin(), label.end());
    detail::put_be64(msg, index);
    const auto digest = sha256(msg.data(), msg.size());
    std::uint64_t seed = 0;
    for (int i = 0; i < 8; ++i)
        seed = (seed << 8) | digest[i];
    return seed;
}

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

}  // namespace protovar
