#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nslora {

// 64-bit FNV-1a. Used for token bucketing, checksums and the stateless
// per-(sample, epoch) random streams, so it must stay stable across
// platforms and runs.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0) {
    std::uint64_t h = 14695981039346656037ull ^ seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t stable_hash(std::string_view token, std::uint64_t seed) {
    return fnv1a64(token, seed * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull);
}

// Uniform in [0, 1) from a hash value.
inline double u01_from_hash(std::uint64_t h) {
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

inline std::uint64_t combine_hash(std::uint64_t a, std::uint64_t b) {
    a ^= b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2);
    return a;
}

// Checksum of a double vector over its exact bit patterns.
inline std::uint64_t checksum_doubles(const std::vector<double>& v) {
    std::uint64_t h = 14695981039346656037ull;
    for (double d : v) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(d));
        __builtin_memcpy(&bits, &d, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    }
    return h;
}

inline std::uint64_t checksum_string(std::string_view s) { return fnv1a64(s); }

}  // namespace nslora
