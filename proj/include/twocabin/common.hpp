#pragma once
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>

namespace twocabin {

inline constexpr std::string_view kVersion = "1.0.0";

/// Thrown when a quadrature or root-finding routine cannot reach the
/// requested tolerance; carries the error bound that was achieved.
class NumericalError : public std::runtime_error {
  public:
    NumericalError(const std::string& what, double achieved)
        : std::runtime_error(what), achieved_error(achieved) {}
    double achieved_error;
};

// FNV-1a, used for content hashes of solved models and library files.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t hash_u64(std::uint64_t x, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(&x, sizeof(x), h);
}

inline std::uint64_t hash_double(double x, std::uint64_t h = 0xcbf29ce484222325ull) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    return hash_u64(bits, h);
}

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace twocabin
