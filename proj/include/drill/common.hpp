#pragma once

// Shared low-level utilities: hashing, seed derivation, checksums and
// full-precision text round-tripping for doubles.

#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace drill {

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

// splitmix64, used to derive independent sub-seeds from one run seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view role) {
    return splitmix64(base ^ fnv1a64(role));
}

inline std::mt19937_64 make_rng(std::uint64_t base, std::string_view role) {
    return std::mt19937_64(derive_seed(base, role));
}

// Accumulating content hash; feeds raw bit patterns, so equality of hashes
// tracks bit-identical state.
class Checksum {
public:
    void add(const void* data, std::size_t n) { h_ = fnv1a64(data, n, h_); }
    void add(double v) { add(&v, sizeof v); }
    void add(std::int64_t v) { add(&v, sizeof v); }
    void add(std::uint64_t v) { add(&v, sizeof v); }
    void add(int v) { add(static_cast<std::int64_t>(v)); }
    void add(std::string_view s) {
        add(s.size());
        add(s.data(), s.size());
    }
    void add(const std::vector<double>& v) {
        add(v.size());
        if (!v.empty()) add(v.data(), v.size() * sizeof(double));
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ull;
};

// 17 significant digits round-trip IEEE doubles exactly.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("bad numeric literal: '" + s + "'");
    }
}

}  // namespace drill
