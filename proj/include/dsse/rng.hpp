#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dsse {

// Counter-based stream derivation: each (seed, counters...) tuple maps to an
// independent generator, so results do not depend on evaluation order.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> counters) {
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t c : counters) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    return h;
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> counters) {
    return std::mt19937_64(stream_seed(seed, counters));
}

// Stream purposes, used as the last counter.
enum class Stream : std::uint64_t { load = 1, measurement = 2, pseudo = 3 };

}  // namespace dsse
