#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace socbal {

// 64-bit FNV-1a, used for config hashing and seed stream derivation.
inline uint64_t fnv1a64(std::string_view data, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derives a named sub-seed from a master seed. The derivation depends only on
// (master, stream, index), never on how many other streams exist, so runs that
// differ in agent count still hand identical streams to the agents they share.
inline uint64_t derive_seed(uint64_t master, std::string_view stream, uint64_t index = 0) {
    uint64_t h = fnv1a64(stream);
    return splitmix64(master ^ splitmix64(h + 0x632be59bd9b4e019ull * (index + 1)));
}

inline std::mt19937_64 make_engine(uint64_t master, std::string_view stream, uint64_t index = 0) {
    return std::mt19937_64(derive_seed(master, stream, index));
}

} // namespace socbal
