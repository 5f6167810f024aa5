#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace topomix {

// Deterministic substream generator. Every consumer of randomness derives
// its own stream from (root seed, label, index), so adding a channel or a
// component never perturbs the draws of another.
class SeedStream {
public:
    SeedStream(std::uint64_t root, std::string_view label, std::uint64_t index = 0)
        : gen_(mix(root, label, index)) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; implementation-pinned so the same
    // seed reproduces bit-identical values on any platform.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    static std::uint64_t mix(std::uint64_t root, std::string_view label, std::uint64_t index) {
        // FNV-1a over the root, the label bytes, and the index, then a
        // splitmix64 finalizer to spread the bits.
        std::uint64_t h = 1469598103934665603ull;
        auto eat = [&h](std::uint64_t v) {
            for (int b = 0; b < 8; ++b) {
                h ^= (v >> (8 * b)) & 0xffu;
                h *= 1099511628211ull;
            }
        };
        eat(root);
        for (char c : label) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        eat(index);
        h += 0x9e3779b97f4a7c15ull;
        h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
        h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
        return h ^ (h >> 31);
    }

    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace topomix
