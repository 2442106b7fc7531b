// rng.hpp - deterministic random streams and substream derivation.
//
// Reproducibility contract (part of the public interface, do not change):
//   mix64(z) is the SplitMix64 finalizer:
//     z += 0x9E3779B97F4A7C15
//     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//     z ^= (z >> 31)
//   substream seed for labels (trial, layer, role):
//     mix64(mix64(mix64(mix64(master) ^ trial) ^ layer) ^ role)
//   a stream emits the SplitMix64 sequence from its seed; uniforms take the
//   top 53 bits, normals come from Box-Muller on consecutive uniforms.
// Any implementation following these rules reproduces identical noise.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>

namespace spheredyn {

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Role tags for substream derivation.
namespace role {
constexpr std::uint64_t init = 1;       // initial cloud of a trial
constexpr std::uint64_t mlp = 2;        // per-layer MLP parameters
constexpr std::uint64_t field = 3;      // per-layer common-noise field
constexpr std::uint64_t field_b = 4;    // second field draw (refinement pairs)
constexpr std::uint64_t direction = 5;  // tangent directions (Lyapunov gap)
constexpr std::uint64_t scratch = 6;    // miscellaneous per-trial draws
}  // namespace role

class RngStream {
public:
    RngStream() : state_(0) {}
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return mix64(state_++); }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1]; safe as a log argument.
    double next_double_open() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = next_double_open();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t raw_state() const { return state_; }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t trial,
                                 std::uint64_t layer, std::uint64_t role_tag) {
    return mix64(mix64(mix64(mix64(master) ^ trial) ^ layer) ^ role_tag);
}

inline RngStream derive_stream(std::uint64_t master, std::uint64_t trial,
                               std::uint64_t layer, std::uint64_t role_tag) {
    return RngStream(derive_seed(master, trial, layer, role_tag));
}

// Key for position-attached noise: fold the bit patterns of a point's
// coordinates into a stream key. Noise keyed this way travels with the
// point, which is what makes field draws exchangeable under token
// permutation.
inline std::uint64_t position_key(std::uint64_t stream_key, const double* coords,
                                  int dim) {
    std::uint64_t h = stream_key;
    for (int k = 0; k < dim; ++k) {
        std::uint64_t bits;
        std::memcpy(&bits, &coords[k], sizeof(bits));
        h = mix64(h ^ bits);
    }
    return h;
}

}  // namespace spheredyn
