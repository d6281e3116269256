#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

#include "icai/error.hpp"
#include "icai/hash.hpp"

namespace icai {

// Seeded random source with distributions implemented in terms of raw
// mt19937_64 output. The standard <random> distributions are
// implementation-defined, which would break byte-identical artifact replays
// across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double next_unit() { return (gen_() >> 11) * 0x1.0p-53; }

    // Uniform in [0, n). Rejection sampling, no modulo bias.
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw ValidationError("uniform_index: n must be positive");
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return static_cast<std::size_t>(v % n);
    }

    // Standard normal via Box-Muller (polar form would consume a variable
    // number of draws; the basic form keeps consumption predictable).
    double gaussian() {
        double u1 = next_unit();
        while (u1 <= 0.0) u1 = next_unit();
        double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 gen_;
};

// Per-stage seed derived from one root seed and a stage label, so stages are
// independently reproducible.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
    return sha256_u64(std::to_string(root) + "/" + std::string(label));
}

inline std::vector<std::size_t> shuffled_indices(Rng& rng, std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    return idx;
}

inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n,
                                                           std::size_t k) {
    if (k > n) throw ValidationError("sample_without_replacement: k > n");
    auto idx = shuffled_indices(rng, n);
    idx.resize(k);
    return idx;
}

// Sequential weighted draws without replacement, probability proportional to
// weight at each draw. Weights must be positive.
inline std::vector<std::size_t> weighted_sample_without_replacement(
    Rng& rng, const std::vector<double>& weights, std::size_t k) {
    if (k > weights.size()) throw ValidationError("weighted sample: k > population");
    for (double w : weights)
        if (!(w > 0.0)) throw ValidationError("weighted sample: weights must be positive");
    std::vector<std::size_t> remaining(weights.size());
    for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    while (out.size() < k) {
        double total = 0.0;
        for (std::size_t i : remaining) total += weights[i];
        double target = rng.next_unit() * total;
        std::size_t pick = remaining.size() - 1;
        double acc = 0.0;
        for (std::size_t j = 0; j < remaining.size(); ++j) {
            acc += weights[remaining[j]];
            if (target < acc) {
                pick = j;
                break;
            }
        }
        out.push_back(remaining[pick]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return out;
}

}  // namespace icai
