#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "bknet/tensor.hpp"

namespace bknet {

// Deterministic RNG wrapper. Distributions are implemented here rather
// than with std:: distributions so that streams are reproducible across
// standard library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return engine_() % n; }

    // Box-Muller
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925287 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    template <class V>
    void shuffle(std::vector<V>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a, used to derive independent per-phase seed streams from a run seed.
std::uint64_t fnv1a64(std::string_view s);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

template <class T>
void fill_gaussian(TensorT<T>& t, Rng& rng, double mean = 0.0, double stddev = 1.0);
template <class T>
void fill_uniform(TensorT<T>& t, Rng& rng, double lo, double hi);

}  // namespace bknet
