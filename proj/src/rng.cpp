#include "bknet/rng.hpp"

#include <cmath>

namespace bknet {

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    std::uint64_t h = fnv1a64(tag);
    // splitmix-style finalizer over the combination
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull + h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

template <class T>
void fill_gaussian(TensorT<T>& t, Rng& rng, double mean, double stddev) {
    for (T& v : t.data) v = static_cast<T>(rng.gaussian(mean, stddev));
}

template <class T>
void fill_uniform(TensorT<T>& t, Rng& rng, double lo, double hi) {
    for (T& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
}

template void fill_gaussian<float>(TensorT<float>&, Rng&, double, double);
template void fill_gaussian<double>(TensorT<double>&, Rng&, double, double);
template void fill_uniform<float>(TensorT<float>&, Rng&, double, double);
template void fill_uniform<double>(TensorT<double>&, Rng&, double, double);

}  // namespace bknet
