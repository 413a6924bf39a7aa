#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace bknet {

// Dense row-major numeric array of rank 1..4. Activations use NCHW,
// conv weights (c_out, c_in, k, k). Instantiated for float (deployment
// width) and double (verification width).
template <class T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> s, T fill = T(0));

    int rank() const { return static_cast<int>(shape.size()); }
    std::size_t numel() const { return data.size(); }

    int extent(int axis) const { return shape[static_cast<std::size_t>(axis)]; }

    T& at(int i) { return data[static_cast<std::size_t>(i)]; }
    const T& at(int i) const { return data[static_cast<std::size_t>(i)]; }

    // rank-2 (rows, cols)
    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
    const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

    // rank-3
    T& at(int a, int b, int c) {
        return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
    }
    const T& at(int a, int b, int c) const {
        return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
    }

    // rank-4
    T& at(int n, int c, int h, int w) {
        return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    const T& at(int n, int c, int h, int w) const {
        return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    bool same_shape(const TensorT& other) const { return shape == other.shape; }
    bool all_finite() const;

    void fill(T v);
    TensorT reshaped(std::vector<int> new_shape) const;

    template <class U>
    TensorT<U> cast() const {
        TensorT<U> out(shape);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

template <class T>
void add_inplace(TensorT<T>& dst, const TensorT<T>& src);
template <class T>
void scale_inplace(TensorT<T>& t, T a);
// dst += a * src
template <class T>
void axpy_inplace(TensorT<T>& dst, T a, const TensorT<T>& src);

template <class T>
T sum(const TensorT<T>& t);
template <class T>
T abs_sum(const TensorT<T>& t);
template <class T>
T sq_sum(const TensorT<T>& t);
template <class T>
T max_abs(const TensorT<T>& t);

// max |a-b| / max(max|a|, max|b|, floor); zero tensors compare equal.
template <class T>
double rel_diff(const TensorT<T>& a, const TensorT<T>& b, double floor = 1e-30);

}  // namespace bknet
