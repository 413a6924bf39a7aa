#include "bknet/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bknet {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
        if (e < 0) throw std::invalid_argument("tensor extent must be non-negative");
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

template <class T>
TensorT<T>::TensorT(std::vector<int> s, T fill_v) : shape(std::move(s)) {
    if (shape.empty() || shape.size() > 4)
        throw std::invalid_argument("tensor rank must be 1..4, got " + shape_str(shape));
    data.assign(shape_numel(shape), fill_v);
}

template <class T>
bool TensorT<T>::all_finite() const {
    for (T v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

template <class T>
void TensorT<T>::fill(T v) {
    for (T& x : data) x = v;
}

template <class T>
TensorT<T> TensorT<T>::reshaped(std::vector<int> new_shape) const {
    if (shape_numel(new_shape) != numel())
        throw std::invalid_argument("reshape " + shape_str(shape) + " -> " + shape_str(new_shape) +
                                    " changes element count");
    TensorT out;
    out.shape = std::move(new_shape);
    out.data = data;
    return out;
}

template <class T>
void add_inplace(TensorT<T>& dst, const TensorT<T>& src) {
    if (!dst.same_shape(src)) throw std::invalid_argument("add: shape mismatch");
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

template <class T>
void scale_inplace(TensorT<T>& t, T a) {
    for (T& x : t.data) x *= a;
}

template <class T>
void axpy_inplace(TensorT<T>& dst, T a, const TensorT<T>& src) {
    if (!dst.same_shape(src)) throw std::invalid_argument("axpy: shape mismatch");
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += a * src.data[i];
}

template <class T>
T sum(const TensorT<T>& t) {
    T s = 0;
    for (T v : t.data) s += v;
    return s;
}

template <class T>
T abs_sum(const TensorT<T>& t) {
    T s = 0;
    for (T v : t.data) s += std::abs(v);
    return s;
}

template <class T>
T sq_sum(const TensorT<T>& t) {
    T s = 0;
    for (T v : t.data) s += v * v;
    return s;
}

template <class T>
T max_abs(const TensorT<T>& t) {
    T m = 0;
    for (T v : t.data) m = std::max(m, std::abs(v));
    return m;
}

template <class T>
double rel_diff(const TensorT<T>& a, const TensorT<T>& b, double floor) {
    if (!a.same_shape(b)) throw std::invalid_argument("rel_diff: shape mismatch");
    double num = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        num = std::max(num, std::abs(double(a.data[i]) - double(b.data[i])));
    double den = std::max({double(max_abs(a)), double(max_abs(b)), floor});
    return num / den;
}

template struct TensorT<float>;
template struct TensorT<double>;

template void add_inplace<float>(TensorT<float>&, const TensorT<float>&);
template void add_inplace<double>(TensorT<double>&, const TensorT<double>&);
template void scale_inplace<float>(TensorT<float>&, float);
template void scale_inplace<double>(TensorT<double>&, double);
template void axpy_inplace<float>(TensorT<float>&, float, const TensorT<float>&);
template void axpy_inplace<double>(TensorT<double>&, double, const TensorT<double>&);
template float sum<float>(const TensorT<float>&);
template double sum<double>(const TensorT<double>&);
template float abs_sum<float>(const TensorT<float>&);
template double abs_sum<double>(const TensorT<double>&);
template float sq_sum<float>(const TensorT<float>&);
template double sq_sum<double>(const TensorT<double>&);
template float max_abs<float>(const TensorT<float>&);
template double max_abs<double>(const TensorT<double>&);
template double rel_diff<float>(const TensorT<float>&, const TensorT<float>&, double);
template double rel_diff<double>(const TensorT<double>&, const TensorT<double>&, double);

}  // namespace bknet
