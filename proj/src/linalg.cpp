#include "bknet/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bknet {

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul: rank-2 tensors required");
    if (a.shape[1] != b.shape[0])
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape) +
                                    " x " + shape_str(b.shape));
    const int m = a.shape[0], n = a.shape[1], p = b.shape[1];
    TensorT<T> c({m, p}, T(0));
    for (int i = 0; i < m; ++i) {
        const T* arow = &a.data[std::size_t(i) * n];
        T* crow = &c.data[std::size_t(i) * p];
        for (int k = 0; k < n; ++k) {
            const T aik = arow[k];
            if (aik == T(0)) continue;
            const T* brow = &b.data[std::size_t(k) * p];
            for (int j = 0; j < p; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

namespace {

void check_symmetric(const std::vector<double>& w, int m) {
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            if (std::abs(w[std::size_t(i) * m + j] - w[std::size_t(j) * m + i]) > 1e-6)
                throw std::invalid_argument("sym_eig: input not symmetric within 1e-6");
}

double off_diag_sq(const std::vector<double>& a, int m) {
    double s = 0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (i != j) s += a[std::size_t(i) * m + j] * a[std::size_t(i) * m + j];
    return s;
}

}  // namespace

template <class T>
EigenSystemT<T> sym_eig(const TensorT<T>& w) {
    if (w.rank() != 2 || w.shape[0] != w.shape[1])
        throw std::invalid_argument("sym_eig: square matrix required");
    const int m = w.shape[0];
    if (m > 64) throw std::invalid_argument("sym_eig: dimension limited to 64");

    std::vector<double> a(std::size_t(m) * m);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = double(w.data[i]);
    check_symmetric(a, m);

    std::vector<double> v(std::size_t(m) * m, 0.0);
    for (int i = 0; i < m; ++i) v[std::size_t(i) * m + i] = 1.0;

    double total_sq = 0;
    for (double x : a) total_sq += x * x;
    const double frob = std::sqrt(total_sq);
    const double stop = 1e-10 * frob;

    const int max_sweeps = 100;
    bool converged = frob == 0.0;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        for (int p = 0; p < m - 1; ++p) {
            for (int q = p + 1; q < m; ++q) {
                double apq = a[std::size_t(p) * m + q];
                if (apq == 0.0) continue;
                double app = a[std::size_t(p) * m + p];
                double aqq = a[std::size_t(q) * m + q];
                double theta = 0.5 * (aqq - app) / apq;
                double t = 1.0 / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                if (theta < 0) t = -t;
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;

                for (int k = 0; k < m; ++k) {
                    double akp = a[std::size_t(k) * m + p];
                    double akq = a[std::size_t(k) * m + q];
                    a[std::size_t(k) * m + p] = c * akp - s * akq;
                    a[std::size_t(k) * m + q] = s * akp + c * akq;
                }
                for (int k = 0; k < m; ++k) {
                    double apk = a[std::size_t(p) * m + k];
                    double aqk = a[std::size_t(q) * m + k];
                    a[std::size_t(p) * m + k] = c * apk - s * aqk;
                    a[std::size_t(q) * m + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < m; ++k) {
                    double vkp = v[std::size_t(k) * m + p];
                    double vkq = v[std::size_t(k) * m + q];
                    v[std::size_t(k) * m + p] = c * vkp - s * vkq;
                    v[std::size_t(k) * m + q] = s * vkp + c * vkq;
                }
            }
        }
        if (std::sqrt(off_diag_sq(a, m)) <= stop) converged = true;
    }
    if (!converged) throw std::runtime_error("sym_eig: no convergence after 100 sweeps");

    std::vector<int> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
        return a[std::size_t(i) * m + i] > a[std::size_t(j) * m + j];
    });

    EigenSystemT<T> es;
    es.dim = m;
    es.eigenvalues.resize(std::size_t(m));
    es.eigenvectors = TensorT<T>({m, m});
    for (int col = 0; col < m; ++col) {
        int src = order[std::size_t(col)];
        es.eigenvalues[std::size_t(col)] = T(a[std::size_t(src) * m + src]);
        for (int row = 0; row < m; ++row)
            es.eigenvectors.at(row, col) = T(v[std::size_t(row) * m + src]);
    }
    return es;
}

template TensorT<float> matmul<float>(const TensorT<float>&, const TensorT<float>&);
template TensorT<double> matmul<double>(const TensorT<double>&, const TensorT<double>&);
template EigenSystemT<float> sym_eig<float>(const TensorT<float>&);
template EigenSystemT<double> sym_eig<double>(const TensorT<double>&);

}  // namespace bknet
