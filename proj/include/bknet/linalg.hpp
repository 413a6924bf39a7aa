#pragma once

#include "bknet/tensor.hpp"

namespace bknet {

// Symmetric eigendecomposition result. Column i of eigenvectors pairs
// with eigenvalues[i]; eigenvalues sorted non-increasing.
template <class T>
struct EigenSystemT {
    int dim = 0;
    std::vector<T> eigenvalues;
    TensorT<T> eigenvectors;  // dim x dim
};

using EigenSystem = EigenSystemT<float>;
using EigenSystem64 = EigenSystemT<double>;

// C = A * B for rank-2 tensors, inner dimensions must agree.
template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);

// Cyclic Jacobi on a symmetric matrix (m <= 64). Rotations run until the
// off-diagonal Frobenius norm falls below 1e-10 * ||W||_F or 100 sweeps,
// whichever first; non-convergence throws. Internally iterates in double
// for either instantiation, since the stopping threshold is below float
// resolution. Ties in the descending sort keep original column order.
template <class T>
EigenSystemT<T> sym_eig(const TensorT<T>& w);

}  // namespace bknet
