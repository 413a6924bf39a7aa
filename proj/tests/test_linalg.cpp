#include <cmath>
#include <stdexcept>

#include "bknet/linalg.hpp"
#include "bknet/rng.hpp"
#include "doctest.h"

using namespace bknet;

namespace {

// Independent triple-loop product used as the oracle for matmul.
template <class T>
TensorT<T> matmul_oracle(const TensorT<T>& a, const TensorT<T>& b) {
    TensorT<T> c({a.shape[0], b.shape[1]}, T(0));
    for (int i = 0; i < a.shape[0]; ++i)
        for (int j = 0; j < b.shape[1]; ++j) {
            T acc = 0;
            for (int k = 0; k < a.shape[1]; ++k) acc += a.at(i, k) * b.at(k, j);
            c.at(i, j) = acc;
        }
    return c;
}

Tensor64 random_psd(int m, Rng& rng) {
    Tensor64 g({m, m});
    fill_gaussian(g, rng);
    Tensor64 gt({m, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) gt.at(i, j) = g.at(j, i);
    return matmul(gt, g);
}

}  // namespace

TEST_CASE("matmul identity and scalar case") {
    Tensor a({2, 3});
    a.data = {1, 2, 3, 4, 5, 6};
    Tensor eye({3, 3}, 0.0f);
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0f;
    Tensor c = matmul(a, eye);
    CHECK(c.data == a.data);

    Tensor x({1, 1});
    x.data = {2.0f};
    Tensor y({1, 1});
    y.data = {3.0f};
    CHECK(matmul(x, y).data[0] == doctest::Approx(6.0f));
}

TEST_CASE("matmul dimension mismatch throws") {
    Tensor a({2, 3}), b({4, 2});
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("matmul matches triple-loop oracle on random 5x9 x 9x5") {
    Rng rng(11);
    Tensor a({5, 9}), b({9, 5});
    fill_gaussian(a, rng);
    fill_gaussian(b, rng);
    CHECK(rel_diff(matmul(a, b), matmul_oracle(a, b)) < 1e-6);
}

TEST_CASE("sym_eig of identity gives all ones") {
    Tensor w({9, 9}, 0.0f);
    for (int i = 0; i < 9; ++i) w.at(i, i) = 1.0f;
    EigenSystem es = sym_eig(w);
    for (float ev : es.eigenvalues) CHECK(ev == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("sym_eig of diag(3,1)") {
    Tensor w({2, 2}, 0.0f);
    w.at(0, 0) = 3.0f;
    w.at(1, 1) = 1.0f;
    EigenSystem es = sym_eig(w);
    CHECK(es.eigenvalues[0] == doctest::Approx(3.0));
    CHECK(es.eigenvalues[1] == doctest::Approx(1.0));
    CHECK(std::abs(es.eigenvectors.at(0, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(es.eigenvectors.at(1, 1)) == doctest::Approx(1.0));
    CHECK(std::abs(es.eigenvectors.at(1, 0)) == doctest::Approx(0.0));
}

TEST_CASE("sym_eig reconstructs random PSD matrices") {
    Rng rng(101);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor64 w = random_psd(9, rng);
        EigenSystem64 es = sym_eig(w);

        // eigenvalues sorted descending, PSD within tolerance
        for (int i = 1; i < 9; ++i) CHECK(es.eigenvalues[i - 1] >= es.eigenvalues[i]);
        for (double ev : es.eigenvalues) CHECK(ev >= -1e-6 * std::abs(es.eigenvalues[0]));

        // orthonormal columns
        for (int i = 0; i < 9; ++i)
            for (int j = 0; j < 9; ++j) {
                double dot = 0;
                for (int r = 0; r < 9; ++r)
                    dot += es.eigenvectors.at(r, i) * es.eigenvectors.at(r, j);
                CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) <= 1e-5);
            }

        // V diag(L) V^T == W
        Tensor64 vl({9, 9});
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 9; ++c) vl.at(r, c) = es.eigenvectors.at(r, c) * es.eigenvalues[c];
        Tensor64 vt({9, 9});
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 9; ++c) vt.at(r, c) = es.eigenvectors.at(c, r);
        Tensor64 rec = matmul(vl, vt);
        CHECK(rel_diff(rec, w) < 1e-6);

        // eigenvalue sum equals trace
        double tr = 0, ev_sum = 0;
        for (int i = 0; i < 9; ++i) tr += w.at(i, i);
        for (double ev : es.eigenvalues) ev_sum += ev;
        CHECK(std::abs(ev_sum - tr) <= 1e-5 * std::abs(tr));
    }
}

TEST_CASE("sym_eig rejects asymmetric input") {
    Tensor w({2, 2});
    w.data = {1.0f, 0.5f, 0.0f, 1.0f};
    CHECK_THROWS_AS(sym_eig(w), std::invalid_argument);
}

TEST_CASE("sym_eig rejects oversized input") {
    Tensor w({65, 65}, 0.0f);
    CHECK_THROWS_AS(sym_eig(w), std::invalid_argument);
}
