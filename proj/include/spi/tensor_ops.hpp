#pragma once

#include <cmath>
#include <stdexcept>

#include "spi/types.hpp"

namespace spi {

// Stacks the columns of m top to bottom.
inline Vector vec(const Matrix& m) {
    return Eigen::Map<const Vector>(m.data(), m.size());
}

// Half-vectorization of a symmetric matrix: upper triangle traversed
// row-major, off-diagonal entries doubled. Pairs with vecv() so that
// dot(vecs(P), vecv(x)) == x' P x.
inline Vector vecs(const Matrix& s) {
    if (s.rows() != s.cols()) {
        throw std::invalid_argument("vecs: matrix must be square");
    }
    const Index a = s.rows();
    Vector out(a * (a + 1) / 2);
    Index idx = 0;
    for (Index i = 0; i < a; ++i) {
        out(idx++) = s(i, i);
        for (Index j = i + 1; j < a; ++j) {
            out(idx++) = 2.0 * s(i, j);
        }
    }
    return out;
}

// Ordered pairwise products v_i v_j for i <= j, row-major over (i, j).
inline Vector vecv(const Vector& v) {
    const Index a = v.size();
    Vector out(a * (a + 1) / 2);
    Index idx = 0;
    for (Index i = 0; i < a; ++i) {
        for (Index j = i; j < a; ++j) {
            out(idx++) = v(i) * v(j);
        }
    }
    return out;
}

// Inverse of vecs: rebuilds the symmetric matrix, halving the packed
// off-diagonal entries. The length must be triangular, a(a+1)/2.
inline Matrix mat_from_vecs(const Vector& w) {
    const auto len = static_cast<double>(w.size());
    const Index a = static_cast<Index>(std::llround((std::sqrt(8.0 * len + 1.0) - 1.0) / 2.0));
    if (a * (a + 1) / 2 != w.size()) {
        throw std::invalid_argument("mat_from_vecs: length is not triangular");
    }
    Matrix out(a, a);
    Index idx = 0;
    for (Index i = 0; i < a; ++i) {
        out(i, i) = w(idx++);
        for (Index j = i + 1; j < a; ++j) {
            const double half = 0.5 * w(idx++);
            out(i, j) = half;
            out(j, i) = half;
        }
    }
    return out;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

inline Vector kron(const Vector& a, const Vector& b) {
    Vector out(a.size() * b.size());
    for (Index i = 0; i < a.size(); ++i) {
        out.segment(i * b.size(), b.size()) = a(i) * b;
    }
    return out;
}

} // namespace spi
