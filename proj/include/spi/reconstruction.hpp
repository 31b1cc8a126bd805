#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include "spi/types.hpp"

namespace spi {

// Companion matrix of the monic polynomial with the given roots. Roots must
// lie strictly inside the unit circle; complex roots must come in conjugate
// pairs so the coefficients are real. Coefficients are built by exact
// polynomial expansion (convolution of monomials), not by eigen round-trips.
inline Matrix companion_from_roots(const std::vector<std::complex<double>>& roots) {
    const Index n = static_cast<Index>(roots.size());
    if (n == 0) {
        throw std::invalid_argument("companion_from_roots: need at least one root");
    }
    std::vector<bool> paired(roots.size(), false);
    for (std::size_t i = 0; i < roots.size(); ++i) {
        if (std::abs(roots[i]) >= 1.0) {
            throw std::invalid_argument("companion_from_roots: root modulus must be < 1");
        }
        if (paired[i] || roots[i].imag() == 0.0) continue;
        bool found = false;
        for (std::size_t j = i + 1; j < roots.size(); ++j) {
            if (!paired[j] && roots[j] == std::conj(roots[i])) {
                paired[i] = paired[j] = true;
                found = true;
                break;
            }
        }
        if (!found) {
            throw std::invalid_argument("companion_from_roots: complex roots must be conjugate-paired");
        }
    }

    // coeffs[i] multiplies lambda^(n-i); coeffs[0] = 1 (monic).
    std::vector<std::complex<double>> coeffs{1.0};
    for (const auto& r : roots) {
        std::vector<std::complex<double>> next(coeffs.size() + 1, 0.0);
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            next[i] += coeffs[i];
            next[i + 1] -= coeffs[i] * r;
        }
        coeffs = std::move(next);
    }

    Matrix m = Matrix::Zero(n, n);
    for (Index i = 0; i + 1 < n; ++i) {
        m(i, i + 1) = 1.0;
    }
    // Last row is [-d_n, -d_{n-1}, ..., -d_1] for lambda^n + d_1 lambda^{n-1} + ... + d_n.
    for (Index j = 0; j < n; ++j) {
        m(n - 1, j) = -coeffs[static_cast<std::size_t>(n - j)].real();
    }
    return m;
}

// Stable filter bank reconstructing the plant state from input-output data.
// Per input channel i, the block input_state[i*n .. i*n+n) obeys
// z <- companion * z + u_i * drive, and likewise per output channel for
// output_state. The input filter uses I_m (x) companion and the output
// filter I_p (x) companion; that pairing is the only dimension-consistent
// one when the input and output counts differ.
struct FilterBank {
    Matrix companion;    // n x n Schur companion matrix
    Vector drive;        // [0, ..., 0, 1]
    Vector input_state;  // length n * num_inputs
    Vector output_state; // length n * num_outputs
    Index num_inputs = 0;
    Index num_outputs = 0;

    Index order() const { return companion.rows(); }
    Index state_dim() const { return input_state.size() + output_state.size(); }
};

inline FilterBank make_filter_bank(Matrix companion, Index num_inputs, Index num_outputs) {
    if (companion.rows() != companion.cols()) {
        throw std::invalid_argument("make_filter_bank: companion must be square");
    }
    if (num_inputs < 1 || num_outputs < 1) {
        throw std::invalid_argument("make_filter_bank: channel counts must be positive");
    }
    FilterBank fb;
    const Index n = companion.rows();
    fb.companion = std::move(companion);
    fb.drive = Vector::Zero(n);
    fb.drive(n - 1) = 1.0;
    fb.input_state = Vector::Zero(n * num_inputs);
    fb.output_state = Vector::Zero(n * num_outputs);
    fb.num_inputs = num_inputs;
    fb.num_outputs = num_outputs;
    return fb;
}

inline FilterBank filter_step(const FilterBank& fb, const Vector& u, const Vector& y) {
    if (u.size() != fb.num_inputs || y.size() != fb.num_outputs) {
        throw std::invalid_argument("filter_step: channel dimension mismatch");
    }
    const Index n = fb.order();
    FilterBank next = fb;
    for (Index i = 0; i < fb.num_inputs; ++i) {
        next.input_state.segment(i * n, n) =
            fb.companion * fb.input_state.segment(i * n, n) + u(i) * fb.drive;
    }
    for (Index i = 0; i < fb.num_outputs; ++i) {
        next.output_state.segment(i * n, n) =
            fb.companion * fb.output_state.segment(i * n, n) + y(i) * fb.drive;
    }
    return next;
}

// Concatenated filter state [input_state; output_state]. This ordering is
// normative for every downstream regression and for the parameterization
// matrix that maps it back to the plant state.
inline Vector reconstruction_state(const FilterBank& fb) {
    Vector r(fb.state_dim());
    r << fb.input_state, fb.output_state;
    return r;
}

} // namespace spi
