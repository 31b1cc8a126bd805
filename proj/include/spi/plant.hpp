#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

#include "spi/types.hpp"

namespace spi {

// Discrete-time LTI plant x(k+1) = A x(k) + B u(k), y(k) = C x(k).
struct LtiSystem {
    Matrix A;
    Matrix B;
    Matrix C;

    LtiSystem(Matrix a, Matrix b, Matrix c)
        : A(std::move(a)), B(std::move(b)), C(std::move(c)) {
        if (A.rows() != A.cols()) {
            throw std::invalid_argument("LtiSystem: A must be square");
        }
        if (B.rows() != A.rows()) {
            throw std::invalid_argument("LtiSystem: B row count must match A");
        }
        if (C.cols() != A.rows()) {
            throw std::invalid_argument("LtiSystem: C column count must match A");
        }
    }

    Index state_dim() const { return A.rows(); }
    Index input_dim() const { return B.cols(); }
    Index output_dim() const { return C.rows(); }
};

struct PlantState {
    Vector x;
    std::int64_t k = 0;
};

struct StepResult {
    PlantState state;
    Vector y;
};

// One plant step. The output is taken from the pre-step state.
inline StepResult step(const LtiSystem& sys, const PlantState& state, const Vector& u) {
    if (u.size() != sys.input_dim()) {
        throw std::invalid_argument("step: input dimension mismatch");
    }
    if (state.x.size() != sys.state_dim()) {
        throw std::invalid_argument("step: state dimension mismatch");
    }
    StepResult out;
    out.y = sys.C * state.x;
    out.state.x = sys.A * state.x + sys.B * u;
    out.state.k = state.k + 1;
    return out;
}

inline double spectral_radius(const Matrix& m) {
    if (m.rows() != m.cols()) {
        throw std::invalid_argument("spectral_radius: matrix must be square");
    }
    if (!m.allFinite()) {
        throw std::invalid_argument("spectral_radius: matrix has non-finite entries");
    }
    Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("spectral_radius: eigenvalue solve failed");
    }
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

struct Assumption1Report {
    bool controllable = false;
    bool observable = false;
};

// Rank tests on the n-block controllability and observability matrices.
inline Assumption1Report check_assumption1(const LtiSystem& sys, double rank_tol = 1e-9) {
    const Index n = sys.state_dim();
    Matrix ctrb(n, n * sys.input_dim());
    Matrix obsv(n * sys.output_dim(), n);
    Matrix ab = sys.B;
    Matrix ca = sys.C;
    for (Index i = 0; i < n; ++i) {
        ctrb.middleCols(i * sys.input_dim(), sys.input_dim()) = ab;
        obsv.middleRows(i * sys.output_dim(), sys.output_dim()) = ca;
        ab = sys.A * ab;
        ca = ca * sys.A;
    }
    Assumption1Report report;
    report.controllable = numerical_rank(ctrb, rank_tol) == n;
    report.observable = numerical_rank(obsv, rank_tol) == n;
    return report;
}

// Learner-facing boundary: exposes the plant strictly as a u -> y map.
// The system matrices and the hidden state stay private; verification
// code works with the LtiSystem it was constructed from.
class InputOutputPlant {
public:
    InputOutputPlant(LtiSystem sys, Vector x0)
        : sys_(std::move(sys)), state_{std::move(x0), 0} {
        if (state_.x.size() != sys_.state_dim()) {
            throw std::invalid_argument("InputOutputPlant: initial state dimension mismatch");
        }
    }

    Vector step(const Vector& u) {
        StepResult r = spi::step(sys_, state_, u);
        state_ = std::move(r.state);
        return r.y;
    }

    Index input_dim() const { return sys_.input_dim(); }
    Index output_dim() const { return sys_.output_dim(); }
    std::int64_t time() const { return state_.k; }

private:
    LtiSystem sys_;
    PlantState state_;
};

// Three-state discretized power system shipped as the default demo plant.
// Open loop is unstable (spectral radius just above one).
inline LtiSystem power_system_preset() {
    Matrix a(3, 3);
    a << 0.8825, 0.0014, 0.0470,
         0.0894, 0.9049, 0.0023,
         0.0028, 0.0571, 0.9995;
    Matrix b(3, 1);
    b << 0.0001, 0.1190, 0.0036;
    Matrix c(1, 3);
    c << 1.0, 0.0, 0.0;
    return LtiSystem(std::move(a), std::move(b), std::move(c));
}

inline LtiSystem plant_preset(const std::string& name) {
    if (name == "power_system") {
        return power_system_preset();
    }
    throw std::invalid_argument("unknown plant preset: " + name);
}

} // namespace spi
