#pragma once

#include <sstream>
#include <stdexcept>
#include <utility>

#include "spi/excitation_data.hpp"
#include "spi/plant.hpp"
#include "spi/reconstruction.hpp"
#include "spi/tensor_ops.hpp"
#include "spi/types.hpp"

// Model-based ground truth used by tests and the verification CLI path only.
// Nothing in here is consulted by the learner.
namespace spi::oracle {

// Solves a' P a - P = -w for symmetric w and Schur a via Kronecker
// vectorization: (I - a' (x) a') vec(P) = vec(w).
inline Matrix dlyap(const Matrix& a, const Matrix& w) {
    if (a.rows() != a.cols() || w.rows() != w.cols() || a.rows() != w.rows()) {
        throw std::invalid_argument("dlyap: dimension mismatch");
    }
    if (spectral_radius(a) >= 1.0) {
        throw std::invalid_argument("dlyap: matrix is not Schur");
    }
    const Index n = a.rows();
    const Matrix at = a.transpose();
    const Matrix lhs = Matrix::Identity(n * n, n * n) - kron(at, at);
    const Vector rhs = vec(w);
    const Vector p = lhs.partialPivLu().solve(rhs);
    Matrix out = Eigen::Map<const Matrix>(p.data(), n, n);
    return 0.5 * (out + out.transpose());
}

struct ModelIterate {
    int iteration = 0;
    Matrix gain;            // state-feedback gain, m x n
    double cum_coeff = 0.0; // compression factor plus accumulated step sizes
};

inline Matrix scaled_closed_loop(const LtiSystem& sys, const Matrix& gain, double cum_coeff) {
    return cum_coeff * (sys.A - sys.B * gain);
}

// Value matrix of the scaled closed loop under output, regularizer, and
// input-effort weights.
inline Matrix model_policy_evaluation(const LtiSystem& sys, const Matrix& gain, double cum_coeff,
                                      const Matrix& Q, const Matrix& R, const Matrix& Q_c) {
    const Matrix q_y = sys.C.transpose() * Q * sys.C;
    const Matrix w = q_y + Q_c + gain.transpose() * R * gain;
    return dlyap(scaled_closed_loop(sys, gain, cum_coeff), w);
}

inline Matrix model_policy_improvement(const LtiSystem& sys, const Matrix& value, double cum_coeff,
                                       const Matrix& R) {
    const double c2 = cum_coeff * cum_coeff;
    const Matrix inner = R + c2 * sys.B.transpose() * value * sys.B;
    return c2 * inner.inverse() * sys.B.transpose() * value * sys.A;
}

struct ModelStep {
    Matrix value;     // value matrix at the input iterate
    ModelIterate next;
};

// One evaluation-improvement pass of the model-based recursion. The supplied
// step size must respect 0 < alpha < 1/rho(A - B K_next) - c, checked with a
// small slack for eigen-solver noise.
inline ModelStep model_spi_step(const LtiSystem& sys, const ModelIterate& it, const Matrix& Q,
                                const Matrix& R, const Matrix& Q_c, double alpha_next) {
    ModelStep out;
    out.value = model_policy_evaluation(sys, it.gain, it.cum_coeff, Q, R, Q_c);
    out.next.iteration = it.iteration + 1;
    out.next.gain = model_policy_improvement(sys, out.value, it.cum_coeff, R);
    const double bound = 1.0 / spectral_radius(sys.A - sys.B * out.next.gain) - it.cum_coeff;
    if (!(alpha_next > 0.0 && alpha_next < bound + 1e-12)) {
        std::ostringstream msg;
        msg << "model_spi_step: step size " << alpha_next
            << " violates the admissible interval (0, " << bound << ")";
        throw std::invalid_argument(msg.str());
    }
    out.next.cum_coeff = it.cum_coeff + alpha_next;
    return out;
}

// Full-row-rank map from the reconstruction state back to the plant state,
// with its right pseudo-inverse.
struct ParameterizationMatrix {
    Matrix map;  // n x n_r
    Matrix pinv; // n_r x n
};

// Fits the parameterization by joint simulation from the zero initial state,
// where the reconstruction is exact, and least squares over the collected
// (state, filter-state) pairs. The fit is validated to machine-level
// residual and full row rank before returning.
inline ParameterizationMatrix fit_parameterization(const LtiSystem& sys, const FilterBank& bank_template,
                                                   std::int64_t horizon = 0) {
    const Index n = sys.state_dim();
    const Index nr = bank_template.state_dim();
    if (horizon <= 0) horizon = 8 * nr;
    const ExcitationSpec probe =
        default_excitation(sys.input_dim(), static_cast<int>(nr) + 2, 1.0, 0x5eedu);

    FilterBank fb = bank_template;
    fb.input_state.setZero();
    fb.output_state.setZero();
    PlantState state{Vector::Zero(n), 0};
    Matrix states(n, horizon);
    Matrix recon(nr, horizon);
    for (std::int64_t k = 0; k < horizon; ++k) {
        recon.col(k) = reconstruction_state(fb);
        states.col(k) = state.x;
        const Vector u = excitation(k, probe);
        StepResult r = step(sys, state, u);
        fb = filter_step(fb, u, r.y);
        state = std::move(r.state);
    }
    if (numerical_rank(recon, 1e-10) < nr) {
        throw std::runtime_error(
            "fit_parameterization: filter-state samples are rank deficient; "
            "use a longer horizon or richer probe excitation");
    }
    ParameterizationMatrix out;
    out.map = recon.transpose().colPivHouseholderQr().solve(states.transpose()).transpose();
    const double residual = (out.map * recon - states).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, states.cwiseAbs().maxCoeff());
    if (residual > 1e-10 * scale) {
        throw std::runtime_error("fit_parameterization: zero-initial-state fit residual too large");
    }
    if (numerical_rank(out.map, 1e-10) < n) {
        throw std::runtime_error("fit_parameterization: parameterization is not full row rank");
    }
    out.pinv = out.map.transpose() * (out.map * out.map.transpose()).inverse();
    return out;
}

struct IterationCertificate {
    double rho_actual = 0.0;
    double rho_bound = 0.0;
    bool pass = false;
};

// Compares the true closed-loop spectral radius under the projected gain
// against the certified bound 1/c.
inline IterationCertificate verify_iteration(const LtiSystem& sys, const ParameterizationMatrix& par,
                                             const Matrix& gain, double cum_coeff) {
    IterationCertificate cert;
    cert.rho_actual = spectral_radius(sys.A - sys.B * gain * par.pinv);
    cert.rho_bound = 1.0 / cum_coeff;
    cert.pass = cert.rho_actual < cert.rho_bound;
    return cert;
}

} // namespace spi::oracle
