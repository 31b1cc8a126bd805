#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spi/excitation_data.hpp"
#include "spi/tensor_ops.hpp"
#include "spi/types.hpp"

namespace spi {

struct SpiConfig {
    Matrix Q;                          // output weight, positive definite
    Matrix R;                          // input weight, positive definite
    double delta = 0.7;                // in (0, 1); smaller allows larger steps
    std::vector<double> beta_sequence; // strictly decreasing candidates in (0, 1)
    double step_safety = 0.9;          // fraction of the largest feasible step
    int max_iterations = 100;
};

// Least-squares estimates for one policy: the value matrix in filter
// coordinates plus the cross and input terms consumed by the gain update.
struct LearnedQuantities {
    Matrix value_mat;  // n_r x n_r symmetric
    Matrix cross_term; // n_r x m
    Matrix input_term; // m x m symmetric
    double residual = 0.0;
};

struct IterationRecord {
    int iteration = 0;
    double beta_tilde = 0.0;
    double alpha = 0.0;     // step size that produced cum_coeff (0 at iteration 0)
    double cum_coeff = 0.0;
    LearnedQuantities learned;
    Matrix gain;            // policy evaluated at this iteration, m x n_r
};

struct SpiResult {
    Matrix gain;            // final output-feedback gain
    double beta_tilde = 0.0;
    double cum_coeff = 0.0;
    int rejected_betas = 0; // compression candidates that failed the value check
    Matrix value_regularizer;
    std::vector<IterationRecord> history;
};

// Thrown when the iteration cap is reached; carries everything learned so far.
struct IterationLimitError : std::runtime_error {
    IterationLimitError(const std::string& msg, std::vector<IterationRecord> h)
        : std::runtime_error(msg), history(std::move(h)) {}
    std::vector<IterationRecord> history;
};

// Builds the regression pair (psi, phi) for the current policy. Column
// partition of psi: value block n_r(n_r+1)/2, cross block n_r*m, input block
// m(m+1)/2. The cross block pairs the state outer products with
// kron(gain', I): its rows are then (gain*r (x) r)', which matches the
// column-major layout of the cross-term unknown for any input count.
inline std::pair<Matrix, Vector> assemble_system(const RegressionData& reg, const Matrix& gain_quad,
                                                 const Matrix& gain, double cum_coeff,
                                                 const SpiConfig& cfg, const Matrix& value_regularizer) {
    if (cum_coeff <= 0.0) {
        throw std::invalid_argument("assemble_system: cumulative coefficient must be positive");
    }
    const Index rows = reg.quad_increment.rows();
    const Index nr = gain.cols();
    if (gain_quad.rows() != rows || reg.state_kron.cols() != nr * nr) {
        throw std::invalid_argument("assemble_system: data shape mismatch");
    }
    const double inv_c2 = 1.0 / (cum_coeff * cum_coeff);

    const Matrix gain_t = gain.transpose();
    Matrix psi(rows, reg.state_quad.cols() + reg.input_state_kron.cols() + reg.input_quad.cols());
    psi << reg.quad_increment + (1.0 - inv_c2) * reg.state_quad,
           -2.0 * reg.state_kron * kron(gain_t, Matrix::Identity(nr, nr)) -
               2.0 * reg.input_state_kron,
           -reg.input_quad + gain_quad;

    const Matrix cost = gain_t * cfg.R * gain + value_regularizer;
    Vector phi = -inv_c2 * (reg.output_kron * vec(cfg.Q) + reg.state_kron * vec(cost));
    return {std::move(psi), std::move(phi)};
}

// Solves psi * theta = phi by column-equilibrated QR and unpacks theta into
// the learned quantities. Rank deficiency is reported with the exact gap; it
// signals insufficient excitation rather than a numerical accident.
inline LearnedQuantities policy_evaluation(const Matrix& psi, const Vector& phi, Index state_dim,
                                           Index input_dim) {
    const Index nr = state_dim;
    const Index m = input_dim;
    const Index value_len = nr * (nr + 1) / 2;
    const Index cross_len = nr * m;
    const Index input_len = m * (m + 1) / 2;
    if (psi.cols() != value_len + cross_len + input_len || psi.rows() != phi.size()) {
        throw std::invalid_argument("policy_evaluation: system shape mismatch");
    }

    Vector col_scale(psi.cols());
    for (Index j = 0; j < psi.cols(); ++j) {
        const double norm = psi.col(j).norm();
        col_scale(j) = norm > 0.0 ? norm : 1.0;
    }
    // The persistent-excitation gate on the raw data is the binding
    // diagnostic; a regressor that passed it is full rank in exact
    // arithmetic, so this guard only rejects machine-level collapse.
    const Matrix scaled = psi * col_scale.cwiseInverse().asDiagonal();
    const Index rank = numerical_rank(scaled, 1e-10);
    if (rank < psi.cols()) {
        std::ostringstream msg;
        msg << "policy_evaluation: regressor rank " << rank << " < " << psi.cols()
            << " (gap " << psi.cols() - rank << "); excitation data are insufficient";
        throw std::runtime_error(msg.str());
    }
    const Vector theta = col_scale.cwiseInverse().asDiagonal() *
                         scaled.colPivHouseholderQr().solve(phi).eval();

    LearnedQuantities out;
    out.value_mat = mat_from_vecs(theta.head(value_len));
    out.cross_term = Eigen::Map<const Matrix>(theta.data() + value_len, nr, m);
    out.input_term = mat_from_vecs(theta.tail(input_len));
    out.residual = (psi * theta - phi).norm();
    return out;
}

// True iff r' P r is strictly positive on every logged sample with a
// non-negligible reconstruction state.
inline bool check_value_positivity(const ExperimentLog& log, const Matrix& value_mat) {
    for (const auto& s : log.samples) {
        if (s.r.norm() < 1e-12) continue;
        if (s.r.dot(value_mat * s.r) <= 0.0) return false;
    }
    return true;
}

inline Matrix policy_improvement(const LearnedQuantities& lq, const Matrix& R, double cum_coeff) {
    const double c2 = cum_coeff * cum_coeff;
    const Matrix inner = R + c2 * lq.input_term;
    Eigen::FullPivLU<Matrix> lu(inner);
    if (!lu.isInvertible()) {
        throw std::runtime_error(
            "policy_improvement: input-effort matrix is singular; policy evaluation is corrupted");
    }
    return c2 * lu.solve(lq.cross_term.transpose());
}

// Largest step size, scaled by the safety fraction, for which the decrease
// inequality ((1 + alpha/c)^2 - 1) * Pi <= Xi holds on every logged sample.
inline double select_step_size(const ExperimentLog& log, const Matrix& value_mat,
                               const Matrix& next_gain, const SpiConfig& cfg,
                               const Matrix& value_regularizer, double cum_coeff) {
    const Matrix cost = next_gain.transpose() * cfg.R * next_gain + value_regularizer;
    bool any = false;
    double gamma = 0.0;
    for (const auto& s : log.samples) {
        if (s.r.norm() < 1e-12) continue;
        const double stage = s.r.dot(cost * s.r) + s.y.dot(cfg.Q * s.y);
        const double margin = s.r.dot(value_mat * s.r) - stage;
        if (margin <= 0.0) {
            std::ostringstream msg;
            msg << "select_step_size: decrease margin " << margin << " <= 0 at sample k=" << s.k
                << "; reconstruction error or marginal excitation invalidated the evaluation";
            throw std::runtime_error(msg.str());
        }
        const double ratio = (1.0 - cfg.delta) * stage / margin;
        gamma = any ? std::min(gamma, ratio) : ratio;
        any = true;
    }
    if (!any) {
        throw std::runtime_error("select_step_size: no usable samples");
    }
    return cfg.step_safety * cum_coeff * (std::sqrt(1.0 + gamma) - 1.0);
}

// Full learning pass over a fixed log: walk the compression candidates down
// until the first value estimate is positive on the data, freeze it as the
// regularizer, then alternate evaluation, improvement, and step-size
// selection until the cumulative coefficient reaches one.
inline SpiResult run_spi(const SpiConfig& cfg, const ExperimentLog& log, const RegressionData& reg) {
    if (cfg.beta_sequence.empty()) {
        throw std::invalid_argument("run_spi: compression sequence is empty");
    }
    const Index nr = log.state_dim;
    const Index m = log.input_dim;
    const Matrix zero_gain = Matrix::Zero(m, nr);
    const Matrix zero_reg = Matrix::Zero(nr, nr);
    const Matrix zero_gain_quad = gain_quad_rows(log, zero_gain);

    SpiResult result;
    Matrix initial_value;
    bool accepted = false;
    for (double beta : cfg.beta_sequence) {
        auto [psi, phi] = assemble_system(reg, zero_gain_quad, zero_gain, beta, cfg, zero_reg);
        LearnedQuantities lq = policy_evaluation(psi, phi, nr, m);
        if (check_value_positivity(log, lq.value_mat)) {
            result.beta_tilde = beta;
            initial_value = lq.value_mat;
            accepted = true;
            break;
        }
        ++result.rejected_betas;
    }
    if (!accepted) {
        throw std::runtime_error(
            "run_spi: no stable compression found; the candidate sequence is exhausted");
    }

    result.value_regularizer = initial_value;
    Matrix gain = zero_gain;
    double alpha = 0.0;
    double cum_coeff = result.beta_tilde;
    int j = 0;
    while (true) {
        const Matrix gain_quad = j == 0 ? zero_gain_quad : gain_quad_rows(log, gain);
        auto [psi, phi] = assemble_system(reg, gain_quad, gain, cum_coeff, cfg, result.value_regularizer);
        LearnedQuantities lq = policy_evaluation(psi, phi, nr, m);
        result.history.push_back(IterationRecord{j, result.beta_tilde, alpha, cum_coeff, lq, gain});
        if (cum_coeff >= 1.0) break;
        if (j >= cfg.max_iterations) {
            throw IterationLimitError("run_spi: iteration cap reached before the cumulative "
                                      "coefficient hit one",
                                      std::move(result.history));
        }
        gain = policy_improvement(lq, cfg.R, cum_coeff);
        alpha = select_step_size(log, lq.value_mat, gain, cfg, result.value_regularizer, cum_coeff);
        cum_coeff += alpha;
        ++j;
    }
    result.gain = gain;
    result.cum_coeff = cum_coeff;
    return result;
}

} // namespace spi
