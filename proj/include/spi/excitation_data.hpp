#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <stdexcept>
#include <vector>

#include "spi/plant.hpp"
#include "spi/reconstruction.hpp"
#include "spi/tensor_ops.hpp"
#include "spi/types.hpp"

namespace spi {

struct SineTerm {
    double amplitude = 0.0;
    double frequency = 0.0; // radians per step
    double phase = 0.0;
};

// Multi-sine exploration input, one term list per input channel.
struct ExcitationSpec {
    std::vector<std::vector<SineTerm>> channels;
    Vector bias; // empty means zero

    Index input_dim() const { return static_cast<Index>(channels.size()); }
};

// Deterministic default: num_waves equal-amplitude sinusoids per channel
// with frequencies and phases drawn from the seed, frequencies spread over
// (0.05, 2.98) radians per step. Evenly spaced frequencies are deliberately
// avoided: their pairwise sums and differences collide, which collapses the
// rank of the quadratic data matrices. Values are produced from raw mt19937
// words so identical seeds give bit-identical specs on every platform.
inline ExcitationSpec default_excitation(Index num_inputs, int num_waves, double amplitude,
                                         std::uint32_t seed, double bias = 0.0) {
    if (num_inputs < 1 || num_waves < 1) {
        throw std::invalid_argument("default_excitation: need at least one channel and one wave");
    }
    if (amplitude == 0.0 || !std::isfinite(amplitude)) {
        throw std::invalid_argument("default_excitation: amplitude must be finite and nonzero");
    }
    std::mt19937 rng(seed);
    const auto unit = [&rng] { return static_cast<double>(rng()) / 4294967296.0; };
    constexpr double two_pi = 6.283185307179586476925286766559;
    ExcitationSpec spec;
    spec.channels.resize(static_cast<std::size_t>(num_inputs));
    spec.bias = Vector::Constant(num_inputs, bias);
    for (auto& terms : spec.channels) {
        terms.resize(static_cast<std::size_t>(num_waves));
        for (int w = 0; w < num_waves; ++w) {
            const double frequency = 0.05 + 2.93 * unit();
            terms[static_cast<std::size_t>(w)] = SineTerm{amplitude, frequency, two_pi * unit()};
        }
    }
    return spec;
}

inline Vector excitation(std::int64_t k, const ExcitationSpec& spec) {
    Vector u = spec.bias.size() > 0 ? spec.bias : Vector::Zero(spec.input_dim());
    for (Index i = 0; i < spec.input_dim(); ++i) {
        for (const auto& t : spec.channels[static_cast<std::size_t>(i)]) {
            u(i) += t.amplitude * std::sin(t.frequency * static_cast<double>(k) + t.phase);
        }
    }
    return u;
}

struct LogSample {
    std::int64_t k = 0;
    Vector u;
    Vector y;
    Vector r; // reconstruction state at time k
};

// Time-indexed record of one collection run. Samples cover k_start..k_end
// inclusive; the regression uses the k_end - k_start consecutive pairs.
struct ExperimentLog {
    std::int64_t k_start = 0;
    std::int64_t k_end = 0;
    Index input_dim = 0;
    Index output_dim = 0;
    Index state_dim = 0; // reconstruction state length
    std::vector<LogSample> samples;

    Index pair_count() const { return static_cast<Index>(samples.size()) - 1; }
};

// Runs the plant and the filter bank in lockstep from time zero under the
// exploration input alone (the initial policy is zero), recording samples
// on [k_start, k_end].
inline ExperimentLog collect(InputOutputPlant& plant, FilterBank fb, const ExcitationSpec& spec,
                             std::int64_t k_start, std::int64_t k_end) {
    if (plant.input_dim() != fb.num_inputs || plant.output_dim() != fb.num_outputs ||
        spec.input_dim() != plant.input_dim()) {
        throw std::invalid_argument("collect: plant, filter bank, and excitation dimensions disagree");
    }
    if (k_start < 0 || k_end <= k_start) {
        throw std::invalid_argument("collect: need 0 <= k_start < k_end");
    }
    ExperimentLog log;
    log.k_start = k_start;
    log.k_end = k_end;
    log.input_dim = plant.input_dim();
    log.output_dim = plant.output_dim();
    log.state_dim = fb.state_dim();
    log.samples.reserve(static_cast<std::size_t>(k_end - k_start + 1));
    for (std::int64_t k = 0; k <= k_end; ++k) {
        const Vector u = excitation(k, spec);
        const Vector y = plant.step(u);
        if (k >= k_start) {
            log.samples.push_back(LogSample{k, u, y, reconstruction_state(fb)});
        }
        fb = filter_step(fb, u, y);
    }
    return log;
}

// Data matrices assembled from one log, one row per consecutive sample pair.
struct RegressionData {
    Matrix quad_increment;   // rows vecv(r(k+1)) - vecv(r(k))
    Matrix state_kron;       // rows (r (x) r)'
    Matrix input_state_kron; // rows (u (x) r)'
    Matrix output_kron;      // rows (y (x) y)'
    Matrix state_quad;       // rows vecv(r)'
    Matrix input_quad;       // rows vecv(u)'
};

// The increment rows are differences of quadratic monomials, so a row dotted
// with vecs(P) equals the exact one-step change of r' P r. Taking vecv of the
// difference vector instead would break that identity.
inline RegressionData build_regression(const ExperimentLog& log) {
    if (log.samples.size() < 2) {
        throw std::invalid_argument("build_regression: log needs at least one sample pair");
    }
    const Index rows = log.pair_count();
    const Index nr = log.state_dim;
    const Index m = log.input_dim;
    const Index p = log.output_dim;
    RegressionData reg;
    reg.quad_increment.resize(rows, nr * (nr + 1) / 2);
    reg.state_kron.resize(rows, nr * nr);
    reg.input_state_kron.resize(rows, m * nr);
    reg.output_kron.resize(rows, p * p);
    reg.state_quad.resize(rows, nr * (nr + 1) / 2);
    reg.input_quad.resize(rows, m * (m + 1) / 2);
    for (Index t = 0; t < rows; ++t) {
        const LogSample& s = log.samples[static_cast<std::size_t>(t)];
        const LogSample& next = log.samples[static_cast<std::size_t>(t) + 1];
        reg.quad_increment.row(t) = (vecv(next.r) - vecv(s.r)).transpose();
        reg.state_kron.row(t) = kron(s.r, s.r).transpose();
        reg.input_state_kron.row(t) = kron(s.u, s.r).transpose();
        reg.output_kron.row(t) = kron(s.y, s.y).transpose();
        reg.state_quad.row(t) = vecv(s.r).transpose();
        reg.input_quad.row(t) = vecv(s.u).transpose();
    }
    return reg;
}

// Iteration-dependent rows vecv(gain * r(k)), rebuilt from the fixed log for
// each policy (off-policy reuse).
inline Matrix gain_quad_rows(const ExperimentLog& log, const Matrix& gain) {
    if (gain.rows() != log.input_dim || gain.cols() != log.state_dim) {
        throw std::invalid_argument("gain_quad_rows: gain shape mismatch");
    }
    const Index rows = log.pair_count();
    Matrix out(rows, log.input_dim * (log.input_dim + 1) / 2);
    for (Index t = 0; t < rows; ++t) {
        out.row(t) = vecv(gain * log.samples[static_cast<std::size_t>(t)].r).transpose();
    }
    return out;
}

struct RankCheck {
    Index achieved = 0;
    Index required = 0;
    bool pass = false;
};

// Persistent-excitation test on [state_quad, input_state_kron, input_quad].
// Columns are normalized before the singular-value test: rank is invariant
// under column scaling, and without it the monomials of the fastest-growing
// signal dwarf every other direction.
inline RankCheck rank_condition(const RegressionData& reg, double rank_tol = 1e-8) {
    const Index nr_cols = reg.state_quad.cols();
    const Index ur_cols = reg.input_state_kron.cols();
    const Index u_cols = reg.input_quad.cols();
    Matrix stacked(reg.state_quad.rows(), nr_cols + ur_cols + u_cols);
    stacked << reg.state_quad, reg.input_state_kron, reg.input_quad;
    for (Index j = 0; j < stacked.cols(); ++j) {
        const double norm = stacked.col(j).norm();
        if (norm > 0.0) stacked.col(j) /= norm;
    }
    RankCheck check;
    check.required = nr_cols + ur_cols + u_cols;
    check.achieved = numerical_rank(stacked, rank_tol);
    check.pass = check.achieved >= check.required;
    return check;
}

// One row per recorded k: k, inputs, outputs, reconstruction state.
inline void write_log_csv(const ExperimentLog& log, std::ostream& os) {
    os << "k";
    for (Index i = 0; i < log.input_dim; ++i) os << ",u" << i + 1;
    for (Index i = 0; i < log.output_dim; ++i) os << ",y" << i + 1;
    for (Index i = 0; i < log.state_dim; ++i) os << ",r" << i + 1;
    os << "\n";
    char buf[32];
    const auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << ',' << buf;
    };
    for (const auto& s : log.samples) {
        os << s.k;
        for (Index i = 0; i < s.u.size(); ++i) put(s.u(i));
        for (Index i = 0; i < s.y.size(); ++i) put(s.y(i));
        for (Index i = 0; i < s.r.size(); ++i) put(s.r(i));
        os << "\n";
    }
}

} // namespace spi
