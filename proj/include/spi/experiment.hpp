#pragma once

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spi/excitation_data.hpp"
#include "spi/oracle_verify.hpp"
#include "spi/plant.hpp"
#include "spi/reconstruction.hpp"
#include "spi/spi_learner.hpp"
#include "spi/types.hpp"

namespace spi {

using nlohmann::json;

struct PlantConfig {
    std::string preset;          // empty when matrices are explicit
    Matrix A, B, C;
};

struct ExcitationConfig {
    int waves = 10;
    double amplitude = 1.0;
    std::uint32_t seed = 1;
    double bias = 0.0;
};

struct CollectionConfig {
    std::int64_t k_start = -1;   // -1: derive from the filter decay rule
    std::int64_t k_end = -1;     // -1: required rank plus margin
};

struct SimulationConfig {
    Vector initial_state;
    std::int64_t horizon = 600;
};

struct ExperimentConfig {
    PlantConfig plant;
    std::vector<std::complex<double>> filter_roots;
    ExcitationConfig excitation;
    CollectionConfig collection;
    Matrix Q, R;
    double delta = 0.7;
    double beta_start = 0.9;
    double beta_step = 0.01;
    double beta_min = 0.01;
    double step_safety = 0.9;
    int max_iterations = 100;
    SimulationConfig simulation;
    bool verify = true;
};

// ---------------------------------------------------------------------------
// JSON (de)serialization. The config must round-trip bit-exactly, so doubles
// pass through nlohmann's shortest-round-trip formatting untouched.
// ---------------------------------------------------------------------------

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& name) {
    if (!j.is_array() || j.empty() || !j.front().is_array()) {
        throw std::invalid_argument(name + ": expected an array of rows");
    }
    const Index rows = static_cast<Index>(j.size());
    const Index cols = static_cast<Index>(j.front().size());
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        if (static_cast<Index>(j[i].size()) != cols) {
            throw std::invalid_argument(name + ": ragged rows");
        }
        for (Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

inline json config_to_json(const ExperimentConfig& cfg) {
    json j;
    if (!cfg.plant.preset.empty()) {
        j["plant"] = {{"preset", cfg.plant.preset}};
    } else {
        j["plant"] = {{"A", matrix_to_json(cfg.plant.A)},
                      {"B", matrix_to_json(cfg.plant.B)},
                      {"C", matrix_to_json(cfg.plant.C)}};
    }
    json roots = json::array();
    for (const auto& r : cfg.filter_roots) {
        if (r.imag() == 0.0) {
            roots.push_back(r.real());
        } else {
            roots.push_back(json::array({r.real(), r.imag()}));
        }
    }
    j["filter_roots"] = std::move(roots);
    j["excitation"] = {{"waves", cfg.excitation.waves},
                       {"amplitude", cfg.excitation.amplitude},
                       {"seed", cfg.excitation.seed},
                       {"bias", cfg.excitation.bias}};
    json collection;
    if (cfg.collection.k_start >= 0) collection["k_start"] = cfg.collection.k_start;
    if (cfg.collection.k_end >= 0) collection["k_end"] = cfg.collection.k_end;
    j["collection"] = std::move(collection);
    j["weights"] = {{"Q", matrix_to_json(cfg.Q)}, {"R", matrix_to_json(cfg.R)}};
    j["spi"] = {{"delta", cfg.delta},
                {"beta_start", cfg.beta_start},
                {"beta_step", cfg.beta_step},
                {"beta_min", cfg.beta_min},
                {"step_safety", cfg.step_safety},
                {"max_iterations", cfg.max_iterations}};
    json x0 = json::array();
    for (Index i = 0; i < cfg.simulation.initial_state.size(); ++i) {
        x0.push_back(cfg.simulation.initial_state(i));
    }
    j["simulation"] = {{"initial_state", std::move(x0)}, {"horizon", cfg.simulation.horizon}};
    j["verify"] = cfg.verify;
    return j;
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    const json& plant = j.at("plant");
    if (plant.contains("preset")) {
        cfg.plant.preset = plant.at("preset").get<std::string>();
    } else {
        cfg.plant.A = matrix_from_json(plant.at("A"), "plant.A");
        cfg.plant.B = matrix_from_json(plant.at("B"), "plant.B");
        cfg.plant.C = matrix_from_json(plant.at("C"), "plant.C");
    }
    for (const auto& r : j.at("filter_roots")) {
        if (r.is_array()) {
            cfg.filter_roots.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
        } else {
            cfg.filter_roots.emplace_back(r.get<double>(), 0.0);
        }
    }
    if (j.contains("excitation")) {
        const json& e = j.at("excitation");
        cfg.excitation.waves = e.value("waves", cfg.excitation.waves);
        cfg.excitation.amplitude = e.value("amplitude", cfg.excitation.amplitude);
        cfg.excitation.seed = e.value("seed", cfg.excitation.seed);
        cfg.excitation.bias = e.value("bias", cfg.excitation.bias);
    }
    if (j.contains("collection")) {
        const json& c = j.at("collection");
        cfg.collection.k_start = c.value("k_start", std::int64_t{-1});
        cfg.collection.k_end = c.value("k_end", std::int64_t{-1});
    }
    cfg.Q = matrix_from_json(j.at("weights").at("Q"), "weights.Q");
    cfg.R = matrix_from_json(j.at("weights").at("R"), "weights.R");
    const json& s = j.at("spi");
    cfg.delta = s.value("delta", cfg.delta);
    cfg.beta_start = s.value("beta_start", cfg.beta_start);
    cfg.beta_step = s.value("beta_step", cfg.beta_step);
    cfg.beta_min = s.value("beta_min", cfg.beta_min);
    cfg.step_safety = s.value("step_safety", cfg.step_safety);
    cfg.max_iterations = s.value("max_iterations", cfg.max_iterations);
    const json& sim = j.at("simulation");
    const auto& x0 = sim.at("initial_state");
    cfg.simulation.initial_state.resize(static_cast<Index>(x0.size()));
    for (Index i = 0; i < cfg.simulation.initial_state.size(); ++i) {
        cfg.simulation.initial_state(i) = x0[static_cast<std::size_t>(i)].get<double>();
    }
    cfg.simulation.horizon = sim.value("horizon", cfg.simulation.horizon);
    cfg.verify = j.value("verify", true);
    return cfg;
}

// Reproduction settings for the shipped power-system demo.
inline ExperimentConfig demo_config() {
    ExperimentConfig cfg;
    cfg.plant.preset = "power_system";
    cfg.filter_roots = {{-0.1, 0.0}, {-0.2, 0.0}, {-0.3, 0.0}};
    cfg.excitation = ExcitationConfig{10, 30.0, 2u, 0.0};
    cfg.collection = CollectionConfig{50, 120};
    cfg.Q = Matrix::Identity(1, 1);
    cfg.R = Matrix::Identity(1, 1);
    cfg.delta = 0.7;
    cfg.beta_start = 0.9;
    cfg.beta_step = 0.01;
    cfg.beta_min = 0.01;
    cfg.step_safety = 0.9;
    cfg.max_iterations = 100;
    cfg.simulation.initial_state = Vector::Constant(3, 5.0);
    cfg.simulation.horizon = 600;
    cfg.verify = true;
    return cfg;
}

inline LtiSystem build_plant(const PlantConfig& pc) {
    if (!pc.preset.empty()) return plant_preset(pc.preset);
    return LtiSystem(pc.A, pc.B, pc.C);
}

inline bool is_positive_definite(const Matrix& m) {
    if (m.rows() != m.cols() || !m.isApprox(m.transpose(), 1e-12)) return false;
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 0.0;
}

// All config problems at once, never first-failure-only.
inline std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
    std::vector<std::string> errors;
    std::optional<LtiSystem> sys;
    try {
        sys.emplace(build_plant(cfg.plant));
    } catch (const std::exception& e) {
        errors.emplace_back(std::string("plant: ") + e.what());
    }
    if (cfg.filter_roots.empty()) {
        errors.emplace_back("filter_roots: at least one root is required");
    }
    for (const auto& r : cfg.filter_roots) {
        if (std::abs(r) >= 1.0) {
            errors.emplace_back("filter_roots: every root must have modulus < 1");
            break;
        }
    }
    if (sys && static_cast<Index>(cfg.filter_roots.size()) != sys->state_dim()) {
        errors.emplace_back("filter_roots: root count must equal the plant state dimension");
    }
    if (cfg.excitation.waves < 1) errors.emplace_back("excitation.waves: must be >= 1");
    if (sys && !cfg.filter_roots.empty()) {
        // enough distinct frequencies to excite the input-driven data blocks
        const Index n = sys->state_dim();
        const Index m = sys->input_dim();
        const Index nr = n * (m + sys->output_dim());
        const Index input_cols = nr * m + m * (m + 1) / 2;
        const Index needed = (input_cols + 1) / 2;
        if (cfg.excitation.waves < needed) {
            errors.emplace_back("excitation.waves: at least " + std::to_string(needed) +
                                " distinct frequencies are required for these dimensions");
        }
    }
    if (cfg.excitation.amplitude == 0.0 || !std::isfinite(cfg.excitation.amplitude)) {
        errors.emplace_back("excitation.amplitude: must be finite and nonzero");
    }
    if (cfg.collection.k_start >= 0 && cfg.collection.k_end >= 0 &&
        cfg.collection.k_end <= cfg.collection.k_start) {
        errors.emplace_back("collection: k_end must exceed k_start");
    }
    if (sys) {
        if (cfg.Q.rows() != sys->output_dim() || !is_positive_definite(cfg.Q)) {
            errors.emplace_back("weights.Q: must be positive definite with the output dimension");
        }
        if (cfg.R.rows() != sys->input_dim() || !is_positive_definite(cfg.R)) {
            errors.emplace_back("weights.R: must be positive definite with the input dimension");
        }
        if (cfg.simulation.initial_state.size() != sys->state_dim()) {
            errors.emplace_back("simulation.initial_state: length must equal the plant state dimension");
        }
    }
    if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) {
        errors.emplace_back("spi.delta: delta must lie in (0,1)");
    }
    if (!(cfg.beta_start > 0.0 && cfg.beta_start < 1.0)) {
        errors.emplace_back("spi.beta_start: must lie in (0,1)");
    }
    if (!(cfg.beta_step > 0.0)) errors.emplace_back("spi.beta_step: must be positive");
    if (!(cfg.beta_min > 0.0 && cfg.beta_min <= cfg.beta_start)) {
        errors.emplace_back("spi.beta_min: must lie in (0, beta_start]");
    }
    if (!(cfg.step_safety > 0.0 && cfg.step_safety <= 1.0)) {
        errors.emplace_back("spi.step_safety: must lie in (0,1]");
    }
    if (cfg.max_iterations < 1) errors.emplace_back("spi.max_iterations: must be >= 1");
    if (cfg.simulation.horizon < 1) errors.emplace_back("simulation.horizon: must be >= 1");
    return errors;
}

inline std::vector<double> beta_sequence(const ExperimentConfig& cfg) {
    std::vector<double> seq;
    for (int z = 0;; ++z) {
        const double beta = cfg.beta_start - z * cfg.beta_step;
        if (beta < cfg.beta_min - 1e-12) break;
        seq.push_back(beta);
    }
    return seq;
}

// Smallest k at which the slowest filter mode has decayed below eps_w.
inline std::int64_t default_collection_start(const std::vector<std::complex<double>>& roots,
                                             double eps_w = 1e-8) {
    double rho = 0.0;
    for (const auto& r : roots) rho = std::max(rho, std::abs(r));
    if (rho <= 0.0) return static_cast<std::int64_t>(roots.size());
    return static_cast<std::int64_t>(std::ceil(std::log(eps_w) / std::log(rho)));
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct StageError : std::runtime_error {
    StageError(std::string stage_, const std::string& msg)
        : std::runtime_error(msg), stage(std::move(stage_)) {}
    std::string stage;
};

struct ExperimentOutcome {
    SpiResult spi;
    RankCheck rank;
    std::vector<oracle::IterationCertificate> certificates; // empty unless verified
    double open_loop_rho = 0.0;                             // filled when verified
    bool verified = false;
    bool all_certified = false;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_iteration_csv(const std::filesystem::path& path,
                                const std::vector<IterationRecord>& history,
                                const std::vector<oracle::IterationCertificate>& certs) {
    std::ofstream os(path);
    if (!os) throw StageError("write", "cannot open " + path.string());
    os << "j,beta_tilde,alpha_j,c_j,ls_residual,rho_bound";
    if (!certs.empty()) os << ",rho_actual";
    os << "\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& rec = history[i];
        os << rec.iteration << ',' << fmt_double(rec.beta_tilde) << ',' << fmt_double(rec.alpha)
           << ',' << fmt_double(rec.cum_coeff) << ',' << fmt_double(rec.learned.residual) << ','
           << fmt_double(1.0 / rec.cum_coeff);
        if (!certs.empty()) os << ',' << fmt_double(certs[i].rho_actual);
        os << "\n";
    }
}

inline void write_trajectory_csv(const std::filesystem::path& path, const LtiSystem& sys,
                                 const ExperimentConfig& cfg, const Matrix& gain) {
    const Index n = sys.state_dim();
    FilterBank fb = make_filter_bank(companion_from_roots(cfg.filter_roots), sys.input_dim(),
                                     sys.output_dim());
    PlantState closed{cfg.simulation.initial_state, 0};
    PlantState open{cfg.simulation.initial_state, 0};
    std::ofstream os(path);
    if (!os) throw StageError("write", "cannot open " + path.string());
    os << "k";
    for (Index i = 0; i < n; ++i) os << ",closed_x" << i + 1;
    for (Index i = 0; i < n; ++i) os << ",open_x" << i + 1;
    os << "\n";
    const Vector zero_u = Vector::Zero(sys.input_dim());
    for (std::int64_t k = 0; k <= cfg.simulation.horizon; ++k) {
        os << k;
        for (Index i = 0; i < n; ++i) os << ',' << fmt_double(closed.x(i));
        for (Index i = 0; i < n; ++i) os << ',' << fmt_double(open.x(i));
        os << "\n";
        const Vector u = -gain * reconstruction_state(fb);
        StepResult rc = step(sys, closed, u);
        fb = filter_step(fb, u, rc.y);
        closed = std::move(rc.state);
        open = step(sys, open, zero_u).state;
    }
}

inline json result_to_json(const ExperimentConfig& cfg, const ExperimentOutcome& out) {
    json j;
    j["config"] = config_to_json(cfg);
    j["termination"] = "converged";
    j["beta_tilde"] = out.spi.beta_tilde;
    j["cum_coeff"] = out.spi.cum_coeff;
    j["rejected_betas"] = out.spi.rejected_betas;
    j["iterations"] = out.spi.history.empty() ? 0 : out.spi.history.back().iteration;
    j["rank_condition"] = {{"achieved", out.rank.achieved},
                           {"required", out.rank.required},
                           {"pass", out.rank.pass}};
    j["final_gain"] = matrix_to_json(out.spi.gain);
    json hist = json::array();
    for (const auto& rec : out.spi.history) {
        hist.push_back({{"j", rec.iteration},
                        {"beta_tilde", rec.beta_tilde},
                        {"alpha", rec.alpha},
                        {"cum_coeff", rec.cum_coeff},
                        {"ls_residual", rec.learned.residual},
                        {"gain", matrix_to_json(rec.gain)}});
    }
    j["history"] = std::move(hist);
    if (out.verified) {
        json certs = json::array();
        for (std::size_t i = 0; i < out.certificates.size(); ++i) {
            certs.push_back({{"j", out.spi.history[i].iteration},
                             {"rho_actual", out.certificates[i].rho_actual},
                             {"rho_bound", out.certificates[i].rho_bound},
                             {"pass", out.certificates[i].pass}});
        }
        j["verification"] = {{"open_loop_rho", out.open_loop_rho},
                             {"final_rho", out.certificates.back().rho_actual},
                             {"all_pass", out.all_certified},
                             {"per_iteration", std::move(certs)}};
    }
    return j;
}

} // namespace detail

// Collect, learn, verify, and export one experiment into out_dir.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg,
                                        const std::filesystem::path& out_dir) {
    const auto errors = validate_config(cfg);
    if (!errors.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw StageError("config", msg);
    }
    std::filesystem::create_directories(out_dir);

    const LtiSystem sys = build_plant(cfg.plant);
    const Matrix companion = companion_from_roots(cfg.filter_roots);
    FilterBank fb = make_filter_bank(companion, sys.input_dim(), sys.output_dim());
    const Index nr = fb.state_dim();
    const Index m = sys.input_dim();
    const Index required_rank = nr * (nr + 1) / 2 + nr * m + m * (m + 1) / 2;

    std::int64_t k_start = cfg.collection.k_start;
    if (k_start < 0) k_start = default_collection_start(cfg.filter_roots);
    std::int64_t k_end = cfg.collection.k_end;
    if (k_end < 0) {
        k_end = k_start + static_cast<std::int64_t>(std::ceil(1.2 * static_cast<double>(required_rank)));
    }

    ExperimentOutcome out;
    ExperimentLog log;
    RegressionData reg;
    try {
        InputOutputPlant plant(sys, cfg.simulation.initial_state);
        const ExcitationSpec spec = default_excitation(m, cfg.excitation.waves,
                                                       cfg.excitation.amplitude,
                                                       cfg.excitation.seed, cfg.excitation.bias);
        log = collect(plant, fb, spec, k_start, k_end);
        reg = build_regression(log);
        out.rank = rank_condition(reg);
        if (!out.rank.pass) {
            std::ostringstream msg;
            msg << "rank condition failed: achieved " << out.rank.achieved << " < required "
                << out.rank.required << "; enlarge the collection window or enrich the excitation";
            throw StageError("collect", msg.str());
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("collect", e.what());
    }

    SpiConfig learner;
    learner.Q = cfg.Q;
    learner.R = cfg.R;
    learner.delta = cfg.delta;
    learner.beta_sequence = beta_sequence(cfg);
    learner.step_safety = cfg.step_safety;
    learner.max_iterations = cfg.max_iterations;
    try {
        out.spi = run_spi(learner, log, reg);
    } catch (const std::exception& e) {
        throw StageError("learn", e.what());
    }

    if (cfg.verify) {
        try {
            const auto par = oracle::fit_parameterization(sys, fb);
            out.open_loop_rho = spectral_radius(sys.A);
            out.all_certified = true;
            for (const auto& rec : out.spi.history) {
                auto cert = oracle::verify_iteration(sys, par, rec.gain, rec.cum_coeff);
                out.all_certified = out.all_certified && cert.pass;
                out.certificates.push_back(cert);
            }
            out.verified = true;
        } catch (const std::exception& e) {
            throw StageError("verify", e.what());
        }
    }

    {
        std::ofstream os(out_dir / "config.json");
        if (!os) throw StageError("write", "cannot open " + (out_dir / "config.json").string());
        os << config_to_json(cfg).dump(2) << "\n";
    }
    {
        std::ofstream os(out_dir / "log.csv");
        if (!os) throw StageError("write", "cannot open " + (out_dir / "log.csv").string());
        write_log_csv(log, os);
    }
    detail::write_iteration_csv(out_dir / "iterations.csv", out.spi.history, out.certificates);
    detail::write_trajectory_csv(out_dir / "trajectory.csv", sys, cfg, out.spi.gain);
    {
        std::ofstream os(out_dir / "result.json");
        if (!os) throw StageError("write", "cannot open " + (out_dir / "result.json").string());
        os << detail::result_to_json(cfg, out).dump(2) << "\n";
    }
    return out;
}

// Replays the stored iteration history against the true plant named in the
// config and reports one certificate per iteration.
struct VerifyReport {
    std::vector<oracle::IterationCertificate> certificates;
    std::vector<int> iterations;
    bool terminated = false; // cumulative coefficient reached one
    bool all_pass = false;
};

inline VerifyReport verify_result(const std::filesystem::path& result_path,
                                  const std::filesystem::path& config_path) {
    std::ifstream rs(result_path);
    if (!rs) throw StageError("verify", "missing result file: " + result_path.string());
    std::ifstream cs(config_path);
    if (!cs) throw StageError("verify", "missing config file: " + config_path.string());
    json result = json::parse(rs);
    ExperimentConfig cfg = config_from_json(json::parse(cs));

    const LtiSystem sys = build_plant(cfg.plant);
    FilterBank fb = make_filter_bank(companion_from_roots(cfg.filter_roots), sys.input_dim(),
                                     sys.output_dim());
    const auto par = oracle::fit_parameterization(sys, fb);

    VerifyReport report;
    report.all_pass = true;
    double last_cum = 0.0;
    for (const auto& rec : result.at("history")) {
        const Matrix gain = matrix_from_json(rec.at("gain"), "history.gain");
        const double cum = rec.at("cum_coeff").get<double>();
        last_cum = cum;
        report.iterations.push_back(rec.at("j").get<int>());
        report.certificates.push_back(oracle::verify_iteration(sys, par, gain, cum));
        report.all_pass = report.all_pass && report.certificates.back().pass;
    }
    report.terminated = last_cum >= 1.0;
    return report;
}

} // namespace spi
