#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "spi/excitation_data.hpp"
#include "spi/experiment.hpp"
#include "spi/oracle_verify.hpp"

using spi::Matrix;
using spi::Vector;
namespace oracle = spi::oracle;

TEST_CASE("dlyap solves the discrete Lyapunov equation") {
    SECTION("scalar") {
        Matrix p = oracle::dlyap(Matrix::Constant(1, 1, 0.5), Matrix::Identity(1, 1));
        REQUIRE_THAT(p(0, 0), Catch::Matchers::WithinAbs(4.0 / 3.0, 1e-13));
    }
    SECTION("zero dynamics return the weight") {
        Matrix w(2, 2);
        w << 2, 1, 1, 3;
        REQUIRE((oracle::dlyap(Matrix::Zero(2, 2), w) - w).norm() < 1e-14);
    }
    SECTION("diagonal case decouples") {
        Matrix a = Matrix::Zero(2, 2);
        a(0, 0) = 0.5;
        a(1, 1) = 0.2;
        Matrix p = oracle::dlyap(a, Matrix::Identity(2, 2));
        REQUIRE_THAT(p(0, 0), Catch::Matchers::WithinAbs(4.0 / 3.0, 1e-13));
        REQUIRE_THAT(p(1, 1), Catch::Matchers::WithinAbs(25.0 / 24.0, 1e-13));
        REQUIRE(std::abs(p(0, 1)) < 1e-14);
    }
    SECTION("non-Schur input rejected before solving") {
        REQUIRE_THROWS_AS(oracle::dlyap(Matrix::Identity(2, 2), Matrix::Identity(2, 2)),
                          std::invalid_argument);
    }
}

TEST_CASE("dlyap residual stays at solver precision on random Schur matrices") {
    std::mt19937 rng(21);
    std::uniform_real_distribution<double> entry(-1.0, 1.0);
    std::uniform_int_distribution<int> dim_dist(1, 8);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = dim_dist(rng);
        Matrix a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = entry(rng);
        const double rho = spi::spectral_radius(a);
        std::uniform_real_distribution<double> target(0.05, 0.95);
        a *= target(rng) / (rho > 0 ? rho : 1.0);
        Matrix half(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) half(i, j) = entry(rng);
        Matrix w = half * half.transpose(); // positive semi-definite
        Matrix p = oracle::dlyap(a, w);
        const double residual = (a.transpose() * p * a - p + w).norm();
        REQUIRE(residual <= 1e-10 * std::max(1.0, w.norm()));
    }
}

TEST_CASE("model recursion step") {
    spi::LtiSystem sys(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 1.0),
                       Matrix::Constant(1, 1, 1.0));
    const Matrix q = Matrix::Identity(1, 1);
    const Matrix r = Matrix::Identity(1, 1);
    const Matrix qc = Matrix::Zero(1, 1);
    oracle::ModelIterate it{0, Matrix::Zero(1, 1), 0.4};

    SECTION("scalar evaluation from the compressed loop") {
        auto step = oracle::model_spi_step(sys, it, q, r, qc, 0.2);
        REQUIRE_THAT(step.value(0, 0), Catch::Matchers::WithinAbs(25.0 / 9.0, 1e-12));
        REQUIRE(step.next.iteration == 1);
        REQUIRE_THAT(step.next.cum_coeff, Catch::Matchers::WithinAbs(0.6, 1e-15));
    }
    SECTION("step size outside the admissible interval rejected with both sides") {
        REQUIRE_THROWS_WITH(oracle::model_spi_step(sys, it, q, r, qc, 0.5),
                            Catch::Matchers::ContainsSubstring("admissible interval"));
        REQUIRE_THROWS_AS(oracle::model_spi_step(sys, it, q, r, qc, -0.1),
                          std::invalid_argument);
    }
}

TEST_CASE("unit cumulative coefficient reduces to classical policy iteration") {
    Matrix a(2, 2);
    a << 0.5, 0.1, 0.0, 0.7;
    Matrix b(2, 1);
    b << 1.0, 0.5;
    spi::LtiSystem sys(a, b, Matrix::Identity(2, 2));
    const Matrix q = Matrix::Identity(2, 2);
    const Matrix r = Matrix::Identity(1, 1);
    const Matrix qc = Matrix::Zero(2, 2);

    Matrix gain = Matrix::Zero(1, 2);
    Matrix previous_value;
    for (int j = 0; j < 40; ++j) {
        Matrix value = oracle::model_policy_evaluation(sys, gain, 1.0, q, r, qc);
        if (j > 0) {
            // value matrices are non-increasing in the ordering sense
            Eigen::SelfAdjointEigenSolver<Matrix> es(previous_value - value);
            REQUIRE(es.eigenvalues().minCoeff() > -1e-10);
        }
        previous_value = value;
        gain = oracle::model_policy_improvement(sys, value, 1.0, r);
    }
    // fixed point of the evaluation-improvement recursion
    Matrix value = oracle::model_policy_evaluation(sys, gain, 1.0, q, r, qc);
    Matrix next_gain = oracle::model_policy_improvement(sys, value, 1.0, r);
    REQUIRE((next_gain - gain).norm() < 1e-12);
}

TEST_CASE("compressed recursion keeps the certified radius bound at every iteration") {
    spi::LtiSystem sys = spi::power_system_preset();
    const Matrix q = Matrix::Identity(1, 1);
    const Matrix r = Matrix::Identity(1, 1);
    const Matrix qc = 0.1 * Matrix::Identity(3, 3);
    oracle::ModelIterate it{0, Matrix::Zero(1, 3), 0.9};
    for (int j = 0; j < 60 && it.cum_coeff < 1.0; ++j) {
        REQUIRE(spi::spectral_radius(sys.A - sys.B * it.gain) < 1.0 / it.cum_coeff);
        // probe the bound, then take half of it
        Matrix value = oracle::model_policy_evaluation(sys, it.gain, it.cum_coeff, q, r, qc);
        Matrix next_gain = oracle::model_policy_improvement(sys, value, it.cum_coeff, r);
        const double bound =
            1.0 / spi::spectral_radius(sys.A - sys.B * next_gain) - it.cum_coeff;
        it = oracle::model_spi_step(sys, it, q, r, qc, 0.5 * bound).next;
    }
    REQUIRE(it.cum_coeff >= 1.0);
    REQUIRE(spi::spectral_radius(sys.A - sys.B * it.gain) < 1.0);
}

TEST_CASE("parameterization fit") {
    spi::LtiSystem sys = spi::power_system_preset();
    auto bank = spi::make_filter_bank(
        spi::companion_from_roots({{-0.1, 0.0}, {-0.2, 0.0}, {-0.3, 0.0}}), 1, 1);
    const auto par = oracle::fit_parameterization(sys, bank);

    REQUIRE(par.map.rows() == 3);
    REQUIRE(par.map.cols() == 6);
    REQUIRE((par.map * par.pinv - Matrix::Identity(3, 3)).norm() < 1e-10);

    // exactness on a fresh zero-initial-state trajectory
    auto probe = spi::default_excitation(1, 7, 3.0, 1234u);
    spi::PlantState state{Vector::Zero(3), 0};
    spi::FilterBank fb = bank;
    double worst = 0.0;
    for (int k = 0; k < 150; ++k) {
        worst = std::max(worst, (state.x - par.map * spi::reconstruction_state(fb)).norm());
        const Vector u = spi::excitation(k, probe);
        auto r = spi::step(sys, state, u);
        fb = spi::filter_step(fb, u, r.y);
        state = r.state;
    }
    REQUIRE(worst <= 1e-9);
}

TEST_CASE("iteration certificates compare the radius against the bound") {
    spi::LtiSystem sys = spi::power_system_preset();
    auto bank = spi::make_filter_bank(
        spi::companion_from_roots({{-0.1, 0.0}, {-0.2, 0.0}, {-0.3, 0.0}}), 1, 1);
    const auto par = oracle::fit_parameterization(sys, bank);

    SECTION("zero gain under the accepted compression") {
        auto cert = oracle::verify_iteration(sys, par, Matrix::Zero(1, 6), 0.9);
        REQUIRE_THAT(cert.rho_actual, Catch::Matchers::WithinAbs(1.0176, 1e-3));
        REQUIRE_THAT(cert.rho_bound, Catch::Matchers::WithinAbs(1.0 / 0.9, 1e-12));
        REQUIRE(cert.pass);
    }
    SECTION("all demo iterations are certified") {
        auto cfg = spi::demo_config();
        auto out = spi::run_experiment(cfg, "/tmp/spi_oracle_demo");
        REQUIRE(out.verified);
        REQUIRE(out.all_certified);
        REQUIRE(out.certificates.back().rho_actual > 0.90);
        REQUIRE(out.certificates.back().rho_actual < 1.0);
    }
}

TEST_CASE("learned recursion tracks the model recursion on matched step sizes") {
    // zero-initial-state collection so the data relation is exact
    auto cfg = spi::demo_config();
    spi::LtiSystem sys = spi::build_plant(cfg.plant);
    auto bank = spi::make_filter_bank(spi::companion_from_roots(cfg.filter_roots), 1, 1);
    spi::InputOutputPlant plant(sys, Vector::Zero(3));
    auto spec = spi::default_excitation(1, cfg.excitation.waves, cfg.excitation.amplitude,
                                        cfg.excitation.seed);
    auto log = spi::collect(plant, bank, spec, cfg.collection.k_start, cfg.collection.k_end);
    auto reg = spi::build_regression(log);

    spi::SpiConfig lc;
    lc.Q = cfg.Q;
    lc.R = cfg.R;
    lc.delta = cfg.delta;
    lc.beta_sequence = spi::beta_sequence(cfg);
    lc.step_safety = cfg.step_safety;
    lc.max_iterations = cfg.max_iterations;
    auto res = spi::run_spi(lc, log, reg);

    const auto par = oracle::fit_parameterization(sys, bank);
    const Matrix q_c = par.pinv.transpose() * res.value_regularizer * par.pinv;
    Matrix gain = Matrix::Zero(1, 3);
    for (std::size_t i = 0; i + 1 < res.history.size(); ++i) {
        const auto& rec = res.history[i];
        Matrix value = oracle::model_policy_evaluation(sys, gain, rec.cum_coeff, lc.Q, lc.R, q_c);
        Matrix pushed = par.map.transpose() * value * par.map;
        REQUIRE((rec.learned.value_mat - pushed).norm() <= 1e-3 * pushed.norm());
        gain = oracle::model_policy_improvement(sys, value, rec.cum_coeff, lc.R);
        REQUIRE((res.history[i + 1].gain - gain * par.map).norm() <=
                1e-3 * (gain * par.map).norm());
    }
}
