// Batch front-end for the output-feedback stabilizing policy iteration
// pipeline: configure, run, and export experiments, plus a replay-style
// verifier for stored results.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spi/experiment.hpp"

namespace {

int stage_exit_code(const std::string& stage) {
    if (stage == "config") return 1;
    if (stage == "collect") return 2;
    if (stage == "learn") return 3;
    if (stage == "verify") return 4;
    return 5;
}

std::string delta_dir_name(double delta) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "delta_%g", delta);
    return buf;
}

void print_summary(const spi::ExperimentConfig& cfg, const spi::ExperimentOutcome& out,
                   const std::filesystem::path& out_dir) {
    std::cout << "rank condition: " << out.rank.achieved << "/" << out.rank.required
              << (out.rank.pass ? " (pass)" : " (FAIL)") << "\n";
    std::cout << "accepted beta_tilde: " << out.spi.beta_tilde
              << " after " << out.spi.rejected_betas << " rejections\n";
    std::cout << "iterations: " << (out.spi.history.empty() ? 0 : out.spi.history.back().iteration)
              << ", cumulative coefficient: " << out.spi.cum_coeff << "\n";
    if (out.verified) {
        std::cout << "open-loop spectral radius: " << out.open_loop_rho << "\n";
        std::cout << "closed-loop spectral radius: " << out.certificates.back().rho_actual
                  << " (bound " << out.certificates.back().rho_bound << ", "
                  << (out.all_certified ? "all iterations certified" : "CERTIFICATE VIOLATION")
                  << ")\n";
    }
    std::cout << "delta: " << cfg.delta << ", artifacts in " << out_dir.string() << "\n";
}

int run_with_sweep(spi::ExperimentConfig cfg, const std::filesystem::path& out_dir,
                   const std::vector<double>& sweep) {
    if (sweep.empty()) {
        const auto out = spi::run_experiment(cfg, out_dir);
        print_summary(cfg, out, out_dir);
        return 0;
    }
    for (double delta : sweep) {
        spi::ExperimentConfig swept = cfg;
        swept.delta = delta;
        const auto dir = out_dir / delta_dir_name(delta);
        const auto out = spi::run_experiment(swept, dir);
        print_summary(swept, out, dir);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data-driven output-feedback stabilizing policy iteration"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::vector<double> sweep;
    std::uint32_t seed = 0;
    bool no_verify = false;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", out_dir, "Output directory");
        cmd->add_option("--sweep-delta", sweep, "Run once per delta value (default 0.1 0.4 0.7 0.9)")
            ->expected(0, -1);
        cmd->add_option("--seed", seed, "Override the excitation phase seed");
        cmd->add_flag("--no-verify", no_verify, "Skip the model-based verification outputs");
    };

    auto* demo = app.add_subcommand("demo", "Reproduce the built-in power-system experiment");
    add_common(demo);

    auto* run = app.add_subcommand("run", "Run an experiment from a config file");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    add_common(run);

    auto* verify = app.add_subcommand("verify", "Re-check a stored result against the true plant");
    std::string result_path;
    verify->add_option("result", result_path, "result.json from a prior run")->required();
    verify->add_option("--config", config_path, "Experiment config (JSON)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(verify)) {
            const auto report = spi::verify_result(result_path, config_path);
            for (std::size_t i = 0; i < report.certificates.size(); ++i) {
                const auto& c = report.certificates[i];
                std::cout << "j=" << report.iterations[i] << " rho_actual=" << c.rho_actual
                          << " rho_bound=" << c.rho_bound << (c.pass ? " PASS" : " FAIL") << "\n";
            }
            if (!report.terminated) {
                std::cout << "non-terminated run: cumulative coefficient never reached one\n";
            }
            if (!report.all_pass || !report.terminated) {
                std::cerr << "[verify] verification failed\n";
                return 4;
            }
            std::cout << "all iterations certified\n";
            return 0;
        }

        spi::ExperimentConfig cfg;
        CLI::App* active = app.got_subcommand(demo) ? demo : run;
        if (active == demo) {
            cfg = spi::demo_config();
        } else {
            std::ifstream is(config_path);
            if (!is) throw spi::StageError("config", "cannot open config file: " + config_path);
            cfg = spi::config_from_json(nlohmann::json::parse(is));
        }
        if (active->count("--seed") > 0) cfg.excitation.seed = seed;
        if (no_verify) cfg.verify = false;

        std::vector<double> deltas = sweep;
        // a bare --sweep-delta parses as one implicit zero; zero is never a
        // legal delta, so strip it and fall back to the standard four values
        std::erase(deltas, 0.0);
        if (active->count("--sweep-delta") > 0 && deltas.empty()) deltas = {0.1, 0.4, 0.7, 0.9};
        return run_with_sweep(std::move(cfg), out_dir, deltas);
    } catch (const spi::StageError& e) {
        std::cerr << "[" << e.stage << "] " << e.what() << "\n";
        return stage_exit_code(e.stage);
    } catch (const std::exception& e) {
        std::cerr << "[error] " << e.what() << "\n";
        return 5;
    }
}
