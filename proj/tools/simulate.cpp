#include "msm/config.hpp"
#include "msm/evolution.hpp"
#include "msm/output.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Quasistatic hysteresis of a periodic MSM-polymer composite cell"};
    std::string config_path;
    std::string out_dir;
    std::string protocol;
    bool free_macro = false;
    std::string workpiece;
    app.add_option("--config", config_path, "configuration file")->required()->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory")->required();
    app.add_option("--protocol", protocol, "uniaxial, biaxial or rotated:<deg>");
    app.add_flag("--free-macro-strain", free_macro, "minimize over the macroscopic strain A");
    app.add_option("--workpiece", workpiece, "macroscopic stray-field correction")
        ->check(CLI::IsMember({"none", "circular"}));
    CLI11_PARSE(app, argc, argv);

    try {
        msm::SimulationConfig cfg = msm::load_config(config_path);
        if (!protocol.empty()) {
            cfg.protocol = msm::build_protocol(protocol, cfg.protocol.peak, cfg.protocol.steps_per_leg);
        }
        if (free_macro) {
            cfg.solver.free_macro_strain = true;
        }
        if (!workpiece.empty()) {
            cfg.geometry.workpiece = workpiece == "circular" ? msm::Workpiece::circular : msm::Workpiece::none;
        }
        cfg.validate();

        std::cerr << "protocol: " << cfg.protocol.description << ", " << cfg.protocol.samples.size()
                  << " samples\n";
        const auto t0 = std::chrono::steady_clock::now();
        const msm::Trace trace = msm::run_evolution(cfg);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        msm::write_trace(trace, out_dir);
        msm::emit_plot_data(trace, cfg.protocol.primary_direction(), out_dir);
        const msm::SummaryStats stats = msm::summarize(trace, cfg);
        const std::string js = msm::summary_json(stats, trace, cfg);
        std::ofstream(std::filesystem::path(out_dir) / "summary.json") << js;
        std::ofstream(std::filesystem::path(out_dir) / "config.ini") << msm::serialize_config(cfg);
        std::cout << js;
        std::cerr << "done in " << secs << " s\n";
        if (trace.budget_exceeded) {
            std::cerr << "warning: backtracking budget exceeded\n";
            return 3;
        }
    } catch (const msm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
