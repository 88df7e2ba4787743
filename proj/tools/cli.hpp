#pragma once

#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pmx/clients/common.hpp"
#include "pmx/error.hpp"
#include "pmx/tcp.hpp"
#include "pmx/transport.hpp"

namespace pmx::tools {

struct CommonFlags {
    std::string config;
    int ranks = 1;
    std::string tcp;
    int rank = 0;
    clients::RunOptions run;
    std::string dlb = "off";
};

inline void add_common_flags(CLI::App& app, CommonFlags& f) {
    app.add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--ranks", f.ranks, "In-process ranks (one thread each)")->check(CLI::PositiveNumber);
    app.add_option("--tcp", f.tcp, "Host list (host:port per line) for a TCP world")->check(CLI::ExistingFile);
    app.add_option("--rank", f.rank, "This process's rank in the TCP host list");
    app.add_option("--steps", f.run.steps, "Override the configured step count");
    app.add_option("--out", f.run.out_dir, "Output directory for VTK, checkpoints and traces");
    app.add_option("--checkpoint-every", f.run.checkpoint_every, "Checkpoint cadence in steps (0 = never)");
    app.add_option("--restart", f.run.restart, "Resume from this checkpoint")->check(CLI::ExistingFile);
    app.add_option("--vtk-every", f.run.vtk_every, "VTK cadence in steps (0 = never)");
    app.add_option("--dlb", f.dlb, "Dynamic load balancing")->check(CLI::IsMember({"on", "off"}));
    app.add_option("--trace", f.run.trace, "Per-step SAR trace (CSV, written by rank 0)");
}

template <typename Config>
Config load_config(const std::string& path) {
    if (path.empty()) return Config{};
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
        return j.get<Config>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config '" + path + "': " + e.what());
    }
}

inline void report_error(const std::string& category, const std::string& message) {
    std::cerr << nlohmann::json{{"error", category}, {"message", message}}.dump() << '\n';
}

/// Parses the shared flags, runs `body` on every rank of the selected world
/// and prints the JSON it returns on rank 0. Errors are reported as one JSON
/// object on stderr and a nonzero exit code.
template <typename Config, typename Body>
int run_tool(const std::string& name, int argc, char** argv, Body&& body) {
    CLI::App app{name};
    CommonFlags flags;
    add_common_flags(app, flags);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        report_error("usage", e.what());
        return 2;
    }
    flags.run.dlb = flags.dlb == "on";

    try {
        const auto config = load_config<Config>(flags.config);
        config.validate();
        auto program = [&](World& w) {
            nlohmann::json summary = body(w, config, flags.run);
            if (w.rank() == 0) std::cout << summary.dump(2) << '\n';
        };
        if (!flags.tcp.empty()) {
            TcpConfig tcp;
            tcp.hosts = read_hostlist(flags.tcp);
            tcp.rank = flags.rank;
            World world(make_tcp_backend(tcp));
            program(world);
        } else {
            world_spawn(flags.ranks, program);
        }
    } catch (const Error& e) {
        report_error(e.category(), e.what());
        return e.category() == std::string("usage") ? 2 : 1;
    } catch (const std::exception& e) {
        report_error("internal", e.what());
        return 1;
    }
    return 0;
}

}  // namespace pmx::tools
