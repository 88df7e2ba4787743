#include "cli.hpp"
#include "pmx/clients/md.hpp"

using namespace pmx;

int main(int argc, char** argv) {
    return tools::run_tool<clients::LJConfig>(
        "pm-md: Lennard-Jones molecular dynamics", argc, argv,
        [](World& w, const clients::LJConfig& c, const clients::RunOptions& o) {
            auto r = clients::run_md(w, c, o);
            const auto& first = r.trace.front();
            const auto& last = r.trace.back();
            double drift = 0.0;
            for (const auto& e : r.trace) drift = std::max(drift, std::abs(e.total - first.total) / std::abs(first.total));
            return nlohmann::json{{"client", "md"},
                                  {"ranks", w.size()},
                                  {"steps", last.step - first.step},
                                  {"final_step", last.step},
                                  {"energy_initial", first.total},
                                  {"energy_final", last.total},
                                  {"kinetic_final", last.kinetic},
                                  {"max_relative_drift", drift},
                                  {"rebalances", r.rebalances}};
        });
}
