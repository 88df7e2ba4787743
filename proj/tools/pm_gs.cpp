#include "cli.hpp"
#include "pmx/clients/gray_scott.hpp"

using namespace pmx;

int main(int argc, char** argv) {
    return tools::run_tool<clients::GSConfig>(
        "pm-gs: Gray-Scott reaction-diffusion", argc, argv,
        [](World& w, const clients::GSConfig& c, const clients::RunOptions& o) {
            auto r = clients::run_gray_scott(w, c, o);
            return nlohmann::json{{"client", "gray_scott"}, {"ranks", w.size()},     {"F", c.F},
                                  {"k", c.k},                {"u_mean", r.u_mean},   {"v_mean", r.v_mean},
                                  {"v_variance", r.v_variance}, {"rebalances", r.rebalances}};
        });
}
