#include "cli.hpp"
#include "pmx/clients/dem.hpp"

using namespace pmx;

int main(int argc, char** argv) {
    return tools::run_tool<clients::DEMConfig>(
        "pm-dem: granular avalanche on an inclined plane", argc, argv,
        [](World& w, const clients::DEMConfig& c, const clients::RunOptions& o) {
            auto r = clients::run_dem(w, c, o);
            double excess = -INFINITY, overlap = 0.0;
            std::int64_t unresolved = 0, contacts = 0;
            for (const auto& s : r.steps) {
                excess = std::max(excess, s.coulomb_excess);
                overlap = std::max(overlap, s.max_overlap);
                unresolved += s.unresolved;
                contacts = s.contacts;
            }
            return nlohmann::json{{"client", "dem"},
                                  {"ranks", w.size()},
                                  {"particles", r.particles},
                                  {"steps", r.steps.size()},
                                  {"contacts_final", contacts},
                                  {"max_overlap", overlap},
                                  {"coulomb_cap_held", !(excess > 1e-12)},
                                  {"unresolved_contacts", unresolved},
                                  {"rebalances", r.rebalances}};
        });
}
