#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "pmx/dlb.hpp"
#include "pmx/geometry.hpp"

namespace pmx::clients {

/// Run-time switches shared by the three clients; they mirror the command
/// line flags.
struct RunOptions {
    std::optional<int> steps;
    std::filesystem::path out_dir;
    int checkpoint_every = 0;
    std::filesystem::path restart;
    int vtk_every = 0;
    bool dlb = false;
    std::filesystem::path trace;
};

/// Written next to every checkpoint so a restart knows where it left off.
struct RestartMark {
    std::string client;
    int step = 0;
};

void write_restart_mark(const std::filesystem::path& checkpoint, const RestartMark& mark);
RestartMark read_restart_mark(const std::filesystem::path& checkpoint, const std::string& client);

/// `<out>/<stem>_<step>` with the step zero-padded to six digits.
std::filesystem::path step_path(const std::filesystem::path& out, const std::string& stem, int step);

AxisBox box_from(const std::vector<double>& low, const std::vector<double>& high);

/// Stop-At-Rise driver over a per-rank cost signal. `observe` returns true
/// when a rebalance should happen now.
class SarDriver {
public:
    SarDriver(World& world, bool enabled, const std::filesystem::path& trace, double prior_cost);
    bool observe(std::size_t step, double my_cost);
    void rebalanced(double cost);
    int rebalances() const { return rebalances_; }

private:
    World* world_;
    bool enabled_;
    CostLedger ledger_;
    SarState sar_;
    SarTrace trace_;
    int rebalances_ = 0;
    double last_delta_ = 0.0;
    std::vector<double> last_times_;
    std::size_t last_step_ = 0;
};

}  // namespace pmx::clients
