#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmx/clients/common.hpp"
#include "pmx/mesh.hpp"

namespace pmx::clients {

struct GSConfig {
    double Du = 2e-5;
    double Dv = 1e-5;
    double F = 0.026;
    double k = 0.061;
    std::vector<std::int64_t> grid{128, 128};
    double spacing = 2.5 / 128;
    double dt = 1.0;
    int steps = 5000;
    /// Side of the central perturbed square as a fraction of the domain.
    double square = 0.15;
    double noise = 0.01;
    std::uint64_t seed = 7;
    /// Overrides the automatic sub-sub-domain counts.
    std::vector<std::int64_t> cells;
    int output_every = 500;

    /// Throws UsageError on nonpositive parameters or when dt exceeds
    /// h^2 / (4 D max(Du, Dv)).
    void validate() const;
};

void to_json(nlohmann::json& j, const GSConfig& c);
void from_json(const nlohmann::json& j, GSConfig& c);

struct GsPreset {
    const char* name;
    double F;
    double k;
};
/// A few (F, k) points from Pearson's pattern classes. Approximate and not
/// normative: they pick a regime, they do not reproduce a specific figure.
std::span<const GsPreset> gs_presets();

/// One FTCS update on owned nodes: reads u, v (ghosts must be current) and
/// writes the new values into u_next, v_next.
void gs_step(DistributedGrid& grid, const GSConfig& c, const StencilView& star);

class GsSimulation {
public:
    GsSimulation(World& world, GSConfig config);
    GsSimulation(World& world, GSConfig config, DistributedGrid restored, int step);

    static PropertySchema schema();
    static constexpr PropId u = 0, v = 1, u_next = 2, v_next = 3;

    DistributedGrid& grid() { return grid_; }
    const GSConfig& config() const { return cfg_; }
    int step_count() const { return step_; }

    void step();
    void redistribute(DecompositionPtr next);

private:
    World* world_;
    GSConfig cfg_;
    DistributedGrid grid_;
    StencilView star_;
    int step_ = 0;
};

struct GsResult {
    double u_mean = 0.0;
    double v_mean = 0.0;
    double v_variance = 0.0;
    int rebalances = 0;
};

GsResult gs_statistics(const DistributedGrid& grid);

/// Full client run with outputs per `opts`. Collective.
GsResult run_gray_scott(World& world, GSConfig config, const RunOptions& opts = {});

}  // namespace pmx::clients
