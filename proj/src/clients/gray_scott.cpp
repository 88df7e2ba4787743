#include "pmx/clients/gray_scott.hpp"

#include <algorithm>
#include <random>

#include "pmx/io/checkpoint.hpp"
#include "pmx/io/vtk.hpp"

namespace pmx::clients {

namespace {

constexpr GsPreset kPresets[] = {
    {"alpha", 0.010, 0.047}, {"gamma", 0.022, 0.051}, {"delta", 0.030, 0.055}, {"epsilon", 0.018, 0.055},
    {"zeta", 0.022, 0.061},  {"eta", 0.034, 0.063},   {"theta", 0.030, 0.057}, {"iota", 0.046, 0.0594},
    {"kappa", 0.050, 0.063}, {"lambda", 0.026, 0.061}, {"mu", 0.046, 0.065},
};

DecompositionPtr gs_decomposition(World& world, const GSConfig& c) {
    c.validate();
    const std::size_t dim = c.grid.size();
    std::vector<double> hi(dim);
    for (std::size_t d = 0; d < dim; ++d) hi[d] = static_cast<double>(c.grid[d]) * c.spacing;
    DecompositionOptions opt;
    if (!c.cells.empty()) opt.cells_per_axis = c.cells;
    return Decomposition::build(world, box_from(std::vector<double>(dim, 0.0), hi), all_periodic(dim),
                                GhostSpec(c.spacing), opt);
}

/// Seeded noise in [-1, 1] that depends only on the global node key.
double node_noise(std::uint64_t seed, const GridKey& k, const std::vector<std::int64_t>& n) {
    std::uint64_t lin = 0, stride = 1;
    for (std::size_t d = 0; d < k.dim(); ++d) {
        lin += static_cast<std::uint64_t>(k[d]) * stride;
        stride *= static_cast<std::uint64_t>(n[d]);
    }
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + lin);
    return std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
}

}  // namespace

void GSConfig::validate() const {
    if (!(Du > 0) || !(Dv >= 0) || !(F >= 0) || !(k >= 0))
        throw UsageError("gray-scott: Du must be positive and Dv, F, k nonnegative");
    if (grid.empty()) throw UsageError("gray-scott: grid must have at least one axis");
    for (auto n : grid)
        if (n < 3) throw UsageError("gray-scott: need at least 3 nodes per axis");
    if (!(spacing > 0) || !(dt > 0)) throw UsageError("gray-scott: spacing and dt must be positive");
    if (steps < 0) throw UsageError("gray-scott: steps must be nonnegative");
    const double bound = spacing * spacing / (4.0 * static_cast<double>(grid.size()) * std::max(Du, Dv));
    if (dt > bound)
        throw UsageError("gray-scott: dt = " + std::to_string(dt) + " exceeds the stability bound " +
                         std::to_string(bound));
}

void to_json(nlohmann::json& j, const GSConfig& c) {
    j = nlohmann::json{{"Du", c.Du},         {"Dv", c.Dv},     {"F", c.F},         {"k", c.k},
                       {"grid", c.grid},     {"spacing", c.spacing}, {"dt", c.dt}, {"steps", c.steps},
                       {"square", c.square}, {"noise", c.noise}, {"seed", c.seed}, {"cells", c.cells},
                       {"output_every", c.output_every}};
}

void from_json(const nlohmann::json& j, GSConfig& c) {
    GSConfig d;
    if (j.contains("preset")) {
        const auto name = j.at("preset").get<std::string>();
        auto it = std::find_if(std::begin(kPresets), std::end(kPresets), [&](const GsPreset& p) { return name == p.name; });
        if (it == std::end(kPresets)) throw UsageError("gray-scott: unknown preset '" + name + "'");
        d.F = it->F;
        d.k = it->k;
    }
    c.Du = j.value("Du", d.Du);
    c.Dv = j.value("Dv", d.Dv);
    c.F = j.value("F", d.F);
    c.k = j.value("k", d.k);
    c.grid = j.value("grid", d.grid);
    c.spacing = j.value("spacing", d.spacing);
    c.dt = j.value("dt", d.dt);
    c.steps = j.value("steps", d.steps);
    c.square = j.value("square", d.square);
    c.noise = j.value("noise", d.noise);
    c.seed = j.value("seed", d.seed);
    c.cells = j.value("cells", d.cells);
    c.output_every = j.value("output_every", d.output_every);
}

std::span<const GsPreset> gs_presets() { return kPresets; }

void gs_step(DistributedGrid& grid, const GSConfig& c, const StencilView& star) {
    using S = GsSimulation;
    const std::size_t dim = grid.dim();
    std::vector<double> inv_h2(dim);
    for (std::size_t d = 0; d < dim; ++d) inv_h2[d] = 1.0 / (grid.spacing(d) * grid.spacing(d));
    star.for_each([&](std::size_t b, std::size_t center, std::span<const std::ptrdiff_t> offs) {
        auto& data = grid.block(b).data;
        const double* u = data.real_column(S::u).data();
        const double* v = data.real_column(S::v).data();
        const double uc = u[center], vc = v[center];
        double lap_u = 0.0, lap_v = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const auto lo = static_cast<std::ptrdiff_t>(center) + offs[1 + 2 * d];
            const auto hi = static_cast<std::ptrdiff_t>(center) + offs[2 + 2 * d];
            lap_u += (u[lo] + u[hi] - 2.0 * uc) * inv_h2[d];
            lap_v += (v[lo] + v[hi] - 2.0 * vc) * inv_h2[d];
        }
        const double uvv = uc * vc * vc;
        data.real_column(S::u_next)[center] = uc + c.dt * (c.Du * lap_u - uvv + c.F * (1.0 - uc));
        data.real_column(S::v_next)[center] = vc + c.dt * (c.Dv * lap_v + uvv - (c.F + c.k) * vc);
    });
}

PropertySchema GsSimulation::schema() { return {scalar("u"), scalar("v"), scalar("u_next"), scalar("v_next")}; }

GsSimulation::GsSimulation(World& world, GSConfig config)
    : world_(&world),
      cfg_(std::move(config)),
      grid_(world, gs_decomposition(world, cfg_), cfg_.grid, schema()),
      star_(grid_, star_stencil(cfg_.grid.size())) {
    const std::size_t dim = cfg_.grid.size();
    grid_.for_each_owned([&](std::size_t b, std::size_t idx, const GridKey& key) {
        bool inside = true;
        for (std::size_t d = 0; d < dim; ++d) {
            const double n = static_cast<double>(cfg_.grid[d]);
            const double lo = 0.5 * n * (1.0 - cfg_.square), hi = 0.5 * n * (1.0 + cfg_.square);
            inside = inside && static_cast<double>(key[d]) >= lo && static_cast<double>(key[d]) < hi;
        }
        auto& data = grid_.block(b).data;
        if (inside) {
            const double r = node_noise(cfg_.seed, key, cfg_.grid);
            data.real(u, idx)[0] = 0.5 * (1.0 + cfg_.noise * r);
            data.real(v, idx)[0] = 0.25 * (1.0 + cfg_.noise * r);
        } else {
            data.real(u, idx)[0] = 1.0;
            data.real(v, idx)[0] = 0.0;
        }
    });
}

GsSimulation::GsSimulation(World& world, GSConfig config, DistributedGrid restored, int step)
    : world_(&world),
      cfg_(std::move(config)),
      grid_(std::move(restored)),
      star_(grid_, star_stencil(cfg_.grid.size())),
      step_(step) {
    cfg_.validate();
    if (grid_.nodes_per_axis() != cfg_.grid) throw IncompatibleSchemaError("gray-scott: restored grid has another size");
}

void GsSimulation::step() {
    grid_.ghost_get({u, v});
    gs_step(grid_, cfg_, star_);
    for (std::size_t b = 0; b < grid_.block_count(); ++b) {
        auto& data = grid_.block(b).data;
        std::swap_ranges(data.real_column(u).begin(), data.real_column(u).end(), data.real_column(u_next).begin());
        std::swap_ranges(data.real_column(v).begin(), data.real_column(v).end(), data.real_column(v_next).begin());
    }
    ++step_;
}

void GsSimulation::redistribute(DecompositionPtr next) {
    grid_ = grid_.redistribute(std::move(next));
    star_ = StencilView(grid_, star_stencil(cfg_.grid.size()));
}

GsResult gs_statistics(const DistributedGrid& grid) {
    double su = 0.0, sv = 0.0, svv = 0.0;
    grid.for_each_owned([&](std::size_t b, std::size_t idx, const GridKey&) {
        const double uu = grid.block(b).data.real(GsSimulation::u, idx)[0];
        const double vv = grid.block(b).data.real(GsSimulation::v, idx)[0];
        su += uu;
        sv += vv;
        svv += vv * vv;
    });
    World& w = grid.world();
    const double n = static_cast<double>(grid.global_node_count());
    GsResult r;
    r.u_mean = w.allreduce_sum(su) / n;
    r.v_mean = w.allreduce_sum(sv) / n;
    r.v_variance = std::max(0.0, w.allreduce_sum(svv) / n - r.v_mean * r.v_mean);
    return r;
}

GsResult run_gray_scott(World& world, GSConfig config, const RunOptions& opts) {
    if (opts.steps) config.steps = *opts.steps;
    config.validate();
    std::optional<GsSimulation> sim;
    if (!opts.restart.empty()) {
        auto mark = read_restart_mark(opts.restart, "gray-scott");
        auto info = checkpoint_inspect(opts.restart.string());
        auto decomp = checkpoint_decomposition(world, info);
        sim.emplace(world, config, checkpoint_load_grid(world, opts.restart.string(), decomp, GsSimulation::schema()),
                    mark.step);
    } else {
        sim.emplace(world, config);
    }
    if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

    const PropId fields[] = {GsSimulation::u, GsSimulation::v};
    const double per_rank = static_cast<double>(sim->grid().global_node_count()) / world.size();
    SarDriver sar(world, opts.dlb, opts.trace, per_rank);
    const int last = sim->step_count() + config.steps;
    while (sim->step_count() < last) {
        sim->step();
        const int s = sim->step_count();
        auto& grid = sim->grid();
        if (sar.observe(static_cast<std::size_t>(s), static_cast<double>(grid.owned_node_count()))) {
            const auto& decomp = *grid.decomposition();
            std::vector<double> costs(decomp.grid().cell_count(), 0.0);
            const double nodes_per_cell = static_cast<double>(grid.global_node_count()) / static_cast<double>(costs.size());
            std::fill(costs.begin(), costs.end(), nodes_per_cell);
            auto outcome = rebalance(world, decomp, costs, costs, static_cast<std::size_t>(s));
            sim->redistribute(outcome.decomposition);
            sar.rebalanced(static_cast<double>(outcome.moved_cells) * nodes_per_cell / world.size());
        }
        if (opts.vtk_every > 0 && s % opts.vtk_every == 0 && !opts.out_dir.empty())
            vtk_write_grid(sim->grid(), step_path(opts.out_dir, "gs", s).string(), fields);
        if (opts.checkpoint_every > 0 && s % opts.checkpoint_every == 0 && !opts.out_dir.empty()) {
            auto path = step_path(opts.out_dir, "gs", s);
            path += ".ckpt";
            checkpoint_save(sim->grid(), path.string());
            if (world.rank() == 0) write_restart_mark(path, {"gray-scott", s});
        }
    }
    auto r = gs_statistics(sim->grid());
    r.rebalances = sar.rebalances();
    return r;
}

}  // namespace pmx::clients
