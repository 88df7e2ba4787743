#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "pmx/io/checkpoint.hpp"
#include "support.hpp"

namespace pmx::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("pmx_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir;
}

inline PropertySchema checkpoint_schema() {
    return {scalar("mass"), vector_d("vel"), scalar("tag", BaseType::Int64), var_list("links", scalar("", BaseType::Int64))};
}

inline DecompositionPtr matrix_decomposition(World& w) {
    DecompositionOptions opt;
    opt.cells_per_axis = std::vector<std::int64_t>{8, 8};
    return Decomposition::build(w, AxisBox(Point{0, 0}, Point{1, 1}), all_periodic(2), GhostSpec(0.0625), opt);
}

/// Random particle cloud with values derived from the gid, mapped to owners.
inline ParticleSet matrix_particles(World& w, DecompositionPtr d, std::size_t n) {
    ParticleSet ps(w, d, checkpoint_schema());
    if (w.rank() == 0) {
        auto cloud = random_cloud(d->domain(), n, 99);
        for (std::size_t k = 0; k < n; ++k) {
            const auto gid = static_cast<std::int64_t>(k * 7 + 3);
            auto i = ps.add(cloud[k], gid);
            ps.real(0, i)[0] = std::sin(static_cast<double>(gid)) / 3.0;
            ps.real(1, i)[0] = std::cos(static_cast<double>(gid)) * 1e-7;
            ps.real(1, i)[1] = 1.0 / (1.0 + static_cast<double>(gid));
            ps.integer(2, i)[0] = gid * gid - 5;
            auto& links = ps.columns().integer_list(3, i);
            for (std::int64_t j = 0; j < gid % 5; ++j) links.push_back(gid + j);
        }
    }
    ps.map_global();
    return ps;
}

inline DistributedGrid matrix_grid(World& w, DecompositionPtr d) {
    DistributedGrid g(w, d, {32, 32}, {scalar("u"), vector_d("flux")});
    g.for_each_owned([&](std::size_t b, std::size_t idx, const GridKey& k) {
        const double x = static_cast<double>(k[0]), y = static_cast<double>(k[1]);
        g.block(b).data.real(0, idx)[0] = std::exp(-x / 7.0) * std::sin(y);
        g.block(b).data.real(1, idx)[0] = x / 3.0;
        g.block(b).data.real(1, idx)[1] = 1.0 / (y + 0.1);
    });
    return g;
}

struct MatrixOutcome {
    bool particles_equal = false;
    bool grid_equal = false;
    std::size_t particles = 0;
};

/// Saves on `p` ranks and reloads on `q` ranks; compares the gid->state and
/// key->value maps byte for byte.
inline MatrixOutcome checkpoint_roundtrip(int p, int q, const std::filesystem::path& dir, std::size_t n = 400) {
    const std::string ppath = (dir / ("particles_" + std::to_string(p) + ".ckpt")).string();
    const std::string gpath = (dir / ("grid_" + std::to_string(p) + ".ckpt")).string();
    std::map<std::int64_t, Bytes> saved_p;
    std::map<std::vector<std::int64_t>, Bytes> saved_g;
    world_spawn(p, [&](World& w) {
        auto d = matrix_decomposition(w);
        auto ps = matrix_particles(w, d, n);
        auto g = matrix_grid(w, d);
        checkpoint_save(ps, ppath);
        checkpoint_save(g, gpath);
        auto sp = gather_state(ps);
        auto sg = gather_grid(g);
        if (w.rank() == 0) {
            saved_p = std::move(sp);
            saved_g = std::move(sg);
        }
    });
    MatrixOutcome out;
    world_spawn(q, [&](World& w) {
        auto d = matrix_decomposition(w);
        auto ps = checkpoint_load_particles(w, ppath, d, checkpoint_schema());
        auto g = checkpoint_load_grid(w, gpath, d);
        auto lp = gather_state(ps);
        auto lg = gather_grid(g);
        const bool owned_ok = w.allreduce_sum(static_cast<std::int64_t>(!owns_its_particles(ps))) == 0;
        if (w.rank() == 0) {
            out.particles_equal = owned_ok && lp == saved_p;
            out.grid_equal = lg == saved_g;
            out.particles = lp.size();
        }
    });
    return out;
}

}  // namespace pmx::testing
