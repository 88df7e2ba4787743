#include <doctest.h>

#include <cmath>
#include <random>

#include "pmx/error.hpp"
#include "pmx/mesh.hpp"
#include "support.hpp"

using namespace pmx;
using namespace pmx::testing;

namespace {

AxisBox unit(std::size_t dim) { return AxisBox(Point(dim, 0.0), Point(dim, 1.0)); }

DecompositionPtr decompose(World& w, std::size_t dim, BoundaryConditions bc, double ghost,
                           std::vector<std::int64_t> cells) {
    DecompositionOptions opt;
    opt.cells_per_axis = std::move(cells);
    return Decomposition::build(w, unit(dim), std::move(bc), GhostSpec(ghost), opt);
}

void fill_random(DistributedGrid& g, std::uint64_t seed) {
    g.for_each_owned([&](std::size_t b, std::size_t idx, const GridKey& k) {
        std::uint64_t h = seed;
        for (std::size_t d = 0; d < k.dim(); ++d) h = h * 1000003u + static_cast<std::uint64_t>(k[d] + 7);
        std::mt19937_64 rng(h);
        for (PropId p = 0; p < g.schema().size(); ++p)
            for (auto& v : g.block(b).data.real(p, idx)) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    });
}

std::int64_t wrap(std::int64_t k, std::int64_t n) { return ((k % n) + n) % n; }

}  // namespace

TEST_CASE("grid_create sizes and alignment") {
    world_spawn(1, [](World& w) {
        DistributedGrid g(w, decompose(w, 2, all_periodic(2), 0.0, {4, 4}), {64, 64}, {scalar("u")});
        CHECK(g.block_count() == 1);
        CHECK(g.owned_node_count() == 4096);
        CHECK_THROWS_AS(DistributedGrid(w, decompose(w, 2, all_periodic(2), 0.0, {4, 4}), {30, 64}, {scalar("u")}),
                        UsageError);
        DistributedGrid big(w, decompose(w, 3, all_periodic(3), 0.0, {2, 2, 2}), {256, 256, 256},
                            {scalar("u"), scalar("v")});
        CHECK(big.owned_node_count() == 256 * 256 * 256);
    });
    auto counts = world_spawn(4, [](World& w) {
        DistributedGrid g(w, decompose(w, 2, all_periodic(2), 0.05, {8, 8}), {64, 64}, {scalar("u")});
        return g.owned_node_count();
    });
    CHECK(counts[0] + counts[1] + counts[2] + counts[3] == 4096);
}

TEST_CASE("grid get and set") {
    world_spawn(1, [](World& w) {
        DistributedGrid g(w, decompose(w, 2, all_periodic(2), 0.1, {2, 2}), {10, 10}, {scalar("u"), vector_d("v")});
        g.set(GridKey{3, 4}, 0, 2.5);
        CHECK(g.get(GridKey{3, 4}, 0)[0] == 2.5);
        std::vector<double> v{1.0, -1.0};
        g.set(GridKey{9, 9}, 1, v);
        CHECK(g.get(GridKey{9, 9}, 1)[1] == -1.0);
        CHECK_THROWS_AS(g.set(GridKey{-1, 0}, 0, 1.0), UsageError);
        CHECK_THROWS_AS(g.get(GridKey{50, 0}, 0), UsageError);
    });
}

TEST_CASE("grid ghost_get on a periodic ring wraps onto itself") {
    world_spawn(1, [](World& w) {
        auto d = Decomposition::from_assignment(w, SubSubGrid{unit(1), {1}}, {0}, all_periodic(1), GhostSpec(0.125));
        DistributedGrid g(w, d, {8}, {scalar("u")});
        CHECK(g.frame()[0] == 1);
        for (std::int64_t i = 0; i < 8; ++i) g.set(GridKey{i}, 0, double(i) + 0.5);
        g.ghost_get();
        CHECK(g.get(GridKey{-1}, 0)[0] == 7.5);
        CHECK(g.get(GridKey{8}, 0)[0] == 0.5);

        g.block(0).data.real(0, g.block(0).index(GridKey{-1}))[0] = 10.0;
        g.block(0).data.real(0, g.block(0).index(GridKey{8}))[0] = 20.0;
        g.ghost_put_sum({0});
        CHECK(g.get(GridKey{7}, 0)[0] == 17.5);
        CHECK(g.get(GridKey{0}, 0)[0] == 20.5);
    });
}

TEST_CASE("non-periodic exterior frames are left alone and zero frames are a no-op") {
    world_spawn(2, [](World& w) {
        auto d = Decomposition::from_assignment(w, SubSubGrid{unit(1), {2}}, {0, 1}, all_non_periodic(1), GhostSpec(0.1));
        DistributedGrid g(w, d, {10}, {scalar("u")});
        auto& blk = g.block(0);
        for (std::size_t i = 0; i < blk.data.size(); ++i) blk.data.real(0, i)[0] = -99.0;
        g.for_each_owned([&](std::size_t b, std::size_t idx, const GridKey& k) { g.block(b).data.real(0, idx)[0] = double(k[0]); });
        g.ghost_get();
        if (w.rank() == 0) {
            CHECK(g.get(GridKey{5}, 0)[0] == 5.0);
            CHECK(g.get(GridKey{-1}, 0)[0] == -99.0);
        } else {
            CHECK(g.get(GridKey{4}, 0)[0] == 4.0);
            CHECK(g.get(GridKey{10}, 0)[0] == -99.0);
        }

        auto d0 = Decomposition::from_assignment(w, SubSubGrid{unit(1), {2}}, {0, 1}, all_periodic(1), GhostSpec(0.0));
        DistributedGrid z(w, d0, {10}, {scalar("u")});
        CHECK(z.frame()[0] == 0);
        auto before = gather_grid(z);
        z.ghost_get();
        CHECK(gather_grid(z) == before);
    });
}

TEST_CASE("every ghost node equals its owner after grid ghost_get") {
    for (int ranks : {1, 2, 4}) {
        for (bool periodic : {true, false}) {
            world_spawn(ranks, [&](World& w) {
                auto bc = periodic ? all_periodic(2) : all_non_periodic(2);
                DistributedGrid g(w, decompose(w, 2, bc, 0.13, {8, 8}), {32, 16}, {scalar("u"), vector_d("v")});
                fill_random(g, 17);
                g.ghost_get();
                auto all = gather_grid(g);
                std::size_t checked = 0;
                for (std::size_t b = 0; b < g.block_count(); ++b) {
                    const auto& blk = g.block(b);
                    for (std::size_t i = 0; i < blk.data.size(); ++i) {
                        GridKey k = blk.key(i);
                        if (blk.owned.contains(k)) continue;
                        std::vector<std::int64_t> owner(2);
                        bool inside = true;
                        for (std::size_t d = 0; d < 2; ++d) {
                            const auto n = g.nodes_per_axis()[d];
                            owner[d] = periodic ? wrap(k[d], n) : k[d];
                            inside &= owner[d] >= 0 && owner[d] < n;
                        }
                        if (!inside) continue;
                        Bytes mine;
                        ByteWriter wr(mine);
                        for (PropId p = 0; p < 2; ++p) blk.data.encode(p, i, wr);
                        CHECK(mine == all.at(owner));
                        ++checked;
                    }
                }
                if (periodic || ranks > 1) CHECK(checked > 0);
            });
        }
    }
}

TEST_CASE("stencil iteration") {
    world_spawn(1, [](World& w) {
        DistributedGrid g(w, decompose(w, 2, all_non_periodic(2), 0.1, {2, 2}), {20, 20}, {scalar("f")});
        std::size_t visits = 0;
        StencilView ident(g, {GridKey{0, 0}});
        ident.for_each([&](std::size_t, std::size_t, std::span<const std::ptrdiff_t> offs) {
            CHECK(offs[0] == 0);
            ++visits;
        });
        CHECK(visits == 400);
        CHECK_THROWS_AS(StencilView(g, {GridKey{3, 0}}), UsageError);

        // Constant field: every star neighbour reads the centre value.
        auto& col = g.block(0).data;
        for (std::size_t i = 0; i < col.size(); ++i) col.real(0, i)[0] = 4.0;
        StencilView star(g, star_stencil(2));
        star.for_each([&](std::size_t b, std::size_t c, std::span<const std::ptrdiff_t> offs) {
            auto f = g.block(b).data.real_column(0);
            for (auto o : offs) CHECK(f[c + o] == 4.0);
        });

        // f = x^2 has Laplacian 2 exactly under the second-order star.
        g.for_each_owned([&](std::size_t b, std::size_t idx, const GridKey& k) {
            const double x = g.node_position(k)[0];
            g.block(b).data.real(0, idx)[0] = x * x;
        });
        g.ghost_get();
        const double h = g.spacing(0);
        star.for_each([&](std::size_t b, std::size_t c, std::span<const std::ptrdiff_t> offs) {
            GridKey k = g.block(b).key(c);
            if (k[0] == 0 || k[0] == 19) return;
            auto f = g.block(b).data.real_column(0);
            double lap = 0.0;
            for (std::size_t d = 0; d < 2; ++d) lap += (f[c + offs[1 + 2 * d]] + f[c + offs[2 + 2 * d]] - 2.0 * f[c]) / (h * h);
            if (k[1] == 0 || k[1] == 19) return;
            CHECK(std::abs(lap - 2.0) < 1e-9);
        });
    });
}

TEST_CASE("stencil sweeps are bitwise identical on 1 and 4 ranks") {
    auto sweep = [](int ranks) {
        return world_spawn(ranks, [](World& w) {
            DistributedGrid g(w, decompose(w, 2, all_periodic(2), 0.07, {8, 8}), {32, 32}, {scalar("a"), scalar("b")});
            fill_random(g, 3);
            StencilView star(g, star_stencil(2));
            for (int it = 0; it < 10; ++it) {
                const PropId src = it % 2, dst = 1 - src;
                g.ghost_get({src});
                star.for_each([&](std::size_t b, std::size_t c, std::span<const std::ptrdiff_t> o) {
                    auto in = g.block(b).data.real_column(src);
                    auto out = g.block(b).data.real_column(dst);
                    out[c] = 0.5 * in[c] + 0.125 * (in[c + o[1]] + in[c + o[2]] + in[c + o[3]] + in[c + o[4]]);
                });
            }
            return gather_grid(g);
        })[0];
    };
    CHECK(sweep(1) == sweep(4));
}

TEST_CASE("grid_redistribute preserves values") {
    world_spawn(4, [](World& w) {
        auto normal = decompose(w, 2, all_periodic(2), 0.1, {8, 8});
        SubSubGrid cells = normal->grid();
        auto single = Decomposition::from_assignment(w, cells, Assignment(cells.cell_count(), 0), all_periodic(2), GhostSpec(0.1));
        std::mt19937 rng(12);
        Assignment scrambled(cells.cell_count());
        for (auto& r : scrambled) r = static_cast<int>(rng() % 4);
        auto random = Decomposition::from_assignment(w, cells, scrambled, all_periodic(2), GhostSpec(0.1));

        DistributedGrid g(w, single, {32, 32}, {scalar("u"), vector_d("v")});
        fill_random(g, 5);
        auto reference = gather_grid(g);
        CHECK(gather_grid(g.redistribute(single)) == reference);
        auto spread = g.redistribute(normal);
        CHECK(gather_grid(spread) == reference);
        CHECK(gather_grid(spread.redistribute(single)) == reference);
        CHECK(gather_grid(spread.redistribute(random)) == reference);
    });
}
