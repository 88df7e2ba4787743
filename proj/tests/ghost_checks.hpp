#pragma once

#include <cmath>
#include <random>

#include "pmx/mesh.hpp"
#include "pmx/particles.hpp"
#include "support.hpp"

namespace pmx::testing {

struct CoherenceTally {
    std::size_t checked = 0;
    std::size_t mismatched = 0;
};

/// Random cloud with a mixed schema; after ghost_get every ghost's position
/// must equal its owner's plus the image shift and every property must
/// encode to the owner's bytes. Collective.
inline CoherenceTally particle_coherence(World& w, std::size_t dim, bool periodic, std::size_t n, std::uint64_t seed) {
    const AxisBox dom(Point(dim, -0.5), Point(dim, 1.5));
    auto d = Decomposition::build(w, dom, periodic ? all_periodic(dim) : all_non_periodic(dim), GhostSpec(0.3));
    ParticleSet ps(w, d,
                   {vector_d("v"), scalar("s"), fixed_array("a", 2, BaseType::Int64),
                    var_list("l", scalar("", BaseType::Int64))});
    if (w.rank() == 0) {
        auto pts = random_cloud(dom, n, seed);
        for (std::size_t i = 0; i < n; ++i) ps.add(pts[i], static_cast<std::int64_t>(i * 3 + 1));
    }
    ps.map_global();
    for (std::size_t i : ps.iterate(Region::Owned)) {
        std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(ps.gid(i)));
        std::uniform_real_distribution<double> u(-1, 1);
        for (auto& v : ps.real(0, i)) v = u(rng);
        ps.real(1, i)[0] = u(rng);
        for (auto& v : ps.integer(2, i)) v = static_cast<std::int64_t>(rng());
        ps.columns().integer_list(3, i).assign(rng() % 4, ps.gid(i));
    }
    ps.ghost_get({0, 1, 2, 3});
    const auto state = gather_state(ps);
    CoherenceTally t;
    for (std::size_t g : ps.iterate(Region::Ghost)) {
        ++t.checked;
        auto it = state.find(ps.gid(g));
        if (it == state.end()) {
            ++t.mismatched;
            continue;
        }
        ByteReader r(it->second);
        const auto shift = ps.ghost_shift(g - ps.n_owned());
        bool same = true;
        for (std::size_t k = 0; k < dim; ++k) same &= ps.position(g)[k] == r.get<double>() + shift[k];
        Bytes mine;
        ByteWriter wr(mine);
        for (PropId p = 0; p < 4; ++p) ps.columns().encode(p, g, wr);
        auto rest = r.get_bytes(r.remaining());
        same &= Bytes(rest.begin(), rest.end()) == mine;
        t.mismatched += !same;
    }
    t.checked = static_cast<std::size_t>(w.allreduce_sum(static_cast<std::int64_t>(t.checked)));
    t.mismatched = static_cast<std::size_t>(w.allreduce_sum(static_cast<std::int64_t>(t.mismatched)));
    return t;
}

/// Grid counterpart: random node values, ghost_get, then every in-domain
/// ghost node must encode exactly like the owning node. Collective.
inline CoherenceTally grid_coherence(World& w, std::size_t dim, bool periodic, std::int64_t nodes, std::uint64_t seed) {
    const AxisBox dom(Point(dim, 0.0), Point(dim, 1.0));
    auto d = Decomposition::build(w, dom, periodic ? all_periodic(dim) : all_non_periodic(dim), GhostSpec(0.1));
    std::vector<std::int64_t> n(dim, nodes);
    DistributedGrid g(w, d, n, {scalar("u"), vector_d("v"), scalar("id", BaseType::Int64)});
    g.for_each_owned([&](std::size_t b, std::size_t idx, const GridKey& k) {
        std::uint64_t h = seed;
        for (auto c : k) h = h * 1000003u + static_cast<std::uint64_t>(c + 11);
        std::mt19937_64 rng(h);
        std::uniform_real_distribution<double> u(-1, 1);
        g.block(b).data.real(0, idx)[0] = u(rng);
        for (auto& v : g.block(b).data.real(1, idx)) v = u(rng);
        g.block(b).data.integer(2, idx)[0] = static_cast<std::int64_t>(rng());
    });
    g.ghost_get();
    const auto all = gather_grid(g);
    CoherenceTally t;
    for (std::size_t b = 0; b < g.block_count(); ++b) {
        const auto& blk = g.block(b);
        for (std::size_t i = 0; i < blk.data.size(); ++i) {
            const GridKey k = blk.key(i);
            if (blk.owned.contains(k)) continue;
            std::vector<std::int64_t> owner(dim);
            bool inside = true;
            for (std::size_t a = 0; a < dim; ++a) {
                owner[a] = periodic ? ((k[a] % nodes) + nodes) % nodes : k[a];
                inside &= owner[a] >= 0 && owner[a] < nodes;
            }
            if (!inside) continue;
            ++t.checked;
            Bytes mine;
            ByteWriter wr(mine);
            for (PropId p = 0; p < 3; ++p) blk.data.encode(p, i, wr);
            t.mismatched += mine != all.at(owner);
        }
    }
    t.checked = static_cast<std::size_t>(w.allreduce_sum(static_cast<std::int64_t>(t.checked)));
    t.mismatched = static_cast<std::size_t>(w.allreduce_sum(static_cast<std::int64_t>(t.mismatched)));
    return t;
}

}  // namespace pmx::testing
