#pragma once

#include <map>
#include <random>
#include <set>
#include <vector>

#include "pmx/particles.hpp"
#include "pmx/transport.hpp"

namespace pmx::testing {

/// Serialized owned state per gid: position followed by every property.
inline std::map<std::int64_t, Bytes> owned_state(const ParticleSet& ps) {
    std::map<std::int64_t, Bytes> out;
    for (std::size_t i : ps.iterate(Region::Owned)) {
        Bytes b;
        ByteWriter w(b);
        w.put_span<double>(ps.position(i));
        for (PropId p = 0; p < ps.schema().size(); ++p) ps.columns().encode(p, i, w);
        out[ps.gid(i)] = std::move(b);
    }
    return out;
}

/// Gathers owned_state from every rank onto every rank; throws on a gid seen twice.
inline std::map<std::int64_t, Bytes> gather_state(const ParticleSet& ps) {
    Bytes mine;
    ByteWriter w(mine);
    auto local = owned_state(ps);
    w.put<std::uint64_t>(local.size());
    for (auto& [gid, b] : local) {
        w.put<std::int64_t>(gid);
        w.put<std::uint64_t>(b.size());
        w.put_bytes(b);
    }
    std::map<std::int64_t, Bytes> all;
    for (auto& part : ps.world().allgather(std::move(mine))) {
        ByteReader r(part);
        auto n = r.get<std::uint64_t>();
        for (std::uint64_t k = 0; k < n; ++k) {
            auto gid = r.get<std::int64_t>();
            auto len = r.get<std::uint64_t>();
            auto raw = r.get_bytes(len);
            if (!all.emplace(gid, Bytes(raw.begin(), raw.end())).second)
                throw std::runtime_error("gid owned twice: " + std::to_string(gid));
        }
    }
    return all;
}

/// True when every owned particle sits inside one of this rank's sub-domains.
inline bool owns_its_particles(const ParticleSet& ps) {
    for (std::size_t i : ps.iterate(Region::Owned)) {
        int hits = 0;
        for (const auto& s : ps.decomposition()->local_subdomains()) hits += s.box.contains(ps.position(i));
        if (hits != 1) return false;
    }
    return true;
}

/// Uniform random points in the box, identical on every rank for a given seed.
inline std::vector<std::vector<double>> random_cloud(const AxisBox& box, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> pts(n, std::vector<double>(box.dim()));
    for (auto& p : pts)
        for (std::size_t d = 0; d < box.dim(); ++d)
            p[d] = std::uniform_real_distribution<double>(box.low[d], box.high[d])(rng);
    return pts;
}

}  // namespace pmx::testing

#include "pmx/mesh.hpp"

namespace pmx::testing {

/// Owned node values of every property per global key, gathered on every rank.
inline std::map<std::vector<std::int64_t>, Bytes> gather_grid(const DistributedGrid& g) {
    Bytes mine;
    ByteWriter w(mine);
    g.for_each_owned([&](std::size_t b, std::size_t idx, const GridKey& k) {
        for (std::size_t d = 0; d < g.dim(); ++d) w.put<std::int64_t>(k[d]);
        for (PropId p = 0; p < g.schema().size(); ++p) g.block(b).data.encode(p, idx, w);
    });
    std::map<std::vector<std::int64_t>, Bytes> all;
    for (auto& part : g.world().allgather(std::move(mine))) {
        ByteReader r(part);
        while (!r.done()) {
            std::vector<std::int64_t> key(g.dim());
            for (auto& k : key) k = r.get<std::int64_t>();
            Bytes b;
            ByteWriter vw(b);
            for (PropId p = 0; p < g.schema().size(); ++p) {
                auto raw = r.get_bytes(8 * g.schema()[p].width(g.dim()));
                vw.put_bytes(raw);
            }
            if (!all.emplace(key, std::move(b)).second) throw std::runtime_error("grid node owned twice");
        }
    }
    return all;
}

}  // namespace pmx::testing
