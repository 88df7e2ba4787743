#include "pmx/interp.hpp"

#include <cmath>

namespace pmx {

namespace {

void check_props(const PropertySchema& a, PropId pa, const PropertySchema& b, PropId pb, std::size_t wa,
                 std::size_t wb) {
    if (a[pa].is_list() || b[pb].is_list() || a[pa].base != BaseType::Real || b[pb].base != BaseType::Real)
        throw UsageError("interpolation needs fixed-width real properties");
    if (wa != wb) throw UsageError("interpolation source and target widths differ");
}

void check_frame(const DistributedGrid& grid) {
    for (std::size_t d = 0; d < grid.dim(); ++d)
        if (grid.frame()[d] < 2)
            throw UsageError("interpolation needs a ghost frame of at least 2 nodes, axis " + std::to_string(d) +
                             " has " + std::to_string(grid.frame()[d]));
}

std::size_t block_of(const DistributedGrid& grid, std::span<const double> x) {
    const auto& decomp = *grid.decomposition();
    auto cell = decomp.grid().cell_of(x);
    if (!cell || decomp.owner_of_cell(*cell) != decomp.my_rank())
        throw UsageError("interpolation: particle is not inside this rank's sub-domains");
    return decomp.subdomain_of_cell(*cell);
}

/// Calls f(storage index, weight) for the 4^D nodes around x.
template <typename F>
void visit_nodes(const DistributedGrid& grid, const GridBlock& blk, std::span<const double> x, F&& f) {
    const std::size_t dim = grid.dim();
    const auto sw = m4prime_weights(grid, x);
    for (std::size_t d = 0; d < dim; ++d)
        if (sw.first[d] < blk.alloc.low[d] || sw.first[d] + 4 > blk.alloc.high[d])
            throw UsageError("interpolation stencil leaves the ghost frame");
    std::size_t base = blk.index(sw.first);
    std::vector<int> k(dim, 0);
    for (;;) {
        double w = 1.0;
        std::ptrdiff_t off = 0;
        for (std::size_t d = 0; d < dim; ++d) {
            w *= sw.w[d][static_cast<std::size_t>(k[d])];
            off += k[d] * blk.stride[d];
        }
        f(static_cast<std::size_t>(static_cast<std::ptrdiff_t>(base) + off), w);
        std::size_t d = 0;
        for (; d < dim; ++d) {
            if (++k[d] < 4) break;
            k[d] = 0;
        }
        if (d == dim) return;
    }
}

}  // namespace

double m4prime(double x) {
    const double a = std::abs(x);
    if (a < 1.0) return 1.0 - 2.5 * a * a + 1.5 * a * a * a;
    if (a < 2.0) return 0.5 * (2.0 - a) * (2.0 - a) * (1.0 - a);
    return 0.0;
}

StencilWeights m4prime_weights(const DistributedGrid& grid, std::span<const double> x) {
    const std::size_t dim = grid.dim();
    const auto& domain = grid.decomposition()->domain();
    StencilWeights sw{GridKey(dim), std::vector<std::array<double, 4>>(dim)};
    for (std::size_t d = 0; d < dim; ++d) {
        const double t = (x[d] - domain.low[d]) / grid.spacing(d);
        const double i0 = std::floor(t);
        sw.first[d] = static_cast<std::int64_t>(i0) - 1;
        const double f = t - i0;
        sw.w[d] = {m4prime(f + 1.0), m4prime(f), m4prime(f - 1.0), m4prime(f - 2.0)};
    }
    return sw;
}

void p2m(const ParticleSet& pset, PropId src, DistributedGrid& grid, PropId dst) {
    check_frame(grid);
    const std::size_t width = grid.block_count() ? grid.block(0).data.width(dst) : grid.schema()[dst].width(grid.dim());
    check_props(pset.schema(), src, grid.schema(), dst, pset.columns().width(src), width);
    for (std::size_t b = 0; b < grid.block_count(); ++b) {
        auto& data = grid.block(b).data;
        data.reset(dst, 0, data.size());
    }
    for (std::size_t i : pset.iterate(Region::Owned)) {
        auto x = pset.position(i);
        auto v = pset.real(src, i);
        auto& blk = grid.block(block_of(grid, x));
        visit_nodes(grid, blk, x, [&](std::size_t node, double w) {
            auto out = blk.data.real(dst, node);
            for (std::size_t c = 0; c < width; ++c) out[c] += v[c] * w;
        });
    }
    grid.ghost_put_sum({dst});
}

void m2p(const DistributedGrid& grid, PropId src, ParticleSet& pset, PropId dst) {
    check_frame(grid);
    const std::size_t width = pset.columns().width(dst);
    check_props(grid.schema(), src, pset.schema(), dst,
                grid.block_count() ? grid.block(0).data.width(src) : grid.schema()[src].width(grid.dim()), width);
    for (std::size_t i : pset.iterate(Region::Owned)) {
        auto x = pset.position(i);
        const auto& blk = grid.block(block_of(grid, x));
        auto out = pset.real(dst, i);
        std::fill(out.begin(), out.end(), 0.0);
        visit_nodes(grid, blk, x, [&](std::size_t node, double w) {
            auto in = blk.data.real(src, node);
            for (std::size_t c = 0; c < width; ++c) out[c] += in[c] * w;
        });
    }
}

}  // namespace pmx
