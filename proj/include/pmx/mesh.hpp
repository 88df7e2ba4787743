#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pmx/decomposition.hpp"
#include "pmx/schema.hpp"
#include "pmx/transport.hpp"

namespace pmx {

/// One rank-local node block: the nodes of a sub-domain plus a ghost frame.
/// Keys are global node keys; frame keys may lie outside [0, N) on any axis.
struct GridBlock {
    KeyBox owned;
    KeyBox alloc;
    std::vector<std::int64_t> stride;
    ColumnStore data;

    /// Linear storage index of a key inside `alloc`.
    std::size_t index(const GridKey& key) const;
    GridKey key(std::size_t index) const;
};

/// A rectangular patch of node values detached from any grid, used to move
/// data between decompositions and in and out of checkpoints.
struct GridPiece {
    KeyBox box;
    ColumnStore values;
};

using Stencil = std::vector<GridKey>;

/// Regular Cartesian node grid distributed over the sub-domains of a
/// decomposition. Node k on axis d sits at low[d] + k * extent[d] / N[d].
class DistributedGrid {
public:
    DistributedGrid(World& world, DecompositionPtr decomposition, std::vector<std::int64_t> nodes_per_axis,
                    PropertySchema schema);

    World& world() const { return *world_; }
    std::size_t dim() const { return nodes_.size(); }
    const DecompositionPtr& decomposition() const { return decomp_; }
    const std::vector<std::int64_t>& nodes_per_axis() const { return nodes_; }
    const PropertySchema& schema() const { return schema_; }
    double spacing(std::size_t d) const { return spacing_[d]; }
    /// Ghost frame thickness in nodes per axis.
    const std::vector<std::int64_t>& frame() const { return frame_; }
    std::int64_t global_node_count() const;
    std::int64_t owned_node_count() const;
    PropId prop(std::string_view name) const { return schema_.index_of(name); }

    std::size_t block_count() const { return blocks_.size(); }
    GridBlock& block(std::size_t b) { return blocks_[b]; }
    const GridBlock& block(std::size_t b) const { return blocks_[b]; }

    Point node_position(const GridKey& key) const;
    /// Sub-domain of the local block whose owned box holds the key.
    std::optional<std::size_t> owning_block(const GridKey& key) const;

    /// Value at a key in an owned region or a ghost frame.
    std::span<const double> get(const GridKey& key, PropId p) const;
    /// Writes an owned node; frame keys are rejected.
    void set(const GridKey& key, PropId p, std::span<const double> value);
    void set(const GridKey& key, PropId p, double value) { set(key, p, std::span<const double>(&value, 1)); }

    /// Copies owner values into every ghost frame node (periodic axes wrap).
    /// Collective.
    void ghost_get(std::span<const PropId> props = {});
    void ghost_get(std::initializer_list<PropId> props) {
        ghost_get(std::span<const PropId>(props.begin(), props.size()));
    }
    /// Adds frame values onto their owners. Frame nodes outside the domain on
    /// non-periodic axes have no owner and are dropped. Collective.
    void ghost_put_sum(std::span<const PropId> props);
    void ghost_put_sum(std::initializer_list<PropId> props) {
        ghost_put_sum(std::span<const PropId>(props.begin(), props.size()));
    }

    /// Copy of the grid on a new decomposition, values preserved. Collective.
    DistributedGrid redistribute(DecompositionPtr next) const;

    /// Routes pieces held by any rank to the owners of their nodes. Pieces
    /// may cover any part of the global node range. Collective.
    void import_pieces(const std::vector<GridPiece>& pieces);
    /// Owned region of every block as a piece.
    std::vector<GridPiece> export_pieces() const;

    /// Visits every owned node once: f(block, center index, key).
    void for_each_owned(const std::function<void(std::size_t, std::size_t, const GridKey&)>& f) const;

private:
    struct Transfer {
        int src_rank;
        std::size_t src_block;
        int dst_rank;
        std::size_t dst_block;
        /// Region in the destination frame; the source region is box - shift.
        KeyBox box;
        std::vector<std::int64_t> shift;
    };
    void build_transfers();
    KeyBox owned_box(const SubDomain& s) const;
    KeyBox alloc_box(const KeyBox& owned) const;

    World* world_;
    DecompositionPtr decomp_;
    std::vector<std::int64_t> nodes_;
    PropertySchema schema_;
    std::vector<double> spacing_;
    std::vector<std::int64_t> frame_;
    std::vector<std::int64_t> nodes_per_cell_;
    std::vector<GridBlock> blocks_;
    std::vector<Transfer> transfers_;
};

/// Precomputed stencil access: per block, storage offsets of each stencil
/// point relative to the center node.
class StencilView {
public:
    StencilView(const DistributedGrid& grid, Stencil stencil);

    const Stencil& stencil() const { return stencil_; }
    std::span<const std::ptrdiff_t> offsets(std::size_t block) const { return offsets_[block]; }

    /// f(block, center, offsets) for every owned node; center + offsets[k] is
    /// the storage index of stencil point k.
    template <typename F>
    void for_each(F&& f) const {
        for (std::size_t b = 0; b < grid_->block_count(); ++b) {
            const auto& blk = grid_->block(b);
            const auto offs = offsets(b);
            iterate_box(blk, [&](std::size_t center) { f(b, center, offs); });
        }
    }

private:
    template <typename F>
    static void iterate_box(const GridBlock& blk, F&& f) {
        const std::size_t dim = blk.owned.dim();
        if (blk.owned.empty()) return;
        GridKey k = blk.owned.low;
        std::size_t idx = blk.index(k);
        const std::int64_t run = blk.owned.extent(0);
        for (;;) {
            for (std::int64_t i = 0; i < run; ++i) f(idx + static_cast<std::size_t>(i));
            std::size_t d = 1;
            for (; d < dim; ++d) {
                if (++k[d] < blk.owned.high[d]) break;
                k[d] = blk.owned.low[d];
            }
            if (d >= dim) return;
            idx = blk.index(k);
        }
    }

    const DistributedGrid* grid_;
    Stencil stencil_;
    std::vector<std::vector<std::ptrdiff_t>> offsets_;
};

/// The (2D+1)-point star: center, then -e_d and +e_d for each axis d.
Stencil star_stencil(std::size_t dim);

}  // namespace pmx
