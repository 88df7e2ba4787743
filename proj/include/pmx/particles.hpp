#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "pmx/decomposition.hpp"
#include "pmx/schema.hpp"
#include "pmx/transport.hpp"

namespace pmx {

enum class Region { Owned, Ghost, All };

/// Where a ghost came from: the owner's rank, the owner's local index at the
/// time of the ghost_get, and the periodic shift added to its position.
struct GhostOrigin {
    int rank = 0;
    std::size_t index = 0;
};

enum class GhostMode {
    /// Discard existing ghosts and rebuild them from the ghost tables.
    Rebuild,
    /// Refresh positions and the selected properties of the current ghosts in
    /// place. Requires that no map or insertion happened since the last rebuild.
    Keep,
};

enum class MergeKind { Sum, MaxReplace, ListMerge, Custom };

/// Combiner for ghost_put. `custom` folds one contribution into the owner's
/// value and must be associative and commutative; it applies to fixed-width
/// real properties.
struct MergeOp {
    MergeKind kind = MergeKind::Sum;
    std::function<void(std::span<double> owner, std::span<const double> contribution)> custom;

    static MergeOp sum() { return {MergeKind::Sum, {}}; }
    static MergeOp max_replace() { return {MergeKind::MaxReplace, {}}; }
    static MergeOp list_merge() { return {MergeKind::ListMerge, {}}; }
};

/// Distributed particle set. Owned particles occupy indices [0, n_owned) and
/// ghosts follow. Every particle carries a position, a global id and one value
/// per schema property.
class ParticleSet {
public:
    ParticleSet(World& world, DecompositionPtr decomposition, PropertySchema schema);

    World& world() const { return *world_; }
    std::size_t dim() const { return dim_; }
    const PropertySchema& schema() const { return props_.schema(); }
    const DecompositionPtr& decomposition() const { return decomp_; }
    /// Swaps the decomposition (after a rebalance). Ghosts are dropped; call
    /// map_global next to restore the ownership invariant.
    void set_decomposition(DecompositionPtr decomposition);

    std::size_t n_owned() const { return n_owned_; }
    std::size_t n_ghost() const { return gids_.size() - n_owned_; }
    std::size_t size() const { return gids_.size(); }

    PropId prop(std::string_view name) const { return props_.schema().index_of(name); }

    std::span<double> position(std::size_t i) { return std::span(pos_).subspan(i * dim_, dim_); }
    std::span<const double> position(std::size_t i) const { return std::span(pos_).subspan(i * dim_, dim_); }
    std::span<const double> positions() const { return pos_; }
    std::int64_t gid(std::size_t i) const { return gids_[i]; }
    std::span<const std::int64_t> gids() const { return gids_; }

    ColumnStore& columns() { return props_; }
    const ColumnStore& columns() const { return props_; }
    std::span<double> real(PropId p, std::size_t i) { return props_.real(p, i); }
    std::span<const double> real(PropId p, std::size_t i) const { return props_.real(p, i); }
    std::span<std::int64_t> integer(PropId p, std::size_t i) { return props_.integer(p, i); }
    std::span<const std::int64_t> integer(PropId p, std::size_t i) const { return props_.integer(p, i); }

    /// Appends an owned particle (properties zeroed). Drops existing ghosts.
    std::size_t add(std::span<const double> position, std::int64_t gid);
    /// Removes every ghost.
    void clear_ghosts();
    /// Removes owned particles for which `drop(i)` is true, keeping order.
    void remove_owned_if(const std::function<bool(std::size_t)>& drop);

    /// Sends particles that left this rank's sub-domains to adjacent ranks.
    /// Collective.
    void map_local();
    /// Sends every particle to the owner of its (wrapped) position, whatever
    /// rank that is. Collective.
    void map_global();

    /// Fills ghost layers with positions and the listed properties. Collective.
    void ghost_get(std::span<const PropId> props = {}, GhostMode mode = GhostMode::Rebuild);
    void ghost_get(std::initializer_list<PropId> props, GhostMode mode = GhostMode::Rebuild) {
        ghost_get(std::span<const PropId>(props.begin(), props.size()), mode);
    }

    /// Routes ghost values of `props` back to their owners and merges them.
    /// Collective.
    void ghost_put(std::span<const PropId> props, const MergeOp& op = MergeOp::sum());
    void ghost_put(std::initializer_list<PropId> props, const MergeOp& op = MergeOp::sum()) {
        ghost_put(std::span<const PropId>(props.begin(), props.size()), op);
    }

    const std::vector<GhostOrigin>& ghost_origins() const { return origins_; }
    /// Periodic shift applied to ghost g (0-based within the ghost range).
    std::span<const double> ghost_shift(std::size_t g) const { return std::span(shifts_).subspan(g * dim_, dim_); }

    struct IndexRange {
        std::size_t first = 0;
        std::size_t last = 0;
        struct iterator {
            std::size_t i;
            std::size_t operator*() const { return i; }
            iterator& operator++() {
                ++i;
                return *this;
            }
            bool operator==(const iterator&) const = default;
        };
        iterator begin() const { return {first}; }
        iterator end() const { return {last}; }
        std::size_t size() const { return last - first; }
    };
    IndexRange iterate(Region region) const;

    /// Serialized size of particle i in a map message (position, gid, all
    /// properties). Used as the migration cost of its cell.
    std::size_t record_size(std::size_t i) const;

    /// Owned-particle count per sub-sub cell of the current decomposition, as
    /// this rank sees it (zero for cells owned elsewhere).
    std::vector<double> cell_counts() const;

private:
    void resize(std::size_t n);
    void encode_particle(std::size_t i, ByteWriter& w) const;
    void decode_particle(ByteReader& r);
    void compact_owned(const std::vector<char>& keep);
    /// Wraps owned positions and returns each owned particle's destination
    /// rank; throws collectively when a particle is outside the domain or
    /// (local mode) unreachable.
    std::vector<int> destinations(bool local);
    void append_received(const std::map<int, Bytes>& incoming);

    World* world_;
    DecompositionPtr decomp_;
    std::size_t dim_;
    std::size_t n_owned_ = 0;
    std::vector<double> pos_;
    std::vector<std::int64_t> gids_;
    ColumnStore props_;

    std::vector<GhostOrigin> origins_;
    std::vector<double> shifts_;
    /// Per requesting rank: (owned index, shift) pairs sent at the last rebuild.
    struct SendItem {
        std::size_t index;
        std::vector<double> shift;
    };
    std::map<int, std::vector<SendItem>> send_plan_;
    std::vector<int> recv_ranks_;
    std::map<int, std::size_t> recv_counts_;
    bool plan_valid_ = false;
};

/// Places one particle on every node of a regular lattice with
/// `nodes_per_axis` nodes (node i at low + i * extent / n on each axis); each
/// rank keeps the nodes inside its own sub-domains. Gids are the lattice
/// linear index with axis 0 fastest.
void init_grid(ParticleSet& pset, std::span<const std::int64_t> nodes_per_axis);

// ---------------------------------------------------------------------------
// Neighbor search

/// Particles (owned and ghost) binned into cells of side >= r_cut.
class CellList {
public:
    CellList(const ParticleSet& pset, double r_cut);

    double r_cut() const { return r_cut_; }
    std::size_t cell_count() const { return start_.size() - 1; }
    std::span<const std::size_t> cell(std::size_t c) const {
        return std::span(items_).subspan(start_[c], start_[c + 1] - start_[c]);
    }
    std::size_t cell_of(std::span<const double> x) const;
    /// Cells within one step on every axis (including c itself).
    std::vector<std::size_t> neighborhood(std::size_t c) const;

private:
    std::size_t dim_;
    double r_cut_;
    std::vector<double> origin_;
    std::vector<double> size_;
    std::vector<std::int64_t> dims_;
    std::vector<std::size_t> start_;
    std::vector<std::size_t> items_;
};

/// Neighbor lists for owned particles. The full variant lists every other
/// particle (owned or ghost) within the radius; the symmetric variant lists
/// each pair once, on the owned particle with the lower gid.
class VerletList {
public:
    VerletList() = default;
    VerletList(const ParticleSet& pset, double r_cut, double skin, bool symmetric);

    double radius() const { return radius_; }
    bool symmetric() const { return symmetric_; }
    std::size_t size() const { return start_.empty() ? 0 : start_.size() - 1; }
    std::span<const std::size_t> neighbors(std::size_t p) const {
        return std::span(items_).subspan(start_[p], start_[p + 1] - start_[p]);
    }
    std::size_t pair_count() const { return items_.size(); }

    /// Largest squared displacement of an owned particle since the build.
    double max_displacement(const ParticleSet& pset) const;
    /// True when some particle moved more than skin/2 since the build.
    bool needs_rebuild(const ParticleSet& pset) const;

private:
    double radius_ = 0.0;
    double skin_ = 0.0;
    bool symmetric_ = false;
    std::vector<std::size_t> start_;
    std::vector<std::size_t> items_;
    std::vector<double> built_at_;
};

enum class Mirror { Negate, Same };

/// Target of a pairwise kernel and how its value is mirrored onto the partner
/// in symmetric mode.
struct PairTarget {
    PropId prop;
    Mirror mirror = Mirror::Negate;
};

/// Kernel for the pair (p, q): writes p's contribution to every target,
/// concatenated in target order, into `out` (pre-zeroed).
using PairKernel = std::function<void(const ParticleSet& pset, std::size_t p, std::size_t q, std::span<double> out)>;

/// Accumulates kernel contributions over the list. In symmetric mode the
/// mirrored contribution goes to q as well (ghosts included); zero the
/// targets on ghosts beforehand and follow with ghost_put(SUM).
void apply_pairwise(ParticleSet& pset, const VerletList& list, const PairKernel& kernel,
                    std::span<const PairTarget> targets);

}  // namespace pmx
