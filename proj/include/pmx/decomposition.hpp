#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pmx/geometry.hpp"

namespace pmx {

class World;

/// Cartesian grid of sub-sub-domains (cells) covering the domain. Cells are
/// linearized with axis 0 varying fastest; "lowest index" always refers to
/// this order.
struct SubSubGrid {
    AxisBox domain;
    std::vector<std::int64_t> cells_per_axis;

    std::size_t dim() const { return cells_per_axis.size(); }
    std::size_t cell_count() const;
    double cell_size(std::size_t d) const { return domain.extent(d) / static_cast<double>(cells_per_axis[d]); }

    GridKey key_of(std::size_t index) const;
    std::size_t index_of(const GridKey& key) const;
    AxisBox cell_box(std::size_t index) const;
    /// Physical box of a cuboid of cells.
    AxisBox box_of(const KeyBox& cells) const;
    /// Cell containing `p`, or nullopt when p lies outside the domain.
    std::optional<std::size_t> cell_of(std::span<const double> p) const;
};

/// Power-of-two cell counts per axis, doubled greedily along the axis with
/// the coarsest cells until the total reaches granularity_factor * nranks
/// (at least nranks).
SubSubGrid create_sub_sub_grid(const AxisBox& domain, int nranks, std::optional<int> granularity_factor = {});

struct GraphEdge {
    std::size_t a = 0;
    std::size_t b = 0;
    double weight = 0.0;
};

/// Cost graph over cells. Edges are stored once with a < b, sorted.
struct DecompositionGraph {
    std::vector<double> vertex_cost;
    std::vector<GraphEdge> edges;
    std::vector<std::size_t> adj_offset;
    std::vector<std::size_t> adj_cell;
    std::vector<double> adj_weight;

    std::size_t vertex_count() const { return vertex_cost.size(); }
    std::span<const std::size_t> neighbors(std::size_t v) const {
        return std::span(adj_cell).subspan(adj_offset[v], adj_offset[v + 1] - adj_offset[v]);
    }
    std::span<const double> neighbor_weights(std::size_t v) const {
        return std::span(adj_weight).subspan(adj_offset[v], adj_offset[v + 1] - adj_offset[v]);
    }
};

/// Graph from an explicit edge list; duplicate pairs collapse by summing.
DecompositionGraph make_graph(std::vector<double> vertex_cost, std::vector<GraphEdge> edges);

/// Face-adjacency graph of the cells, edge weight = shared face measure x
/// ghost width. Periodic axes add wrap-around edges.
DecompositionGraph build_graph(const SubSubGrid& grid, std::span<const double> costs, const BoundaryConditions& bc,
                               const GhostSpec& ghost);

/// Owning rank per cell.
using Assignment = std::vector<int>;

/// Cells ordered along the Hilbert curve, cut into nranks contiguous runs; each
/// cut is placed where the prefix cost is closest to the ideal cumulative load.
Assignment partition_sfc(const DecompositionGraph& graph, const SubSubGrid& grid, int nranks);

struct RefineOptions {
    /// Weight of the load imbalance term; defaults to mean cell cost x nranks.
    std::optional<double> alpha;
    /// Weight of the edge cut term.
    double beta = 1.0;
    /// Upper bound on accepted moves; 0 means 16 x cell count.
    std::size_t max_moves = 0;
};

/// J = alpha * sum_r |load_r - mean| + beta * cut + discount * sum_i m_i [moved from seed]
double refine_objective(const DecompositionGraph& graph, int nranks, const Assignment& assignment, const Assignment& seed,
                        std::span<const double> migration, double discount, const RefineOptions& options = {});

double edge_cut(const DecompositionGraph& graph, const Assignment& assignment);

/// Steepest-descent boundary refinement: single-vertex moves and swaps of
/// adjacent vertices across a rank boundary, always taking the best strictly
/// improving candidate (ties to the lowest vertex index). J never increases.
Assignment partition_graph_refine(const DecompositionGraph& graph, int nranks, const Assignment& seed,
                                  std::span<const double> migration = {}, double discount = 0.0,
                                  const RefineOptions& options = {});

struct SubDomain {
    AxisBox box;
    KeyBox cells;
    int rank = 0;
};

/// Greedy cuboid merging of one rank's cells: grow a seed cell face by face
/// (+X, +Y, ..., -X, -Y, ...) while the new layer is owned and unconsumed,
/// emit the cuboid, then reseed at the lowest unconsumed owned cell touching
/// it (falling back to the lowest unconsumed owned cell overall).
std::vector<SubDomain> merge_sub_domains(const Assignment& assignment, const SubSubGrid& grid, int rank);

/// One ghost region. For external entries `box` is where remote data lands in
/// this rank's frame and `rank` is its owner; for internal entries `box` is the
/// region of a local sub-domain another rank needs and `rank` is the
/// requester. `image` is the periodic image index (-1, 0, +1 per axis) of the
/// source sub-domain as seen by the receiver; `shift` = image * extent.
struct GhostBox {
    AxisBox box;
    int rank = 0;
    std::size_t local_sub = 0;
    std::size_t remote_sub = 0;
    std::vector<int> image;
    std::vector<double> shift;
};

struct GhostOverlapTable {
    std::vector<GhostBox> external;
    std::vector<GhostBox> internal;
};

/// Ghost tables for every rank. Same-rank pairs only interact through a
/// non-zero periodic image.
std::vector<GhostOverlapTable> compute_ghost_overlaps(const std::vector<std::vector<SubDomain>>& all_subdomains,
                                                      const GhostSpec& ghost, const AxisBox& domain,
                                                      const BoundaryConditions& bc);

enum class PartitionMethod { Sfc, SfcRefined };

struct DecompositionOptions {
    int granularity_factor = 16;
    /// Overrides the automatic cell counts (must still be powers of two).
    std::optional<std::vector<std::int64_t>> cells_per_axis;
    PartitionMethod method = PartitionMethod::SfcRefined;
    RefineOptions refine;
};

/// Replicated decomposition state: every rank holds the full assignment and
/// sub-domain table plus its own ghost tables.
class Decomposition {
public:
    /// Collective. Cell costs default to 1 per cell.
    static std::shared_ptr<const Decomposition> build(World& world, const AxisBox& domain, BoundaryConditions bc,
                                                      GhostSpec ghost, const DecompositionOptions& options = {},
                                                      std::span<const double> costs = {});

    /// Collective. Each rank merges its own cells and the sub-domain tables are
    /// shared with allgather.
    static std::shared_ptr<const Decomposition> from_assignment(World& world, SubSubGrid grid, Assignment assignment,
                                                                BoundaryConditions bc, GhostSpec ghost);

    /// Same result as from_assignment, computed locally for any rank.
    static std::shared_ptr<const Decomposition> replicated(int nranks, int my_rank, SubSubGrid grid,
                                                           Assignment assignment, BoundaryConditions bc,
                                                           GhostSpec ghost);

    std::size_t dim() const { return grid_.dim(); }
    const AxisBox& domain() const { return grid_.domain; }
    const BoundaryConditions& bc() const { return bc_; }
    const GhostSpec& ghost() const { return ghost_; }
    const SubSubGrid& grid() const { return grid_; }
    const Assignment& assignment() const { return assignment_; }
    int nranks() const { return nranks_; }
    int my_rank() const { return my_rank_; }

    const std::vector<std::vector<SubDomain>>& all_subdomains() const { return subdomains_; }
    const std::vector<SubDomain>& subdomains(int rank) const { return subdomains_[static_cast<std::size_t>(rank)]; }
    const std::vector<SubDomain>& local_subdomains() const { return subdomains(my_rank_); }
    const GhostOverlapTable& ghost_table() const { return table_; }

    /// Ranks appearing in this rank's ghost tables (excluding itself).
    const std::vector<int>& neighbor_ranks() const { return neighbors_; }
    /// Ranks owning a sub-domain that touches one of mine (faces, edges or
    /// corners, periodic images included), excluding this rank. Targets of
    /// map_local.
    const std::vector<int>& adjacent_ranks() const { return adjacent_; }

    int owner_of_cell(std::size_t cell) const { return assignment_[cell]; }
    /// Owner of an already wrapped position; nullopt outside the domain.
    std::optional<int> owner_of(std::span<const double> p) const;
    /// Sub-domain index (within its rank) that holds the cell.
    std::size_t subdomain_of_cell(std::size_t cell) const { return cell_sub_[cell]; }

    /// Periodic images to consider: every combination of -1/0/+1 on periodic
    /// axes and 0 elsewhere, zero image first.
    std::vector<std::vector<int>> images() const;

    bool same_layout(const Decomposition& other) const;

private:
    Decomposition() = default;
    static std::shared_ptr<Decomposition> assemble(int nranks, int my_rank, SubSubGrid grid, Assignment assignment,
                                                   BoundaryConditions bc, GhostSpec ghost,
                                                   std::vector<std::vector<SubDomain>> subdomains);

    SubSubGrid grid_;
    Assignment assignment_;
    BoundaryConditions bc_;
    GhostSpec ghost_;
    int nranks_ = 1;
    int my_rank_ = 0;
    std::vector<std::vector<SubDomain>> subdomains_;
    std::vector<std::size_t> cell_sub_;
    GhostOverlapTable table_;
    std::vector<int> neighbors_;
    std::vector<int> adjacent_;
};

using DecompositionPtr = std::shared_ptr<const Decomposition>;

/// Enumerates periodic image vectors for the given boundary conditions.
std::vector<std::vector<int>> periodic_images(const BoundaryConditions& bc);

}  // namespace pmx
