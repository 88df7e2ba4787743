#include "pmx/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "pmx/bytes.hpp"
#include "pmx/error.hpp"
#include "pmx/transport.hpp"

namespace pmx {

// ---------------------------------------------------------------------------
// SubSubGrid

std::size_t SubSubGrid::cell_count() const {
    std::size_t n = 1;
    for (auto c : cells_per_axis) n *= static_cast<std::size_t>(c);
    return n;
}

GridKey SubSubGrid::key_of(std::size_t index) const {
    GridKey k(dim());
    for (std::size_t d = 0; d < dim(); ++d) {
        const auto n = static_cast<std::size_t>(cells_per_axis[d]);
        k[d] = static_cast<std::int64_t>(index % n);
        index /= n;
    }
    return k;
}

std::size_t SubSubGrid::index_of(const GridKey& key) const {
    std::size_t idx = 0;
    for (std::size_t d = dim(); d-- > 0;) idx = idx * static_cast<std::size_t>(cells_per_axis[d]) + static_cast<std::size_t>(key[d]);
    return idx;
}

AxisBox SubSubGrid::box_of(const KeyBox& cells) const {
    Point lo(dim()), hi(dim());
    for (std::size_t d = 0; d < dim(); ++d) {
        const double h = cell_size(d);
        lo[d] = domain.low[d] + static_cast<double>(cells.low[d]) * h;
        hi[d] = cells.high[d] == cells_per_axis[d] ? domain.high[d] : domain.low[d] + static_cast<double>(cells.high[d]) * h;
    }
    return AxisBox(std::move(lo), std::move(hi));
}

AxisBox SubSubGrid::cell_box(std::size_t index) const {
    GridKey lo = key_of(index);
    GridKey hi = lo;
    for (std::size_t d = 0; d < dim(); ++d) hi[d] += 1;
    return box_of(KeyBox{lo, hi});
}

std::optional<std::size_t> SubSubGrid::cell_of(std::span<const double> p) const {
    std::size_t idx = 0;
    for (std::size_t d = dim(); d-- > 0;) {
        if (!(p[d] >= domain.low[d] && p[d] < domain.high[d])) return std::nullopt;
        auto k = static_cast<std::int64_t>(std::floor((p[d] - domain.low[d]) / cell_size(d)));
        k = std::clamp<std::int64_t>(k, 0, cells_per_axis[d] - 1);
        idx = idx * static_cast<std::size_t>(cells_per_axis[d]) + static_cast<std::size_t>(k);
    }
    return idx;
}

SubSubGrid create_sub_sub_grid(const AxisBox& domain, int nranks, std::optional<int> granularity_factor) {
    if (nranks < 1) throw UsageError("create_sub_sub_grid: nranks must be >= 1");
    const int factor = granularity_factor.value_or(16);
    if (factor < 1) throw UsageError("create_sub_sub_grid: granularity factor must be >= 1");
    const std::size_t dim = domain.dim();
    if (dim == 0) throw UsageError("create_sub_sub_grid: zero-dimensional domain");
    for (std::size_t d = 0; d < dim; ++d) {
        if (!(domain.extent(d) > 0.0)) throw UsageError("create_sub_sub_grid: degenerate domain on axis " + std::to_string(d));
    }
    const std::size_t target = std::max<std::size_t>(static_cast<std::size_t>(factor) * static_cast<std::size_t>(nranks),
                                                     static_cast<std::size_t>(nranks));
    SubSubGrid g{domain, std::vector<std::int64_t>(dim, 1)};
    while (g.cell_count() < target) {
        std::size_t coarsest = 0;
        for (std::size_t d = 1; d < dim; ++d)
            if (g.cell_size(d) > g.cell_size(coarsest)) coarsest = d;
        g.cells_per_axis[coarsest] *= 2;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Graph

DecompositionGraph make_graph(std::vector<double> vertex_cost, std::vector<GraphEdge> edges) {
    const std::size_t n = vertex_cost.size();
    for (double c : vertex_cost)
        if (!(c >= 0.0)) throw UsageError("graph: vertex costs must be nonnegative");
    std::map<std::pair<std::size_t, std::size_t>, double> merged;
    for (const auto& e : edges) {
        if (e.a >= n || e.b >= n) throw UsageError("graph: edge endpoint out of range");
        if (e.a == e.b) continue;
        if (!(e.weight >= 0.0)) throw UsageError("graph: edge weights must be nonnegative");
        merged[{std::min(e.a, e.b), std::max(e.a, e.b)}] += e.weight;
    }
    DecompositionGraph g;
    g.vertex_cost = std::move(vertex_cost);
    std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
    for (const auto& [key, w] : merged) {
        g.edges.push_back({key.first, key.second, w});
        adj[key.first].emplace_back(key.second, w);
        adj[key.second].emplace_back(key.first, w);
    }
    g.adj_offset.assign(n + 1, 0);
    for (std::size_t v = 0; v < n; ++v) {
        std::sort(adj[v].begin(), adj[v].end());
        g.adj_offset[v + 1] = g.adj_offset[v] + adj[v].size();
        for (auto [u, w] : adj[v]) {
            g.adj_cell.push_back(u);
            g.adj_weight.push_back(w);
        }
    }
    return g;
}

DecompositionGraph build_graph(const SubSubGrid& grid, std::span<const double> costs, const BoundaryConditions& bc,
                               const GhostSpec& ghost) {
    const std::size_t n = grid.cell_count();
    if (costs.size() != n) throw UsageError("build_graph: need one cost per cell");
    if (bc.size() != grid.dim()) throw UsageError("build_graph: boundary conditions dimension mismatch");
    std::vector<GraphEdge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        const GridKey k = grid.key_of(i);
        for (std::size_t d = 0; d < grid.dim(); ++d) {
            GridKey nb = k;
            nb[d] += 1;
            if (nb[d] == grid.cells_per_axis[d]) {
                if (bc[d] != Boundary::Periodic) continue;
                nb[d] = 0;
            }
            const std::size_t j = grid.index_of(nb);
            if (j == i) continue;
            double face = 1.0;
            for (std::size_t e = 0; e < grid.dim(); ++e)
                if (e != d) face *= grid.cell_size(e);
            edges.push_back({i, j, face * ghost.width});
        }
    }
    return make_graph(std::vector<double>(costs.begin(), costs.end()), std::move(edges));
}

// ---------------------------------------------------------------------------
// Partitioning

Assignment partition_sfc(const DecompositionGraph& graph, const SubSubGrid& grid, int nranks) {
    if (nranks < 1) throw UsageError("partition_sfc: nranks must be >= 1");
    const std::size_t n = grid.cell_count();
    if (graph.vertex_count() != n) throw UsageError("partition_sfc: graph does not match grid");
    unsigned order = 0;
    for (auto c : grid.cells_per_axis) {
        if (c <= 0 || (c & (c - 1)) != 0) throw UsageError("partition_sfc: cells per axis must be powers of two");
        while ((std::int64_t{1} << order) < c) ++order;
    }
    std::vector<std::pair<std::uint64_t, std::size_t>> curve(n);
    for (std::size_t i = 0; i < n; ++i) curve[i] = {hilbert_index(grid.key_of(i), order), i};
    std::sort(curve.begin(), curve.end());

    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + graph.vertex_cost[curve[i].second];
    const double total = prefix[n];

    Assignment owner(n, 0);
    const auto ranks = static_cast<std::size_t>(nranks);
    std::size_t start = 0;
    for (std::size_t r = 0; r < ranks; ++r) {
        std::size_t end = n;
        if (r + 1 < ranks) {
            const double target = total * static_cast<double>(r + 1) / static_cast<double>(ranks);
            // Leave at least one cell for this rank and each later one when possible.
            const std::size_t remaining = ranks - r - 1;
            const std::size_t lo = std::min(n, start + 1);
            const std::size_t hi = n >= remaining ? std::max(lo, n - remaining) : lo;
            end = lo;
            double best = std::abs(prefix[lo] - target);
            for (std::size_t k = lo + 1; k <= hi; ++k) {
                const double dist = std::abs(prefix[k] - target);
                if (dist < best) {
                    best = dist;
                    end = k;
                }
            }
            end = std::min(end, n);
        }
        for (std::size_t k = start; k < end; ++k) owner[curve[k].second] = static_cast<int>(r);
        start = end;
    }
    return owner;
}

double edge_cut(const DecompositionGraph& graph, const Assignment& assignment) {
    double cut = 0.0;
    for (const auto& e : graph.edges)
        if (assignment[e.a] != assignment[e.b]) cut += e.weight;
    return cut;
}

namespace {

double default_alpha(const DecompositionGraph& graph, int nranks) {
    if (graph.vertex_count() == 0) return 1.0;
    const double total = std::accumulate(graph.vertex_cost.begin(), graph.vertex_cost.end(), 0.0);
    const double mean_cell = total / static_cast<double>(graph.vertex_count());
    return mean_cell > 0.0 ? mean_cell * nranks : 1.0;
}

void check_assignment(const DecompositionGraph& graph, int nranks, const Assignment& a, const char* what) {
    if (a.size() != graph.vertex_count()) throw UsageError(std::string(what) + ": assignment size mismatch");
    for (int r : a)
        if (r < 0 || r >= nranks) throw UsageError(std::string(what) + ": rank id out of range");
}

}  // namespace

double refine_objective(const DecompositionGraph& graph, int nranks, const Assignment& assignment, const Assignment& seed,
                        std::span<const double> migration, double discount, const RefineOptions& options) {
    check_assignment(graph, nranks, assignment, "refine_objective");
    const double alpha = options.alpha.value_or(default_alpha(graph, nranks));
    std::vector<double> load(static_cast<std::size_t>(nranks), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        load[static_cast<std::size_t>(assignment[i])] += graph.vertex_cost[i];
        total += graph.vertex_cost[i];
    }
    const double mean = total / nranks;
    double imbalance = 0.0;
    for (double l : load) imbalance += std::abs(l - mean);
    double moved = 0.0;
    if (!migration.empty()) {
        for (std::size_t i = 0; i < assignment.size(); ++i)
            if (assignment[i] != seed[i]) moved += migration[i];
    }
    return alpha * imbalance + options.beta * edge_cut(graph, assignment) + discount * moved;
}

Assignment partition_graph_refine(const DecompositionGraph& graph, int nranks, const Assignment& seed,
                                  std::span<const double> migration, double discount, const RefineOptions& options) {
    check_assignment(graph, nranks, seed, "partition_graph_refine");
    if (!migration.empty() && migration.size() != graph.vertex_count())
        throw UsageError("partition_graph_refine: need one migration cost per cell");
    if (!(discount >= 0.0 && discount <= 1.0)) throw UsageError("partition_graph_refine: discount must lie in [0,1]");
    const std::size_t n = graph.vertex_count();
    const double alpha = options.alpha.value_or(default_alpha(graph, nranks));
    const double beta = options.beta;
    const std::size_t max_moves = options.max_moves ? options.max_moves : 16 * std::max<std::size_t>(n, 1);

    Assignment owner = seed;
    std::vector<double> load(static_cast<std::size_t>(nranks), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        load[static_cast<std::size_t>(owner[i])] += graph.vertex_cost[i];
        total += graph.vertex_cost[i];
    }
    const double mean = total / nranks;
    auto dev = [&](double l) { return std::abs(l - mean); };
    auto mig = [&](std::size_t v, int r) {
        if (migration.empty()) return 0.0;
        return (r != seed[v] ? 1.0 : 0.0) * migration[v] * discount;
    };
    // Cut change when v alone switches to r, ignoring the edge to `skip`.
    auto cut_delta = [&](std::size_t v, int r, std::size_t skip) {
        double d = 0.0;
        auto nbs = graph.neighbors(v);
        auto ws = graph.neighbor_weights(v);
        for (std::size_t k = 0; k < nbs.size(); ++k) {
            if (nbs[k] == skip) continue;
            const int o = owner[nbs[k]];
            d += ws[k] * ((o != r ? 1.0 : 0.0) - (o != owner[v] ? 1.0 : 0.0));
        }
        return d;
    };

    const double scale = std::max(1.0, refine_objective(graph, nranks, seed, seed, migration, discount, options));
    const double eps = 1e-12 * scale;

    for (std::size_t step = 0; step < max_moves; ++step) {
        double best = -eps;
        std::size_t best_v = n, best_u = n;
        int best_r = -1;
        for (std::size_t v = 0; v < n; ++v) {
            const int a = owner[v];
            auto nbs = graph.neighbors(v);
            bool boundary = false;
            for (auto u : nbs) boundary |= owner[u] != a;
            if (!boundary) continue;
            const double cv = graph.vertex_cost[v];
            // Single-vertex moves to each neighboring rank, ascending rank order.
            std::vector<int> targets;
            for (auto u : nbs)
                if (owner[u] != a) targets.push_back(owner[u]);
            std::sort(targets.begin(), targets.end());
            targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
            for (int b : targets) {
                const auto ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
                double delta = alpha * (dev(load[ia] - cv) + dev(load[ib] + cv) - dev(load[ia]) - dev(load[ib]));
                delta += beta * cut_delta(v, b, n);
                delta += mig(v, b) - mig(v, a);
                if (delta < best) {
                    best = delta;
                    best_v = v;
                    best_u = n;
                    best_r = b;
                }
            }
            // Swaps with adjacent vertices of another rank.
            for (auto u : nbs) {
                const int b = owner[u];
                if (b == a || u < v) continue;
                const auto ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
                const double cu = graph.vertex_cost[u];
                double delta = alpha * (dev(load[ia] - cv + cu) + dev(load[ib] + cv - cu) - dev(load[ia]) - dev(load[ib]));
                delta += beta * (cut_delta(v, b, u) + cut_delta(u, a, v));
                delta += mig(v, b) - mig(v, a) + mig(u, a) - mig(u, b);
                if (delta < best) {
                    best = delta;
                    best_v = v;
                    best_u = u;
                    best_r = b;
                }
            }
        }
        if (best_v == n) break;
        const int a = owner[best_v];
        if (best_u == n) {
            load[static_cast<std::size_t>(a)] -= graph.vertex_cost[best_v];
            load[static_cast<std::size_t>(best_r)] += graph.vertex_cost[best_v];
            owner[best_v] = best_r;
        } else {
            const double cv = graph.vertex_cost[best_v], cu = graph.vertex_cost[best_u];
            load[static_cast<std::size_t>(a)] += cu - cv;
            load[static_cast<std::size_t>(best_r)] += cv - cu;
            owner[best_v] = best_r;
            owner[best_u] = a;
        }
    }
    return owner;
}

// ---------------------------------------------------------------------------
// Merging

std::vector<SubDomain> merge_sub_domains(const Assignment& assignment, const SubSubGrid& grid, int rank) {
    const std::size_t n = grid.cell_count();
    if (assignment.size() != n) throw UsageError("merge_sub_domains: assignment size mismatch");
    const std::size_t dim = grid.dim();
    std::vector<char> consumed(n, 0);
    auto available = [&](std::size_t c) { return assignment[c] == rank && !consumed[c]; };

    // Visits every cell of `box` (axis 0 fastest); stops early when fn returns false.
    auto for_each_cell = [&](const KeyBox& box, auto&& fn) {
        if (box.empty()) return true;
        GridKey k = box.low;
        for (;;) {
            if (!fn(grid.index_of(k))) return false;
            std::size_t d = 0;
            for (; d < dim; ++d) {
                if (++k[d] < box.high[d]) break;
                k[d] = box.low[d];
            }
            if (d == dim) return true;
        }
    };
    // Layer just outside `box` across face (axis, +/-); nullopt at the grid edge.
    auto layer = [&](const KeyBox& box, std::size_t axis, bool positive) -> std::optional<KeyBox> {
        KeyBox l = box;
        if (positive) {
            if (box.high[axis] >= grid.cells_per_axis[axis]) return std::nullopt;
            l.low[axis] = box.high[axis];
            l.high[axis] = box.high[axis] + 1;
        } else {
            if (box.low[axis] <= 0) return std::nullopt;
            l.low[axis] = box.low[axis] - 1;
            l.high[axis] = box.low[axis];
        }
        return l;
    };

    std::vector<SubDomain> out;
    std::size_t scan = 0;  // every owned cell below `scan` is consumed
    auto global_seed = [&]() -> std::optional<std::size_t> {
        while (scan < n && !available(scan)) ++scan;
        if (scan == n) return std::nullopt;
        return scan;
    };

    std::optional<std::size_t> seed = global_seed();
    while (seed) {
        KeyBox box{grid.key_of(*seed), grid.key_of(*seed)};
        for (std::size_t d = 0; d < dim; ++d) box.high[d] += 1;
        bool grew = true;
        while (grew) {
            grew = false;
            for (int sign = 0; sign < 2; ++sign) {
                for (std::size_t d = 0; d < dim; ++d) {
                    auto l = layer(box, d, sign == 0);
                    if (!l) continue;
                    if (!for_each_cell(*l, [&](std::size_t c) { return available(c); })) continue;
                    if (sign == 0) box.high[d] += 1;
                    else box.low[d] -= 1;
                    grew = true;
                }
            }
        }
        for_each_cell(box, [&](std::size_t c) {
            consumed[c] = 1;
            return true;
        });
        out.push_back(SubDomain{grid.box_of(box), box, rank});

        std::optional<std::size_t> next;
        for (int sign = 0; sign < 2; ++sign) {
            for (std::size_t d = 0; d < dim; ++d) {
                auto l = layer(box, d, sign == 0);
                if (!l) continue;
                for_each_cell(*l, [&](std::size_t c) {
                    if (available(c) && (!next || c < *next)) next = c;
                    return true;
                });
            }
        }
        seed = next ? next : global_seed();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ghost overlaps

std::vector<std::vector<int>> periodic_images(const BoundaryConditions& bc) {
    std::vector<std::vector<int>> images{std::vector<int>(bc.size(), 0)};
    for (std::size_t d = 0; d < bc.size(); ++d) {
        if (bc[d] != Boundary::Periodic) continue;
        const std::size_t count = images.size();
        for (int s : {-1, 1}) {
            for (std::size_t i = 0; i < count; ++i) {
                auto img = images[i];
                img[d] = s;
                images.push_back(std::move(img));
            }
        }
    }
    return images;
}

std::vector<GhostOverlapTable> compute_ghost_overlaps(const std::vector<std::vector<SubDomain>>& all,
                                                      const GhostSpec& ghost, const AxisBox& domain,
                                                      const BoundaryConditions& bc) {
    const std::size_t dim = domain.dim();
    if (bc.size() != dim) throw UsageError("compute_ghost_overlaps: boundary conditions dimension mismatch");
    for (std::size_t d = 0; d < dim; ++d) {
        if (bc[d] == Boundary::Periodic && ghost.width > 0.5 * domain.extent(d)) {
            throw UsageError("ghost width " + std::to_string(ghost.width) + " exceeds half the periodic extent on axis " +
                             std::to_string(d));
        }
    }
    std::vector<GhostOverlapTable> tables(all.size());
    if (ghost.width == 0.0) return tables;
    const auto images = periodic_images(bc);
    for (std::size_t ra = 0; ra < all.size(); ++ra) {
        for (std::size_t i = 0; i < all[ra].size(); ++i) {
            const AxisBox grown = box_enlarge(all[ra][i].box, ghost);
            for (std::size_t rb = 0; rb < all.size(); ++rb) {
                for (std::size_t j = 0; j < all[rb].size(); ++j) {
                    for (const auto& img : images) {
                        const bool zero = std::all_of(img.begin(), img.end(), [](int s) { return s == 0; });
                        if (zero && ra == rb) continue;
                        std::vector<double> shift(dim);
                        for (std::size_t d = 0; d < dim; ++d) shift[d] = img[d] * domain.extent(d);
                        auto ext = box_intersect(grown, all[rb][j].box.shifted(shift));
                        if (!ext) continue;
                        // Shifting back can round past the owner's faces; clamp onto it.
                        const AxisBox& owner = all[rb][j].box;
                        AxisBox back = *ext;
                        for (std::size_t d = 0; d < dim; ++d) {
                            back.low[d] = std::max(back.low[d] - shift[d], owner.low[d]);
                            back.high[d] = std::min(back.high[d] - shift[d], owner.high[d]);
                        }
                        tables[ra].external.push_back(GhostBox{*ext, static_cast<int>(rb), i, j, img, shift});
                        tables[rb].internal.push_back(GhostBox{back, static_cast<int>(ra), j, i, img, shift});
                    }
                }
            }
        }
    }
    return tables;
}

// ---------------------------------------------------------------------------
// Decomposition

namespace {

Bytes encode_subdomains(const std::vector<SubDomain>& subs, std::size_t dim) {
    Bytes b;
    ByteWriter w(b);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(subs.size()));
    for (const auto& s : subs) {
        for (std::size_t d = 0; d < dim; ++d) w.put<std::int64_t>(s.cells.low[d]);
        for (std::size_t d = 0; d < dim; ++d) w.put<std::int64_t>(s.cells.high[d]);
    }
    return b;
}

std::vector<SubDomain> decode_subdomains(const Bytes& b, const SubSubGrid& grid, int rank) {
    ByteReader r(b);
    const auto count = r.get<std::uint32_t>();
    std::vector<SubDomain> subs;
    for (std::uint32_t i = 0; i < count; ++i) {
        KeyBox k{GridKey(grid.dim()), GridKey(grid.dim())};
        for (std::size_t d = 0; d < grid.dim(); ++d) k.low[d] = r.get<std::int64_t>();
        for (std::size_t d = 0; d < grid.dim(); ++d) k.high[d] = r.get<std::int64_t>();
        subs.push_back(SubDomain{grid.box_of(k), k, rank});
    }
    return subs;
}

}  // namespace

std::shared_ptr<Decomposition> Decomposition::assemble(int nranks, int my_rank, SubSubGrid grid, Assignment assignment,
                                                       BoundaryConditions bc, GhostSpec ghost,
                                                       std::vector<std::vector<SubDomain>> subdomains) {
    auto d = std::shared_ptr<Decomposition>(new Decomposition());
    d->nranks_ = nranks;
    d->my_rank_ = my_rank;
    d->cell_sub_.assign(grid.cell_count(), 0);
    for (const auto& subs : subdomains) {
        for (std::size_t s = 0; s < subs.size(); ++s) {
            const KeyBox& kb = subs[s].cells;
            GridKey k = kb.low;
            const std::size_t dim = grid.dim();
            for (;;) {
                d->cell_sub_[grid.index_of(k)] = s;
                std::size_t a = 0;
                for (; a < dim; ++a) {
                    if (++k[a] < kb.high[a]) break;
                    k[a] = kb.low[a];
                }
                if (a == dim) break;
            }
        }
    }
    auto tables = compute_ghost_overlaps(subdomains, ghost, grid.domain, bc);
    d->table_ = std::move(tables[static_cast<std::size_t>(my_rank)]);
    for (const auto* list : {&d->table_.external, &d->table_.internal})
        for (const auto& g : *list)
            if (g.rank != my_rank) d->neighbors_.push_back(g.rank);
    std::sort(d->neighbors_.begin(), d->neighbors_.end());
    d->neighbors_.erase(std::unique(d->neighbors_.begin(), d->neighbors_.end()), d->neighbors_.end());
    const auto imgs = periodic_images(bc);
    for (const auto& mine : subdomains[static_cast<std::size_t>(my_rank)]) {
        for (int r = 0; r < nranks; ++r) {
            if (r == my_rank) continue;
            bool touching = false;
            for (const auto& other : subdomains[static_cast<std::size_t>(r)]) {
                for (const auto& img : imgs) {
                    bool t = true;
                    for (std::size_t a = 0; a < grid.dim() && t; ++a) {
                        const std::int64_t s = img[a] * grid.cells_per_axis[a];
                        t = mine.cells.low[a] <= other.cells.high[a] + s && other.cells.low[a] + s <= mine.cells.high[a];
                    }
                    touching |= t;
                }
            }
            if (touching) d->adjacent_.push_back(r);
        }
    }
    std::sort(d->adjacent_.begin(), d->adjacent_.end());
    d->adjacent_.erase(std::unique(d->adjacent_.begin(), d->adjacent_.end()), d->adjacent_.end());
    d->grid_ = std::move(grid);
    d->assignment_ = std::move(assignment);
    d->bc_ = std::move(bc);
    d->ghost_ = ghost;
    d->subdomains_ = std::move(subdomains);
    return d;
}

namespace {

void validate(const SubSubGrid& grid, const Assignment& assignment, int nranks, const BoundaryConditions& bc) {
    if (bc.size() != grid.dim()) throw UsageError("decomposition: boundary conditions dimension mismatch");
    if (assignment.size() != grid.cell_count()) throw UsageError("decomposition: assignment size mismatch");
    for (int r : assignment)
        if (r < 0 || r >= nranks) throw UsageError("decomposition: rank id out of range");
}

}  // namespace

std::shared_ptr<const Decomposition> Decomposition::replicated(int nranks, int my_rank, SubSubGrid grid,
                                                               Assignment assignment, BoundaryConditions bc,
                                                               GhostSpec ghost) {
    validate(grid, assignment, nranks, bc);
    std::vector<std::vector<SubDomain>> subs(static_cast<std::size_t>(nranks));
    for (int r = 0; r < nranks; ++r) subs[static_cast<std::size_t>(r)] = merge_sub_domains(assignment, grid, r);
    return assemble(nranks, my_rank, std::move(grid), std::move(assignment), std::move(bc), ghost, std::move(subs));
}

std::shared_ptr<const Decomposition> Decomposition::from_assignment(World& world, SubSubGrid grid, Assignment assignment,
                                                                    BoundaryConditions bc, GhostSpec ghost) {
    validate(grid, assignment, world.size(), bc);
    auto mine = merge_sub_domains(assignment, grid, world.rank());
    auto parts = world.allgather(encode_subdomains(mine, grid.dim()));
    std::vector<std::vector<SubDomain>> subs(parts.size());
    for (std::size_t r = 0; r < parts.size(); ++r) subs[r] = decode_subdomains(parts[r], grid, static_cast<int>(r));
    return assemble(world.size(), world.rank(), std::move(grid), std::move(assignment), std::move(bc), ghost,
                    std::move(subs));
}

std::shared_ptr<const Decomposition> Decomposition::build(World& world, const AxisBox& domain, BoundaryConditions bc,
                                                          GhostSpec ghost, const DecompositionOptions& options,
                                                          std::span<const double> costs) {
    SubSubGrid grid = options.cells_per_axis ? SubSubGrid{domain, *options.cells_per_axis}
                                             : create_sub_sub_grid(domain, world.size(), options.granularity_factor);
    if (grid.dim() != domain.dim()) throw UsageError("decomposition: cells_per_axis dimension mismatch");
    std::vector<double> c(costs.begin(), costs.end());
    if (c.empty()) c.assign(grid.cell_count(), 1.0);
    auto graph = build_graph(grid, c, bc, ghost);
    Assignment a = partition_sfc(graph, grid, world.size());
    if (options.method == PartitionMethod::SfcRefined) a = partition_graph_refine(graph, world.size(), a, {}, 0.0, options.refine);
    return from_assignment(world, std::move(grid), std::move(a), std::move(bc), ghost);
}

std::optional<int> Decomposition::owner_of(std::span<const double> p) const {
    auto c = grid_.cell_of(p);
    if (!c) return std::nullopt;
    return assignment_[*c];
}

std::vector<std::vector<int>> Decomposition::images() const { return periodic_images(bc_); }

bool Decomposition::same_layout(const Decomposition& o) const {
    return nranks_ == o.nranks_ && grid_.domain == o.grid_.domain && grid_.cells_per_axis == o.grid_.cells_per_axis &&
           assignment_ == o.assignment_ && bc_ == o.bc_;
}

}  // namespace pmx
