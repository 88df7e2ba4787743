#include "pmx/mesh.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "pmx/error.hpp"

namespace pmx {

namespace {

constexpr std::uint32_t kTagGridGhostGet = kLibraryTagBase + 8;
constexpr std::uint32_t kTagGridGhostPut = kLibraryTagBase + 9;

/// Calls f(key) for every key of a box, axis 0 fastest.
template <typename F>
void for_each_key(const KeyBox& box, F&& f) {
    if (box.empty()) return;
    const std::size_t dim = box.dim();
    GridKey k = box.low;
    for (;;) {
        f(k);
        std::size_t d = 0;
        for (; d < dim; ++d) {
            if (++k[d] < box.high[d]) break;
            k[d] = box.low[d];
        }
        if (d == dim) return;
    }
}

GridKey minus(const GridKey& k, std::span<const std::int64_t> shift) {
    GridKey out = k;
    for (std::size_t d = 0; d < k.dim(); ++d) out[d] -= shift[d];
    return out;
}

void write_box(ByteWriter& w, const KeyBox& b) {
    for (std::size_t d = 0; d < b.dim(); ++d) w.put<std::int64_t>(b.low[d]);
    for (std::size_t d = 0; d < b.dim(); ++d) w.put<std::int64_t>(b.high[d]);
}

KeyBox read_box(ByteReader& r, std::size_t dim) {
    KeyBox b{GridKey(dim), GridKey(dim)};
    for (std::size_t d = 0; d < dim; ++d) b.low[d] = r.get<std::int64_t>();
    for (std::size_t d = 0; d < dim; ++d) b.high[d] = r.get<std::int64_t>();
    return b;
}

void add_values(ColumnStore& dst, std::size_t di, const ColumnStore& src, std::size_t si, PropId p) {
    if (dst.schema()[p].base == BaseType::Real) {
        auto a = dst.real(p, di);
        auto b = src.real(p, si);
        for (std::size_t c = 0; c < a.size(); ++c) a[c] += b[c];
    } else {
        auto a = dst.integer(p, di);
        auto b = src.integer(p, si);
        for (std::size_t c = 0; c < a.size(); ++c) a[c] += b[c];
    }
}

void copy_values(ColumnStore& dst, std::size_t di, const ColumnStore& src, std::size_t si, PropId p) {
    if (dst.schema()[p].base == BaseType::Real) {
        auto b = src.real(p, si);
        std::copy(b.begin(), b.end(), dst.real(p, di).begin());
    } else {
        auto b = src.integer(p, si);
        std::copy(b.begin(), b.end(), dst.integer(p, di).begin());
    }
}

std::vector<PropId> all_props(const PropertySchema& s, std::span<const PropId> props) {
    if (!props.empty()) {
        for (PropId p : props)
            if (p >= s.size()) throw UsageError("grid: property id out of range");
        return {props.begin(), props.end()};
    }
    std::vector<PropId> out(s.size());
    for (PropId p = 0; p < s.size(); ++p) out[p] = p;
    return out;
}

}  // namespace

std::size_t GridBlock::index(const GridKey& key) const {
    std::size_t idx = 0;
    for (std::size_t d = 0; d < key.dim(); ++d) idx += static_cast<std::size_t>((key[d] - alloc.low[d]) * stride[d]);
    return idx;
}

GridKey GridBlock::key(std::size_t index) const {
    GridKey k(alloc.dim());
    for (std::size_t d = 0; d < alloc.dim(); ++d) {
        const auto n = static_cast<std::size_t>(alloc.extent(d));
        k[d] = alloc.low[d] + static_cast<std::int64_t>(index % n);
        index /= n;
    }
    return k;
}

DistributedGrid::DistributedGrid(World& world, DecompositionPtr decomposition, std::vector<std::int64_t> nodes_per_axis,
                                 PropertySchema schema)
    : world_(&world), decomp_(std::move(decomposition)), nodes_(std::move(nodes_per_axis)), schema_(std::move(schema)) {
    const std::size_t dim = decomp_->dim();
    if (nodes_.size() != dim) throw UsageError("grid: need one node count per axis");
    if (decomp_->nranks() != world.size() || decomp_->my_rank() != world.rank())
        throw UsageError("grid: decomposition was built for a different world");
    for (const auto& p : schema_)
        if (p.is_list()) throw UsageError("grid: list property '" + p.name + "' is not supported on meshes");
    const auto& cells = decomp_->grid().cells_per_axis;
    for (std::size_t d = 0; d < dim; ++d) {
        if (nodes_[d] < 1 || nodes_[d] % cells[d] != 0)
            throw UsageError("grid: nodes on axis " + std::to_string(d) + " (" + std::to_string(nodes_[d]) +
                             ") must be a positive multiple of the sub-sub cells on that axis (" +
                             std::to_string(cells[d]) + ")");
        nodes_per_cell_.push_back(nodes_[d] / cells[d]);
        spacing_.push_back(decomp_->domain().extent(d) / static_cast<double>(nodes_[d]));
        frame_.push_back(decomp_->ghost().node_width(spacing_.back()));
        if (decomp_->bc()[d] == Boundary::Periodic && frame_.back() > nodes_[d])
            throw UsageError("grid: ghost frame wider than the periodic node count on axis " + std::to_string(d));
    }
    for (const auto& s : decomp_->local_subdomains()) {
        GridBlock b;
        b.owned = owned_box(s);
        b.alloc = alloc_box(b.owned);
        b.stride.resize(dim);
        std::int64_t stride = 1;
        for (std::size_t d = 0; d < dim; ++d) {
            b.stride[d] = stride;
            stride *= b.alloc.extent(d);
        }
        b.data = ColumnStore(schema_, dim);
        b.data.resize(static_cast<std::size_t>(b.alloc.count()));
        blocks_.push_back(std::move(b));
    }
    build_transfers();
}

KeyBox DistributedGrid::owned_box(const SubDomain& s) const {
    KeyBox k = s.cells;
    for (std::size_t d = 0; d < k.dim(); ++d) {
        k.low[d] *= nodes_per_cell_[d];
        k.high[d] *= nodes_per_cell_[d];
    }
    return k;
}

KeyBox DistributedGrid::alloc_box(const KeyBox& owned) const {
    KeyBox k = owned;
    for (std::size_t d = 0; d < k.dim(); ++d) {
        k.low[d] -= frame_[d];
        k.high[d] += frame_[d];
    }
    return k;
}

void DistributedGrid::build_transfers() {
    const int me = world_->rank();
    const std::size_t dim = this->dim();
    const auto images = decomp_->images();
    for (int dst = 0; dst < decomp_->nranks(); ++dst) {
        const auto& dst_subs = decomp_->subdomains(dst);
        for (std::size_t b = 0; b < dst_subs.size(); ++b) {
            const KeyBox frame = alloc_box(owned_box(dst_subs[b]));
            for (int src = 0; src < decomp_->nranks(); ++src) {
                if (src != me && dst != me) continue;
                const auto& src_subs = decomp_->subdomains(src);
                for (std::size_t t = 0; t < src_subs.size(); ++t) {
                    const KeyBox owned = owned_box(src_subs[t]);
                    for (const auto& img : images) {
                        const bool zero = std::all_of(img.begin(), img.end(), [](int s) { return s == 0; });
                        if (zero && src == dst && t == b) continue;
                        std::vector<std::int64_t> shift(dim);
                        for (std::size_t d = 0; d < dim; ++d) shift[d] = img[d] * nodes_[d];
                        auto box = key_box_intersect(frame, owned.shifted(shift));
                        if (!box) continue;
                        transfers_.push_back(Transfer{src, t, dst, b, *box, shift});
                    }
                }
            }
        }
    }
}

std::int64_t DistributedGrid::global_node_count() const {
    std::int64_t n = 1;
    for (auto x : nodes_) n *= x;
    return n;
}

std::int64_t DistributedGrid::owned_node_count() const {
    std::int64_t n = 0;
    for (const auto& b : blocks_) n += b.owned.count();
    return n;
}

Point DistributedGrid::node_position(const GridKey& key) const {
    Point p(dim());
    for (std::size_t d = 0; d < dim(); ++d)
        p[d] = decomp_->domain().low[d] + static_cast<double>(key[d]) * spacing_[d];
    return p;
}

std::optional<std::size_t> DistributedGrid::owning_block(const GridKey& key) const {
    for (std::size_t b = 0; b < blocks_.size(); ++b)
        if (blocks_[b].owned.contains(key)) return b;
    return std::nullopt;
}

std::span<const double> DistributedGrid::get(const GridKey& key, PropId p) const {
    if (key.dim() != dim()) throw UsageError("grid get: key has the wrong dimension");
    if (auto b = owning_block(key)) return blocks_[*b].data.real(p, blocks_[*b].index(key));
    for (const auto& blk : blocks_)
        if (blk.alloc.contains(key)) return blk.data.real(p, blk.index(key));
    throw UsageError("grid get: key outside this rank's blocks and frames");
}

void DistributedGrid::set(const GridKey& key, PropId p, std::span<const double> value) {
    if (key.dim() != dim()) throw UsageError("grid set: key has the wrong dimension");
    auto b = owning_block(key);
    if (!b) throw UsageError("grid set: key is not owned by this rank (ghost frames are read-only)");
    auto dst = blocks_[*b].data.real(p, blocks_[*b].index(key));
    if (value.size() != dst.size()) throw UsageError("grid set: value has the wrong width");
    std::copy(value.begin(), value.end(), dst.begin());
}

void DistributedGrid::ghost_get(std::span<const PropId> props_in) {
    const auto props = all_props(schema_, props_in);
    const int me = world_->rank();
    std::map<int, Bytes> out;
    std::set<int> sources;
    for (const auto& t : transfers_) {
        if (t.src_rank == me && t.dst_rank != me) {
            ByteWriter w(out[t.dst_rank]);
            const auto& src = blocks_[t.src_block];
            for_each_key(t.box, [&](const GridKey& k) {
                const std::size_t si = src.index(minus(k, t.shift));
                for (PropId p : props) src.data.encode(p, si, w);
            });
        } else if (t.dst_rank == me && t.src_rank != me) {
            sources.insert(t.src_rank);
        }
    }
    for (auto& [r, b] : out) world_->send(r, kTagGridGhostGet, std::move(b));

    std::map<int, Bytes> incoming;
    for (int r : sources) incoming[r] = world_->recv(r, kTagGridGhostGet);
    std::map<int, ByteReader> readers;
    for (auto& [r, b] : incoming) readers.emplace(r, ByteReader(b));
    for (const auto& t : transfers_) {
        if (t.dst_rank != me) continue;
        auto& dst = blocks_[t.dst_block];
        if (t.src_rank == me) {
            const auto& src = blocks_[t.src_block];
            for_each_key(t.box, [&](const GridKey& k) {
                const std::size_t si = src.index(minus(k, t.shift)), di = dst.index(k);
                for (PropId p : props) copy_values(dst.data, di, src.data, si, p);
            });
        } else {
            auto& r = readers.at(t.src_rank);
            for_each_key(t.box, [&](const GridKey& k) {
                const std::size_t di = dst.index(k);
                for (PropId p : props) dst.data.decode(p, di, r);
            });
        }
    }
    for (auto& [r, rd] : readers)
        if (!rd.done()) throw ProtocolError("grid ghost_get: trailing bytes from rank " + std::to_string(r));
}

void DistributedGrid::ghost_put_sum(std::span<const PropId> props_in) {
    const auto props = all_props(schema_, props_in);
    const int me = world_->rank();
    std::map<int, Bytes> out;
    std::set<int> sources;
    for (const auto& t : transfers_) {
        if (t.dst_rank == me && t.src_rank != me) {
            ByteWriter w(out[t.src_rank]);
            const auto& frame = blocks_[t.dst_block];
            for_each_key(t.box, [&](const GridKey& k) {
                for (PropId p : props) frame.data.encode(p, frame.index(k), w);
            });
        } else if (t.src_rank == me && t.dst_rank != me) {
            sources.insert(t.dst_rank);
        }
    }
    for (auto& [r, b] : out) world_->send(r, kTagGridGhostPut, std::move(b));

    std::map<int, Bytes> incoming;
    for (int r : sources) incoming[r] = world_->recv(r, kTagGridGhostPut);
    std::map<int, ByteReader> readers;
    for (auto& [r, b] : incoming) readers.emplace(r, ByteReader(b));
    ColumnStore scratch(schema_, dim());
    scratch.resize(1);
    for (const auto& t : transfers_) {
        if (t.src_rank != me) continue;
        auto& owner = blocks_[t.src_block];
        if (t.dst_rank == me) {
            const auto& frame = blocks_[t.dst_block];
            for_each_key(t.box, [&](const GridKey& k) {
                const std::size_t oi = owner.index(minus(k, t.shift)), fi = frame.index(k);
                for (PropId p : props) add_values(owner.data, oi, frame.data, fi, p);
            });
        } else {
            auto& r = readers.at(t.dst_rank);
            for_each_key(t.box, [&](const GridKey& k) {
                const std::size_t oi = owner.index(minus(k, t.shift));
                for (PropId p : props) {
                    scratch.decode(p, 0, r);
                    add_values(owner.data, oi, scratch, 0, p);
                }
            });
        }
    }
    for (auto& [r, rd] : readers)
        if (!rd.done()) throw ProtocolError("grid ghost_put: trailing bytes from rank " + std::to_string(r));
}

std::vector<GridPiece> DistributedGrid::export_pieces() const {
    std::vector<GridPiece> out;
    for (const auto& blk : blocks_) {
        GridPiece piece{blk.owned, ColumnStore(schema_, dim())};
        piece.values.resize(static_cast<std::size_t>(blk.owned.count()));
        std::size_t i = 0;
        for_each_key(blk.owned, [&](const GridKey& k) {
            const std::size_t si = blk.index(k);
            for (PropId p = 0; p < schema_.size(); ++p) copy_values(piece.values, i, blk.data, si, p);
            ++i;
        });
        out.push_back(std::move(piece));
    }
    return out;
}

void DistributedGrid::import_pieces(const std::vector<GridPiece>& pieces) {
    const int me = world_->rank();
    const std::size_t dim = this->dim();
    KeyBox global{GridKey(dim, 0), GridKey(std::span<const std::int64_t>(nodes_))};
    std::map<int, Bytes> out;
    std::map<int, std::uint64_t> counts;

    auto piece_index = [&](const GridPiece& piece, const GridKey& k) {
        std::size_t idx = 0, stride = 1;
        for (std::size_t d = 0; d < dim; ++d) {
            idx += static_cast<std::size_t>(k[d] - piece.box.low[d]) * stride;
            stride *= static_cast<std::size_t>(piece.box.extent(d));
        }
        return idx;
    };
    for (const auto& piece : pieces) {
        if (piece.box.dim() != dim || !(piece.values.schema() == schema_))
            throw IncompatibleSchemaError("grid import: piece does not match the grid schema or dimension");
        auto clipped = key_box_intersect(piece.box, global);
        if (!clipped || *clipped != piece.box) throw UsageError("grid import: piece extends beyond the global node range");
        for (int r = 0; r < decomp_->nranks(); ++r) {
            const auto& subs = decomp_->subdomains(r);
            for (std::size_t t = 0; t < subs.size(); ++t) {
                auto box = key_box_intersect(piece.box, owned_box(subs[t]));
                if (!box) continue;
                if (r == me) {
                    auto& blk = blocks_[t];
                    for_each_key(*box, [&](const GridKey& k) {
                        const std::size_t si = piece_index(piece, k), di = blk.index(k);
                        for (PropId p = 0; p < schema_.size(); ++p) copy_values(blk.data, di, piece.values, si, p);
                    });
                    continue;
                }
                ByteWriter w(out[r]);
                ++counts[r];
                w.put<std::uint32_t>(static_cast<std::uint32_t>(t));
                write_box(w, *box);
                for_each_key(*box, [&](const GridKey& k) {
                    const std::size_t si = piece_index(piece, k);
                    for (PropId p = 0; p < schema_.size(); ++p) piece.values.encode(p, si, w);
                });
            }
        }
    }
    // Prefix each message with its sub-piece count.
    for (auto& [r, b] : out) {
        Bytes framed;
        ByteWriter w(framed);
        w.put<std::uint64_t>(counts[r]);
        w.put_bytes(b);
        b = std::move(framed);
    }
    for (auto& [src, payload] : world_->nbx_exchange(out)) {
        ByteReader r(payload);
        const auto n = r.get<std::uint64_t>();
        for (std::uint64_t i = 0; i < n; ++i) {
            const auto t = r.get<std::uint32_t>();
            if (t >= blocks_.size()) throw ProtocolError("grid import: unknown block from rank " + std::to_string(src));
            const KeyBox box = read_box(r, dim);
            auto& blk = blocks_[t];
            if (key_box_intersect(box, blk.owned) != box) throw ProtocolError("grid import: piece outside target block");
            for_each_key(box, [&](const GridKey& k) {
                const std::size_t di = blk.index(k);
                for (PropId p = 0; p < schema_.size(); ++p) blk.data.decode(p, di, r);
            });
        }
        if (!r.done()) throw ProtocolError("grid import: trailing bytes from rank " + std::to_string(src));
    }
}

DistributedGrid DistributedGrid::redistribute(DecompositionPtr next) const {
    if (next->dim() != dim() || !(next->domain() == decomp_->domain()))
        throw UsageError("grid redistribute: decomposition covers a different domain");
    DistributedGrid out(*world_, std::move(next), nodes_, schema_);
    out.import_pieces(export_pieces());
    return out;
}

void DistributedGrid::for_each_owned(const std::function<void(std::size_t, std::size_t, const GridKey&)>& f) const {
    for (std::size_t b = 0; b < blocks_.size(); ++b)
        for_each_key(blocks_[b].owned, [&](const GridKey& k) { f(b, blocks_[b].index(k), k); });
}

StencilView::StencilView(const DistributedGrid& grid, Stencil stencil) : grid_(&grid), stencil_(std::move(stencil)) {
    for (const auto& off : stencil_) {
        if (off.dim() != grid.dim()) throw UsageError("stencil: offset has the wrong dimension");
        for (std::size_t d = 0; d < grid.dim(); ++d)
            if (std::abs(off[d]) > grid.frame()[d])
                throw UsageError("stencil: offset " + std::to_string(off[d]) + " on axis " + std::to_string(d) +
                                 " exceeds the ghost frame of " + std::to_string(grid.frame()[d]) + " nodes");
    }
    for (std::size_t b = 0; b < grid.block_count(); ++b) {
        std::vector<std::ptrdiff_t> offs;
        for (const auto& off : stencil_) {
            std::ptrdiff_t o = 0;
            for (std::size_t d = 0; d < grid.dim(); ++d) o += off[d] * grid.block(b).stride[d];
            offs.push_back(o);
        }
        offsets_.push_back(std::move(offs));
    }
}

Stencil star_stencil(std::size_t dim) {
    Stencil s{GridKey(dim, 0)};
    for (std::size_t d = 0; d < dim; ++d) {
        GridKey m(dim, 0), p(dim, 0);
        m[d] = -1;
        p[d] = 1;
        s.push_back(m);
        s.push_back(p);
    }
    return s;
}

}  // namespace pmx
