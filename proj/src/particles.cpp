#include "pmx/particles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "pmx/error.hpp"

namespace pmx {

namespace {

constexpr std::uint32_t kTagMapLocal = kLibraryTagBase + 1;
constexpr std::uint32_t kTagGhostGet = kLibraryTagBase + 2;
constexpr std::uint32_t kTagGhostPut = kLibraryTagBase + 3;

std::string describe(std::span<const double> x) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (std::size_t d = 0; d < x.size(); ++d) os << (d ? ", " : "") << x[d];
    os << ')';
    return os.str();
}

enum : std::int64_t { kMapOk = 0, kMapUnreachable = 1, kMapOutOfDomain = 2 };

}  // namespace

ParticleSet::ParticleSet(World& world, DecompositionPtr decomposition, PropertySchema schema)
    : world_(&world), decomp_(std::move(decomposition)), dim_(decomp_->dim()), props_(std::move(schema), dim_) {
    if (decomp_->nranks() != world.size() || decomp_->my_rank() != world.rank())
        throw UsageError("particle set: decomposition was built for a different world");
    const auto& dom = decomp_->domain();
    for (std::size_t d = 0; d < dim_; ++d) {
        if (decomp_->bc()[d] == Boundary::Periodic && decomp_->ghost().width > 0.5 * dom.extent(d))
            throw UsageError("particle set: ghost width exceeds half the periodic extent on axis " + std::to_string(d));
    }
}

void ParticleSet::set_decomposition(DecompositionPtr decomposition) {
    if (decomposition->dim() != dim_ || decomposition->nranks() != world_->size())
        throw UsageError("particle set: incompatible decomposition");
    clear_ghosts();
    decomp_ = std::move(decomposition);
}

void ParticleSet::resize(std::size_t n) {
    pos_.resize(n * dim_, 0.0);
    gids_.resize(n, 0);
    props_.resize(n);
}

std::size_t ParticleSet::add(std::span<const double> position, std::int64_t gid) {
    if (position.size() != dim_) throw UsageError("add: position has the wrong dimension");
    clear_ghosts();
    const std::size_t i = n_owned_;
    resize(i + 1);
    std::copy(position.begin(), position.end(), pos_.begin() + static_cast<std::ptrdiff_t>(i * dim_));
    gids_[i] = gid;
    ++n_owned_;
    return i;
}

void ParticleSet::clear_ghosts() {
    resize(n_owned_);
    origins_.clear();
    shifts_.clear();
    send_plan_.clear();
    recv_ranks_.clear();
    recv_counts_.clear();
    plan_valid_ = false;
}

void ParticleSet::remove_owned_if(const std::function<bool(std::size_t)>& drop) {
    clear_ghosts();
    std::vector<char> keep(n_owned_);
    for (std::size_t i = 0; i < n_owned_; ++i) keep[i] = !drop(i);
    compact_owned(keep);
}

void ParticleSet::compact_owned(const std::vector<char>& keep) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < n_owned_; ++i) {
        if (!keep[i]) continue;
        if (out != i) {
            std::copy_n(pos_.begin() + static_cast<std::ptrdiff_t>(i * dim_), dim_,
                        pos_.begin() + static_cast<std::ptrdiff_t>(out * dim_));
            gids_[out] = gids_[i];
            props_.copy_within(out, i);
        }
        ++out;
    }
    n_owned_ = out;
    resize(out);
}

void ParticleSet::encode_particle(std::size_t i, ByteWriter& w) const {
    w.put_span<double>(position(i));
    w.put<std::int64_t>(gids_[i]);
    for (PropId p = 0; p < props_.schema().size(); ++p) props_.encode(p, i, w);
}

void ParticleSet::decode_particle(ByteReader& r) {
    const std::size_t i = size();
    resize(i + 1);
    r.get_into<double>(position(i));
    gids_[i] = r.get<std::int64_t>();
    for (PropId p = 0; p < props_.schema().size(); ++p) props_.decode(p, i, r);
}

std::size_t ParticleSet::record_size(std::size_t i) const {
    std::size_t n = 8 * dim_ + 8;
    for (PropId p = 0; p < props_.schema().size(); ++p) n += props_.encoded_size(p, i);
    return n;
}

std::vector<int> ParticleSet::destinations(bool local) {
    const auto& dom = decomp_->domain();
    const auto& bc = decomp_->bc();
    const auto& adjacent = decomp_->adjacent_ranks();
    std::vector<int> dest(n_owned_, world_->rank());
    std::int64_t code = kMapOk;
    std::string message;
    for (std::size_t i = 0; i < n_owned_ && code == kMapOk; ++i) {
        auto x = position(i);
        periodic_wrap_inplace(x, dom, bc);
        auto owner = decomp_->owner_of(x);
        if (!owner) {
            code = kMapOutOfDomain;
            message = "particle gid " + std::to_string(gids_[i]) + " at " + describe(x) + " lies outside the domain";
        } else if (local && *owner != world_->rank() &&
                   !std::binary_search(adjacent.begin(), adjacent.end(), *owner)) {
            code = kMapUnreachable;
            message = "map_local: particle gid " + std::to_string(gids_[i]) + " moved to non-adjacent rank " +
                      std::to_string(*owner) + "; use map_global";
        } else {
            dest[i] = *owner;
        }
    }
    const auto worst = world_->allreduce_max(code);
    if (worst == kMapOk) return dest;
    if (message.empty()) message = "map failed on another rank";
    if (worst == kMapOutOfDomain) throw OutOfDomainError(message);
    throw UsageError(message);
}

void ParticleSet::append_received(const std::map<int, Bytes>& incoming) {
    for (const auto& [src, payload] : incoming) {
        ByteReader r(payload);
        const auto count = r.get<std::uint64_t>();
        for (std::uint64_t k = 0; k < count; ++k) decode_particle(r);
        n_owned_ = size();
        if (!r.done()) throw ProtocolError("map: trailing bytes in message from rank " + std::to_string(src));
    }
}

void ParticleSet::map_local() {
    clear_ghosts();
    auto dest = destinations(true);
    const int me = world_->rank();
    std::map<int, Bytes> out;
    std::map<int, std::uint64_t> counts;
    for (int r : decomp_->adjacent_ranks()) counts[r] = 0;
    for (std::size_t i = 0; i < n_owned_; ++i)
        if (dest[i] != me) ++counts[dest[i]];
    for (auto& [r, c] : counts) ByteWriter(out[r]).put<std::uint64_t>(c);
    std::vector<char> keep(n_owned_, 1);
    for (std::size_t i = 0; i < n_owned_; ++i) {
        if (dest[i] == me) continue;
        ByteWriter w(out[dest[i]]);
        encode_particle(i, w);
        keep[i] = 0;
    }
    for (auto& [r, payload] : out) world_->send(r, kTagMapLocal, std::move(payload));
    compact_owned(keep);
    std::map<int, Bytes> incoming;
    for (int r : decomp_->adjacent_ranks()) incoming[r] = world_->recv(r, kTagMapLocal);
    append_received(incoming);
}

void ParticleSet::map_global() {
    clear_ghosts();
    auto dest = destinations(false);
    const int me = world_->rank();
    std::map<int, std::uint64_t> counts;
    for (std::size_t i = 0; i < n_owned_; ++i)
        if (dest[i] != me) ++counts[dest[i]];
    std::map<int, Bytes> out;
    for (auto& [r, c] : counts) ByteWriter(out[r]).put<std::uint64_t>(c);
    std::vector<char> keep(n_owned_, 1);
    for (std::size_t i = 0; i < n_owned_; ++i) {
        if (dest[i] == me) continue;
        ByteWriter w(out[dest[i]]);
        encode_particle(i, w);
        keep[i] = 0;
    }
    auto incoming = world_->nbx_exchange(out);
    compact_owned(keep);
    append_received(incoming);
}

void ParticleSet::ghost_get(std::span<const PropId> props, GhostMode mode) {
    for (PropId p : props)
        if (p >= props_.schema().size()) throw UsageError("ghost_get: property id out of range");
    const int me = world_->rank();

    if (mode == GhostMode::Rebuild) {
        clear_ghosts();
        const auto& table = decomp_->ghost_table();
        const auto& grid = decomp_->grid();
        std::vector<std::vector<std::size_t>> by_sub(decomp_->local_subdomains().size());
        for (std::size_t i = 0; i < n_owned_; ++i) {
            auto c = grid.cell_of(position(i));
            if (!c || decomp_->owner_of_cell(*c) != me) continue;
            by_sub[decomp_->subdomain_of_cell(*c)].push_back(i);
        }
        std::map<int, std::set<std::pair<std::size_t, std::vector<int>>>> seen;
        std::vector<double> shifted(dim_);
        for (const auto& g : table.internal) {
            const AxisBox target = box_enlarge(decomp_->subdomains(g.rank)[g.remote_sub].box, decomp_->ghost());
            auto& plan = send_plan_[g.rank];
            for (std::size_t i : by_sub[g.local_sub]) {
                auto x = position(i);
                for (std::size_t d = 0; d < dim_; ++d) shifted[d] = x[d] + g.shift[d];
                if (!target.contains(shifted)) continue;
                if (!seen[g.rank].insert({i, g.image}).second) continue;
                plan.push_back(SendItem{i, g.shift});
            }
        }
        for (const auto& g : table.external)
            if (g.rank != me) recv_ranks_.push_back(g.rank);
        std::sort(recv_ranks_.begin(), recv_ranks_.end());
        recv_ranks_.erase(std::unique(recv_ranks_.begin(), recv_ranks_.end()), recv_ranks_.end());
        plan_valid_ = true;
    } else if (!plan_valid_) {
        throw UsageError("ghost_get(KEEP) requires a preceding rebuild with no map or insertion since");
    }

    auto encode_item = [&](const SendItem& item, ByteWriter& w) {
        auto x = position(item.index);
        for (std::size_t d = 0; d < dim_; ++d) w.put<double>(x[d] + item.shift[d]);
        for (PropId p : props) props_.encode(p, item.index, w);
    };
    for (const auto& [r, plan] : send_plan_) {
        if (r == me) continue;
        Bytes b;
        ByteWriter w(b);
        w.put<std::uint64_t>(plan.size());
        for (const auto& item : plan) {
            w.put<std::uint64_t>(item.index);
            w.put<std::int64_t>(gids_[item.index]);
            w.put_span<double>(item.shift);
            encode_item(item, w);
        }
        world_->send(r, kTagGhostGet, std::move(b));
    }

    // Ghosts are laid out by ascending source rank, this rank's own periodic
    // images included.
    std::vector<int> sources = recv_ranks_;
    if (send_plan_.count(me)) sources.insert(std::upper_bound(sources.begin(), sources.end(), me), me);
    std::size_t cursor = n_owned_;
    for (int src : sources) {
        if (src == me) {
            Bytes local;
            ByteWriter w(local);
            for (const auto& item : send_plan_[me]) encode_item(item, w);
            ByteReader r(local);
            for (const auto& item : send_plan_[me]) {
                std::size_t g = cursor++;
                if (mode == GhostMode::Rebuild) {
                    resize(g + 1);
                    gids_[g] = gids_[item.index];
                    origins_.push_back({me, item.index});
                    shifts_.insert(shifts_.end(), item.shift.begin(), item.shift.end());
                }
                r.get_into<double>(position(g));
                for (PropId p : props) props_.decode(p, g, r);
            }
            continue;
        }
        Bytes payload = world_->recv(src, kTagGhostGet);
        ByteReader r(payload);
        const auto count = r.get<std::uint64_t>();
        if (mode == GhostMode::Keep && recv_counts_[src] != count)
            throw ProtocolError("ghost_get(KEEP): ghost count from rank " + std::to_string(src) + " changed");
        recv_counts_[src] = count;
        for (std::uint64_t k = 0; k < count; ++k) {
            std::size_t g = cursor++;
            const auto index = r.get<std::uint64_t>();
            const auto gid = r.get<std::int64_t>();
            if (mode == GhostMode::Rebuild) {
                resize(g + 1);
                gids_[g] = gid;
                origins_.push_back({src, static_cast<std::size_t>(index)});
                shifts_.resize(shifts_.size() + dim_);
                r.get_into<double>(std::span(shifts_).subspan(shifts_.size() - dim_));
            } else {
                r.get_bytes(8 * dim_);
            }
            r.get_into<double>(position(g));
            for (PropId p : props) props_.decode(p, g, r);
        }
        if (!r.done()) throw ProtocolError("ghost_get: trailing bytes from rank " + std::to_string(src));
    }
}

void ParticleSet::ghost_put(std::span<const PropId> props, const MergeOp& op) {
    for (PropId p : props) {
        if (p >= props_.schema().size()) throw UsageError("ghost_put: property id out of range");
        const auto& d = props_.schema()[p];
        if (op.kind == MergeKind::ListMerge && !d.is_list())
            throw UsageError("ghost_put: LIST_MERGE needs a VAR_LIST property, '" + d.name + "' is not");
        if (op.kind != MergeKind::ListMerge && d.is_list())
            throw UsageError("ghost_put: list property '" + d.name + "' only supports LIST_MERGE");
        if (op.kind == MergeKind::Custom && (d.base != BaseType::Real || !op.custom))
            throw UsageError("ghost_put: custom merge needs a combiner and a real property");
    }
    if (!plan_valid_) throw UsageError("ghost_put requires ghosts from a preceding ghost_get");
    const int me = world_->rank();

    std::map<int, std::vector<std::size_t>> by_origin;
    for (std::size_t g = 0; g < origins_.size(); ++g) by_origin[origins_[g].rank].push_back(g);

    auto encode_for = [&](const std::vector<std::size_t>& ghosts) {
        Bytes b;
        ByteWriter w(b);
        w.put<std::uint64_t>(ghosts.size());
        for (std::size_t g : ghosts) {
            w.put<std::uint64_t>(origins_[g].index);
            for (PropId p : props) props_.encode(p, n_owned_ + g, w);
        }
        return b;
    };
    for (int r : recv_ranks_) world_->send(r, kTagGhostPut, encode_for(by_origin[r]));

    ColumnStore scratch(props_.schema(), dim_);
    scratch.resize(1);
    auto merge = [&](ByteReader& r) {
        const auto count = r.get<std::uint64_t>();
        for (std::uint64_t k = 0; k < count; ++k) {
            const auto index = r.get<std::uint64_t>();
            if (index >= n_owned_) throw ProtocolError("ghost_put: contribution for an unknown particle");
            for (PropId p : props) {
                scratch.decode(p, 0, r);
                const auto& d = props_.schema()[p];
                if (op.kind == MergeKind::ListMerge) {
                    if (d.base == BaseType::Real) {
                        const auto& in = scratch.real_list(p, 0);
                        auto& dst = props_.real_list(p, index);
                        dst.insert(dst.end(), in.begin(), in.end());
                    } else {
                        const auto& in = scratch.integer_list(p, 0);
                        auto& dst = props_.integer_list(p, index);
                        dst.insert(dst.end(), in.begin(), in.end());
                    }
                } else if (d.base == BaseType::Real) {
                    auto dst = props_.real(p, index);
                    auto in = scratch.real(p, 0);
                    if (op.kind == MergeKind::Custom) {
                        op.custom(dst, in);
                    } else {
                        for (std::size_t c = 0; c < dst.size(); ++c)
                            dst[c] = op.kind == MergeKind::Sum ? dst[c] + in[c] : std::max(dst[c], in[c]);
                    }
                } else {
                    auto dst = props_.integer(p, index);
                    auto in = scratch.integer(p, 0);
                    for (std::size_t c = 0; c < dst.size(); ++c)
                        dst[c] = op.kind == MergeKind::Sum ? dst[c] + in[c] : std::max(dst[c], in[c]);
                }
            }
        }
        if (!r.done()) throw ProtocolError("ghost_put: trailing bytes");
    };

    std::vector<int> sources;
    for (const auto& [r, plan] : send_plan_) sources.push_back(r);
    for (int src : sources) {
        if (src == me) {
            Bytes local = encode_for(by_origin[me]);
            ByteReader r(local);
            merge(r);
        } else {
            Bytes payload = world_->recv(src, kTagGhostPut);
            ByteReader r(payload);
            merge(r);
        }
    }
}

ParticleSet::IndexRange ParticleSet::iterate(Region region) const {
    switch (region) {
        case Region::Owned: return {0, n_owned_};
        case Region::Ghost: return {n_owned_, size()};
        case Region::All: return {0, size()};
    }
    return {};
}

std::vector<double> ParticleSet::cell_counts() const {
    const auto& grid = decomp_->grid();
    std::vector<double> counts(grid.cell_count(), 0.0);
    for (std::size_t i = 0; i < n_owned_; ++i) {
        std::vector<double> x(position(i).begin(), position(i).end());
        periodic_wrap_inplace(x, decomp_->domain(), decomp_->bc());
        if (auto c = grid.cell_of(x)) counts[*c] += 1.0;
    }
    return counts;
}

void init_grid(ParticleSet& pset, std::span<const std::int64_t> nodes_per_axis) {
    const std::size_t dim = pset.dim();
    if (nodes_per_axis.size() != dim) throw UsageError("init_grid: need one node count per axis");
    if (pset.size() != 0) throw UsageError("init_grid: particle set must be empty");
    std::int64_t total = 1;
    for (auto n : nodes_per_axis) {
        if (n < 1) throw UsageError("init_grid: node counts must be positive");
        total *= n;
    }
    const auto& decomp = *pset.decomposition();
    const auto& dom = decomp.domain();
    const int me = pset.world().rank();
    std::vector<std::int64_t> k(dim, 0);
    std::vector<double> x(dim);
    for (std::int64_t id = 0; id < total; ++id) {
        for (std::size_t d = 0; d < dim; ++d)
            x[d] = dom.low[d] + static_cast<double>(k[d]) * (dom.extent(d) / static_cast<double>(nodes_per_axis[d]));
        auto owner = decomp.owner_of(x);
        if (owner && *owner == me) pset.add(x, id);
        for (std::size_t d = 0; d < dim; ++d) {
            if (++k[d] < nodes_per_axis[d]) break;
            k[d] = 0;
        }
    }
}

// ---------------------------------------------------------------------------
// Neighbor search

CellList::CellList(const ParticleSet& pset, double r_cut) : dim_(pset.dim()), r_cut_(r_cut) {
    if (!(r_cut > 0.0)) throw UsageError("cell list: r_cut must be positive");
    if (r_cut > pset.decomposition()->ghost().width)
        throw UsageError("cell list: r_cut " + std::to_string(r_cut) + " exceeds the ghost width " +
                         std::to_string(pset.decomposition()->ghost().width));
    const std::size_t n = pset.size();
    origin_.assign(dim_, 0.0);
    size_.assign(dim_, r_cut);
    dims_.assign(dim_, 1);
    if (n > 0) {
        std::vector<double> lo(dim_, std::numeric_limits<double>::infinity());
        std::vector<double> hi(dim_, -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < n; ++i) {
            auto x = pset.position(i);
            for (std::size_t d = 0; d < dim_; ++d) {
                lo[d] = std::min(lo[d], x[d]);
                hi[d] = std::max(hi[d], x[d]);
            }
        }
        // Binning beyond a few dimensions costs more than it saves.
        const bool binned = dim_ <= 4;
        for (std::size_t d = 0; d < dim_; ++d) {
            const double extent = hi[d] - lo[d];
            origin_[d] = lo[d];
            dims_[d] = binned ? std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(extent / r_cut))) : 1;
            size_[d] = std::max(r_cut, extent / static_cast<double>(dims_[d]));
        }
    }
    std::size_t cells = 1;
    for (auto c : dims_) cells *= static_cast<std::size_t>(c);
    std::vector<std::size_t> of(n);
    start_.assign(cells + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        of[i] = cell_of(pset.position(i));
        ++start_[of[i] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) start_[c + 1] += start_[c];
    items_.resize(n);
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < n; ++i) items_[fill[of[i]]++] = i;
}

std::size_t CellList::cell_of(std::span<const double> x) const {
    std::size_t idx = 0;
    for (std::size_t d = dim_; d-- > 0;) {
        auto k = static_cast<std::int64_t>(std::floor((x[d] - origin_[d]) / size_[d]));
        k = std::clamp<std::int64_t>(k, 0, dims_[d] - 1);
        idx = idx * static_cast<std::size_t>(dims_[d]) + static_cast<std::size_t>(k);
    }
    return idx;
}

std::vector<std::size_t> CellList::neighborhood(std::size_t c) const {
    std::vector<std::int64_t> key(dim_);
    for (std::size_t d = 0; d < dim_; ++d) {
        key[d] = static_cast<std::int64_t>(c % static_cast<std::size_t>(dims_[d]));
        c /= static_cast<std::size_t>(dims_[d]);
    }
    std::vector<std::size_t> out{0};
    std::size_t stride = 1;
    for (std::size_t d = 0; d < dim_; ++d) {
        std::vector<std::size_t> next;
        for (std::int64_t off = -1; off <= 1; ++off) {
            const std::int64_t k = key[d] + off;
            if (k < 0 || k >= dims_[d]) continue;
            for (std::size_t base : out) next.push_back(base + static_cast<std::size_t>(k) * stride);
        }
        out = std::move(next);
        stride *= static_cast<std::size_t>(dims_[d]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

VerletList::VerletList(const ParticleSet& pset, double r_cut, double skin, bool symmetric)
    : radius_(r_cut + skin), skin_(skin), symmetric_(symmetric) {
    if (skin < 0.0) throw UsageError("verlet list: skin must be nonnegative");
    CellList cells(pset, radius_);
    const std::size_t dim = pset.dim();
    const std::size_t n = pset.n_owned();
    const double r2 = radius_ * radius_;
    start_.assign(n + 1, 0);
    for (std::size_t p = 0; p < n; ++p) {
        auto xp = pset.position(p);
        const auto gp = pset.gid(p);
        const std::size_t begin = items_.size();
        for (std::size_t c : cells.neighborhood(cells.cell_of(xp))) {
            for (std::size_t q : cells.cell(c)) {
                const auto gq = pset.gid(q);
                if (q == p || gq == gp || (symmetric && gq < gp)) continue;
                auto xq = pset.position(q);
                double dist2 = 0.0;
                for (std::size_t d = 0; d < dim; ++d) dist2 += (xp[d] - xq[d]) * (xp[d] - xq[d]);
                if (dist2 < r2) items_.push_back(q);
            }
        }
        std::sort(items_.begin() + static_cast<std::ptrdiff_t>(begin), items_.end());
        start_[p + 1] = items_.size();
    }
    built_at_.assign(pset.positions().begin(), pset.positions().begin() + static_cast<std::ptrdiff_t>(n * dim));
}

double VerletList::max_displacement(const ParticleSet& pset) const {
    const std::size_t dim = pset.dim();
    const std::size_t n = std::min(pset.n_owned(), built_at_.size() / std::max<std::size_t>(dim, 1));
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto x = pset.position(i);
        double d2 = 0.0;
        for (std::size_t d = 0; d < dim; ++d) d2 += (x[d] - built_at_[i * dim + d]) * (x[d] - built_at_[i * dim + d]);
        worst = std::max(worst, d2);
    }
    return worst;
}

bool VerletList::needs_rebuild(const ParticleSet& pset) const {
    if (pset.n_owned() * pset.dim() != built_at_.size()) return true;
    return max_displacement(pset) > 0.25 * skin_ * skin_;
}

void apply_pairwise(ParticleSet& pset, const VerletList& list, const PairKernel& kernel,
                    std::span<const PairTarget> targets) {
    std::size_t total = 0;
    std::vector<std::size_t> offset;
    for (const auto& t : targets) {
        offset.push_back(total);
        total += pset.columns().width(t.prop);
    }
    std::vector<double> buf(total);
    const std::size_t n = std::min(list.size(), pset.n_owned());
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q : list.neighbors(p)) {
            std::fill(buf.begin(), buf.end(), 0.0);
            kernel(pset, p, q, buf);
            for (std::size_t t = 0; t < targets.size(); ++t) {
                auto dst = pset.real(targets[t].prop, p);
                for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += buf[offset[t] + c];
                if (!list.symmetric()) continue;
                auto mirror = pset.real(targets[t].prop, q);
                const double sign = targets[t].mirror == Mirror::Negate ? -1.0 : 1.0;
                for (std::size_t c = 0; c < mirror.size(); ++c) mirror[c] += sign * buf[offset[t] + c];
            }
        }
    }
}

}  // namespace pmx
