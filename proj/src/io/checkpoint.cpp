#include "pmx/io/checkpoint.hpp"

#include <algorithm>
#include <boost/crc.hpp>
#include <cstring>
#include <fstream>

namespace pmx {

namespace {

using Crc32c = boost::crc_optimal<32, 0x1EDC6F41, 0xFFFFFFFF, 0xFFFFFFFF, true, true>;

constexpr std::size_t kTrailerSize = 16;

enum class Failure : std::uint8_t { None = 0, Io = 1, Corrupt = 2, Schema = 3, Other = 4 };

/// Runs a rank-local step and turns any failure into the same exception on
/// every rank, naming the first rank that failed.
template <typename F>
void collective_step(World& world, F&& step) {
    Failure kind = Failure::None;
    std::string msg;
    try {
        step();
    } catch (const CorruptFileError& e) {
        kind = Failure::Corrupt;
        msg = e.what();
    } catch (const IncompatibleSchemaError& e) {
        kind = Failure::Schema;
        msg = e.what();
    } catch (const IoError& e) {
        kind = Failure::Io;
        msg = e.what();
    } catch (const std::exception& e) {
        kind = Failure::Other;
        msg = e.what();
    }
    ByteWriter w;
    w.put<std::uint8_t>(static_cast<std::uint8_t>(kind));
    w.put_string(msg);
    auto all = world.allgather(w.take());
    for (std::size_t r = 0; r < all.size(); ++r) {
        ByteReader rd(all[r]);
        const auto k = static_cast<Failure>(rd.get<std::uint8_t>());
        if (k == Failure::None) continue;
        const std::string text = "rank " + std::to_string(r) + ": " + rd.get_string();
        switch (k) {
            case Failure::Corrupt: throw CorruptFileError(text);
            case Failure::Schema: throw IncompatibleSchemaError(text);
            case Failure::Io: throw IoError(text);
            default: throw Error(text);
        }
    }
}

void write_at(const std::string& path, std::uint64_t offset, std::span<const std::byte> data, bool truncate) {
    auto mode = std::ios::binary | std::ios::out;
    if (!truncate) mode |= std::ios::in;
    std::fstream f(path, mode);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.seekp(static_cast<std::streamoff>(offset));
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    f.flush();
    if (!f) throw IoError("write to '" + path + "' failed");
}

Bytes read_range(std::ifstream& f, std::uint64_t offset, std::uint64_t length) {
    Bytes out(length);
    f.seekg(static_cast<std::streamoff>(offset));
    f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(length));
    if (!f) throw CorruptFileError("short read at offset " + std::to_string(offset));
    return out;
}

Bytes encode_header(const CheckpointInfo& h) {
    ByteWriter w;
    w.put_bytes(std::as_bytes(std::span(kCheckpointMagic)));
    w.put<std::uint32_t>(h.version);
    w.put<std::uint32_t>(h.dim);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(h.kind));
    h.schema.encode(w);
    w.put_span<double>(h.domain.low.coords());
    w.put_span<double>(h.domain.high.coords());
    for (auto b : h.bc) w.put<std::uint8_t>(static_cast<std::uint8_t>(b));
    w.put<std::uint64_t>(h.global_size);
    w.put<std::uint32_t>(h.saved_ranks);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(h.nodes_per_axis.size()));
    w.put_span<std::int64_t>(h.nodes_per_axis);
    w.put<double>(h.ghost_width);
    w.put_span<std::int64_t>(h.cells_per_axis);
    w.put<std::uint64_t>(h.assignment.size());
    for (int a : h.assignment) w.put<std::int32_t>(a);
    return w.take();
}

void decode_header(ByteReader& r, CheckpointInfo& h) {
    auto magic = r.get_bytes(8);
    if (std::memcmp(magic.data(), kCheckpointMagic, 8) != 0) throw CorruptFileError("bad magic, not a checkpoint");
    h.version = r.get<std::uint32_t>();
    if (h.version != kCheckpointVersion)
        throw CorruptFileError("unsupported format version " + std::to_string(h.version));
    h.dim = r.get<std::uint32_t>();
    if (h.dim == 0 || h.dim > 16) throw CorruptFileError("implausible dimension " + std::to_string(h.dim));
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1) throw CorruptFileError("unknown entity kind");
    h.kind = static_cast<EntityKind>(kind);
    h.schema = PropertySchema::decode(r);
    Point lo(h.dim), hi(h.dim);
    r.get_into<double>(lo.coords());
    r.get_into<double>(hi.coords());
    h.domain = AxisBox(lo, hi);
    h.bc.resize(h.dim);
    for (auto& b : h.bc) {
        const auto v = r.get<std::uint8_t>();
        if (v > 1) throw CorruptFileError("invalid boundary code");
        b = static_cast<Boundary>(v);
    }
    h.global_size = r.get<std::uint64_t>();
    h.saved_ranks = r.get<std::uint32_t>();
    const auto nn = r.get<std::uint32_t>();
    if (nn != 0 && nn != h.dim) throw CorruptFileError("node count list has the wrong length");
    h.nodes_per_axis.resize(nn);
    r.get_into<std::int64_t>(h.nodes_per_axis);
    h.ghost_width = r.get<double>();
    h.cells_per_axis.resize(h.dim);
    r.get_into<std::int64_t>(h.cells_per_axis);
    const auto na = r.get<std::uint64_t>();
    if (na > r.remaining() / 4) throw CorruptFileError("assignment longer than the header");
    h.assignment.resize(na);
    for (auto& a : h.assignment) a = r.get<std::int32_t>();
    if (!r.done()) throw CorruptFileError("trailing bytes in header");
}

CheckpointInfo base_info(const Decomposition& d, EntityKind kind, const PropertySchema& schema, World& world) {
    CheckpointInfo h;
    h.dim = static_cast<std::uint32_t>(d.dim());
    h.kind = kind;
    h.schema = schema;
    h.domain = d.domain();
    h.bc = d.bc();
    h.saved_ranks = static_cast<std::uint32_t>(world.size());
    h.ghost_width = d.ghost().width;
    h.cells_per_axis = d.grid().cells_per_axis;
    h.assignment = d.assignment();
    return h;
}

/// Places every rank's chunk after the header and has rank 0 seal the file
/// with the footer and trailer.
void write_file(World& world, const std::string& path, const CheckpointInfo& info, const Bytes& chunk) {
    const Bytes header = encode_header(info);
    const std::uint32_t crc = crc32c(chunk);

    ByteWriter meta;
    meta.put<std::uint64_t>(chunk.size());
    meta.put<std::uint32_t>(crc);
    auto all = world.allgather(meta.take());
    std::vector<ChunkEntry> entries;
    std::uint64_t offset = header.size();
    for (const auto& m : all) {
        ByteReader r(m);
        ChunkEntry e;
        e.offset = offset;
        e.length = r.get<std::uint64_t>();
        e.crc = r.get<std::uint32_t>();
        offset += e.length;
        entries.push_back(e);
    }
    const std::uint64_t footer_offset = offset;

    const int me = world.rank();
    collective_step(world, [&] {
        if (me == 0) write_at(path, 0, header, true);
    });
    collective_step(world, [&] {
        write_at(path, entries[static_cast<std::size_t>(me)].offset, chunk, false);
    });
    collective_step(world, [&] {
        if (me != 0) return;
        ByteWriter f;
        f.put<std::uint64_t>(header.size());
        f.put<std::uint32_t>(crc32c(header));
        f.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
        for (const auto& e : entries) {
            f.put<std::uint64_t>(e.offset);
            f.put<std::uint64_t>(e.length);
            f.put<std::uint32_t>(e.crc);
        }
        Bytes footer = f.take();
        ByteWriter tail(footer);
        tail.put<std::uint32_t>(crc32c(footer));
        tail.put<std::uint64_t>(footer_offset);
        tail.put_bytes(std::as_bytes(std::span(kCheckpointTrailer)));
        write_at(path, footer_offset, footer, false);
    });
}

void check_compatible(const CheckpointInfo& info, EntityKind kind, const Decomposition& d,
                      const PropertySchema& expected) {
    const char* names[] = {"particles", "grid"};
    if (info.kind != kind)
        throw IncompatibleSchemaError(std::string("file holds ") + names[static_cast<int>(info.kind)] + ", expected " +
                                      names[static_cast<int>(kind)]);
    if (info.dim != d.dim())
        throw IncompatibleSchemaError("file is " + std::to_string(info.dim) + "-dimensional, decomposition is " +
                                      std::to_string(d.dim()) + "-dimensional");
    if (!(info.domain == d.domain()) || info.bc != d.bc())
        throw IncompatibleSchemaError("domain or boundary conditions differ from the decomposition");
    if (expected.size() != 0 && !(expected == info.schema))
        throw IncompatibleSchemaError("stored property schema differs from the expected one");
}

/// Chunks this rank reads: c with c % nranks == rank.
std::vector<Bytes> read_my_chunks(World& world, const std::string& path, const CheckpointInfo& info) {
    std::vector<Bytes> out;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    for (std::size_t c = static_cast<std::size_t>(world.rank()); c < info.chunks.size();
         c += static_cast<std::size_t>(world.size())) {
        const auto& e = info.chunks[c];
        Bytes data = read_range(f, e.offset, e.length);
        if (crc32c(data) != e.crc) throw CorruptFileError("checksum mismatch in chunk " + std::to_string(c));
        out.push_back(std::move(data));
    }
    return out;
}

void check_chunk_head(ByteReader& r, std::uint64_t& count) {
    r.get<std::uint32_t>();
    count = r.get<std::uint64_t>();
}

}  // namespace

std::uint32_t crc32c(std::span<const std::byte> data) {
    Crc32c crc;
    crc.process_bytes(data.data(), data.size());
    return crc.checksum();
}

void checkpoint_save(const ParticleSet& pset, const std::string& path) {
    World& world = pset.world();
    const std::size_t n = pset.n_owned();
    const std::size_t dim = pset.dim();
    const auto& cols = pset.columns();

    ByteWriter w;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(world.rank()));
    w.put<std::uint64_t>(n);
    w.put_span<double>(pset.positions().subspan(0, n * dim));
    for (PropId p = 0; p < pset.schema().size(); ++p)
        for (std::size_t i = 0; i < n; ++i) cols.encode(p, i, w);
    w.put_span<std::int64_t>(pset.gids().subspan(0, n));

    auto info = base_info(*pset.decomposition(), EntityKind::Particles, pset.schema(), world);
    info.global_size = static_cast<std::uint64_t>(world.allreduce_sum(static_cast<std::int64_t>(n)));
    write_file(world, path, info, w.take());
}

void checkpoint_save(const DistributedGrid& grid, const std::string& path) {
    World& world = grid.world();
    const std::size_t dim = grid.dim();
    auto pieces = grid.export_pieces();
    std::uint64_t count = 0;
    for (const auto& piece : pieces) count += static_cast<std::uint64_t>(piece.box.count());

    ByteWriter w;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(world.rank()));
    w.put<std::uint64_t>(count);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(pieces.size()));
    for (const auto& piece : pieces) {
        w.put_span<std::int64_t>(piece.box.low.indices());
        for (std::size_t d = 0; d < dim; ++d) w.put<std::int64_t>(piece.box.extent(d));
        for (PropId p = 0; p < grid.schema().size(); ++p)
            for (std::size_t i = 0; i < piece.values.size(); ++i) piece.values.encode(p, i, w);
    }

    auto info = base_info(*grid.decomposition(), EntityKind::Grid, grid.schema(), world);
    info.global_size = static_cast<std::uint64_t>(grid.global_node_count());
    info.nodes_per_axis = grid.nodes_per_axis();
    write_file(world, path, info, w.take());
}

CheckpointInfo checkpoint_inspect(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open '" + path + "'");
    const auto size = static_cast<std::uint64_t>(f.tellg());
    if (size < kTrailerSize + sizeof(kCheckpointMagic))
        throw CorruptFileError("file of " + std::to_string(size) + " bytes is too short to be a checkpoint");

    Bytes trailer = read_range(f, size - kTrailerSize, kTrailerSize);
    ByteReader tr(trailer);
    const auto footer_offset = tr.get<std::uint64_t>();
    if (std::memcmp(tr.get_bytes(8).data(), kCheckpointTrailer, 8) != 0)
        throw CorruptFileError("missing trailer, the file is incomplete");
    if (footer_offset + kTrailerSize + 4 > size) throw CorruptFileError("footer offset out of range");

    Bytes footer = read_range(f, footer_offset, size - kTrailerSize - footer_offset);
    std::span<const std::byte> body(footer.data(), footer.size() - 4);
    ByteReader fcrc(std::span<const std::byte>(footer).subspan(footer.size() - 4));
    if (crc32c(body) != fcrc.get<std::uint32_t>()) throw CorruptFileError("footer checksum mismatch");

    ByteReader fr(body);
    const auto header_len = fr.get<std::uint64_t>();
    const auto header_crc = fr.get<std::uint32_t>();
    const auto nchunks = fr.get<std::uint32_t>();
    if (header_len > footer_offset) throw CorruptFileError("header overlaps the footer");

    CheckpointInfo info;
    for (std::uint32_t c = 0; c < nchunks; ++c) {
        ChunkEntry e;
        e.offset = fr.get<std::uint64_t>();
        e.length = fr.get<std::uint64_t>();
        e.crc = fr.get<std::uint32_t>();
        if (e.offset < header_len || e.offset + e.length > footer_offset)
            throw CorruptFileError("chunk " + std::to_string(c) + " lies outside the data region");
        info.chunks.push_back(e);
    }
    if (!fr.done()) throw CorruptFileError("trailing bytes in footer");

    Bytes header = read_range(f, 0, header_len);
    if (crc32c(header) != header_crc) throw CorruptFileError("header checksum mismatch");
    ByteReader hr(header);
    decode_header(hr, info);
    if (info.chunks.size() != info.saved_ranks) throw CorruptFileError("chunk count differs from the saved rank count");
    return info;
}

DecompositionPtr checkpoint_decomposition(World& world, const CheckpointInfo& info,
                                          const DecompositionOptions& options) {
    if (static_cast<std::uint32_t>(world.size()) == info.saved_ranks && !info.assignment.empty()) {
        SubSubGrid grid{info.domain, info.cells_per_axis};
        return Decomposition::from_assignment(world, grid, info.assignment, info.bc, GhostSpec(info.ghost_width));
    }
    return Decomposition::build(world, info.domain, info.bc, GhostSpec(info.ghost_width), options);
}

ParticleSet checkpoint_load_particles(World& world, const std::string& path, DecompositionPtr decomposition,
                                      const PropertySchema& expected) {
    CheckpointInfo info;
    std::vector<Bytes> chunks;
    collective_step(world, [&] {
        info = checkpoint_inspect(path);
        check_compatible(info, EntityKind::Particles, *decomposition, expected);
        chunks = read_my_chunks(world, path, info);
    });

    const std::size_t dim = info.dim;
    ParticleSet pset(world, decomposition, info.schema);
    std::uint64_t loaded = 0;
    collective_step(world, [&] {
        for (const auto& chunk : chunks) {
            ByteReader r(chunk);
            std::uint64_t n = 0;
            check_chunk_head(r, n);
            if (n > r.remaining() / (8 * (dim + 1))) throw CorruptFileError("chunk entity count exceeds its size");
            std::vector<double> pos(n * dim);
            r.get_into<double>(pos);
            ColumnStore tmp(info.schema, dim);
            tmp.resize(n);
            for (PropId p = 0; p < info.schema.size(); ++p)
                for (std::size_t i = 0; i < n; ++i) tmp.decode(p, i, r);
            std::vector<std::int64_t> gids(n);
            r.get_into<std::int64_t>(gids);
            if (!r.done()) throw CorruptFileError("trailing bytes in particle chunk");

            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t at = pset.add(std::span(pos).subspan(i * dim, dim), gids[i]);
                for (PropId p = 0; p < info.schema.size(); ++p) {
                    ByteWriter w;
                    tmp.encode(p, i, w);
                    Bytes b = w.take();
                    ByteReader br(b);
                    pset.columns().decode(p, at, br);
                }
            }
            loaded += n;
        }
    });
    if (static_cast<std::uint64_t>(world.allreduce_sum(static_cast<std::int64_t>(loaded))) != info.global_size)
        throw CorruptFileError("chunk entity counts do not add up to the global size");
    pset.map_global();
    return pset;
}

DistributedGrid checkpoint_load_grid(World& world, const std::string& path, DecompositionPtr decomposition,
                                     const PropertySchema& expected) {
    CheckpointInfo info;
    std::vector<Bytes> chunks;
    collective_step(world, [&] {
        info = checkpoint_inspect(path);
        check_compatible(info, EntityKind::Grid, *decomposition, expected);
        chunks = read_my_chunks(world, path, info);
    });

    const std::size_t dim = info.dim;
    std::vector<GridPiece> pieces;
    std::uint64_t loaded = 0;
    collective_step(world, [&] {
        for (const auto& chunk : chunks) {
            ByteReader r(chunk);
            std::uint64_t n = 0;
            check_chunk_head(r, n);
            const auto nblocks = r.get<std::uint32_t>();
            std::uint64_t seen = 0;
            for (std::uint32_t b = 0; b < nblocks; ++b) {
                GridKey lo(dim), hi(dim);
                for (std::size_t d = 0; d < dim; ++d) lo[d] = r.get<std::int64_t>();
                for (std::size_t d = 0; d < dim; ++d) {
                    const auto ext = r.get<std::int64_t>();
                    if (ext < 0 || ext > info.nodes_per_axis[d]) throw CorruptFileError("block extent out of range");
                    hi[d] = lo[d] + ext;
                }
                GridPiece piece{KeyBox{lo, hi}, ColumnStore(info.schema, dim)};
                const auto count = static_cast<std::size_t>(piece.box.count());
                if (count > r.remaining()) throw CorruptFileError("block larger than its chunk");
                piece.values.resize(count);
                for (PropId p = 0; p < info.schema.size(); ++p)
                    for (std::size_t i = 0; i < count; ++i) piece.values.decode(p, i, r);
                seen += count;
                pieces.push_back(std::move(piece));
            }
            if (seen != n || !r.done()) throw CorruptFileError("grid chunk does not match its node count");
            loaded += n;
        }
    });
    if (static_cast<std::uint64_t>(world.allreduce_sum(static_cast<std::int64_t>(loaded))) != info.global_size)
        throw CorruptFileError("chunk node counts do not add up to the global size");

    DistributedGrid grid(world, decomposition, info.nodes_per_axis, info.schema);
    grid.import_pieces(pieces);
    return grid;
}

}  // namespace pmx
