#include "pmx/io/vtk.hpp"

#include <charconv>
#include <fstream>
#include <iostream>

namespace pmx {

namespace {

void put_real(std::ostream& os, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    os.write(buf, res.ptr - buf);
}

void put_int(std::ostream& os, std::int64_t v) {
    char buf[24];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    os.write(buf, res.ptr - buf);
}

enum class Section { Scalars, Vectors, Skip };

Section classify(const PropertyDesc& d, std::size_t dim, std::size_t width) {
    if (d.is_list()) return Section::Skip;
    if (d.kind == PropertyKind::VectorD) return dim <= 3 ? Section::Vectors : Section::Skip;
    return width >= 1 && width <= 4 ? Section::Scalars : Section::Skip;
}

/// Emits one POINT_DATA attribute. `value(i)` yields entity i's values.
template <typename Values>
void write_attribute(std::ostream& os, const PropertyDesc& d, Section s, std::size_t width, std::size_t n,
                     Values&& value) {
    const bool is_real = d.base == BaseType::Real;
    const char* type = is_real ? "double" : "long";
    if (s == Section::Scalars) {
        os << "SCALARS " << d.name << ' ' << type << ' ' << width << "\nLOOKUP_TABLE default\n";
    } else {
        os << "VECTORS " << d.name << ' ' << type << '\n';
    }
    const std::size_t shown = s == Section::Vectors ? 3 : width;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < shown; ++c) {
            if (c) os << ' ';
            value(i, c, os);
        }
        os << '\n';
    }
}

void warn_skip(const PropertyDesc& d) {
    std::cerr << "vtk: skipping property '" << d.name << "', not representable in legacy VTK\n";
}

std::ofstream open_out(const std::string& file) {
    std::ofstream os(file);
    if (!os) throw IoError("cannot open '" + file + "' for writing");
    return os;
}

}  // namespace

std::vector<std::string> vtk_write_particles(const ParticleSet& pset, const std::string& path,
                                             std::span<const PropId> props) {
    const std::size_t n = pset.n_owned();
    const std::size_t dim = pset.dim();
    const std::string file = path + "." + std::to_string(pset.world().rank()) + ".vtk";
    auto os = open_out(file);

    os << "# vtk DataFile Version 3.0\npmx particles\nASCII\nDATASET POLYDATA\n";
    os << "POINTS " << n << " double\n";
    for (std::size_t i = 0; i < n; ++i) {
        auto x = pset.position(i);
        for (std::size_t c = 0; c < 3; ++c) {
            if (c) os << ' ';
            put_real(os, c < dim ? x[c] : 0.0);
        }
        os << '\n';
    }
    os << "VERTICES " << n << ' ' << 2 * n << '\n';
    for (std::size_t i = 0; i < n; ++i) os << "1 " << i << '\n';

    os << "POINT_DATA " << n << '\n';
    const auto& cols = pset.columns();
    for (PropId p : props) {
        const auto& d = pset.schema()[p];
        const std::size_t width = d.is_list() ? 0 : cols.width(p);
        const Section s = classify(d, dim, width);
        if (s == Section::Skip) {
            warn_skip(d);
            continue;
        }
        write_attribute(os, d, s, width, n, [&](std::size_t i, std::size_t c, std::ostream& out) {
            if (c >= width) return put_real(out, 0.0);
            if (d.base == BaseType::Real) put_real(out, cols.real(p, i)[c]);
            else put_int(out, cols.integer(p, i)[c]);
        });
    }
    if (!os.flush()) throw IoError("write to '" + file + "' failed");
    return {file};
}

std::vector<std::string> vtk_write_grid(const DistributedGrid& grid, const std::string& path,
                                        std::span<const PropId> props) {
    const std::size_t dim = grid.dim();
    if (dim > 3) throw UsageError("vtk: STRUCTURED_POINTS holds at most three dimensions");
    std::vector<std::string> files;
    for (std::size_t b = 0; b < grid.block_count(); ++b) {
        const auto& blk = grid.block(b);
        std::string file = path + "." + std::to_string(grid.world().rank());
        if (b > 0) file += ".b" + std::to_string(b);
        file += ".vtk";
        auto os = open_out(file);

        const Point origin = grid.node_position(blk.owned.low);
        os << "# vtk DataFile Version 3.0\npmx grid\nASCII\nDATASET STRUCTURED_POINTS\nDIMENSIONS";
        for (std::size_t d = 0; d < 3; ++d) os << ' ' << (d < dim ? blk.owned.extent(d) : 1);
        os << "\nORIGIN";
        for (std::size_t d = 0; d < 3; ++d) {
            os << ' ';
            put_real(os, d < dim ? origin[d] : 0.0);
        }
        os << "\nSPACING";
        for (std::size_t d = 0; d < 3; ++d) {
            os << ' ';
            put_real(os, d < dim ? grid.spacing(d) : 1.0);
        }
        const auto n = static_cast<std::size_t>(blk.owned.count());
        os << "\nPOINT_DATA " << n << '\n';

        // Storage indices of the owned nodes, axis 0 fastest as VTK expects.
        std::vector<std::size_t> order;
        order.reserve(n);
        grid.for_each_owned([&](std::size_t ob, std::size_t idx, const GridKey&) {
            if (ob == b) order.push_back(idx);
        });
        for (PropId p : props) {
            const auto& d = grid.schema()[p];
            const std::size_t width = blk.data.width(p);
            const Section s = classify(d, dim, width);
            if (s == Section::Skip) {
                warn_skip(d);
                continue;
            }
            write_attribute(os, d, s, width, n, [&](std::size_t i, std::size_t c, std::ostream& out) {
                if (c >= width) return put_real(out, 0.0);
                if (d.base == BaseType::Real) put_real(out, blk.data.real(p, order[i])[c]);
                else put_int(out, blk.data.integer(p, order[i])[c]);
            });
        }
        if (!os.flush()) throw IoError("write to '" + file + "' failed");
        files.push_back(std::move(file));
    }
    return files;
}

}  // namespace pmx
