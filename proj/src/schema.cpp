#include "pmx/schema.hpp"

#include <algorithm>
#include <set>

#include "pmx/error.hpp"

namespace pmx {

std::size_t PropertyDesc::width(std::size_t dim) const {
    const PropertyKind k = kind == PropertyKind::VarList ? element_kind : kind;
    switch (k) {
        case PropertyKind::Scalar: return 1;
        case PropertyKind::VectorD: return dim;
        case PropertyKind::FixedArray: return count;
        case PropertyKind::VarList: break;
    }
    throw UsageError("property '" + name + "': invalid kind");
}

PropertyDesc scalar(std::string name, BaseType base) { return {std::move(name), PropertyKind::Scalar, base, 0}; }
PropertyDesc vector_d(std::string name, BaseType base) { return {std::move(name), PropertyKind::VectorD, base, 0}; }
PropertyDesc fixed_array(std::string name, std::size_t n, BaseType base) {
    return {std::move(name), PropertyKind::FixedArray, base, n};
}

PropertyDesc var_list(std::string name, const PropertyDesc& element) {
    if (element.kind == PropertyKind::VarList)
        throw UsageError("property '" + name + "': VAR_LIST elements cannot themselves be lists");
    PropertyDesc d{std::move(name), PropertyKind::VarList, element.base, element.count};
    d.element_kind = element.kind;
    return d;
}

PropertySchema::PropertySchema(std::vector<PropertyDesc> props) : props_(std::move(props)) {
    std::set<std::string> names;
    for (const auto& p : props_) {
        if (p.name.empty()) throw UsageError("schema: property names must be non-empty");
        if (!names.insert(p.name).second) throw UsageError("schema: duplicate property name '" + p.name + "'");
        if (p.kind == PropertyKind::VarList && p.element_kind == PropertyKind::VarList)
            throw UsageError("schema: property '" + p.name + "' nests VAR_LIST more than one level");
        if ((p.kind == PropertyKind::FixedArray || (p.is_list() && p.element_kind == PropertyKind::FixedArray)) &&
            p.count == 0)
            throw UsageError("schema: fixed array '" + p.name + "' needs a positive length");
    }
}

PropId PropertySchema::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < props_.size(); ++i)
        if (props_[i].name == name) return i;
    throw UsageError("schema: no property named '" + std::string(name) + "'");
}

bool PropertySchema::contains(std::string_view name) const {
    return std::any_of(props_.begin(), props_.end(), [&](const PropertyDesc& p) { return p.name == name; });
}

void PropertySchema::encode(ByteWriter& w) const {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(props_.size()));
    for (const auto& p : props_) {
        w.put_string(p.name);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(p.kind));
        w.put<std::uint8_t>(static_cast<std::uint8_t>(p.base));
        w.put<std::uint8_t>(static_cast<std::uint8_t>(p.element_kind));
        w.put<std::uint64_t>(p.count);
    }
}

PropertySchema PropertySchema::decode(ByteReader& r) {
    const auto n = r.get<std::uint32_t>();
    std::vector<PropertyDesc> props;
    for (std::uint32_t i = 0; i < n; ++i) {
        PropertyDesc p;
        p.name = r.get_string();
        const auto kind = r.get<std::uint8_t>();
        const auto base = r.get<std::uint8_t>();
        const auto elem = r.get<std::uint8_t>();
        if (kind > 3 || base > 1 || elem > 3) throw CorruptFileError("schema descriptor has an invalid property code");
        p.kind = static_cast<PropertyKind>(kind);
        p.base = static_cast<BaseType>(base);
        p.element_kind = static_cast<PropertyKind>(elem);
        p.count = r.get<std::uint64_t>();
        props.push_back(std::move(p));
    }
    return PropertySchema(std::move(props));
}

// ---------------------------------------------------------------------------

ColumnStore::ColumnStore(PropertySchema schema, std::size_t dim) : schema_(std::move(schema)), dim_(dim) {
    cols_.resize(schema_.size());
    for (std::size_t p = 0; p < schema_.size(); ++p) cols_[p].width = schema_[p].width(dim);
}

void ColumnStore::resize(std::size_t n) {
    for (std::size_t p = 0; p < cols_.size(); ++p) {
        auto& c = cols_[p];
        const auto& d = schema_[p];
        if (d.is_list()) {
            if (d.base == BaseType::Real) c.real_lists.resize(n);
            else c.int_lists.resize(n);
        } else if (d.base == BaseType::Real) {
            c.reals.resize(n * c.width, 0.0);
        } else {
            c.ints.resize(n * c.width, 0);
        }
    }
    size_ = n;
}

void ColumnStore::check(PropId p, BaseType base, bool list) const {
    if (p >= cols_.size()) throw UsageError("property id out of range");
    const auto& d = schema_[p];
    if (d.base != base || d.is_list() != list)
        throw UsageError("property '" + d.name + "' accessed with the wrong type");
}

std::span<double> ColumnStore::real(PropId p, std::size_t i) {
    check(p, BaseType::Real, false);
    return std::span(cols_[p].reals).subspan(i * cols_[p].width, cols_[p].width);
}
std::span<const double> ColumnStore::real(PropId p, std::size_t i) const {
    check(p, BaseType::Real, false);
    return std::span(cols_[p].reals).subspan(i * cols_[p].width, cols_[p].width);
}
std::span<std::int64_t> ColumnStore::integer(PropId p, std::size_t i) {
    check(p, BaseType::Int64, false);
    return std::span(cols_[p].ints).subspan(i * cols_[p].width, cols_[p].width);
}
std::span<const std::int64_t> ColumnStore::integer(PropId p, std::size_t i) const {
    check(p, BaseType::Int64, false);
    return std::span(cols_[p].ints).subspan(i * cols_[p].width, cols_[p].width);
}
std::span<double> ColumnStore::real_column(PropId p) {
    check(p, BaseType::Real, false);
    return cols_[p].reals;
}
std::span<const double> ColumnStore::real_column(PropId p) const {
    check(p, BaseType::Real, false);
    return cols_[p].reals;
}
std::span<std::int64_t> ColumnStore::integer_column(PropId p) {
    check(p, BaseType::Int64, false);
    return cols_[p].ints;
}
std::span<const std::int64_t> ColumnStore::integer_column(PropId p) const {
    check(p, BaseType::Int64, false);
    return cols_[p].ints;
}
std::vector<double>& ColumnStore::real_list(PropId p, std::size_t i) {
    check(p, BaseType::Real, true);
    return cols_[p].real_lists[i];
}
const std::vector<double>& ColumnStore::real_list(PropId p, std::size_t i) const {
    check(p, BaseType::Real, true);
    return cols_[p].real_lists[i];
}
std::vector<std::int64_t>& ColumnStore::integer_list(PropId p, std::size_t i) {
    check(p, BaseType::Int64, true);
    return cols_[p].int_lists[i];
}
const std::vector<std::int64_t>& ColumnStore::integer_list(PropId p, std::size_t i) const {
    check(p, BaseType::Int64, true);
    return cols_[p].int_lists[i];
}

void ColumnStore::reset(PropId p, std::size_t first, std::size_t last) {
    auto& c = cols_[p];
    const auto& d = schema_[p];
    for (std::size_t i = first; i < last; ++i) {
        if (d.is_list()) {
            if (d.base == BaseType::Real) c.real_lists[i].clear();
            else c.int_lists[i].clear();
        }
    }
    if (d.is_list()) return;
    if (d.base == BaseType::Real) std::fill(c.reals.begin() + first * c.width, c.reals.begin() + last * c.width, 0.0);
    else std::fill(c.ints.begin() + first * c.width, c.ints.begin() + last * c.width, 0);
}

void ColumnStore::copy_within(std::size_t to, std::size_t from) {
    if (to == from) return;
    for (std::size_t p = 0; p < cols_.size(); ++p) {
        auto& c = cols_[p];
        const auto& d = schema_[p];
        if (d.is_list()) {
            if (d.base == BaseType::Real) c.real_lists[to] = c.real_lists[from];
            else c.int_lists[to] = c.int_lists[from];
        } else if (d.base == BaseType::Real) {
            std::copy_n(c.reals.begin() + from * c.width, c.width, c.reals.begin() + to * c.width);
        } else {
            std::copy_n(c.ints.begin() + from * c.width, c.width, c.ints.begin() + to * c.width);
        }
    }
}

void ColumnStore::encode(PropId p, std::size_t i, ByteWriter& w) const {
    const auto& c = cols_[p];
    const auto& d = schema_[p];
    if (d.is_list()) {
        if (d.base == BaseType::Real) {
            w.put<std::uint32_t>(static_cast<std::uint32_t>(c.real_lists[i].size()));
            w.put_span<double>(c.real_lists[i]);
        } else {
            w.put<std::uint32_t>(static_cast<std::uint32_t>(c.int_lists[i].size()));
            w.put_span<std::int64_t>(c.int_lists[i]);
        }
    } else if (d.base == BaseType::Real) {
        w.put_span<double>(std::span(c.reals).subspan(i * c.width, c.width));
    } else {
        w.put_span<std::int64_t>(std::span(c.ints).subspan(i * c.width, c.width));
    }
}

void ColumnStore::decode(PropId p, std::size_t i, ByteReader& r) {
    auto& c = cols_[p];
    const auto& d = schema_[p];
    if (d.is_list()) {
        const auto n = r.get<std::uint32_t>();
        if (c.width != 0 && n % c.width != 0) throw CorruptFileError("list property '" + d.name + "' has a partial element");
        if (d.base == BaseType::Real) {
            c.real_lists[i].resize(n);
            r.get_into<double>(c.real_lists[i]);
        } else {
            c.int_lists[i].resize(n);
            r.get_into<std::int64_t>(c.int_lists[i]);
        }
    } else if (d.base == BaseType::Real) {
        r.get_into<double>(std::span(c.reals).subspan(i * c.width, c.width));
    } else {
        r.get_into<std::int64_t>(std::span(c.ints).subspan(i * c.width, c.width));
    }
}

std::size_t ColumnStore::encoded_size(PropId p, std::size_t i) const {
    const auto& c = cols_[p];
    const auto& d = schema_[p];
    if (!d.is_list()) return c.width * 8;
    return 4 + 8 * (d.base == BaseType::Real ? c.real_lists[i].size() : c.int_lists[i].size());
}

}  // namespace pmx
