#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pmx/bytes.hpp"

namespace pmx {

enum class BaseType : std::uint8_t { Real = 0, Int64 = 1 };
enum class PropertyKind : std::uint8_t { Scalar = 0, VectorD = 1, FixedArray = 2, VarList = 3 };

/// One named property. For VarList, `element_kind` and `count` describe each
/// list element and `base` is the element base type.
struct PropertyDesc {
    std::string name;
    PropertyKind kind = PropertyKind::Scalar;
    BaseType base = BaseType::Real;
    std::size_t count = 0;
    PropertyKind element_kind = PropertyKind::Scalar;

    /// Values per entity (fixed kinds) or per list element (VarList).
    std::size_t width(std::size_t dim) const;
    bool is_list() const { return kind == PropertyKind::VarList; }

    friend bool operator==(const PropertyDesc&, const PropertyDesc&) = default;
};

PropertyDesc scalar(std::string name, BaseType base = BaseType::Real);
PropertyDesc vector_d(std::string name, BaseType base = BaseType::Real);
PropertyDesc fixed_array(std::string name, std::size_t n, BaseType base = BaseType::Real);
/// List of `element` values per entity; `element.name` is ignored.
PropertyDesc var_list(std::string name, const PropertyDesc& element);

using PropId = std::size_t;

/// Ordered property list with unique names.
class PropertySchema {
public:
    PropertySchema() = default;
    PropertySchema(std::vector<PropertyDesc> props);
    PropertySchema(std::initializer_list<PropertyDesc> props) : PropertySchema(std::vector<PropertyDesc>(props)) {}

    std::size_t size() const { return props_.size(); }
    const PropertyDesc& operator[](PropId p) const { return props_[p]; }
    auto begin() const { return props_.begin(); }
    auto end() const { return props_.end(); }

    PropId index_of(std::string_view name) const;
    bool contains(std::string_view name) const;

    void encode(ByteWriter& w) const;
    static PropertySchema decode(ByteReader& r);

    friend bool operator==(const PropertySchema&, const PropertySchema&) = default;

private:
    std::vector<PropertyDesc> props_;
};

/// Structure-of-arrays storage for one schema: one contiguous column per
/// fixed-width property, one vector per entity for list properties.
class ColumnStore {
public:
    ColumnStore() = default;
    ColumnStore(PropertySchema schema, std::size_t dim);

    const PropertySchema& schema() const { return schema_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return size_; }
    std::size_t width(PropId p) const { return cols_[p].width; }

    /// New entries are zero (or empty lists).
    void resize(std::size_t n);
    void clear() { resize(0); }

    std::span<double> real(PropId p, std::size_t i);
    std::span<const double> real(PropId p, std::size_t i) const;
    std::span<std::int64_t> integer(PropId p, std::size_t i);
    std::span<const std::int64_t> integer(PropId p, std::size_t i) const;

    std::span<double> real_column(PropId p);
    std::span<const double> real_column(PropId p) const;
    std::span<std::int64_t> integer_column(PropId p);
    std::span<const std::int64_t> integer_column(PropId p) const;

    std::vector<double>& real_list(PropId p, std::size_t i);
    const std::vector<double>& real_list(PropId p, std::size_t i) const;
    std::vector<std::int64_t>& integer_list(PropId p, std::size_t i);
    const std::vector<std::int64_t>& integer_list(PropId p, std::size_t i) const;

    /// Zeroes fixed values (or empties lists) of entities [first, last).
    void reset(PropId p, std::size_t first, std::size_t last);

    /// Copies entity `from` onto entity `to` (all properties).
    void copy_within(std::size_t to, std::size_t from);

    void encode(PropId p, std::size_t i, ByteWriter& w) const;
    void decode(PropId p, std::size_t i, ByteReader& r);
    /// Serialized size of one entity's value of `p`.
    std::size_t encoded_size(PropId p, std::size_t i) const;

private:
    struct Column {
        std::size_t width = 0;
        std::vector<double> reals;
        std::vector<std::int64_t> ints;
        std::vector<std::vector<double>> real_lists;
        std::vector<std::vector<std::int64_t>> int_lists;
    };
    void check(PropId p, BaseType base, bool list) const;

    PropertySchema schema_;
    std::size_t dim_ = 0;
    std::size_t size_ = 0;
    std::vector<Column> cols_;
};

}  // namespace pmx
