#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

namespace pmx {

/// A point in R^D. Coordinates are always binary64.
class Point {
public:
    Point() = default;
    explicit Point(std::size_t dim, double fill = 0.0) : x_(dim, fill) {}
    Point(std::initializer_list<double> xs) : x_(xs) {}
    explicit Point(std::span<const double> xs) : x_(xs.begin(), xs.end()) {}

    std::size_t dim() const { return x_.size(); }
    double& operator[](std::size_t d) { return x_[d]; }
    double operator[](std::size_t d) const { return x_[d]; }
    std::span<const double> coords() const { return x_; }
    std::span<double> coords() { return x_; }
    auto begin() const { return x_.begin(); }
    auto end() const { return x_.end(); }

    friend bool operator==(const Point&, const Point&) = default;

private:
    std::vector<double> x_;
};

/// Integer multi-index into a Cartesian lattice (cells or mesh nodes).
class GridKey {
public:
    GridKey() = default;
    explicit GridKey(std::size_t dim, std::int64_t fill = 0) : k_(dim, fill) {}
    GridKey(std::initializer_list<std::int64_t> ks) : k_(ks) {}
    explicit GridKey(std::span<const std::int64_t> ks) : k_(ks.begin(), ks.end()) {}

    std::size_t dim() const { return k_.size(); }
    std::int64_t& operator[](std::size_t d) { return k_[d]; }
    std::int64_t operator[](std::size_t d) const { return k_[d]; }
    std::span<const std::int64_t> indices() const { return k_; }
    auto begin() const { return k_.begin(); }
    auto end() const { return k_.end(); }

    friend bool operator==(const GridKey&, const GridKey&) = default;
    friend auto operator<=>(const GridKey&, const GridKey&) = default;

private:
    std::vector<std::int64_t> k_;
};

/// Axis-aligned box with half-open membership: p is inside iff
/// low[d] <= p[d] < high[d] on every axis.
struct AxisBox {
    Point low;
    Point high;

    AxisBox() = default;
    AxisBox(Point lo, Point hi);

    std::size_t dim() const { return low.dim(); }
    double extent(std::size_t d) const { return high[d] - low[d]; }
    double volume() const;
    bool empty() const;
    bool contains(std::span<const double> p) const;
    bool contains(const Point& p) const { return contains(p.coords()); }
    /// True when `inner` lies entirely within this box.
    bool encloses(const AxisBox& inner) const;
    AxisBox shifted(std::span<const double> shift) const;

    friend bool operator==(const AxisBox&, const AxisBox&) = default;
};

/// Integer box over lattice keys, half-open like AxisBox.
struct KeyBox {
    GridKey low;
    GridKey high;

    std::size_t dim() const { return low.dim(); }
    std::int64_t extent(std::size_t d) const { return high[d] - low[d]; }
    std::int64_t count() const;
    bool empty() const;
    bool contains(const GridKey& k) const;
    KeyBox shifted(std::span<const std::int64_t> shift) const;

    friend bool operator==(const KeyBox&, const KeyBox&) = default;
};

std::optional<KeyBox> key_box_intersect(const KeyBox& a, const KeyBox& b);

enum class Boundary : std::uint8_t { NonPeriodic = 0, Periodic = 1 };
using BoundaryConditions = std::vector<Boundary>;

inline BoundaryConditions all_periodic(std::size_t dim) { return BoundaryConditions(dim, Boundary::Periodic); }
inline BoundaryConditions all_non_periodic(std::size_t dim) { return BoundaryConditions(dim, Boundary::NonPeriodic); }

/// Ghost layer extent in length units. Meshes round it up to whole nodes.
struct GhostSpec {
    double width = 0.0;

    explicit GhostSpec(double w = 0.0);
    std::int64_t node_width(double spacing) const;
};

/// Intersection under the half-open convention; boxes sharing only a face do
/// not intersect.
std::optional<AxisBox> box_intersect(const AxisBox& a, const AxisBox& b);

AxisBox box_enlarge(const AxisBox& b, const GhostSpec& g);

/// Wraps periodic coordinates into [low, high); non-periodic axes pass through.
Point periodic_wrap(const Point& p, const AxisBox& domain, const BoundaryConditions& bc);
void periodic_wrap_inplace(std::span<double> p, const AxisBox& domain, const BoundaryConditions& bc);

/// Position of `key` along the D-dimensional Hilbert curve of side 2^order.
///
/// Built on Skilling's transpose construction with key[0] as the most
/// significant axis, which gives the base orientation
/// (0,0)->0, (0,1)->1, (1,1)->2, (1,0)->3 in 2D. Requires order*D <= 63.
std::uint64_t hilbert_index(const GridKey& key, unsigned order);

/// Inverse of hilbert_index.
GridKey hilbert_key(std::uint64_t index, std::size_t dim, unsigned order);

}  // namespace pmx
