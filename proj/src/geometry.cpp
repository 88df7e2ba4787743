#include "pmx/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pmx/error.hpp"

namespace pmx {

namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw UsageError(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                         std::to_string(b) + ")");
    }
}

}  // namespace

AxisBox::AxisBox(Point lo, Point hi) : low(std::move(lo)), high(std::move(hi)) {
    require_same_dim(low.dim(), high.dim(), "AxisBox");
    for (std::size_t d = 0; d < low.dim(); ++d) {
        if (!(low[d] <= high[d])) throw UsageError("AxisBox: low > high on axis " + std::to_string(d));
    }
}

double AxisBox::volume() const {
    double v = 1.0;
    for (std::size_t d = 0; d < dim(); ++d) v *= extent(d);
    return v;
}

bool AxisBox::empty() const {
    for (std::size_t d = 0; d < dim(); ++d)
        if (!(low[d] < high[d])) return true;
    return false;
}

bool AxisBox::contains(std::span<const double> p) const {
    for (std::size_t d = 0; d < dim(); ++d)
        if (!(low[d] <= p[d] && p[d] < high[d])) return false;
    return true;
}

bool AxisBox::encloses(const AxisBox& inner) const {
    for (std::size_t d = 0; d < dim(); ++d)
        if (inner.low[d] < low[d] || inner.high[d] > high[d]) return false;
    return true;
}

AxisBox AxisBox::shifted(std::span<const double> shift) const {
    AxisBox out = *this;
    for (std::size_t d = 0; d < dim(); ++d) {
        out.low[d] += shift[d];
        out.high[d] += shift[d];
    }
    return out;
}

std::int64_t KeyBox::count() const {
    std::int64_t n = 1;
    for (std::size_t d = 0; d < dim(); ++d) n *= std::max<std::int64_t>(0, extent(d));
    return n;
}

bool KeyBox::empty() const {
    for (std::size_t d = 0; d < dim(); ++d)
        if (high[d] <= low[d]) return true;
    return false;
}

bool KeyBox::contains(const GridKey& k) const {
    for (std::size_t d = 0; d < dim(); ++d)
        if (k[d] < low[d] || k[d] >= high[d]) return false;
    return true;
}

KeyBox KeyBox::shifted(std::span<const std::int64_t> shift) const {
    KeyBox out = *this;
    for (std::size_t d = 0; d < dim(); ++d) {
        out.low[d] += shift[d];
        out.high[d] += shift[d];
    }
    return out;
}

std::optional<KeyBox> key_box_intersect(const KeyBox& a, const KeyBox& b) {
    require_same_dim(a.dim(), b.dim(), "key_box_intersect");
    KeyBox c{GridKey(a.dim()), GridKey(a.dim())};
    for (std::size_t d = 0; d < a.dim(); ++d) {
        c.low[d] = std::max(a.low[d], b.low[d]);
        c.high[d] = std::min(a.high[d], b.high[d]);
        if (c.high[d] <= c.low[d]) return std::nullopt;
    }
    return c;
}

GhostSpec::GhostSpec(double w) : width(w) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw UsageError("ghost width must be finite and >= 0");
}

std::int64_t GhostSpec::node_width(double spacing) const {
    if (width == 0.0) return 0;
    // Absorb representation error so that e.g. 0.2/0.1 does not round up to 3.
    double ratio = width / spacing;
    double nearest = std::round(ratio);
    if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, nearest)) return static_cast<std::int64_t>(nearest);
    return static_cast<std::int64_t>(std::ceil(ratio));
}

std::optional<AxisBox> box_intersect(const AxisBox& a, const AxisBox& b) {
    require_same_dim(a.dim(), b.dim(), "box_intersect");
    Point lo(a.dim()), hi(a.dim());
    for (std::size_t d = 0; d < a.dim(); ++d) {
        lo[d] = std::max(a.low[d], b.low[d]);
        hi[d] = std::min(a.high[d], b.high[d]);
        if (!(lo[d] < hi[d])) return std::nullopt;
    }
    return AxisBox(std::move(lo), std::move(hi));
}

AxisBox box_enlarge(const AxisBox& b, const GhostSpec& g) {
    AxisBox out = b;
    for (std::size_t d = 0; d < b.dim(); ++d) {
        out.low[d] -= g.width;
        out.high[d] += g.width;
    }
    return out;
}

void periodic_wrap_inplace(std::span<double> p, const AxisBox& domain, const BoundaryConditions& bc) {
    for (std::size_t d = 0; d < p.size(); ++d) {
        if (bc[d] != Boundary::Periodic) continue;
        const double lo = domain.low[d];
        const double hi = domain.high[d];
        if (p[d] >= lo && p[d] < hi) continue;
        const double len = hi - lo;
        double x = p[d] - len * std::floor((p[d] - lo) / len);
        // Rounding can land exactly on `hi` (e.g. -1e-17 + 1.0).
        if (x >= hi) x = lo;
        if (x < lo) x = lo;
        p[d] = x;
    }
}

Point periodic_wrap(const Point& p, const AxisBox& domain, const BoundaryConditions& bc) {
    require_same_dim(p.dim(), domain.dim(), "periodic_wrap");
    require_same_dim(p.dim(), bc.size(), "periodic_wrap");
    Point out = p;
    periodic_wrap_inplace(out.coords(), domain, bc);
    return out;
}

std::uint64_t hilbert_index(const GridKey& key, unsigned order) {
    const std::size_t n = key.dim();
    if (n == 0) throw UsageError("hilbert_index: empty key");
    if (order == 0) {
        for (auto k : key)
            if (k != 0) throw UsageError("hilbert_index: key out of range for order 0");
        return 0;
    }
    if (order * n > 63) throw UsageError("hilbert_index: order*dim exceeds 63 bits");
    const std::int64_t side = std::int64_t{1} << order;
    std::vector<std::uint64_t> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (key[i] < 0 || key[i] >= side) throw UsageError("hilbert_index: key out of range");
        x[i] = static_cast<std::uint64_t>(key[i]);
    }
    // Inverse undo of the Gray-code rotations (axes -> transpose).
    const std::uint64_t m = std::uint64_t{1} << (order - 1);
    for (std::uint64_t q = m; q > 1; q >>= 1) {
        const std::uint64_t p = q - 1;
        for (std::size_t i = 0; i < n; ++i) {
            if (x[i] & q) {
                x[0] ^= p;
            } else {
                const std::uint64_t t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
    }
    for (std::size_t i = 1; i < n; ++i) x[i] ^= x[i - 1];
    std::uint64_t t = 0;
    for (std::uint64_t q = m; q > 1; q >>= 1)
        if (x[n - 1] & q) t ^= q - 1;
    for (auto& v : x) v ^= t;

    std::uint64_t h = 0;
    for (int bit = static_cast<int>(order) - 1; bit >= 0; --bit)
        for (std::size_t i = 0; i < n; ++i) h = (h << 1) | ((x[i] >> bit) & 1u);
    return h;
}

GridKey hilbert_key(std::uint64_t index, std::size_t dim, unsigned order) {
    if (dim == 0) throw UsageError("hilbert_key: zero dimension");
    if (order == 0) return GridKey(dim, 0);
    if (order * dim > 63) throw UsageError("hilbert_key: order*dim exceeds 63 bits");
    if (index >> (order * dim)) throw UsageError("hilbert_key: index out of range");
    std::vector<std::uint64_t> x(dim, 0);
    int shift = static_cast<int>(order * dim) - 1;
    for (int bit = static_cast<int>(order) - 1; bit >= 0; --bit)
        for (std::size_t i = 0; i < dim; ++i, --shift) x[i] |= ((index >> shift) & 1u) << bit;

    const std::uint64_t n2 = std::uint64_t{2} << (order - 1);
    std::uint64_t t = x[dim - 1] >> 1;
    for (std::size_t i = dim - 1; i > 0; --i) x[i] ^= x[i - 1];
    x[0] ^= t;
    for (std::uint64_t q = 2; q != n2; q <<= 1) {
        const std::uint64_t p = q - 1;
        for (std::size_t i = dim; i-- > 0;) {
            if (x[i] & q) {
                x[0] ^= p;
            } else {
                t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
    }
    GridKey key(dim);
    for (std::size_t i = 0; i < dim; ++i) key[i] = static_cast<std::int64_t>(x[i]);
    return key;
}

}  // namespace pmx
