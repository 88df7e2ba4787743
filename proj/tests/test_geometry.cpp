#include <doctest.h>

#include <random>
#include <set>

#include "pmx/error.hpp"
#include "pmx/geometry.hpp"

using namespace pmx;

namespace {

AxisBox box1(double lo, double hi) { return AxisBox(Point{lo}, Point{hi}); }

// Brute-force Hilbert reference: standard 2D rotation algorithm (xy2d), with
// our key[0] playing the role of the "y" bit source per the documented base
// orientation (0,0)->0, (0,1)->1, (1,1)->2, (1,0)->3.
std::uint64_t xy2d(std::int64_t side, std::int64_t x, std::int64_t y) {
    std::uint64_t d = 0;
    for (std::int64_t s = side / 2; s > 0; s /= 2) {
        const std::int64_t rx = (x & s) > 0 ? 1 : 0;
        const std::int64_t ry = (y & s) > 0 ? 1 : 0;
        d += static_cast<std::uint64_t>(s * s * ((3 * rx) ^ ry));
        if (ry == 0) {
            if (rx == 1) {
                x = side - 1 - x;
                y = side - 1 - y;
            }
            std::swap(x, y);
        }
    }
    return d;
}

}  // namespace

TEST_CASE("box_intersect follows the half-open convention") {
    AxisBox a(Point{0, 0}, Point{2, 2});
    AxisBox b(Point{1, 1}, Point{3, 3});
    auto c = box_intersect(a, b);
    REQUIRE(c);
    CHECK(*c == AxisBox(Point{1, 1}, Point{2, 2}));
    CHECK_FALSE(box_intersect(box1(0, 1), box1(1, 2)));
    CHECK(*box_intersect(a, a) == a);
    CHECK_THROWS_AS(box_intersect(a, box1(0, 1)), UsageError);
}

TEST_CASE("box_intersect is commutative, idempotent and contained on random integer boxes") {
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> v(-3, 3);
    for (int trial = 0; trial < 2000; ++trial) {
        auto make = [&] {
            Point lo(2), hi(2);
            for (int d = 0; d < 2; ++d) {
                int x = v(rng), y = v(rng);
                lo[d] = std::min(x, y);
                hi[d] = std::max(x, y);
            }
            return AxisBox(lo, hi);
        };
        AxisBox a = make(), b = make();
        auto ab = box_intersect(a, b);
        auto ba = box_intersect(b, a);
        REQUIRE(ab.has_value() == ba.has_value());
        if (!ab) continue;
        CHECK(*ab == *ba);
        CHECK(a.encloses(*ab));
        CHECK(b.encloses(*ab));
        CHECK(*box_intersect(*ab, *ab) == *ab);
    }
}

TEST_CASE("box_enlarge") {
    AxisBox unit(Point{0, 0}, Point{1, 1});
    auto g = box_enlarge(unit, GhostSpec(0.1));
    CHECK(g.low[0] == doctest::Approx(-0.1));
    CHECK(g.high[1] == doctest::Approx(1.1));
    CHECK(box_enlarge(unit, GhostSpec(0.0)) == unit);
    CHECK(box_enlarge(box1(2, 3), GhostSpec(0.5)) == box1(1.5, 3.5));
    CHECK_THROWS_AS(GhostSpec(-1.0), UsageError);
}

TEST_CASE("GhostSpec node width rounds up") {
    CHECK(GhostSpec(0.1).node_width(0.1) == 1);
    CHECK(GhostSpec(0.3).node_width(0.1) == 3);
    CHECK(GhostSpec(0.25).node_width(0.1) == 3);
    CHECK(GhostSpec(0.0).node_width(0.1) == 0);
}

TEST_CASE("periodic_wrap") {
    AxisBox dom = box1(0, 1);
    CHECK(periodic_wrap(Point{1.2}, dom, all_periodic(1))[0] == doctest::Approx(0.2));
    CHECK(periodic_wrap(Point{-0.3}, dom, all_periodic(1))[0] == doctest::Approx(0.7));
    CHECK(periodic_wrap(Point{1.2}, dom, all_non_periodic(1))[0] == 1.2);

    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-5, 5);
    AxisBox dom2(Point{-1, 0}, Point{2, 0.5});
    BoundaryConditions bc{Boundary::Periodic, Boundary::NonPeriodic};
    for (int i = 0; i < 5000; ++i) {
        Point p{u(rng), u(rng)};
        Point w = periodic_wrap(p, dom2, bc);
        CHECK(w[0] >= -1.0);
        CHECK(w[0] < 2.0);
        CHECK(w[1] == p[1]);
        CHECK(periodic_wrap(w, dom2, bc) == w);
        const double k = (p[0] - w[0]) / 3.0;
        CHECK(std::abs(k - std::round(k)) < 1e-9);
    }
    // Values that round onto the upper face still land inside.
    Point tiny{-1e-18};
    CHECK(periodic_wrap(tiny, dom, all_periodic(1))[0] < 1.0);
}

TEST_CASE("hilbert base orientation and reference agreement in 2D") {
    CHECK(hilbert_index(GridKey{0, 0}, 1) == 0);
    CHECK(hilbert_index(GridKey{0, 1}, 1) == 1);
    CHECK(hilbert_index(GridKey{1, 1}, 1) == 2);
    CHECK(hilbert_index(GridKey{1, 0}, 1) == 3);
    for (unsigned order = 1; order <= 4; ++order) {
        const std::int64_t side = std::int64_t{1} << order;
        for (std::int64_t a = 0; a < side; ++a)
            for (std::int64_t b = 0; b < side; ++b) CHECK(hilbert_index(GridKey{a, b}, order) == xy2d(side, a, b));
    }
}

TEST_CASE("hilbert is a face-adjacent bijection for D<=4, order<=3") {
    for (std::size_t dim = 1; dim <= 4; ++dim) {
        for (unsigned order = 1; order <= 3; ++order) {
            const std::uint64_t total = std::uint64_t{1} << (order * dim);
            std::vector<GridKey> along(total);
            std::vector<char> seen(total, 0);
            const std::int64_t side = std::int64_t{1} << order;
            GridKey k(dim, 0);
            for (std::uint64_t n = 0; n < total; ++n) {
                const auto h = hilbert_index(k, order);
                REQUIRE(h < total);
                CHECK_FALSE(seen[h]);
                seen[h] = 1;
                along[h] = k;
                CHECK(hilbert_key(h, dim, order) == k);
                for (std::size_t d = 0; d < dim; ++d) {
                    if (++k[d] < side) break;
                    k[d] = 0;
                }
            }
            for (std::uint64_t h = 1; h < total; ++h) {
                std::int64_t manhattan = 0;
                for (std::size_t d = 0; d < dim; ++d) manhattan += std::abs(along[h][d] - along[h - 1][d]);
                CHECK(manhattan == 1);
            }
        }
    }
}

TEST_CASE("hilbert in 1D is the identity and rejects out-of-range keys") {
    for (std::int64_t i = 0; i < 16; ++i) CHECK(hilbert_index(GridKey{i}, 4) == static_cast<std::uint64_t>(i));
    CHECK_THROWS_AS(hilbert_index(GridKey{4, 0}, 2), UsageError);
    CHECK_THROWS_AS(hilbert_index(GridKey{-1, 0}, 2), UsageError);
}

TEST_CASE("AxisBox rejects inverted bounds and uses half-open membership") {
    CHECK_THROWS_AS(AxisBox(Point{1}, Point{0}), UsageError);
    AxisBox b = box1(0, 1);
    CHECK(b.contains(Point{0.0}));
    CHECK_FALSE(b.contains(Point{1.0}));
}
