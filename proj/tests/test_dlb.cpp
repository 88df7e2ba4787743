#include <doctest.h>

#include "hotspot.hpp"
#include "pmx/dlb.hpp"

using namespace pmx;
using namespace pmx::testing;

TEST_CASE("record_step degradation") {
    CostLedger ledger;
    SarState sar;
    std::vector<double> even{1.0, 1.0}, skew{1.0, 2.0};
    CHECK(record_step(ledger, sar, even) == 0.0);
    CHECK(record_step(ledger, sar, skew) == 0.5);
    CHECK(sar.sum_delta == 0.5);
    CHECK(sar.steps == 2);
    CHECK(ledger.step_times.size() == 2);
}

TEST_CASE("sar_decide examples") {
    auto run = [](double c, std::vector<double> deltas) {
        SarState sar(c);
        std::vector<bool> out;
        CostLedger ledger;
        for (double d : deltas) {
            std::vector<double> times{0.0, 2.0 * d};
            record_step(ledger, sar, times);
            out.push_back(sar_decide(sar));
        }
        return std::pair(out, sar);
    };
    auto [a, sa] = run(10.0, {0, 0});
    CHECK(a == std::vector<bool>{false, false});
    CHECK(sar_w(sa) == 5.0);

    auto [b, sb] = run(10.0, {0, 0, 30});
    CHECK(b == std::vector<bool>{false, false, true});
    CHECK(sar_w(sb) == doctest::Approx(40.0 / 3.0));

    auto [c, sc] = run(10.0, std::vector<double>(50, 1.0));
    CHECK(std::none_of(c.begin(), c.end(), [](bool x) { return x; }));

    // Once fired, quiet until reset.
    auto [d, sd] = run(0.0, {1, 5, 50, 500, 5000});
    CHECK(std::count(d.begin(), d.end(), true) == 1);
    sar_reset(sd, 3.0);
    CHECK(sd.steps == 0);
    CHECK(sd.rebalance_cost == 3.0);
}

TEST_CASE("rebalance fixed point, dominance of migration and hotspot relief") {
    world_spawn(2, [](World& w) {
        DecompositionOptions opt;
        opt.cells_per_axis = std::vector<std::int64_t>{4, 4};
        auto d = Decomposition::build(w, AxisBox(Point{0, 0}, Point{1, 1}), all_periodic(2), GhostSpec(0.05), opt);
        std::vector<double> uniform(16, 1.0);
        auto same = rebalance(w, *d, uniform, {}, 10);
        CHECK(same.moved_cells == 0);
        CHECK(same.decomposition->assignment() == d->assignment());

        std::vector<double> hot(16, 1.0);
        for (std::size_t i = 0; i < 16; ++i)
            if (d->owner_of_cell(i) == 0) hot[i] = 9.0;
        auto ratio = [&](const Assignment& a) {
            double l[2] = {0, 0};
            for (std::size_t i = 0; i < 16; ++i) l[a[i]] += hot[i];
            return std::max(l[0], l[1]) / (0.5 * (l[0] + l[1]));
        };
        std::vector<double> huge(16, 1e15);
        CHECK(rebalance(w, *d, hot, huge, 1).moved_cells == 0);
        auto relieved = rebalance(w, *d, hot, {}, 1);
        CHECK(ratio(relieved.decomposition->assignment()) < ratio(d->assignment()));
    });
}

TEST_CASE("moving hotspot: DLB lowers integrated imbalance and keeps state") {
    auto off = world_spawn(4, [](World& w) { return run_hotspot(w, false, 60); });
    auto on = world_spawn(4, [](World& w) { return run_hotspot(w, true, 60); });
    CHECK(on[0].rebalances >= 1);
    CHECK(on[0].state_preserved);
    CHECK(on[0].ownership_ok);
    CHECK(on[0].sum_delta < off[0].sum_delta);
}
