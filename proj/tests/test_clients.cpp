#include <doctest.h>

#include <fstream>

#include "checkpoint_matrix.hpp"
#include "client_checks.hpp"
#include "pmx/io/checkpoint.hpp"
#include "vtk_reader.hpp"

using namespace pmx;
using namespace pmx::clients;
using namespace pmx::testing;

namespace {

std::array<double, 3> force_between(std::array<double, 3> p, std::array<double, 3> q) {
    LJConfig c;
    std::array<double, 3> f{};
    lj_force(p, q, c, f);
    return f;
}

}  // namespace

// --- Lennard-Jones ----------------------------------------------------------

TEST_CASE("lj_force vanishes at the potential minimum") {
    const double r = std::pow(2.0, 1.0 / 6.0) * 0.1;
    auto f = force_between({r, 0, 0}, {0, 0, 0});
    CHECK(std::abs(f[0]) < 1e-12);
    CHECK(f[1] == 0.0);
}

TEST_CASE("lj_force at r = sigma along x") {
    auto f = force_between({0.0, 0, 0}, {-0.1, 0, 0});
    CHECK(f[0] == doctest::Approx(240.0).epsilon(1e-13));
    CHECK(f[1] == 0.0);
    CHECK(f[2] == 0.0);
}

TEST_CASE("lj_force is zero at and beyond the cutoff") {
    CHECK(force_between({0.3, 0, 0}, {0, 0, 0}) == std::array<double, 3>{0, 0, 0});
    CHECK(force_between({0.2, 0.3, 0}, {0, 0, 0}) == std::array<double, 3>{0, 0, 0});
    auto inside = force_between({0.2999, 0, 0}, {0, 0, 0});
    CHECK(inside[0] != 0.0);
}

TEST_CASE("lj_force rejects coincident particles") {
    CHECK_THROWS_AS(force_between({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}), PhysicsError);
}

TEST_CASE("lj_potential") {
    LJConfig c;
    CHECK(std::abs(lj_potential(0.01, c)) < 1e-14);
    const double rmin2 = std::pow(2.0, 1.0 / 3.0) * 0.01;
    CHECK(lj_potential(rmin2, c) == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(lj_potential(0.09, c) == 0.0);
}

TEST_CASE("two particles at the minimum distance stay put") {
    LJConfig c;
    c.velocity_jitter = 0.0;
    const double r = std::pow(2.0, 1.0 / 6.0) * c.sigma;
    world_spawn(2, [&](World& w) {
        auto d = Decomposition::build(w, box_from(c.domain_low, c.domain_high), all_periodic(3),
                                      GhostSpec(c.r_cut + c.skin));
        ParticleSet pair(w, d, MdSimulation::schema());
        if (w.rank() == 0) {
            pair.add(std::vector<double>{1.0, 0.5, 0.5}, 0);
            pair.add(std::vector<double>{1.0 + r, 0.5, 0.5}, 1);
        }
        pair.map_global();
        MdSimulation sim(w, c, std::move(pair), 0);
        for (int s = 0; s < 200; ++s) sim.step();
        auto& ps = sim.particles();
        for (std::size_t i : ps.iterate(Region::Owned)) {
            CHECK(std::abs(ps.position(i)[0] - (ps.gid(i) == 0 ? 1.0 : 1.0 + r)) < 1e-14);
            for (double v : ps.real(sim.vel(), i)) CHECK(std::abs(v) < 1e-12);
        }
        CHECK(sim.energy().potential == doctest::Approx(-1.0).epsilon(1e-12));
    });
}

TEST_CASE("symmetric, full and serial LJ forces agree") {
    for (int ranks : {1, 2, 4}) {
        CAPTURE(ranks);
        auto eq = lj_equivalence(ranks, 300, 11 + static_cast<std::uint64_t>(ranks));
        CHECK(eq.particles == 300);
        CHECK(eq.symmetric_vs_oracle <= 1e-12);
        CHECK(eq.full_vs_oracle <= 1e-12);
        CHECK(eq.symmetric_vs_full <= 1e-12);
    }
}

TEST_CASE("md energy trace is rank-count independent") {
    const auto c = small_md_config(8);
    auto one = md_run(1, c, 30);
    auto four = md_run(4, c, 30);
    CHECK(trace_deviation(one, four) <= 1e-10);
    REQUIRE(one.positions.size() == 512);
    REQUIRE(four.positions.size() == 512);
    double worst = 0.0;
    for (auto& [gid, x] : one.positions)
        for (std::size_t d = 0; d < 3; ++d) worst = std::max(worst, std::abs(x[d] - four.positions[gid][d]));
    CHECK(worst < 1e-12);
}

TEST_CASE("md energy is conserved over a short run") {
    auto run = md_run(1, small_md_config(6), 200);
    const double e0 = run.trace.front().total;
    for (const auto& e : run.trace) CHECK(std::abs(e.total - e0) / std::abs(e0) < 1e-2);
}

TEST_CASE("LJConfig validation and JSON") {
    LJConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = c;
    bad.dt = 0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = c;
    bad.lattice = {4, 4};
    CHECK_THROWS_AS(bad.validate(), UsageError);

    nlohmann::json j = c;
    auto back = j.get<LJConfig>();
    CHECK(back.sigma == c.sigma);
    CHECK(back.lattice == c.lattice);
    CHECK(back.domain_high == c.domain_high);
    auto partial = nlohmann::json{{"steps", 7}}.get<LJConfig>();
    CHECK(partial.steps == 7);
    CHECK(partial.dt == 0.0005);
}

TEST_CASE("md restart continues the trajectory") {
    const auto dir = scratch_dir("md_restart");
    auto c = small_md_config(6);
    RunOptions straight;
    straight.steps = 20;
    auto full = world_spawn(2, [&](World& w) { return run_md(w, c, straight); })[0];

    RunOptions first;
    first.steps = 10;
    first.out_dir = dir;
    first.checkpoint_every = 10;
    world_spawn(2, [&](World& w) { run_md(w, c, first); });
    RunOptions second;
    second.steps = 10;
    second.restart = step_path(dir, "md", 10).string() + ".ckpt";
    auto resumed = world_spawn(3, [&](World& w) { return run_md(w, c, second); })[0];

    REQUIRE(resumed.trace.size() == 11);
    CHECK(resumed.trace.front().step == 10);
    CHECK(resumed.trace.back().step == 20);
    CHECK(resumed.trace.back().total == doctest::Approx(full.trace.back().total).epsilon(1e-10));
    std::filesystem::remove_all(dir);
}

// --- Gray-Scott -------------------------------------------------------------

TEST_CASE("uniform state is a Gray-Scott fixed point") {
    GSConfig c;
    c.grid = {16, 16};
    c.square = 0.0;
    c.noise = 0.0;
    world_spawn(2, [&](World& w) {
        GsSimulation sim(w, c);
        for (int s = 0; s < 20; ++s) sim.step();
        auto& g = sim.grid();
        g.for_each_owned([&](std::size_t b, std::size_t idx, const GridKey&) {
            CHECK(g.block(b).data.real(GsSimulation::u, idx)[0] == 1.0);
            CHECK(g.block(b).data.real(GsSimulation::v, idx)[0] == 0.0);
        });
    });
}

TEST_CASE("Gray-Scott is bitwise rank-count independent") {
    GSConfig c;
    c.grid = {64, 64};
    c.spacing = 2.5 / 64;
    auto one = gs_snapshot(1, c, 100);
    auto four = gs_snapshot(4, c, 100);
    CHECK(one.size() == 64 * 64);
    CHECK(one == four);
    CHECK(gs_snapshot(1, c, 100) == one);
}

TEST_CASE("u relaxes monotonically toward 1 without reactions") {
    GSConfig c;
    c.grid = {32, 32};
    c.spacing = 2.5 / 32;
    c.F = 0.0;
    c.k = 0.0;
    c.Dv = 0.0;
    world_spawn(1, [&](World& w) {
        // With v = 0 and F = k = 0, u only diffuses.
        GsSimulation sim(w, c);
        auto& g = sim.grid();
        g.for_each_owned([&](std::size_t b, std::size_t idx, const GridKey&) {
            g.block(b).data.real(GsSimulation::v, idx)[0] = 0.0;
        });
        auto gap = [&] {
            double worst = 0.0;
            g.for_each_owned([&](std::size_t b, std::size_t idx, const GridKey&) {
                worst = std::max(worst, std::abs(1.0 - g.block(b).data.real(GsSimulation::u, idx)[0]));
            });
            return worst;
        };
        double prev = gap();
        CHECK(prev > 0.4);
        for (int s = 0; s < 200; ++s) {
            sim.step();
            const double now = gap();
            CHECK(now <= prev);
            prev = now;
        }
        CHECK(prev < 0.5);
    });
}

TEST_CASE("GSConfig validation") {
    GSConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = c;
    bad.dt = 100.0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = c;
    bad.Du = -1.0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    CHECK(!gs_presets().empty());
    for (const auto& p : gs_presets()) {
        CHECK(p.F > 0.0);
        CHECK(p.k > 0.0);
    }
    const auto& p = gs_presets().front();
    auto from = nlohmann::json{{"preset", p.name}}.get<GSConfig>();
    CHECK(from.F == p.F);
    CHECK(from.k == p.k);
    nlohmann::json j = c;
    CHECK(j.get<GSConfig>().grid == c.grid);
}

TEST_CASE("Gray-Scott forms a pattern") {
    GSConfig c;
    c.F = 0.04;
    c.k = 0.06;
    c.grid = {64, 64};
    c.spacing = 2.5 / 64;
    RunOptions o;
    o.steps = 2000;
    auto r = world_spawn(2, [&](World& w) { return run_gray_scott(w, c, o); })[0];
    CHECK(r.v_variance > 1e-4);
}

// --- DEM --------------------------------------------------------------------

TEST_CASE("dem overlap from center distance") {
    DEMConfig c;
    Vec3 ut{};
    DemBody p{{0.11, 0, 0}, {}, {}}, q{};
    auto r = dem_pair_force(p, q, ut, c);
    CHECK(r.delta == doctest::Approx(0.01).epsilon(1e-14));
    CHECK(r.fn[0] > 0.0);
    const double s = std::sqrt(0.01 / 0.12);
    CHECK(r.fn[0] == doctest::Approx(s * c.kn * 0.01).epsilon(1e-14));

    DemBody far{{0.13, 0, 0}, {}, {}};
    auto none = dem_pair_force(far, q, ut, c);
    CHECK(none.delta < 0.0);
    CHECK(none.fn == Vec3{0, 0, 0});
}

TEST_CASE("dem pair forces obey Newton's third law") {
    DEMConfig c;
    DemBody p{{0.0, 0.0, 0.0}, {0.3, -0.1, 0.05}, {0.2, 0.0, -1.0}};
    DemBody q{{0.07, 0.05, -0.03}, {-0.2, 0.1, 0.0}, {0.0, 0.5, 0.3}};
    Vec3 up{0.001, 0.0, 0.0}, uq{-0.001, 0.0, 0.0};
    auto on_p = dem_pair_force(p, q, up, c);
    auto on_q = dem_pair_force(q, p, uq, c);
    for (std::size_t d = 0; d < 3; ++d) {
        CHECK(on_p.fn[d] + on_q.fn[d] == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(on_p.ft[d] + on_q.ft[d] == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(on_p.torque[d] == doctest::Approx(on_q.torque[d]).epsilon(1e-15));
        CHECK(up[d] == doctest::Approx(-uq[d]).epsilon(1e-15));
    }
}

TEST_CASE("dem tangential spring stays in the tangent plane") {
    DEMConfig c;
    DemBody p{{0.0, 0.0, 0.1}, {0.0, 0.0, 0.0}, {}}, q{{0.0, 0.0, 0.0}, {0.01, 0.0, 0.02}, {}};
    Vec3 ut{0.0, 0.0, 0.004};
    auto r = dem_pair_force(p, q, ut, c);
    CHECK(ut[2] == 0.0);
    CHECK(ut[0] == doctest::Approx(-0.01 * c.dt));
    CHECK(r.ft[0] > 0.0);
}

TEST_CASE("static contact with a large spring is capped at mu |F_n|") {
    DEMConfig c;
    DemBody p{{0.0, 0.0, 0.1}, {}, {}}, q{};
    Vec3 ut{0.5, -0.2, 0.0};
    auto r = dem_pair_force(p, q, ut, c);
    REQUIRE(r.capped);
    auto len = [](const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); };
    CHECK(std::abs(len(r.ft) - c.mu * len(r.fn)) <= 1e-12);
    // The rescaled spring reproduces the capped force on the next evaluation.
    Vec3 again = ut;
    auto r2 = dem_pair_force(p, q, again, c);
    CHECK(std::abs(len(r2.ft) - c.mu * len(r2.fn)) <= 1e-12);
    for (std::size_t d = 0; d < 3; ++d) CHECK(again[d] == doctest::Approx(ut[d]).epsilon(1e-12));
}

TEST_CASE("dem free fall follows the closed form") { CHECK(dem_free_fall_error(100) <= 1e-12); }

TEST_CASE("dem head-on collision conserves momentum") {
    for (int ranks : {1, 2}) {
        CAPTURE(ranks);
        auto [drift, peak] = dem_head_on(ranks, 120);
        CHECK(peak > 0.0);
        CHECK(drift <= 1e-12);
    }
}

TEST_CASE("dem particle resting on the floor") {
    DEMConfig c;
    c.gravity = {0.0, 0.0, -0.002};
    world_spawn(1, [&](World& w) {
        auto sim = DemSimulation::empty(w, c);
        auto& ps = sim.particles();
        ps.add(std::vector<double>{1.0, 0.5, 0.07}, 0);
        ps.map_global();
        for (int s = 0; s < 2000; ++s) sim.step();
        const double z = ps.position(0)[2];
        // Hertz balance: kn delta^1.5 / sqrt(2R) = m g at rest.
        const double delta = std::pow(c.m * 0.002 * std::sqrt(2 * c.R) / c.kn, 2.0 / 3.0);
        CHECK(z == doctest::Approx(c.R - delta / 2).epsilon(1e-6));
        const auto& ids = ps.columns().integer_list(DemSimulation::contacts, 0);
        REQUIRE(ids.size() == 1);
        CHECK(ids[0] == kWallZLow);
    });
}

TEST_CASE("dem contacts live on the lower gid") {
    world_spawn(2, [](World& w) {
        DEMConfig c;
        DemSimulation sim(w, c);
        for (int s = 0; s < 150; ++s) sim.step();
        const auto snap = contact_snapshot(w, sim.particles());
        std::size_t pairs = 0;
        for (const auto& [key, spring] : snap) {
            if (key.second < 0) continue;
            ++pairs;
            CHECK(key.first < key.second);
            CHECK(!snap.count({key.second, key.first}));
        }
        CHECK(pairs > 0);
    });
}

TEST_CASE("dem avalanche keeps its invariants through remaps") {
    auto rep = dem_avalanche(4, 120, true);
    CHECK(rep.particles == 2000);
    CHECK(rep.coulomb_excess <= 1e-12);
    CHECK(rep.unresolved == 0);
    CHECK(rep.remaps == 2);
    CHECK(rep.contacts_preserved);
    CHECK(rep.positions.size() == 2000);
}

TEST_CASE("dem rank-count independence") {
    auto one = dem_avalanche(1, 200, false);
    auto four = dem_avalanche(4, 200, false);
    REQUIRE(one.positions.size() == four.positions.size());
    double worst = 0.0;
    for (auto& [gid, x] : one.positions)
        for (std::size_t d = 0; d < 3; ++d) worst = std::max(worst, std::abs(x[d] - four.positions[gid][d]));
    CHECK(worst <= 1e-8);
}

TEST_CASE("DEMConfig validation and JSON") {
    DEMConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.gt() == c.gamma_n / 2);
    auto bad = c;
    bad.kn = -1;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = c;
    bad.R = 0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = c;
    bad.gravity = {0.0, 1.0};
    CHECK_THROWS_AS(bad.validate(), UsageError);

    nlohmann::json j = c;
    auto back = j.get<DEMConfig>();
    CHECK(back.kn == c.kn);
    CHECK(back.gt() == c.gt());
    CHECK(back.gravity == c.gravity);
    auto tilted = nlohmann::json{{"incline_deg", 30.0}, {"g", 0.002}}.get<DEMConfig>();
    CHECK(tilted.gravity[0] == doctest::Approx(0.001));
    CHECK(tilted.gravity[2] == doctest::Approx(-0.002 * std::sqrt(3.0) / 2));
}

TEST_CASE("dem run writes VTK and restarts") {
    const auto dir = scratch_dir("dem_run");
    DEMConfig c;
    RunOptions o;
    o.steps = 20;
    o.out_dir = dir;
    o.vtk_every = 10;
    o.checkpoint_every = 20;
    auto r = world_spawn(2, [&](World& w) { return run_dem(w, c, o); })[0];
    CHECK(r.particles == 2000);
    std::size_t points = 0;
    for (int rank = 0; rank < 2; ++rank) {
        auto f = read_vtk(step_path(dir, "dem", 20).string() + "." + std::to_string(rank) + ".vtk");
        points += f.npoints;
        CHECK(f.fields.count("vel"));
        CHECK(f.fields.count("omega"));
        CHECK(f.fields.count("force"));
    }
    CHECK(points == 2000);

    RunOptions again;
    again.steps = 5;
    again.restart = step_path(dir, "dem", 20).string() + ".ckpt";
    auto resumed = world_spawn(3, [&](World& w) { return run_dem(w, c, again); })[0];
    CHECK(resumed.particles == 2000);
    CHECK(resumed.steps.size() == 5);
    for (const auto& st : resumed.steps) CHECK(st.unresolved == 0);

    again.restart = step_path(dir, "dem", 20).string() + ".ckpt";
    CHECK_THROWS_AS(world_spawn(1, [&](World& w) { run_md(w, LJConfig{}, again); }), IncompatibleSchemaError);
    std::filesystem::remove_all(dir);
}
