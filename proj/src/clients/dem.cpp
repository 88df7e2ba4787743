#include "pmx/clients/dem.hpp"

#include <cmath>
#include <random>
#include <unordered_set>

#include "pmx/io/checkpoint.hpp"
#include "pmx/io/vtk.hpp"

namespace pmx::clients {

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 load3(std::span<const double> s) { return {s[0], s[1], s[2]}; }

void add_to(std::span<double> dst, const Vec3& v, double sign = 1.0) {
    for (std::size_t d = 0; d < 3; ++d) dst[d] += sign * v[d];
}

bool same_size(const std::vector<double>& v) { return v.size() == 3; }

}  // namespace

void DEMConfig::validate() const {
    if (kn < 0 || kt < 0 || gamma_n < 0 || gt() < 0 || mu < 0)
        throw UsageError("dem: stiffness and friction constants must be nonnegative");
    if (!(R > 0) || !(m > 0) || !(I > 0)) throw UsageError("dem: R, m and I must be positive");
    if (!(dt > 0) || steps < 0) throw UsageError("dem: dt must be positive and steps nonnegative");
    if (!same_size(gravity) || !same_size(domain_low) || !same_size(domain_high) || !same_size(block_low) ||
        !same_size(block_high))
        throw UsageError("dem: vectors must have three components");
    box_from(domain_low, domain_high);
    if (!(lattice_spacing >= 2 * R)) throw UsageError("dem: lattice spacing must be at least 2R");
    for (std::size_t d = 0; d < 3; ++d)
        if (block_low[d] < domain_low[d] || block_high[d] > domain_high[d])
            throw UsageError("dem: initial block must lie inside the domain");
}

void to_json(nlohmann::json& j, const DEMConfig& c) {
    j = nlohmann::json{{"kn", c.kn},
                       {"kt", c.kt},
                       {"gamma_n", c.gamma_n},
                       {"gamma_t", c.gt()},
                       {"R", c.R},
                       {"m", c.m},
                       {"I", c.I},
                       {"mu", c.mu},
                       {"gravity", c.gravity},
                       {"dt", c.dt},
                       {"steps", c.steps},
                       {"domain_low", c.domain_low},
                       {"domain_high", c.domain_high},
                       {"block_low", c.block_low},
                       {"block_high", c.block_high},
                       {"lattice_spacing", c.lattice_spacing},
                       {"jitter", c.jitter},
                       {"seed", c.seed},
                       {"output_every", c.output_every}};
}

void from_json(const nlohmann::json& j, DEMConfig& c) {
    DEMConfig d;
    c.kn = j.value("kn", d.kn);
    c.kt = j.value("kt", d.kt);
    c.gamma_n = j.value("gamma_n", d.gamma_n);
    c.gamma_t = j.value("gamma_t", d.gamma_t);
    c.R = j.value("R", d.R);
    c.m = j.value("m", d.m);
    c.I = j.value("I", d.I);
    c.mu = j.value("mu", d.mu);
    c.gravity = j.value("gravity", d.gravity);
    if (j.contains("incline_deg")) {
        const double g = j.value("g", 0.002), a = j.at("incline_deg").get<double>() * M_PI / 180.0;
        c.gravity = {g * std::sin(a), 0.0, -g * std::cos(a)};
    }
    c.dt = j.value("dt", d.dt);
    c.steps = j.value("steps", d.steps);
    c.domain_low = j.value("domain_low", d.domain_low);
    c.domain_high = j.value("domain_high", d.domain_high);
    c.block_low = j.value("block_low", d.block_low);
    c.block_high = j.value("block_high", d.block_high);
    c.lattice_spacing = j.value("lattice_spacing", d.lattice_spacing);
    c.jitter = j.value("jitter", d.jitter);
    c.seed = j.value("seed", d.seed);
    c.output_every = j.value("output_every", d.output_every);
}

DemPairResult dem_pair_force(const DemBody& p, const DemBody& q, Vec3& ut, const DEMConfig& c) {
    DemPairResult r;
    Vec3 rpq{p.x[0] - q.x[0], p.x[1] - q.x[1], p.x[2] - q.x[2]};
    const double dist = norm(rpq);
    r.delta = 2.0 * c.R - dist;
    if (r.delta <= 0.0) return r;
    const Vec3 n{rpq[0] / dist, rpq[1] / dist, rpq[2] / dist};

    // Relative velocity at the contact point, split into normal and tangential parts.
    Vec3 spin{p.omega[0] + q.omega[0], p.omega[1] + q.omega[1], p.omega[2] + q.omega[2]};
    const Vec3 roll = cross(spin, n);
    Vec3 vrel{p.v[0] - q.v[0], p.v[1] - q.v[1], p.v[2] - q.v[2]};
    const double vn_mag = dot(vrel, n);
    Vec3 vn{}, vt{};
    for (std::size_t d = 0; d < 3; ++d) {
        vn[d] = vn_mag * n[d];
        vt[d] = vrel[d] - vn[d] - c.R * roll[d];
    }

    for (std::size_t d = 0; d < 3; ++d) ut[d] += vt[d] * c.dt;
    const double un = dot(ut, n);
    for (std::size_t d = 0; d < 3; ++d) ut[d] -= un * n[d];

    const double s = std::sqrt(r.delta / (2.0 * c.R));
    const double meff = 0.5 * c.m;
    for (std::size_t d = 0; d < 3; ++d) {
        r.fn[d] = s * (c.kn * r.delta * n[d] - c.gamma_n * meff * vn[d]);
        r.ft[d] = s * (-c.kt * ut[d] - c.gt() * meff * vt[d]);
    }
    const double fn_mag = norm(r.fn), ft_mag = norm(r.ft);
    const double cap = c.mu * fn_mag;
    if (ft_mag > cap) {
        r.capped = true;
        for (std::size_t d = 0; d < 3; ++d) r.ft[d] *= cap / ft_mag;
        if (c.kt > 0.0)
            for (std::size_t d = 0; d < 3; ++d) ut[d] = -(r.ft[d] / s + c.gt() * meff * vt[d]) / c.kt;
    }
    const Vec3 arm{-c.R * n[0], -c.R * n[1], -c.R * n[2]};
    r.torque = cross(arm, r.ft);
    return r;
}

PropertySchema DemSimulation::schema() {
    return {vector_d("vel"),
            vector_d("omega"),
            vector_d("force"),
            vector_d("torque"),
            var_list("contacts", scalar("", BaseType::Int64)),
            var_list("springs", vector_d(""))};
}

DecompositionPtr dem_decomposition(World& world, const DEMConfig& c, const DecompositionOptions& options) {
    c.validate();
    BoundaryConditions bc{Boundary::NonPeriodic, Boundary::Periodic, Boundary::NonPeriodic};
    return Decomposition::build(world, box_from(c.domain_low, c.domain_high), bc, GhostSpec(2.0 * c.R + 0.01 * c.R),
                                options);
}

DemSimulation::DemSimulation(World& world, DEMConfig config, DecompositionPtr decomposition)
    : world_(&world), cfg_(std::move(config)), pset_(world, std::move(decomposition), schema()) {}

DemSimulation DemSimulation::empty(World& world, DEMConfig config) {
    auto d = dem_decomposition(world, config);
    return DemSimulation(world, std::move(config), d);
}

DemSimulation::DemSimulation(World& world, DEMConfig config, const DecompositionOptions& options)
    : DemSimulation(world, config, dem_decomposition(world, config, options)) {
    // Rank 0 lays out the lattice; map_global hands particles to their owners.
    if (world.rank() == 0) {
        std::int64_t n[3];
        for (std::size_t d = 0; d < 3; ++d)
            n[d] = static_cast<std::int64_t>(std::floor((cfg_.block_high[d] - cfg_.block_low[d]) / cfg_.lattice_spacing + 1e-9));
        std::int64_t gid = 0;
        std::vector<double> x(3);
        for (std::int64_t k = 0; k < n[2]; ++k)
            for (std::int64_t j = 0; j < n[1]; ++j)
                for (std::int64_t i = 0; i < n[0]; ++i, ++gid) {
                    std::mt19937_64 rng(cfg_.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(gid));
                    std::uniform_real_distribution<double> jit(-cfg_.jitter, cfg_.jitter);
                    const std::int64_t idx[3] = {i, j, k};
                    for (std::size_t d = 0; d < 3; ++d)
                        x[d] = cfg_.block_low[d] + (static_cast<double>(idx[d]) + 0.5) * cfg_.lattice_spacing + jit(rng);
                    pset_.add(x, gid);
                }
    }
    pset_.map_global();
}

DemSimulation::DemSimulation(World& world, DEMConfig config, ParticleSet restored, int step)
    : world_(&world), cfg_(std::move(config)), pset_(std::move(restored)), step_(step) {
    cfg_.validate();
    if (!(pset_.schema() == schema())) throw IncompatibleSchemaError("dem: restored particles have another schema");
}

DemStepStats DemSimulation::contact_forces() {
    pset_.ghost_get({vel, omega}, GhostMode::Rebuild);
    auto& cols = pset_.columns();
    cols.reset(force, 0, pset_.size());
    cols.reset(torque, 0, pset_.size());

    DemStepStats st;
    std::unordered_set<std::int64_t> local(pset_.gids().begin(), pset_.gids().end());
    for (std::size_t p : pset_.iterate(Region::Owned))
        for (auto g : cols.integer_list(contacts, p))
            if (g >= 0 && !local.count(g)) ++st.unresolved;

    VerletList list(pset_, 2.0 * cfg_.R, 0.0, true);
    auto body = [&](std::size_t i) {
        return DemBody{load3(pset_.position(i)), load3(pset_.real(vel, i)), load3(pset_.real(omega, i))};
    };
    const auto& dom = pset_.decomposition()->domain();

    std::vector<std::int64_t> new_ids;
    std::vector<double> new_springs;
    for (std::size_t p : pset_.iterate(Region::Owned)) {
        const auto& old_ids = cols.integer_list(contacts, p);
        const auto& old_springs = cols.real_list(springs, p);
        auto spring_of = [&](std::int64_t partner) {
            for (std::size_t k = 0; k < old_ids.size(); ++k)
                if (old_ids[k] == partner) return Vec3{old_springs[3 * k], old_springs[3 * k + 1], old_springs[3 * k + 2]};
            return Vec3{};
        };
        new_ids.clear();
        new_springs.clear();
        const DemBody bp = body(p);

        auto record = [&](std::int64_t partner, const DemPairResult& r, const Vec3& ut) {
            ++st.contacts;
            st.max_overlap = std::max(st.max_overlap, r.delta);
            st.coulomb_excess = std::max(st.coulomb_excess, norm(r.ft) - cfg_.mu * norm(r.fn));
            new_ids.push_back(partner);
            new_springs.insert(new_springs.end(), ut.begin(), ut.end());
            add_to(pset_.real(force, p), r.fn);
            add_to(pset_.real(force, p), r.ft);
            add_to(pset_.real(torque, p), r.torque);
        };

        for (std::size_t q : list.neighbors(p)) {
            const auto gq = pset_.gid(q);
            Vec3 ut = spring_of(gq);
            auto r = dem_pair_force(bp, body(q), ut, cfg_);
            if (r.delta <= 0.0) continue;
            record(gq, r, ut);
            add_to(pset_.real(force, q), r.fn, -1.0);
            add_to(pset_.real(force, q), r.ft, -1.0);
            add_to(pset_.real(torque, q), r.torque);
        }

        // Walls: a fixed mirror image of p across each wall.
        const struct {
            std::int64_t id;
            std::size_t axis;
            double plane;
        } walls[] = {{kWallXLow, 0, dom.low[0]}, {kWallXHigh, 0, dom.high[0]}, {kWallZLow, 2, dom.low[2]}};
        for (const auto& w : walls) {
            DemBody image;
            image.x = bp.x;
            image.x[w.axis] = 2.0 * w.plane - bp.x[w.axis];
            Vec3 ut = spring_of(w.id);
            auto r = dem_pair_force(bp, image, ut, cfg_);
            if (r.delta > 0.0) record(w.id, r, ut);
        }
        cols.integer_list(contacts, p) = new_ids;
        cols.real_list(springs, p) = new_springs;
    }
    pset_.ghost_put({force, torque});

    st.contacts = world_->allreduce_sum(st.contacts);
    st.unresolved = world_->allreduce_sum(st.unresolved);
    st.coulomb_excess = world_->allreduce_max(st.coulomb_excess);
    st.max_overlap = world_->allreduce_max(st.max_overlap);
    if (st.max_overlap > cfg_.R)
        throw PhysicsError("dem: overlap " + std::to_string(st.max_overlap) + " exceeds the particle radius");
    return st;
}

DemStepStats DemSimulation::step() {
    auto st = contact_forces();
    const double dt = cfg_.dt;
    for (std::size_t i : pset_.iterate(Region::Owned)) {
        auto v = pset_.real(vel, i);
        auto x = pset_.position(i);
        auto w = pset_.real(omega, i);
        auto f = pset_.real(force, i);
        auto t = pset_.real(torque, i);
        for (std::size_t d = 0; d < 3; ++d) {
            v[d] += dt / cfg_.m * (f[d] + cfg_.m * cfg_.gravity[d]);
            x[d] += dt * v[d];
            w[d] += dt / cfg_.I * t[d];
        }
    }
    pset_.map_local();
    ++step_;
    return st;
}

void DemSimulation::redistribute(DecompositionPtr next) {
    pset_.set_decomposition(std::move(next));
    pset_.map_global();
}

DemResult run_dem(World& world, DEMConfig config, const RunOptions& opts) {
    if (opts.steps) config.steps = *opts.steps;
    config.validate();
    std::optional<DemSimulation> sim;
    if (!opts.restart.empty()) {
        auto mark = read_restart_mark(opts.restart, "dem");
        auto info = checkpoint_inspect(opts.restart.string());
        auto decomp = checkpoint_decomposition(world, info);
        sim.emplace(world, config,
                    checkpoint_load_particles(world, opts.restart.string(), decomp, DemSimulation::schema()), mark.step);
    } else {
        sim.emplace(world, config);
    }
    if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

    auto& ps = sim->particles();
    DemResult result;
    result.particles = world.allreduce_sum(static_cast<std::int64_t>(ps.n_owned()));
    SarDriver sar(world, opts.dlb, opts.trace, static_cast<double>(result.particles) / world.size());
    const PropId fields[] = {DemSimulation::vel, DemSimulation::omega, DemSimulation::force};
    const int last = sim->step_count() + config.steps;
    while (sim->step_count() < last) {
        result.steps.push_back(sim->step());
        const int s = sim->step_count();
        if (sar.observe(static_cast<std::size_t>(s), static_cast<double>(ps.n_owned()))) {
            auto counts = sum_across_ranks(world, ps.cell_counts());
            auto outcome = rebalance(world, *ps.decomposition(), counts, counts, static_cast<std::size_t>(s));
            std::int64_t leaving = 0;
            for (std::size_t i : ps.iterate(Region::Owned)) {
                auto owner = outcome.decomposition->owner_of(ps.position(i));
                leaving += owner && *owner != world.rank();
            }
            sim->redistribute(outcome.decomposition);
            sar.rebalanced(static_cast<double>(world.allreduce_sum(leaving)) / world.size());
        }
        if (opts.vtk_every > 0 && s % opts.vtk_every == 0 && !opts.out_dir.empty())
            vtk_write_particles(ps, step_path(opts.out_dir, "dem", s).string(), fields);
        if (opts.checkpoint_every > 0 && s % opts.checkpoint_every == 0 && !opts.out_dir.empty()) {
            auto path = step_path(opts.out_dir, "dem", s);
            path += ".ckpt";
            checkpoint_save(ps, path.string());
            if (world.rank() == 0) write_restart_mark(path, {"dem", s});
        }
    }
    result.rebalances = sar.rebalances();
    return result;
}

}  // namespace pmx::clients
