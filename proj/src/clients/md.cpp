#include "pmx/clients/md.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "pmx/io/checkpoint.hpp"
#include "pmx/io/vtk.hpp"

namespace pmx::clients {

void LJConfig::validate() const {
    if (!(sigma > 0) || !(epsilon > 0)) throw UsageError("md: sigma and epsilon must be positive");
    if (!(r_cut > 0)) throw UsageError("md: r_cut must be positive");
    if (!(dt > 0)) throw UsageError("md: dt must be positive");
    if (skin < 0) throw UsageError("md: skin must be nonnegative");
    if (steps < 0) throw UsageError("md: steps must be nonnegative");
    if (lattice.size() != domain_low.size()) throw UsageError("md: lattice and domain dimensions differ");
    for (auto n : lattice)
        if (n <= 0) throw UsageError("md: lattice counts must be positive");
    box_from(domain_low, domain_high);
}

void to_json(nlohmann::json& j, const LJConfig& c) {
    j = nlohmann::json{{"sigma", c.sigma},           {"epsilon", c.epsilon},       {"r_cut", c.r_cut},
                       {"dt", c.dt},                 {"steps", c.steps},           {"lattice", c.lattice},
                       {"domain_low", c.domain_low}, {"domain_high", c.domain_high}, {"skin", c.skin},
                       {"velocity_jitter", c.velocity_jitter}, {"seed", c.seed},  {"output_every", c.output_every}};
}

void from_json(const nlohmann::json& j, LJConfig& c) {
    LJConfig d;
    c.sigma = j.value("sigma", d.sigma);
    c.epsilon = j.value("epsilon", d.epsilon);
    c.r_cut = j.value("r_cut", d.r_cut);
    c.dt = j.value("dt", d.dt);
    c.steps = j.value("steps", d.steps);
    c.lattice = j.value("lattice", d.lattice);
    c.domain_low = j.value("domain_low", d.domain_low);
    c.domain_high = j.value("domain_high", d.domain_high);
    c.skin = j.value("skin", d.skin);
    c.velocity_jitter = j.value("velocity_jitter", d.velocity_jitter);
    c.seed = j.value("seed", d.seed);
    c.output_every = j.value("output_every", d.output_every);
}

void lj_force(std::span<const double> xp, std::span<const double> xq, const LJConfig& c, std::span<double> out) {
    double r2 = 0.0;
    for (std::size_t d = 0; d < xp.size(); ++d) r2 += (xp[d] - xq[d]) * (xp[d] - xq[d]);
    if (r2 == 0.0) throw PhysicsError("md: coincident particles");
    if (r2 >= c.r_cut * c.r_cut) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    const double s2 = c.sigma * c.sigma, s6 = s2 * s2 * s2, s12 = s6 * s6;
    const double r4 = r2 * r2, r8 = r4 * r4, r14 = r8 * r4 * r2;
    const double f = 24.0 * c.epsilon * (2.0 * s12 / r14 - s6 / r8);
    for (std::size_t d = 0; d < xp.size(); ++d) out[d] = f * (xp[d] - xq[d]);
}

double lj_potential(double r2, const LJConfig& c) {
    if (r2 >= c.r_cut * c.r_cut) return 0.0;
    const double sr2 = c.sigma * c.sigma / r2;
    const double sr6 = sr2 * sr2 * sr2;
    return 4.0 * c.epsilon * (sr6 * sr6 - sr6);
}

void lj_forces_symmetric(ParticleSet& pset, const VerletList& list, const LJConfig& c, PropId force) {
    pset.columns().reset(force, 0, pset.size());
    const PairTarget targets[] = {{force, Mirror::Negate}};
    apply_pairwise(
        pset, list,
        [&](const ParticleSet& ps, std::size_t p, std::size_t q, std::span<double> out) {
            lj_force(ps.position(p), ps.position(q), c, out);
        },
        targets);
    pset.ghost_put({force});
}

void lj_forces_full(ParticleSet& pset, const VerletList& list, const LJConfig& c, PropId force) {
    pset.columns().reset(force, 0, pset.size());
    const PairTarget targets[] = {{force, Mirror::Negate}};
    apply_pairwise(
        pset, list,
        [&](const ParticleSet& ps, std::size_t p, std::size_t q, std::span<double> out) {
            lj_force(ps.position(p), ps.position(q), c, out);
        },
        targets);
}

PropertySchema MdSimulation::schema() { return {vector_d("vel"), vector_d("force")}; }

namespace {

DecompositionPtr md_decomposition(World& world, const LJConfig& c, const DecompositionOptions& options) {
    c.validate();
    return Decomposition::build(world, box_from(c.domain_low, c.domain_high), all_periodic(c.lattice.size()),
                                GhostSpec(c.r_cut + c.skin), options);
}

}  // namespace

MdSimulation::MdSimulation(World& world, LJConfig config, const DecompositionOptions& options)
    : world_(&world), cfg_(std::move(config)), pset_(world, md_decomposition(world, cfg_, options), schema()) {
    init_grid(pset_, cfg_.lattice);
    if (cfg_.velocity_jitter > 0.0) {
        for (std::size_t i : pset_.iterate(Region::Owned)) {
            std::mt19937_64 rng(cfg_.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(pset_.gid(i)));
            std::uniform_real_distribution<double> u(-cfg_.velocity_jitter, cfg_.velocity_jitter);
            for (auto& v : pset_.real(vel(), i)) v = u(rng);
        }
    }
    refresh(true);
    compute_forces();
}

MdSimulation::MdSimulation(World& world, LJConfig config, ParticleSet restored, int step)
    : world_(&world), cfg_(std::move(config)), pset_(std::move(restored)), step_(step) {
    cfg_.validate();
    refresh(true);
}

void MdSimulation::refresh(bool rebuild) {
    if (rebuild) {
        pset_.map_local();
        pset_.ghost_get({}, GhostMode::Rebuild);
        list_ = VerletList(pset_, cfg_.r_cut, cfg_.skin, true);
    } else {
        pset_.ghost_get({}, GhostMode::Keep);
    }
}

void MdSimulation::compute_forces() { lj_forces_symmetric(pset_, list_, cfg_, force()); }

void MdSimulation::step() {
    const double half = 0.5 * cfg_.dt;
    const std::size_t dim = pset_.dim();
    for (std::size_t i : pset_.iterate(Region::Owned)) {
        auto v = pset_.real(vel(), i);
        auto f = pset_.real(force(), i);
        auto x = pset_.position(i);
        for (std::size_t d = 0; d < dim; ++d) {
            v[d] += half * f[d];
            x[d] += v[d] * cfg_.dt;
        }
    }
    refresh(world_->allreduce_or(list_.needs_rebuild(pset_)));
    compute_forces();
    for (std::size_t i : pset_.iterate(Region::Owned)) {
        auto v = pset_.real(vel(), i);
        auto f = pset_.real(force(), i);
        for (std::size_t d = 0; d < dim; ++d) v[d] += half * f[d];
    }
    ++step_;
}

EnergySample MdSimulation::energy() {
    double kin = 0.0, pot = 0.0;
    std::int64_t pairs = 0;
    const double rc2 = cfg_.r_cut * cfg_.r_cut;
    for (std::size_t p : pset_.iterate(Region::Owned)) {
        for (double v : pset_.real(vel(), p)) kin += 0.5 * v * v;
        auto xp = pset_.position(p);
        for (std::size_t q : list_.neighbors(p)) {
            auto xq = pset_.position(q);
            double r2 = 0.0;
            for (std::size_t d = 0; d < xp.size(); ++d) r2 += (xp[d] - xq[d]) * (xp[d] - xq[d]);
            if (r2 < rc2) {
                pot += lj_potential(r2, cfg_);
                ++pairs;
            }
        }
    }
    EnergySample e;
    e.step = step_;
    e.kinetic = world_->allreduce_sum(kin);
    e.potential = world_->allreduce_sum(pot);
    e.total = e.kinetic + e.potential;
    e.pairs_in_cutoff = world_->allreduce_sum(pairs);
    return e;
}

void MdSimulation::redistribute(DecompositionPtr next) {
    pset_.set_decomposition(std::move(next));
    pset_.map_global();
    refresh(true);
}

MdResult run_md(World& world, LJConfig config, const RunOptions& opts) {
    if (opts.steps) config.steps = *opts.steps;
    config.validate();
    std::optional<MdSimulation> sim;
    if (!opts.restart.empty()) {
        auto mark = read_restart_mark(opts.restart, "md");
        auto info = checkpoint_inspect(opts.restart.string());
        auto decomp = checkpoint_decomposition(world, info);
        sim.emplace(world, config,
                    checkpoint_load_particles(world, opts.restart.string(), decomp, MdSimulation::schema()), mark.step);
    } else {
        sim.emplace(world, config);
    }
    if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

    MdResult result;
    result.trace.push_back(sim->energy());
    const double total = static_cast<double>(world.allreduce_sum(static_cast<std::int64_t>(sim->particles().n_owned())));
    SarDriver sar(world, opts.dlb, opts.trace, total / world.size());
    const PropId fields[] = {sim->vel(), sim->force()};
    auto& ps = sim->particles();

    const int last = sim->step_count() + config.steps;
    while (sim->step_count() < last) {
        sim->step();
        const int s = sim->step_count();
        result.trace.push_back(sim->energy());

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
            vtk_write_particles(ps, step_path(opts.out_dir, "md", s).string(), fields);
        if (opts.checkpoint_every > 0 && s % opts.checkpoint_every == 0 && !opts.out_dir.empty()) {
            auto path = step_path(opts.out_dir, "md", s);
            path += ".ckpt";
            checkpoint_save(ps, path.string());
            if (world.rank() == 0) write_restart_mark(path, {"md", s});
        }
    }
    result.rebalances = sar.rebalances();

    if (!opts.out_dir.empty() && world.rank() == 0) {
        std::ofstream csv(opts.out_dir / "md_energy.csv");
        csv.precision(17);
        csv << "step,kinetic,potential,total\n";
        for (const auto& e : result.trace) csv << e.step << ',' << e.kinetic << ',' << e.potential << ',' << e.total << '\n';
    }
    return result;
}

}  // namespace pmx::clients
