#pragma once

#include <cstdint>
#include <vector>

#include "pmx/clients/common.hpp"
#include "pmx/particles.hpp"

namespace pmx::clients {

struct LJConfig {
    double sigma = 0.1;
    double epsilon = 1.0;
    double r_cut = 0.3;
    double dt = 0.0005;
    int steps = 2000;
    std::vector<std::int64_t> lattice{20, 20, 20};
    std::vector<double> domain_low{0.0, 0.0, 0.0};
    /// Edge 20 * 2^(1/6) sigma puts the lattice at the pair-potential minimum.
    std::vector<double> domain_high{2.244924096618746, 2.244924096618746, 2.244924096618746};
    /// Verlet list skin; lists are rebuilt once a particle moved skin/2.
    double skin = 0.03;
    /// Uniform random initial velocity in [-a, a] per component (seeded).
    double velocity_jitter = 0.02;
    std::uint64_t seed = 1;
    int output_every = 100;

    void validate() const;
};

void to_json(nlohmann::json& j, const LJConfig& c);
void from_json(const nlohmann::json& j, LJConfig& c);

/// 24 eps (2 sigma^12 / r^14 - sigma^6 / r^8) (xp - xq), zero at r >= r_cut.
/// Throws PhysicsError when the particles coincide.
void lj_force(std::span<const double> xp, std::span<const double> xq, const LJConfig& c, std::span<double> out);
/// 4 eps ((sigma/r)^12 - (sigma/r)^6) for r < r_cut, else 0.
double lj_potential(double r2, const LJConfig& c);

/// Symmetric evaluation: zeroes `force` everywhere, accumulates each listed
/// pair once on both partners and folds ghost contributions home. Collective.
void lj_forces_symmetric(ParticleSet& pset, const VerletList& list, const LJConfig& c, PropId force);
/// Full evaluation over a non-symmetric list: each owned particle sums its own
/// neighbors; no communication.
void lj_forces_full(ParticleSet& pset, const VerletList& list, const LJConfig& c, PropId force);

struct EnergySample {
    int step = 0;
    double kinetic = 0.0;
    double potential = 0.0;
    double total = 0.0;
    /// Interacting pairs. total - pairs_in_cutoff * V(r_cut) is the energy of
    /// the shifted potential, the quantity the truncated force conserves.
    std::int64_t pairs_in_cutoff = 0;
};

/// Lennard-Jones particles on a lattice, integrated with velocity Verlet.
/// Properties: "vel" and "force", both D-vectors; unit mass.
class MdSimulation {
public:
    MdSimulation(World& world, LJConfig config, const DecompositionOptions& options = {});
    /// Resumes from a particle set restored out of a checkpoint.
    MdSimulation(World& world, LJConfig config, ParticleSet restored, int step);

    static PropertySchema schema();

    ParticleSet& particles() { return pset_; }
    const LJConfig& config() const { return cfg_; }
    int step_count() const { return step_; }
    PropId vel() const { return 0; }
    PropId force() const { return 1; }

    void step();
    /// Collective.
    EnergySample energy();
    /// Replaces the decomposition and restores ghosts, lists and forces.
    void redistribute(DecompositionPtr next);
    std::size_t pair_count() const { return list_.pair_count(); }

private:
    void refresh(bool rebuild);
    void compute_forces();

    World* world_;
    LJConfig cfg_;
    ParticleSet pset_;
    VerletList list_;
    int step_ = 0;
};

struct MdResult {
    std::vector<EnergySample> trace;
    int rebalances = 0;
};

/// Full client run with outputs per `opts`. Collective.
MdResult run_md(World& world, LJConfig config, const RunOptions& opts = {});

}  // namespace pmx::clients
