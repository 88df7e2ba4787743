#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "pmx/clients/common.hpp"
#include "pmx/particles.hpp"

namespace pmx::clients {

using Vec3 = std::array<double, 3>;

struct DEMConfig {
    double kn = 7.849;
    double kt = 2.243;
    double gamma_n = 3.401;
    /// Negative means gamma_n / 2.
    double gamma_t = -1.0;
    double R = 0.06;
    double m = 1.0;
    double I = 1.44e-3;
    double mu = 0.5;
    /// Gravity already rotated by the incline: |g| (sin 30deg, 0, -cos 30deg).
    std::vector<double> gravity{0.001, 0.0, -0.0017320508075688772};
    double dt = 0.05;
    int steps = 500;
    std::vector<double> domain_low{0.0, 0.0, 0.0};
    std::vector<double> domain_high{4.0, 1.25, 2.0};
    /// Particles start on a lattice filling this box (cell centers).
    std::vector<double> block_low{0.0, 0.0, 0.0};
    std::vector<double> block_high{2.5, 1.25, 1.25};
    double lattice_spacing = 0.125;
    /// Seeded displacement in [-a, a] per axis applied to the lattice.
    double jitter = 0.002;
    std::uint64_t seed = 3;
    int output_every = 50;

    double gt() const { return gamma_t < 0.0 ? 0.5 * gamma_n : gamma_t; }
    void validate() const;
};

void to_json(nlohmann::json& j, const DEMConfig& c);
void from_json(const nlohmann::json& j, DEMConfig& c);

/// Kinematic state of one contact partner.
struct DemBody {
    Vec3 x{};
    Vec3 v{};
    Vec3 omega{};
};

struct DemPairResult {
    double delta = 0.0;
    Vec3 fn{};
    Vec3 ft{};
    /// Torque on p; the torque on q is identical for equal radii.
    Vec3 torque{};
    bool capped = false;
};

/// Hertzian contact of p and q with overlap delta = 2R - |x_p - x_q| > 0.
/// Advances the tangential spring `ut` by v_t dt, keeps it in the tangent
/// plane and rescales it when |F_t| would exceed mu |F_n|. The force on q is
/// -(fn + ft).
DemPairResult dem_pair_force(const DemBody& p, const DemBody& q, Vec3& ut, const DEMConfig& c);

/// Partner ids used for the three walls (x low, x high, z low).
inline constexpr std::int64_t kWallXLow = -1;
inline constexpr std::int64_t kWallXHigh = -2;
inline constexpr std::int64_t kWallZLow = -3;

struct DemStepStats {
    std::int64_t contacts = 0;
    /// Stored contacts whose partner gid was not found among local particles.
    std::int64_t unresolved = 0;
    /// max(|F_t| - mu |F_n|) over all contacts of the step.
    double coulomb_excess = -std::numeric_limits<double>::infinity();
    double max_overlap = 0.0;
};

/// Granular avalanche: walls at both x ends and the floor, periodic in y,
/// open at the top. Each contact lives on the particle with the lower gid as
/// a pair of list entries (partner gid, tangential spring).
class DemSimulation {
public:
    DemSimulation(World& world, DEMConfig config, const DecompositionOptions& options = {});
    DemSimulation(World& world, DEMConfig config, ParticleSet restored, int step);
    /// Empty set over the configured domain; add particles, then call map.
    static DemSimulation empty(World& world, DEMConfig config);

    static PropertySchema schema();
    static constexpr PropId vel = 0, omega = 1, force = 2, torque = 3, contacts = 4, springs = 5;

    ParticleSet& particles() { return pset_; }
    const DEMConfig& config() const { return cfg_; }
    int step_count() const { return step_; }

    /// One leapfrog step (Eq. 13); returns global statistics. Collective.
    DemStepStats step();
    void redistribute(DecompositionPtr next);

private:
    DemSimulation(World& world, DEMConfig config, DecompositionPtr decomposition);
    DemStepStats contact_forces();

    World* world_;
    DEMConfig cfg_;
    ParticleSet pset_;
    int step_ = 0;
};

DecompositionPtr dem_decomposition(World& world, const DEMConfig& c, const DecompositionOptions& options = {});

struct DemResult {
    std::vector<DemStepStats> steps;
    int rebalances = 0;
    std::int64_t particles = 0;
};

/// Full client run with outputs per `opts`. Collective.
DemResult run_dem(World& world, DEMConfig config, const RunOptions& opts = {});

}  // namespace pmx::clients
