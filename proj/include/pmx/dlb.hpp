#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <vector>

#include "pmx/decomposition.hpp"
#include "pmx/transport.hpp"

namespace pmx {

class ParticleSet;

/// Per-cell compute and migration costs plus the per-step rank times seen so
/// far. Identical on every rank once gathered.
struct CostLedger {
    std::vector<double> compute;
    std::vector<double> migration;
    std::vector<std::vector<double>> step_times;
};

/// Stop-At-Rise bookkeeping since the last rebalance.
struct SarState {
    std::size_t steps = 0;
    double sum_delta = 0.0;
    double last_w = std::numeric_limits<double>::infinity();
    /// Estimated cost of a rebalance, in the same unit as the step times.
    double rebalance_cost = 0.0;
    bool fired = false;

    explicit SarState(double prior_cost = 0.0) : rebalance_cost(prior_cost) {}
};

/// Appends one step: delta = max(times) - mean(times). Returns delta.
double record_step(CostLedger& ledger, SarState& sar, std::span<const double> per_rank_times);

/// W(n) = (C + sum delta) / n.
double sar_w(const SarState& sar);

/// True on the first step where W rises (W(0) is +inf, so never on step 1).
/// After firing it stays false until sar_reset.
bool sar_decide(SarState& sar);

void sar_reset(SarState& sar, double measured_rebalance_cost);

/// Sums per-rank partial cost vectors (each rank fills the cells it knows).
/// Collective.
std::vector<double> sum_across_ranks(World& world, std::span<const double> local);

struct RebalanceOutcome {
    DecompositionPtr decomposition;
    /// Cells whose owner changed.
    std::size_t moved_cells = 0;
};

/// Refines the current assignment against the given global costs, with
/// migration costs discounted by 1 / max(1, steps since the last rebalance),
/// and re-merges sub-domains. Collective; every rank must pass identical
/// costs.
RebalanceOutcome rebalance(World& world, const Decomposition& current, std::span<const double> compute_costs,
                           std::span<const double> migration_costs, std::size_t steps_since_rebalance,
                           const RefineOptions& options = {});

/// Per-cell migration cost of a particle set: serialized bytes resident in
/// each cell, summed over ranks. Collective.
std::vector<double> particle_migration_costs(const ParticleSet& pset);

/// Rank-0 CSV trace: step, one time column per rank, delta, W, rebalanced.
class SarTrace {
public:
    SarTrace() = default;
    SarTrace(const std::filesystem::path& path, int nranks);
    bool active() const { return out_.is_open(); }
    void write(std::size_t step, std::span<const double> times, double delta, double w, bool rebalanced);

private:
    std::ofstream out_;
};

}  // namespace pmx
