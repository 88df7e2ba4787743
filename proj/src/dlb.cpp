#include "pmx/dlb.hpp"

#include <algorithm>
#include <numeric>

#include "pmx/error.hpp"
#include "pmx/particles.hpp"

namespace pmx {

double record_step(CostLedger& ledger, SarState& sar, std::span<const double> per_rank_times) {
    if (per_rank_times.empty()) throw UsageError("record_step: need one time per rank");
    const double mx = *std::max_element(per_rank_times.begin(), per_rank_times.end());
    const double mean =
        std::accumulate(per_rank_times.begin(), per_rank_times.end(), 0.0) / static_cast<double>(per_rank_times.size());
    const double delta = std::max(0.0, mx - mean);
    ledger.step_times.emplace_back(per_rank_times.begin(), per_rank_times.end());
    sar.sum_delta += delta;
    ++sar.steps;
    return delta;
}

double sar_w(const SarState& sar) {
    if (sar.steps == 0) return std::numeric_limits<double>::infinity();
    return (sar.rebalance_cost + sar.sum_delta) / static_cast<double>(sar.steps);
}

bool sar_decide(SarState& sar) {
    if (sar.steps == 0) throw UsageError("sar_decide: record at least one step first");
    const double w = sar_w(sar);
    const bool rise = w > sar.last_w;
    sar.last_w = w;
    if (sar.fired) return false;
    if (rise) sar.fired = true;
    return rise;
}

void sar_reset(SarState& sar, double measured_rebalance_cost) {
    sar = SarState(std::max(0.0, measured_rebalance_cost));
}

std::vector<double> sum_across_ranks(World& world, std::span<const double> local) {
    Bytes mine;
    ByteWriter w(mine);
    w.put_span<double>(local);
    std::vector<double> total(local.size(), 0.0);
    for (const auto& part : world.allgather(std::move(mine))) {
        if (part.size() != local.size() * sizeof(double))
            throw ProtocolError("sum_across_ranks: ranks passed vectors of different lengths");
        ByteReader r(part);
        for (auto& t : total) t += r.get<double>();
    }
    return total;
}

RebalanceOutcome rebalance(World& world, const Decomposition& current, std::span<const double> compute_costs,
                           std::span<const double> migration_costs, std::size_t steps_since_rebalance,
                           const RefineOptions& options) {
    const auto& grid = current.grid();
    if (compute_costs.size() != grid.cell_count()) throw UsageError("rebalance: need one compute cost per cell");
    if (!migration_costs.empty() && migration_costs.size() != grid.cell_count())
        throw UsageError("rebalance: need one migration cost per cell");
    auto graph = build_graph(grid, compute_costs, current.bc(), current.ghost());
    const double discount = 1.0 / static_cast<double>(std::max<std::size_t>(1, steps_since_rebalance));
    Assignment next = partition_graph_refine(graph, current.nranks(), current.assignment(), migration_costs, discount, options);
    RebalanceOutcome out;
    for (std::size_t i = 0; i < next.size(); ++i) out.moved_cells += next[i] != current.assignment()[i];
    out.decomposition = Decomposition::from_assignment(world, grid, std::move(next), current.bc(), current.ghost());
    return out;
}

std::vector<double> particle_migration_costs(const ParticleSet& pset) {
    const auto& grid = pset.decomposition()->grid();
    std::vector<double> local(grid.cell_count(), 0.0);
    std::vector<double> x(pset.dim());
    for (std::size_t i : pset.iterate(Region::Owned)) {
        auto p = pset.position(i);
        std::copy(p.begin(), p.end(), x.begin());
        periodic_wrap_inplace(x, grid.domain, pset.decomposition()->bc());
        if (auto c = grid.cell_of(x)) local[*c] += static_cast<double>(pset.record_size(i));
    }
    return sum_across_ranks(pset.world(), local);
}

SarTrace::SarTrace(const std::filesystem::path& path, int nranks) : out_(path) {
    if (!out_) throw IoError("cannot open trace file " + path.string());
    out_ << "step";
    for (int r = 0; r < nranks; ++r) out_ << ",time_rank" << r;
    out_ << ",delta,W,rebalanced\n";
}

void SarTrace::write(std::size_t step, std::span<const double> times, double delta, double w, bool rebalanced) {
    if (!active()) return;
    out_ << step;
    for (double t : times) out_ << ',' << t;
    out_ << ',' << delta << ',' << w << ',' << (rebalanced ? 1 : 0) << '\n';
}

}  // namespace pmx
