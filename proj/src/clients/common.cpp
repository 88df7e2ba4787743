#include "pmx/clients/common.hpp"

#include <cstdio>
#include <fstream>

#include "pmx/error.hpp"
#include "pmx/transport.hpp"

namespace pmx::clients {

namespace {

std::filesystem::path mark_path(const std::filesystem::path& checkpoint) {
    auto p = checkpoint;
    p += ".json";
    return p;
}

}  // namespace

void write_restart_mark(const std::filesystem::path& checkpoint, const RestartMark& mark) {
    std::ofstream out(mark_path(checkpoint));
    if (!out) throw IoError("cannot write " + mark_path(checkpoint).string());
    out << nlohmann::json{{"client", mark.client}, {"step", mark.step}}.dump() << '\n';
}

RestartMark read_restart_mark(const std::filesystem::path& checkpoint, const std::string& client) {
    std::ifstream in(mark_path(checkpoint));
    if (!in) throw IoError("missing restart marker " + mark_path(checkpoint).string());
    RestartMark mark;
    try {
        auto j = nlohmann::json::parse(in);
        mark.client = j.at("client").get<std::string>();
        mark.step = j.at("step").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError(std::string("restart marker: ") + e.what());
    }
    if (mark.client != client)
        throw IncompatibleSchemaError("checkpoint was written by " + mark.client + ", not " + client);
    return mark;
}

std::filesystem::path step_path(const std::filesystem::path& out, const std::string& stem, int step) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", step);
    return out / (stem + "_" + buf);
}

AxisBox box_from(const std::vector<double>& low, const std::vector<double>& high) {
    if (low.size() != high.size() || low.empty()) throw UsageError("domain bounds must have the same nonzero length");
    for (std::size_t d = 0; d < low.size(); ++d)
        if (!(high[d] > low[d])) throw UsageError("domain is empty on axis " + std::to_string(d));
    return AxisBox(Point(std::span<const double>(low)), Point(std::span<const double>(high)));
}

SarDriver::SarDriver(World& world, bool enabled, const std::filesystem::path& trace, double prior_cost)
    : world_(&world), enabled_(enabled), sar_(prior_cost) {
    if (!trace.empty() && world.rank() == 0) trace_ = SarTrace(trace, world.size());
}

bool SarDriver::observe(std::size_t step, double my_cost) {
    if (!enabled_ && !trace_.active()) return false;
    ByteWriter w;
    w.put<double>(my_cost);
    last_times_.clear();
    for (auto& b : world_->allgather(w.take())) {
        ByteReader r(b);
        last_times_.push_back(r.get<double>());
    }
    last_delta_ = record_step(ledger_, sar_, last_times_);
    last_step_ = step;
    const bool fire = enabled_ && sar_decide(sar_);
    if (!fire && trace_.active()) trace_.write(step, last_times_, last_delta_, sar_w(sar_), false);
    return fire;
}

void SarDriver::rebalanced(double cost) {
    if (trace_.active()) trace_.write(last_step_, last_times_, last_delta_, sar_w(sar_), true);
    sar_reset(sar_, cost);
    ++rebalances_;
}

}  // namespace pmx::clients
