#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>
#include <deque>

#include "pmx/bytes.hpp"
#include "pmx/error.hpp"

namespace pmx {

/// Largest tag available to user code. Tags above it are reserved for
/// collectives and for the TCP continuation flag.
inline constexpr std::uint32_t kMaxUserTag = (1u << 29) - 1;

/// The top 256 user tags carry the library's own point-to-point traffic
/// (particle and mesh mappings). Applications should stay below this.
inline constexpr std::uint32_t kLibraryTagBase = kMaxUserTag - 255;

struct Envelope {
    int source = 0;
    int dest = 0;
    std::uint32_t tag = 0;
    Bytes payload;
};

/// One rank's endpoint into a message fabric. Implementations must deliver
/// messages between a given (source, dest) pair in posting order.
class Backend {
public:
    virtual ~Backend() = default;
    virtual int size() const = 0;
    virtual int rank() const = 0;
    /// Buffered, non-blocking send.
    virtual void post(Envelope e) = 0;
    /// Next delivered message, or nullopt after `timeout`.
    virtual std::optional<Envelope> wait_incoming(std::chrono::milliseconds timeout) = 0;
};

struct WorldOptions {
    /// A blocking receive that sees no traffic for this long fails.
    std::chrono::milliseconds recv_timeout{std::chrono::minutes(5)};
};

/// Rank-addressed communicator. Confined to one thread of control; all
/// collective calls must be made by every rank in the same order.
class World {
public:
    explicit World(std::unique_ptr<Backend> backend, WorldOptions options = {});

    World(const World&) = delete;
    World& operator=(const World&) = delete;

    int size() const { return size_; }
    int rank() const { return rank_; }

    void send(int dest, std::uint32_t tag, Bytes payload);
    Bytes recv(int source, std::uint32_t tag);
    Envelope recv_any(std::uint32_t tag);

    void barrier();
    std::vector<Bytes> allgather(Bytes local);
    Bytes broadcast(Bytes data, int root);

    /// Dynamic sparse data exchange (NBX). Each rank names only the ranks it
    /// sends to; the call returns everything addressed to this rank, keyed by
    /// source. Empty payloads are delivered like any other.
    std::map<int, Bytes> nbx_exchange(const std::map<int, Bytes>& outgoing);

    double allreduce_sum(double v);
    double allreduce_max(double v);
    std::int64_t allreduce_sum(std::int64_t v);
    std::int64_t allreduce_max(std::int64_t v);
    bool allreduce_or(bool v);

    /// Number of payload-carrying messages this endpoint posted through
    /// nbx_exchange (acknowledgments and consensus traffic excluded).
    std::uint64_t nbx_data_messages_sent() const { return nbx_data_sent_; }

private:
    template <typename Pred>
    Envelope recv_matching(Pred&& pred);
    std::uint32_t next_epoch();
    std::vector<Bytes> gather_release(std::uint8_t kind, Bytes local);
    template <typename T, typename Op>
    T allreduce(T v, Op op);

    std::unique_ptr<Backend> backend_;
    WorldOptions options_;
    int size_;
    int rank_;
    std::deque<Envelope> unexpected_;
    std::uint32_t epoch_ = 0;
    std::uint64_t nbx_data_sent_ = 0;
};

/// Fault injection for the in-process fabric.
struct DelayInjection {
    std::chrono::microseconds max_delay{0};
    std::uint64_t seed = 0;
};

struct SpawnOptions {
    WorldOptions world;
    DelayInjection delays;
};

/// Shared state of an in-process world of `n` ranks.
class InProcessHub : public std::enable_shared_from_this<InProcessHub> {
public:
    InProcessHub(int n, DelayInjection delays);
    ~InProcessHub();

    int size() const;
    std::unique_ptr<Backend> endpoint(int rank);

    /// Record `error` as the world's failure (first one wins) and wake every
    /// blocked endpoint.
    void abort(std::exception_ptr error);
    std::exception_ptr error() const;

    struct State;

private:
    std::shared_ptr<State> state_;
};

namespace detail {

void run_ranks(int n, const SpawnOptions& options, const std::function<void(World&)>& body);

}  // namespace detail

/// Run `program(World&)` on `n` in-process ranks (one thread each) and
/// return the per-rank results in rank order. If any rank throws, the world is
/// aborted and that rank's exception is rethrown here.
template <typename Program>
auto world_spawn(int n, Program&& program, SpawnOptions options = {}) {
    using R = std::invoke_result_t<Program&, World&>;
    if constexpr (std::is_void_v<R>) {
        detail::run_ranks(n, options, [&](World& w) { program(w); });
    } else {
        std::vector<std::optional<R>> slots(static_cast<std::size_t>(n > 0 ? n : 0));
        detail::run_ranks(n, options, [&](World& w) { slots[static_cast<std::size_t>(w.rank())] = program(w); });
        std::vector<R> out;
        out.reserve(slots.size());
        for (auto& s : slots) out.push_back(std::move(*s));
        return out;
    }
}

}  // namespace pmx
