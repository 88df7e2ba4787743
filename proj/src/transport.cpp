#include "pmx/transport.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <limits>
#include <mutex>
#include <random>
#include <string>

namespace pmx {

namespace {

constexpr std::uint32_t kInternalBit = 1u << 30;

enum class Channel : std::uint32_t {
    CollArrive = 1,
    CollRelease = 2,
    NbxData = 3,
    NbxAck = 4,
    NbxArrive = 5,
    NbxRelease = 6,
};

enum CollKind : std::uint8_t {
    kBarrier = 1,
    kAllgather = 2,
    kReduce = 3,
    kReleaseOk = 0x00,
    kReleaseError = 0xFF,
};

constexpr std::uint32_t internal_tag(Channel c, std::uint32_t epoch) {
    return kInternalBit | (static_cast<std::uint32_t>(c) << 24) | (epoch & 0xFFFFFFu);
}

const char* coll_name(std::uint8_t kind) {
    switch (kind) {
        case kBarrier: return "barrier";
        case kAllgather: return "allgather";
        case kReduce: return "allreduce";
        default: return "unknown";
    }
}

/// Raised in ranks that were blocked when another rank failed.
class WorldAborted : public TransportError {
public:
    WorldAborted() : TransportError("world aborted by a failing rank") {}
};

}  // namespace

World::World(std::unique_ptr<Backend> backend, WorldOptions options)
    : backend_(std::move(backend)), options_(options), size_(backend_->size()), rank_(backend_->rank()) {}

void World::send(int dest, std::uint32_t tag, Bytes payload) {
    if (dest < 0 || dest >= size_) throw UsageError("send: invalid destination rank " + std::to_string(dest));
    if (tag > kMaxUserTag) throw UsageError("send: tag exceeds the user tag range");
    backend_->post(Envelope{rank_, dest, tag, std::move(payload)});
}

template <typename Pred>
Envelope World::recv_matching(Pred&& pred) {
    for (auto it = unexpected_.begin(); it != unexpected_.end(); ++it) {
        if (pred(*it)) {
            Envelope e = std::move(*it);
            unexpected_.erase(it);
            return e;
        }
    }
    for (;;) {
        auto e = backend_->wait_incoming(options_.recv_timeout);
        if (!e) {
            throw TransportError("rank " + std::to_string(rank_) + ": receive timed out after " +
                                 std::to_string(options_.recv_timeout.count()) + " ms");
        }
        if (pred(*e)) return std::move(*e);
        unexpected_.push_back(std::move(*e));
    }
}

Bytes World::recv(int source, std::uint32_t tag) {
    if (source < 0 || source >= size_) throw UsageError("recv: invalid source rank " + std::to_string(source));
    return recv_matching([&](const Envelope& e) { return e.source == source && e.tag == tag; }).payload;
}

Envelope World::recv_any(std::uint32_t tag) {
    return recv_matching([&](const Envelope& e) { return e.tag == tag; });
}

std::uint32_t World::next_epoch() { return epoch_++ & 0xFFFFFFu; }

// Linear gather to rank 0 followed by a release broadcast. The kind byte lets
// rank 0 detect ranks that entered a different collective under the same
// epoch; it then releases everyone with an error instead of hanging.
std::vector<Bytes> World::gather_release(std::uint8_t kind, Bytes local) {
    const std::uint32_t epoch = next_epoch();
    const std::uint32_t arrive = internal_tag(Channel::CollArrive, epoch);
    const std::uint32_t release = internal_tag(Channel::CollRelease, epoch);

    if (rank_ != 0) {
        Bytes msg;
        ByteWriter w(msg);
        w.put<std::uint8_t>(kind);
        w.put_bytes(local);
        backend_->post(Envelope{rank_, 0, arrive, std::move(msg)});
        Bytes rel = recv_matching([&](const Envelope& e) { return e.source == 0 && e.tag == release; }).payload;
        ByteReader r(rel);
        if (r.get<std::uint8_t>() == kReleaseError) throw ProtocolError(r.get_string());
        std::vector<Bytes> out;
        if (kind == kBarrier) return out;
        const auto n = r.get<std::uint32_t>();
        out.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            auto len = r.get<std::uint64_t>();
            auto raw = r.get_bytes(len);
            out.emplace_back(raw.begin(), raw.end());
        }
        return out;
    }

    std::vector<Bytes> parts(static_cast<std::size_t>(size_));
    parts[0] = std::move(local);
    std::string mismatch;
    for (int i = 1; i < size_; ++i) {
        Envelope e = recv_matching([&](const Envelope& m) { return m.tag == arrive; });
        ByteReader r(e.payload);
        const auto their = r.get<std::uint8_t>();
        if (their != kind && mismatch.empty()) {
            mismatch = "collective mismatch at epoch " + std::to_string(epoch) + ": rank 0 in " + coll_name(kind) +
                       ", rank " + std::to_string(e.source) + " in " + coll_name(their);
        }
        auto rest = r.get_bytes(r.remaining());
        parts[static_cast<std::size_t>(e.source)] = Bytes(rest.begin(), rest.end());
    }

    Bytes rel;
    ByteWriter w(rel);
    if (!mismatch.empty()) {
        w.put<std::uint8_t>(kReleaseError);
        w.put_string(mismatch);
    } else {
        w.put<std::uint8_t>(kReleaseOk);
        if (kind != kBarrier) {
            w.put<std::uint32_t>(static_cast<std::uint32_t>(size_));
            for (const auto& p : parts) {
                w.put<std::uint64_t>(p.size());
                w.put_bytes(p);
            }
        }
    }
    for (int i = 1; i < size_; ++i) backend_->post(Envelope{0, i, release, rel});
    if (!mismatch.empty()) throw ProtocolError(mismatch);
    if (kind == kBarrier) return {};
    return parts;
}

void World::barrier() { gather_release(kBarrier, {}); }

std::vector<Bytes> World::allgather(Bytes local) { return gather_release(kAllgather, std::move(local)); }

Bytes World::broadcast(Bytes data, int root) {
    if (root < 0 || root >= size_) throw UsageError("broadcast: invalid root");
    auto all = gather_release(kAllgather, rank_ == root ? std::move(data) : Bytes{});
    return std::move(all[static_cast<std::size_t>(root)]);
}

template <typename T, typename Op>
T World::allreduce(T v, Op op) {
    Bytes b;
    ByteWriter(b).put<T>(v);
    auto all = gather_release(kReduce, std::move(b));
    T acc = ByteReader(all[0]).get<T>();
    for (std::size_t i = 1; i < all.size(); ++i) acc = op(acc, ByteReader(all[i]).get<T>());
    return acc;
}

double World::allreduce_sum(double v) { return allreduce(v, [](double a, double b) { return a + b; }); }
double World::allreduce_max(double v) { return allreduce(v, [](double a, double b) { return std::max(a, b); }); }
std::int64_t World::allreduce_sum(std::int64_t v) {
    return allreduce(v, [](std::int64_t a, std::int64_t b) { return a + b; });
}
std::int64_t World::allreduce_max(std::int64_t v) {
    return allreduce(v, [](std::int64_t a, std::int64_t b) { return std::max(a, b); });
}
bool World::allreduce_or(bool v) { return allreduce_max(std::int64_t{v ? 1 : 0}) != 0; }

// NBX: payloads go out immediately and each one is acknowledged by its
// receiver after it has been recorded. Once all of a rank's own sends are
// acknowledged it joins a non-blocking barrier (arrive at rank 0, wait for
// release) while continuing to service incoming payloads. The release can
// only be issued after every rank's sends were acknowledged, so every payload
// is recorded somewhere by the time any rank returns.
std::map<int, Bytes> World::nbx_exchange(const std::map<int, Bytes>& outgoing) {
    for (const auto& [dest, payload] : outgoing) {
        if (dest < 0 || dest >= size_) throw UsageError("nbx_exchange: invalid destination rank " + std::to_string(dest));
    }
    const std::uint32_t epoch = next_epoch();
    const std::uint32_t t_data = internal_tag(Channel::NbxData, epoch);
    const std::uint32_t t_ack = internal_tag(Channel::NbxAck, epoch);
    const std::uint32_t t_arrive = internal_tag(Channel::NbxArrive, epoch);
    const std::uint32_t t_release = internal_tag(Channel::NbxRelease, epoch);

    std::size_t pending_acks = 0;
    for (const auto& [dest, payload] : outgoing) {
        backend_->post(Envelope{rank_, dest, t_data, payload});
        ++pending_acks;
        ++nbx_data_sent_;
    }

    std::map<int, Bytes> received;
    bool arrived = false;
    int arrivals = 0;  // rank 0 only
    auto maybe_arrive = [&] {
        if (!arrived && pending_acks == 0) {
            arrived = true;
            backend_->post(Envelope{rank_, 0, t_arrive, {}});
        }
    };
    maybe_arrive();

    for (;;) {
        Envelope e = recv_matching([&](const Envelope& m) {
            return m.tag == t_data || m.tag == t_ack || m.tag == t_release || (rank_ == 0 && m.tag == t_arrive);
        });
        if (e.tag == t_data) {
            if (received.count(e.source)) {
                throw ProtocolError("nbx_exchange: duplicate payload from rank " + std::to_string(e.source));
            }
            received.emplace(e.source, std::move(e.payload));
            backend_->post(Envelope{rank_, e.source, t_ack, {}});
        } else if (e.tag == t_ack) {
            if (pending_acks == 0) throw ProtocolError("nbx_exchange: unexpected acknowledgment");
            --pending_acks;
            maybe_arrive();
        } else if (e.tag == t_arrive) {
            if (++arrivals == size_) {
                for (int r = 0; r < size_; ++r) backend_->post(Envelope{0, r, t_release, {}});
            }
        } else {
            break;
        }
    }
    return received;
}

// ---------------------------------------------------------------------------
// In-process fabric

struct InProcessHub::State {
    struct Slot {
        std::chrono::steady_clock::time_point deliver_at;
        std::uint64_t seq;
        bool operator<(const Slot& o) const { return deliver_at != o.deliver_at ? deliver_at < o.deliver_at : seq < o.seq; }
    };
    struct Mailbox {
        std::mutex mu;
        std::condition_variable cv;
        std::map<Slot, Envelope> queue;
    };

    explicit State(int n, DelayInjection d) : size(n), delays(d), boxes(static_cast<std::size_t>(n)) {}

    int size;
    DelayInjection delays;
    std::vector<Mailbox> boxes;
    std::atomic<std::uint64_t> seq{0};
    std::atomic<bool> aborted{false};
    mutable std::mutex err_mu;
    std::exception_ptr error;
};

namespace {

class InProcessEndpoint final : public Backend {
public:
    InProcessEndpoint(std::shared_ptr<InProcessHub::State> s, int rank)
        : s_(std::move(s)),
          rank_(rank),
          rng_(s_->delays.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(rank)),
          last_(static_cast<std::size_t>(s_->size)) {}

    int size() const override { return s_->size; }
    int rank() const override { return rank_; }

    void post(Envelope e) override {
        if (s_->aborted.load()) throw WorldAborted();
        auto when = std::chrono::steady_clock::now();
        if (s_->delays.max_delay.count() > 0) {
            std::uniform_int_distribution<std::int64_t> dist(0, s_->delays.max_delay.count());
            when += std::chrono::microseconds(dist(rng_));
        }
        // Pairwise FIFO: never deliver before an earlier message to the same rank.
        auto& last = last_[static_cast<std::size_t>(e.dest)];
        when = std::max(when, last);
        last = when;
        auto& box = s_->boxes[static_cast<std::size_t>(e.dest)];
        {
            std::lock_guard lk(box.mu);
            box.queue.emplace(InProcessHub::State::Slot{when, s_->seq.fetch_add(1)}, std::move(e));
        }
        box.cv.notify_all();
    }

    std::optional<Envelope> wait_incoming(std::chrono::milliseconds timeout) override {
        auto& box = s_->boxes[static_cast<std::size_t>(rank_)];
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        std::unique_lock lk(box.mu);
        for (;;) {
            if (s_->aborted.load()) throw WorldAborted();
            const auto now = std::chrono::steady_clock::now();
            if (!box.queue.empty()) {
                auto it = box.queue.begin();
                if (it->first.deliver_at <= now) {
                    Envelope e = std::move(it->second);
                    box.queue.erase(it);
                    return e;
                }
                if (now >= deadline) return std::nullopt;
                box.cv.wait_until(lk, std::min(it->first.deliver_at, deadline));
            } else {
                if (now >= deadline) return std::nullopt;
                box.cv.wait_until(lk, deadline);
            }
        }
    }

private:
    std::shared_ptr<InProcessHub::State> s_;
    int rank_;
    std::mt19937_64 rng_;
    std::vector<std::chrono::steady_clock::time_point> last_;
};

}  // namespace

InProcessHub::InProcessHub(int n, DelayInjection delays) {
    if (n < 1) throw UsageError("world size must be >= 1");
    state_ = std::make_shared<State>(n, delays);
}

InProcessHub::~InProcessHub() = default;

int InProcessHub::size() const { return state_->size; }

std::unique_ptr<Backend> InProcessHub::endpoint(int rank) {
    if (rank < 0 || rank >= state_->size) throw UsageError("endpoint: invalid rank");
    return std::make_unique<InProcessEndpoint>(state_, rank);
}

void InProcessHub::abort(std::exception_ptr error) {
    {
        std::lock_guard lk(state_->err_mu);
        if (!state_->error) state_->error = error;
    }
    state_->aborted.store(true);
    for (auto& box : state_->boxes) {
        std::lock_guard lk(box.mu);
        box.cv.notify_all();
    }
}

std::exception_ptr InProcessHub::error() const {
    std::lock_guard lk(state_->err_mu);
    return state_->error;
}

namespace detail {

void run_ranks(int n, const SpawnOptions& options, const std::function<void(World&)>& body) {
    auto hub = std::make_shared<InProcessHub>(n, options.delays);
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
        threads.emplace_back([&, r] {
            try {
                World w(hub->endpoint(r), options.world);
                body(w);
            } catch (...) {
                hub->abort(std::current_exception());
            }
        });
    }
    for (auto& t : threads) t.join();
    if (auto e = hub->error()) std::rethrow_exception(e);
}

}  // namespace detail

}  // namespace pmx
