#include "pmx/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

namespace pmx {

namespace {

constexpr std::uint32_t kContinuation = 1u << 31;
constexpr std::uint32_t kHelloTag = (1u << 30) | (0x3Fu << 24);
constexpr std::size_t kFrameHeader = 8 + 4 + 4 + 4;

std::pair<std::string, std::string> split_host_port(const std::string& hp) {
    auto colon = hp.rfind(':');
    if (colon == std::string::npos) throw UsageError("host list entry without port: " + hp);
    return {hp.substr(0, colon), hp.substr(colon + 1)};
}

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

void write_all(int fd, const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    while (n > 0) {
        ssize_t k = ::send(fd, p, n, MSG_NOSIGNAL);
        if (k < 0) {
            if (errno == EINTR) continue;
            throw TransportError(errno_text("tcp send"));
        }
        p += k;
        n -= static_cast<std::size_t>(k);
    }
}

/// False on orderly EOF before any byte was read.
bool read_all(int fd, void* data, std::size_t n) {
    auto* p = static_cast<char*>(data);
    std::size_t got = 0;
    while (got < n) {
        ssize_t k = ::recv(fd, p + got, n - got, 0);
        if (k == 0) {
            if (got == 0) return false;
            throw TransportError("tcp: connection closed mid-frame");
        }
        if (k < 0) {
            if (errno == EINTR) continue;
            throw TransportError(errno_text("tcp recv"));
        }
        got += static_cast<std::size_t>(k);
    }
    return true;
}

void write_frame(int fd, std::uint32_t src, std::uint32_t dst, std::uint32_t tag, std::span<const std::byte> payload) {
    Bytes header;
    ByteWriter w(header);
    w.put<std::uint64_t>(payload.size());
    w.put<std::uint32_t>(src);
    w.put<std::uint32_t>(dst);
    w.put<std::uint32_t>(tag);
    write_all(fd, header.data(), header.size());
    if (!payload.empty()) write_all(fd, payload.data(), payload.size());
}

struct FrameHeader {
    std::uint64_t length;
    std::uint32_t source, dest, tag;
};

bool read_frame_header(int fd, FrameHeader& h) {
    std::byte raw[kFrameHeader];
    if (!read_all(fd, raw, sizeof raw)) return false;
    ByteReader r(raw);
    h.length = r.get<std::uint64_t>();
    h.source = r.get<std::uint32_t>();
    h.dest = r.get<std::uint32_t>();
    h.tag = r.get<std::uint32_t>();
    return true;
}

void expect_magic(int fd) {
    char m[8];
    if (!read_all(fd, m, 8) || std::memcmp(m, kWireMagic, 8) != 0) throw TransportError("tcp: bad wire magic");
}

int listen_on(const std::string& port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(nullptr, port.c_str(), &hints, &res); rc != 0)
        throw TransportError(std::string("getaddrinfo: ") + ::gai_strerror(rc));
    int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0) {
        ::freeaddrinfo(res);
        ::close(fd);
        throw TransportError(errno_text("tcp bind"));
    }
    ::freeaddrinfo(res);
    if (::listen(fd, 64) != 0) {
        ::close(fd);
        throw TransportError(errno_text("tcp listen"));
    }
    return fd;
}

int connect_to(const std::string& host_port, std::chrono::milliseconds timeout) {
    auto [host, port] = split_host_port(host_port);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        addrinfo hints{};
        hints.ai_family = AF_INET;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
            throw TransportError(std::string("getaddrinfo: ") + ::gai_strerror(rc));
        int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
        int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
        ::freeaddrinfo(res);
        if (rc == 0) return fd;
        ::close(fd);
        if (std::chrono::steady_clock::now() >= deadline) throw TransportError("tcp: could not connect to " + host_port);
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
}

class TcpEndpoint final : public Backend {
public:
    explicit TcpEndpoint(const TcpConfig& cfg)
        : size_(static_cast<int>(cfg.hosts.size())),
          rank_(cfg.rank),
          max_frame_(cfg.max_message_size),
          fds_(cfg.hosts.size(), -1),
          send_mu_(cfg.hosts.size()) {
        if (size_ < 1) throw UsageError("tcp: empty host list");
        if (rank_ < 0 || rank_ >= size_) throw UsageError("tcp: rank outside host list");
        if (max_frame_ == 0) throw UsageError("tcp: max message size must be positive");
        establish(cfg);
        for (int p = 0; p < size_; ++p) {
            if (p == rank_) continue;
            readers_.emplace_back([this, p] { read_loop(p); });
        }
    }

    ~TcpEndpoint() override {
        // Half-close so queued frames still reach peers, then give the readers
        // a grace period to see each peer's FIN before forcing the sockets down.
        closing_.store(true);
        for (int fd : fds_)
            if (fd >= 0) ::shutdown(fd, SHUT_WR);
        {
            std::unique_lock lk(in_mu_);
            in_cv_.wait_for(lk, std::chrono::seconds(10), [&] { return readers_done_ == readers_.size(); });
        }
        for (int fd : fds_)
            if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
        for (auto& t : readers_) t.join();
        for (int fd : fds_)
            if (fd >= 0) ::close(fd);
    }

    int size() const override { return size_; }
    int rank() const override { return rank_; }

    void post(Envelope e) override {
        if (e.dest == rank_) {
            push(std::move(e));
            return;
        }
        const auto d = static_cast<std::size_t>(e.dest);
        std::lock_guard lk(send_mu_[d]);
        std::span<const std::byte> rest(e.payload);
        do {
            const auto n = std::min<std::uint64_t>(rest.size(), max_frame_);
            const bool more = n < rest.size();
            write_frame(fds_[d], static_cast<std::uint32_t>(e.source), static_cast<std::uint32_t>(e.dest),
                        e.tag | (more ? kContinuation : 0u), rest.first(n));
            rest = rest.subspan(n);
        } while (!rest.empty());
    }

    std::optional<Envelope> wait_incoming(std::chrono::milliseconds timeout) override {
        std::unique_lock lk(in_mu_);
        if (!in_cv_.wait_for(lk, timeout, [&] { return !inbox_.empty() || failed_; })) return std::nullopt;
        if (inbox_.empty()) throw TransportError(failure_);
        Envelope e = std::move(inbox_.front());
        inbox_.pop_front();
        return e;
    }

private:
    void establish(const TcpConfig& cfg) {
        auto [host, port] = split_host_port(cfg.hosts[static_cast<std::size_t>(rank_)]);
        int lfd = listen_on(port);
        try {
            for (int p = 0; p < rank_; ++p) {
                int fd = connect_to(cfg.hosts[static_cast<std::size_t>(p)], cfg.connect_timeout);
                int one = 1;
                ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
                write_all(fd, kWireMagic, 8);
                write_frame(fd, static_cast<std::uint32_t>(rank_), static_cast<std::uint32_t>(p), kHelloTag, {});
                expect_magic(fd);
                fds_[static_cast<std::size_t>(p)] = fd;
            }
            for (int accepted = 0; accepted < size_ - 1 - rank_; ++accepted) {
                int fd = ::accept(lfd, nullptr, nullptr);
                if (fd < 0) throw TransportError(errno_text("tcp accept"));
                int one = 1;
                ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
                expect_magic(fd);
                FrameHeader h{};
                if (!read_frame_header(fd, h) || h.tag != kHelloTag || h.length != 0 ||
                    static_cast<int>(h.source) <= rank_ || static_cast<int>(h.source) >= size_) {
                    ::close(fd);
                    throw TransportError("tcp: malformed hello frame");
                }
                write_all(fd, kWireMagic, 8);
                fds_[h.source] = fd;
            }
        } catch (...) {
            ::close(lfd);
            throw;
        }
        ::close(lfd);
    }

    void read_loop(int peer) {
        read_frames(peer);
        std::lock_guard lk(in_mu_);
        ++readers_done_;
        in_cv_.notify_all();
    }

    void read_frames(int peer) {
        const int fd = fds_[static_cast<std::size_t>(peer)];
        try {
            Bytes pending;
            for (;;) {
                FrameHeader h{};
                if (!read_frame_header(fd, h)) return;
                const auto base = pending.size();
                pending.resize(base + h.length);
                if (h.length > 0 && !read_all(fd, pending.data() + base, h.length))
                    throw TransportError("tcp: connection closed mid-frame");
                if (h.tag & kContinuation) continue;
                push(Envelope{static_cast<int>(h.source), static_cast<int>(h.dest), h.tag, std::move(pending)});
                pending = Bytes{};
            }
        } catch (const std::exception& ex) {
            if (closing_.load()) return;
            std::lock_guard lk(in_mu_);
            failed_ = true;
            failure_ = "rank " + std::to_string(rank_) + " link to rank " + std::to_string(peer) + ": " + ex.what();
            in_cv_.notify_all();
        }
    }

    void push(Envelope e) {
        {
            std::lock_guard lk(in_mu_);
            inbox_.push_back(std::move(e));
        }
        in_cv_.notify_all();
    }

    int size_;
    int rank_;
    std::uint64_t max_frame_;
    std::vector<int> fds_;
    std::vector<std::mutex> send_mu_;
    std::vector<std::thread> readers_;
    std::atomic<bool> closing_{false};

    std::mutex in_mu_;
    std::condition_variable in_cv_;
    std::deque<Envelope> inbox_;
    bool failed_ = false;
    std::string failure_;
    std::size_t readers_done_ = 0;
};

}  // namespace

std::vector<std::string> read_hostlist(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open host list " + path.string());
    std::vector<std::string> hosts;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        auto e = line.find_last_not_of(" \t\r");
        hosts.push_back(line.substr(b, e - b + 1));
    }
    return hosts;
}

std::unique_ptr<Backend> make_tcp_backend(const TcpConfig& config) { return std::make_unique<TcpEndpoint>(config); }

}  // namespace pmx
