#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pmx/transport.hpp"

namespace pmx {

inline constexpr char kWireMagic[8] = {'P', 'M', 'X', 'W', 'I', 'R', 'E', '1'};

struct TcpConfig {
    /// "host:port" per rank, in rank order.
    std::vector<std::string> hosts;
    int rank = 0;
    /// Payloads above this size are split into continuation frames.
    std::uint64_t max_message_size = 64ull << 20;
    std::chrono::milliseconds connect_timeout{std::chrono::seconds(30)};
};

/// Reads a rendezvous list: one "host:port" per line, '#' starts a comment.
std::vector<std::string> read_hostlist(const std::filesystem::path& path);

/// Establishes the full mesh of connections and returns this rank's endpoint.
///
/// Wire format per connection direction: the 8-byte magic "PMXWIRE1" followed
/// by frames [u64 length][u32 source][u32 dest][u32 tag][payload], all
/// little-endian. Bit 31 of the tag marks a frame that is continued by the
/// next one. The first frame from the connecting side is a hello whose source
/// field identifies the peer.
std::unique_ptr<Backend> make_tcp_backend(const TcpConfig& config);

}  // namespace pmx
