#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "pmx/error.hpp"

namespace pmx {

using Bytes = std::vector<std::byte>;

namespace detail {

template <typename T>
T to_little(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        return v;
    } else {
        unsigned char raw[sizeof(T)];
        std::memcpy(raw, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
        std::memcpy(&v, raw, sizeof(T));
        return v;
    }
}

}  // namespace detail

/// Appends little-endian encoded values to a byte buffer.
class ByteWriter {
public:
    ByteWriter() = default;
    explicit ByteWriter(Bytes& out) : out_(&out) {}

    template <typename T>
    void put(T v) {
        static_assert(std::is_arithmetic_v<T> || std::is_enum_v<T>);
        v = detail::to_little(v);
        const auto* p = reinterpret_cast<const std::byte*>(&v);
        buf().insert(buf().end(), p, p + sizeof(T));
    }

    template <typename T>
    void put_span(std::span<const T> values) {
        if constexpr (std::endian::native == std::endian::little) {
            const auto* p = reinterpret_cast<const std::byte*>(values.data());
            buf().insert(buf().end(), p, p + values.size_bytes());
        } else {
            for (T v : values) put(v);
        }
    }

    void put_bytes(std::span<const std::byte> raw) { buf().insert(buf().end(), raw.begin(), raw.end()); }

    void put_string(std::string_view s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        const auto* p = reinterpret_cast<const std::byte*>(s.data());
        buf().insert(buf().end(), p, p + s.size());
    }

    std::size_t size() const { return out_ ? out_->size() : own_.size(); }
    Bytes take() { return std::move(own_); }

private:
    Bytes& buf() { return out_ ? *out_ : own_; }
    Bytes* out_ = nullptr;
    Bytes own_;
};

/// Bounds-checked little-endian decoder. Reading past the end throws
/// CorruptFileError, since every caller decodes untrusted bytes.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::byte> data) : data_(data) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return detail::to_little(v);
    }

    template <typename T>
    void get_into(std::span<T> out) {
        need(out.size_bytes());
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
            pos_ += out.size_bytes();
        } else {
            for (auto& v : out) v = get<T>();
        }
    }

    std::span<const std::byte> get_bytes(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::string get_string() {
        auto n = get<std::uint32_t>();
        auto raw = get_bytes(n);
        return std::string(reinterpret_cast<const char*>(raw.data()), raw.size());
    }

    bool done() const { return pos_ == data_.size(); }
    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw CorruptFileError("truncated byte stream");
    }

    std::span<const std::byte> data_;
    std::size_t pos_ = 0;
};

inline Bytes to_bytes(std::string_view s) {
    const auto* p = reinterpret_cast<const std::byte*>(s.data());
    return Bytes(p, p + s.size());
}

inline std::string to_string(std::span<const std::byte> b) {
    return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

}  // namespace pmx
