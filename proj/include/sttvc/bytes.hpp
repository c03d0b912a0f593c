#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sttvc {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

class ByteWriter {
public:
    template <typename T>
    void put(T v)
    {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void bytes(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    // u32 length then payload.
    void blob(std::span<const std::uint8_t> b)
    {
        put(static_cast<std::uint32_t>(b.size()));
        bytes(b);
    }
    std::vector<std::uint8_t>& buffer() { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class TruncatedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> b) : buf_(b) {}
    template <typename T>
    T get()
    {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::span<const std::uint8_t> bytes(std::size_t n)
    {
        need(n);
        auto s = buf_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::string string(std::size_t n)
    {
        auto s = bytes(n);
        return {s.begin(), s.end()};
    }
    std::span<const std::uint8_t> blob() { return bytes(get<std::uint32_t>()); }
    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    void need(std::size_t n) const
    {
        if (buf_.size() - pos_ < n)
            throw TruncatedError("truncated data at offset " + std::to_string(pos_) + " (need " + std::to_string(n) +
                                 " bytes, have " + std::to_string(buf_.size() - pos_) + ")");
    }
    std::span<const std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace sttvc
