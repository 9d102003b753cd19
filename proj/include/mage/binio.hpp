#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace mage::binio {

// Little-endian raw record helpers for the container/checkpoint formats.
// Assumes a little-endian host.

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return static_cast<bool>(in);
}

inline void write_bytes(std::ostream& out, const void* data, std::size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline bool read_bytes(std::istream& in, void* data, std::size_t n) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n));
    return static_cast<bool>(in);
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    write_bytes(out, s.data(), s.size());
}

inline bool read_string(std::istream& in, std::string& s, std::uint32_t max_len = 1u << 24) {
    std::uint32_t n = 0;
    if (!read_pod(in, n) || n > max_len) return false;
    s.resize(n);
    return read_bytes(in, s.data(), n);
}

}  // namespace mage::binio
