#pragma once

// Little-endian helpers shared by the dataset and checkpoint containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include <Eigen/Dense>

#include "gnpe/errors.hpp"

namespace gnpe::detail {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename T>
void write_pod(std::ostream& os, T value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw IoError(std::string(what) + ": truncated file");
    return value;
}

template <typename Derived>
void write_block(std::ostream& os, const Eigen::DenseBase<Derived>& m) {
    const typename Derived::PlainObject plain = m;
    os.write(reinterpret_cast<const char*>(plain.data()),
             static_cast<std::streamsize>(plain.size() * sizeof(double)));
}

template <typename M>
void read_block(std::istream& is, M& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
    m.resize(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) throw IoError(std::string(what) + ": truncated data block");
}

/// Writes magic, version and the JSON header.
inline void write_preamble(std::ostream& os, const char (&magic)[8], std::uint32_t version,
                           const std::string& header) {
    os.write(magic, 8);
    write_pod<std::uint32_t>(os, version);
    write_pod<std::uint64_t>(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
}

/// Validates magic and version; returns the JSON header text.
inline std::string read_preamble(std::istream& is, const char (&magic)[8], std::uint32_t version,
                                 const char* what) {
    char found[8];
    is.read(found, sizeof(found));
    if (!is || std::memcmp(found, magic, sizeof(found)) != 0)
        throw IoError(std::string("not a ") + what + " file");
    const auto v = read_pod<std::uint32_t>(is, what);
    if (v != version)
        throw IoError(std::string("unsupported ") + what + " version " + std::to_string(v));
    const auto len = read_pod<std::uint64_t>(is, what);
    if (len > (std::uint64_t{1} << 30)) throw IoError(std::string(what) + ": header too large");
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    if (!is) throw IoError(std::string(what) + ": truncated header");
    return text;
}

}  // namespace gnpe::detail
