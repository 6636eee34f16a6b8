#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "params.hpp"

namespace fedjscc {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Versioned container of named flat arrays with a per-entry manifest
// {name, shape, block u|v}. Little-endian, 64-bit floats throughout.
namespace ckpt {

constexpr char kMagic[4] = {'F', 'J', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

namespace detail {

template <class T>
void put(std::ostream& os, T v) {
    // written on a little-endian host; format is defined as little-endian
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw CheckpointError("checkpoint: truncated file");
    return v;
}

inline void write_block(std::ostream& os, const ParamBlock& b, char tag) {
    for (const auto& [name, t] : b) {
        put<std::uint32_t>(os, (std::uint32_t)name.size());
        os.write(name.data(), (std::streamsize)name.size());
        put<std::uint8_t>(os, (std::uint8_t)tag);
        put<std::uint32_t>(os, (std::uint32_t)t.rank());
        for (auto d : t.shape) put<std::uint64_t>(os, (std::uint64_t)d);
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 (std::streamsize)(t.data.size() * sizeof(double)));
    }
}

}  // namespace detail

inline void save(const std::string& path, const ParamSet& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("checkpoint: cannot open " + path);
    os.write(kMagic, 4);
    detail::put<std::uint32_t>(os, kVersion);
    detail::put<std::uint32_t>(os, (std::uint32_t)(params.u.size() + params.v.size()));
    detail::write_block(os, params.u, 'u');
    detail::write_block(os, params.v, 'v');
    if (!os) throw CheckpointError("checkpoint: write failed for " + path);
}

inline ParamSet load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("checkpoint: bad magic in " + path);
    auto version = detail::get<std::uint32_t>(is);
    if (version != kVersion)
        throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    auto count = detail::get<std::uint32_t>(is);
    ParamSet out;
    for (std::uint32_t e = 0; e < count; ++e) {
        auto name_len = detail::get<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        char tag = (char)detail::get<std::uint8_t>(is);
        auto ndim = detail::get<std::uint32_t>(is);
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = (std::size_t)detail::get<std::uint64_t>(is);
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                (std::streamsize)(t.data.size() * sizeof(double)));
        if (!is) throw CheckpointError("checkpoint: truncated file");
        if (tag == 'u')
            out.u.emplace(std::move(name), std::move(t));
        else if (tag == 'v')
            out.v.emplace(std::move(name), std::move(t));
        else
            throw CheckpointError("checkpoint: unknown block tag");
    }
    return out;
}

}  // namespace ckpt
}  // namespace fedjscc
