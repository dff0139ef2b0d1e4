#pragma once

// Binary field dump: one JSON header line followed by row-major (i, j, k)
// 64-bit little-endian doubles.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "cpe/grid.hpp"

namespace cpe {

struct FieldDumpHeader {
    int nx = 0, ny = 0, nz = 0;
    int dim = 3;
    std::string name;
    double time = 0.0;
};

namespace detail {
inline std::uint64_t to_little(std::uint64_t u) {
    if constexpr (std::endian::native == std::endian::little) return u;
    else return __builtin_bswap64(u);
}
}  // namespace detail

template <int Dim>
void write_field(std::ostream& os, const ScalarField<Dim>& f, const std::string& name, double time) {
    const auto& g = f.grid();
    nlohmann::json h = {{"nx", g.nx}, {"ny", g.ny}, {"nz", g.nz}, {"dim", Dim}, {"name", name}, {"time", time}};
    os << h.dump() << '\n';
    for (double v : f.values()) {
        const std::uint64_t u = detail::to_little(std::bit_cast<std::uint64_t>(v));
        char bytes[8];
        std::memcpy(bytes, &u, 8);
        os.write(bytes, 8);
    }
    if (!os) throw Error("write_field: stream failure while writing " + name);
}

template <int Dim>
void write_field(const std::string& path, const ScalarField<Dim>& f, const std::string& name, double time) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("write_field: cannot open " + path);
    write_field(os, f, name, time);
}

inline FieldDumpHeader read_header(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw Error("read_field: missing header line");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("read_field: malformed header: ") + e.what());
    }
    FieldDumpHeader out;
    out.nx = h.at("nx").get<int>();
    out.ny = h.at("ny").get<int>();
    out.nz = h.at("nz").get<int>();
    out.dim = h.value("dim", 3);
    out.name = h.at("name").get<std::string>();
    out.time = h.at("time").get<double>();
    return out;
}

template <int Dim>
ScalarField<Dim> read_field(std::istream& is, FieldDumpHeader* header_out = nullptr) {
    const FieldDumpHeader h = read_header(is);
    if (h.dim != Dim) throw GridMismatch("read_field: dump has dim " + std::to_string(h.dim));
    ScalarField<Dim> f(GridSpec(h.nx, h.ny, h.nz));
    for (double& v : f.values()) {
        char bytes[8];
        if (!is.read(bytes, 8)) throw Error("read_field: truncated payload for " + h.name);
        std::uint64_t u;
        std::memcpy(&u, bytes, 8);
        v = std::bit_cast<double>(detail::to_little(u));
    }
    if (header_out) *header_out = h;
    return f;
}

template <int Dim>
ScalarField<Dim> read_field(const std::string& path, FieldDumpHeader* header_out = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("read_field: cannot open " + path);
    return read_field<Dim>(is, header_out);
}

}  // namespace cpe
