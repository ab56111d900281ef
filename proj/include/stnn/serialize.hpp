#pragma once

// Binary container: magic, little-endian u32 header length, JSON header,
// then named f64 arrays packed back to back. The header records per-array
// offsets and a CRC32 of the whole payload.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace stnn {

static_assert(std::endian::native == std::endian::little,
              "serialized formats are little-endian; big-endian hosts are unsupported");

inline std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = seed ^ 0xFFFFFFFFu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

inline std::uint32_t crc32(const std::vector<double>& v, std::uint32_t seed = 0) {
    return crc32(v.data(), v.size() * sizeof(double), seed);
}

struct NamedArray {
    std::string name;
    const std::vector<double>* data;
};

inline void write_container(const std::string& path, const char magic[4], nlohmann::json header,
                            const std::vector<NamedArray>& arrays) {
    std::vector<nlohmann::json> manifest;
    std::uint64_t offset = 0;
    std::uint32_t crc = 0;
    for (const auto& a : arrays) {
        manifest.push_back({{"name", a.name}, {"offset", offset}, {"count", a.data->size()}});
        crc = crc32(*a.data, crc);
        offset += a.data->size() * sizeof(double);
    }
    header["arrays"] = manifest;
    header["payload_bytes"] = offset;
    header["payload_crc32"] = crc;

    const std::string htext = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_container: cannot open " + path);
    out.write(magic, 4);
    const std::uint32_t hlen = std::uint32_t(htext.size());
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(htext.data(), htext.size());
    for (const auto& a : arrays)
        out.write(reinterpret_cast<const char*>(a.data->data()), a.data->size() * sizeof(double));
    if (!out) throw std::runtime_error("write_container: write failed for " + path);
}

struct Container {
    nlohmann::json header;
    std::vector<double> payload;  // all arrays back to back

    std::vector<double> array(const std::string& name) const {
        for (const auto& a : header.at("arrays")) {
            if (a.at("name") == name) {
                const std::uint64_t off = a.at("offset").get<std::uint64_t>() / sizeof(double);
                const std::uint64_t cnt = a.at("count").get<std::uint64_t>();
                return {payload.begin() + off, payload.begin() + off + cnt};
            }
        }
        throw std::runtime_error("container: missing array " + name);
    }
};

inline Container read_container(const std::string& path, const char magic[4]) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_container: cannot open " + path);
    char m[4];
    in.read(m, 4);
    if (!in || std::memcmp(m, magic, 4) != 0)
        throw std::runtime_error("read_container: bad magic in " + path);
    std::uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 4);
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (!in) throw std::runtime_error("read_container: truncated header in " + path);

    Container c;
    c.header = nlohmann::json::parse(htext);
    const std::uint64_t bytes = c.header.at("payload_bytes").get<std::uint64_t>();
    c.payload.resize(bytes / sizeof(double));
    in.read(reinterpret_cast<char*>(c.payload.data()), bytes);
    if (!in || std::uint64_t(in.gcount()) != bytes)
        throw std::runtime_error("read_container: truncated payload in " + path);
    const std::uint32_t crc = crc32(c.payload);
    if (crc != c.header.at("payload_crc32").get<std::uint32_t>())
        throw std::runtime_error("read_container: checksum mismatch in " + path);
    return c;
}

}  // namespace stnn
