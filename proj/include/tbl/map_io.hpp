#pragma once

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "tbl/error.hpp"
#include "tbl/file_io.hpp"
#include "tbl/terrain_map.hpp"

namespace tbl {

// Map file layout, little endian:
//   char[8]  magic "TBLMAP\0\0"
//   u32      version
//   f64      spacing
//   u8       closed
//   u32      node count, then per node:    i64 id, f64 lat, f64 lon
//   u32      segment count, then per segment:
//            i64 id, i64 from, i64 to, f64 length, f64 anchor,
//            u32 cell count, then per cell: f64 value, u32 weight
//   u32      CRC-32 of every preceding byte

inline constexpr std::uint32_t map_format_version = 1;
inline constexpr char map_magic[8] = {'T', 'B', 'L', 'M', 'A', 'P', '\0', '\0'};

static_assert(std::endian::native == std::endian::little, "map I/O assumes a little-endian host");

namespace detail {

class ByteWriter {
public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }
    void put_bytes(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
    std::vector<char>& bytes() { return bytes_; }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    ByteReader(const char* data, std::size_t size) : data_(data), size_(size) {}
    template <typename T>
    T get() {
        require(pos_ + sizeof(T) <= size_, ErrorKind::format, "map file ends prematurely");
        T v;
        std::memcpy(&v, data_ + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::size_t remaining() const { return size_ - pos_; }

private:
    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const char* data, std::size_t size) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    while (size > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::string serialize_map(const TerrainMap& map) {
    detail::ByteWriter w;
    w.put_bytes(map_magic, sizeof(map_magic));
    w.put<std::uint32_t>(map_format_version);
    w.put<double>(map.spacing());
    w.put<std::uint8_t>(map.closed() ? 1 : 0);
    const auto& g = map.graph();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(g.nodes.size()));
    for (const auto& n : g.nodes) {
        w.put<std::int64_t>(n.id);
        w.put<double>(n.latitude);
        w.put<double>(n.longitude);
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(g.segments.size()));
    for (std::size_t i = 0; i < g.segments.size(); ++i) {
        const auto& s = g.segments[i];
        const auto& prof = map.segments()[i];
        w.put<std::int64_t>(s.id);
        w.put<std::int64_t>(s.from);
        w.put<std::int64_t>(s.to);
        w.put<double>(s.length);
        w.put<double>(prof.anchor);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(prof.cells.size()));
        for (const auto& c : prof.cells) {
            w.put<double>(c.value);
            w.put<std::uint32_t>(c.weight);
        }
    }
    const auto crc = detail::crc32_of(w.bytes().data(), w.bytes().size());
    w.put<std::uint32_t>(crc);
    return std::string(w.bytes().begin(), w.bytes().end());
}

inline TerrainMap deserialize_map(const std::string& bytes) {
    require(bytes.size() >= sizeof(map_magic) + 4 + 4, ErrorKind::format, "map file is too short");
    require(std::memcmp(bytes.data(), map_magic, sizeof(map_magic)) == 0, ErrorKind::format,
            "not a terrain map file (bad magic)");
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + body, 4);
    require(detail::crc32_of(bytes.data(), body) == stored, ErrorKind::checksum, "map file checksum mismatch");

    detail::ByteReader r(bytes.data() + sizeof(map_magic), body - sizeof(map_magic));
    const auto version = r.get<std::uint32_t>();
    require(version == map_format_version, ErrorKind::version,
            "unsupported map file version " + std::to_string(version));
    const double spacing = r.get<double>();
    GraphMap g;
    g.closed = r.get<std::uint8_t>() != 0;
    const auto nodes = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < nodes; ++i) {
        MapNode n;
        n.id = r.get<std::int64_t>();
        n.latitude = r.get<double>();
        n.longitude = r.get<double>();
        g.nodes.push_back(n);
    }
    const auto segs = r.get<std::uint32_t>();
    std::vector<SegmentProfile> profiles;
    for (std::uint32_t i = 0; i < segs; ++i) {
        MapSegment s;
        s.id = r.get<std::int64_t>();
        s.from = r.get<std::int64_t>();
        s.to = r.get<std::int64_t>();
        s.length = r.get<double>();
        g.segments.push_back(s);
        SegmentProfile p;
        p.anchor = r.get<double>();
        const auto cells = r.get<std::uint32_t>();
        require(r.remaining() >= std::size_t(cells) * 12, ErrorKind::format, "map file ends prematurely");
        p.cells.resize(cells);
        for (auto& c : p.cells) {
            c.value = r.get<double>();
            c.weight = r.get<std::uint32_t>();
        }
        profiles.push_back(std::move(p));
    }
    require(r.remaining() == 0, ErrorKind::format, "trailing bytes in map file");
    TerrainMap map(std::move(g), spacing);
    require(profiles.size() == map.segments().size(), ErrorKind::format, "segment table mismatch");
    map.segments() = std::move(profiles);
    map.reindex();
    return map;
}

inline void save_map(const TerrainMap& map, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_map(map));
}

inline TerrainMap load_map(const std::filesystem::path& path) {
    return deserialize_map(read_file(path));
}

}  // namespace tbl
