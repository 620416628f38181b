// Bit-exact file formats and hashing.
//
//   F32R raster   magic "F32R", u32le width, u32le height, u32le reserved=0,
//                 then width*height little-endian float32, row-major;
//                 probability/intensity values must lie in [0,1]
//   PGM mask      binary P5, maxval 255; bytes 0/255 (binary) or 0/128/255
//                 (tri-state)
//   graph text    "nodes N edges E", N lines "row col", E lines "a b length"
//   model         flat little-endian float64 parameter array plus a JSON
//                 sidecar (<path>.json) describing the tensor shapes
//
// All writes are atomic (temp file + rename). Content hashes are FNV-1a 64.
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "roadtopo/metrics.hpp"
#include "roadtopo/model.hpp"
#include "roadtopo/raster.hpp"

namespace roadtopo {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = kFnvOffset;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= kFnvPrime;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed on " + path.string());
    return bytes;
}

// Temp file in the destination directory, then rename: readers never observe
// a half-written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed on " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline std::uint64_t hash_file(const std::filesystem::path& path) {
    return fnv1a64(read_file(path));
}

namespace detail {

inline void append_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t read_u32le(std::string_view bytes, std::size_t offset) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 3])) << 24;
}

inline void append_u64le(std::string& out, std::uint64_t v) {
    append_u32le(out, static_cast<std::uint32_t>(v & 0xffffffffu));
    append_u32le(out, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint64_t read_u64le(std::string_view bytes, std::size_t offset) {
    return static_cast<std::uint64_t>(read_u32le(bytes, offset)) |
           static_cast<std::uint64_t>(read_u32le(bytes, offset + 4)) << 32;
}

}  // namespace detail

inline constexpr std::string_view kRasterMagic = "F32R";

inline std::string raster_to_bytes(const ProbMap& map) {
    require_valid(map.dims);
    std::string out;
    out.reserve(16 + map.values.size() * 4);
    out.append(kRasterMagic);
    detail::append_u32le(out, static_cast<std::uint32_t>(map.dims.width));
    detail::append_u32le(out, static_cast<std::uint32_t>(map.dims.height));
    detail::append_u32le(out, 0);
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        const double v = map.values[i];
        if (!(v >= 0.0 && v <= 1.0)) {
            throw UsageError("raster value out of [0,1] at pixel " + std::to_string(i) + ": " +
                             std::to_string(v));
        }
        detail::append_u32le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

inline ProbMap raster_from_bytes(std::string_view bytes, const std::string& origin) {
    if (bytes.size() < 16) {
        throw FormatError(origin + ": truncated header, " + std::to_string(bytes.size()) +
                          " bytes");
    }
    if (bytes.substr(0, 4) != kRasterMagic) {
        throw FormatError(origin + ": bad magic \"" + std::string(bytes.substr(0, 4)) +
                          "\" at offset 0");
    }
    const std::uint32_t width = detail::read_u32le(bytes, 4);
    const std::uint32_t height = detail::read_u32le(bytes, 8);
    const std::uint32_t reserved = detail::read_u32le(bytes, 12);
    if (reserved != 0) {
        throw FormatError(origin + ": reserved field must be 0, got " + std::to_string(reserved) +
                          " at offset 12");
    }
    if (width == 0 || height == 0 || width > 1u << 20 || height > 1u << 20) {
        throw FormatError(origin + ": implausible dimensions " + std::to_string(width) + "x" +
                          std::to_string(height));
    }
    const std::size_t expected = 16 + 4ull * width * height;
    if (bytes.size() != expected) {
        throw FormatError(origin + ": payload length " + std::to_string(bytes.size()) +
                          ", expected " + std::to_string(expected));
    }
    ProbMap map = ProbMap::zeros({static_cast<int>(height), static_cast<int>(width)});
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        const std::size_t off = 16 + 4 * i;
        const float f = std::bit_cast<float>(detail::read_u32le(bytes, off));
        if (!(f >= 0.0f && f <= 1.0f)) {
            throw FormatError(origin + ": value " + std::to_string(f) + " out of [0,1] at offset " +
                              std::to_string(off));
        }
        map.values[i] = static_cast<double>(f);
    }
    return map;
}

inline void write_raster(const std::filesystem::path& path, const ProbMap& map) {
    write_file_atomic(path, raster_to_bytes(map));
}

inline ProbMap read_raster(const std::filesystem::path& path) {
    return raster_from_bytes(read_file(path), path.string());
}

namespace detail {

inline std::string pgm_header(const GridDims& dims) {
    return "P5\n" + std::to_string(dims.width) + " " + std::to_string(dims.height) + "\n255\n";
}

// Parses the P5 header (whitespace and # comments as PGM allows) and
// returns dims plus the offset of the first raster byte.
inline std::pair<GridDims, std::size_t> parse_pgm_header(std::string_view bytes,
                                                         const std::string& origin) {
    if (bytes.size() < 2 || bytes.substr(0, 2) != "P5") {
        throw FormatError(origin + ": not a binary PGM (bad magic at offset 0)");
    }
    std::size_t pos = 2;
    auto next_int = [&]() -> long {
        while (pos < bytes.size()) {
            const char c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') {
            throw FormatError(origin + ": malformed PGM header near offset " + std::to_string(pos));
        }
        long v = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
        }
        return v;
    };
    const long width = next_int();
    const long height = next_int();
    const long maxval = next_int();
    if (maxval != 255) {
        throw FormatError(origin + ": PGM maxval must be 255, got " + std::to_string(maxval));
    }
    if (width < 1 || height < 1) {
        throw FormatError(origin + ": bad PGM dimensions " + std::to_string(width) + "x" +
                          std::to_string(height));
    }
    if (pos >= bytes.size()) throw FormatError(origin + ": PGM header not terminated");
    ++pos;  // exactly one whitespace byte separates header and raster
    const std::size_t expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() - pos != expected) {
        throw FormatError(origin + ": PGM payload holds " + std::to_string(bytes.size() - pos) +
                          " bytes, expected " + std::to_string(expected));
    }
    return {GridDims{static_cast<int>(height), static_cast<int>(width)}, pos};
}

}  // namespace detail

inline void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
    require_valid(mask.dims);
    std::string out = detail::pgm_header(mask.dims);
    for (std::uint8_t v : mask.values) out.push_back(v ? static_cast<char>(255) : 0);
    write_file_atomic(path, out);
}

inline BinaryMask read_mask(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    const auto [dims, start] = detail::parse_pgm_header(bytes, path.string());
    BinaryMask mask = BinaryMask::zeros(dims);
    for (std::size_t i = 0; i < mask.values.size(); ++i) {
        const unsigned char b = static_cast<unsigned char>(bytes[start + i]);
        if (b == 0) {
            mask.values[i] = 0;
        } else if (b == 255) {
            mask.values[i] = 1;
        } else {
            throw FormatError(path.string() + ": illegal mask byte " + std::to_string(b) +
                              " at offset " + std::to_string(start + i));
        }
    }
    return mask;
}

inline void write_tristate(const std::filesystem::path& path, const TriStateMask& mask) {
    require_valid(mask.dims);
    std::string out = detail::pgm_header(mask.dims);
    for (TriState v : mask.values) {
        out.push_back(v == TriState::Road ? static_cast<char>(255)
                                          : v == TriState::NotSelected ? static_cast<char>(128)
                                                                       : 0);
    }
    write_file_atomic(path, out);
}

inline TriStateMask read_tristate(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    const auto [dims, start] = detail::parse_pgm_header(bytes, path.string());
    TriStateMask mask = TriStateMask::filled(dims, TriState::Background);
    for (std::size_t i = 0; i < mask.values.size(); ++i) {
        const unsigned char b = static_cast<unsigned char>(bytes[start + i]);
        if (b == 0) {
            mask.values[i] = TriState::Background;
        } else if (b == 255) {
            mask.values[i] = TriState::Road;
        } else if (b == 128) {
            mask.values[i] = TriState::NotSelected;
        } else {
            throw FormatError(path.string() + ": illegal tri-state byte " + std::to_string(b) +
                              " at offset " + std::to_string(start + i));
        }
    }
    return mask;
}

inline std::string graph_to_text(const RoadGraph& g) {
    std::string out = "nodes " + std::to_string(g.nodes.size()) + " edges " +
                      std::to_string(g.edges.size()) + "\n";
    for (const Pixel& p : g.nodes) {
        out += std::to_string(p.row) + " " + std::to_string(p.col) + "\n";
    }
    char buf[64];
    for (const GraphEdge& e : g.edges) {
        std::snprintf(buf, sizeof buf, "%d %d %.17g\n", e.a, e.b, e.length);
        out += buf;
    }
    return out;
}

inline RoadGraph graph_from_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string kw_nodes, kw_edges;
    std::size_t n_nodes = 0, n_edges = 0;
    if (!(in >> kw_nodes >> n_nodes >> kw_edges >> n_edges) || kw_nodes != "nodes" ||
        kw_edges != "edges") {
        throw FormatError(origin + ": graph header must be \"nodes N edges E\"");
    }
    RoadGraph g;
    g.nodes.resize(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        if (!(in >> g.nodes[i].row >> g.nodes[i].col)) {
            throw FormatError(origin + ": truncated node list at entry " + std::to_string(i));
        }
    }
    g.edges.resize(n_edges);
    for (std::size_t i = 0; i < n_edges; ++i) {
        GraphEdge& e = g.edges[i];
        if (!(in >> e.a >> e.b >> e.length)) {
            throw FormatError(origin + ": truncated edge list at entry " + std::to_string(i));
        }
        if (e.a < 0 || e.b < 0 || static_cast<std::size_t>(e.a) >= n_nodes ||
            static_cast<std::size_t>(e.b) >= n_nodes) {
            throw FormatError(origin + ": edge " + std::to_string(i) + " endpoint out of range");
        }
        if (!(e.length > 0.0) || !std::isfinite(e.length)) {
            throw FormatError(origin + ": edge " + std::to_string(i) +
                              " length must be finite and positive");
        }
    }
    return g;
}

inline void write_graph(const std::filesystem::path& path, const RoadGraph& g) {
    require_valid(g);
    write_file_atomic(path, graph_to_text(g));
}

inline RoadGraph read_graph(const std::filesystem::path& path) {
    return graph_from_text(read_file(path), path.string());
}

// Model bundle: <path> holds the flat float64 parameter array (little
// endian, flattening order of to_flat); <path>.json describes it.
inline void write_model(const std::filesystem::path& path, const ToyModel& model) {
    const std::vector<double> flat = to_flat(model);
    std::string bin;
    bin.reserve(flat.size() * 8);
    for (double v : flat) detail::append_u64le(bin, std::bit_cast<std::uint64_t>(v));
    write_file_atomic(path, bin);

    nlohmann::json side;
    side["format"] = "roadtopo-model";
    side["dtype"] = "float64-le";
    side["count"] = flat.size();
    side["tensors"] = nlohmann::json::array({
        nlohmann::json{{"name", "enc_w"}, {"shape", {kEncoderDim, kFeatureDim}}},
        nlohmann::json{{"name", "enc_b"}, {"shape", {kEncoderDim}}},
        nlohmann::json{{"name", "road_w"}, {"shape", {kEncoderDim}}},
        nlohmann::json{{"name", "road_b"}, {"shape", {1}}},
        nlohmann::json{{"name", "skel_w"}, {"shape", {kEncoderDim}}},
        nlohmann::json{{"name", "skel_b"}, {"shape", {1}}},
    });
    write_file_atomic(path.string() + ".json", side.dump(2) + "\n");
}

inline ToyModel read_model(const std::filesystem::path& path) {
    const std::filesystem::path side_path = path.string() + ".json";
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(read_file(side_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(side_path.string() + ": invalid JSON sidecar: " + e.what());
    }
    if (side.value("format", "") != "roadtopo-model" ||
        side.value("count", std::size_t{0}) != kModelParamCount) {
        throw FormatError(side_path.string() + ": sidecar does not describe a " +
                          std::to_string(kModelParamCount) + "-parameter model");
    }
    const std::string bin = read_file(path);
    if (bin.size() != kModelParamCount * 8) {
        throw FormatError(path.string() + ": parameter array holds " +
                          std::to_string(bin.size()) + " bytes, expected " +
                          std::to_string(kModelParamCount * 8));
    }
    std::vector<double> flat(kModelParamCount);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        flat[i] = std::bit_cast<double>(detail::read_u64le(bin, i * 8));
        if (!std::isfinite(flat[i])) {
            throw FormatError(path.string() + ": non-finite parameter at index " +
                              std::to_string(i));
        }
    }
    return model_from_flat(flat);
}

}  // namespace roadtopo
