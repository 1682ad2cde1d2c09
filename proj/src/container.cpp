// SPDX-License-Identifier: Apache-2.0
#include "uws/container.hpp"

#include "uws/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <system_error>

namespace uws {

namespace {

using json = nlohmann::ordered_json;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get_le(const std::uint8_t* p) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
}

std::optional<Dtype> parse_dtype(const std::string& s) {
    if (s == "f32") return Dtype::f32;
    if (s == "f64") return Dtype::f64;
    return std::nullopt;
}

struct LayerEntry {
    std::string name;
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    Dtype dtype = Dtype::f64;
    std::uint64_t offset = 0;
    std::uint64_t nbytes = 0;
};

std::uint64_t require_uint(const json& entry, const char* key, std::uint64_t at) {
    const auto it = entry.find(key);
    if (it == entry.end() || !it->is_number_unsigned()) {
        throw ParseError(ParseErrorCode::invalid_manifest, at,
                         std::string("layer field '") + key + "' missing or not an unsigned integer");
    }
    return it->get<std::uint64_t>();
}

}  // namespace

const char* to_string(Dtype d) noexcept {
    return d == Dtype::f32 ? "f32" : "f64";
}

std::size_t dtype_size(Dtype d) noexcept {
    return d == Dtype::f32 ? 4 : 8;
}

const Layer* Container::find(const std::string& name) const {
    for (const auto& l : layers)
        if (l.name == name) return &l;
    return nullptr;
}

std::vector<std::uint8_t> encode_container(const Container& c) {
    json manifest;
    manifest["model_id"] = c.model_id;
    manifest["layers"] = json::array();
    std::uint64_t offset = 0;
    std::set<std::string> names;
    for (const auto& l : c.layers) {
        if (!names.insert(l.name).second) throw_invalid("duplicate layer name '" + l.name + "'");
        if (!l.values.allFinite()) throw_invalid("layer '" + l.name + "' has non-finite entries");
        const std::uint64_t nbytes =
            static_cast<std::uint64_t>(l.values.size()) * dtype_size(l.dtype);
        json entry;
        entry["name"] = l.name;
        entry["rows"] = static_cast<std::uint64_t>(l.values.rows());
        entry["cols"] = static_cast<std::uint64_t>(l.values.cols());
        entry["dtype"] = to_string(l.dtype);
        entry["offset"] = offset;
        entry["nbytes"] = nbytes;
        manifest["layers"].push_back(std::move(entry));
        offset += nbytes;
    }
    if (!c.meta.is_null()) manifest["meta"] = c.meta;

    const std::string text = manifest.dump();
    std::vector<std::uint8_t> out;
    out.reserve(kContainerHeaderSize + text.size() + offset);
    out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
    put_le<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& l : c.layers) {
        for (Eigen::Index i = 0; i < l.values.rows(); ++i) {
            for (Eigen::Index j = 0; j < l.values.cols(); ++j) {
                if (l.dtype == Dtype::f32) {
                    put_le<float>(out, static_cast<float>(l.values(i, j)));
                } else {
                    put_le<double>(out, l.values(i, j));
                }
            }
        }
    }
    return out;
}

Container decode_container(std::span<const std::uint8_t> bytes) {
    const std::uint64_t size = bytes.size();
    if (size < 4) throw ParseError(ParseErrorCode::truncated_header, size, "file shorter than the magic");
    if (std::memcmp(bytes.data(), kContainerMagic, 4) != 0) {
        throw ParseError(ParseErrorCode::bad_magic, 0, "expected \"UWS1\"");
    }
    if (size < kContainerHeaderSize) {
        throw ParseError(ParseErrorCode::truncated_header, size, "missing manifest length");
    }
    const auto manifest_len = get_le<std::uint64_t>(bytes.data() + 4);
    if (manifest_len > size - kContainerHeaderSize) {
        throw ParseError(ParseErrorCode::truncated_manifest, 4,
                         "manifest length " + std::to_string(manifest_len) + " exceeds the " +
                             std::to_string(size - kContainerHeaderSize) + " bytes after the header");
    }

    const auto* text_begin = reinterpret_cast<const char*>(bytes.data() + kContainerHeaderSize);
    json manifest;
    try {
        manifest = json::parse(text_begin, text_begin + manifest_len);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseErrorCode::invalid_manifest, kContainerHeaderSize + e.byte, e.what());
    }

    const std::uint64_t manifest_at = kContainerHeaderSize;
    if (!manifest.is_object()) throw ParseError(ParseErrorCode::invalid_manifest, manifest_at, "not an object");
    const auto id = manifest.find("model_id");
    if (id == manifest.end() || !id->is_string()) {
        throw ParseError(ParseErrorCode::invalid_manifest, manifest_at, "'model_id' missing or not a string");
    }
    const auto layers = manifest.find("layers");
    if (layers == manifest.end() || !layers->is_array()) {
        throw ParseError(ParseErrorCode::invalid_manifest, manifest_at, "'layers' missing or not an array");
    }

    const std::uint64_t payload_at = kContainerHeaderSize + manifest_len;
    const std::uint64_t payload_size = size - payload_at;

    std::vector<LayerEntry> entries;
    std::set<std::string> names;
    std::uint64_t expected_offset = 0;
    for (const auto& e : *layers) {
        if (!e.is_object()) throw ParseError(ParseErrorCode::invalid_manifest, manifest_at, "layer entry is not an object");
        LayerEntry entry;
        const auto name = e.find("name");
        if (name == e.end() || !name->is_string()) {
            throw ParseError(ParseErrorCode::invalid_manifest, manifest_at, "layer 'name' missing or not a string");
        }
        entry.name = name->get<std::string>();
        if (!names.insert(entry.name).second) {
            throw ParseError(ParseErrorCode::invalid_manifest, manifest_at, "duplicate layer name '" + entry.name + "'");
        }
        const auto dtype = e.find("dtype");
        if (dtype == e.end() || !dtype->is_string()) {
            throw ParseError(ParseErrorCode::invalid_manifest, manifest_at, "layer 'dtype' missing or not a string");
        }
        const auto parsed = parse_dtype(dtype->get<std::string>());
        if (!parsed) {
            throw ParseError(ParseErrorCode::unknown_dtype, manifest_at,
                             "unknown dtype '" + dtype->get<std::string>() + "' in layer '" + entry.name + "'");
        }
        entry.dtype = *parsed;
        entry.rows = require_uint(e, "rows", manifest_at);
        entry.cols = require_uint(e, "cols", manifest_at);
        entry.offset = require_uint(e, "offset", manifest_at);
        entry.nbytes = require_uint(e, "nbytes", manifest_at);
        if (entry.rows == 0 || entry.cols == 0) {
            throw ParseError(ParseErrorCode::invalid_manifest, manifest_at, "layer '" + entry.name + "' has a zero extent");
        }

        const std::uint64_t elem = dtype_size(entry.dtype);
        const bool overflow = entry.rows > std::numeric_limits<std::uint64_t>::max() / entry.cols ||
                              entry.rows * entry.cols > std::numeric_limits<std::uint64_t>::max() / elem;
        if (overflow || entry.rows * entry.cols * elem != entry.nbytes) {
            throw ParseError(ParseErrorCode::length_mismatch, payload_at + std::min(entry.offset, payload_size),
                             "layer '" + entry.name + "' nbytes does not equal rows * cols * dtype size");
        }
        if (entry.offset != expected_offset) {
            throw ParseError(ParseErrorCode::length_mismatch, payload_at + std::min(entry.offset, payload_size),
                             "layer '" + entry.name + "' offset " + std::to_string(entry.offset) +
                                 " is not contiguous (expected " + std::to_string(expected_offset) + ")");
        }
        if (entry.nbytes > payload_size - entry.offset) {
            throw ParseError(ParseErrorCode::truncated_payload, payload_at + payload_size,
                             "layer '" + entry.name + "' extends past the end of the payload");
        }
        expected_offset += entry.nbytes;
        entries.push_back(std::move(entry));
    }
    if (expected_offset != payload_size) {
        throw ParseError(ParseErrorCode::length_mismatch, payload_at + expected_offset,
                         std::to_string(payload_size - expected_offset) + " trailing payload bytes not described by the manifest");
    }

    Container c;
    c.model_id = id->get<std::string>();
    if (const auto meta = manifest.find("meta"); meta != manifest.end()) c.meta = *meta;
    for (const auto& entry : entries) {
        Layer layer{entry.name, Matrix(static_cast<Eigen::Index>(entry.rows), static_cast<Eigen::Index>(entry.cols)),
                    entry.dtype};
        const std::uint64_t elem = dtype_size(entry.dtype);
        std::uint64_t at = payload_at + entry.offset;
        for (Eigen::Index i = 0; i < layer.values.rows(); ++i) {
            for (Eigen::Index j = 0; j < layer.values.cols(); ++j, at += elem) {
                const double v = entry.dtype == Dtype::f32 ? static_cast<double>(get_le<float>(bytes.data() + at))
                                                           : get_le<double>(bytes.data() + at);
                if (!std::isfinite(v)) {
                    throw ParseError(ParseErrorCode::non_finite_value, at,
                                     "non-finite value in layer '" + entry.name + "'");
                }
                layer.values(i, j) = v;
            }
        }
        c.layers.push_back(std::move(layer));
    }
    return c;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::io, "cannot open '" + tmp.string() + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorKind::io, "short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::io, "cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Container read_container(const std::filesystem::path& path) {
    return decode_container(read_file_bytes(path));
}

void write_container(const std::filesystem::path& path, const Container& c) {
    write_file_atomic(path, encode_container(c));
}

}  // namespace uws
