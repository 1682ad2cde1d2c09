// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "uws/tensor.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace uws {

enum class Dtype { f32, f64 };

const char* to_string(Dtype d) noexcept;
std::size_t dtype_size(Dtype d) noexcept;

struct Layer {
    std::string name;
    Matrix values;
    Dtype dtype = Dtype::f64;
};

/// Named matrices in file order plus an optional free-form metadata object.
///
/// Byte layout:
///   [0, 4)        magic "UWS1"
///   [4, 12)       manifest length L, unsigned 64-bit little-endian
///   [12, 12 + L)  UTF-8 JSON manifest
///                 {"model_id", "layers": [{"name","rows","cols","dtype","offset","nbytes"}], "meta"?}
///   [12 + L, end) payload: row-major little-endian matrices, offsets relative
///                 to the payload start, concatenated in manifest order
struct Container {
    std::string model_id;
    std::vector<Layer> layers;
    nlohmann::ordered_json meta;  // null when absent

    const Layer* find(const std::string& name) const;
};

inline constexpr char kContainerMagic[4] = {'U', 'W', 'S', '1'};
inline constexpr std::size_t kContainerHeaderSize = 12;

std::vector<std::uint8_t> encode_container(const Container& c);

/// Throws ParseError naming the absolute byte offset of the first problem.
Container decode_container(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

Container read_container(const std::filesystem::path& path);
void write_container(const std::filesystem::path& path, const Container& c);

}  // namespace uws
