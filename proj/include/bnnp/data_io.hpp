#pragma once

#include <string>
#include <string_view>

#include "bnnp/datasets.hpp"

namespace bnnp {

// BNNDATA container: "BNNDATA\0", u16 version, u32 metadata length, JSON
// metadata, then little-endian f32 features and targets (row-major), then
// masks and flags as row-major packed bits, least significant bit first.
inline constexpr std::uint16_t kDataFormatVersion = 1;

std::string encode_dataset(const Dataset& d);
Dataset decode_dataset(std::string_view bytes);

void save_dataset(const std::string& path, const Dataset& d);
Dataset load_dataset(const std::string& path);

// Whole-file helpers shared by the binary formats.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace bnnp
