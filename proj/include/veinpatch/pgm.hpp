#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "veinpatch/imaging.hpp"

namespace veinpatch {

/// Binary 8-bit PGM (P5, maxval 255).
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);

GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace veinpatch
