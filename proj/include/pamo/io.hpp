#pragma once

#include "pamo/field.hpp"
#include "pamo/image.hpp"

#include <filesystem>
#include <string>

namespace pamo::io {

namespace fs = std::filesystem;

inline constexpr char kMagic[4] = {'P', 'A', 'M', 'O'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr float kFloMagic = 202021.25f;

// Field file (little-endian):
//   "PAMO" | u32 version | u64 count N
//   f32 centers[N][3] | f32 colors[N][3] | f32 radius[N] | f32 opacity[N] | i32 part_id[N]
void write_field(const fs::path& path, const PartField& field);
PartField read_field(const fs::path& path);

// Image file: same 16-byte header with count = W*H*C, then
//   u32 width | u32 height | u32 channels | u32 dtype (0 = f32, 1 = i32) | plane data
void write_image(const fs::path& path, const ImageF& image);
void write_image(const fs::path& path, const ImageI& image);
ImageF read_image_f(const fs::path& path);
ImageI read_image_i(const fs::path& path);

/// Middlebury .flo: f32 202021.25 | i32 W | i32 H | interleaved f32 (u, v).
void write_flo(const fs::path& path, const ImageF& flow);
ImageF read_flo(const fs::path& path);

/// Debug exports: 8-bit binary PGM for single-channel, PPM for RGB.
void write_pnm(const fs::path& path, const ImageF& image, float lo = 0.0f, float hi = 1.0f);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace pamo::io
