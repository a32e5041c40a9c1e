#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ocunet {

/// 8-bit interleaved raster, 1 (gray) or 3 (RGB) channels.
struct ImageU8 {
  int h = 0;
  int w = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;  // row-major, h * w * channels

  std::uint8_t at(int i, int j, int c) const {
    return pixels[(static_cast<std::size_t>(i) * w + j) * channels + c];
  }
};

/// Decodes a PNG to 8-bit gray or RGB (palette expanded, 16-bit narrowed,
/// alpha stripped). Throws with the path on failure.
ImageU8 read_png(const std::string& path);

/// Writes an 8-bit gray or RGB PNG.
void write_png(const std::string& path, const ImageU8& image);

}  // namespace ocunet
