#pragma once

// 8-bit image container (CHW planes) and PNG read/write.

#include <cstdint>
#include <string>
#include <vector>

namespace flowsr {

struct Image8 {
  int channels = 0;  // 1 (gray) or 3 (rgb)
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // CHW planes

  std::size_t numel() const { return pixels.size(); }
  std::uint8_t at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::uint8_t& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  static Image8 make(int channels, int height, int width) {
    Image8 im;
    im.channels = channels;
    im.height = height;
    im.width = width;
    im.pixels.assign(static_cast<std::size_t>(channels) * height * width, 0);
    return im;
  }
};

// Gray and palette files load as 1 channel, everything else as RGB (alpha
// stripped). 16-bit inputs are reduced to 8.
Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& im);

}  // namespace flowsr
