#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fpage {

// Face box in pixel coordinates: top-left and bottom-right corners.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool well_formed() const { return x_min < x_max && y_min < y_max; }
  bool intersects(int image_width, int image_height) const;
  // Reflect x-coordinates about the image width.
  BoundingBox mirrored(int image_width) const;
  bool operator==(const BoundingBox&) const = default;
};

// Decoded RGB image, row-major HWC, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  bool empty() const { return pixels.empty(); }
  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  Image mirrored() const;
  bool operator==(const Image&) const = default;
};

// Decodes any format OpenCV understands. Throws IoError for missing or undecodable files.
Image load_image(const std::filesystem::path& path);
// Encodes by extension (PNG is lossless and what the synthetic writer uses).
void save_image(const Image& image, const std::filesystem::path& path);

}  // namespace fpage
