#pragma once

#include <filesystem>
#include <vector>

namespace anglereloc {

// Row-major intensity image with values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c = 1, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c = 0) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  bool SameShape(const Image& other) const {
    return width == other.width && height == other.height &&
           channels == other.channels;
  }
};

// Binary PGM (1 channel) or PPM (3 channels), 16-bit samples. Values are
// quantized to k / 65535 on write and scaled back to [0, 1] on read.
void WritePnm(const std::filesystem::path& path, const Image& image);
Image ReadPnm(const std::filesystem::path& path);

// Rounds every value to the nearest k / 65535, the exact set of values a
// PNM round trip preserves.
void QuantizeTo16Bit(Image& image);

}  // namespace anglereloc
