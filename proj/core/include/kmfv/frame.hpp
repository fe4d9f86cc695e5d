#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace kmfv {

enum class ColorSpace { RGB, YUV420Source };

// One image: 3 planes of real values in [0, 1], channel-planar.
struct Frame {
  int width = 0;
  int height = 0;
  ColorSpace colorspace = ColorSpace::RGB;
  std::vector<float> data; // 3 * height * width, plane-major

  Frame() = default;
  Frame(int w, int h, ColorSpace cs = ColorSpace::RGB)
      : width(w), height(h), colorspace(cs),
        data(static_cast<std::size_t>(3) * w * h, 0.0f) {}

  std::size_t plane_size() const {
    return static_cast<std::size_t>(width) * height;
  }
  float* plane(int c) { return data.data() + c * plane_size(); }
  const float* plane(int c) const { return data.data() + c * plane_size(); }

  float& at(int c, int y, int x) {
    return data[c * plane_size() + static_cast<std::size_t>(y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[c * plane_size() + static_cast<std::size_t>(y) * width + x];
  }

  bool same_size(const Frame& o) const {
    return width == o.width && height == o.height;
  }
};

struct VideoSequence {
  std::vector<Frame> frames;
  double fps = 30.0;

  int width() const { return frames.empty() ? 0 : frames[0].width; }
  int height() const { return frames.empty() ? 0 : frames[0].height; }
  std::size_t size() const { return frames.size(); }
};

// Five consecutive frames cropped at identical coordinates.
struct TrainingTuple {
  std::array<Frame, 5> frames;
  int crop_x = 0;
  int crop_y = 0;
};

} // namespace kmfv
