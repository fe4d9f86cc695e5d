#include "kmfv/media_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "kmfv/errors.hpp"

namespace kmfv {

namespace {

// BT.709: Kr = 0.2126, Kb = 0.0722.
constexpr float kCr = 1.5748f;      // 2*(1-Kr)
constexpr float kCb = 1.8556f;      // 2*(1-Kb)
constexpr float kGCr = 0.4681243f;  // 2*Kr*(1-Kr)/Kg
constexpr float kGCb = 0.1873243f;  // 2*Kb*(1-Kb)/Kg

float clamp01(float x) { return x < 0.0f ? 0.0f : (x > 1.0f ? 1.0f : x); }

std::uint8_t to_byte(float x) {
  return static_cast<std::uint8_t>(std::lround(clamp01(x) * 255.0f));
}

} // namespace

std::array<float, 3> yuv_to_rgb_bt709(float y8, float u8, float v8) {
  const float y = (y8 - 16.0f) / 219.0f;
  const float u = (u8 - 128.0f) / 224.0f;
  const float v = (v8 - 128.0f) / 224.0f;
  return {clamp01(y + kCr * v), clamp01(y - kGCb * u - kGCr * v),
          clamp01(y + kCb * u)};
}

std::array<float, 3> rgb_to_yuv_bt709(float r, float g, float b) {
  const float y = 0.2126f * r + 0.7152f * g + 0.0722f * b;
  const float cb = (b - y) / kCb;
  const float cr = (r - y) / kCr;
  return {16.0f + 219.0f * y, 128.0f + 224.0f * cb, 128.0f + 224.0f * cr};
}

VideoSequence load_yuv420(const std::string& path, int width, int height,
                          int max_frames) {
  if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0) {
    throw DataError("load_yuv420: dimensions must be positive and even, got " +
                    std::to_string(width) + "x" + std::to_string(height));
  }
  if (max_frames <= 0) throw UsageError("load_yuv420: max_frames must be > 0");

  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_yuv420: cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0, std::ios::beg);

  const std::uint64_t frame_bytes =
      static_cast<std::uint64_t>(width) * height * 3 / 2;
  const std::uint64_t available = file_size / frame_bytes;
  if (available == 0) {
    throw DataError("load_yuv420: truncated file " + path + ": expected >= " +
                    std::to_string(frame_bytes) + " bytes per frame, have " +
                    std::to_string(file_size));
  }
  if (file_size % frame_bytes != 0) {
    throw DataError("load_yuv420: truncated file " + path + ": " +
                    std::to_string(file_size) + " bytes is not a multiple of " +
                    std::to_string(frame_bytes) + " (frame size for " +
                    std::to_string(width) + "x" + std::to_string(height) + ")");
  }

  const int n = static_cast<int>(
      std::min<std::uint64_t>(available, static_cast<std::uint64_t>(max_frames)));
  const int cw = width / 2, ch = height / 2;

  VideoSequence seq;
  seq.frames.reserve(n);
  std::vector<std::uint8_t> buf(frame_bytes);
  for (int f = 0; f < n; ++f) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(frame_bytes));
    if (!in) {
      throw DataError("load_yuv420: short read on frame " + std::to_string(f) +
                      " of " + path);
    }
    Frame frame(width, height, ColorSpace::RGB);
    const std::uint8_t* yp = buf.data();
    const std::uint8_t* up = yp + static_cast<std::size_t>(width) * height;
    const std::uint8_t* vp = up + static_cast<std::size_t>(cw) * ch;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const float yy = yp[static_cast<std::size_t>(y) * width + x];
        const float uu = up[static_cast<std::size_t>(y / 2) * cw + x / 2];
        const float vv = vp[static_cast<std::size_t>(y / 2) * cw + x / 2];
        const auto rgb = yuv_to_rgb_bt709(yy, uu, vv);
        frame.at(0, y, x) = rgb[0];
        frame.at(1, y, x) = rgb[1];
        frame.at(2, y, x) = rgb[2];
      }
    }
    check_frame_range(frame, "load_yuv420");
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

void save_yuv420(const VideoSequence& seq, const std::string& path) {
  if (seq.frames.empty()) throw UsageError("save_yuv420: empty sequence");
  const int w = seq.width(), h = seq.height();
  if (w % 2 != 0 || h % 2 != 0) {
    throw DataError("save_yuv420: dimensions must be even, got " +
                    std::to_string(w) + "x" + std::to_string(h));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_yuv420: cannot open " + path);
  const int cw = w / 2, ch = h / 2;
  std::vector<std::uint8_t> ybuf(static_cast<std::size_t>(w) * h);
  std::vector<std::uint8_t> ubuf(static_cast<std::size_t>(cw) * ch);
  std::vector<std::uint8_t> vbuf(ubuf.size());
  for (const Frame& f : seq.frames) {
    std::vector<float> uacc(ubuf.size(), 0.0f), vacc(vbuf.size(), 0.0f);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const auto yuv = rgb_to_yuv_bt709(f.at(0, y, x), f.at(1, y, x),
                                          f.at(2, y, x));
        ybuf[static_cast<std::size_t>(y) * w + x] =
            static_cast<std::uint8_t>(std::lround(std::clamp(yuv[0], 0.0f, 255.0f)));
        const std::size_t ci = static_cast<std::size_t>(y / 2) * cw + x / 2;
        uacc[ci] += yuv[1];
        vacc[ci] += yuv[2];
      }
    }
    for (std::size_t i = 0; i < uacc.size(); ++i) {
      ubuf[i] = static_cast<std::uint8_t>(
          std::lround(std::clamp(uacc[i] / 4.0f, 0.0f, 255.0f)));
      vbuf[i] = static_cast<std::uint8_t>(
          std::lround(std::clamp(vacc[i] / 4.0f, 0.0f, 255.0f)));
    }
    out.write(reinterpret_cast<const char*>(ybuf.data()), ybuf.size());
    out.write(reinterpret_cast<const char*>(ubuf.data()), ubuf.size());
    out.write(reinterpret_cast<const char*>(vbuf.data()), vbuf.size());
  }
}

Frame load_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw DataError("load_png: " + path + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    throw DataError("load_png: " + path + ": " + image.message);
  }
  Frame f(static_cast<int>(image.width), static_cast<int>(image.height));
  const std::size_t npx = f.plane_size();
  for (std::size_t i = 0; i < npx; ++i) {
    f.plane(0)[i] = buf[3 * i + 0] / 255.0f;
    f.plane(1)[i] = buf[3 * i + 1] / 255.0f;
    f.plane(2)[i] = buf[3 * i + 2] / 255.0f;
  }
  return f;
}

void save_png(const Frame& frame, const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.width);
  image.height = static_cast<png_uint_32>(frame.height);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(3) * frame.width *
                                frame.height);
  const std::size_t npx = frame.plane_size();
  for (std::size_t i = 0; i < npx; ++i) {
    buf[3 * i + 0] = to_byte(frame.plane(0)[i]);
    buf[3 * i + 1] = to_byte(frame.plane(1)[i]);
    buf[3 * i + 2] = to_byte(frame.plane(2)[i]);
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0,
                               nullptr)) {
    throw DataError("save_png: " + path + ": " + image.message);
  }
}

VideoSequence load_image_dir(const std::string& dir, int max_frames) {
  VideoSequence seq;
  for (int i = 0;; ++i) {
    if (max_frames >= 0 && i >= max_frames) break;
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05d.png", i);
    const std::filesystem::path p = std::filesystem::path(dir) / name;
    if (!std::filesystem::exists(p)) break;
    Frame f = load_png(p.string());
    if (!seq.frames.empty() && !f.same_size(seq.frames[0])) {
      throw DataError("load_image_dir: " + p.string() +
                      " does not match the sequence dimensions");
    }
    seq.frames.push_back(std::move(f));
  }
  if (seq.frames.empty()) {
    throw DataError("load_image_dir: no frame_00000.png under " + dir);
  }
  return seq;
}

void save_image_dir(const VideoSequence& seq, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05zu.png", i);
    save_png(seq.frames[i], (std::filesystem::path(dir) / name).string());
  }
}

double rgb_psnr(const Frame& a, const Frame& b) {
  if (!a.same_size(b)) {
    throw DataError("rgb_psnr: dimension mismatch " + std::to_string(a.width) +
                    "x" + std::to_string(a.height) + " vs " +
                    std::to_string(b.width) + "x" + std::to_string(b.height));
  }
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

TrainingTuple crop_tuple(const std::array<const Frame*, 5>& frames, int patch,
                         Rng& rng) {
  const Frame& first = *frames[0];
  if (patch > first.width || patch > first.height) {
    throw UsageError("crop_tuple: patch " + std::to_string(patch) +
                     " exceeds frame " + std::to_string(first.width) + "x" +
                     std::to_string(first.height));
  }
  for (const Frame* f : frames) {
    if (!f->same_size(first)) throw DataError("crop_tuple: mixed frame sizes");
  }
  TrainingTuple out;
  out.crop_x = static_cast<int>(rng.below(first.width - patch + 1));
  out.crop_y = static_cast<int>(rng.below(first.height - patch + 1));
  for (int i = 0; i < 5; ++i) {
    Frame c(patch, patch, first.colorspace);
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = 0; y < patch; ++y) {
        const float* src = frames[i]->plane(ch) +
                           static_cast<std::size_t>(out.crop_y + y) *
                               first.width +
                           out.crop_x;
        std::memcpy(c.plane(ch) + static_cast<std::size_t>(y) * patch, src,
                    sizeof(float) * patch);
      }
    }
    out.frames[i] = std::move(c);
  }
  return out;
}

namespace {

// symmetric reflection: ...cba|abc...xyz|zyx...
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

} // namespace

Frame pad_to_multiple(const Frame& f, int multiple) {
  const int pw = padded_dim(f.width, multiple);
  const int ph = padded_dim(f.height, multiple);
  if (pw == f.width && ph == f.height) return f;
  Frame out(pw, ph, f.colorspace);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < ph; ++y) {
      const int sy = reflect_index(y, f.height);
      for (int x = 0; x < pw; ++x) {
        out.at(c, y, x) = f.at(c, sy, reflect_index(x, f.width));
      }
    }
  }
  return out;
}

Frame crop_to(const Frame& f, int width, int height) {
  if (width > f.width || height > f.height) {
    throw InternalError("crop_to: target exceeds source");
  }
  if (width == f.width && height == f.height) return f;
  Frame out(width, height, f.colorspace);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < height; ++y) {
      std::memcpy(out.plane(c) + static_cast<std::size_t>(y) * width,
                  f.plane(c) + static_cast<std::size_t>(y) * f.width,
                  sizeof(float) * width);
    }
  }
  return out;
}

void check_frame_range(const Frame& f, const char* where) {
  for (float v : f.data) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw InternalError(std::string(where) +
                          ": frame sample outside [0,1]: " + std::to_string(v));
    }
  }
}

} // namespace kmfv
