#include <cmath>
#include <vector>

#include "kmfv/errors.hpp"
#include "kmfv/media_io.hpp"

namespace kmfv {

namespace {

// Band-limited periodic texture: a sum of sinusoids whose frequencies are
// integer multiples of 1/size, so shifting by whole pixels wraps exactly.
struct TextureField {
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves[3];

  TextureField(int size, Rng& rng) {
    const int max_cycles = std::max(2, size / 8);
    for (int c = 0; c < 3; ++c) {
      double total_amp = 0.0;
      const int n_waves = 8 + static_cast<int>(rng.below(5));
      waves[c].resize(n_waves);
      for (auto& w : waves[c]) {
        const int nx = 1 + static_cast<int>(rng.below(max_cycles));
        const int ny = 1 + static_cast<int>(rng.below(max_cycles));
        w.fx = 2.0 * M_PI * nx / size;
        w.fy = 2.0 * M_PI * ny / size;
        w.phase = rng.uniform(0.0, 2.0 * M_PI);
        w.amp = rng.uniform(0.2, 1.0);
        total_amp += w.amp;
      }
      // keep values inside [0.08, 0.92]
      for (auto& w : waves[c]) w.amp *= 0.42 / total_amp;
    }
  }

  float sample(int c, double x, double y) const {
    double v = 0.5;
    for (const auto& w : waves[c]) {
      v += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
    }
    return static_cast<float>(v);
  }
};

} // namespace

SyntheticKind synthetic_kind_from_name(const std::string& name) {
  if (name == "translating-texture") return SyntheticKind::TranslatingTexture;
  if (name == "rotating-pattern") return SyntheticKind::RotatingPattern;
  if (name == "noise-floor") return SyntheticKind::NoiseFloor;
  throw UsageError("unknown synthetic kind '" + name +
                   "' (translating-texture|rotating-pattern|noise-floor)");
}

VideoSequence make_synthetic_sequence(SyntheticKind kind, int n_frames,
                                      int size, std::uint64_t seed,
                                      const SyntheticOptions& opt) {
  if (n_frames < 5) {
    throw UsageError("make_synthetic_sequence: n_frames must be >= 5");
  }
  if (size < 8) throw UsageError("make_synthetic_sequence: size must be >= 8");

  Rng rng(seed ^ 0x6b6d6676ULL); // "kmfv"
  TextureField tex(size, rng);
  Rng noise_rng = rng.fork();

  VideoSequence seq;
  seq.frames.reserve(n_frames);
  const double cx = 0.5 * (size - 1), cy = 0.5 * (size - 1);

  for (int t = 0; t < n_frames; ++t) {
    Frame f(size, size, ColorSpace::RGB);
    switch (kind) {
      case SyntheticKind::TranslatingTexture: {
        const double dx = opt.velocity_x * t;
        const double dy = opt.velocity_y * t;
        for (int c = 0; c < 3; ++c) {
          for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
              f.at(c, y, x) = tex.sample(c, x - dx, y - dy);
            }
          }
        }
        break;
      }
      case SyntheticKind::RotatingPattern: {
        const double a = opt.rotation_deg_per_frame * t * M_PI / 180.0;
        const double ca = std::cos(a), sa = std::sin(a);
        for (int c = 0; c < 3; ++c) {
          for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
              const double rx = x - cx, ry = y - cy;
              f.at(c, y, x) =
                  tex.sample(c, ca * rx - sa * ry + cx, sa * rx + ca * ry + cy);
            }
          }
        }
        break;
      }
      case SyntheticKind::NoiseFloor: {
        const float amp = static_cast<float>(opt.noise_amplitude);
        for (int c = 0; c < 3; ++c) {
          for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
              const float n =
                  amp * (2.0f * static_cast<float>(noise_rng.uniform()) - 1.0f);
              float v = tex.sample(c, x, y) + n;
              f.at(c, y, x) = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
            }
          }
        }
        break;
      }
    }
    check_frame_range(f, "make_synthetic_sequence");
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

} // namespace kmfv
