#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "kmfv/frame.hpp"
#include "kmfv/rng.hpp"

namespace kmfv {

// --- color conversion (BT.709, limited range, 8-bit anchors) ---
//
// The test material is HD, so BT.709 is assumed throughout; the conversion
// runs at 4:4:4 on normalized code values. YUV420 chroma is replicated 2x2
// on load and box-averaged on store.

std::array<float, 3> yuv_to_rgb_bt709(float y8, float u8, float v8);
std::array<float, 3> rgb_to_yuv_bt709(float r, float g, float b); // 8-bit codes

VideoSequence load_yuv420(const std::string& path, int width, int height,
                          int max_frames);
void save_yuv420(const VideoSequence& seq, const std::string& path);

// PNG image directories, frames numbered frame_%05d.png.
VideoSequence load_image_dir(const std::string& dir, int max_frames = -1);
void save_image_dir(const VideoSequence& seq, const std::string& dir);

Frame load_png(const std::string& path);
void save_png(const Frame& frame, const std::string& path);

// --- metrics ---

// 10*log10(1/MSE) over all RGB samples; 100 dB when MSE == 0.
double rgb_psnr(const Frame& a, const Frame& b);

// --- synthetic material ---

enum class SyntheticKind { TranslatingTexture, RotatingPattern, NoiseFloor };

struct SyntheticOptions {
  double velocity_x = 0.75; // pixels per frame, TranslatingTexture only
  double velocity_y = 0.35;
  double rotation_deg_per_frame = 1.5; // RotatingPattern only
  double noise_amplitude = 0.02;       // NoiseFloor only
};

SyntheticKind synthetic_kind_from_name(const std::string& name);

VideoSequence make_synthetic_sequence(SyntheticKind kind, int n_frames,
                                      int size, std::uint64_t seed,
                                      const SyntheticOptions& opt = {});

// --- training crops ---

TrainingTuple crop_tuple(const std::array<const Frame*, 5>& frames, int patch,
                         Rng& rng);

// --- padding ---

// Frames are reflect-padded so both dimensions divide `multiple` (64 for the
// codec: four stride-2 stages plus two hyper stages), and cropped back after
// decoding.
Frame pad_to_multiple(const Frame& f, int multiple);
Frame crop_to(const Frame& f, int width, int height);

inline int padded_dim(int x, int multiple) {
  return ((x + multiple - 1) / multiple) * multiple;
}

void check_frame_range(const Frame& f, const char* where);

} // namespace kmfv
