#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kmfv/frame.hpp"
#include "kmfv/gop.hpp"
#include "kmfv/nn.hpp"

namespace kmfv {

// .kmfv container (all multi-byte integers little-endian):
//   "KMFV" | u8 version | u16 width | u16 height | u32 frame_count |
//   u8 gop_size | u32 model_id | u8 flags (bit0: interpolated ref used)
// then one entry per coding step, in build_schedule coding order:
//   u32 display_index | u8 type (0 I, 1 B) | z chunk | y chunk
// where a chunk is u32 payload length + payload bytes. Padding to the /64
// grid is derived from width/height and never transmitted.

constexpr std::uint8_t kContainerVersion = 1;

struct ContainerHeader {
  int width = 0;
  int height = 0;
  int frame_count = 0;
  int gop_size = 8;
  std::uint32_t model_id = 0;
  bool interpolator_used = false;
};

struct FrameBitStats {
  int display_index = 0;
  FrameType type = FrameType::I;
  std::size_t actual_bits = 0;   // chunk payload bits
  double estimated_bits = 0.0;   // coder-model estimate (-sum log2 p)
};

// Wall-clock per coding stage, accumulated over the whole call.
struct StageTimes {
  double interpolate_ms = 0.0;
  double analysis_ms = 0.0; // encoder-side transforms (enc + hyper)
  double entropy_ms = 0.0;  // table construction + range coding
  double synthesis_ms = 0.0; // decoder trunk, heads, Eq.1 synthesis
};

struct EncodeResult {
  std::vector<std::uint8_t> container;
  std::vector<Frame> reconstructions; // display order, cropped; decoder-exact
  std::vector<FrameBitStats> stats;   // display order
  double bpp = 0.0;                   // payload bits / (width*height*frames)
  StageTimes stages;
};

EncodeResult encode_video(const VideoSequence& seq, ParameterStore& store,
                          int gop_size, StageTimes* timing = nullptr);

VideoSequence decode_video(const std::vector<std::uint8_t>& container,
                           ParameterStore& store,
                           StageTimes* timing = nullptr);

ContainerHeader parse_container_header(const std::vector<std::uint8_t>& bytes);

double container_bpp(const std::vector<std::uint8_t>& container);

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

} // namespace kmfv
