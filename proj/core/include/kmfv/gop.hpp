#pragma once

#include <string>
#include <vector>

namespace kmfv {

enum class FrameType { I, B };

struct CodingStep {
  int display_index = 0;
  int coding_order = 0;
  FrameType frame_type = FrameType::I;
  int ref_prev = -1; // display index; -1 for I steps
  int ref_next = -1;
  int level = 0; // 0 (I anchors), 1, 2 (deeper B depths clamp to 2)
};

struct GoPSchedule {
  std::vector<CodingStep> steps; // in coding order
  int gop_size = 8;
};

// Hierarchical schedule: I frames at multiples of gop_size plus a forced
// final I, dyadic-midpoint B frames in between. B depths beyond 2 reuse
// level 2 (the loss defines exactly three lambda levels).
GoPSchedule build_schedule(int n_frames, int gop_size = 8);

// The 5-frame training GoP: I0 B2 B1 B2 I0.
GoPSchedule training_schedule();

// level 0 -> l, level 1 -> 0.85*l, level 2 -> 0.7*l.
double lambda_for_level(double base_lambda, int level);

std::string schedule_to_string(const GoPSchedule& schedule);

} // namespace kmfv
