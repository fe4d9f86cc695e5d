#include "kmfv/gop.hpp"

#include <sstream>

#include "kmfv/errors.hpp"

namespace kmfv {

namespace {

void emit_midpoints(std::vector<CodingStep>& steps, int a, int b, int level) {
  if (b - a <= 1) return;
  const int m = (a + b) / 2;
  CodingStep s;
  s.display_index = m;
  s.frame_type = FrameType::B;
  s.ref_prev = a;
  s.ref_next = b;
  s.level = level < 2 ? level : 2;
  steps.push_back(s);
  emit_midpoints(steps, a, m, level + 1);
  emit_midpoints(steps, m, b, level + 1);
}

CodingStep intra_step(int display) {
  CodingStep s;
  s.display_index = display;
  s.frame_type = FrameType::I;
  s.level = 0;
  return s;
}

} // namespace

GoPSchedule build_schedule(int n_frames, int gop_size) {
  if (n_frames <= 0) throw UsageError("build_schedule: n_frames must be >= 1");
  if (gop_size <= 0) throw UsageError("build_schedule: gop_size must be >= 1");

  GoPSchedule sched;
  sched.gop_size = gop_size;
  std::vector<CodingStep>& steps = sched.steps;

  steps.push_back(intra_step(0));
  int anchor = 0;
  while (anchor < n_frames - 1) {
    // next anchor: the next gop boundary, or the forced final I frame
    const int next = std::min(anchor + gop_size, n_frames - 1);
    steps.push_back(intra_step(next));
    emit_midpoints(steps, anchor, next, 1);
    anchor = next;
  }
  for (std::size_t i = 0; i < steps.size(); ++i) {
    steps[i].coding_order = static_cast<int>(i);
  }
  return sched;
}

GoPSchedule training_schedule() {
  GoPSchedule sched = build_schedule(5, 4);
  sched.gop_size = 5; // by convention named after its frame span
  return sched;
}

double lambda_for_level(double base_lambda, int level) {
  if (!(base_lambda > 0.0)) {
    throw UsageError("lambda_for_level: base lambda must be positive");
  }
  switch (level) {
    case 0:
      return base_lambda;
    case 1:
      return 0.85 * base_lambda;
    case 2:
      return 0.7 * base_lambda;
    default:
      throw UsageError("lambda_for_level: unknown level " +
                       std::to_string(level));
  }
}

std::string schedule_to_string(const GoPSchedule& schedule) {
  std::ostringstream out;
  for (const CodingStep& s : schedule.steps) {
    out << "order=" << s.coding_order << " display=" << s.display_index;
    if (s.frame_type == FrameType::I) {
      out << " type=I level=0";
    } else {
      out << " type=B level=" << s.level << " refs=(" << s.ref_prev << ","
          << s.ref_next << ")";
    }
    out << '\n';
  }
  return out.str();
}

} // namespace kmfv
