#pragma once

#include <map>
#include <string>
#include <vector>

#include "kmfv/bitstream.hpp"
#include "kmfv/frame.hpp"

namespace kmfv {

struct RDPoint {
  double bpp = 0.0;
  double psnr = 0.0;
  std::string label; // model / lambda id
};

struct RDCurve {
  std::string codec;
  std::vector<RDPoint> points; // kept sorted by ascending bpp
};

// Bjontegaard delta rate in percent (negative: `test` spends fewer bits at
// equal quality). Piecewise-cubic (PCHIP) interpolation of log10-rate over
// PSNR, integrated analytically over the common PSNR interval. Requires >= 3
// points per curve and overlapping PSNR ranges.
double bd_rate(const RDCurve& anchor, const RDCurve& test);

struct EvalOptions {
  int gop_size = 8;
  bool intra_baseline = true; // also run every frame intra (gop 1)
  std::string out_dir;        // empty: no CSV/plot emission
  std::string dataset_name = "synthetic";
};

struct EvalRow {
  std::string sequence;
  std::string codec;
  double lambda = 0.0;
  double bpp = 0.0;
  double psnr_rgb = 0.0;
};

struct EvalResult {
  std::vector<EvalRow> rows;               // sequences x checkpoints (+ intra)
  std::map<std::string, RDCurve> curves;   // per codec, sequence-averaged
  std::vector<std::string> skipped;        // unreadable checkpoints
  std::vector<std::string> plot_files;
  std::string csv_file;
};

// Encodes every sequence with every checkpoint (plus the intra baseline when
// enabled), collects bpp from the actual containers and RGB PSNR, and emits
// CSV + RD plot files when out_dir is set.
EvalResult evaluate(const std::vector<std::pair<std::string, VideoSequence>>& sequences,
                    const std::vector<std::string>& checkpoint_paths,
                    const EvalOptions& opt);

struct TimingReport {
  double encode_fps = 0.0;
  double decode_fps = 0.0;
  // medians over the runs, stable key order
  std::map<std::string, double> stage_ms;
  double encode_total_ms = 0.0;
  double decode_total_ms = 0.0;
  int runs = 0;
};

TimingReport timing_report(const VideoSequence& seq, ParameterStore& store,
                           int gop_size = 8, int runs = 5);

std::vector<EvalRow> read_rd_csv(const std::string& path);
RDCurve curve_from_rows(const std::vector<EvalRow>& rows,
                        const std::string& codec);

} // namespace kmfv
