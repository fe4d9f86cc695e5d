#include "kmfv/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "kmfv/errors.hpp"
#include "kmfv/media_io.hpp"
#include "kmfv/plot.hpp"

namespace kmfv {

namespace {

struct Pchip {
  std::vector<double> x, y, d; // nodes, values, derivatives
};

// Fritsch-Carlson monotone cubic derivatives (matlab pchip rules).
Pchip fit_pchip(std::vector<double> x, std::vector<double> y) {
  const std::size_t n = x.size();
  Pchip p;
  p.x = std::move(x);
  p.y = std::move(y);
  p.d.assign(n, 0.0);
  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = p.x[i + 1] - p.x[i];
    delta[i] = (p.y[i + 1] - p.y[i]) / h[i];
  }
  auto endpoint = [](double h0, double h1, double d0, double d1) {
    double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (d * d0 <= 0.0) {
      d = 0.0;
    } else if (d0 * d1 < 0.0 && std::fabs(d) > 3.0 * std::fabs(d0)) {
      d = 3.0 * d0;
    }
    return d;
  };
  p.d[0] = endpoint(h[0], h[1], delta[0], delta[1]);
  p.d[n - 1] = endpoint(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0.0) {
      p.d[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      p.d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  return p;
}

// Exact integral of the piecewise cubic over [a, b].
double pchip_integral(const Pchip& p, double a, double b) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < p.x.size(); ++i) {
    const double x0 = p.x[i], x1 = p.x[i + 1];
    const double lo = std::max(a, x0), hi = std::min(b, x1);
    if (hi <= lo) continue;
    const double h = x1 - x0;
    const double delta = (p.y[i + 1] - p.y[i]) / h;
    const double c2 = (3.0 * delta - 2.0 * p.d[i] - p.d[i + 1]) / h;
    const double c3 = (p.d[i] + p.d[i + 1] - 2.0 * delta) / (h * h);
    auto anti = [&](double s) {
      return ((p.y[i] + s * (p.d[i] / 2.0 +
                             s * (c2 / 3.0 + s * c3 / 4.0))) ) * s;
    };
    total += anti(hi - x0) - anti(lo - x0);
  }
  return total;
}

Pchip curve_interpolant(const RDCurve& curve, const char* role) {
  if (curve.points.size() < 3) {
    throw UsageError(std::string("bd_rate: ") + role + " curve needs >= 3 "
                     "points, got " + std::to_string(curve.points.size()));
  }
  std::vector<RDPoint> pts = curve.points;
  std::sort(pts.begin(), pts.end(),
            [](const RDPoint& a, const RDPoint& b) { return a.psnr < b.psnr; });
  std::vector<double> x, y;
  for (const RDPoint& p : pts) {
    if (!(p.bpp > 0.0)) {
      throw UsageError(std::string("bd_rate: ") + role +
                       " curve has a nonpositive rate");
    }
    if (!x.empty() && p.psnr <= x.back()) {
      throw UsageError(std::string("bd_rate: ") + role +
                       " curve has non-increasing PSNR points");
    }
    x.push_back(p.psnr);
    y.push_back(std::log10(p.bpp));
  }
  return fit_pchip(std::move(x), std::move(y));
}

} // namespace

double bd_rate(const RDCurve& anchor, const RDCurve& test) {
  const Pchip pa = curve_interpolant(anchor, "anchor");
  const Pchip pt = curve_interpolant(test, "test");
  const double lo = std::max(pa.x.front(), pt.x.front());
  const double hi = std::min(pa.x.back(), pt.x.back());
  if (!(hi > lo)) {
    throw UsageError("bd_rate: curves have no overlapping PSNR range");
  }
  const double avg_diff =
      (pchip_integral(pt, lo, hi) - pchip_integral(pa, lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg_diff) - 1.0) * 100.0;
}

namespace {

double mean_psnr(const VideoSequence& a, const std::vector<Frame>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    acc += rgb_psnr(a.frames[i], b[i]);
  }
  return acc / static_cast<double>(a.frames.size());
}

} // namespace

EvalResult evaluate(
    const std::vector<std::pair<std::string, VideoSequence>>& sequences,
    const std::vector<std::string>& checkpoint_paths, const EvalOptions& opt) {
  EvalResult result;
  if (sequences.empty()) throw UsageError("evaluate: no sequences");

  struct Loaded {
    ParameterStore store;
    std::string codec;
    double lambda;
  };
  std::vector<Loaded> models;
  for (const std::string& path : checkpoint_paths) {
    try {
      Loaded l{ParameterStore::load(path), "", 0.0};
      const bool interp = l.store.has("interp.c0.w");
      l.codec = interp ? "kmfv" : "kmfv-4k";
      l.lambda = std::stod(l.store.metadata("base_lambda", "0"));
      models.push_back(std::move(l));
    } catch (const std::exception& e) {
      std::cerr << "evaluate: skipping checkpoint " << path << ": " << e.what()
                << "\n";
      result.skipped.push_back(path);
    }
  }
  if (models.empty()) throw UsageError("evaluate: no usable checkpoints");

  auto run = [&](Loaded& m, const std::string& codec, int gop) {
    for (const auto& [name, seq] : sequences) {
      const EncodeResult enc = encode_video(seq, m.store, gop);
      EvalRow row;
      row.sequence = name;
      row.codec = codec;
      row.lambda = m.lambda;
      row.bpp = enc.bpp;
      row.psnr_rgb = mean_psnr(seq, enc.reconstructions);
      result.rows.push_back(row);
    }
  };

  for (Loaded& m : models) {
    run(m, m.codec, opt.gop_size);
    if (opt.intra_baseline) run(m, "intra", 1);
  }

  // sequence-averaged curve per codec (one point per lambda)
  std::map<std::string, std::map<double, std::pair<double, double>>> acc;
  std::map<std::string, std::map<double, int>> counts;
  for (const EvalRow& r : result.rows) {
    auto& slot = acc[r.codec][r.lambda];
    slot.first += r.bpp;
    slot.second += r.psnr_rgb;
    counts[r.codec][r.lambda] += 1;
  }
  for (const auto& [codec, by_lambda] : acc) {
    RDCurve curve;
    curve.codec = codec;
    for (const auto& [lambda, sums] : by_lambda) {
      const int n = counts[codec][lambda];
      RDPoint p;
      p.bpp = sums.first / n;
      p.psnr = sums.second / n;
      p.label = "lambda=" + std::to_string(lambda);
      curve.points.push_back(p);
    }
    std::sort(curve.points.begin(), curve.points.end(),
              [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
    result.curves[codec] = std::move(curve);
  }

  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    const std::filesystem::path dir(opt.out_dir);
    result.csv_file = (dir / (opt.dataset_name + "_rd.csv")).string();
    std::ofstream csv(result.csv_file);
    if (!csv) throw DataError("evaluate: cannot write " + result.csv_file);
    csv << "sequence,codec,lambda,bpp,psnr_rgb\n";
    for (const EvalRow& r : result.rows) {
      csv << r.sequence << ',' << r.codec << ',' << r.lambda << ',' << r.bpp
          << ',' << r.psnr_rgb << '\n';
    }
    for (const auto& [codec, curve] : result.curves) {
      const std::string file =
          (dir / (opt.dataset_name + "_" + codec + ".png")).string();
      render_rd_plot({curve}, opt.dataset_name + " " + codec, file);
      result.plot_files.push_back(file);
    }
  }
  return result;
}

TimingReport timing_report(const VideoSequence& seq, ParameterStore& store,
                           int gop_size, int runs) {
  if (runs < 5) runs = 5;
  TimingReport rep;
  rep.runs = runs;
  std::vector<StageTimes> enc_stages;
  std::vector<double> enc_total, dec_total;
  std::vector<std::uint8_t> container;
  for (int r = 0; r < runs; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    EncodeResult enc = encode_video(seq, store, gop_size);
    enc_total.push_back(std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count());
    enc_stages.push_back(enc.stages);
    container = std::move(enc.container);
  }
  StageTimes dec_stage_last;
  for (int r = 0; r < runs; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    decode_video(container, store, &dec_stage_last);
    dec_total.push_back(std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count());
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  auto stage_median = [&](auto pick) {
    std::vector<double> v;
    for (const StageTimes& s : enc_stages) v.push_back(pick(s));
    return median(v);
  };
  rep.stage_ms["analysis"] =
      stage_median([](const StageTimes& s) { return s.analysis_ms; });
  rep.stage_ms["entropy"] =
      stage_median([](const StageTimes& s) { return s.entropy_ms; });
  rep.stage_ms["interpolate"] =
      stage_median([](const StageTimes& s) { return s.interpolate_ms; });
  rep.stage_ms["synthesis"] =
      stage_median([](const StageTimes& s) { return s.synthesis_ms; });
  rep.encode_total_ms = median(enc_total);
  rep.decode_total_ms = median(dec_total);
  const double n = static_cast<double>(seq.frames.size());
  rep.encode_fps = 1000.0 * n / rep.encode_total_ms;
  rep.decode_fps = 1000.0 * n / rep.decode_total_ms;
  return rep;
}

std::vector<EvalRow> read_rd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV " + path);
  std::vector<EvalRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("sequence,", 0) == 0) continue; // header
    }
    std::istringstream ss(line);
    EvalRow r;
    std::string field;
    if (!std::getline(ss, r.sequence, ',')) continue;
    if (!std::getline(ss, r.codec, ',')) continue;
    if (!std::getline(ss, field, ',')) continue;
    r.lambda = std::stod(field);
    if (!std::getline(ss, field, ',')) continue;
    r.bpp = std::stod(field);
    if (!std::getline(ss, field, ',')) continue;
    r.psnr_rgb = std::stod(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

RDCurve curve_from_rows(const std::vector<EvalRow>& rows,
                        const std::string& codec) {
  std::map<double, std::pair<double, double>> acc;
  std::map<double, int> n;
  for (const EvalRow& r : rows) {
    if (!codec.empty() && r.codec != codec) continue;
    acc[r.lambda].first += r.bpp;
    acc[r.lambda].second += r.psnr_rgb;
    n[r.lambda] += 1;
  }
  RDCurve curve;
  curve.codec = codec;
  for (const auto& [lambda, sums] : acc) {
    RDPoint p;
    p.bpp = sums.first / n[lambda];
    p.psnr = sums.second / n[lambda];
    p.label = "lambda=" + std::to_string(lambda);
    curve.points.push_back(p);
  }
  std::sort(curve.points.begin(), curve.points.end(),
            [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  return curve;
}

} // namespace kmfv
