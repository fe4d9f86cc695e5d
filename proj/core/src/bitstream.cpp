#include "kmfv/bitstream.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include "kmfv/codec_nets.hpp"
#include "kmfv/entropy.hpp"
#include "kmfv/errors.hpp"
#include "kmfv/interpolation.hpp"
#include "kmfv/kernel_synthesis.hpp"
#include "kmfv/media_io.hpp"

namespace kmfv {

namespace {

using SteadyClock = std::chrono::steady_clock;

double ms_since(SteadyClock::time_point t0) {
  return std::chrono::duration<double, std::milli>(SteadyClock::now() - t0)
      .count();
}

ModelConfig config_from_store(const ParameterStore& store) {
  const std::string j = store.metadata("cfg");
  if (j.empty()) {
    throw DataError("checkpoint carries no model config metadata");
  }
  return ModelConfig::from_json(j);
}

// Everything both coding directions share: the model, the interpolator and
// the integer CDF tables (built once per call from the checkpoint).
struct CodingContext {
  CodecModel model;
  std::unique_ptr<Interpolator> interp;
  CdfTable z_table_i, z_table_b, y_table;
  std::vector<float> med_i, med_b;

  CodingContext(ParameterStore& store, const ModelConfig& cfg,
                StageTimes& stages)
      : model(store, cfg) {
    if (cfg.use_interpolator) {
      interp = std::make_unique<Interpolator>(Interpolator::attach(store));
    }
    const auto t0 = SteadyClock::now();
    z_table_i = model.i_factorized().build_cdf_table();
    z_table_b = model.b_factorized().build_cdf_table();
    y_table = model.gaussian().build_cdf_table();
    med_i = model.i_factorized().medians();
    med_b = model.b_factorized().medians();
    stages.entropy_ms += ms_since(t0);
  }
};

std::vector<std::int32_t> channel_rows(const Tensor& t) {
  std::vector<std::int32_t> rows(t.size());
  const std::size_t plane = t.plane();
  std::size_t i = 0;
  for (int n = 0; n < t.n(); ++n) {
    for (int c = 0; c < t.c(); ++c) {
      for (std::size_t p = 0; p < plane; ++p) rows[i++] = c;
    }
  }
  return rows;
}

double table_bits(const CdfTable& table,
                  const std::vector<std::int32_t>& rows,
                  const std::vector<std::int32_t>& symbols) {
  double bits = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    bits -= std::log2(table.table_likelihood(rows[i], symbols[i]));
  }
  return bits;
}

// round against per-channel medians; returns integer symbols and the
// reconstruction sym + median (the exact float the decoder will rebuild)
void quantize_with_medians(const Tensor& z, const std::vector<float>& med,
                           std::vector<std::int32_t>& symbols, Tensor& z_hat) {
  symbols.resize(z.size());
  z_hat = z;
  const std::size_t plane = z.plane();
  std::size_t i = 0;
  for (int n = 0; n < z.n(); ++n) {
    for (int c = 0; c < z.c(); ++c) {
      const float m = med[c];
      for (std::size_t p = 0; p < plane; ++p, ++i) {
        const float s = std::nearbyintf(z.v[i] - m);
        symbols[i] = static_cast<std::int32_t>(s);
        z_hat.v[i] = s + m;
      }
    }
  }
}

void quantize_with_means(const Tensor& y, const Tensor& means,
                         std::vector<std::int32_t>& symbols, Tensor& y_hat) {
  symbols.resize(y.size());
  y_hat = y;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const float s = std::nearbyintf(y.v[i] - means.v[i]);
    symbols[i] = static_cast<std::int32_t>(s);
    y_hat.v[i] = s + means.v[i];
  }
}

Tensor dequantize_with_medians(const std::vector<std::int32_t>& symbols,
                               const std::vector<float>& med, int channels,
                               int h, int w) {
  Tensor z_hat(1, channels, h, w);
  std::size_t i = 0;
  for (int c = 0; c < channels; ++c) {
    const float m = med[c];
    for (int p = 0; p < h * w; ++p, ++i) {
      z_hat.v[i] = static_cast<float>(symbols[i]) + m;
    }
  }
  return z_hat;
}

Tensor dequantize_with_means(const std::vector<std::int32_t>& symbols,
                             const Tensor& means) {
  Tensor y_hat = means;
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    y_hat.v[i] = static_cast<float>(symbols[i]) + means.v[i];
  }
  return y_hat;
}

struct CodedFrame {
  CodedChunk z_chunk, y_chunk;
  Frame recon; // padded
  double estimated_bits = 0.0;
};

CodedFrame encode_frame(CodingContext& ctx, const Frame& padded,
                        const ReferenceTriple* refs, StageTimes& stages) {
  const bool intra = refs == nullptr;
  CodedFrame out;

  auto t0 = SteadyClock::now();
  const Tensor y = intra ? ctx.model.encode_i(padded)
                         : ctx.model.encode_b(padded, *refs);
  const Tensor z = ctx.model.hyper_encode(y, intra);
  stages.analysis_ms += ms_since(t0);

  const std::vector<float>& med = intra ? ctx.med_i : ctx.med_b;
  std::vector<std::int32_t> z_syms;
  Tensor z_hat;
  quantize_with_medians(z, med, z_syms, z_hat);

  t0 = SteadyClock::now();
  auto [means, scales_raw] = ctx.model.hyper_decode(z_hat, intra);
  stages.synthesis_ms += ms_since(t0);

  std::vector<std::int32_t> y_syms;
  Tensor y_hat;
  quantize_with_means(y, means, y_syms, y_hat);

  t0 = SteadyClock::now();
  const CdfTable& z_table = intra ? ctx.z_table_i : ctx.z_table_b;
  const std::vector<std::int32_t> z_rows = channel_rows(z);
  const std::vector<std::int32_t> y_rows =
      ctx.model.gaussian().row_indices(scales_raw);
  out.z_chunk =
      range_encode(z_syms, z_table, z_rows, EntropyModelId::FactorizedZ);
  out.y_chunk =
      range_encode(y_syms, ctx.y_table, y_rows, EntropyModelId::GaussianY);
  out.estimated_bits = table_bits(z_table, z_rows, z_syms) +
                       table_bits(ctx.y_table, y_rows, y_syms);
  stages.entropy_ms += ms_since(t0);

  t0 = SteadyClock::now();
  out.recon = intra ? ctx.model.decode_i(y_hat)
                    : ctx.model.decode_b(y_hat, *refs).frame;
  stages.synthesis_ms += ms_since(t0);
  return out;
}

Frame decode_frame(CodingContext& ctx, const CodedChunk& z_chunk,
                   const CodedChunk& y_chunk, const ReferenceTriple* refs,
                   int padded_w, int padded_h, StageTimes& stages) {
  const bool intra = refs == nullptr;
  const ModelConfig& cfg = ctx.model.config();
  const int zh = padded_h / 64, zw = padded_w / 64;

  auto t0 = SteadyClock::now();
  const CdfTable& z_table = intra ? ctx.z_table_i : ctx.z_table_b;
  std::vector<std::int32_t> z_rows(
      static_cast<std::size_t>(cfg.hyper_channels) * zh * zw);
  {
    std::size_t i = 0;
    for (int c = 0; c < cfg.hyper_channels; ++c) {
      for (int p = 0; p < zh * zw; ++p) z_rows[i++] = c;
    }
  }
  const std::vector<std::int32_t> z_syms =
      range_decode(z_chunk, z_table, z_rows);
  stages.entropy_ms += ms_since(t0);

  const Tensor z_hat = dequantize_with_medians(
      z_syms, intra ? ctx.med_i : ctx.med_b, cfg.hyper_channels, zh, zw);

  t0 = SteadyClock::now();
  auto [means, scales_raw] = ctx.model.hyper_decode(z_hat, intra);
  stages.synthesis_ms += ms_since(t0);

  t0 = SteadyClock::now();
  const std::vector<std::int32_t> y_rows =
      ctx.model.gaussian().row_indices(scales_raw);
  const std::vector<std::int32_t> y_syms =
      range_decode(y_chunk, ctx.y_table, y_rows);
  stages.entropy_ms += ms_since(t0);

  const Tensor y_hat = dequantize_with_means(y_syms, means);

  t0 = SteadyClock::now();
  Frame recon = intra ? ctx.model.decode_i(y_hat)
                      : ctx.model.decode_b(y_hat, *refs).frame;
  stages.synthesis_ms += ms_since(t0);
  return recon;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr std::size_t kHeaderBytes = 4 + 1 + 2 + 2 + 4 + 1 + 4 + 1;

ReferenceTriple make_refs(CodingContext& ctx, const Frame& prev,
                          const Frame& next, StageTimes& stages) {
  ReferenceTriple refs;
  refs.ref0 = prev;
  refs.ref2 = next;
  if (ctx.model.config().use_interpolator) {
    const auto t0 = SteadyClock::now();
    refs.refi = ctx.interp->interpolate(prev, next);
    stages.interpolate_ms += ms_since(t0);
  }
  return refs;
}

} // namespace

EncodeResult encode_video(const VideoSequence& seq, ParameterStore& store,
                          int gop_size, StageTimes* timing) {
  if (seq.frames.empty()) throw UsageError("encode_video: empty sequence");
  const int w = seq.width(), h = seq.height();
  for (const Frame& f : seq.frames) {
    if (!f.same_size(seq.frames[0])) {
      throw DataError("encode_video: frames differ in size");
    }
    check_frame_range(f, "encode_video");
  }

  EncodeResult result;
  const ModelConfig cfg = config_from_store(store);
  CodingContext ctx(store, cfg, result.stages);
  const int mult = cfg.spatial_multiple();

  const int n = static_cast<int>(seq.frames.size());
  std::vector<Frame> padded(n);
  for (int i = 0; i < n; ++i) padded[i] = pad_to_multiple(seq.frames[i], mult);

  const GoPSchedule sched = build_schedule(n, gop_size);

  std::vector<std::uint8_t>& bytes = result.container;
  bytes.insert(bytes.end(), {'K', 'M', 'F', 'V'});
  bytes.push_back(kContainerVersion);
  put_u16(bytes, static_cast<std::uint16_t>(w));
  put_u16(bytes, static_cast<std::uint16_t>(h));
  put_u32(bytes, static_cast<std::uint32_t>(n));
  bytes.push_back(static_cast<std::uint8_t>(gop_size));
  put_u32(bytes, store.content_id());
  bytes.push_back(cfg.use_interpolator ? 1 : 0);

  std::vector<Frame> recon_padded(n);
  result.reconstructions.resize(n);
  result.stats.resize(n);
  std::size_t payload_bytes = 0;

  for (const CodingStep& cs : sched.steps) {
    const int f = cs.display_index;
    CodedFrame coded;
    if (cs.frame_type == FrameType::I) {
      coded = encode_frame(ctx, padded[f], nullptr, result.stages);
    } else {
      const ReferenceTriple refs = make_refs(ctx, recon_padded[cs.ref_prev],
                                             recon_padded[cs.ref_next],
                                             result.stages);
      coded = encode_frame(ctx, padded[f], &refs, result.stages);
    }
    put_u32(bytes, static_cast<std::uint32_t>(f));
    bytes.push_back(cs.frame_type == FrameType::I ? 0 : 1);
    write_chunk(bytes, coded.z_chunk);
    write_chunk(bytes, coded.y_chunk);
    payload_bytes += coded.z_chunk.payload.size() + coded.y_chunk.payload.size();

    recon_padded[f] = std::move(coded.recon);
    result.reconstructions[f] = crop_to(recon_padded[f], w, h);
    result.stats[f] = {f, cs.frame_type,
                       8 * (coded.z_chunk.payload.size() +
                            coded.y_chunk.payload.size()),
                       coded.estimated_bits};
  }

  result.bpp = static_cast<double>(payload_bytes) * 8.0 /
               (static_cast<double>(w) * h * n);
  if (timing) *timing = result.stages;
  return result;
}

ContainerHeader parse_container_header(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw DataError("container: too short for a header");
  }
  if (std::memcmp(bytes.data(), "KMFV", 4) != 0) {
    throw DataError("container: bad magic (not a .kmfv file)");
  }
  if (bytes[4] != kContainerVersion) {
    throw DataError("container: unsupported version " +
                    std::to_string(bytes[4]));
  }
  ContainerHeader hdr;
  hdr.width = get_u16(bytes.data() + 5);
  hdr.height = get_u16(bytes.data() + 7);
  hdr.frame_count = static_cast<int>(get_u32(bytes.data() + 9));
  hdr.gop_size = bytes[13];
  hdr.model_id = get_u32(bytes.data() + 14);
  hdr.interpolator_used = (bytes[18] & 1) != 0;
  if (hdr.width <= 0 || hdr.height <= 0 || hdr.frame_count <= 0 ||
      hdr.gop_size <= 0) {
    throw DataError("container: invalid header fields");
  }
  return hdr;
}

VideoSequence decode_video(const std::vector<std::uint8_t>& container,
                           ParameterStore& store, StageTimes* timing) {
  const ContainerHeader hdr = parse_container_header(container);
  const std::uint32_t store_id = store.content_id();
  if (hdr.model_id != store_id) {
    throw DataError("container model_id " + std::to_string(hdr.model_id) +
                    " does not match checkpoint id " + std::to_string(store_id));
  }
  StageTimes stages;
  const ModelConfig cfg = config_from_store(store);
  if (cfg.use_interpolator != hdr.interpolator_used) {
    throw DataError("container interpolator flag does not match checkpoint");
  }
  CodingContext ctx(store, cfg, stages);

  const int mult = cfg.spatial_multiple();
  const int pw = padded_dim(hdr.width, mult);
  const int ph = padded_dim(hdr.height, mult);
  const std::size_t z_count =
      static_cast<std::size_t>(cfg.hyper_channels) * (ph / 64) * (pw / 64);
  const std::size_t y_count =
      static_cast<std::size_t>(cfg.latent_channels) * (ph / 16) * (pw / 16);

  const GoPSchedule sched = build_schedule(hdr.frame_count, hdr.gop_size);
  std::vector<Frame> recon_padded(hdr.frame_count);
  std::vector<bool> have(hdr.frame_count, false);

  std::size_t pos = kHeaderBytes;
  for (const CodingStep& cs : sched.steps) {
    if (pos + 5 > container.size()) {
      throw DataError("container: truncated at step header, byte " +
                      std::to_string(pos));
    }
    const int display = static_cast<int>(get_u32(container.data() + pos));
    const std::uint8_t type = container[pos + 4];
    pos += 5;
    if (display != cs.display_index ||
        type != (cs.frame_type == FrameType::I ? 0 : 1)) {
      throw DataError("container: step order does not match the schedule at "
                      "display index " +
                      std::to_string(display));
    }
    const CodedChunk z_chunk =
        read_chunk(container.data(), container.size(), pos,
                   static_cast<std::uint32_t>(z_count),
                   EntropyModelId::FactorizedZ);
    const CodedChunk y_chunk =
        read_chunk(container.data(), container.size(), pos,
                   static_cast<std::uint32_t>(y_count),
                   EntropyModelId::GaussianY);

    if (cs.frame_type == FrameType::I) {
      recon_padded[display] =
          decode_frame(ctx, z_chunk, y_chunk, nullptr, pw, ph, stages);
    } else {
      if (!have[cs.ref_prev] || !have[cs.ref_next]) {
        throw DataError("container: B frame before its references");
      }
      const ReferenceTriple refs = make_refs(ctx, recon_padded[cs.ref_prev],
                                             recon_padded[cs.ref_next], stages);
      recon_padded[display] =
          decode_frame(ctx, z_chunk, y_chunk, &refs, pw, ph, stages);
    }
    have[display] = true;
  }
  if (pos != container.size()) {
    throw DataError("container: " +
                    std::to_string(container.size() - pos) +
                    " trailing bytes after the last chunk");
  }

  VideoSequence out;
  out.frames.reserve(hdr.frame_count);
  for (int i = 0; i < hdr.frame_count; ++i) {
    out.frames.push_back(crop_to(recon_padded[i], hdr.width, hdr.height));
  }
  if (timing) *timing = stages;
  return out;
}

double container_bpp(const std::vector<std::uint8_t>& container) {
  const ContainerHeader hdr = parse_container_header(container);
  const GoPSchedule sched = build_schedule(hdr.frame_count, hdr.gop_size);
  std::size_t payload = 0;
  std::size_t pos = kHeaderBytes;
  for (std::size_t s = 0; s < sched.steps.size(); ++s) {
    pos += 5;
    for (int c = 0; c < 2; ++c) {
      if (pos + 4 > container.size()) {
        throw DataError("container: truncated chunk table");
      }
      const std::uint32_t len = get_u32(container.data() + pos);
      pos += 4 + len;
      payload += len;
    }
  }
  return static_cast<double>(payload) * 8.0 /
         (static_cast<double>(hdr.width) * hdr.height * hdr.frame_count);
}

void write_file(const std::string& path,
                const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  in.seekg(0, std::ios::end);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(in.tellg()));
  in.seekg(0, std::ios::beg);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  return bytes;
}

} // namespace kmfv
