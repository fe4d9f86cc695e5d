#include "kmfv/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "kmfv/detmath.hpp"
#include "kmfv/errors.hpp"
#include "kmfv/range_coder.hpp"

namespace kmfv {

namespace dm = detmath;

namespace {

constexpr double kLikelihoodFloor = 1e-12;
constexpr int kMaxSupportRadius = 4096;

} // namespace

Tensor quantize(const Tensor& x, QuantizationMode mode, const Tensor* means,
                Rng* rng) {
  Tensor out = x;
  switch (mode) {
    case QuantizationMode::AdditiveUniformNoise: {
      if (!rng) throw InternalError("quantize: noise mode needs an rng");
      for (float& v : out.v) v += static_cast<float>(rng->uniform() - 0.5);
      break;
    }
    case QuantizationMode::Round: {
      if (means) {
        require_same_shape(x, *means, "quantize");
        for (std::size_t i = 0; i < out.size(); ++i) {
          out.v[i] = std::nearbyintf(x.v[i] - means->v[i]) + means->v[i];
        }
      } else {
        for (float& v : out.v) v = std::nearbyintf(v);
      }
      break;
    }
  }
  return out;
}

double estimate_bits(const std::vector<float>& likelihoods) {
  double bits = 0.0;
  for (float p : likelihoods) {
    if (!(p > 0.0f)) {
      throw InternalError(
          "estimate_bits: nonpositive likelihood (entropy model bug)");
    }
    bits -= std::log2(static_cast<double>(p));
  }
  return bits;
}

ag::Node* bits_from_likelihoods(ag::Tape& tape, ag::Node* likelihoods) {
  double bits = 0.0;
  for (float p : likelihoods->val.v) {
    if (!(p > 0.0f)) {
      throw InternalError("bits_from_likelihoods: nonpositive likelihood");
    }
    bits -= std::log2(static_cast<double>(p));
  }
  Tensor out(1, 1, 1, 1);
  out.v[0] = static_cast<float>(bits);
  return tape.make(std::move(out), {likelihoods}, [likelihoods](ag::Node& self) {
    const float g = self.grad.v[0];
    Tensor& dp = likelihoods->g();
    constexpr float kInvLn2 = 1.4426950408889634f;
    for (std::size_t i = 0; i < dp.size(); ++i) {
      dp.v[i] -= g * kInvLn2 / likelihoods->val.v[i];
    }
  });
}

double CdfTable::table_likelihood(std::size_t r, std::int32_t symbol) const {
  const std::int32_t idx = symbol - offsets[r];
  const int regular = regular_count(r);
  const auto& cdf = rows[r];
  if (idx < 0 || idx >= regular) {
    return static_cast<double>(cdf[regular + 1] - cdf[regular]) / kCdfTotal;
  }
  return static_cast<double>(cdf[idx + 1] - cdf[idx]) / kCdfTotal;
}

void write_chunk(std::vector<std::uint8_t>& out, const CodedChunk& chunk) {
  const std::uint32_t len = static_cast<std::uint32_t>(chunk.payload.size());
  out.push_back(static_cast<std::uint8_t>(len & 0xFF));
  out.push_back(static_cast<std::uint8_t>((len >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((len >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((len >> 24) & 0xFF));
  out.insert(out.end(), chunk.payload.begin(), chunk.payload.end());
}

CodedChunk read_chunk(const std::uint8_t* data, std::size_t size,
                      std::size_t& pos, std::uint32_t symbol_count,
                      EntropyModelId model_id) {
  if (pos + 4 > size) throw DataError("bitstream: truncated chunk header");
  const std::uint32_t len = static_cast<std::uint32_t>(data[pos]) |
                            (static_cast<std::uint32_t>(data[pos + 1]) << 8) |
                            (static_cast<std::uint32_t>(data[pos + 2]) << 16) |
                            (static_cast<std::uint32_t>(data[pos + 3]) << 24);
  pos += 4;
  if (pos + len > size) {
    throw DataError("bitstream: truncated chunk payload at byte " +
                    std::to_string(pos));
  }
  CodedChunk chunk;
  chunk.payload.assign(data + pos, data + pos + len);
  chunk.symbol_count = symbol_count;
  chunk.model_id = model_id;
  pos += len;
  return chunk;
}

CodedChunk range_encode(const std::vector<std::int32_t>& symbols,
                        const CdfTable& table,
                        const std::vector<std::int32_t>& row_of_symbol,
                        EntropyModelId model_id) {
  if (symbols.size() != row_of_symbol.size()) {
    throw InternalError("range_encode: row index count mismatch");
  }
  RangeEncoder rc;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const std::int32_t r = row_of_symbol[i];
    const auto& cdf = table.rows[r];
    const int regular = table.regular_count(r);
    const std::int32_t idx = symbols[i] - table.offsets[r];
    if (idx >= 0 && idx < regular) {
      rc.encode(cdf[idx], cdf[idx + 1] - cdf[idx]);
    } else {
      rc.encode(cdf[regular], cdf[regular + 1] - cdf[regular]);
      // distance beyond the support, interleaving below/above
      std::uint64_t d;
      if (idx < 0) {
        d = 2 * static_cast<std::uint64_t>(-idx - 1) + 1;
      } else {
        d = 2 * static_cast<std::uint64_t>(idx - regular);
      }
      rc.encode_bypass_value(d);
    }
  }
  CodedChunk chunk;
  chunk.payload = rc.finish();
  chunk.symbol_count = static_cast<std::uint32_t>(symbols.size());
  chunk.model_id = model_id;
  return chunk;
}

std::vector<std::int32_t> range_decode(
    const CodedChunk& chunk, const CdfTable& table,
    const std::vector<std::int32_t>& row_of_symbol) {
  if (row_of_symbol.size() != chunk.symbol_count) {
    throw InternalError("range_decode: row index count mismatch");
  }
  RangeDecoder rd(chunk.payload.data(), chunk.payload.size());
  std::vector<std::int32_t> symbols(chunk.symbol_count);
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const std::int32_t r = row_of_symbol[i];
    const auto& cdf = table.rows[r];
    const int regular = table.regular_count(r);
    const std::uint32_t f = rd.decode_freq();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), f);
    const int idx = static_cast<int>(it - cdf.begin()) - 1;
    if (idx < 0 || idx > regular) {
      throw DataError("range_decode: corrupt payload (bad cdf slot)");
    }
    rd.consume(cdf[idx], cdf[idx + 1] - cdf[idx]);
    if (idx < regular) {
      symbols[i] = table.offsets[r] + idx;
    } else {
      const std::uint64_t d = rd.decode_bypass_value();
      if (d & 1) {
        symbols[i] = table.offsets[r] - 1 -
                     static_cast<std::int32_t>((d - 1) / 2);
      } else {
        symbols[i] =
            table.offsets[r] + regular + static_cast<std::int32_t>(d / 2);
      }
    }
  }
  return symbols;
}

std::vector<std::uint32_t> quantize_pmf(const std::vector<double>& pmf,
                                        double tail_mass) {
  const std::size_t slots = pmf.size() + 1;
  if (slots + 1 > kCdfTotal) throw InternalError("quantize_pmf: too many slots");
  std::vector<std::uint32_t> freq(slots);
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    const double p = pmf[i] < 0.0 ? 0.0 : pmf[i];
    freq[i] = static_cast<std::uint32_t>(
        std::max<long>(1, std::lround(p * kCdfTotal)));
    total += freq[i];
  }
  freq[slots - 1] = static_cast<std::uint32_t>(
      std::max<long>(1, std::lround(tail_mass * kCdfTotal)));
  total += freq[slots - 1];

  while (total > kCdfTotal) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < slots; ++i) {
      if (freq[i] > freq[best]) best = i;
    }
    if (freq[best] <= 1) throw InternalError("quantize_pmf: cannot normalize");
    --freq[best];
    --total;
  }
  while (total < kCdfTotal) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < slots; ++i) {
      if (freq[i] > freq[best]) best = i;
    }
    ++freq[best];
    ++total;
  }

  std::vector<std::uint32_t> cdf(slots + 1, 0);
  for (std::size_t i = 0; i < slots; ++i) cdf[i + 1] = cdf[i] + freq[i];
  return cdf;
}

// --- FactorizedModel ---

FactorizedModel::FactorizedModel(ParameterStore& store,
                                 const std::string& prefix, int channels,
                                 std::uint64_t init_seed)
    : store_(&store), prefix_(prefix), channels_(channels),
      widths_{1, 3, 3, 3, 1} {
  const double scale =
      std::pow(10.0, 1.0 / static_cast<double>(widths_.size() - 1));
  const bool fresh = !store.has(prefix + ".H0");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int w_in = widths_[l], w_out = widths_[l + 1];
    Layer layer;
    layer.h = &store.add(prefix + ".H" + std::to_string(l), channels, 1, w_out,
                         w_in);
    layer.b = &store.add(prefix + ".b" + std::to_string(l), channels, 1, w_out,
                         1);
    layer.a = (l + 2 < widths_.size())
                  ? &store.add(prefix + ".a" + std::to_string(l), channels, 1,
                               w_out, 1)
                  : nullptr;
    if (fresh) {
      const double h0 =
          dm::log_d(dm::exp_d(1.0 / (scale * w_out)) - 1.0); // softplus^-1
      for (float& v : layer.h->w.v) v = static_cast<float>(h0);
      const std::uint64_t name_seed =
          init_seed ^ (0x9E3779B9ULL * (l + 1)) ^
          std::hash<std::string>{}(prefix);
      Rng rng(name_seed);
      for (float& v : layer.b->w.v) {
        v = static_cast<float>(rng.uniform(-0.5, 0.5));
      }
      if (layer.a) {
        for (float& v : layer.a->w.v) v = 0.0f;
      }
    }
    layers_.push_back(layer);
  }
}

namespace {

struct FactorizedCache {
  // per layer: input vec, pre-gate u, tanh(u)
  double l[5][3];
  double u[4][3];
  double tu[4][3];
};

} // namespace

// logit of the cumulative at x; cache captures intermediates for backward.
static double factorized_logit(const std::vector<int>& widths,
                               const std::vector<const float*>& hw,
                               const std::vector<const float*>& bw,
                               const std::vector<const float*>& aw, int channel,
                               double x, FactorizedCache* cache) {
  double cur[3] = {x, 0, 0};
  if (cache) cache->l[0][0] = x;
  const std::size_t n_layers = widths.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int w_in = widths[l], w_out = widths[l + 1];
    const float* H = hw[l] + static_cast<std::size_t>(channel) * w_out * w_in;
    const float* B = bw[l] + static_cast<std::size_t>(channel) * w_out;
    const float* A =
        aw[l] ? aw[l] + static_cast<std::size_t>(channel) * w_out : nullptr;
    double next[3] = {0, 0, 0};
    for (int j = 0; j < w_out; ++j) {
      double u = B[j];
      for (int i = 0; i < w_in; ++i) {
        u += dm::softplus_d(H[j * w_in + i]) * cur[i];
      }
      if (cache) cache->u[l][j] = u;
      if (A) {
        const double tu = dm::tanh_d(u);
        if (cache) cache->tu[l][j] = tu;
        next[j] = u + dm::tanh_d(A[j]) * tu;
      } else {
        next[j] = u;
      }
    }
    for (int j = 0; j < 3; ++j) cur[j] = next[j];
    if (cache) {
      for (int j = 0; j < 3; ++j) cache->l[l + 1][j] = cur[j];
    }
  }
  return cur[0];
}

// Backpropagates d(logit) into parameter/input gradients. Gradient layout
// mirrors the parameter tensors.
static double factorized_logit_backward(
    const std::vector<int>& widths, const std::vector<const float*>& hw,
    const std::vector<const float*>& aw, int channel,
    const FactorizedCache& cache, double d_logit, std::vector<float*>& dh,
    std::vector<float*>& db, std::vector<float*>& da) {
  const std::size_t n_layers = widths.size() - 1;
  double dcur[3] = {d_logit, 0, 0};
  for (std::size_t li = n_layers; li-- > 0;) {
    const int w_in = widths[li], w_out = widths[li + 1];
    const float* H = hw[li] + static_cast<std::size_t>(channel) * w_out * w_in;
    const float* A =
        aw[li] ? aw[li] + static_cast<std::size_t>(channel) * w_out : nullptr;
    float* dH = dh[li] ? dh[li] + static_cast<std::size_t>(channel) * w_out * w_in
                       : nullptr;
    float* dB =
        db[li] ? db[li] + static_cast<std::size_t>(channel) * w_out : nullptr;
    float* dA = (A && da[li])
                    ? da[li] + static_cast<std::size_t>(channel) * w_out
                    : nullptr;
    double dprev[3] = {0, 0, 0};
    for (int j = 0; j < w_out; ++j) {
      double du = dcur[j];
      if (A) {
        const double tu = cache.tu[li][j];
        const double ta = dm::tanh_d(A[j]);
        if (dA) {
          dA[j] += static_cast<float>(dcur[j] * tu * (1.0 - ta * ta));
        }
        du = dcur[j] * (1.0 + ta * (1.0 - tu * tu));
      }
      if (dB) dB[j] += static_cast<float>(du);
      for (int i = 0; i < w_in; ++i) {
        const double sp = dm::softplus_d(H[j * w_in + i]);
        if (dH) {
          dH[j * w_in + i] += static_cast<float>(
              du * cache.l[li][i] * dm::sigmoid_d(H[j * w_in + i]));
        }
        dprev[i] += du * sp;
      }
    }
    for (int i = 0; i < 3; ++i) dcur[i] = dprev[i];
  }
  return dcur[0]; // d(logit)/dx
}

double FactorizedModel::cdf(int channel, double x) const {
  std::vector<const float*> hw, bw, aw;
  for (const Layer& l : layers_) {
    hw.push_back(l.h->w.data());
    bw.push_back(l.b->w.data());
    aw.push_back(l.a ? l.a->w.data() : nullptr);
  }
  return dm::sigmoid_d(
      factorized_logit(widths_, hw, bw, aw, channel, x, nullptr));
}

std::vector<float> FactorizedModel::medians() const {
  std::vector<float> med(channels_);
  for (int c = 0; c < channels_; ++c) {
    double lo = -100.0, hi = 100.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (cdf(c, mid) < 0.5) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    med[c] = static_cast<float>(0.5 * (lo + hi));
  }
  return med;
}

ag::Node* FactorizedModel::likelihood(ag::Tape& tape, ParamBinder& bind,
                                      ag::Node* x) const {
  if (x->val.c() != channels_) {
    throw InternalError("FactorizedModel: channel mismatch");
  }
  std::vector<ag::Node*> hn, bn, an;
  std::vector<ag::Node*> parents = {x};
  for (const Layer& l : layers_) {
    hn.push_back(bind(*l.h));
    bn.push_back(bind(*l.b));
    an.push_back(l.a ? bind(*l.a) : nullptr);
    parents.push_back(hn.back());
    parents.push_back(bn.back());
    if (an.back()) parents.push_back(an.back());
  }

  std::vector<const float*> hw, bw, aw;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    hw.push_back(hn[l]->val.data());
    bw.push_back(bn[l]->val.data());
    aw.push_back(an[l] ? an[l]->val.data() : nullptr);
  }

  const Tensor& in = x->val;
  Tensor out = in;
  const std::size_t plane = in.plane();
  for (int n = 0; n < in.n(); ++n) {
    for (int c = 0; c < in.c(); ++c) {
      float* op = out.data() + (static_cast<std::size_t>(n) * in.c() + c) * plane;
      const float* ip =
          in.data() + (static_cast<std::size_t>(n) * in.c() + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xu = static_cast<double>(ip[i]) + 0.5;
        const double xl = static_cast<double>(ip[i]) - 0.5;
        const double p =
            dm::sigmoid_d(factorized_logit(widths_, hw, bw, aw, c, xu, nullptr)) -
            dm::sigmoid_d(factorized_logit(widths_, hw, bw, aw, c, xl, nullptr));
        op[i] = static_cast<float>(p < kLikelihoodFloor ? kLikelihoodFloor : p);
      }
    }
  }

  auto widths = widths_;
  return tape.make(std::move(out), parents,
                   [x, hn, bn, an, widths, plane](ag::Node& self) {
    std::vector<const float*> hw, bw, aw;
    std::vector<float*> dh, db, da;
    for (std::size_t l = 0; l < hn.size(); ++l) {
      hw.push_back(hn[l]->val.data());
      bw.push_back(bn[l]->val.data());
      aw.push_back(an[l] ? an[l]->val.data() : nullptr);
      dh.push_back(hn[l]->needs_grad ? hn[l]->g().data() : nullptr);
      db.push_back(bn[l]->needs_grad ? bn[l]->g().data() : nullptr);
      da.push_back((an[l] && an[l]->needs_grad) ? an[l]->g().data() : nullptr);
    }
    float* dx = x->needs_grad ? x->g().data() : nullptr;
    const Tensor& in = x->val;
    for (int n = 0; n < in.n(); ++n) {
      for (int c = 0; c < in.c(); ++c) {
        const std::size_t base =
            (static_cast<std::size_t>(n) * in.c() + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const float g = self.grad.v[base + i];
          if (g == 0.0f || self.val.v[base + i] <= kLikelihoodFloor) continue;
          double dxi = 0.0;
          for (int side = 0; side < 2; ++side) {
            const double pt = static_cast<double>(in.v[base + i]) +
                              (side == 0 ? 0.5 : -0.5);
            FactorizedCache cache;
            const double logit =
                factorized_logit(widths, hw, bw, aw, c, pt, &cache);
            const double s = dm::sigmoid_d(logit);
            const double dlogit =
                static_cast<double>(g) * (side == 0 ? 1.0 : -1.0) * s *
                (1.0 - s);
            dxi += factorized_logit_backward(widths, hw, aw, c, cache, dlogit,
                                             dh, db, da);
          }
          if (dx) dx[base + i] += static_cast<float>(dxi);
        }
      }
    }
  });
}

std::vector<float> FactorizedModel::likelihoods(const Tensor& x_hat) const {
  std::vector<float> out(x_hat.size());
  const std::size_t plane = x_hat.plane();
  for (int n = 0; n < x_hat.n(); ++n) {
    for (int c = 0; c < x_hat.c(); ++c) {
      const std::size_t base =
          (static_cast<std::size_t>(n) * x_hat.c() + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = x_hat.v[base + i];
        const double p = cdf(c, v + 0.5) - cdf(c, v - 0.5);
        out[base + i] =
            static_cast<float>(p < kLikelihoodFloor ? kLikelihoodFloor : p);
      }
    }
  }
  return out;
}

CdfTable FactorizedModel::build_cdf_table() const {
  CdfTable table;
  table.rows.resize(channels_);
  table.offsets.resize(channels_);
  const std::vector<float> med = medians();
  for (int c = 0; c < channels_; ++c) {
    int vmin = static_cast<int>(std::floor(med[c]));
    int vmax = static_cast<int>(std::ceil(med[c]));
    while (cdf(c, vmin - 0.5) > kTailMass * 0.5 && vmin > -kMaxSupportRadius) {
      --vmin;
    }
    while (1.0 - cdf(c, vmax + 0.5) > kTailMass * 0.5 &&
           vmax < kMaxSupportRadius) {
      ++vmax;
    }
    std::vector<double> pmf;
    pmf.reserve(vmax - vmin + 1);
    for (int i = vmin; i <= vmax; ++i) {
      pmf.push_back(cdf(c, i + 0.5) - cdf(c, i - 0.5));
    }
    const double tail = cdf(c, vmin - 0.5) + (1.0 - cdf(c, vmax + 0.5));
    table.rows[c] = quantize_pmf(pmf, tail);
    table.offsets[c] = vmin;
  }
  return table;
}

// --- GaussianConditional ---

GaussianConditional::GaussianConditional() {
  scale_table_.resize(kScaleLevels);
  const double lo = dm::log_d(kScaleFloor);
  const double hi = dm::log_d(kScaleMax);
  for (int i = 0; i < kScaleLevels; ++i) {
    scale_table_[i] =
        dm::exp_d(lo + (hi - lo) * static_cast<double>(i) / (kScaleLevels - 1));
  }
}

double GaussianConditional::scale_from_raw(double raw) const {
  return kScaleFloor + dm::softplus_d(raw);
}

int GaussianConditional::scale_index(double sigma) const {
  for (int i = 0; i < kScaleLevels; ++i) {
    if (sigma <= scale_table_[i]) return i;
  }
  return kScaleLevels - 1;
}

namespace {

inline double gauss_bin_mass(double delta, double sigma) {
  return dm::normal_cdf_d((delta + 0.5) / sigma) -
         dm::normal_cdf_d((delta - 0.5) / sigma);
}

} // namespace

ag::Node* GaussianConditional::likelihood(ag::Tape& tape, ag::Node* y_tilde,
                                          ag::Node* means,
                                          ag::Node* scales_raw) const {
  require_same_shape(y_tilde->val, means->val, "GaussianConditional");
  require_same_shape(y_tilde->val, scales_raw->val, "GaussianConditional");
  Tensor out = y_tilde->val;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double sigma = scale_from_raw(scales_raw->val.v[i]);
    const double delta =
        static_cast<double>(y_tilde->val.v[i]) - means->val.v[i];
    const double p = gauss_bin_mass(delta, sigma);
    out.v[i] = static_cast<float>(p < kLikelihoodFloor ? kLikelihoodFloor : p);
  }
  return tape.make(std::move(out), {y_tilde, means, scales_raw},
                   [y_tilde, means, scales_raw](ag::Node& self) {
    float* dy = y_tilde->needs_grad ? y_tilde->g().data() : nullptr;
    float* dmu = means->needs_grad ? means->g().data() : nullptr;
    float* dsr = scales_raw->needs_grad ? scales_raw->g().data() : nullptr;
    for (std::size_t i = 0; i < self.val.size(); ++i) {
      const float g = self.grad.v[i];
      if (g == 0.0f || self.val.v[i] <= kLikelihoodFloor) continue;
      const double raw = scales_raw->val.v[i];
      const double sigma = kScaleFloor + dm::softplus_d(raw);
      const double delta =
          static_cast<double>(y_tilde->val.v[i]) - means->val.v[i];
      const double a = (delta + 0.5) / sigma;
      const double b = (delta - 0.5) / sigma;
      const double pa = dm::normal_pdf_d(a);
      const double pb = dm::normal_pdf_d(b);
      const double d_delta = static_cast<double>(g) * (pa - pb) / sigma;
      if (dy) dy[i] += static_cast<float>(d_delta);
      if (dmu) dmu[i] -= static_cast<float>(d_delta);
      if (dsr) {
        const double d_sigma =
            -static_cast<double>(g) * (pa * a - pb * b) / sigma;
        dsr[i] += static_cast<float>(d_sigma * dm::sigmoid_d(raw));
      }
    }
  });
}

std::vector<float> GaussianConditional::likelihoods(
    const Tensor& y_hat, const Tensor& means, const Tensor& scales_raw) const {
  require_same_shape(y_hat, means, "GaussianConditional::likelihoods");
  require_same_shape(y_hat, scales_raw, "GaussianConditional::likelihoods");
  std::vector<float> out(y_hat.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double sigma = scale_from_raw(scales_raw.v[i]);
    const double delta = static_cast<double>(y_hat.v[i]) - means.v[i];
    const double p = gauss_bin_mass(delta, sigma);
    out[i] = static_cast<float>(p < kLikelihoodFloor ? kLikelihoodFloor : p);
  }
  return out;
}

CdfTable GaussianConditional::build_cdf_table() const {
  CdfTable table;
  table.rows.resize(kScaleLevels);
  table.offsets.resize(kScaleLevels);
  for (int j = 0; j < kScaleLevels; ++j) {
    const double sigma = scale_table_[j];
    int radius = 0;
    while (2.0 * dm::normal_cdf_d(-(radius + 0.5) / sigma) > kTailMass &&
           radius < kMaxSupportRadius) {
      ++radius;
    }
    std::vector<double> pmf;
    pmf.reserve(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) {
      pmf.push_back(gauss_bin_mass(static_cast<double>(i), sigma));
    }
    const double tail = 2.0 * dm::normal_cdf_d(-(radius + 0.5) / sigma);
    table.rows[j] = quantize_pmf(pmf, tail);
    table.offsets[j] = -radius;
  }
  return table;
}

std::vector<std::int32_t> GaussianConditional::row_indices(
    const Tensor& scales_raw) const {
  std::vector<std::int32_t> rows(scales_raw.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i] = scale_index(scale_from_raw(scales_raw.v[i]));
  }
  return rows;
}

} // namespace kmfv
