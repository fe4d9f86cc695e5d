#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kmfv/autograd.hpp"
#include "kmfv/nn.hpp"
#include "kmfv/rng.hpp"
#include "kmfv/tensor.hpp"

namespace kmfv {

// --- quantization ---

enum class QuantizationMode {
  AdditiveUniformNoise, // training surrogate
  Round                 // inference
};

// Noise mode: x + U(-0.5, 0.5) (rng required). Round mode: round(x - means)
// + means; plain rounding when means is null.
Tensor quantize(const Tensor& x, QuantizationMode mode,
                const Tensor* means = nullptr, Rng* rng = nullptr);

// --- rate estimation ---

// -sum log2(p). Throws InternalError on a nonpositive likelihood (that is a
// model bug, not a data condition).
double estimate_bits(const std::vector<float>& likelihoods);

// Autograd counterpart: scalar -sum log2(p) over a likelihood node.
ag::Node* bits_from_likelihoods(ag::Tape& tape, ag::Node* likelihoods);

// --- integer CDF tables ---

enum class EntropyModelId : std::uint8_t { FactorizedZ = 0, GaussianY = 1 };

// Per-row quantized CDFs at 16-bit precision. Row r covers integer symbols
// [offset[r], offset[r] + regular_count(r)); the final slot is the tail
// escape. cdf rows are monotone with cdf.front()==0 and cdf.back()==65536.
struct CdfTable {
  std::vector<std::vector<std::uint32_t>> rows;
  std::vector<std::int32_t> offsets;

  int regular_count(std::size_t r) const {
    return static_cast<int>(rows[r].size()) - 2;
  }
  // Table-model likelihood of an in-support symbol.
  double table_likelihood(std::size_t r, std::int32_t symbol) const;
};

struct CodedChunk {
  std::vector<std::uint8_t> payload;
  std::uint32_t symbol_count = 0;
  EntropyModelId model_id = EntropyModelId::FactorizedZ;
};

// Wire format: [u32 LE payload length][payload bytes].
void write_chunk(std::vector<std::uint8_t>& out, const CodedChunk& chunk);
CodedChunk read_chunk(const std::uint8_t* data, std::size_t size,
                      std::size_t& pos, std::uint32_t symbol_count,
                      EntropyModelId model_id);

// Symbols outside a row's regular support are sent as escape + Elias-gamma
// distance, so the latent channel stays lossless for any integer.
CodedChunk range_encode(const std::vector<std::int32_t>& symbols,
                        const CdfTable& table,
                        const std::vector<std::int32_t>& row_of_symbol,
                        EntropyModelId model_id);
std::vector<std::int32_t> range_decode(
    const CodedChunk& chunk, const CdfTable& table,
    const std::vector<std::int32_t>& row_of_symbol);

// pmf (plus explicit tail mass) -> integer CDF row with total 65536 and no
// zero-width slot.
std::vector<std::uint32_t> quantize_pmf(const std::vector<double>& pmf,
                                        double tail_mass);

// --- learned factorized prior (hyper-latent z) ---
//
// Per-channel monotone MLP modeling the cumulative distribution; widths
// 1-3-3-3-1. Matrices pass through softplus, gates through tanh, so the CDF
// is monotone by construction.
class FactorizedModel {
public:
  FactorizedModel(ParameterStore& store, const std::string& prefix,
                  int channels, std::uint64_t init_seed);

  int channels() const { return channels_; }

  // CDF value at x for one channel (deterministic math).
  double cdf(int channel, double x) const;
  // Median per channel (bisection on cdf == 0.5), used as rounding offset.
  std::vector<float> medians() const;

  // Autograd likelihood of x~ (shape [n, C, h, w]).
  ag::Node* likelihood(ag::Tape& tape, ParamBinder& bind, ag::Node* x) const;
  // Plain likelihoods for inference-side rate estimates.
  std::vector<float> likelihoods(const Tensor& x_hat) const;

  // One row per channel, support sized so that <= kTailMass probability is
  // left to the escape slot.
  CdfTable build_cdf_table() const;

  static constexpr double kTailMass = 1e-9;

private:
  struct Layer {
    Param* h;
    Param* b;
    Param* a; // null on the last layer
  };
  ParameterStore* store_;
  std::string prefix_;
  int channels_;
  std::vector<Layer> layers_;
  std::vector<int> widths_;
};

// --- Gaussian conditional (main latent y) ---
//
// Likelihood of y~ under N(mean, scale^2) integrated over unit bins. Scales
// are parameterized as floor + softplus(raw) so they stay above the floor
// with a live gradient everywhere.
class GaussianConditional {
public:
  GaussianConditional();

  static constexpr double kScaleFloor = 0.11;
  static constexpr double kScaleMax = 16.0;
  static constexpr int kScaleLevels = 64;
  static constexpr double kTailMass = 1e-9;

  double scale_from_raw(double raw) const;
  // Index of the smallest table scale >= sigma (last row if above range).
  int scale_index(double sigma) const;
  const std::vector<double>& scale_table() const { return scale_table_; }

  // Autograd likelihood; inputs [n,c,h,w] alike.
  ag::Node* likelihood(ag::Tape& tape, ag::Node* y_tilde, ag::Node* means,
                       ag::Node* scales_raw) const;
  std::vector<float> likelihoods(const Tensor& y_hat, const Tensor& means,
                                 const Tensor& scales_raw) const;

  CdfTable build_cdf_table() const; // kScaleLevels rows
  std::vector<std::int32_t> row_indices(const Tensor& scales_raw) const;

private:
  std::vector<double> scale_table_;
};

} // namespace kmfv
