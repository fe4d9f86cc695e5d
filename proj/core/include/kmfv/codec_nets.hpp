#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "kmfv/entropy.hpp"
#include "kmfv/frame.hpp"
#include "kmfv/kernel_synthesis.hpp"
#include "kmfv/nn.hpp"
#include "kmfv/tensor.hpp"

namespace kmfv {

struct ModelConfig {
  int latent_channels = 128; // M
  int hyper_channels = 96;   // N
  int head_channels = 64;    // K
  int kernel_size = 31;      // KS
  bool use_interpolator = true;
  int downsample_stages = 4;

  void validate() const;
  int spatial_multiple() const { return 64; } // 4 codec + 2 hyper stride-2 stages
  std::string to_json() const;
  static ModelConfig from_json(const std::string& s);
};

struct LatentBundle {
  Tensor y_hat;
  Tensor z_hat;
  std::vector<float> y_likelihoods;
  std::vector<float> z_likelihoods;
};

Tensor frame_to_tensor(const Frame& f);
Frame tensor_to_frame(const Tensor& t, int batch_index = 0,
                      bool clamp = true);

// Fixed architecture behind the Fig.3 constants:
//   encoder     4x [5x5 conv /2, M ch] with leaky ReLU between stages
//   hyper enc   3x3 conv + 2x [5x5 conv /2, N ch]
//   hyper dec   2x [x2 upsample + 3x3 conv] + 1x1 conv -> 2M (means, scales)
//   dec trunk   4x [x2 upsample + 3x3 conv], ending at K channels
//   each head   3x3 conv K->K + 1x1 conv K->KS
// Nonlinearity everywhere: leaky ReLU (0.2), recorded in checkpoint metadata.
class CodecModel {
public:
  CodecModel(ParameterStore& store, ModelConfig cfg,
             std::uint64_t init_seed = 0);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& store() { return *store_; }

  // --- graph builders (training and inference share these) ---
  ag::Node* b_analysis(ag::Tape& t, ParamBinder& bind, ag::Node* current,
                       const std::vector<ag::Node*>& refs) const;
  ag::Node* b_hyper_encode(ag::Tape& t, ParamBinder& bind, ag::Node* y) const;
  std::pair<ag::Node*, ag::Node*> b_hyper_decode(ag::Tape& t, ParamBinder& bind,
                                                 ag::Node* z_hat) const;
  // Decoder trunk + kernel heads; returns 6 (or 4) maps of KS channels.
  std::vector<ag::Node*> b_kernel_maps(ag::Tape& t, ParamBinder& bind,
                                       ag::Node* y_hat) const;

  ag::Node* i_analysis(ag::Tape& t, ParamBinder& bind, ag::Node* x) const;
  ag::Node* i_synthesis(ag::Tape& t, ParamBinder& bind, ag::Node* y_hat) const;
  ag::Node* i_hyper_encode(ag::Tape& t, ParamBinder& bind, ag::Node* y) const;
  std::pair<ag::Node*, ag::Node*> i_hyper_decode(ag::Tape& t, ParamBinder& bind,
                                                 ag::Node* z_hat) const;

  const FactorizedModel& b_factorized() const { return *b_fact_; }
  const FactorizedModel& i_factorized() const { return *i_fact_; }
  const GaussianConditional& gaussian() const { return gauss_; }

  // --- deterministic inference operations ---

  // Analysis transform of a padded frame given its references. The frame
  // dimensions must divide spatial_multiple(); fails with a message pointing
  // at pad_to_multiple otherwise.
  Tensor encode_b(const Frame& current, const ReferenceTriple& refs) const;

  struct BDecodeResult {
    Frame frame; // clamped to [0,1]
    KernelField field;
  };
  BDecodeResult decode_b(const Tensor& y_hat, const ReferenceTriple& refs) const;

  struct HyperRoundTrip {
    Tensor z;
    Tensor z_hat;
    Tensor means;
    Tensor scales_raw;
  };
  HyperRoundTrip hyper_round_trip(const Tensor& y, bool iframe) const;

  Tensor hyper_encode(const Tensor& y, bool iframe) const;
  std::pair<Tensor, Tensor> hyper_decode(const Tensor& z_hat,
                                         bool iframe) const;

  Tensor encode_i(const Frame& frame) const;
  Frame decode_i(const Tensor& y_hat) const;

  static void check_coded_dims(const Frame& f, int multiple);

private:
  std::vector<ag::Node*> head_stack(ag::Tape& t, ParamBinder& bind,
                                    ag::Node* feat) const;

  ParameterStore* store_;
  ModelConfig cfg_;

  std::vector<Conv2dLayer> b_enc_, b_dec_, i_enc_, i_dec_;
  Conv2dLayer i_out_;
  std::vector<Conv2dLayer> b_henc_, b_hdec_, i_henc_, i_hdec_;
  Conv2dLayer b_hdec_out_, i_hdec_out_;
  struct Head {
    Conv2dLayer c0, c1;
  };
  std::vector<Head> heads_; // v0 h0 v2 h2 [vi hi]

  std::unique_ptr<FactorizedModel> b_fact_, i_fact_;
  GaussianConditional gauss_;
};

// Table-3 style per-module size report.
struct ParamGroupRow {
  std::string label;
  std::size_t param_count = 0;
  double share_pct = 0.0;
};
std::vector<ParamGroupRow> parameter_report(const ParameterStore& store);

constexpr const char* kNonlinearityTag = "leaky_relu(0.2)";

} // namespace kmfv
