#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kmfv/codec_nets.hpp"
#include "kmfv/frame.hpp"
#include "kmfv/gop.hpp"
#include "kmfv/interpolation.hpp"
#include "kmfv/nn.hpp"

namespace kmfv {

struct TrainConfig {
  double base_lambda = 0.01; // paper set: {0.005, 0.01, 0.03, 0.05}
  double learning_rate = 1e-4;
  int batch_size = 8;
  int patch = 256;
  int epochs = 1;
  int steps_per_epoch = 100;
  std::uint64_t seed = 0;
  ModelConfig model;

  // Rate is charged per pixel inside the loss; distortion is MSE on [0,1]
  // samples scaled by 255^2 so the paper's lambda magnitudes balance the two
  // terms. Both knobs are exposed because the reference text fixes neither.
  bool rate_per_pixel = true;
  double distortion_scale = 255.0 * 255.0;
  bool straight_through = false; // round+STE instead of additive noise
  double grad_clip = 1.0;

  int checkpoint_every = 0; // steps; 0 disables periodic checkpoints
  int interp_channels = 52;

  void validate() const;
};

struct FrameLossTerm {
  int display_index = 0;
  int level = 0;
  double lambda = 0.0;
  double distortion = 0.0; // scaled MSE, as it enters the loss
  double rate = 0.0;       // bits (normalized per pixel when enabled)
  double mse = 0.0;        // raw per-sample MSE
};

struct StepReport {
  int step = 0;
  std::vector<FrameLossTerm> frames;
  double loss = 0.0;      // == sum lambda*D + R as summed
  double grad_norm = 0.0; // pre-clip global norm
};

struct RdLossOptions {
  bool rate_per_pixel = false;
  std::size_t pixels_per_frame = 0; // required when rate_per_pixel
  double distortion_scale = 1.0;
};

// Eq.2 objective over a GoP: sum_f lambda_f * D_f + R_f.
double rd_loss(const std::vector<Frame>& originals,
               const std::vector<Frame>& reconstructions,
               const std::vector<double>& bits_per_frame,
               const std::vector<double>& lambdas,
               const RdLossOptions& opt = {});

// Synthetic stand-in for a training corpus: a pool of sequences from which
// 5-frame tuples are cropped.
class TupleDataset {
public:
  TupleDataset(int n_sequences, int frame_size, std::uint64_t seed);
  explicit TupleDataset(std::vector<VideoSequence> seqs);
  TrainingTuple sample(int patch, Rng& rng) const;
  const std::vector<VideoSequence>& sequences() const { return seqs_; }

private:
  std::vector<VideoSequence> seqs_;
};

struct TrainResult {
  ParameterStore store;
  std::vector<StepReport> log;
};

class Trainer {
public:
  // The pretrained interpolator checkpoint is copied into the codec store
  // and frozen; pass nullptr when cfg.model.use_interpolator is false.
  Trainer(const TrainConfig& cfg, const ParameterStore* interp_checkpoint);

  StepReport step(const TupleDataset& data);
  ParameterStore& store() { return store_; }
  CodecModel& model() { return *model_; }
  int steps_done() const { return step_count_; }

private:
  TrainConfig cfg_;
  ParameterStore store_;
  std::unique_ptr<CodecModel> model_;
  std::unique_ptr<Interpolator> interp_;
  Adam adam_;
  Rng data_rng_;
  Rng noise_rng_;
  int step_count_ = 0;
};

// Full loop; writes a CSV metrics log (step, frame_level, D, R_bpp, loss)
// when csv_path is nonempty and periodic checkpoints to checkpoint_path.
TrainResult train(const TupleDataset& data, const TrainConfig& cfg,
                  const ParameterStore* interp_checkpoint,
                  const std::string& csv_path = "",
                  const std::string& checkpoint_path = "");

} // namespace kmfv
