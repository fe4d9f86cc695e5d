#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kmfv/frame.hpp"
#include "kmfv/nn.hpp"

namespace kmfv {

enum class InterpolatorKind { AverageBaseline, SmallLearned };

struct InterpolatorSpec {
  InterpolatorKind kind = InterpolatorKind::SmallLearned;
  std::string checkpoint_id;
  bool frozen = true; // always true while the codec trains
};

// Produces the temporal-midpoint reference from the two reconstructed
// neighbors. The learned variant is a small U-shaped network predicting a
// residual on top of the frame average; it runs on both the encoder and the
// decoder side, so its forward pass stays on the deterministic kernels.
class Interpolator {
public:
  // Average baseline: (ref0 + ref2) / 2.
  Interpolator();
  // Learned variant; registers parameters under "interp." in the store
  // (initializing them when absent).
  Interpolator(ParameterStore& store, int base_channels,
               std::uint64_t init_seed);

  static Interpolator attach(ParameterStore& store); // bind loaded params

  InterpolatorKind kind() const { return kind_; }
  int base_channels() const { return channels_; }

  Frame interpolate(const Frame& ref0, const Frame& ref2) const;

  // Graph builder; gradients flow through to ref0/ref2 while the parameters
  // themselves stay frozen (or trainable during pretraining).
  ag::Node* apply(ag::Tape& t, ParamBinder& bind, ag::Node* ref0,
                  ag::Node* ref2) const;

private:
  InterpolatorKind kind_;
  ParameterStore* store_ = nullptr;
  int channels_ = 0;
  Conv2dLayer c0_, c1_, c2_, d1_, d0_, out_;
};

struct InterpPretrainConfig {
  int epochs = 3;
  int steps_per_epoch = 120;
  int batch_size = 2;
  int patch = 64;
  int base_channels = 52; // ~0.5M parameters
  double learning_rate = 1e-4;
  std::uint64_t seed = 1;
  int dataset_sequences = 24;
  int dataset_size = 96; // source frame size for crops
};

struct InterpPretrainResult {
  ParameterStore store;
  std::vector<double> epoch_losses;
};

// Trains the learned interpolator on synthetic motion triples, then marks it
// frozen. epochs == 0 returns the initialized checkpoint untouched.
InterpPretrainResult pretrain_interpolator(const InterpPretrainConfig& cfg);

} // namespace kmfv
