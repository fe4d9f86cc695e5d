#include "kmfv/interpolation.hpp"

#include <cmath>

#include "kmfv/codec_nets.hpp"
#include "kmfv/errors.hpp"
#include "kmfv/media_io.hpp"

namespace kmfv {

namespace {
constexpr float kAlpha = 0.2f;
}

Interpolator::Interpolator() : kind_(InterpolatorKind::AverageBaseline) {}

Interpolator::Interpolator(ParameterStore& store, int base_channels,
                           std::uint64_t init_seed)
    : kind_(InterpolatorKind::SmallLearned), store_(&store),
      channels_(base_channels) {
  const int f = base_channels;
  c0_ = make_conv(store, "interp.c0", 6, f, 3, 1, init_seed);
  c1_ = make_conv(store, "interp.c1", f, 2 * f, 3, 2, init_seed);
  c2_ = make_conv(store, "interp.c2", 2 * f, 4 * f, 3, 2, init_seed);
  d1_ = make_conv(store, "interp.d1", 4 * f, 2 * f, 3, 1, init_seed);
  d0_ = make_conv(store, "interp.d0", 2 * f, f, 3, 1, init_seed);
  out_ = make_conv(store, "interp.out", f, 3, 3, 1, init_seed, 0.01);
  store.set_metadata("interp_channels", std::to_string(base_channels));
}

Interpolator Interpolator::attach(ParameterStore& store) {
  const std::string ch = store.metadata("interp_channels");
  if (ch.empty() || !store.has("interp.c0.w")) {
    throw DataError("interpolator: checkpoint has no interp parameters");
  }
  return Interpolator(store, std::stoi(ch), 0);
}

ag::Node* Interpolator::apply(ag::Tape& t, ParamBinder& bind, ag::Node* ref0,
                              ag::Node* ref2) const {
  ag::Node* avg = ag::scale(t, ag::add(t, ref0, ref2), 0.5f);
  if (kind_ == InterpolatorKind::AverageBaseline) return avg;

  ag::Node* x0 = ag::leaky_relu(
      t, apply_conv(t, bind, c0_, ag::concat_c(t, {ref0, ref2})), kAlpha);
  ag::Node* x1 = ag::leaky_relu(t, apply_conv(t, bind, c1_, x0), kAlpha);
  ag::Node* x2 = ag::leaky_relu(t, apply_conv(t, bind, c2_, x1), kAlpha);
  ag::Node* u1 = ag::leaky_relu(
      t, apply_conv(t, bind, d1_, ag::upsample2(t, x2)), kAlpha);
  u1 = ag::add(t, u1, x1);
  ag::Node* u0 = ag::leaky_relu(
      t, apply_conv(t, bind, d0_, ag::upsample2(t, u1)), kAlpha);
  u0 = ag::add(t, u0, x0);
  ag::Node* delta = apply_conv(t, bind, out_, u0);
  return ag::clamp01(t, ag::add(t, avg, delta));
}

Frame Interpolator::interpolate(const Frame& ref0, const Frame& ref2) const {
  if (!ref0.same_size(ref2)) {
    throw DataError("interpolate: reference dimension mismatch");
  }
  if (kind_ == InterpolatorKind::SmallLearned &&
      (ref0.width % 4 != 0 || ref0.height % 4 != 0)) {
    throw UsageError("interpolate: learned variant needs dims divisible by 4");
  }
  ag::Tape t;
  ParamBinder bind(t, /*trainable=*/false);
  ag::Node* out = apply(t, bind, t.leaf(frame_to_tensor(ref0)),
                        t.leaf(frame_to_tensor(ref2)));
  return tensor_to_frame(out->val, 0, /*clamp=*/true);
}

InterpPretrainResult pretrain_interpolator(const InterpPretrainConfig& cfg) {
  InterpPretrainResult result;
  Interpolator net(result.store, cfg.base_channels, cfg.seed ^ 0x17);
  result.store.set_metadata("kind", "interpolator");
  result.store.set_metadata("seed", std::to_string(cfg.seed));

  if (cfg.epochs == 0) return result;

  Rng data_rng(cfg.seed * 2654435761ULL + 1);
  // mixed-velocity translating textures plus a rotating set
  std::vector<VideoSequence> seqs;
  for (int i = 0; i < cfg.dataset_sequences; ++i) {
    SyntheticOptions opt;
    opt.velocity_x = data_rng.uniform(-3.0, 3.0);
    opt.velocity_y = data_rng.uniform(-3.0, 3.0);
    opt.rotation_deg_per_frame = data_rng.uniform(-2.0, 2.0);
    const SyntheticKind kind = (i % 4 == 3) ? SyntheticKind::RotatingPattern
                                            : SyntheticKind::TranslatingTexture;
    seqs.push_back(
        make_synthetic_sequence(kind, 9, cfg.dataset_size, cfg.seed + i, opt));
  }

  Adam adam({.lr = static_cast<float>(cfg.learning_rate),
             .clip_norm = 1.0f});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      ag::Tape tape;
      ParamBinder bind(tape);
      Tensor r0(cfg.batch_size, 3, cfg.patch, cfg.patch);
      Tensor r2(cfg.batch_size, 3, cfg.patch, cfg.patch);
      Tensor mid(cfg.batch_size, 3, cfg.patch, cfg.patch);
      const std::size_t img = static_cast<std::size_t>(3) * cfg.patch * cfg.patch;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const VideoSequence& seq = seqs[data_rng.below(seqs.size())];
        const int t0 = static_cast<int>(data_rng.below(seq.size() - 2));
        std::array<const Frame*, 5> ptrs = {&seq.frames[t0], &seq.frames[t0 + 1],
                                            &seq.frames[t0 + 2], &seq.frames[t0],
                                            &seq.frames[t0]};
        TrainingTuple tup = crop_tuple(ptrs, cfg.patch, data_rng);
        std::copy(tup.frames[0].data.begin(), tup.frames[0].data.end(),
                  r0.v.begin() + b * img);
        std::copy(tup.frames[1].data.begin(), tup.frames[1].data.end(),
                  mid.v.begin() + b * img);
        std::copy(tup.frames[2].data.begin(), tup.frames[2].data.end(),
                  r2.v.begin() + b * img);
      }
      ag::Node* pred =
          net.apply(tape, bind, tape.leaf(std::move(r0)), tape.leaf(std::move(r2)));
      ag::Node* loss = ag::mean_sq_err(tape, pred, mid);
      const double loss_v = loss->val.v[0];
      if (!std::isfinite(loss_v)) {
        throw InternalError("pretrain_interpolator: non-finite loss");
      }
      result.store.zero_grads();
      tape.backward(loss);
      bind.collect_grads();
      adam.step(result.store);
      epoch_loss += loss_v;
    }
    result.epoch_losses.push_back(epoch_loss / cfg.steps_per_epoch);
  }
  result.store.freeze_prefix("interp.");
  return result;
}

} // namespace kmfv
