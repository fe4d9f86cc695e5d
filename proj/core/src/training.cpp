#include "kmfv/training.hpp"

#include <cmath>
#include <fstream>

#include "kmfv/errors.hpp"
#include "kmfv/media_io.hpp"

namespace kmfv {

void TrainConfig::validate() const {
  if (!(base_lambda > 0.0)) {
    throw UsageError("TrainConfig: base_lambda must be positive");
  }
  if (batch_size <= 0 || patch <= 0 || epochs < 0 || steps_per_epoch <= 0) {
    throw UsageError("TrainConfig: bad loop sizes");
  }
  if (patch % model.spatial_multiple() != 0) {
    throw UsageError("TrainConfig: patch must divide " +
                     std::to_string(model.spatial_multiple()));
  }
  model.validate();
}

double rd_loss(const std::vector<Frame>& originals,
               const std::vector<Frame>& reconstructions,
               const std::vector<double>& bits_per_frame,
               const std::vector<double>& lambdas, const RdLossOptions& opt) {
  const std::size_t n = originals.size();
  if (reconstructions.size() != n || bits_per_frame.size() != n ||
      lambdas.size() != n) {
    throw UsageError("rd_loss: per-frame list length mismatch");
  }
  if (opt.rate_per_pixel && opt.pixels_per_frame == 0) {
    throw UsageError("rd_loss: pixels_per_frame required for per-pixel rate");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!originals[i].same_size(reconstructions[i])) {
      throw UsageError("rd_loss: frame dimension mismatch at " +
                       std::to_string(i));
    }
    double se = 0.0;
    for (std::size_t j = 0; j < originals[i].data.size(); ++j) {
      const double d = static_cast<double>(originals[i].data[j]) -
                       reconstructions[i].data[j];
      se += d * d;
    }
    const double mse = se / static_cast<double>(originals[i].data.size());
    const double rate = opt.rate_per_pixel
                            ? bits_per_frame[i] /
                                  static_cast<double>(opt.pixels_per_frame)
                            : bits_per_frame[i];
    loss += lambdas[i] * opt.distortion_scale * mse + rate;
  }
  return loss;
}

TupleDataset::TupleDataset(int n_sequences, int frame_size, std::uint64_t seed) {
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + 17);
  seqs_.reserve(n_sequences);
  for (int i = 0; i < n_sequences; ++i) {
    SyntheticOptions opt;
    opt.velocity_x = rng.uniform(-2.5, 2.5);
    opt.velocity_y = rng.uniform(-2.5, 2.5);
    opt.rotation_deg_per_frame = rng.uniform(-2.0, 2.0);
    opt.noise_amplitude = 0.015;
    SyntheticKind kind = SyntheticKind::TranslatingTexture;
    if (i % 5 == 3) kind = SyntheticKind::RotatingPattern;
    if (i % 5 == 4) kind = SyntheticKind::NoiseFloor;
    seqs_.push_back(make_synthetic_sequence(kind, 7, frame_size, seed + i, opt));
  }
}

TupleDataset::TupleDataset(std::vector<VideoSequence> seqs)
    : seqs_(std::move(seqs)) {}

TrainingTuple TupleDataset::sample(int patch, Rng& rng) const {
  const VideoSequence& seq = seqs_[rng.below(seqs_.size())];
  const int t0 = static_cast<int>(rng.below(seq.size() - 4));
  std::array<const Frame*, 5> ptrs;
  for (int i = 0; i < 5; ++i) ptrs[i] = &seq.frames[t0 + i];
  return crop_tuple(ptrs, patch, rng);
}

Trainer::Trainer(const TrainConfig& cfg, const ParameterStore* interp_checkpoint)
    : cfg_(cfg),
      adam_({.lr = static_cast<float>(cfg.learning_rate),
             .clip_norm = static_cast<float>(cfg.grad_clip)}),
      data_rng_(cfg.seed * 0xD1B54A32D192ED03ULL + 2),
      noise_rng_(cfg.seed * 0x2545F4914F6CDD1DULL + 3) {
  cfg_.validate();
  if (cfg_.model.use_interpolator) {
    if (!interp_checkpoint || !interp_checkpoint->has("interp.c0.w")) {
      throw UsageError(
          "train: an interpolator checkpoint is required (pretrain-interp "
          "first) unless use_interpolator is off");
    }
    for (const auto& [name, p] : interp_checkpoint->all()) {
      if (name.rfind("interp.", 0) != 0) continue;
      Param& dst = store_.add(name, p.w.n(), p.w.c(), p.w.h(), p.w.w());
      dst.w = p.w;
    }
    store_.set_metadata("interp_channels",
                        interp_checkpoint->metadata("interp_channels"));
    store_.freeze_prefix("interp.");
    interp_ = std::make_unique<Interpolator>(Interpolator::attach(store_));
  }
  model_ = std::make_unique<CodecModel>(store_, cfg_.model, cfg_.seed);
  store_.set_metadata("kind", "codec");
  store_.set_metadata("base_lambda", std::to_string(cfg_.base_lambda));
  store_.set_metadata("seed", std::to_string(cfg_.seed));
}

StepReport Trainer::step(const TupleDataset& data) {
  const int bs = cfg_.batch_size;
  const int patch = cfg_.patch;
  const std::size_t img = static_cast<std::size_t>(3) * patch * patch;

  // stack tuples into one tensor per display position
  std::vector<Tensor> display(5, Tensor(bs, 3, patch, patch));
  for (int b = 0; b < bs; ++b) {
    const TrainingTuple tup = data.sample(patch, data_rng_);
    for (int f = 0; f < 5; ++f) {
      std::copy(tup.frames[f].data.begin(), tup.frames[f].data.end(),
                display[f].v.begin() + b * img);
    }
  }

  ag::Tape tape;
  ParamBinder bind(tape);
  CodecModel& m = *model_;
  const GoPSchedule sched = training_schedule();

  auto quantize_node = [&](ag::Node* x) {
    return cfg_.straight_through ? ag::ste_round(tape, x)
                                 : ag::add_uniform_noise(tape, x, noise_rng_);
  };

  std::vector<ag::Node*> recon(5, nullptr);     // clamped, reference use
  std::vector<ag::Node*> d_terms(5, nullptr);   // MSE nodes
  std::vector<ag::Node*> r_terms(5, nullptr);   // bits nodes
  std::vector<int> levels(5, 0);

  for (const CodingStep& cs : sched.steps) {
    const int f = cs.display_index;
    ag::Node* x = tape.leaf(display[f]);
    levels[f] = cs.level;
    ag::Node* recon_raw = nullptr;
    ag::Node* y = nullptr;
    const bool iframe = cs.frame_type == FrameType::I;
    std::vector<ag::Node*> refs;

    if (iframe) {
      y = m.i_analysis(tape, bind, x);
    } else {
      refs = {recon[cs.ref_prev], recon[cs.ref_next]};
      if (cfg_.model.use_interpolator) {
        refs.push_back(interp_->apply(tape, bind, refs[0], refs[1]));
      }
      y = m.b_analysis(tape, bind, x, refs);
    }

    ag::Node* z = iframe ? m.i_hyper_encode(tape, bind, y)
                         : m.b_hyper_encode(tape, bind, y);
    ag::Node* z_t = quantize_node(z);
    const FactorizedModel& fact = iframe ? m.i_factorized() : m.b_factorized();
    ag::Node* pz = fact.likelihood(tape, bind, z_t);
    auto [means, scales_raw] = iframe ? m.i_hyper_decode(tape, bind, z_t)
                                      : m.b_hyper_decode(tape, bind, z_t);
    ag::Node* y_t = quantize_node(y);
    ag::Node* py = m.gaussian().likelihood(tape, y_t, means, scales_raw);

    if (iframe) {
      recon_raw = m.i_synthesis(tape, bind, y_t);
    } else {
      recon_raw =
          ag::kernel_synthesis(tape, m.b_kernel_maps(tape, bind, y_t), refs);
    }

    recon[f] = ag::clamp01(tape, recon_raw);
    d_terms[f] = ag::mean_sq_err(tape, recon_raw, display[f]);
    r_terms[f] = ag::add(tape, bits_from_likelihoods(tape, py),
                         bits_from_likelihoods(tape, pz));
  }

  // Loss = sum_f lambda_f * scale * D_f + R_f (rate normalized per pixel).
  const double pixels = static_cast<double>(patch) * patch;
  const double rate_norm =
      cfg_.rate_per_pixel ? 1.0 / (bs * pixels) : 1.0 / bs;
  std::vector<ag::Node*> terms;
  std::vector<float> coeffs;
  StepReport report;
  report.step = step_count_;
  double reported_loss = 0.0;
  for (int f = 0; f < 5; ++f) {
    const double lambda = lambda_for_level(cfg_.base_lambda, levels[f]);
    terms.push_back(d_terms[f]);
    coeffs.push_back(static_cast<float>(lambda * cfg_.distortion_scale));
    terms.push_back(r_terms[f]);
    coeffs.push_back(static_cast<float>(rate_norm));

    FrameLossTerm t;
    t.display_index = f;
    t.level = levels[f];
    t.lambda = lambda;
    t.mse = d_terms[f]->val.v[0];
    t.distortion = cfg_.distortion_scale * t.mse;
    t.rate = rate_norm * r_terms[f]->val.v[0];
    report.frames.push_back(t);
    reported_loss += t.lambda * t.distortion + t.rate;
  }
  ag::Node* loss = ag::weighted_sum(tape, terms, coeffs);
  report.loss = reported_loss;

  if (!std::isfinite(report.loss)) {
    throw InternalError("train: non-finite loss at step " +
                        std::to_string(step_count_) + " (base_lambda=" +
                        std::to_string(cfg_.base_lambda) + ")");
  }

  store_.zero_grads();
  tape.backward(loss);
  bind.collect_grads();
  report.grad_norm = adam_.step(store_);
  ++step_count_;
  return report;
}

TrainResult train(const TupleDataset& data, const TrainConfig& cfg,
                  const ParameterStore* interp_checkpoint,
                  const std::string& csv_path,
                  const std::string& checkpoint_path) {
  Trainer trainer(cfg, interp_checkpoint);
  TrainResult result;

  std::ofstream csv;
  if (!csv_path.empty()) {
    csv.open(csv_path);
    if (!csv) throw DataError("train: cannot open metrics log " + csv_path);
    csv << "step,frame_level,D,R_bpp,loss\n";
  }

  const int total_steps = cfg.epochs * cfg.steps_per_epoch;
  for (int s = 0; s < total_steps; ++s) {
    StepReport rep = trainer.step(data);
    if (csv.is_open()) {
      for (const FrameLossTerm& t : rep.frames) {
        csv << rep.step << ',' << t.level << ',' << t.distortion << ','
            << t.rate << ',' << rep.loss << '\n';
      }
      csv.flush();
    }
    if (cfg.checkpoint_every > 0 && !checkpoint_path.empty() &&
        (s + 1) % cfg.checkpoint_every == 0) {
      trainer.store().save(checkpoint_path);
    }
    result.log.push_back(std::move(rep));
  }
  if (!checkpoint_path.empty()) trainer.store().save(checkpoint_path);
  result.store = std::move(trainer.store());
  return result;
}

} // namespace kmfv
