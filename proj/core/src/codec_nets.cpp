#include "kmfv/codec_nets.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "kmfv/errors.hpp"

namespace kmfv {

namespace {
constexpr float kLReluAlpha = 0.2f;
}

void ModelConfig::validate() const {
  if (latent_channels <= 0 || hyper_channels <= 0 || head_channels <= 0) {
    throw UsageError("ModelConfig: channel counts must be positive");
  }
  if (kernel_size <= 0 || kernel_size % 2 == 0) {
    throw UsageError("ModelConfig: kernel size must be odd and positive, got " +
                     std::to_string(kernel_size));
  }
  if (downsample_stages != 4) {
    throw UsageError("ModelConfig: this architecture fixes 4 downsample stages");
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["latent_channels"] = latent_channels;
  j["hyper_channels"] = hyper_channels;
  j["head_channels"] = head_channels;
  j["kernel_size"] = kernel_size;
  j["use_interpolator"] = use_interpolator;
  j["downsample_stages"] = downsample_stages;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& s) {
  const nlohmann::json j = nlohmann::json::parse(s);
  ModelConfig cfg;
  cfg.latent_channels = j.at("latent_channels").get<int>();
  cfg.hyper_channels = j.at("hyper_channels").get<int>();
  cfg.head_channels = j.at("head_channels").get<int>();
  cfg.kernel_size = j.at("kernel_size").get<int>();
  cfg.use_interpolator = j.at("use_interpolator").get<bool>();
  cfg.downsample_stages = j.at("downsample_stages").get<int>();
  return cfg;
}

Tensor frame_to_tensor(const Frame& f) {
  Tensor t(1, 3, f.height, f.width);
  std::copy(f.data.begin(), f.data.end(), t.v.begin());
  return t;
}

Frame tensor_to_frame(const Tensor& t, int batch_index, bool clamp) {
  if (t.c() != 3) throw InternalError("tensor_to_frame: need 3 channels");
  Frame f(t.w(), t.h());
  const std::size_t img = static_cast<std::size_t>(3) * t.h() * t.w();
  const float* src = t.data() + batch_index * img;
  for (std::size_t i = 0; i < img; ++i) {
    float v = src[i];
    if (clamp) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    f.data[i] = v;
  }
  return f;
}

CodecModel::CodecModel(ParameterStore& store, ModelConfig cfg,
                       std::uint64_t init_seed)
    : store_(&store), cfg_(cfg) {
  cfg_.validate();
  const int m = cfg_.latent_channels;
  const int n = cfg_.hyper_channels;
  const int k = cfg_.head_channels;
  const int ks = cfg_.kernel_size;
  const std::uint64_t s = init_seed;

  const int b_in = cfg_.use_interpolator ? 12 : 9; // current + 3 or 2 refs

  for (int i = 0; i < 4; ++i) {
    b_enc_.push_back(make_conv(store, "b.enc.conv" + std::to_string(i),
                               i == 0 ? b_in : m, m, 5, 2, s));
    i_enc_.push_back(make_conv(store, "i.enc.conv" + std::to_string(i),
                               i == 0 ? 3 : m, m, 5, 2, s));
  }
  // trunk channels taper toward the head width
  const int b_dec_ch[5] = {m, m, m, k, k};
  const int i_dec_ch[5] = {m, m, m, k, k};
  for (int i = 0; i < 4; ++i) {
    b_dec_.push_back(make_conv(store, "b.dec.conv" + std::to_string(i),
                               b_dec_ch[i], b_dec_ch[i + 1], 3, 1, s));
    i_dec_.push_back(make_conv(store, "i.dec.conv" + std::to_string(i),
                               i_dec_ch[i], i_dec_ch[i + 1], 3, 1, s));
  }
  i_out_ = make_conv(store, "i.dec.out", k, 3, 3, 1, s);

  for (const char* side : {"b", "i"}) {
    std::vector<Conv2dLayer>& henc = side[0] == 'b' ? b_henc_ : i_henc_;
    std::vector<Conv2dLayer>& hdec = side[0] == 'b' ? b_hdec_ : i_hdec_;
    const std::string p(side);
    henc.push_back(make_conv(store, p + ".henc.conv0", m, n, 3, 1, s));
    henc.push_back(make_conv(store, p + ".henc.conv1", n, n, 5, 2, s));
    henc.push_back(make_conv(store, p + ".henc.conv2", n, n, 5, 2, s));
    hdec.push_back(make_conv(store, p + ".hdec.conv0", n, n, 3, 1, s));
    hdec.push_back(make_conv(store, p + ".hdec.conv1", n, m, 3, 1, s));
    Conv2dLayer out = make_conv(store, p + ".hdec.out", m, 2 * m, 1, 1, s);
    (side[0] == 'b' ? b_hdec_out_ : i_hdec_out_) = out;
  }

  const char* head_names[6] = {"v0", "h0", "v2", "h2", "vi", "hi"};
  const int n_heads = cfg_.use_interpolator ? 6 : 4;
  // near-zero last conv + flat bias: initial kernels average the references
  const float head_bias =
      static_cast<float>(1.0 / (ks * std::sqrt(3.0 * n_heads / 2)));
  for (int i = 0; i < n_heads; ++i) {
    Head h;
    const std::string p = std::string("b.head.") + head_names[i];
    h.c0 = make_conv(store, p + ".conv0", k, k, 3, 1, s);
    h.c1 = make_conv(store, p + ".conv1", k, ks, 1, 1, s, 0.01, head_bias);
    heads_.push_back(h);
  }

  b_fact_ = std::make_unique<FactorizedModel>(store, "b.fact", n, s);
  i_fact_ = std::make_unique<FactorizedModel>(store, "i.fact", n, s);

  store.set_metadata("cfg", cfg_.to_json());
  store.set_metadata("nonlinearity", kNonlinearityTag);
  store.set_metadata("format", "kmfv-checkpoint-1");
}

ag::Node* CodecModel::b_analysis(ag::Tape& t, ParamBinder& bind,
                                 ag::Node* current,
                                 const std::vector<ag::Node*>& refs) const {
  const std::size_t want = cfg_.use_interpolator ? 3 : 2;
  if (refs.size() != want) {
    throw InternalError("b_analysis: expected " + std::to_string(want) +
                        " references");
  }
  std::vector<ag::Node*> cat = {current};
  cat.insert(cat.end(), refs.begin(), refs.end());
  ag::Node* x = ag::concat_c(t, cat);
  for (std::size_t i = 0; i < b_enc_.size(); ++i) {
    x = apply_conv(t, bind, b_enc_[i], x);
    if (i + 1 < b_enc_.size()) x = ag::leaky_relu(t, x, kLReluAlpha);
  }
  return x;
}

ag::Node* CodecModel::i_analysis(ag::Tape& t, ParamBinder& bind,
                                 ag::Node* x) const {
  for (std::size_t i = 0; i < i_enc_.size(); ++i) {
    x = apply_conv(t, bind, i_enc_[i], x);
    if (i + 1 < i_enc_.size()) x = ag::leaky_relu(t, x, kLReluAlpha);
  }
  return x;
}

ag::Node* CodecModel::i_synthesis(ag::Tape& t, ParamBinder& bind,
                                  ag::Node* y_hat) const {
  ag::Node* x = y_hat;
  for (const Conv2dLayer& conv : i_dec_) {
    x = ag::upsample2(t, x);
    x = ag::leaky_relu(t, apply_conv(t, bind, conv, x), kLReluAlpha);
  }
  return apply_conv(t, bind, i_out_, x);
}

namespace {

ag::Node* run_hyper_encoder(ag::Tape& t, ParamBinder& bind,
                            const std::vector<Conv2dLayer>& henc,
                            ag::Node* y) {
  ag::Node* x = y;
  for (std::size_t i = 0; i < henc.size(); ++i) {
    x = apply_conv(t, bind, henc[i], x);
    if (i + 1 < henc.size()) x = ag::leaky_relu(t, x, kLReluAlpha);
  }
  return x;
}

std::pair<ag::Node*, ag::Node*> run_hyper_decoder(
    ag::Tape& t, ParamBinder& bind, const std::vector<Conv2dLayer>& hdec,
    const Conv2dLayer& out, int latent_channels, ag::Node* z_hat) {
  ag::Node* x = z_hat;
  for (const Conv2dLayer& conv : hdec) {
    x = ag::upsample2(t, x);
    x = ag::leaky_relu(t, apply_conv(t, bind, conv, x), kLReluAlpha);
  }
  x = apply_conv(t, bind, out, x);
  ag::Node* means = ag::slice_c(t, x, 0, latent_channels);
  ag::Node* scales_raw = ag::slice_c(t, x, latent_channels,
                                     2 * latent_channels);
  return {means, scales_raw};
}

} // namespace

ag::Node* CodecModel::b_hyper_encode(ag::Tape& t, ParamBinder& bind,
                                     ag::Node* y) const {
  return run_hyper_encoder(t, bind, b_henc_, y);
}

std::pair<ag::Node*, ag::Node*> CodecModel::b_hyper_decode(
    ag::Tape& t, ParamBinder& bind, ag::Node* z_hat) const {
  return run_hyper_decoder(t, bind, b_hdec_, b_hdec_out_, cfg_.latent_channels,
                           z_hat);
}

ag::Node* CodecModel::i_hyper_encode(ag::Tape& t, ParamBinder& bind,
                                     ag::Node* y) const {
  return run_hyper_encoder(t, bind, i_henc_, y);
}

std::pair<ag::Node*, ag::Node*> CodecModel::i_hyper_decode(
    ag::Tape& t, ParamBinder& bind, ag::Node* z_hat) const {
  return run_hyper_decoder(t, bind, i_hdec_, i_hdec_out_, cfg_.latent_channels,
                           z_hat);
}

std::vector<ag::Node*> CodecModel::b_kernel_maps(ag::Tape& t, ParamBinder& bind,
                                                 ag::Node* y_hat) const {
  ag::Node* x = y_hat;
  for (const Conv2dLayer& conv : b_dec_) {
    x = ag::upsample2(t, x);
    x = ag::leaky_relu(t, apply_conv(t, bind, conv, x), kLReluAlpha);
  }
  return head_stack(t, bind, x);
}

std::vector<ag::Node*> CodecModel::head_stack(ag::Tape& t, ParamBinder& bind,
                                              ag::Node* feat) const {
  std::vector<ag::Node*> maps;
  maps.reserve(heads_.size());
  for (const Head& h : heads_) {
    ag::Node* x = ag::leaky_relu(t, apply_conv(t, bind, h.c0, feat),
                                 kLReluAlpha);
    maps.push_back(apply_conv(t, bind, h.c1, x));
  }
  return maps;
}

void CodecModel::check_coded_dims(const Frame& f, int multiple) {
  if (f.width % multiple != 0 || f.height % multiple != 0) {
    throw UsageError("frame dimensions " + std::to_string(f.width) + "x" +
                     std::to_string(f.height) + " must divide " +
                     std::to_string(multiple) +
                     "; apply pad_to_multiple before coding");
  }
  if (f.width < 64 || f.height < 64) {
    throw UsageError("coded frames must be at least 64x64");
  }
}

Tensor CodecModel::encode_b(const Frame& current,
                            const ReferenceTriple& refs) const {
  check_coded_dims(current, cfg_.spatial_multiple());
  if (refs.has_interp() != cfg_.use_interpolator) {
    throw InternalError("encode_b: reference triple does not match config");
  }
  ag::Tape t;
  ParamBinder bind(t, /*trainable=*/false);
  std::vector<ag::Node*> ref_nodes = {t.leaf(frame_to_tensor(refs.ref0)),
                                      t.leaf(frame_to_tensor(refs.ref2))};
  if (refs.has_interp()) ref_nodes.push_back(t.leaf(frame_to_tensor(refs.refi)));
  ag::Node* y =
      b_analysis(t, bind, t.leaf(frame_to_tensor(current)), ref_nodes);
  return y->val;
}

CodecModel::BDecodeResult CodecModel::decode_b(
    const Tensor& y_hat, const ReferenceTriple& refs) const {
  ag::Tape t;
  ParamBinder bind(t, /*trainable=*/false);
  std::vector<ag::Node*> maps = b_kernel_maps(t, bind, t.leaf(y_hat));

  BDecodeResult out;
  const int h = maps[0]->val.h(), w = maps[0]->val.w();
  out.field = KernelField::zeros(cfg_.kernel_size, h, w, cfg_.use_interpolator);
  std::vector<float>* planes[6] = {&out.field.kv0, &out.field.kh0,
                                   &out.field.kv2, &out.field.kh2,
                                   &out.field.kvi, &out.field.khi};
  for (std::size_t i = 0; i < maps.size(); ++i) {
    std::copy(maps[i]->val.v.begin(), maps[i]->val.v.end(), planes[i]->begin());
  }
  out.frame = synthesize(refs, out.field);
  return out;
}

Tensor CodecModel::hyper_encode(const Tensor& y, bool iframe) const {
  ag::Tape t;
  ParamBinder bind(t, /*trainable=*/false);
  ag::Node* z = iframe ? i_hyper_encode(t, bind, t.leaf(y))
                       : b_hyper_encode(t, bind, t.leaf(y));
  return z->val;
}

std::pair<Tensor, Tensor> CodecModel::hyper_decode(const Tensor& z_hat,
                                                   bool iframe) const {
  ag::Tape t;
  ParamBinder bind(t, /*trainable=*/false);
  auto [means, scales_raw] = iframe ? i_hyper_decode(t, bind, t.leaf(z_hat))
                                    : b_hyper_decode(t, bind, t.leaf(z_hat));
  return {means->val, scales_raw->val};
}

CodecModel::HyperRoundTrip CodecModel::hyper_round_trip(const Tensor& y,
                                                        bool iframe) const {
  const FactorizedModel& fact = iframe ? *i_fact_ : *b_fact_;
  const std::vector<float> med = fact.medians();
  HyperRoundTrip out;
  out.z = hyper_encode(y, iframe);
  Tensor med_t = out.z;
  const std::size_t plane = med_t.plane();
  for (int n = 0; n < med_t.n(); ++n) {
    for (int c = 0; c < med_t.c(); ++c) {
      float* p = med_t.data() + (static_cast<std::size_t>(n) * med_t.c() + c) *
                                    plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = med[c];
    }
  }
  out.z_hat = quantize(out.z, QuantizationMode::Round, &med_t);
  auto [means, scales_raw] = hyper_decode(out.z_hat, iframe);
  out.means = means;
  out.scales_raw = scales_raw;
  return out;
}

Tensor CodecModel::encode_i(const Frame& frame) const {
  check_coded_dims(frame, cfg_.spatial_multiple());
  ag::Tape t;
  ParamBinder bind(t, /*trainable=*/false);
  ag::Node* y = i_analysis(t, bind, t.leaf(frame_to_tensor(frame)));
  return y->val;
}

Frame CodecModel::decode_i(const Tensor& y_hat) const {
  ag::Tape t;
  ParamBinder bind(t, /*trainable=*/false);
  ag::Node* x = i_synthesis(t, bind, t.leaf(y_hat));
  return tensor_to_frame(x->val, 0, /*clamp=*/true);
}

std::vector<ParamGroupRow> parameter_report(const ParameterStore& store) {
  const bool six_heads = store.has("b.head.vi.conv0.w");
  std::vector<std::pair<std::string, std::vector<std::string>>> groups = {
      {"Image codec", {"i."}},
      {"Frame interpolator", {"interp."}},
      {std::string(six_heads ? "Six" : "Four") + " 1D kernel sub-networks",
       {"b.head."}},
      {"Frame auto-encoder", {"b.enc.", "b.dec."}},
      {"Frame hyper-prior network", {"b.henc.", "b.hdec.", "b.fact."}},
  };
  std::vector<ParamGroupRow> rows;
  std::size_t total = 0;
  for (const auto& [label, prefixes] : groups) {
    ParamGroupRow row;
    row.label = label;
    for (const std::string& p : prefixes) row.param_count += store.count_params(p);
    if (row.param_count == 0) continue; // absent module (e.g. no interpolator)
    total += row.param_count;
    rows.push_back(row);
  }
  for (ParamGroupRow& row : rows) {
    row.share_pct = total ? 100.0 * static_cast<double>(row.param_count) /
                                static_cast<double>(total)
                          : 0.0;
  }
  return rows;
}

} // namespace kmfv
