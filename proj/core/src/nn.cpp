#include "kmfv/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "kmfv/errors.hpp"

namespace kmfv {

namespace {

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint: unexpected end of file");
  return v;
}

} // namespace

Param& ParameterStore::add(const std::string& name, int n, int c, int h,
                           int w) {
  auto [it, inserted] = params_.try_emplace(name);
  Param& p = it->second;
  if (inserted) {
    p.name = name;
    p.w = Tensor(n, c, h, w);
    p.g = Tensor(n, c, h, w);
    p.m = Tensor(n, c, h, w);
    p.v2 = Tensor(n, c, h, w);
  } else if (p.w.d != std::array<int, 4>{n, c, h, w}) {
    throw InternalError("ParameterStore::add: shape conflict for " + name);
  }
  return p;
}

Param& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw InternalError("ParameterStore: missing parameter " + name);
  }
  return it->second;
}

const Param& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw InternalError("ParameterStore: missing parameter " + name);
  }
  return it->second;
}

std::size_t ParameterStore::count_params(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) {
    if (name.rfind(prefix, 0) == 0) n += p.w.size();
  }
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& [name, p] : params_) p.zero_grad();
}

void ParameterStore::freeze_prefix(const std::string& prefix) {
  for (auto& [name, p] : params_) {
    if (name.rfind(prefix, 0) == 0) p.frozen = true;
  }
}

std::uint32_t ParameterStore::content_id() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, p] : params_) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(p.w.data(), p.w.size() * sizeof(float), h);
  }
  return static_cast<std::uint32_t>(h ^ (h >> 32));
}

std::string ParameterStore::metadata(const std::string& key,
                                     const std::string& fallback) const {
  auto it = meta_.find(key);
  return it == meta_.end() ? fallback : it->second;
}

void ParameterStore::set_metadata(const std::string& key,
                                  const std::string& value) {
  meta_[key] = value;
}

void ParameterStore::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot write " + tmp);
    out.write("KMFC", 4);
    write_pod<std::uint32_t>(out, 1);
    nlohmann::json meta(meta_); // std::map keeps keys sorted
    const std::string meta_str = meta.dump();
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(meta_str.size()));
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params_.size()));
    for (const auto& [name, p] : params_) {
      write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      for (int dim : p.w.d) write_pod<std::int32_t>(out, dim);
      out.write(reinterpret_cast<const char*>(p.w.data()),
                static_cast<std::streamsize>(p.w.size() * sizeof(float)));
    }
    if (!out) throw DataError("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ParameterStore ParameterStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "KMFC", 4) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != 1) {
    throw DataError("checkpoint: unsupported version " +
                    std::to_string(version));
  }
  const auto meta_len = read_pod<std::uint32_t>(in);
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), meta_len);
  if (!in) throw DataError("checkpoint: truncated metadata in " + path);

  ParameterStore store;
  const nlohmann::json meta = nlohmann::json::parse(meta_str);
  for (auto it = meta.begin(); it != meta.end(); ++it) {
    store.meta_[it.key()] = it.value().get<std::string>();
  }
  const auto count = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::array<std::int32_t, 4> dims{};
    for (auto& dd : dims) dd = read_pod<std::int32_t>(in);
    Param& p = store.add(name, dims[0], dims[1], dims[2], dims[3]);
    in.read(reinterpret_cast<char*>(p.w.data()),
            static_cast<std::streamsize>(p.w.size() * sizeof(float)));
    if (!in) throw DataError("checkpoint: truncated tensor " + name);
  }
  return store;
}

void init_conv_param(Param& w, std::uint64_t seed, double gain) {
  const std::uint64_t name_h =
      fnv1a64(w.name.data(), w.name.size(), kFnvOffset);
  Rng rng(seed ^ name_h);
  const double fan_in = static_cast<double>(w.w.c()) * w.w.h() * w.w.w();
  const double fan_out = static_cast<double>(w.w.n()) * w.w.h() * w.w.w();
  const double lim = gain * std::sqrt(6.0 / (fan_in + fan_out));
  for (float& x : w.w.v) {
    x = static_cast<float>(rng.uniform(-lim, lim));
  }
}

double Adam::step(ParameterStore& store) {
  double sq = 0.0;
  for (const auto& [name, p] : store.all()) {
    if (p.frozen) continue;
    for (float g : p.g.v) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  float scale = 1.0f;
  if (cfg_.clip_norm > 0.0f && norm > cfg_.clip_norm) {
    scale = static_cast<float>(cfg_.clip_norm / norm);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const float lr_t =
      static_cast<float>(cfg_.lr * std::sqrt(bc2) / bc1);
  for (auto& [name, p] : store.all()) {
    if (p.frozen) continue;
    for (std::size_t i = 0; i < p.w.size(); ++i) {
      const float g = p.g.v[i] * scale;
      p.m.v[i] = cfg_.beta1 * p.m.v[i] + (1.0f - cfg_.beta1) * g;
      p.v2.v[i] = cfg_.beta2 * p.v2.v[i] + (1.0f - cfg_.beta2) * g * g;
      p.w.v[i] -= lr_t * p.m.v[i] / (std::sqrt(p.v2.v[i]) + cfg_.eps);
    }
  }
  return norm;
}

Conv2dLayer make_conv(ParameterStore& store, const std::string& name, int c_in,
                      int c_out, int k, int stride, std::uint64_t init_seed,
                      double gain, float bias_fill) {
  Conv2dLayer layer;
  const bool fresh = !store.has(name + ".w");
  Param& w = store.add(name + ".w", c_out, c_in, k, k);
  Param& b = store.add(name + ".b", 1, 1, 1, c_out);
  if (fresh) {
    init_conv_param(w, init_seed, gain);
    for (float& x : b.w.v) x = bias_fill;
  }
  layer.w = &w;
  layer.b = &b;
  layer.stride = stride;
  layer.pad = k / 2;
  return layer;
}

ag::Node* ParamBinder::operator()(Param& p) {
  for (auto& [param, node] : bound_) {
    if (param == &p) return node;
  }
  ag::Node* n = tape_.leaf(p.w, trainable_ && !p.frozen);
  bound_.emplace_back(&p, n);
  return n;
}

void ParamBinder::collect_grads() {
  for (auto& [param, node] : bound_) {
    if (param->frozen || node->grad.size() != node->val.size()) continue;
    for (std::size_t i = 0; i < param->g.size(); ++i) {
      param->g.v[i] += node->grad.v[i];
    }
  }
}

ag::Node* apply_conv(ag::Tape& t, ParamBinder& bind, const Conv2dLayer& layer,
                     ag::Node* x) {
  return ag::conv2d(t, x, bind(*layer.w), bind(*layer.b), layer.stride,
                    layer.pad);
}

} // namespace kmfv
