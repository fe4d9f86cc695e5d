#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kmfv/autograd.hpp"
#include "kmfv/rng.hpp"
#include "kmfv/tensor.hpp"

namespace kmfv {

struct Param {
  std::string name;
  Tensor w;
  Tensor g;        // gradient accumulator
  Tensor m, v2;    // Adam moments
  bool frozen = false;

  void zero_grad() {
    for (float& x : g.v) x = 0.0f;
  }
};

// Named parameter tensors with a byte-stable checkpoint format.
//
// File layout (all integers little-endian):
//   "KMFC" | u32 version | u32 meta_len | meta (UTF-8 JSON) |
//   u32 tensor_count | { u16 name_len | name | 4 x i32 dims | f32 data } *
//
// Tensors are serialized in name order, so load followed by save reproduces
// the file byte for byte.
class ParameterStore {
public:
  Param& add(const std::string& name, int n, int c, int h, int w);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }

  std::map<std::string, Param>& all() { return params_; }
  const std::map<std::string, Param>& all() const { return params_; }

  std::size_t count_params(const std::string& prefix = "") const;
  void zero_grads();
  void freeze_prefix(const std::string& prefix);

  // FNV-1a over the serialized tensor payload; identifies a checkpoint.
  std::uint32_t content_id() const;

  std::string metadata(const std::string& key,
                       const std::string& fallback = "") const;
  void set_metadata(const std::string& key, const std::string& value);

  void save(const std::string& path) const; // atomic: temp + rename
  static ParameterStore load(const std::string& path);

private:
  std::map<std::string, Param> params_;
  std::map<std::string, std::string> meta_;
};

// Xavier-uniform init scaled by `gain`; the rng stream depends only on
// (seed, name), so the init is insensitive to registration order.
void init_conv_param(Param& w, std::uint64_t seed, double gain = 1.0);

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float clip_norm = 1.0f; // global-norm gradient clip; <=0 disables
};

class Adam {
public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  // Clips the global gradient norm, then updates every unfrozen parameter.
  // Returns the pre-clip global norm.
  double step(ParameterStore& store);
  std::int64_t steps_done() const { return t_; }

private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

// A conv layer bound to named parameters in a store.
struct Conv2dLayer {
  Param* w = nullptr;
  Param* b = nullptr;
  int stride = 1;
  int pad = 0;
};

// Registers (or rebinds) a conv layer's parameters.
Conv2dLayer make_conv(ParameterStore& store, const std::string& name, int c_in,
                      int c_out, int k, int stride, std::uint64_t init_seed,
                      double gain = 1.0, float bias_fill = 0.0f);

// Binds parameters on a tape: leaf nodes whose gradients flow back into the
// store. Use one binder per tape/step.
class ParamBinder {
public:
  explicit ParamBinder(ag::Tape& tape, bool trainable = true)
      : tape_(tape), trainable_(trainable) {}
  ag::Node* operator()(Param& p);
  // Copies accumulated node gradients back into Param::g. Call after
  // Tape::backward.
  void collect_grads();

private:
  ag::Tape& tape_;
  bool trainable_;
  std::vector<std::pair<Param*, ag::Node*>> bound_;
};

ag::Node* apply_conv(ag::Tape& t, ParamBinder& bind, const Conv2dLayer& layer,
                     ag::Node* x);

} // namespace kmfv
