#pragma once

#include <array>
#include <deque>
#include <functional>
#include <vector>

#include "kmfv/rng.hpp"
#include "kmfv/tensor.hpp"

// Define-by-run reverse-mode autodiff over float32 NCHW tensors. Forward
// values are computed eagerly; each node optionally carries a backward
// closure that scatters its gradient into its parents. One Tape per
// optimization step (or per inference call; without gradient consumers no
// backward closures are created, so inference is just the forward pass).
//
// All kernels accumulate in a fixed source-level order so that a given
// parameter set produces bit-identical activations on every IEEE-754
// platform. This is what makes encoder-side and decoder-side reconstructions
// match exactly.

namespace kmfv::ag {

struct Node {
  Tensor val;
  Tensor grad; // allocated lazily, same shape as val
  bool needs_grad = false;
  std::function<void()> backward;

  Tensor& g() {
    if (grad.size() != val.size()) {
      grad = Tensor(val.d[0], val.d[1], val.d[2], val.d[3]);
    }
    return grad;
  }
};

class Tape {
public:
  Node* leaf(Tensor value, bool needs_grad = false);

  // Generic op factory: use when defining custom ops outside this header.
  Node* make(Tensor value, const std::vector<Node*>& parents,
             std::function<void(Node&)> backward_fn);

  // Runs all backward closures in reverse creation order, seeding
  // d(loss)/d(loss) = 1. `loss` must be a scalar node from this tape.
  void backward(Node* loss);

  std::size_t size() const { return nodes_.size(); }

private:
  std::deque<Node> nodes_; // deque: stable addresses under push_back
};

// --- primitive ops ---

Node* conv2d(Tape& t, Node* x, Node* w, Node* b, int stride, int pad);
Node* upsample2(Tape& t, Node* x); // nearest-neighbor x2
Node* leaky_relu(Tape& t, Node* x, float alpha = 0.2f);
Node* concat_c(Tape& t, const std::vector<Node*>& xs);
Node* slice_c(Tape& t, Node* x, int c0, int c1); // channels [c0, c1)
Node* add(Tape& t, Node* a, Node* b);
Node* scale(Tape& t, Node* x, float s);
Node* clamp01(Tape& t, Node* x); // pass-through gradient inside [0,1]

// Quantization surrogates. Additive noise keeps the gradient exact;
// straight-through rounds in the forward pass and copies the gradient.
Node* add_uniform_noise(Tape& t, Node* x, Rng& rng);
Node* ste_round(Tape& t, Node* x);

// Reductions / loss assembly (all produce [1,1,1,1] scalars).
Node* sum(Tape& t, Node* x);
Node* mean_sq_err(Tape& t, Node* x, const Tensor& target);
Node* weighted_sum(Tape& t, const std::vector<Node*>& xs,
                   const std::vector<float>& coeffs);

// Eq.1 synthesis as one fused differentiable op. `kernels` holds
// {kv0,kh0,kv2,kh2[,kvi,khi]} nodes of shape [n,ks,h,w]; refs are [n,3,h,w].
Node* kernel_synthesis(Tape& t, const std::vector<Node*>& kernels,
                       const std::vector<Node*>& refs);

// --- raw deterministic kernels (shared by forward and backward paths) ---

struct ConvDims {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int k, stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad);
void conv2d_forward(const float* x, const float* w, const float* b,
                    const ConvDims& d, float* out, std::vector<float>& cols);
void conv2d_backward(const float* x, const float* w, const ConvDims& d,
                     const float* d_out, float* d_x, float* d_w, float* d_b,
                     std::vector<float>& cols);

} // namespace kmfv::ag
