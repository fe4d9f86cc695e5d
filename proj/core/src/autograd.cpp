#include "kmfv/autograd.hpp"

#include <cmath>
#include <cstring>

#include "kmfv/errors.hpp"
#include "kmfv/kernel_synthesis.hpp"

namespace kmfv::ag {

namespace {

// Eight independent accumulator chains with a fixed reduction tree. The
// compiler may vectorize this without changing the summation order, so the
// result is identical on every IEEE-754 target.
inline float dot_fixed(const float* a, const float* b, int n) {
  float s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 += a[i + 0] * b[i + 0];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
    s4 += a[i + 4] * b[i + 4];
    s5 += a[i + 5] * b[i + 5];
    s6 += a[i + 6] * b[i + 6];
    s7 += a[i + 7] * b[i + 7];
  }
  float tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return (((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))) + tail;
}

inline void axpy(float* y, const float* x, float a, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

bool any_needs_grad(const std::vector<Node*>& ps) {
  for (const Node* p : ps) {
    if (p->needs_grad) return true;
  }
  return false;
}

// cols[p][k], k = (c*K + ky)*K + kx; one image (no batch dim).
void im2col(const float* x, const ConvDims& d, float* cols) {
  const int K = d.k;
  const std::size_t row = static_cast<std::size_t>(d.in_c) * K * K;
  for (int oy = 0; oy < d.out_h; ++oy) {
    for (int ox = 0; ox < d.out_w; ++ox) {
      float* dst = cols + (static_cast<std::size_t>(oy) * d.out_w + ox) * row;
      for (int c = 0; c < d.in_c; ++c) {
        const float* src = x + static_cast<std::size_t>(c) * d.in_h * d.in_w;
        for (int ky = 0; ky < K; ++ky) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.in_h) {
            for (int kx = 0; kx < K; ++kx) *dst++ = 0.0f;
            continue;
          }
          for (int kx = 0; kx < K; ++kx) {
            const int ix = ox * d.stride - d.pad + kx;
            *dst++ = (ix < 0 || ix >= d.in_w)
                         ? 0.0f
                         : src[static_cast<std::size_t>(iy) * d.in_w + ix];
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, const ConvDims& d, float* d_x) {
  const int K = d.k;
  const std::size_t row = static_cast<std::size_t>(d.in_c) * K * K;
  for (int oy = 0; oy < d.out_h; ++oy) {
    for (int ox = 0; ox < d.out_w; ++ox) {
      const float* src =
          cols + (static_cast<std::size_t>(oy) * d.out_w + ox) * row;
      for (int c = 0; c < d.in_c; ++c) {
        float* dst = d_x + static_cast<std::size_t>(c) * d.in_h * d.in_w;
        for (int ky = 0; ky < K; ++ky) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.in_h) {
            src += K;
            continue;
          }
          for (int kx = 0; kx < K; ++kx) {
            const int ix = ox * d.stride - d.pad + kx;
            if (ix >= 0 && ix < d.in_w) {
              dst[static_cast<std::size_t>(iy) * d.in_w + ix] += *src;
            }
            ++src;
          }
        }
      }
    }
  }
}

} // namespace

Node* Tape::leaf(Tensor value, bool needs_grad) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.val = std::move(value);
  n.needs_grad = needs_grad;
  return &n;
}

Node* Tape::make(Tensor value, const std::vector<Node*>& parents,
                 std::function<void(Node&)> backward_fn) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.val = std::move(value);
  n.needs_grad = any_needs_grad(parents);
  if (n.needs_grad && backward_fn) {
    Node* self = &n;
    n.backward = [self, fn = std::move(backward_fn)]() { fn(*self); };
  }
  return &n;
}

void Tape::backward(Node* loss) {
  if (loss->val.size() != 1) {
    throw InternalError("Tape::backward: loss must be scalar");
  }
  loss->g().v[0] = 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->backward && it->grad.size() == it->val.size()) {
      it->backward();
    }
  }
}

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  ConvDims d;
  d.in_c = x.c();
  d.in_h = x.h();
  d.in_w = x.w();
  d.out_c = w.n();
  d.k = w.h();
  d.stride = stride;
  d.pad = pad;
  if (w.c() != d.in_c || w.h() != w.w()) {
    throw InternalError("conv2d: weight shape " + w.shape_str() +
                        " does not match input " + x.shape_str());
  }
  d.out_h = (d.in_h + 2 * pad - d.k) / stride + 1;
  d.out_w = (d.in_w + 2 * pad - d.k) / stride + 1;
  if (d.out_h <= 0 || d.out_w <= 0) {
    throw InternalError("conv2d: non-positive output dims");
  }
  return d;
}

void conv2d_forward(const float* x, const float* w, const float* b,
                    const ConvDims& d, float* out, std::vector<float>& cols) {
  const std::size_t row = static_cast<std::size_t>(d.in_c) * d.k * d.k;
  const std::size_t opix = static_cast<std::size_t>(d.out_h) * d.out_w;
  cols.resize(row * opix);
  im2col(x, d, cols.data());
  for (int co = 0; co < d.out_c; ++co) {
    const float* wrow = w + co * row;
    const float bias = b ? b[co] : 0.0f;
    float* orow = out + co * opix;
    for (std::size_t p = 0; p < opix; ++p) {
      orow[p] = bias + dot_fixed(wrow, cols.data() + p * row,
                                 static_cast<int>(row));
    }
  }
}

void conv2d_backward(const float* x, const float* w, const ConvDims& d,
                     const float* d_out, float* d_x, float* d_w, float* d_b,
                     std::vector<float>& cols) {
  const std::size_t row = static_cast<std::size_t>(d.in_c) * d.k * d.k;
  const std::size_t opix = static_cast<std::size_t>(d.out_h) * d.out_w;
  cols.resize(row * opix);
  im2col(x, d, cols.data());

  if (d_b) {
    for (int co = 0; co < d.out_c; ++co) {
      const float* g = d_out + co * opix;
      double acc = 0.0;
      for (std::size_t p = 0; p < opix; ++p) acc += g[p];
      d_b[co] += static_cast<float>(acc);
    }
  }
  if (d_w) {
    for (int co = 0; co < d.out_c; ++co) {
      const float* g = d_out + co * opix;
      float* wrow = d_w + co * row;
      for (std::size_t p = 0; p < opix; ++p) {
        if (g[p] != 0.0f) {
          axpy(wrow, cols.data() + p * row, g[p], static_cast<int>(row));
        }
      }
    }
  }
  if (d_x) {
    std::vector<float> dcols(row * opix, 0.0f);
    for (int co = 0; co < d.out_c; ++co) {
      const float* g = d_out + co * opix;
      const float* wrow = w + co * row;
      for (std::size_t p = 0; p < opix; ++p) {
        if (g[p] != 0.0f) {
          axpy(dcols.data() + p * row, wrow, g[p], static_cast<int>(row));
        }
      }
    }
    col2im_add(dcols.data(), d, d_x);
  }
}

Node* conv2d(Tape& t, Node* x, Node* w, Node* b, int stride, int pad) {
  const ConvDims d = conv_dims(x->val, w->val, stride, pad);
  if (b && (b->val.size() != static_cast<std::size_t>(d.out_c))) {
    throw InternalError("conv2d: bias size mismatch");
  }
  const int n = x->val.n();
  Tensor out(n, d.out_c, d.out_h, d.out_w);
  std::vector<float> cols;
  const std::size_t in_img = x->val.size() / n;
  const std::size_t out_img = out.size() / n;
  for (int i = 0; i < n; ++i) {
    conv2d_forward(x->val.data() + i * in_img, w->val.data(),
                   b ? b->val.data() : nullptr, d, out.data() + i * out_img,
                   cols);
  }
  std::vector<Node*> parents = {x, w};
  if (b) parents.push_back(b);
  return t.make(std::move(out), parents, [x, w, b, d, n](Node& self) {
    std::vector<float> cols;
    const std::size_t in_img = x->val.size() / n;
    const std::size_t out_img = self.val.size() / n;
    float* dx = x->needs_grad ? x->g().data() : nullptr;
    float* dw = w->needs_grad ? w->g().data() : nullptr;
    float* db = (b && b->needs_grad) ? b->g().data() : nullptr;
    for (int i = 0; i < n; ++i) {
      conv2d_backward(x->val.data() + i * in_img, w->val.data(), d,
                      self.grad.data() + i * out_img,
                      dx ? dx + i * in_img : nullptr, dw, db, cols);
    }
  });
}

Node* upsample2(Tape& t, Node* x) {
  const Tensor& in = x->val;
  Tensor out(in.n(), in.c(), in.h() * 2, in.w() * 2);
  for (int n = 0; n < in.n(); ++n) {
    for (int c = 0; c < in.c(); ++c) {
      for (int y = 0; y < in.h(); ++y) {
        for (int xx = 0; xx < in.w(); ++xx) {
          const float v = in.at(n, c, y, xx);
          out.at(n, c, 2 * y, 2 * xx) = v;
          out.at(n, c, 2 * y, 2 * xx + 1) = v;
          out.at(n, c, 2 * y + 1, 2 * xx) = v;
          out.at(n, c, 2 * y + 1, 2 * xx + 1) = v;
        }
      }
    }
  }
  return t.make(std::move(out), {x}, [x](Node& self) {
    Tensor& dx = x->g();
    const Tensor& g = self.grad;
    for (int n = 0; n < dx.n(); ++n) {
      for (int c = 0; c < dx.c(); ++c) {
        for (int y = 0; y < dx.h(); ++y) {
          for (int xx = 0; xx < dx.w(); ++xx) {
            dx.at(n, c, y, xx) +=
                ((g.at(n, c, 2 * y, 2 * xx) + g.at(n, c, 2 * y, 2 * xx + 1)) +
                 (g.at(n, c, 2 * y + 1, 2 * xx) +
                  g.at(n, c, 2 * y + 1, 2 * xx + 1)));
          }
        }
      }
    }
  });
}

Node* leaky_relu(Tape& t, Node* x, float alpha) {
  Tensor out = x->val;
  for (float& v : out.v) {
    if (v < 0.0f) v *= alpha;
  }
  return t.make(std::move(out), {x}, [x, alpha](Node& self) {
    Tensor& dx = x->g();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx.v[i] += x->val.v[i] > 0.0f ? self.grad.v[i] : alpha * self.grad.v[i];
    }
  });
}

Node* concat_c(Tape& t, const std::vector<Node*>& xs) {
  if (xs.empty()) throw InternalError("concat_c: empty input");
  const Tensor& first = xs[0]->val;
  int total_c = 0;
  for (Node* x : xs) {
    if (x->val.n() != first.n() || x->val.h() != first.h() ||
        x->val.w() != first.w()) {
      throw InternalError("concat_c: spatial/batch mismatch");
    }
    total_c += x->val.c();
  }
  Tensor out(first.n(), total_c, first.h(), first.w());
  const std::size_t plane = first.plane();
  for (int n = 0; n < first.n(); ++n) {
    std::size_t off = static_cast<std::size_t>(n) * total_c * plane;
    for (Node* x : xs) {
      const std::size_t sz = static_cast<std::size_t>(x->val.c()) * plane;
      std::memcpy(out.data() + off,
                  x->val.data() + static_cast<std::size_t>(n) * sz,
                  sz * sizeof(float));
      off += sz;
    }
  }
  return t.make(std::move(out), xs, [xs, total_c, plane](Node& self) {
    for (int n = 0; n < self.val.n(); ++n) {
      std::size_t off = static_cast<std::size_t>(n) * total_c * plane;
      for (Node* x : xs) {
        const std::size_t sz = static_cast<std::size_t>(x->val.c()) * plane;
        if (x->needs_grad) {
          float* dst = x->g().data() + static_cast<std::size_t>(n) * sz;
          const float* src = self.grad.data() + off;
          for (std::size_t i = 0; i < sz; ++i) dst[i] += src[i];
        }
        off += sz;
      }
    }
  });
}

Node* slice_c(Tape& t, Node* x, int c0, int c1) {
  const Tensor& in = x->val;
  if (c0 < 0 || c1 > in.c() || c0 >= c1) {
    throw InternalError("slice_c: bad channel range");
  }
  Tensor out(in.n(), c1 - c0, in.h(), in.w());
  const std::size_t plane = in.plane();
  for (int n = 0; n < in.n(); ++n) {
    std::memcpy(out.data() + static_cast<std::size_t>(n) * out.c() * plane,
                in.data() + (static_cast<std::size_t>(n) * in.c() + c0) * plane,
                static_cast<std::size_t>(c1 - c0) * plane * sizeof(float));
  }
  return t.make(std::move(out), {x}, [x, c0, plane](Node& self) {
    Tensor& dx = x->g();
    for (int n = 0; n < self.val.n(); ++n) {
      const float* src =
          self.grad.data() + static_cast<std::size_t>(n) * self.val.c() * plane;
      float* dst =
          dx.data() + (static_cast<std::size_t>(n) * dx.c() + c0) * plane;
      const std::size_t sz = static_cast<std::size_t>(self.val.c()) * plane;
      for (std::size_t i = 0; i < sz; ++i) dst[i] += src[i];
    }
  });
}

Node* add(Tape& t, Node* a, Node* b) {
  require_same_shape(a->val, b->val, "ag::add");
  Tensor out = a->val;
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += b->val.v[i];
  return t.make(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->needs_grad) {
      Tensor& da = a->g();
      for (std::size_t i = 0; i < da.size(); ++i) da.v[i] += self.grad.v[i];
    }
    if (b->needs_grad) {
      Tensor& db = b->g();
      for (std::size_t i = 0; i < db.size(); ++i) db.v[i] += self.grad.v[i];
    }
  });
}

Node* scale(Tape& t, Node* x, float s) {
  Tensor out = x->val;
  for (float& v : out.v) v *= s;
  return t.make(std::move(out), {x}, [x, s](Node& self) {
    Tensor& dx = x->g();
    for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] += s * self.grad.v[i];
  });
}

Node* clamp01(Tape& t, Node* x) {
  Tensor out = x->val;
  for (float& v : out.v) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return t.make(std::move(out), {x}, [x](Node& self) {
    Tensor& dx = x->g();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const float v = x->val.v[i];
      if (v >= 0.0f && v <= 1.0f) dx.v[i] += self.grad.v[i];
    }
  });
}

Node* add_uniform_noise(Tape& t, Node* x, Rng& rng) {
  Tensor out = x->val;
  for (float& v : out.v) {
    v += static_cast<float>(rng.uniform() - 0.5);
  }
  return t.make(std::move(out), {x}, [x](Node& self) {
    Tensor& dx = x->g();
    for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] += self.grad.v[i];
  });
}

Node* ste_round(Tape& t, Node* x) {
  Tensor out = x->val;
  for (float& v : out.v) v = std::nearbyintf(v);
  return t.make(std::move(out), {x}, [x](Node& self) {
    Tensor& dx = x->g();
    for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] += self.grad.v[i];
  });
}

Node* sum(Tape& t, Node* x) {
  double acc = 0.0;
  for (float v : x->val.v) acc += v;
  Tensor out(1, 1, 1, 1);
  out.v[0] = static_cast<float>(acc);
  return t.make(std::move(out), {x}, [x](Node& self) {
    const float g = self.grad.v[0];
    Tensor& dx = x->g();
    for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] += g;
  });
}

Node* mean_sq_err(Tape& t, Node* x, const Tensor& target) {
  require_same_shape(x->val, target, "mean_sq_err");
  double acc = 0.0;
  for (std::size_t i = 0; i < x->val.size(); ++i) {
    const double d = static_cast<double>(x->val.v[i]) - target.v[i];
    acc += d * d;
  }
  Tensor out(1, 1, 1, 1);
  out.v[0] = static_cast<float>(acc / static_cast<double>(x->val.size()));
  Tensor tgt = target;
  return t.make(std::move(out), {x}, [x, tgt = std::move(tgt)](Node& self) {
    const float g = self.grad.v[0] * 2.0f / static_cast<float>(x->val.size());
    Tensor& dx = x->g();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx.v[i] += g * (x->val.v[i] - tgt.v[i]);
    }
  });
}

Node* weighted_sum(Tape& t, const std::vector<Node*>& xs,
                   const std::vector<float>& coeffs) {
  if (xs.size() != coeffs.size() || xs.empty()) {
    throw InternalError("weighted_sum: size mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i]->val.size() != 1) {
      throw InternalError("weighted_sum: inputs must be scalars");
    }
    acc += static_cast<double>(coeffs[i]) * xs[i]->val.v[0];
  }
  Tensor out(1, 1, 1, 1);
  out.v[0] = static_cast<float>(acc);
  return t.make(std::move(out), xs, [xs, coeffs](Node& self) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (xs[i]->needs_grad) xs[i]->g().v[0] += coeffs[i] * self.grad.v[0];
    }
  });
}

Node* kernel_synthesis(Tape& t, const std::vector<Node*>& kernels,
                       const std::vector<Node*>& refs) {
  if ((kernels.size() != 6 || refs.size() != 3) &&
      (kernels.size() != 4 || refs.size() != 2)) {
    throw InternalError("kernel_synthesis: expected 6 kernels/3 refs or 4/2");
  }
  const Tensor& k0 = kernels[0]->val;
  const Tensor& r0 = refs[0]->val;
  const int n = r0.n(), h = r0.h(), w = r0.w(), ks = k0.c();
  Tensor out(n, 3, h, w);
  const std::size_t kimg = static_cast<std::size_t>(ks) * h * w;
  const std::size_t fimg = static_cast<std::size_t>(3) * h * w;
  for (std::size_t term = 0; term < refs.size(); ++term) {
    for (int i = 0; i < n; ++i) {
      separable_term_t<float>(refs[term]->val.data() + i * fimg, 3, h, w,
                              kernels[2 * term]->val.data() + i * kimg,
                              kernels[2 * term + 1]->val.data() + i * kimg, ks,
                              out.data() + i * fimg);
    }
  }
  std::vector<Node*> parents = kernels;
  parents.insert(parents.end(), refs.begin(), refs.end());
  return t.make(std::move(out), parents,
                [kernels, refs, n, h, w, ks, kimg, fimg](Node& self) {
    for (std::size_t term = 0; term < refs.size(); ++term) {
      Node* kv = kernels[2 * term];
      Node* kh = kernels[2 * term + 1];
      Node* ref = refs[term];
      float* dkv = kv->needs_grad ? kv->g().data() : nullptr;
      float* dkh = kh->needs_grad ? kh->g().data() : nullptr;
      float* dref = ref->needs_grad ? ref->g().data() : nullptr;
      if (!dkv && !dkh && !dref) continue;
      for (int i = 0; i < n; ++i) {
        separable_term_backward_t<float>(
            ref->val.data() + i * fimg, 3, h, w, kv->val.data() + i * kimg,
            kh->val.data() + i * kimg, ks, self.grad.data() + i * fimg,
            dkv ? dkv + i * kimg : nullptr, dkh ? dkh + i * kimg : nullptr,
            dref ? dref + i * fimg : nullptr);
      }
    }
  });
}

} // namespace kmfv::ag
