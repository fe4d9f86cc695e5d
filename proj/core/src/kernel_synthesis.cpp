#include "kmfv/kernel_synthesis.hpp"

#include <cmath>
#include <cstring>

#include "kmfv/errors.hpp"

namespace kmfv {

namespace {

// symmetric reflection: ...cba|abc...xyz|zyx...
inline int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

template <typename T>
std::vector<T> pad_plane(const T* src, int h, int w, int r) {
  const int ph = h + 2 * r, pw = w + 2 * r;
  std::vector<T> out(static_cast<std::size_t>(ph) * pw);
  for (int y = 0; y < ph; ++y) {
    const int sy = reflect(y - r, h);
    T* row = out.data() + static_cast<std::size_t>(y) * pw;
    for (int x = 0; x < pw; ++x) {
      row[x] = src[static_cast<std::size_t>(sy) * w + reflect(x - r, w)];
    }
  }
  return out;
}

void check_field_shapes(const ReferenceTriple& refs, const KernelField& field) {
  field.validate();
  if (refs.ref0.width != field.w || refs.ref0.height != field.h ||
      !refs.ref0.same_size(refs.ref2)) {
    throw InternalError("synthesize: reference/kernel shape mismatch");
  }
  if (field.has_interp() != refs.has_interp()) {
    throw InternalError(
        "synthesize: interpolated reference and kernel field disagree");
  }
  if (refs.has_interp() && !refs.refi.same_size(refs.ref0)) {
    throw InternalError("synthesize: interpolated reference shape mismatch");
  }
}

} // namespace

KernelField KernelField::zeros(int ks, int h, int w, bool with_interp) {
  KernelField f;
  f.ks = ks;
  f.h = h;
  f.w = w;
  const std::size_t n = f.plane_size();
  f.kv0.assign(n, 0.0f);
  f.kh0.assign(n, 0.0f);
  f.kv2.assign(n, 0.0f);
  f.kh2.assign(n, 0.0f);
  if (with_interp) {
    f.kvi.assign(n, 0.0f);
    f.khi.assign(n, 0.0f);
  }
  return f;
}

void KernelField::validate() const {
  if (ks <= 0 || ks % 2 == 0) {
    throw InternalError("KernelField: kernel size must be odd and positive");
  }
  const std::size_t n = plane_size();
  if (kv0.size() != n || kh0.size() != n || kv2.size() != n ||
      kh2.size() != n) {
    throw InternalError("KernelField: inconsistent kernel array sizes");
  }
  if (kvi.size() != khi.size()) {
    throw InternalError("KernelField: kvi/khi size mismatch");
  }
  if (!kvi.empty() && kvi.size() != n) {
    throw InternalError("KernelField: inconsistent interpolated kernel size");
  }
  for (const auto* arr : {&kv0, &kh0, &kv2, &kh2, &kvi, &khi}) {
    for (float v : *arr) {
      if (!std::isfinite(v)) {
        throw InternalError("KernelField: non-finite kernel value");
      }
    }
  }
}

template <typename T>
void separable_term_t(const T* img, int channels, int h, int w, const T* kv,
                      const T* kh, int ks, T* out_accum) {
  const int r = ks / 2;
  const int pw = w + 2 * r;
  const std::size_t px = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const std::vector<T> pad = pad_plane(img + c * px, h, w, r);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t ki = static_cast<std::size_t>(y) * w + x;
        T acc = T(0);
        for (int u = 0; u < ks; ++u) {
          const T* row = pad.data() + static_cast<std::size_t>(y + u) * pw + x;
          const T* khp = kh + ki; // kh[v, y, x] strided by h*w
          T dot = T(0);
          for (int v = 0; v < ks; ++v) {
            dot += khp[static_cast<std::size_t>(v) * px] * row[v];
          }
          acc += kv[static_cast<std::size_t>(u) * px + ki] * dot;
        }
        out_accum[c * px + ki] += acc;
      }
    }
  }
}

template <typename T>
void separable_term_backward_t(const T* img, int channels, int h, int w,
                               const T* kv, const T* kh, int ks,
                               const T* d_out, T* d_kv, T* d_kh, T* d_img) {
  const int r = ks / 2;
  const int pw = w + 2 * r, ph = h + 2 * r;
  const std::size_t px = static_cast<std::size_t>(h) * w;
  std::vector<T> d_pad;
  for (int c = 0; c < channels; ++c) {
    const std::vector<T> pad = pad_plane(img + c * px, h, w, r);
    if (d_img) d_pad.assign(static_cast<std::size_t>(ph) * pw, T(0));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t ki = static_cast<std::size_t>(y) * w + x;
        const T g = d_out[c * px + ki];
        if (g == T(0)) continue;
        for (int u = 0; u < ks; ++u) {
          const T* row = pad.data() + static_cast<std::size_t>(y + u) * pw + x;
          const T kvu = kv[static_cast<std::size_t>(u) * px + ki];
          T dot = T(0);
          for (int v = 0; v < ks; ++v) {
            const T khv = kh[static_cast<std::size_t>(v) * px + ki];
            dot += khv * row[v];
            if (d_kh) {
              d_kh[static_cast<std::size_t>(v) * px + ki] += g * kvu * row[v];
            }
            if (d_img) {
              d_pad[static_cast<std::size_t>(y + u) * pw + x + v] +=
                  g * kvu * khv;
            }
          }
          if (d_kv) d_kv[static_cast<std::size_t>(u) * px + ki] += g * dot;
        }
      }
    }
    if (d_img) {
      // fold reflected pad gradients back onto their source pixels
      for (int y = 0; y < ph; ++y) {
        const int sy = reflect(y - r, h);
        for (int x = 0; x < pw; ++x) {
          d_img[c * px + static_cast<std::size_t>(sy) * w + reflect(x - r, w)] +=
              d_pad[static_cast<std::size_t>(y) * pw + x];
        }
      }
    }
  }
}

template void separable_term_t<float>(const float*, int, int, int, const float*,
                                      const float*, int, float*);
template void separable_term_t<double>(const double*, int, int, int,
                                       const double*, const double*, int,
                                       double*);
template void separable_term_backward_t<float>(const float*, int, int, int,
                                               const float*, const float*, int,
                                               const float*, float*, float*,
                                               float*);
template void separable_term_backward_t<double>(const double*, int, int, int,
                                                const double*, const double*,
                                                int, const double*, double*,
                                                double*, double*);

Frame separable_term(const Frame& frame, const std::vector<float>& kv,
                     const std::vector<float>& kh, int ks) {
  const std::size_t n =
      static_cast<std::size_t>(ks) * frame.height * frame.width;
  if (kv.size() != n || kh.size() != n || ks % 2 == 0) {
    throw InternalError("separable_term: kernel arrays do not match frame");
  }
  Frame out(frame.width, frame.height, frame.colorspace);
  separable_term_t<float>(frame.data.data(), 3, frame.height, frame.width,
                          kv.data(), kh.data(), ks, out.data.data());
  return out;
}

std::vector<float> synthesize_raw(const ReferenceTriple& refs,
                                  const KernelField& field) {
  check_field_shapes(refs, field);
  std::vector<float> acc(static_cast<std::size_t>(3) * field.h * field.w, 0.0f);
  separable_term_t<float>(refs.ref0.data.data(), 3, field.h, field.w,
                          field.kv0.data(), field.kh0.data(), field.ks,
                          acc.data());
  separable_term_t<float>(refs.ref2.data.data(), 3, field.h, field.w,
                          field.kv2.data(), field.kh2.data(), field.ks,
                          acc.data());
  if (field.has_interp()) {
    separable_term_t<float>(refs.refi.data.data(), 3, field.h, field.w,
                            field.kvi.data(), field.khi.data(), field.ks,
                            acc.data());
  }
  return acc;
}

Frame synthesize(const ReferenceTriple& refs, const KernelField& field) {
  const std::vector<float> raw = synthesize_raw(refs, field);
  Frame out(field.w, field.h, refs.ref0.colorspace);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const float v = raw[i];
    out.data[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  }
  return out;
}

std::vector<double> oracle_synthesize_raw(const ReferenceTriple& refs,
                                          const KernelField& field) {
  check_field_shapes(refs, field);
  const int ks = field.ks, h = field.h, w = field.w, r = ks / 2;
  const std::size_t px = static_cast<std::size_t>(h) * w;
  std::vector<double> out(3 * px, 0.0);

  struct TermRef {
    const Frame* frame;
    const std::vector<float>* kv;
    const std::vector<float>* kh;
  };
  std::vector<TermRef> terms = {{&refs.ref0, &field.kv0, &field.kh0},
                                {&refs.ref2, &field.kv2, &field.kh2}};
  if (field.has_interp()) {
    terms.push_back({&refs.refi, &field.kvi, &field.khi});
  }

  for (const TermRef& t : terms) {
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int u = 0; u < ks; ++u) {
            for (int v = 0; v < ks; ++v) {
              const int sy = reflect(y + u - r, h);
              const int sx = reflect(x + v - r, w);
              acc += static_cast<double>(
                         (*t.kv)[static_cast<std::size_t>(u) * px + y * w + x]) *
                     (*t.kh)[static_cast<std::size_t>(v) * px + y * w + x] *
                     t.frame->at(c, sy, sx);
            }
          }
          out[c * px + static_cast<std::size_t>(y) * w + x] += acc;
        }
      }
    }
  }
  return out;
}

Frame oracle_synthesize(const ReferenceTriple& refs, const KernelField& field) {
  const std::vector<double> raw = oracle_synthesize_raw(refs, field);
  Frame out(field.w, field.h, refs.ref0.colorspace);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = raw[i];
    out.data[i] = static_cast<float>(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
  }
  return out;
}

} // namespace kmfv
