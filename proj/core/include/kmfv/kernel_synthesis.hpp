#pragma once

#include <cstddef>
#include <vector>

#include "kmfv/frame.hpp"

// Per-pixel separable synthesis: every reconstructed pixel is the sum over
// three reference frames of (vertical kernel) x (horizontal kernel) applied
// to the patch centered at that pixel. Kernels vary per pixel and are shared
// by the three color channels. Borders are handled by symmetric reflection.

namespace kmfv {

// Six per-pixel 1D kernels, each stored as [ks, h, w] (kernel tap major).
// When the interpolated reference is disabled the field degenerates to the
// four ref0/ref2 arrays and kvi/khi stay empty.
struct KernelField {
  int ks = 0;
  int h = 0;
  int w = 0;
  std::vector<float> kv0, kh0; // predecessor reference
  std::vector<float> kv2, kh2; // successor reference
  std::vector<float> kvi, khi; // interpolated reference (optional)

  static KernelField zeros(int ks, int h, int w, bool with_interp = true);
  bool has_interp() const { return !kvi.empty(); }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(ks) * h * w;
  }
  void validate() const; // shapes consistent, ks odd, values finite
};

struct ReferenceTriple {
  Frame ref0; // predecessor reconstruction
  Frame ref2; // successor reconstruction
  Frame refi; // interpolated; may be empty when disabled
  bool has_interp() const { return refi.width > 0; }
};

// One Eq.1 term: out(c,y,x) = sum_{u,v} kv[u,y,x]*kh[v,y,x]*P(c,y+u-r,x+v-r).
Frame separable_term(const Frame& frame, const std::vector<float>& kv,
                     const std::vector<float>& kh, int ks);

// Sum of the two or three separable terms, clamped to [0,1].
Frame synthesize(const ReferenceTriple& refs, const KernelField& field);

// Same, without the final clamp (loss computation wants raw values).
std::vector<float> synthesize_raw(const ReferenceTriple& refs,
                                  const KernelField& field);

// Brute-force six-nested-loop evaluation of Eq. 1; shares no vectorized code
// with synthesize. Intended for small inputs (<= 64x64).
Frame oracle_synthesize(const ReferenceTriple& refs, const KernelField& field);
std::vector<double> oracle_synthesize_raw(const ReferenceTriple& refs,
                                          const KernelField& field);

// --- templated cores (float for the codec, double for gradient checks) ---

template <typename T>
void separable_term_t(const T* img, int channels, int h, int w, const T* kv,
                      const T* kh, int ks, T* out_accum);

// d(term)/d(kv), d(term)/d(kh), d(term)/d(img) given upstream dOut.
template <typename T>
void separable_term_backward_t(const T* img, int channels, int h, int w,
                               const T* kv, const T* kh, int ks,
                               const T* d_out, T* d_kv, T* d_kh, T* d_img);

} // namespace kmfv
