#include "tempnet/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <string>

namespace tempnet::kernels {

namespace {

#if defined(__GNUC__) || defined(__clang__)
#define TEMPNET_HAVE_VECTOR_EXT 1
template <typename T>
struct Simd;
template <>
struct Simd<float> {
  typedef float vec __attribute__((vector_size(64)));
  static constexpr std::size_t lanes = 16;
};
template <>
struct Simd<double> {
  typedef double vec __attribute__((vector_size(64)));
  static constexpr std::size_t lanes = 8;
};

template <typename V, typename T>
inline V load(const T* p) {
  V v;
  std::memcpy(&v, p, sizeof(V));
  return v;
}
template <typename V, typename T>
inline void store(T* p, const V& v) {
  std::memcpy(p, &v, sizeof(V));
}
#else
#define TEMPNET_HAVE_VECTOR_EXT 0
#endif

// Pixels per register block in the forward kernel.
constexpr std::size_t kPixelBlock = 6;

struct ConvDims {
  std::size_t t, h, w, cin, cout;
  std::size_t kt, kh, kw;
  std::size_t pt, ph, pw;
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& input, const Tensor<T>& kernel) {
  const auto& s = input.shape();
  const auto& k = kernel.shape();
  return {s[0], s[1], s[2], s[3], k[4], k[0], k[1], k[2], k[0] / 2, k[1] / 2, k[2] / 2};
}

// Zero-padded copy of [T,H,W,C]; `extra_w` trailing columns allow blocked
// kernels to read past the last valid pixel.
template <typename T>
struct Padded {
  std::vector<T> data;
  std::size_t hp = 0, wp = 0, c = 0;

  const T* row(std::size_t t, std::size_t h) const { return data.data() + (t * hp + h) * wp * c; }
};

template <typename T>
Padded<T> pad_input(const Tensor<T>& x, std::size_t pt, std::size_t ph, std::size_t pw, std::size_t extra_w) {
  const auto& s = x.shape();
  Padded<T> p;
  p.c = s[3];
  p.hp = s[1] + 2 * ph;
  p.wp = s[2] + 2 * pw + extra_w;
  const std::size_t tp = s[0] + 2 * pt;
  p.data.assign(tp * p.hp * p.wp * p.c, T{0});
  const std::size_t row_len = s[2] * s[3];
  for (std::size_t t = 0; t < s[0]; ++t) {
    for (std::size_t h = 0; h < s[1]; ++h) {
      const T* src = x.raw() + (t * s[1] + h) * row_len;
      T* dst = p.data.data() + (((t + pt) * p.hp + h + ph) * p.wp + pw) * p.c;
      std::copy(src, src + row_len, dst);
    }
  }
  return p;
}

template <typename T>
void conv_forward_generic(const Padded<T>& in, const ConvDims& d, const T* kernel, const T* bias, T* out) {
  std::vector<T> acc(d.cout);
  for (std::size_t t = 0; t < d.t; ++t) {
    for (std::size_t h = 0; h < d.h; ++h) {
      for (std::size_t w = 0; w < d.w; ++w) {
        std::copy(bias, bias + d.cout, acc.begin());
        for (std::size_t a = 0; a < d.kt; ++a) {
          for (std::size_t b = 0; b < d.kh; ++b) {
            const T* irow = in.row(t + a, h + b);
            for (std::size_t c = 0; c < d.kw; ++c) {
              const T* x = irow + (w + c) * d.cin;
              const T* k = kernel + ((a * d.kh + b) * d.kw + c) * d.cin * d.cout;
              for (std::size_t ci = 0; ci < d.cin; ++ci) {
                const T xv = x[ci];
                const T* kv = k + ci * d.cout;
                for (std::size_t co = 0; co < d.cout; ++co) acc[co] += xv * kv[co];
              }
            }
          }
        }
        std::copy(acc.begin(), acc.end(), out + ((t * d.h + h) * d.w + w) * d.cout);
      }
    }
  }
}

#if TEMPNET_HAVE_VECTOR_EXT
template <typename T>
void conv_forward_simd(const Padded<T>& in, const ConvDims& d, const T* kernel, const T* bias, T* out) {
  using V = typename Simd<T>::vec;
  constexpr std::size_t L = Simd<T>::lanes;
  for (std::size_t cb = 0; cb < d.cout; cb += L) {
    const V bias_v = load<V>(bias + cb);
    for (std::size_t t = 0; t < d.t; ++t) {
      for (std::size_t h = 0; h < d.h; ++h) {
        T* orow = out + (t * d.h + h) * d.w * d.cout;
        for (std::size_t w0 = 0; w0 < d.w; w0 += kPixelBlock) {
          V acc[kPixelBlock];
          for (auto& a : acc) a = bias_v;
          for (std::size_t a = 0; a < d.kt; ++a) {
            for (std::size_t b = 0; b < d.kh; ++b) {
              const T* irow = in.row(t + a, h + b);
              for (std::size_t c = 0; c < d.kw; ++c) {
                const T* ib = irow + (w0 + c) * d.cin;
                const T* k = kernel + ((a * d.kh + b) * d.kw + c) * d.cin * d.cout + cb;
                for (std::size_t ci = 0; ci < d.cin; ++ci) {
                  const V kv = load<V>(k + ci * d.cout);
                  for (std::size_t p = 0; p < kPixelBlock; ++p) acc[p] += ib[p * d.cin + ci] * kv;
                }
              }
            }
          }
          const std::size_t valid = std::min(kPixelBlock, d.w - w0);
          for (std::size_t p = 0; p < valid; ++p) store(orow + (w0 + p) * d.cout + cb, acc[p]);
        }
      }
    }
  }
}

template <typename T, std::size_t N>
inline void accumulate_kernel_block(const T* xrow, std::size_t cin, const T* grow, std::size_t cout,
                                    std::size_t width, T* gk_block) {
  using V = typename Simd<T>::vec;
  V acc[N];
  for (std::size_t i = 0; i < N; ++i) acc[i] = load<V>(gk_block + i * cout);
  for (std::size_t w = 0; w < width; ++w) {
    const V g = load<V>(grow + w * cout);
    const T* x = xrow + w * cin;
    for (std::size_t i = 0; i < N; ++i) acc[i] += x[i] * g;
  }
  for (std::size_t i = 0; i < N; ++i) store(gk_block + i * cout, acc[i]);
}

template <typename T>
inline void accumulate_kernel_dyn(const T* xrow, std::size_t cin, std::size_t n, const T* grow, std::size_t cout,
                                  std::size_t width, T* gk_block) {
  using V = typename Simd<T>::vec;
  for (std::size_t i = 0; i < n; ++i) {
    V acc = load<V>(gk_block + i * cout);
    for (std::size_t w = 0; w < width; ++w) acc += xrow[w * cin + i] * load<V>(grow + w * cout);
    store(gk_block + i * cout, acc);
  }
}
#endif

template <typename T>
bool use_simd(std::size_t cout) {
#if TEMPNET_HAVE_VECTOR_EXT
  return cout % Simd<T>::lanes == 0;
#else
  (void)cout;
  return false;
#endif
}

}  // namespace

template <typename T>
void check_conv3d_shapes(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
  if (input.rank() != 4) throw ShapeError("conv3d: input must be rank 4 [T,H,W,C], got " + shape_string(input.shape()));
  if (kernel.rank() != 5) {
    throw ShapeError("conv3d: kernel must be rank 5 [kT,kH,kW,Cin,Cout], got " + shape_string(kernel.shape()));
  }
  static const char* axis_names[] = {"kT", "kH", "kW"};
  for (std::size_t a = 0; a < 3; ++a) {
    if (kernel.extent(a) % 2 == 0) {
      throw ShapeError(std::string("conv3d: kernel extent on axis ") + axis_names[a] + " must be odd, got " +
                       std::to_string(kernel.extent(a)));
    }
  }
  if (kernel.extent(3) != input.extent(3)) {
    throw ShapeError("conv3d: channel axis mismatch, input C=" + std::to_string(input.extent(3)) +
                     " but kernel Cin=" + std::to_string(kernel.extent(3)));
  }
  if (bias.rank() != 1 || bias.extent(0) != kernel.extent(4)) {
    throw ShapeError("conv3d: bias shape " + shape_string(bias.shape()) + " does not match Cout=" +
                     std::to_string(kernel.extent(4)));
  }
}

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
  check_conv3d_shapes(input, kernel, bias);
  const ConvDims d = conv_dims(input, kernel);
  Tensor<T> out(Shape{d.t, d.h, d.w, d.cout});
#if TEMPNET_HAVE_VECTOR_EXT
  if (use_simd<T>(d.cout)) {
    const std::size_t blocked = (d.w + kPixelBlock - 1) / kPixelBlock * kPixelBlock;
    const Padded<T> in = pad_input(input, d.pt, d.ph, d.pw, blocked - d.w);
    conv_forward_simd(in, d, kernel.raw(), bias.raw(), out.raw());
    return out;
  }
#endif
  const Padded<T> in = pad_input(input, d.pt, d.ph, d.pw, 0);
  conv_forward_generic(in, d, kernel.raw(), bias.raw(), out.raw());
  return out;
}

template <typename T>
Tensor<T> conv3d_backward_input(const Tensor<T>& grad_output, const Tensor<T>& kernel) {
  const auto& k = kernel.shape();
  const std::size_t kt = k[0], kh = k[1], kw = k[2], cin = k[3], cout = k[4];
  // Transposed and spatially flipped kernel turns the adjoint into another
  // same-size convolution.
  Tensor<T> flipped(Shape{kt, kh, kw, cout, cin});
  for (std::size_t a = 0; a < kt; ++a) {
    for (std::size_t b = 0; b < kh; ++b) {
      for (std::size_t c = 0; c < kw; ++c) {
        const std::size_t src_tap = ((kt - 1 - a) * kh + (kh - 1 - b)) * kw + (kw - 1 - c);
        const std::size_t dst_tap = (a * kh + b) * kw + c;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t co = 0; co < cout; ++co) {
            flipped[(dst_tap * cout + co) * cin + ci] = kernel[(src_tap * cin + ci) * cout + co];
          }
        }
      }
    }
  }
  return conv3d_forward(grad_output, flipped, Tensor<T>(Shape{cin}));
}

template <typename T>
void conv3d_backward_params(const Tensor<T>& input, const Tensor<T>& grad_output, Tensor<T>& grad_kernel,
                            Tensor<T>& grad_bias) {
  const ConvDims d = conv_dims(input, grad_kernel);
  const Padded<T> in = pad_input(input, d.pt, d.ph, d.pw, 0);
  T* gk = grad_kernel.raw();
  const T* gy = grad_output.raw();

  for (std::size_t i = 0; i < d.t * d.h * d.w; ++i) {
    for (std::size_t co = 0; co < d.cout; ++co) grad_bias[co] += gy[i * d.cout + co];
  }

#if TEMPNET_HAVE_VECTOR_EXT
  if (use_simd<T>(d.cout)) {
    constexpr std::size_t L = Simd<T>::lanes;
    constexpr std::size_t CB = 16;
    for (std::size_t t = 0; t < d.t; ++t) {
      for (std::size_t h = 0; h < d.h; ++h) {
        const T* grow = gy + (t * d.h + h) * d.w * d.cout;
        for (std::size_t a = 0; a < d.kt; ++a) {
          for (std::size_t b = 0; b < d.kh; ++b) {
            const T* irow = in.row(t + a, h + b);
            for (std::size_t c = 0; c < d.kw; ++c) {
              const std::size_t tap = (a * d.kh + b) * d.kw + c;
              const T* xrow = irow + c * d.cin;
              for (std::size_t cb = 0; cb < d.cout; cb += L) {
                for (std::size_t ci0 = 0; ci0 < d.cin; ci0 += CB) {
                  const std::size_t n = std::min(CB, d.cin - ci0);
                  T* block = gk + (tap * d.cin + ci0) * d.cout + cb;
                  if (n == CB) {
                    accumulate_kernel_block<T, CB>(xrow + ci0, d.cin, grow + cb, d.cout, d.w, block);
                  } else {
                    accumulate_kernel_dyn<T>(xrow + ci0, d.cin, n, grow + cb, d.cout, d.w, block);
                  }
                }
              }
            }
          }
        }
      }
    }
    return;
  }
#endif
  for (std::size_t t = 0; t < d.t; ++t) {
    for (std::size_t h = 0; h < d.h; ++h) {
      for (std::size_t w = 0; w < d.w; ++w) {
        const T* g = gy + ((t * d.h + h) * d.w + w) * d.cout;
        for (std::size_t a = 0; a < d.kt; ++a) {
          for (std::size_t b = 0; b < d.kh; ++b) {
            const T* irow = in.row(t + a, h + b);
            for (std::size_t c = 0; c < d.kw; ++c) {
              const T* x = irow + (w + c) * d.cin;
              T* k = gk + ((a * d.kh + b) * d.kw + c) * d.cin * d.cout;
              for (std::size_t ci = 0; ci < d.cin; ++ci) {
                const T xv = x[ci];
                for (std::size_t co = 0; co < d.cout; ++co) k[ci * d.cout + co] += xv * g[co];
              }
            }
          }
        }
      }
    }
  }
}

Shape pooled_shape(const Shape& input, const Window3& window) {
  if (input.size() != 4) throw ShapeError("maxpool: input must be rank 4 [T,H,W,C], got " + shape_string(input));
  static const char* axis_names[] = {"T", "H", "W"};
  Shape out = input;
  for (std::size_t a = 0; a < 3; ++a) {
    if (window[a] == 0) throw ShapeError(std::string("maxpool: window extent on axis ") + axis_names[a] + " is zero");
    out[a] = (input[a] + window[a] - 1) / window[a];
  }
  return out;
}

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& input, const Window3& window, std::vector<std::size_t>& argmax) {
  const Shape os = pooled_shape(input.shape(), window);
  const auto& is = input.shape();
  Tensor<T> out(os);
  argmax.assign(out.size(), 0);
  const std::size_t C = is[3];
  std::size_t o = 0;
  for (std::size_t ot = 0; ot < os[0]; ++ot) {
    const std::size_t t0 = ot * window[0], t1 = std::min(is[0], t0 + window[0]);
    for (std::size_t oh = 0; oh < os[1]; ++oh) {
      const std::size_t h0 = oh * window[1], h1 = std::min(is[1], h0 + window[1]);
      for (std::size_t ow = 0; ow < os[2]; ++ow) {
        const std::size_t w0 = ow * window[2], w1 = std::min(is[2], w0 + window[2]);
        for (std::size_t c = 0; c < C; ++c, ++o) {
          std::size_t best = ((t0 * is[1] + h0) * is[2] + w0) * C + c;
          T best_v = input[best];
          for (std::size_t t = t0; t < t1; ++t) {
            for (std::size_t h = h0; h < h1; ++h) {
              for (std::size_t w = w0; w < w1; ++w) {
                const std::size_t idx = ((t * is[1] + h) * is[2] + w) * C + c;
                if (input[idx] > best_v) {
                  best_v = input[idx];
                  best = idx;
                }
              }
            }
          }
          out[o] = best_v;
          argmax[o] = best;
        }
      }
    }
  }
  return out;
}

#define TEMPNET_INSTANTIATE(T)                                                                         \
  template void check_conv3d_shapes<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> conv3d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> conv3d_backward_input<T>(const Tensor<T>&, const Tensor<T>&);                      \
  template void conv3d_backward_params<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&); \
  template Tensor<T> maxpool_forward<T>(const Tensor<T>&, const Window3&, std::vector<std::size_t>&);

TEMPNET_INSTANTIATE(float)
TEMPNET_INSTANTIATE(double)

#undef TEMPNET_INSTANTIATE

}  // namespace tempnet::kernels
