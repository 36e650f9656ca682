#include "tempnet/preproc.hpp"

#include <algorithm>
#include <cmath>

namespace tempnet {

void RawClip::validate() const {
  if (frames.rank() != 4) throw ShapeError("raw clip must be [T,H,W,C], got " + shape_string(frames.shape()));
  if (frames.extent(3) != 1 && frames.extent(3) != 3) {
    throw ShapeError("raw clip must have 1 or 3 channels, got " + std::to_string(frames.extent(3)));
  }
  if (frames.extent(0) < 2) throw ShapeError("raw clip needs at least 2 frames");
  if (!(fps > 0)) throw ValueError("raw clip fps must be positive");
}

void PreprocConfig::validate() const {
  if (!(source_fps > 0)) throw ValueError("source_fps must be positive");
  if (!(target_fps > 0)) throw ValueError("target_fps must be positive");
  if (height == 0 || width == 0) throw ValueError("preprocessing target extents must be positive");
}

std::size_t reduced_frame_count(std::size_t frames, double fps, double target_fps) {
  const double duration = static_cast<double>(frames) / fps;
  return static_cast<std::size_t>(std::floor(duration * target_fps + 1e-9));
}

RawClip reduce_framerate(const RawClip& clip, double target_fps) {
  clip.validate();
  if (!(target_fps > 0)) throw ValueError("target fps must be positive");
  if (target_fps > clip.fps) {
    throw ValueError("target fps " + std::to_string(target_fps) + " exceeds source fps " + std::to_string(clip.fps));
  }
  const std::size_t n = clip.frame_count();
  const std::size_t keep = reduced_frame_count(n, clip.fps, target_fps);
  if (keep == 0) throw ValueError("clip too short for target fps");
  const auto& s = clip.frames.shape();
  const std::size_t frame_size = s[1] * s[2] * s[3];
  Tensor<float> out(Shape{keep, s[1], s[2], s[3]});
  const double step = clip.fps / target_fps;
  for (std::size_t i = 0; i < keep; ++i) {
    const auto src = std::min(n - 1, static_cast<std::size_t>(std::llround(static_cast<double>(i) * step)));
    std::copy_n(clip.frames.raw() + src * frame_size, frame_size, out.raw() + i * frame_size);
  }
  return RawClip{std::move(out), target_fps, clip.source_id};
}

Tensor<float> resize_bilinear(const Tensor<float>& frames, std::size_t height, std::size_t width) {
  if (frames.rank() != 4) throw ShapeError("resize: expected [T,H,W,C], got " + shape_string(frames.shape()));
  if (height == 0 || width == 0) throw ValueError("resize: target extent is zero");
  const auto& s = frames.shape();
  const std::size_t T = s[0], H = s[1], W = s[2], C = s[3];
  if (H == height && W == width) return frames;

  struct Tap {
    std::size_t i0, i1;
    float f;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> v(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      v[o] = {i0, std::min(i0 + 1, in - 1), static_cast<float>(src - static_cast<double>(i0))};
    }
    return v;
  };
  const auto ty = taps(H, height);
  const auto tx = taps(W, width);

  Tensor<float> out(Shape{T, height, width, C});
  for (std::size_t t = 0; t < T; ++t) {
    const float* f = frames.raw() + t * H * W * C;
    float* o = out.raw() + t * height * width * C;
    for (std::size_t y = 0; y < height; ++y) {
      const Tap& a = ty[y];
      for (std::size_t x = 0; x < width; ++x) {
        const Tap& b = tx[x];
        for (std::size_t c = 0; c < C; ++c) {
          const float v00 = f[(a.i0 * W + b.i0) * C + c], v01 = f[(a.i0 * W + b.i1) * C + c];
          const float v10 = f[(a.i1 * W + b.i0) * C + c], v11 = f[(a.i1 * W + b.i1) * C + c];
          const float top = v00 + (v01 - v00) * b.f;
          const float bottom = v10 + (v11 - v10) * b.f;
          o[(y * width + x) * C + c] = top + (bottom - top) * a.f;
        }
      }
    }
  }
  return out;
}

Tensor<float> to_grayscale_resize(const RawClip& clip, std::size_t height, std::size_t width) {
  clip.validate();
  if (height == 0 || width == 0) throw ValueError("grayscale resize: target extent is zero");
  const auto& s = clip.frames.shape();
  if (s[3] == 1) return resize_bilinear(clip.frames, height, width);
  const std::size_t pixels = s[0] * s[1] * s[2];
  Tensor<float> gray(Shape{s[0], s[1], s[2], 1});
  const float* src = clip.frames.raw();
  for (std::size_t i = 0; i < pixels; ++i) {
    gray[i] = 0.299f * src[3 * i] + 0.587f * src[3 * i + 1] + 0.114f * src[3 * i + 2];
  }
  return resize_bilinear(gray, height, width);
}

Tensor<float> frame_difference(const Tensor<float>& clip) {
  if (clip.rank() != 4) throw ShapeError("frame_difference: expected [T,H,W,C], got " + shape_string(clip.shape()));
  if (clip.extent(0) < 2) throw ShapeError("frame_difference: needs at least 2 frames");
  const std::size_t frame_size = clip.size() / clip.extent(0);
  Tensor<float> out(clip.shape());
  for (std::size_t i = frame_size; i < clip.size(); ++i) out[i] = clip[i] - clip[i - frame_size];
  return out;
}

SubbandStack haar_dwt(const Tensor<float>& frames) {
  if (frames.rank() != 4) throw ShapeError("haar_dwt: expected [T,H,W,C], got " + shape_string(frames.shape()));
  const auto& s = frames.shape();
  const std::size_t T = s[0], H = s[1], W = s[2], C = s[3];
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("haar_dwt: frame extents " + std::to_string(H) + "x" + std::to_string(W) +
                     " must be even; resize the clip to even height and width first");
  }
  const Shape bs{T, H / 2, W / 2, C};
  SubbandStack out{Tensor<float>(bs), Tensor<float>(bs), Tensor<float>(bs), Tensor<float>(bs)};
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t y = 0; y < H / 2; ++y) {
      for (std::size_t x = 0; x < W / 2; ++x) {
        for (std::size_t c = 0; c < C; ++c) {
          const float a = frames.at({t, 2 * y, 2 * x, c});
          const float b = frames.at({t, 2 * y, 2 * x + 1, c});
          const float cc = frames.at({t, 2 * y + 1, 2 * x, c});
          const float d = frames.at({t, 2 * y + 1, 2 * x + 1, c});
          const std::size_t o = ((t * (H / 2) + y) * (W / 2) + x) * C + c;
          out.ll[o] = (a + b + cc + d) * 0.5f;
          out.lh[o] = (a - b + cc - d) * 0.5f;
          out.hl[o] = (a + b - cc - d) * 0.5f;
          out.hh[o] = (a - b - cc + d) * 0.5f;
        }
      }
    }
  }
  return out;
}

Tensor<float> inverse_haar_dwt(const SubbandStack& bands) {
  const Shape& s = bands.ll.shape();
  if (bands.lh.shape() != s || bands.hl.shape() != s || bands.hh.shape() != s || s.size() != 4) {
    throw ShapeError("inverse_haar_dwt: subband shapes disagree");
  }
  const std::size_t T = s[0], h = s[1], w = s[2], C = s[3];
  Tensor<float> out(Shape{T, 2 * h, 2 * w, C});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = ((t * h + y) * w + x) * C + c;
          const float ll = bands.ll[i], lh = bands.lh[i], hl = bands.hl[i], hh = bands.hh[i];
          out.at({t, 2 * y, 2 * x, c}) = (ll + lh + hl + hh) * 0.5f;
          out.at({t, 2 * y, 2 * x + 1, c}) = (ll - lh + hl - hh) * 0.5f;
          out.at({t, 2 * y + 1, 2 * x, c}) = (ll + lh - hl - hh) * 0.5f;
          out.at({t, 2 * y + 1, 2 * x + 1, c}) = (ll - lh - hl + hh) * 0.5f;
        }
      }
    }
  }
  return out;
}

Tensor<float> haar_dwt_downsample(const Tensor<float>& frames) {
  const SubbandStack bands = haar_dwt(frames);
  const Shape& s = bands.ll.shape();
  const std::size_t C = s[3];
  Tensor<float> out(Shape{s[0], s[1], s[2], 4 * C});
  const std::size_t pixels = s[0] * s[1] * s[2];
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t i = p * C + c;
      float* o = out.raw() + p * 4 * C + 4 * c;
      o[0] = bands.ll[i];
      o[1] = bands.lh[i];
      o[2] = bands.hl[i];
      o[3] = bands.hh[i];
    }
  }
  return out;
}

SubbandStack split_subbands(const Tensor<float>& interleaved) {
  if (interleaved.rank() != 4 || interleaved.extent(3) % 4 != 0) {
    throw ShapeError("split_subbands: expected [T,H,W,4C], got " + shape_string(interleaved.shape()));
  }
  const auto& s = interleaved.shape();
  const std::size_t C = s[3] / 4;
  const Shape bs{s[0], s[1], s[2], C};
  SubbandStack out{Tensor<float>(bs), Tensor<float>(bs), Tensor<float>(bs), Tensor<float>(bs)};
  const std::size_t pixels = s[0] * s[1] * s[2];
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < C; ++c) {
      const float* in = interleaved.raw() + p * 4 * C + 4 * c;
      const std::size_t i = p * C + c;
      out.ll[i] = in[0];
      out.lh[i] = in[1];
      out.hl[i] = in[2];
      out.hh[i] = in[3];
    }
  }
  return out;
}

Tensor<float> preprocess(const RawClip& clip, const PreprocConfig& cfg) {
  cfg.validate();
  const RawClip reduced = reduce_framerate(clip, cfg.target_fps);
  Tensor<float> frames = to_grayscale_resize(reduced, cfg.pre_dwt_height(), cfg.pre_dwt_width());
  if (cfg.difference_frames) frames = frame_difference(frames);
  if (cfg.use_wavelet) frames = haar_dwt_downsample(frames);
  return frames;
}

Shape preprocess_output_shape(const PreprocConfig& cfg, std::size_t frames, double fps) {
  return Shape{reduced_frame_count(frames, fps, cfg.target_fps), cfg.height, cfg.width, cfg.output_channels()};
}

}  // namespace tempnet
