#pragma once

// Clip preprocessing: framerate reduction, grayscale + bilinear resize,
// frame differencing and single-level orthonormal Haar down-sampling.

#include <cstddef>
#include <string>

#include "tempnet/tensor.hpp"

namespace tempnet {

/// Decoded frames [T,H,W,C] with C = 1 or 3 and samples in [0,1].
struct RawClip {
  Tensor<float> frames;
  double fps = 5.0;
  std::string source_id;

  void validate() const;
  std::size_t frame_count() const { return frames.extent(0); }
};

/// Four T x H/2 x W/2 x C subbands. lh carries horizontal detail, hl
/// vertical detail and hh the diagonal.
struct SubbandStack {
  Tensor<float> ll, lh, hl, hh;
};

struct PreprocConfig {
  double source_fps = 5.0;  // used for stored clips, which carry no rate
  double target_fps = 5.0;
  // Spatial size handed to the network. With the wavelet on, frames are first
  // scaled to twice this size and the DWT halves them back.
  std::size_t height = 150;
  std::size_t width = 200;
  bool use_wavelet = false;
  bool difference_frames = true;

  std::size_t pre_dwt_height() const { return use_wavelet ? 2 * height : height; }
  std::size_t pre_dwt_width() const { return use_wavelet ? 2 * width : width; }
  std::size_t output_channels() const { return use_wavelet ? 4 : 1; }
  void validate() const;
  bool operator==(const PreprocConfig&) const = default;
};

/// Number of frames kept when resampling `frames` at `fps` to `target_fps`.
std::size_t reduced_frame_count(std::size_t frames, double fps, double target_fps);

/// Keeps frames round(i * fps / target_fps) without interpolation.
RawClip reduce_framerate(const RawClip& clip, double target_fps);

/// Bilinear resize with half-pixel centres and edge clamping, per frame and
/// channel, of a [T,H,W,C] tensor.
Tensor<float> resize_bilinear(const Tensor<float>& frames, std::size_t height, std::size_t width);

/// Luminance 0.299 R + 0.587 G + 0.114 B (identity for one channel) followed
/// by a bilinear resize. Returns [T,height,width,1].
Tensor<float> to_grayscale_resize(const RawClip& clip, std::size_t height, std::size_t width);

/// out[0] = 0 and out[t] = clip[t] - clip[t-1].
Tensor<float> frame_difference(const Tensor<float>& clip);

SubbandStack haar_dwt(const Tensor<float>& frames);
Tensor<float> inverse_haar_dwt(const SubbandStack& bands);

/// [T,H,W,C] -> [T,H/2,W/2,4C], channels ordered LL, LH, HL, HH per source
/// channel.
Tensor<float> haar_dwt_downsample(const Tensor<float>& frames);
SubbandStack split_subbands(const Tensor<float>& interleaved);

/// Full pipeline; output [T', H, W, 1 or 4].
Tensor<float> preprocess(const RawClip& clip, const PreprocConfig& cfg);

/// Shape preprocess() produces for a clip of `frames` frames at `fps`.
Shape preprocess_output_shape(const PreprocConfig& cfg, std::size_t frames, double fps);

}  // namespace tempnet
