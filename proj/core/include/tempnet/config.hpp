#pragma once

// Network, preprocessing and training configuration, plus the plain-text
// key=value config file that carries all three.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "tempnet/kernels.hpp"
#include "tempnet/preproc.hpp"

namespace tempnet {

using kernels::Window3;

struct TempNetConfig {
  // (T, H, W, C) of the preprocessed clip.
  std::array<std::size_t, 4> input_shape{20, 150, 200, 1};
  std::size_t channels = 16;
  std::size_t spatial_blocks = 4;
  std::size_t temporal_blocks = 4;
  bool attention_enabled = true;
  std::size_t attention_reduction = 4;
  Window3 spatial_pool{1, 2, 2};
  Window3 temporal_pool{2, 1, 1};
  Window3 bridge_pool{2, 2, 2};

  std::size_t attention_bottleneck() const;
  Shape input() const { return Shape(input_shape.begin(), input_shape.end()); }
  /// Checks field ranges; the pooling schedule is checked by the shape plan.
  void validate() const;

  bool operator==(const TempNetConfig&) const = default;
};

enum class OptimizerKind { Adam, SgdMomentum };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  std::uint64_t seed = 7;
  std::size_t patience = 10;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double threshold = 0.5;
  // Ends training once validation accuracy reaches this value; 0 disables.
  double stop_at_val_accuracy = 0.0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Everything a config file describes.
struct RunConfig {
  TempNetConfig net;
  PreprocConfig preproc;
  TrainConfig train;
  std::size_t frames = 20;

  /// Re-derives net.input_shape from frames and the preprocessing fields.
  void sync_input_shape();
  void validate() const;
};

/// Parses key=value lines; '#' starts a comment. Unknown keys, repeated keys
/// and malformed values throw FormatError naming the line.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text covering every key; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& cfg);

const char* optimizer_name(OptimizerKind kind);

}  // namespace tempnet
