#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tempnet/autodiff.hpp"
#include "tempnet/config.hpp"
#include "tempnet/param_store.hpp"

namespace tempnet {

enum class StageKind { Stem, ResidualBlock, Attention, SpatialPool, BridgePool, TemporalPool, Head };

const char* stage_kind_name(StageKind kind);

/// One row of the build-time shape plan.
struct Stage {
  std::string name;  // matches the tape scope and parameter prefix
  StageKind kind;
  Shape input;
  Shape output;
  Window3 window{1, 1, 1};  // pooling stages only
};

/// Stage-by-stage shapes for `cfg`. Throws ShapeError, naming the stage,
/// when a pooling window larger than 1 meets an axis already reduced to 1.
std::vector<Stage> plan_stages(const TempNetConfig& cfg);

/// Per-module attention coefficients from the most recent forward pass.
struct AttentionTrace {
  std::vector<std::string> modules;
  std::vector<std::vector<double>> coefficients;

  bool empty() const { return modules.empty(); }
};

template <typename T>
struct ForwardResult {
  Var<T> probability;
  AttentionTrace trace;
};

/// TempNet: stem convolution, spatial encoder (residual block, temporal
/// attention, spatial pooling per stage), spatio-temporal pooling bridge,
/// temporal encoder (residual block, temporal pooling per stage) and a
/// global-mean-pool / dense / sigmoid head.
template <typename T>
class TempNet {
 public:
  /// Seeded initialization: fan-in-scaled normal weights, zero biases.
  static TempNet build(const TempNetConfig& cfg, std::uint64_t seed);

  /// Wraps existing parameters; names and shapes must match the config.
  TempNet(TempNetConfig cfg, ParamStore<T> params);

  const TempNetConfig& config() const { return cfg_; }
  const ParamStore<T>& params() const { return params_; }
  ParamStore<T>& params() { return params_; }

  /// Records the full forward pass on `tape`. Parameters are registered as
  /// trainable leaves under their store names.
  ForwardResult<T> forward(Tape<T>& tape, const Tensor<T>& input) const;

  /// Probability for one clip on a throwaway tape.
  double predict(const Tensor<T>& input, AttentionTrace* trace = nullptr) const;

  template <typename U>
  TempNet<U> cast() const;

 private:
  TempNetConfig cfg_;
  ParamStore<T> params_;
};

/// Names and shapes of every trainable tensor, in build order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const TempNetConfig& cfg);

// Building blocks shared by the network and by tests that compose the
// forward pass by hand.

template <typename T>
Var<T> residual_block(Var<T> x, Var<T> k1, Var<T> b1, Var<T> k2, Var<T> b2);

/// Returns F' = M(F) * F and writes the T gate values to `gate` when given.
template <typename T>
Var<T> temporal_attention(Var<T> features, Var<T> w1, Var<T> b1, Var<T> w2, Var<T> b2,
                          std::vector<double>* gate = nullptr);

}  // namespace tempnet
