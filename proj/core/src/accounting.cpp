#include "tempnet/accounting.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace tempnet {

std::uint64_t in_bounds_taps(std::uint64_t n, std::uint64_t k) {
  const auto pad = static_cast<std::int64_t>(k / 2);
  std::uint64_t total = 0;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const std::int64_t lo = std::max<std::int64_t>(0, i - pad);
    const std::int64_t hi = std::min<std::int64_t>(static_cast<std::int64_t>(n) - 1, i + pad);
    total += static_cast<std::uint64_t>(hi - lo + 1);
  }
  return total;
}

namespace {

std::uint64_t conv_flops(const Shape& in, std::size_t cout) {
  return 2ull * in[3] * cout * in_bounds_taps(in[0], 3) * in_bounds_taps(in[1], 3) * in_bounds_taps(in[2], 3);
}

std::uint64_t conv_params(std::size_t cin, std::size_t cout) { return 27ull * cin * cout + cout; }

// Windows tile the input, so the comparisons sum to (inputs - outputs) per
// channel.
std::uint64_t pool_flops(const Shape& in, const Shape& out) {
  return (static_cast<std::uint64_t>(in[0]) * in[1] * in[2] - static_cast<std::uint64_t>(out[0]) * out[1] * out[2]) *
         in[3];
}

}  // namespace

std::vector<StageCost> stage_costs(const TempNetConfig& cfg) {
  std::vector<StageCost> out;
  const std::size_t c = cfg.channels;
  const std::size_t frames = cfg.input_shape[0];
  const std::size_t hidden = cfg.attention_bottleneck();
  for (const Stage& s : plan_stages(cfg)) {
    StageCost cost{s};
    switch (s.kind) {
      case StageKind::Stem:
        cost.params = conv_params(s.input[3], c);
        cost.flops = conv_flops(s.input, c);
        break;
      case StageKind::ResidualBlock:
        cost.params = 2 * conv_params(c, c);
        cost.flops = 2 * conv_flops(s.input, c);
        break;
      case StageKind::Attention: {
        cost.params = frames * hidden + hidden + hidden * frames + frames;
        const std::uint64_t per_frame = s.input[1] * s.input[2] * s.input[3];
        // mean and max over each frame, then the shared MLP on both paths
        cost.flops = 2 * frames * (per_frame - 1) + 2 * (2 * frames * hidden + 2 * hidden * frames);
        break;
      }
      case StageKind::SpatialPool:
      case StageKind::BridgePool:
      case StageKind::TemporalPool:
        cost.flops = pool_flops(s.input, s.output);
        break;
      case StageKind::Head:
        cost.params = c + 1;
        cost.flops = c * (s.input[0] * s.input[1] * s.input[2] - 1) + 2 * c;
        break;
    }
    out.push_back(std::move(cost));
  }
  return out;
}

std::uint64_t count_params(const TempNetConfig& cfg) {
  std::uint64_t n = 0;
  for (const auto& [name, shape] : parameter_layout(cfg)) n += shape_numel(shape);
  return n;
}

std::uint64_t count_flops(const TempNetConfig& cfg) {
  std::uint64_t n = 0;
  for (const auto& s : stage_costs(cfg)) n += s.flops;
  return n;
}

std::string describe(const TempNetConfig& cfg) {
  const auto costs = stage_costs(cfg);
  std::ostringstream os;
  os << std::left << std::setw(28) << "stage" << std::setw(14) << "kind" << std::setw(18) << "input" << std::setw(18)
     << "output" << std::setw(10) << "pool" << std::right << std::setw(12) << "params" << std::setw(18) << "flops"
     << '\n';
  std::uint64_t params = 0, flops = 0;
  for (const auto& c : costs) {
    const bool pooled = c.stage.kind == StageKind::SpatialPool || c.stage.kind == StageKind::BridgePool ||
                        c.stage.kind == StageKind::TemporalPool;
    const std::string pool = pooled ? "(" + std::to_string(c.stage.window[0]) + "," + std::to_string(c.stage.window[1]) +
                                          "," + std::to_string(c.stage.window[2]) + ")"
                                    : "-";
    os << std::left << std::setw(28) << c.stage.name << std::setw(14) << stage_kind_name(c.stage.kind) << std::setw(18)
       << shape_string(c.stage.input) << std::setw(18) << shape_string(c.stage.output) << std::setw(10) << pool
       << std::right << std::setw(12) << c.params << std::setw(18) << c.flops << '\n';
    params += c.params;
    flops += c.flops;
  }
  os << std::left << std::setw(88) << "total" << std::right << std::setw(12) << params << std::setw(18) << flops << '\n';
  return os.str();
}

}  // namespace tempnet
