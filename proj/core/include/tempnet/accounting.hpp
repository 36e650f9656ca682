#pragma once

// Parameter and FLOP accounting for a TempNet configuration.
//
// FLOPs count two per multiply-accumulate of every convolution and dense
// layer, over in-bounds taps only (zero padding contributes nothing), plus
// one per comparison in max pooling and one per addition in mean pooling.
// Activations, gating multiplies and residual sums are not counted.

#include <cstdint>
#include <string>
#include <vector>

#include "tempnet/network.hpp"

namespace tempnet {

struct StageCost {
  Stage stage;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

std::vector<StageCost> stage_costs(const TempNetConfig& cfg);

std::uint64_t count_params(const TempNetConfig& cfg);
std::uint64_t count_flops(const TempNetConfig& cfg);

/// Number of (output position, kernel tap) pairs along one axis of extent
/// `n` that land inside the input for a centred odd kernel of size `k`.
std::uint64_t in_bounds_taps(std::uint64_t n, std::uint64_t k);

/// Fixed-width text table, one row per stage plus a total row.
std::string describe(const TempNetConfig& cfg);

}  // namespace tempnet
