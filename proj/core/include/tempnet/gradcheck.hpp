#pragma once

// Finite-difference verification of the network's analytic gradients in
// 64-bit precision.

#include <cstdint>
#include <optional>
#include <string>

#include "tempnet/autodiff.hpp"
#include "tempnet/config.hpp"
#include "tempnet/network.hpp"

namespace tempnet {

struct GradcheckOptions {
  std::uint64_t seed = 1;
  double epsilon = 1e-5;  // central-difference step
  double label = 1.0;
  std::optional<GradientFault> fault;
};

struct GradcheckReport {
  std::size_t checked = 0;  // scalar parameters compared
  std::size_t kinks = 0;    // compared against one-sided slopes instead
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Smallest gradient magnitude central differences resolve: with a step of
/// 1e-5 and double rounding of an O(1) loss the numeric estimate carries
/// a few 1e-11 of absolute noise.
inline constexpr double kGradientFloor = 1e-6;

/// One-sided slopes further apart than this (relative) mark a
/// non-differentiable point inside the probe interval.
inline constexpr double kKinkThreshold = 1e-4;

/// |a - n| / max(|a|, |n|, kGradientFloor).
double relative_error(double analytic, double numeric);

/// Builds `cfg` in 64-bit mode with random weights and a random input and
/// compares every parameter gradient of the BCE loss with central
/// differences. Passes iff max relative error < tolerance.
GradcheckReport gradcheck(const TempNetConfig& cfg, double tolerance, const GradcheckOptions& options = {});

/// Same comparison for an existing network and input.
GradcheckReport gradcheck_network(const TempNet<double>& net, const Tensor<double>& input, double tolerance,
                                  const GradcheckOptions& options = {});

/// Small configuration for gradient checking: 4x8x8 input, 2 channels,
/// two spatial and one temporal stage.
TempNetConfig reduced_gradcheck_config(bool attention, bool wavelet);

std::string format_gradcheck(const GradcheckReport& report);

}  // namespace tempnet
