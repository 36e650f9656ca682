#pragma once

// Synthetic startle-event clips: soft-edged elliptical agents moving over a
// static textured background with per-frame sensor noise. Positive clips
// contain one short burst of speed combined with a sharp turn; negative
// clips only drift gently.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "tempnet/clip_io.hpp"
#include "tempnet/preproc.hpp"

namespace tempnet {

struct SceneConfig {
  std::size_t height = 160;
  std::size_t width = 208;
  double fps = 5.0;
  std::size_t frames = 20;

  std::size_t min_agents = 1;
  std::size_t max_agents = 2;
  double min_semi_major = 7.0;  // px
  double max_semi_major = 12.0;
  double min_aspect = 0.4;  // semi-minor / semi-major
  double max_aspect = 0.6;
  double min_speed = 0.8;  // px per frame
  double max_speed = 2.0;
  double min_intensity = 0.6;
  double max_intensity = 0.95;
  double max_drift_deg = 10.0;  // per-frame heading change outside events

  double background_level = 0.25;
  double texture_amplitude = 0.08;
  // Stripe period across agent bodies in px; 0 renders flat agents.
  double agent_stripe_period = 0.0;
  double min_noise = 0.0;  // per-clip noise sigma range
  double max_noise = 0.01;

  double min_multiplier = 3.0;
  double max_multiplier = 4.0;
  double min_turn_deg = 60.0;
  double max_turn_deg = 120.0;
  std::size_t min_event_frames = 1;
  std::size_t max_event_frames = 3;

  void validate() const;
};

/// Scene with fine stripes on the agents, where most of the motion signal
/// sits above the network-input Nyquist rate.
SceneConfig high_frequency_scene();

struct EventSpec {
  std::size_t onset = 0;     // first accelerated frame
  std::size_t duration = 1;  // frames
  double speed_multiplier = 3.0;
  double heading_change_deg = 60.0;  // signed
  std::size_t agent = 0;
};

struct AgentTrack {
  double semi_major = 0, semi_minor = 0, intensity = 0, base_speed = 0;
  std::vector<std::array<double, 2>> centre;  // (x, y) per frame
  std::vector<bool> reflected;                // bounce during the step into frame t
};

struct SyntheticClip {
  RawClip clip;
  int label = 0;
  std::optional<EventSpec> event;
  std::vector<AgentTrack> agents;
  double noise_sigma = 0;
};

/// Deterministic in (scene, positive, seed).
SyntheticClip generate(const SceneConfig& scene, bool positive, std::uint64_t seed);

/// Per-clip RNG seed derived from the dataset seed and clip index.
std::uint64_t clip_seed(std::uint64_t dataset_seed, std::uint64_t index);

struct SplitPlan {
  std::array<std::size_t, 3> size{};       // train, val, test
  std::array<std::size_t, 3> positives{};  // per split
};

/// Stratified split sizes mirroring 642/150/100 of 892 clips; every split has
/// at least one clip of each class.
SplitPlan plan_splits(std::size_t n, double positive_ratio);

/// Writes clip_NNNNN.tclp files and manifest.tsv into `dir`.
std::vector<ManifestEntry> generate_dataset(const std::filesystem::path& dir, std::size_t n, double positive_ratio,
                                            std::uint64_t seed, const SceneConfig& scene = {});

/// Largest per-frame sum of squared frame differences of a [T,H,W,C] clip.
double peak_motion_energy(const Tensor<float>& frames);

/// Threshold rule on a scalar score: score >= threshold predicts positive.
struct HandRule {
  double threshold = 0.0;
  double accuracy = 0.0;  // on the data it was fitted to
};

/// Picks the threshold with the highest accuracy (midpoints between sorted
/// scores; ties resolve to the lowest threshold).
HandRule fit_hand_rule(const std::vector<double>& scores, const std::vector<int>& labels);
double hand_rule_accuracy(const HandRule& rule, const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace tempnet
