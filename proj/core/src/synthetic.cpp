#include "tempnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

namespace tempnet {

void SceneConfig::validate() const {
  if (height < 4 || width < 4) throw ValueError("scene extents must be at least 4x4");
  if (frames < 2) throw ValueError("scene needs at least 2 frames");
  if (!(fps > 0)) throw ValueError("scene fps must be positive");
  if (min_agents > max_agents) throw ValueError("min_agents exceeds max_agents");
  if (!(min_semi_major > 0) || min_semi_major > max_semi_major) throw ValueError("bad agent size range");
  if (!(min_aspect > 0) || min_aspect > max_aspect || max_aspect > 1) throw ValueError("bad agent aspect range");
  if (min_speed < 0 || min_speed > max_speed) throw ValueError("bad agent speed range");
  if (min_noise < 0 || min_noise > max_noise) throw ValueError("bad noise range");
  if (min_multiplier < 3.0 || min_multiplier > max_multiplier) throw ValueError("event speed multiplier must be >= 3");
  if (min_turn_deg < 60.0 || min_turn_deg > max_turn_deg) throw ValueError("event heading change must be >= 60 degrees");
  if (min_event_frames < 1 || max_event_frames > 3 || min_event_frames > max_event_frames) {
    throw ValueError("event duration must lie within 1..3 frames");
  }
  if (frames < 7) throw ValueError("scene too short to place an event in [3, T-4]");
  const double margin = max_semi_major + 2.0;
  if (2.0 * margin >= static_cast<double>(std::min(height, width))) {
    throw ValueError("agents too large for a " + std::to_string(height) + "x" + std::to_string(width) + " frame");
  }
}

SceneConfig high_frequency_scene() {
  SceneConfig s;
  s.agent_stripe_period = 3.0;
  s.min_semi_major = 6.0;
  s.max_semi_major = 10.0;
  return s;
}

std::uint64_t clip_seed(std::uint64_t dataset_seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(dataset_seed), static_cast<std::uint32_t>(dataset_seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x7e3c11u};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

constexpr double kPi = std::numbers::pi;

double deg2rad(double d) { return d * kPi / 180.0; }

struct Agent {
  double x, y, heading, speed;
  double semi_major, semi_minor, intensity;
};

void render_agent(Tensor<float>& frame_buf, std::size_t t, const Agent& a, std::size_t H, std::size_t W,
                  double stripe_period) {
  const double reach = a.semi_major + 1.5;
  const auto x0 = static_cast<std::ptrdiff_t>(std::floor(a.x - reach));
  const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(a.x + reach));
  const auto y0 = static_cast<std::ptrdiff_t>(std::floor(a.y - reach));
  const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(a.y + reach));
  const double c = std::cos(a.heading), s = std::sin(a.heading);
  float* frame = frame_buf.raw() + t * H * W;
  for (std::ptrdiff_t py = std::max<std::ptrdiff_t>(0, y0); py <= std::min<std::ptrdiff_t>(H - 1, y1); ++py) {
    for (std::ptrdiff_t px = std::max<std::ptrdiff_t>(0, x0); px <= std::min<std::ptrdiff_t>(W - 1, x1); ++px) {
      const double dx = static_cast<double>(px) - a.x, dy = static_cast<double>(py) - a.y;
      const double along = dx * c + dy * s;
      const double across = -dx * s + dy * c;
      const double u = along / a.semi_major, v = across / a.semi_minor;
      const double r = std::sqrt(u * u + v * v);
      // Soft edge about one pixel wide.
      const double alpha = std::clamp((1.0 - r) * a.semi_minor + 0.5, 0.0, 1.0);
      if (alpha <= 0) continue;
      double value = a.intensity;
      if (stripe_period > 0) value *= 0.6 + 0.4 * std::cos(2.0 * kPi * along / stripe_period);
      float& px_ref = frame[static_cast<std::size_t>(py) * W + static_cast<std::size_t>(px)];
      px_ref = static_cast<float>(px_ref * (1.0 - alpha) + value * alpha);
    }
  }
}

}  // namespace

SyntheticClip generate(const SceneConfig& scene, bool positive, std::uint64_t seed) {
  scene.validate();
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto uniform_int = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  const std::size_t H = scene.height, W = scene.width, T = scene.frames;
  std::size_t n_agents = uniform_int(scene.min_agents, scene.max_agents);
  if (positive && n_agents == 0) {
    if (scene.max_agents == 0) throw ValueError("a positive clip needs at least one agent");
    n_agents = 1;
  }

  // Static background: level plus a few low-frequency sinusoids.
  std::vector<float> background(H * W, static_cast<float>(scene.background_level));
  if (scene.texture_amplitude > 0) {
    for (int k = 0; k < 3; ++k) {
      const double period = uniform(20.0, 60.0), angle = uniform(0.0, kPi), phase = uniform(0.0, 2 * kPi);
      const double fx = std::cos(angle) * 2 * kPi / period, fy = std::sin(angle) * 2 * kPi / period;
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          background[y * W + x] += static_cast<float>(scene.texture_amplitude / 3.0 *
                                                      std::sin(fx * static_cast<double>(x) +
                                                               fy * static_cast<double>(y) + phase));
        }
      }
    }
  }

  std::vector<Agent> agents(n_agents);
  for (auto& a : agents) {
    a.semi_major = uniform(scene.min_semi_major, scene.max_semi_major);
    a.semi_minor = a.semi_major * uniform(scene.min_aspect, scene.max_aspect);
    a.intensity = uniform(scene.min_intensity, scene.max_intensity);
    const double m = a.semi_major + 2.0;
    a.x = uniform(m, static_cast<double>(W) - 1 - m);
    a.y = uniform(m, static_cast<double>(H) - 1 - m);
    a.heading = uniform(-kPi, kPi);
    a.speed = uniform(scene.min_speed, scene.max_speed);
  }

  SyntheticClip out;
  out.label = positive ? 1 : 0;
  if (positive) {
    EventSpec e;
    e.agent = uniform_int(0, n_agents - 1);
    e.onset = uniform_int(3, T - 4);
    e.duration = uniform_int(scene.min_event_frames, scene.max_event_frames);
    e.speed_multiplier = uniform(scene.min_multiplier, scene.max_multiplier);
    e.heading_change_deg = uniform(scene.min_turn_deg, scene.max_turn_deg) * (uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0);
    out.event = e;
  }
  out.noise_sigma = uniform(scene.min_noise, scene.max_noise);

  out.agents.resize(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) {
    auto& tr = out.agents[i];
    tr.semi_major = agents[i].semi_major;
    tr.semi_minor = agents[i].semi_minor;
    tr.intensity = agents[i].intensity;
    tr.base_speed = agents[i].speed;
  }

  Tensor<float> frames(Shape{T, H, W, 1});
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < n_agents; ++i) {
      Agent& a = agents[i];
      bool reflected = false;
      if (t > 0) {
        double speed = a.speed;
        const bool in_event = out.event && out.event->agent == i && t >= out.event->onset &&
                              t < out.event->onset + out.event->duration;
        if (in_event) {
          speed *= out.event->speed_multiplier;
          if (t == out.event->onset) a.heading += deg2rad(out.event->heading_change_deg);
        } else {
          a.heading += deg2rad(uniform(-scene.max_drift_deg, scene.max_drift_deg));
        }
        a.x += speed * std::cos(a.heading);
        a.y += speed * std::sin(a.heading);
        const double m = a.semi_major + 2.0;
        const double xhi = static_cast<double>(W) - 1 - m, yhi = static_cast<double>(H) - 1 - m;
        if (a.x < m || a.x > xhi) {
          a.x = a.x < m ? 2 * m - a.x : 2 * xhi - a.x;
          a.x = std::clamp(a.x, m, xhi);
          a.heading = kPi - a.heading;
          reflected = true;
        }
        if (a.y < m || a.y > yhi) {
          a.y = a.y < m ? 2 * m - a.y : 2 * yhi - a.y;
          a.y = std::clamp(a.y, m, yhi);
          a.heading = -a.heading;
          reflected = true;
        }
      }
      out.agents[i].centre.push_back({a.x, a.y});
      out.agents[i].reflected.push_back(reflected);
    }

    std::copy(background.begin(), background.end(), frames.raw() + t * H * W);
    for (const auto& a : agents) render_agent(frames, t, a, H, W, scene.agent_stripe_period);
    float* f = frames.raw() + t * H * W;
    for (std::size_t p = 0; p < H * W; ++p) {
      double v = f[p];
      if (out.noise_sigma > 0) v += out.noise_sigma * noise(rng);
      f[p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  out.clip = RawClip{std::move(frames), scene.fps, "synthetic-" + std::to_string(seed)};
  return out;
}

SplitPlan plan_splits(std::size_t n, double positive_ratio) {
  if (n < 10) throw ValueError("dataset needs at least 10 clips, got " + std::to_string(n));
  if (!(positive_ratio > 0 && positive_ratio < 1)) throw ValueError("positive ratio must lie in (0,1)");
  auto scaled = [&](double share) {
    return std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(static_cast<double>(n) * share / 892.0)));
  };
  SplitPlan p;
  p.size[2] = scaled(100);
  p.size[1] = scaled(150);
  p.size[0] = n - p.size[1] - p.size[2];
  const auto total_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n) * positive_ratio));
  auto split_pos = [&](std::size_t size) {
    const auto v = static_cast<std::size_t>(std::llround(static_cast<double>(size) * positive_ratio));
    return std::clamp<std::size_t>(v, 1, size - 1);
  };
  p.positives[2] = split_pos(p.size[2]);
  p.positives[1] = split_pos(p.size[1]);
  const std::size_t rest = total_pos > p.positives[1] + p.positives[2] ? total_pos - p.positives[1] - p.positives[2] : 0;
  p.positives[0] = std::clamp<std::size_t>(rest, 1, p.size[0] - 1);
  return p;
}

std::vector<ManifestEntry> generate_dataset(const std::filesystem::path& dir, std::size_t n, double positive_ratio,
                                            std::uint64_t seed, const SceneConfig& scene) {
  const SplitPlan plan = plan_splits(n, positive_ratio);
  scene.validate();
  std::filesystem::create_directories(dir);

  // Label order inside each split is shuffled so classes interleave.
  std::mt19937_64 rng(clip_seed(seed, ~std::uint64_t{0}));
  std::vector<ManifestEntry> entries;
  entries.reserve(n);
  const Split order[3] = {Split::Train, Split::Val, Split::Test};
  std::size_t index = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<int> labels(plan.size[s], 0);
    std::fill_n(labels.begin(), plan.positives[s], 1);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (int label : labels) {
      char name[32];
      std::snprintf(name, sizeof name, "clip_%05zu.tclp", index);
      const SyntheticClip clip = generate(scene, label == 1, clip_seed(seed, index));
      write_clip(dir / name, ClipFile{clip.clip.frames, label});
      entries.push_back(ManifestEntry{name, label, order[s]});
      ++index;
    }
  }
  write_manifest(dir / kManifestName, entries);
  return entries;
}

double peak_motion_energy(const Tensor<float>& frames) {
  if (frames.rank() != 4) throw ShapeError("peak_motion_energy expects [T,H,W,C], got " + shape_string(frames.shape()));
  const std::size_t T = frames.extent(0), per_frame = frames.size() / T;
  double peak = 0.0;
  for (std::size_t t = 1; t < T; ++t) {
    const float* cur = frames.raw() + t * per_frame;
    const float* prev = cur - per_frame;
    double e = 0.0;
    for (std::size_t i = 0; i < per_frame; ++i) {
      const double d = static_cast<double>(cur[i]) - prev[i];
      e += d * d;
    }
    peak = std::max(peak, e);
  }
  return peak;
}

HandRule fit_hand_rule(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.empty() || scores.size() != labels.size()) throw ValueError("hand rule needs matching, non-empty inputs");
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> candidates{sorted.front()};
  for (std::size_t i = 1; i < sorted.size(); ++i) candidates.push_back(0.5 * (sorted[i - 1] + sorted[i]));
  candidates.push_back(std::nextafter(sorted.back(), std::numeric_limits<double>::infinity()));
  HandRule best{candidates.front(), -1.0};
  for (double c : candidates) {
    const double acc = hand_rule_accuracy(HandRule{c, 0.0}, scores, labels);
    if (acc > best.accuracy) best = HandRule{c, acc};
  }
  return best;
}

double hand_rule_accuracy(const HandRule& rule, const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.empty() || scores.size() != labels.size()) throw ValueError("hand rule needs matching, non-empty inputs");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    correct += static_cast<std::size_t>((scores[i] >= rule.threshold ? 1 : 0) == labels[i]);
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

}  // namespace tempnet
