// Acceptance suite: one PASS/FAIL line per criterion.
//
//   tempnet_acceptance                 runs every criterion
//   tempnet_acceptance --criterion N   runs one
//
// Each line is also appended to ./acceptance_results.txt. Exit status is 0
// when every selected hard criterion passes. Criterion 8 is
// soft: its line reports FAIL when the ordering does not hold, but it does
// not change the exit status.

#include <CLI11.hpp>

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <string>

#include "oracles.hpp"
#include "tempnet/accounting.hpp"
#include "tempnet/gradcheck.hpp"
#include "tempnet/metrics.hpp"
#include "tempnet/network.hpp"
#include "tempnet/preproc.hpp"
#include "tempnet/synthetic.hpp"
#include "tempnet/train.hpp"

using namespace tempnet;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and limits.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 120;
constexpr double kOracleRelTolerance = 1e-5;
constexpr double kOracleFloor = 1.0;
constexpr std::size_t kOracleShapes = 100;
constexpr double kOracleSeconds = 60;
constexpr std::size_t kWaveletFrames = 1000;
constexpr double kParsevalTolerance = 1e-4;
constexpr double kInverseTolerance = 1e-5;
constexpr double kParamTarget = 109000;
constexpr double kParamBand = 0.05;
constexpr long kAttentionDeltaLo = 500, kAttentionDeltaHi = 1500;
constexpr double kMetricTolerance = 0.005;
constexpr std::size_t kAttentionInputs = 1000;
// Learnability: reference run (seed 7, 400 clips, 20x75x100, deterministic)
// reached 0.9701 validation accuracy at epoch 9.
constexpr double kReferenceValAccuracy = 0.9701;
constexpr double kLearnabilityMargin = 0.03;
constexpr double kLearnabilityFloor = 0.9;
constexpr double kLearnabilityTargetMinutes = 30;
constexpr std::size_t kAblationSeeds = 5;
constexpr double kSmokeMinutes = 45;

struct Outcome {
  bool pass = false;
  std::string detail;
  bool soft = false;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path workdir(const std::string& name) {
  const auto dir = fs::current_path() / "acceptance_work" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void progress(const std::string& line) {
  std::fprintf(stderr, "  %s\n", line.c_str());
  std::fflush(stderr);
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  bool all = true;
  std::string detail;
  for (bool attention : {false, true}) {
    for (bool wavelet : {false, true}) {
      const auto cfg = reduced_gradcheck_config(attention, wavelet);
      const auto report = gradcheck(cfg, kGradTolerance);
      all = all && report.passed;
      detail += fmt("att=%d wav=%d err=%.2e; ", attention, wavelet, report.max_rel_error);
    }
  }
  const double secs = seconds_since(t0);
  detail += fmt("tol %.0e, %.1fs (limit %.0fs)", kGradTolerance, secs, kGradSeconds);
  return {all && secs < kGradSeconds, detail};
}

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240);
  auto ext = [&](std::size_t lo, std::size_t hi) { return oracle::random_extent(rng, lo, hi); };
  std::array<double, 4> worst{};
  for (std::size_t rep = 0; rep < kOracleShapes; ++rep) {
    {
      const std::size_t ci = ext(1, 4), co = ext(1, 20);
      const auto odd = [&] { return 2 * ext(0, 1) + 1; };
      const auto x = oracle::random_tensor<float>(Shape{ext(1, 5), ext(1, 7), ext(1, 9), ci}, rng);
      const auto k = oracle::random_tensor<float>(Shape{odd(), odd(), odd(), ci, co}, rng);
      const auto b = oracle::random_tensor<float>(Shape{co}, rng);
      worst[0] = std::max(worst[0], oracle::max_rel_diff(kernels::conv3d_forward(x, k, b), oracle::conv3d(x, k, b),
                                                         kOracleFloor));
    }
    {
      const auto x = oracle::random_tensor<float>(Shape{ext(1, 6), ext(1, 7), ext(1, 7), ext(1, 3)}, rng);
      const std::array<std::size_t, 3> win{ext(1, 3), ext(1, 3), ext(1, 3)};
      std::vector<std::size_t> arg;
      const auto got = kernels::maxpool_forward(x, Window3{win[0], win[1], win[2]}, arg);
      const auto want = oracle::maxpool(x, win);
      worst[1] = std::max(worst[1], got.shape() == want.shape() ? oracle::max_rel_diff(got, want, kOracleFloor) : 1e9);
    }
    {
      const std::size_t r = ext(1, 6), K = ext(1, 40), M = ext(1, 12);
      const auto x = oracle::random_tensor<float>(Shape{r, K}, rng);
      const auto w = oracle::random_tensor<float>(Shape{K, M}, rng);
      const auto b = oracle::random_tensor<float>(Shape{M}, rng);
      Tape<float> tape;
      const auto got = dense(tape.constant(x), tape.constant(w), tape.constant(b)).value();
      worst[2] = std::max(worst[2], oracle::max_rel_diff(got, oracle::dense(x, w, b), kOracleFloor));
    }
    {
      const Shape s{ext(1, 5), ext(1, 6), ext(1, 6), ext(1, 4)};
      std::vector<std::size_t> axes;
      for (std::size_t a = 0; a < 4; ++a) {
        if (rng() % 2) axes.push_back(a);
      }
      if (axes.empty()) axes.push_back(rng() % 4);
      const auto x = oracle::random_tensor<float>(s, rng);
      for (bool take_max : {false, true}) {
        Tape<float> tape;
        const auto got = reduce(tape.constant(x), axes, take_max ? ReduceMode::Max : ReduceMode::Mean, true).value();
        const auto want = oracle::reduce_keep(x, axes, take_max);
        worst[3] = std::max(worst[3], got.shape() == want.shape() ? oracle::max_rel_diff(got, want, kOracleFloor) : 1e9);
      }
    }
  }
  const double secs = seconds_since(t0);
  bool ok = secs < kOracleSeconds;
  for (double w : worst) ok = ok && w <= kOracleRelTolerance;
  return {ok, fmt("%zu shapes each, worst rel err conv3d %.1e maxpool %.1e dense %.1e reduce %.1e (tol %.0e), %.1fs",
                  kOracleShapes, worst[0], worst[1], worst[2], worst[3], kOracleRelTolerance, secs)};
}

Outcome wavelet_invariants() {
  std::mt19937_64 rng(31);
  std::size_t frames = 0;
  double parseval = 0, inverse = 0;
  while (frames < kWaveletFrames) {
    const std::size_t T = std::min<std::size_t>(oracle::random_extent(rng, 1, 20), kWaveletFrames - frames);
    const Shape s{T, 2 * oracle::random_extent(rng, 1, 24), 2 * oracle::random_extent(rng, 1, 24),
                  oracle::random_extent(rng, 1, 3)};
    const auto x = oracle::random_tensor<float>(s, rng);
    const auto bands = haar_dwt(x);
    const std::size_t per_frame = x.size() / T, band_frame = bands.ll.size() / T;
    for (std::size_t t = 0; t < T; ++t) {
      double ex = 0, eb = 0;
      for (std::size_t i = 0; i < per_frame; ++i) ex += std::pow(static_cast<double>(x[t * per_frame + i]), 2);
      for (const auto* b : {&bands.ll, &bands.lh, &bands.hl, &bands.hh}) {
        for (std::size_t i = 0; i < band_frame; ++i) eb += std::pow(static_cast<double>((*b)[t * band_frame + i]), 2);
      }
      parseval = std::max(parseval, std::abs(eb - ex) / ex);
    }
    inverse = std::max(inverse, oracle::max_abs_diff(inverse_haar_dwt(bands), x));
    frames += T;
  }
  return {parseval <= kParsevalTolerance && inverse <= kInverseTolerance,
          fmt("%zu frames, worst Parseval rel err %.2e (tol %.0e), worst inverse abs err %.2e (tol %.0e)", frames,
              parseval, kParsevalTolerance, inverse, kInverseTolerance)};
}

Outcome parameter_calibration() {
  TempNetConfig cfg;
  cfg.attention_enabled = false;
  const auto plain = static_cast<long>(count_params(cfg));
  cfg.attention_enabled = true;
  const auto with_attention = static_cast<long>(count_params(cfg));
  const double rel = std::abs(static_cast<double>(plain) - kParamTarget) / kParamTarget;
  const long delta = with_attention - plain;
  return {rel <= kParamBand && delta >= kAttentionDeltaLo && delta <= kAttentionDeltaHi,
          fmt("no-attention %ld (%.2f%% from %.0f, band %.0f%%), attention adds %ld (band %ld..%ld)", plain, 100 * rel,
              kParamTarget, 100 * kParamBand, delta, kAttentionDeltaLo, kAttentionDeltaHi)};
}

Outcome metric_reproduction() {
  const Metrics m = metric_math(39, 41, 9, 11);
  const bool ok = m.accuracy && m.precision && m.f1 && std::abs(*m.accuracy - 0.80) <= kMetricTolerance &&
                  std::abs(*m.precision - 0.81) <= kMetricTolerance && std::abs(*m.f1 - 0.80) <= kMetricTolerance;
  return {ok, fmt("accuracy %.4f precision %.4f F1 %.4f (targets 0.80/0.81/0.80 +-%.3f)", m.accuracy.value_or(NAN),
                  m.precision.value_or(NAN), m.f1.value_or(NAN), kMetricTolerance)};
}

Outcome attention_contract() {
  TempNetConfig cfg;
  cfg.input_shape = {8, 16, 16, 1};
  cfg.channels = 8;
  cfg.spatial_blocks = 3;
  cfg.temporal_blocks = 1;
  cfg.attention_enabled = true;
  std::mt19937_64 rng(61);

  // Range over random networks and inputs spanning eight orders of magnitude.
  std::size_t coefficients = 0, out_of_range = 0;
  double lo = 1, hi = 0;
  std::optional<TempNet<float>> net;
  for (std::size_t i = 0; i < kAttentionInputs; ++i) {
    if (i % 50 == 0) net = TempNet<float>::build(cfg, rng());
    const double scale = std::pow(10.0, static_cast<double>(i % 9) - 4);
    AttentionTrace trace;
    net->predict(oracle::random_tensor<float>(cfg.input(), rng, -scale, scale), &trace);
    for (const auto& module : trace.coefficients) {
      for (double v : module) {
        ++coefficients;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        if (!(v >= 0.0 && v <= 1.0)) ++out_of_range;
      }
    }
  }

  // Zero MLP: F' must equal 0.5 * F exactly.
  bool exact_half = true;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t T = oracle::random_extent(rng, 1, 10), C = oracle::random_extent(rng, 1, 16);
    const std::size_t r = std::max<std::size_t>(1, T / 2);
    const auto f = oracle::random_tensor<double>(Shape{T, oracle::random_extent(rng, 1, 6), oracle::random_extent(rng, 1, 6), C}, rng, -5, 5);
    Tape<double> tape;
    std::vector<double> gate;
    const auto y = temporal_attention(tape.constant(f), tape.constant(Tensor<double>(Shape{T, r})),
                                      tape.constant(Tensor<double>(Shape{r})), tape.constant(Tensor<double>(Shape{r, T})),
                                      tape.constant(Tensor<double>(Shape{T})), &gate)
                       .value();
    for (std::size_t i = 0; i < f.size(); ++i) exact_half = exact_half && y[i] == 0.5 * f[i];
    for (double g : gate) exact_half = exact_half && g == 0.5;
  }
  {
    auto net = TempNet<float>::build(cfg, 3);
    for (const auto& name : net.params().names()) {
      if (name.find(".attention.") != std::string::npos) {
        for (auto& v : net.params().get(name).data()) v = 0.0f;
      }
    }
    AttentionTrace trace;
    net.predict(oracle::random_tensor<float>(cfg.input(), rng), &trace);
    exact_half = exact_half && !trace.empty();
    for (const auto& module : trace.coefficients) {
      for (double v : module) exact_half = exact_half && v == 0.5;
    }
  }

  // Graph order: every attention node is recorded before the bridge.
  Tape<float> tape;
  TempNet<float>::build(cfg, 4).forward(tape, Tensor<float>(cfg.input()));
  const auto nodes = tape.nodes();
  std::size_t bridge = nodes.size(), last_attention = 0, attention_nodes = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].scope == "bridge" && bridge == nodes.size()) bridge = i;
    if (nodes[i].scope.find(".attention") != std::string::npos) {
      last_attention = i;
      ++attention_nodes;
    }
  }
  const auto stages = plan_stages(cfg);
  std::size_t bridge_stage = stages.size(), last_attention_stage = 0;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].kind == StageKind::BridgePool) bridge_stage = i;
    if (stages[i].kind == StageKind::Attention) last_attention_stage = i;
  }
  const bool ordered = attention_nodes > 0 && bridge < nodes.size() && last_attention < bridge &&
                       last_attention_stage < bridge_stage && bridge_stage < stages.size();

  return {out_of_range == 0 && exact_half && ordered,
          fmt("%zu inputs, %zu coefficients in [%.3g, %.3g], %zu outside; zero MLP gives 0.5 exactly: %s; "
              "%zu attention nodes, last at %zu, bridge at %zu",
              kAttentionInputs, coefficients, lo, hi, out_of_range, exact_half ? "yes" : "no", attention_nodes,
              last_attention, bridge)};
}

Outcome learnability() {
  const auto t0 = Clock::now();
  const double threshold = std::max(kLearnabilityFloor, kReferenceValAccuracy - kLearnabilityMargin);
  const auto dir = workdir("learnability");
  generate_dataset(dir, 400, 0.5, 7, SceneConfig{});
  RunConfig cfg;
  cfg.preproc.height = 75;
  cfg.preproc.width = 100;
  cfg.sync_input_shape();
  cfg.train.stop_at_val_accuracy = threshold;
  const auto train_set = load_split(dir, Split::Train, cfg);
  const auto val_set = load_split(dir, Split::Val, cfg);
  TrainOptions options;
  options.on_epoch = [&](const EpochRecord& r) {
    progress(fmt("epoch %2zu val_acc %.4f val_bce %.4f (%.1f min)", r.epoch, r.val_accuracy, r.val_bce,
                 seconds_since(t0) / 60));
  };
  const auto result = train(TempNet<float>::build(cfg.net, cfg.train.seed), train_set, val_set, cfg.train, options);
  double best = 0;
  std::size_t best_epoch = 0;
  for (const auto& r : result.history) {
    if (r.val_accuracy > best) {
      best = r.val_accuracy;
      best_epoch = r.epoch;
    }
  }
  const double minutes = seconds_since(t0) / 60;
  return {best >= threshold && best_epoch <= cfg.train.epochs,
          fmt("best val accuracy %.4f at epoch %zu (threshold %.4f = reference %.4f - %.2f, epochs <= %zu); "
              "%.1f min (target %.0f min: %s)",
              best, best_epoch, threshold, kReferenceValAccuracy, kLearnabilityMargin, cfg.train.epochs, minutes,
              kLearnabilityTargetMinutes, minutes < kLearnabilityTargetMinutes ? "met" : "missed")};
}

Outcome ablation_direction() {
  const auto t0 = Clock::now();
  SceneConfig scene = high_frequency_scene();
  scene.height = 80;
  scene.width = 104;
  double sum_plain = 0, sum_wavelet = 0;
  std::string per_seed;
  for (std::size_t s = 0; s < kAblationSeeds; ++s) {
    const std::uint64_t seed = 100 + s;
    const auto dir = workdir("ablation_" + std::to_string(seed));
    generate_dataset(dir, 200, 0.5, seed, scene);
    std::array<double, 2> best{};
    for (bool wavelet : {false, true}) {
      RunConfig cfg;
      cfg.preproc.height = 38;
      cfg.preproc.width = 50;
      cfg.preproc.use_wavelet = wavelet;
      cfg.sync_input_shape();
      cfg.train.epochs = 15;
      cfg.train.batch_size = 4;
      cfg.train.seed = seed;
      const auto train_set = load_split(dir, Split::Train, cfg);
      const auto val_set = load_split(dir, Split::Val, cfg);
      const auto result = train(TempNet<float>::build(cfg.net, seed), train_set, val_set, cfg.train);
      double b = INFINITY;
      for (const auto& r : result.history) b = std::min(b, r.val_bce);
      best[wavelet] = b;
      progress(fmt("seed %llu %s best val BCE %.4f (%.1f min)", static_cast<unsigned long long>(seed),
                   wavelet ? "wavelet" : "plain  ", b, seconds_since(t0) / 60));
    }
    sum_plain += best[0];
    sum_wavelet += best[1];
    per_seed += fmt("%.3f/%.3f ", best[0], best[1]);
    fs::remove_all(dir);
  }
  const double plain = sum_plain / kAblationSeeds, wavelet = sum_wavelet / kAblationSeeds;
  Outcome out{wavelet <= plain,
              fmt("mean best val BCE wavelet %.4f vs plain %.4f over %zu seeds (plain/wavelet per seed: %s), %.1f min",
                  wavelet, plain, kAblationSeeds, per_seed.c_str(), seconds_since(t0) / 60),
              true};
  return out;
}

Outcome determinism() {
  SceneConfig scene;
  scene.height = 48;
  scene.width = 64;
  const auto a = workdir("determinism_a"), b = workdir("determinism_b"), c = workdir("determinism_c");
  generate_dataset(a, 24, 0.5, 11, scene);
  generate_dataset(b, 24, 0.5, 11, scene);
  generate_dataset(c, 24, 0.5, 12, scene);
  bool datasets = true, differs = false;
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename();
    datasets = datasets && slurp(e.path()) == slurp(b / name);
    differs = differs || slurp(e.path()) != slurp(c / name);
  }

  RunConfig cfg;
  cfg.preproc.height = 24;
  cfg.preproc.width = 32;
  cfg.net.channels = 8;
  cfg.net.spatial_blocks = 2;
  cfg.net.temporal_blocks = 2;
  cfg.sync_input_shape();
  cfg.train.epochs = 3;
  cfg.train.batch_size = 4;
  const auto train_set = load_split(a, Split::Train, cfg);
  const auto val_set = load_split(a, Split::Val, cfg);
  std::array<std::string, 2> history, model;
  for (int run = 0; run < 2; ++run) {
    const auto result = train(TempNet<float>::build(cfg.net, cfg.train.seed), train_set, val_set, cfg.train);
    history[run] = format_history(result.history);
    const auto path = a.parent_path() / ("determinism_model_" + std::to_string(run) + ".tnwt");
    save_model(path, result.net, cfg);
    model[run] = slurp(path);
  }
  const bool ok = datasets && differs && history[0] == history[1] && model[0] == model[1] && !model[0].empty();
  return {ok, fmt("datasets identical: %s (other seed differs: %s); histories identical: %s; model bytes identical: %s "
                  "(%zu bytes)",
                  datasets ? "yes" : "no", differs ? "yes" : "no", history[0] == history[1] ? "yes" : "no",
                  model[0] == model[1] ? "yes" : "no", model[0].size())};
}

struct Shell {
  int code = -1;
  std::string output;
};

Shell run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + TEMPNET_CLI_PATH + "\" " + args + " 2>&1";
  Shell r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

Outcome smoke() {
  const auto t0 = Clock::now();
  const auto dir = workdir("smoke");
  auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
  std::ofstream(dir / "smoke.cfg") << "height=38\nwidth=50\nchannels=8\nepochs=3\n";
  const std::array<std::pair<const char*, std::string>, 3> steps{{
      {"gen", "gen --out " + q(dir / "data") + " --count 60 --seed 5 --hw 80x104"},
      {"train", "train --data " + q(dir / "data") + " --config " + q(dir / "smoke.cfg") + " --out " + q(dir / "model.tnwt")},
      {"eval", "eval --data " + q(dir / "data") + " --model " + q(dir / "model.tnwt") + " --report " + q(dir / "report.txt")},
  }};
  std::string table;
  for (const auto& [name, args] : steps) {
    const Shell r = run_cli(args);
    if (r.code != 0) return {false, fmt("%s exited %d: %s", name, r.code, r.output.c_str())};
    if (std::string(name) == "eval") table = r.output;
  }
  bool columns = true;
  for (const char* col : {"Accuracy", "Precision", "BCE", "FalseNeg", "FalsePos", "F1"}) {
    columns = columns && table.find(col) != std::string::npos;
  }
  const auto report = parse_report(slurp(dir / "report.txt"));
  const bool fields = report.metrics.accuracy.has_value() && report.metrics.n == report.records.size() &&
                      report.metrics.n > 0;
  const double minutes = seconds_since(t0) / 60;
  return {columns && fields && minutes < kSmokeMinutes,
          fmt("gen, train, eval finished in %.1f min (limit %.0f); six report columns present: %s; test n=%zu "
              "accuracy %.3f",
              minutes, kSmokeMinutes, columns ? "yes" : "no", report.metrics.n, report.metrics.accuracy.value_or(NAN))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the tempnet library and CLI"};
  int only = 0;
  app.add_option("--criterion", only, "Run one criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::map<int, std::function<Outcome()>> criteria{
      {1, gradient_correctness}, {2, oracle_equivalence}, {3, wavelet_invariants}, {4, parameter_calibration},
      {5, metric_reproduction},  {6, attention_contract}, {7, learnability},       {8, ablation_direction},
      {9, determinism},          {10, smoke},
  };
  bool all = true;
  for (const auto& [n, fn] : criteria) {
    if (only != 0 && n != only) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const std::string line = fmt("criterion %d: %s%s ", n, o.pass ? "PASS" : "FAIL", o.soft ? " (soft)" : "") + o.detail;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    std::ofstream(fs::current_path() / "acceptance_results.txt", std::ios::app) << line << '\n';
    if (!o.pass && !o.soft) all = false;
  }
  return all ? 0 : 1;
}
