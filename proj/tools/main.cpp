#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "tempnet/accounting.hpp"
#include "tempnet/clip_io.hpp"
#include "tempnet/config.hpp"
#include "tempnet/error.hpp"
#include "tempnet/gradcheck.hpp"
#include "tempnet/metrics.hpp"
#include "tempnet/param_store.hpp"
#include "tempnet/preproc.hpp"
#include "tempnet/synthetic.hpp"
#include "tempnet/train.hpp"

namespace fs = std::filesystem;
using namespace tempnet;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Flag problems detected after CLI11 parsing; mapped to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::pair<std::size_t, std::size_t> parse_hw(const std::string& text) {
  const auto x = text.find('x');
  std::size_t h = 0, w = 0;
  if (x == std::string::npos) throw UsageError("--hw expects HxW, got '" + text + "'");
  const auto r1 = std::from_chars(text.data(), text.data() + x, h);
  const auto r2 = std::from_chars(text.data() + x + 1, text.data() + text.size(), w);
  if (r1.ec != std::errc() || r1.ptr != text.data() + x || r2.ec != std::errc() ||
      r2.ptr != text.data() + text.size() || h == 0 || w == 0) {
    throw UsageError("--hw expects HxW with positive integers, got '" + text + "'");
  }
  return {h, w};
}

RunConfig config_or_default(const std::string& path) {
  if (path.empty()) return parse_config("");
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  try {
    return load_config(path);
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

struct GenArgs {
  std::string out;
  std::size_t count = 892;
  double ratio = 0.5;
  std::uint64_t seed = 7;
  std::string hw = "160x208";
  bool high_frequency = false;
};

int run_gen(const GenArgs& a) {
  if (a.count < 10) throw UsageError("--count must be at least 10");
  if (!(a.ratio > 0.0 && a.ratio < 1.0)) throw UsageError("--positive-ratio must lie in (0,1)");
  SceneConfig scene = a.high_frequency ? high_frequency_scene() : SceneConfig{};
  std::tie(scene.height, scene.width) = parse_hw(a.hw);
  try {
    scene.validate();
  } catch (const ValueError& e) {
    throw UsageError(e.what());
  }
  const auto entries = generate_dataset(a.out, a.count, a.ratio, a.seed, scene);
  std::size_t sizes[3] = {0, 0, 0}, positives[3] = {0, 0, 0};
  for (const auto& e : entries) {
    ++sizes[static_cast<int>(e.split)];
    positives[static_cast<int>(e.split)] += static_cast<std::size_t>(e.label);
  }
  for (int s = 0; s < 3; ++s) {
    std::printf("%-5s %5zu clips, %5zu positive\n", split_name(static_cast<Split>(s)), sizes[s], positives[s]);
  }
  return 0;
}

struct PreprocessArgs {
  std::string data, config, out;
};

int run_preprocess(const PreprocessArgs& a) {
  const RunConfig cfg = config_or_default(a.config);
  if (fs::weakly_canonical(a.data) == fs::weakly_canonical(a.out)) {
    throw UsageError("--out must differ from --data");
  }
  const auto entries = read_manifest(fs::path(a.data) / kManifestName);
  fs::create_directories(a.out);
  for (const auto& e : entries) {
    ClipFile file = read_clip(fs::path(a.data) / e.path);
    const RawClip raw{std::move(file.data), cfg.preproc.source_fps, e.path};
    ClipFile processed{preprocess(raw, cfg.preproc), e.label};
    const fs::path dst = fs::path(a.out) / e.path;
    ensure_parent(dst);
    write_clip(dst, processed);
  }
  write_manifest(fs::path(a.out) / kManifestName, entries);
  std::printf("preprocessed %zu clips to %s\n", entries.size(),
              shape_string(preprocess_output_shape(cfg.preproc, cfg.frames, cfg.preproc.source_fps)).c_str());
  return 0;
}

struct TrainArgs {
  std::string data, config, out, history;
  bool deterministic = false;
};

int run_train(const TrainArgs& a) {
  const RunConfig cfg = config_or_default(a.config);
  const fs::path history = a.history.empty() ? fs::path(a.out + ".history.tsv") : fs::path(a.history);
  const auto train_set = load_split(a.data, Split::Train, cfg);
  const auto val_set = load_split(a.data, Split::Val, cfg);
  std::printf("train %zu clips, val %zu clips, input %s\n", train_set.size(), val_set.size(),
              shape_string(cfg.net.input()).c_str());
  TrainOptions options;
  options.deterministic = a.deterministic;
  options.on_epoch = [](const EpochRecord& r) {
    std::printf("epoch %3zu  train_bce %.6f  val_bce %.6f  val_acc %.4f\n", r.epoch, r.train_bce, r.val_bce,
                r.val_accuracy);
    std::fflush(stdout);
  };
  TrainResult result = train(TempNet<float>::build(cfg.net, cfg.train.seed), train_set, val_set, cfg.train, options);
  ensure_parent(a.out);
  save_model(a.out, result.net, cfg);
  ensure_parent(history);
  write_text(history, format_history(result.history));
  std::printf("best epoch %zu; model %s; history %s\n", result.best_epoch, a.out.c_str(), history.string().c_str());
  return 0;
}

struct EvalArgs {
  std::string data, model, report, split = "test";
  bool deterministic = false;
};

int run_eval(const EvalArgs& a) {
  Split split;
  try {
    split = parse_split(a.split);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const LoadedModel model = load_model(a.model);
  const auto clips = load_split(a.data, split, model.cfg);
  const EvalReport report =
      evaluate(model.net, clips, model.cfg.train.threshold, worker_count(a.deterministic));
  ensure_parent(a.report);
  write_text(a.report, format_report(report));
  std::fputs(format_comparison(compare_runs({{fs::path(a.model).filename().string(), report}})).c_str(), stdout);
  return 0;
}

int run_count(const std::string& config) {
  const RunConfig cfg = config_or_default(config);
  std::printf("params %llu\nflops %llu\n", static_cast<unsigned long long>(count_params(cfg.net)),
              static_cast<unsigned long long>(count_flops(cfg.net)));
  return 0;
}

int run_describe(const std::string& config) {
  const RunConfig cfg = config_or_default(config);
  std::fputs(describe(cfg.net).c_str(), stdout);
  return 0;
}

struct GradcheckArgs {
  std::string config;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
  bool corrupt = false;
};

int run_gradcheck(const GradcheckArgs& a) {
  if (!(a.tolerance >= 0.0)) throw UsageError("--tolerance must be non-negative");
  const TempNetConfig net = a.config.empty() ? reduced_gradcheck_config(true, false) : config_or_default(a.config).net;
  GradcheckOptions options;
  options.seed = a.seed;
  if (a.corrupt) options.fault = GradientFault{};
  const GradcheckReport report = gradcheck(net, a.tolerance, options);
  std::fputs(format_gradcheck(report).c_str(), stdout);
  return report.passed ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tempnet: video event detection with spatio-temporal CNNs"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic labeled dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.count, "Number of clips (>= 10)")->capture_default_str();
  gen_cmd->add_option("--positive-ratio", gen.ratio, "Fraction of positive clips")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed")->capture_default_str();
  gen_cmd->add_option("--hw", gen.hw, "Rendered frame size HxW")->capture_default_str();
  gen_cmd->add_flag("--high-frequency", gen.high_frequency, "Striped agents with fine texture");

  PreprocessArgs pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "Write preprocessed clips and a manifest");
  pre_cmd->add_option("--data", pre.data, "Dataset directory")->required();
  pre_cmd->add_option("--config", pre.config, "Config file");
  pre_cmd->add_option("--out", pre.out, "Output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--config", tr.config, "Config file");
  train_cmd->add_option("--out", tr.out, "Model file")->required();
  train_cmd->add_option("--history", tr.history, "History file (default <out>.history.tsv)");
  train_cmd->add_flag("--deterministic", tr.deterministic, "Single-threaded, bit-reproducible run");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a split");
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--model", ev.model, "Model file")->required();
  eval_cmd->add_option("--report", ev.report, "Report file")->required();
  eval_cmd->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  eval_cmd->add_flag("--deterministic", ev.deterministic, "Single-threaded evaluation");

  std::string count_config, describe_config;
  auto* count_cmd = app.add_subcommand("count", "Print parameter and FLOP totals");
  count_cmd->add_option("--config", count_config, "Config file");
  auto* describe_cmd = app.add_subcommand("describe", "Print the per-stage shape, parameter and FLOP table");
  describe_cmd->add_option("--config", describe_config, "Config file");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gc_cmd->add_option("--config", gc.config, "Config file (default: reduced network)");
  gc_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();
  gc_cmd->add_option("--seed", gc.seed, "Weight and input seed")->capture_default_str();
  gc_cmd->add_flag("--corrupt-gradient", gc.corrupt, "Scale the conv3d backward rule to test the checker");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*pre_cmd) return run_preprocess(pre);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*count_cmd) return run_count(count_config);
    if (*describe_cmd) return run_describe(describe_config);
    if (*gc_cmd) return run_gradcheck(gc);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
