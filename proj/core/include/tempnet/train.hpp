#pragma once

// Mini-batch training with Adam or SGD with momentum, early stopping on
// validation BCE, and evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tempnet/clip_io.hpp"
#include "tempnet/config.hpp"
#include "tempnet/metrics.hpp"
#include "tempnet/network.hpp"

namespace tempnet {

/// Preprocessed clip ready for the network.
struct LabeledClip {
  std::string id;
  Tensor<float> input;
  int label = 0;
};

/// Reads the manifest in `dir` and preprocesses every clip of `split`.
/// Throws ShapeError when a clip does not match `cfg.net`'s input shape.
std::vector<LabeledClip> load_split(const std::filesystem::path& dir, Split split, const RunConfig& cfg);

/// Worker count: TEMPNET_THREADS when set, else hardware concurrency; 1 in
/// deterministic mode.
std::size_t worker_count(bool deterministic);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParamStore<float>& params, const ParamStore<float>& grads) = 0;
};

class Adam : public Optimizer {
 public:
  Adam(double lr, double beta1, double beta2, double epsilon) : lr_(lr), b1_(beta1), b2_(beta2), eps_(epsilon) {}
  void step(ParamStore<float>& params, const ParamStore<float>& grads) override;

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

class SgdMomentum : public Optimizer {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), mu_(momentum) {}
  void step(ParamStore<float>& params, const ParamStore<float>& grads) override;

 private:
  double lr_, mu_;
  std::vector<std::vector<double>> velocity_;
};

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_bce = 0, val_bce = 0, val_accuracy = 0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainOptions {
  bool deterministic = true;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  TempNet<float> net;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 when the initial parameters were kept
};

/// Minimizes mean BCE over shuffled mini-batches; the returned network
/// holds the parameters with the lowest validation BCE seen.
TrainResult train(TempNet<float> net, const std::vector<LabeledClip>& train_set,
                  const std::vector<LabeledClip>& val_set, const TrainConfig& cfg, const TrainOptions& options = {});

/// Mean BCE of one mini-batch step's gradients, exposed for tests.
ParamStore<float> batch_gradients(const TempNet<float>& net, const std::vector<const LabeledClip*>& batch,
                                  std::size_t threads, double* mean_loss = nullptr);

EvalReport evaluate(const TempNet<float>& net, const std::vector<LabeledClip>& clips, double threshold = 0.5,
                    std::size_t threads = 1);

/// "epoch train_bce val_bce val_accuracy" per line, tab separated.
std::string format_history(const std::vector<EpochRecord>& history);
std::vector<EpochRecord> parse_history(const std::string& text);

/// Model file: TNWT parameters with the run config under metadata "config".
void save_model(const std::filesystem::path& path, const TempNet<float>& net, const RunConfig& cfg);
struct LoadedModel {
  RunConfig cfg;
  TempNet<float> net;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace tempnet
