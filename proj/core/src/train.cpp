#include "tempnet/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace tempnet {

std::vector<LabeledClip> load_split(const std::filesystem::path& dir, Split split, const RunConfig& cfg) {
  const auto entries = filter_split(read_manifest(dir / kManifestName), split);
  const Shape expected = cfg.net.input();
  std::vector<LabeledClip> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    const auto path = dir / e.path;
    ClipFile file = read_clip(path);
    if (file.label && *file.label != e.label) {
      throw FormatError("label of " + path.string() + " disagrees with the manifest");
    }
    const RawClip raw{std::move(file.data), cfg.preproc.source_fps, e.path};
    Tensor<float> input = preprocess(raw, cfg.preproc);
    if (input.shape() != expected) {
      throw ShapeError("clip " + path.string() + " preprocesses to " + shape_string(input.shape()) +
                       " but the network expects " + shape_string(expected));
    }
    out.push_back(LabeledClip{e.path, std::move(input), e.label});
  }
  return out;
}

std::size_t worker_count(bool deterministic) {
  if (deterministic) return 1;
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TEMPNET_THREADS")) {
    std::size_t cap = 0;
    const std::string s(env);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), cap);
    if (ec == std::errc() && cap > 0) n = std::min(n, cap);
  }
  return n;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

void ensure_state(std::vector<std::vector<double>>& state, const ParamStore<float>& params) {
  if (!state.empty()) return;
  for (std::size_t p = 0; p < params.size(); ++p) state.emplace_back(params.at(p).size(), 0.0);
}

const Tensor<float>& gradient_for(const ParamStore<float>& grads, const ParamStore<float>& params, std::size_t p) {
  const Tensor<float>& g = grads.get(params.name(p));
  if (g.shape() != params.at(p).shape()) {
    throw ShapeError("gradient for '" + params.name(p) + "' has shape " + shape_string(g.shape()) + ", parameter has " +
                     shape_string(params.at(p).shape()));
  }
  return g;
}

}  // namespace

void Adam::step(ParamStore<float>& params, const ParamStore<float>& grads) {
  ensure_state(m_, params);
  ensure_state(v_, params);
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<float>& w = params.at(p);
    const Tensor<float>& g = gradient_for(grads, params, p);
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = b1_ * m[i] + (1 - b1_) * gi;
      v[i] = b2_ * v[i] + (1 - b2_) * gi * gi;
      const double update = lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      w[i] = static_cast<float>(static_cast<double>(w[i]) - update);
    }
  }
}

void SgdMomentum::step(ParamStore<float>& params, const ParamStore<float>& grads) {
  ensure_state(velocity_, params);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<float>& w = params.at(p);
    const Tensor<float>& g = gradient_for(grads, params, p);
    auto& vel = velocity_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      vel[i] = mu_ * vel[i] + g[i];
      w[i] = static_cast<float>(static_cast<double>(w[i]) - lr_ * vel[i]);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg) {
  if (cfg.optimizer == OptimizerKind::Adam) {
    return std::make_unique<Adam>(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  }
  return std::make_unique<SgdMomentum>(cfg.learning_rate, cfg.momentum);
}

ParamStore<float> batch_gradients(const TempNet<float>& net, const std::vector<const LabeledClip*>& batch,
                                  std::size_t threads, double* mean_loss) {
  if (batch.empty()) throw ValueError("empty batch");
  std::vector<ParamStore<float>> per_clip(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    Tape<float> tape;
    auto out = net.forward(tape, batch[i]->input);
    Var<float> loss = bce_loss(out.probability, Tensor<float>(Shape{1}, {static_cast<float>(batch[i]->label)}));
    losses[i] = static_cast<double>(loss.value().item());
    per_clip[i] = tape.backward(loss);
  });
  // Summed in clip order.
  ParamStore<float> total = std::move(per_clip[0]);
  for (std::size_t i = 1; i < per_clip.size(); ++i) {
    for (std::size_t p = 0; p < total.size(); ++p) {
      Tensor<float>& dst = total.at(p);
      const Tensor<float>& src = per_clip[i].get(total.name(p));
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  const float scale = 1.0f / static_cast<float>(batch.size());
  for (std::size_t p = 0; p < total.size(); ++p) {
    for (auto& v : total.at(p).data()) v *= scale;
  }
  if (mean_loss) {
    double sum = 0;
    for (double l : losses) sum += l;
    *mean_loss = sum / static_cast<double>(losses.size());
  }
  return total;
}

EvalReport evaluate(const TempNet<float>& net, const std::vector<LabeledClip>& clips, double threshold,
                    std::size_t threads) {
  if (clips.empty()) throw ValueError("evaluation split is empty");
  std::vector<ClipRecord> records(clips.size());
  parallel_for(clips.size(), threads, [&](std::size_t i) {
    records[i] = ClipRecord{clips[i].id, clips[i].label, net.predict(clips[i].input)};
  });
  return make_report(std::move(records), threshold);
}

TrainResult train(TempNet<float> net, const std::vector<LabeledClip>& train_set,
                  const std::vector<LabeledClip>& val_set, const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (train_set.empty()) throw ValueError("training split is empty");
  if (val_set.empty()) throw ValueError("validation split is empty");
  const Shape expected = net.config().input();
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& c : *set) {
      if (c.input.shape() != expected) {
        throw ShapeError("clip " + c.id + " has shape " + shape_string(c.input.shape()) + ", network expects " +
                         shape_string(expected));
      }
    }
  }

  const std::size_t threads = worker_count(options.deterministic);
  auto optimizer = make_optimizer(cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x5deece66dull);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{net, {}, 0};
  ParamStore<float> best = net.params();
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const LabeledClip*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      double batch_loss = 0;
      const ParamStore<float> grads = batch_gradients(net, batch, threads, &batch_loss);
      loss_sum += batch_loss * static_cast<double>(batch.size());
      optimizer->step(net.params(), grads);
    }
    const EvalReport val = evaluate(net, val_set, cfg.threshold, threads);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), val.bce, val.metrics.accuracy.value_or(0.0)};
    result.history.push_back(rec);
    if (rec.val_bce < best_val) {
      best_val = rec.val_bce;
      best = net.params();
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (options.on_epoch) options.on_epoch(rec);
    if (since_best >= cfg.patience) break;
    if (cfg.stop_at_val_accuracy > 0 && rec.val_accuracy >= cfg.stop_at_val_accuracy) break;
  }
  net.params() = std::move(best);
  result.net = std::move(net);
  return result;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

std::string format_history(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + '\t' + fmt_double(r.train_bce) + '\t' + fmt_double(r.val_bce) + '\t' +
           fmt_double(r.val_accuracy) + '\n';
  }
  return out;
}

std::vector<EpochRecord> parse_history(const std::string& text) {
  std::vector<EpochRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    EpochRecord r;
    if (!(fields >> r.epoch >> r.train_bce >> r.val_bce >> r.val_accuracy)) {
      throw FormatError("history: malformed line '" + line + "'");
    }
    out.push_back(r);
  }
  return out;
}

void save_model(const std::filesystem::path& path, const TempNet<float>& net, const RunConfig& cfg) {
  if (net.config() != cfg.net) throw ValueError("save_model: network and run config disagree");
  ParamStore<float> store = net.params();
  store.set_metadata("config", format_config(cfg));
  save_params(store, path);
}

LoadedModel load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("model file not found: " + path.string());
  ParamStore<float> store = load_params<float>(path);
  const auto it = store.metadata().find("config");
  if (it == store.metadata().end()) throw FormatError(path.string() + ": model file carries no config metadata");
  RunConfig cfg = parse_config(it->second);
  TempNet<float> net(cfg.net, std::move(store));
  return LoadedModel{std::move(cfg), std::move(net)};
}

}  // namespace tempnet
