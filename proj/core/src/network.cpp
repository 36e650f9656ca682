#include "tempnet/network.hpp"

#include <cmath>
#include <random>

namespace tempnet {

const char* stage_kind_name(StageKind kind) {
  switch (kind) {
    case StageKind::Stem: return "stem";
    case StageKind::ResidualBlock: return "residual";
    case StageKind::Attention: return "attention";
    case StageKind::SpatialPool: return "spatial_pool";
    case StageKind::BridgePool: return "bridge_pool";
    case StageKind::TemporalPool: return "temporal_pool";
    case StageKind::Head: return "head";
  }
  return "?";
}

namespace {

Shape pool_stage(const std::string& name, const Shape& in, const Window3& w) {
  static const char* axis[] = {"T", "H", "W"};
  for (std::size_t a = 0; a < 3; ++a) {
    if (w[a] > 1 && in[a] == 1) {
      throw ShapeError("pooling schedule collapses axis " + std::string(axis[a]) + " below 1 at stage '" + name +
                       "' (input " + shape_string(in) + ", window " + std::to_string(w[0]) + "x" +
                       std::to_string(w[1]) + "x" + std::to_string(w[2]) + ")");
    }
  }
  return kernels::pooled_shape(in, w);
}

std::string block_name(const char* stage, std::size_t i) { return std::string(stage) + ".block" + std::to_string(i); }

}  // namespace

std::vector<Stage> plan_stages(const TempNetConfig& cfg) {
  cfg.validate();
  std::vector<Stage> out;
  Shape s = cfg.input();
  Shape feat{s[0], s[1], s[2], cfg.channels};
  out.push_back({"stem", StageKind::Stem, s, feat});
  s = feat;
  for (std::size_t i = 0; i < cfg.spatial_blocks; ++i) {
    const std::string b = block_name("spatial", i);
    out.push_back({b, StageKind::ResidualBlock, s, s});
    if (cfg.attention_enabled) out.push_back({b + ".attention", StageKind::Attention, s, s});
    const Shape p = pool_stage(b + ".pool", s, cfg.spatial_pool);
    out.push_back({b + ".pool", StageKind::SpatialPool, s, p, cfg.spatial_pool});
    s = p;
  }
  {
    const Shape p = pool_stage("bridge", s, cfg.bridge_pool);
    out.push_back({"bridge", StageKind::BridgePool, s, p, cfg.bridge_pool});
    s = p;
  }
  for (std::size_t i = 0; i < cfg.temporal_blocks; ++i) {
    const std::string b = block_name("temporal", i);
    out.push_back({b, StageKind::ResidualBlock, s, s});
    const Shape p = pool_stage(b + ".pool", s, cfg.temporal_pool);
    out.push_back({b + ".pool", StageKind::TemporalPool, s, p, cfg.temporal_pool});
    s = p;
  }
  out.push_back({"head", StageKind::Head, s, Shape{1}});
  return out;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const TempNetConfig& cfg) {
  const std::size_t c = cfg.channels;
  const std::size_t frames = cfg.input_shape[0];
  const std::size_t hidden = cfg.attention_bottleneck();
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back("stem.kernel", Shape{3, 3, 3, cfg.input_shape[3], c});
  out.emplace_back("stem.bias", Shape{c});
  auto block = [&](const std::string& b) {
    out.emplace_back(b + ".conv1.kernel", Shape{3, 3, 3, c, c});
    out.emplace_back(b + ".conv1.bias", Shape{c});
    out.emplace_back(b + ".conv2.kernel", Shape{3, 3, 3, c, c});
    out.emplace_back(b + ".conv2.bias", Shape{c});
  };
  for (std::size_t i = 0; i < cfg.spatial_blocks; ++i) {
    const std::string b = block_name("spatial", i);
    block(b);
    if (cfg.attention_enabled) {
      out.emplace_back(b + ".attention.fc1.weight", Shape{frames, hidden});
      out.emplace_back(b + ".attention.fc1.bias", Shape{hidden});
      out.emplace_back(b + ".attention.fc2.weight", Shape{hidden, frames});
      out.emplace_back(b + ".attention.fc2.bias", Shape{frames});
    }
  }
  for (std::size_t i = 0; i < cfg.temporal_blocks; ++i) block(block_name("temporal", i));
  out.emplace_back("head.weight", Shape{c, 1});
  out.emplace_back("head.bias", Shape{1});
  return out;
}

template <typename T>
TempNet<T> TempNet<T>::build(const TempNetConfig& cfg, std::uint64_t seed) {
  plan_stages(cfg);
  std::mt19937_64 rng(seed);
  ParamStore<T> params;
  for (const auto& [name, shape] : parameter_layout(cfg)) {
    Tensor<T> t(shape);
    const bool is_bias = name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
    if (!is_bias) {
      // Fan-in is every axis but the last.
      const std::size_t fan_in = shape_numel(shape) / shape.back();
      double gain = 2.0;
      if (name.find(".conv2.") != std::string::npos) {
        gain = 0.5;
      } else if (name.find(".fc2.") != std::string::npos || name.rfind("head.", 0) == 0) {
        gain = 1.0;
      }
      std::normal_distribution<double> dist(0.0, std::sqrt(gain / static_cast<double>(fan_in)));
      for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    }
    params.add(name, std::move(t));
  }
  return TempNet(cfg, std::move(params));
}

template <typename T>
TempNet<T>::TempNet(TempNetConfig cfg, ParamStore<T> params) : cfg_(cfg), params_(std::move(params)) {
  plan_stages(cfg_);
  const auto layout = parameter_layout(cfg_);
  if (layout.size() != params_.size()) {
    throw ValueError("parameter store holds " + std::to_string(params_.size()) + " tensors, network expects " +
                     std::to_string(layout.size()));
  }
  for (const auto& [name, shape] : layout) {
    if (!params_.contains(name)) throw ValueError("parameter store is missing '" + name + "'");
    if (params_.get(name).shape() != shape) {
      throw ShapeError("parameter '" + name + "' has shape " + shape_string(params_.get(name).shape()) + ", expected " +
                       shape_string(shape));
    }
  }
}

template <typename T>
Var<T> residual_block(Var<T> x, Var<T> k1, Var<T> b1, Var<T> k2, Var<T> b2) {
  Var<T> h = relu(conv3d(x, k1, b1));
  Var<T> y = conv3d(h, k2, b2);
  return relu(add(x, y));
}

template <typename T>
Var<T> temporal_attention(Var<T> features, Var<T> w1, Var<T> b1, Var<T> w2, Var<T> b2, std::vector<double>* gate) {
  const Shape s = features.shape();
  if (s.size() != 4) throw ShapeError("temporal_attention: features must be [T,H,W,C], got " + shape_string(s));
  if (w1.shape().size() != 2 || w1.shape()[0] != s[0]) {
    throw ShapeError("temporal_attention: MLP input width " +
                     (w1.shape().empty() ? std::string("?") : std::to_string(w1.shape()[0])) +
                     " does not match T=" + std::to_string(s[0]));
  }
  const std::vector<std::size_t> frame_axes{1, 2, 3};
  Var<T> avg = reduce(features, frame_axes, ReduceMode::Mean, false);
  Var<T> mx = reduce(features, frame_axes, ReduceMode::Max, false);
  auto mlp = [&](Var<T> v) { return dense(relu(dense(v, w1, b1)), w2, b2); };
  Var<T> m = sigmoid(add(mlp(avg), mlp(mx)));
  if (gate) {
    gate->assign(m.value().data().begin(), m.value().data().end());
  }
  return broadcast_mul(reshape(m, Shape{s[0], 1, 1, 1}), features);
}

template <typename T>
ForwardResult<T> TempNet<T>::forward(Tape<T>& tape, const Tensor<T>& input) const {
  if (input.shape() != cfg_.input()) {
    throw ShapeError("forward: input shape " + shape_string(input.shape()) + " does not match network input " +
                     shape_string(cfg_.input()));
  }
  auto param = [&](const std::string& name) { return tape.parameter(name, params_.get(name)); };
  AttentionTrace trace;
  Var<T> x = tape.constant(input);
  {
    ScopeGuard<T> scope(tape, "stem");
    const Var<T> k = param("stem.kernel"), b = param("stem.bias");
    x = relu(conv3d(x, k, b));
  }
  auto block = [&](const std::string& b, Var<T> v) {
    ScopeGuard<T> scope(tape, b);
    const Var<T> k1 = param(b + ".conv1.kernel"), b1 = param(b + ".conv1.bias");
    const Var<T> k2 = param(b + ".conv2.kernel"), b2 = param(b + ".conv2.bias");
    return residual_block(v, k1, b1, k2, b2);
  };
  for (std::size_t i = 0; i < cfg_.spatial_blocks; ++i) {
    const std::string b = block_name("spatial", i);
    x = block(b, x);
    if (cfg_.attention_enabled) {
      ScopeGuard<T> scope(tape, b + ".attention");
      const std::string a = b + ".attention";
      std::vector<double> gate;
      const Var<T> w1 = param(a + ".fc1.weight"), b1 = param(a + ".fc1.bias");
      const Var<T> w2 = param(a + ".fc2.weight"), b2 = param(a + ".fc2.bias");
      x = temporal_attention(x, w1, b1, w2, b2, &gate);
      trace.modules.push_back(a);
      trace.coefficients.push_back(std::move(gate));
    }
    ScopeGuard<T> scope(tape, b + ".pool");
    x = maxpool(x, cfg_.spatial_pool);
  }
  {
    ScopeGuard<T> scope(tape, "bridge");
    x = maxpool(x, cfg_.bridge_pool);
  }
  for (std::size_t i = 0; i < cfg_.temporal_blocks; ++i) {
    const std::string b = block_name("temporal", i);
    x = block(b, x);
    ScopeGuard<T> scope(tape, b + ".pool");
    x = maxpool(x, cfg_.temporal_pool);
  }
  ScopeGuard<T> scope(tape, "head");
  Var<T> pooled = reduce(x, {0, 1, 2}, ReduceMode::Mean, false);
  const Var<T> w = param("head.weight"), b = param("head.bias");
  Var<T> logit = dense(pooled, w, b);
  return {sigmoid(logit), std::move(trace)};
}

template <typename T>
double TempNet<T>::predict(const Tensor<T>& input, AttentionTrace* trace) const {
  Tape<T> tape;
  auto result = forward(tape, input);
  if (trace) *trace = std::move(result.trace);
  return static_cast<double>(result.probability.value().item());
}

template <typename T>
template <typename U>
TempNet<U> TempNet<T>::cast() const {
  ParamStore<U> out;
  for (std::size_t i = 0; i < params_.size(); ++i) out.add(params_.name(i), params_.at(i).template cast<U>());
  for (const auto& [k, v] : params_.metadata()) out.set_metadata(k, v);
  return TempNet<U>(cfg_, std::move(out));
}

template class TempNet<float>;
template class TempNet<double>;
template TempNet<double> TempNet<float>::cast<double>() const;
template TempNet<float> TempNet<double>::cast<float>() const;
template TempNet<float> TempNet<float>::cast<float>() const;
template TempNet<double> TempNet<double>::cast<double>() const;
template Var<float> residual_block<float>(Var<float>, Var<float>, Var<float>, Var<float>, Var<float>);
template Var<double> residual_block<double>(Var<double>, Var<double>, Var<double>, Var<double>, Var<double>);
template Var<float> temporal_attention<float>(Var<float>, Var<float>, Var<float>, Var<float>, Var<float>,
                                              std::vector<double>*);
template Var<double> temporal_attention<double>(Var<double>, Var<double>, Var<double>, Var<double>, Var<double>,
                                                std::vector<double>*);

}  // namespace tempnet
