#include "tempnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace tempnet {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Parameter: return "parameter";
    case OpKind::Conv3d: return "conv3d";
    case OpKind::MaxPool: return "maxpool";
    case OpKind::Dense: return "dense";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::BroadcastMul: return "broadcast_mul";
    case OpKind::ReduceMean: return "reduce_mean";
    case OpKind::ReduceMax: return "reduce_max";
    case OpKind::Reshape: return "reshape";
    case OpKind::BceLoss: return "bce_loss";
  }
  return "unknown";
}

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(id);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{OpKind::Constant, scope_, {}, std::move(value), {}, false, {}});
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::parameter(const std::string& name, Tensor<T> value) {
  for (const auto& n : nodes_) {
    if (n.kind == OpKind::Parameter && n.param_name == name) {
      throw ValueError("parameter '" + name + "' registered twice on one tape");
    }
  }
  nodes_.push_back(Node{OpKind::Parameter, scope_, {}, std::move(value), {}, true, name});
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(OpKind kind, std::vector<std::size_t> inputs, Tensor<T> value, BackwardFn<T> backward) {
  bool needs_grad = false;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw ValueError("tape input refers to a node that does not exist yet");
    needs_grad = needs_grad || nodes_[in].needs_grad;
  }
  if (!value.all_finite()) {
    const bool inputs_finite =
        std::all_of(inputs.begin(), inputs.end(), [&](std::size_t in) { return nodes_[in].value.all_finite(); });
    if (inputs_finite) {
      throw NumericError(std::string(op_name(kind)) + " produced a non-finite value from finite inputs" +
                         (scope_.empty() ? "" : " in " + scope_));
    }
  }
  nodes_.push_back(Node{kind, scope_, std::move(inputs), std::move(value), std::move(backward), needs_grad, {}});
  return {this, nodes_.size() - 1};
}

namespace {

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.raw();
  const T* s = src.raw();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
ParamStore<T> Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw ValueError("backward: loss belongs to another tape");
  const Tensor<T>& loss_value = value(loss.id);
  if (loss_value.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_string(loss_value.shape()));

  std::vector<std::unique_ptr<Tensor<T>>> grads(nodes_.size());
  grads[loss.id] = std::make_unique<Tensor<T>>(loss_value.shape(), T{1});

  std::vector<const Tensor<T>*> in_values;
  std::vector<Tensor<T>*> in_grads;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.needs_grad || !grads[i] || !node.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t in : node.inputs) {
      in_values.push_back(&nodes_[in].value);
      if (nodes_[in].needs_grad) {
        if (!grads[in]) grads[in] = std::make_unique<Tensor<T>>(nodes_[in].value.shape());
        in_grads.push_back(grads[in].get());
      } else {
        in_grads.push_back(nullptr);
      }
    }
    const Tensor<T>* grad_out = grads[i].get();
    Tensor<T> faulty;
    if (fault_ && fault_->kind == node.kind) {
      faulty = *grad_out;
      for (auto& v : faulty.data()) v *= static_cast<T>(fault_->scale);
      grad_out = &faulty;
    }
    node.backward(BackwardArgs<T>{in_values, node.value, *grad_out, in_grads});
    grads[i].reset();
  }

  ParamStore<T> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    if (node.kind != OpKind::Parameter) continue;
    out.add(node.param_name, grads[i] ? std::move(*grads[i]) : Tensor<T>(node.value.shape()));
  }
  return out;
}

template <typename T>
std::vector<NodeInfo> Tape<T>::nodes() const {
  std::vector<NodeInfo> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) out.push_back(NodeInfo{n.kind, n.scope, n.value.shape(), n.inputs});
  return out;
}

template <typename T>
void Tape<T>::push_scope(const std::string& name) {
  scope_marks_.push_back(scope_.size());
  if (!scope_.empty()) scope_ += '.';
  scope_ += name;
}

template <typename T>
void Tape<T>::pop_scope() {
  if (scope_marks_.empty()) return;
  scope_.resize(scope_marks_.back());
  scope_marks_.pop_back();
}

namespace {

template <typename T>
void same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.tape != b.tape || a.tape == nullptr) throw ValueError(std::string(op) + ": operands live on different tapes");
}

template <typename T>
void same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace

template <typename T>
Var<T> conv3d(Var<T> input, Var<T> kernel, Var<T> bias) {
  same_tape(input, kernel, "conv3d");
  same_tape(input, bias, "conv3d");
  Tensor<T> out = kernels::conv3d_forward(input.value(), kernel.value(), bias.value());
  return input.tape->record(OpKind::Conv3d, {input.id, kernel.id, bias.id}, std::move(out),
                            [](const BackwardArgs<T>& a) {
                              if (a.grad_inputs[0]) {
                                add_into(*a.grad_inputs[0], kernels::conv3d_backward_input(a.grad_output, *a.inputs[1]));
                              }
                              if (a.grad_inputs[1] || a.grad_inputs[2]) {
                                Tensor<T> gk(a.inputs[1]->shape());
                                Tensor<T> gb(a.inputs[2]->shape());
                                kernels::conv3d_backward_params(*a.inputs[0], a.grad_output, gk, gb);
                                if (a.grad_inputs[1]) add_into(*a.grad_inputs[1], gk);
                                if (a.grad_inputs[2]) add_into(*a.grad_inputs[2], gb);
                              }
                            });
}

template <typename T>
Var<T> maxpool(Var<T> input, const kernels::Window3& window) {
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  Tensor<T> out = kernels::maxpool_forward(input.value(), window, *argmax);
  return input.tape->record(OpKind::MaxPool, {input.id}, std::move(out), [argmax](const BackwardArgs<T>& a) {
    if (!a.grad_inputs[0]) return;
    Tensor<T>& gx = *a.grad_inputs[0];
    for (std::size_t o = 0; o < argmax->size(); ++o) gx[(*argmax)[o]] += a.grad_output[o];
  });
}

template <typename T>
Var<T> dense(Var<T> input, Var<T> weight, Var<T> bias) {
  same_tape(input, weight, "dense");
  same_tape(input, bias, "dense");
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  const Tensor<T>& b = bias.value();
  if (w.rank() != 2) throw ShapeError("dense: weight must be rank 2 [K,M], got " + shape_string(w.shape()));
  const std::size_t K = w.extent(0), M = w.extent(1);
  if (x.extent(x.rank() - 1) != K) {
    throw ShapeError("dense: trailing axis of input is " + std::to_string(x.extent(x.rank() - 1)) +
                     " but weight expects K=" + std::to_string(K));
  }
  if (b.rank() != 1 || b.extent(0) != M) {
    throw ShapeError("dense: bias shape " + shape_string(b.shape()) + " does not match M=" + std::to_string(M));
  }
  const std::size_t rows = x.size() / K;
  Shape os = x.shape();
  os.back() = M;
  Tensor<T> out(os);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t m = 0; m < M; ++m) {
      T acc = b[m];
      for (std::size_t k = 0; k < K; ++k) acc += x[r * K + k] * w[k * M + m];
      out[r * M + m] = acc;
    }
  }
  return input.tape->record(OpKind::Dense, {input.id, weight.id, bias.id}, std::move(out),
                            [rows, K, M](const BackwardArgs<T>& a) {
                              const Tensor<T>& x = *a.inputs[0];
                              const Tensor<T>& w = *a.inputs[1];
                              const Tensor<T>& gy = a.grad_output;
                              if (a.grad_inputs[0]) {
                                Tensor<T>& gx = *a.grad_inputs[0];
                                for (std::size_t r = 0; r < rows; ++r) {
                                  for (std::size_t k = 0; k < K; ++k) {
                                    T acc = 0;
                                    for (std::size_t m = 0; m < M; ++m) acc += gy[r * M + m] * w[k * M + m];
                                    gx[r * K + k] += acc;
                                  }
                                }
                              }
                              if (a.grad_inputs[1]) {
                                Tensor<T>& gw = *a.grad_inputs[1];
                                for (std::size_t r = 0; r < rows; ++r) {
                                  for (std::size_t k = 0; k < K; ++k) {
                                    for (std::size_t m = 0; m < M; ++m) gw[k * M + m] += x[r * K + k] * gy[r * M + m];
                                  }
                                }
                              }
                              if (a.grad_inputs[2]) {
                                Tensor<T>& gb = *a.grad_inputs[2];
                                for (std::size_t r = 0; r < rows; ++r) {
                                  for (std::size_t m = 0; m < M; ++m) gb[m] += gy[r * M + m];
                                }
                              }
                            });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return x.tape->record(OpKind::Relu, {x.id}, std::move(out), [](const BackwardArgs<T>& a) {
    if (!a.grad_inputs[0]) return;
    const Tensor<T>& in = *a.inputs[0];
    Tensor<T>& gx = *a.grad_inputs[0];
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (in[i] > T{0}) gx[i] += a.grad_output[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = stable_sigmoid(v);
  return x.tape->record(OpKind::Sigmoid, {x.id}, std::move(out), [](const BackwardArgs<T>& a) {
    if (!a.grad_inputs[0]) return;
    Tensor<T>& gx = *a.grad_inputs[0];
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T s = a.output[i];
      gx[i] += a.grad_output[i] * s * (T{1} - s);
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  same_tape(a, b, "add");
  same_shape(a, b, "add");
  Tensor<T> out = a.value();
  add_into(out, b.value());
  return a.tape->record(OpKind::Add, {a.id, b.id}, std::move(out), [](const BackwardArgs<T>& args) {
    for (auto* g : args.grad_inputs) {
      if (g) add_into(*g, args.grad_output);
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  same_tape(a, b, "mul");
  same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record(OpKind::Mul, {a.id, b.id}, std::move(out), [](const BackwardArgs<T>& args) {
    for (std::size_t side = 0; side < 2; ++side) {
      Tensor<T>* g = args.grad_inputs[side];
      if (!g) continue;
      const Tensor<T>& other = *args.inputs[1 - side];
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.grad_output[i] * other[i];
    }
  });
}

template <typename T>
Var<T> broadcast_mul(Var<T> mask, Var<T> x) {
  same_tape(mask, x, "broadcast_mul");
  const Tensor<T>& m = mask.value();
  const Tensor<T>& f = x.value();
  if (f.rank() != 4) throw ShapeError("broadcast_mul: features must be rank 4 [T,H,W,C], got " + shape_string(f.shape()));
  if (m.shape() != Shape{f.extent(0), 1, 1, 1}) {
    throw ShapeError("broadcast_mul: mask shape " + shape_string(m.shape()) + " must be [" +
                     std::to_string(f.extent(0)) + "x1x1x1]");
  }
  const std::size_t frames = f.extent(0);
  const std::size_t frame_size = f.size() / frames;
  Tensor<T> out = f;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < frame_size; ++i) out[t * frame_size + i] *= m[t];
  }
  return mask.tape->record(OpKind::BroadcastMul, {mask.id, x.id}, std::move(out),
                           [frames, frame_size](const BackwardArgs<T>& a) {
                             const Tensor<T>& m = *a.inputs[0];
                             const Tensor<T>& f = *a.inputs[1];
                             const Tensor<T>& gy = a.grad_output;
                             if (a.grad_inputs[0]) {
                               for (std::size_t t = 0; t < frames; ++t) {
                                 T acc = 0;
                                 for (std::size_t i = 0; i < frame_size; ++i) {
                                   acc += gy[t * frame_size + i] * f[t * frame_size + i];
                                 }
                                 (*a.grad_inputs[0])[t] += acc;
                               }
                             }
                             if (a.grad_inputs[1]) {
                               Tensor<T>& gx = *a.grad_inputs[1];
                               for (std::size_t t = 0; t < frames; ++t) {
                                 for (std::size_t i = 0; i < frame_size; ++i) {
                                   gx[t * frame_size + i] += gy[t * frame_size + i] * m[t];
                                 }
                               }
                             }
                           });
}

template <typename T>
Var<T> reduce(Var<T> x, const std::vector<std::size_t>& axes, ReduceMode mode, bool keep_dims) {
  const Tensor<T>& in = x.value();
  const Shape& is = in.shape();
  std::vector<bool> reduced(is.size(), false);
  for (std::size_t a : axes) {
    if (a >= is.size()) {
      throw ShapeError("reduce: axis " + std::to_string(a) + " out of range for rank " + std::to_string(is.size()));
    }
    reduced[a] = true;
  }
  if (axes.empty()) return x;

  Shape kept = is;
  Shape squeezed;
  for (std::size_t a = 0; a < is.size(); ++a) {
    if (reduced[a]) {
      kept[a] = 1;
    } else {
      squeezed.push_back(is[a]);
    }
  }
  if (squeezed.empty()) squeezed.push_back(1);

  // Output linear index of every input element.
  auto target = std::make_shared<std::vector<std::size_t>>(in.size());
  {
    std::vector<std::size_t> idx(is.size(), 0);
    for (std::size_t i = 0; i < in.size(); ++i) {
      std::size_t o = 0;
      for (std::size_t a = 0; a < is.size(); ++a) o = o * kept[a] + (reduced[a] ? 0 : idx[a]);
      (*target)[i] = o;
      for (std::size_t a = is.size(); a-- > 0;) {
        if (++idx[a] < is[a]) break;
        idx[a] = 0;
      }
    }
  }
  Tensor<T> out(keep_dims ? kept : squeezed);
  const std::size_t count = in.size() / out.size();

  if (mode == ReduceMode::Mean) {
    for (std::size_t i = 0; i < in.size(); ++i) out[(*target)[i]] += in[i];
    for (auto& v : out.data()) v /= static_cast<T>(count);
    return x.tape->record(OpKind::ReduceMean, {x.id}, std::move(out), [target, count](const BackwardArgs<T>& a) {
      if (!a.grad_inputs[0]) return;
      Tensor<T>& gx = *a.grad_inputs[0];
      const T scale = T{1} / static_cast<T>(count);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += a.grad_output[(*target)[i]] * scale;
    });
  }

  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t o = (*target)[i];
    if ((*argmax)[o] == in.size() || in[i] > out[o]) {
      out[o] = in[i];
      (*argmax)[o] = i;
    }
  }
  return x.tape->record(OpKind::ReduceMax, {x.id}, std::move(out), [argmax](const BackwardArgs<T>& a) {
    if (!a.grad_inputs[0]) return;
    for (std::size_t o = 0; o < argmax->size(); ++o) (*a.grad_inputs[0])[(*argmax)[o]] += a.grad_output[o];
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape->record(OpKind::Reshape, {x.id}, std::move(out), [](const BackwardArgs<T>& a) {
    if (!a.grad_inputs[0]) return;
    Tensor<T>& gx = *a.grad_inputs[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += a.grad_output[i];
  });
}

double bce_value(double probability, double label) {
  const double p = std::clamp(probability, kBceEpsilon, 1.0 - kBceEpsilon);
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

template <typename T>
Var<T> bce_loss(Var<T> predictions, const Tensor<T>& labels) {
  const Tensor<T>& p = predictions.value();
  if (p.size() != labels.size()) {
    throw ShapeError("bce_loss: " + std::to_string(p.size()) + " predictions but " + std::to_string(labels.size()) +
                     " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != T{0} && labels[i] != T{1}) {
      throw ValueError("bce_loss: label at index " + std::to_string(i) + " is not 0 or 1");
    }
  }
  const std::size_t n = p.size();
  // Losses are summed in double so 32-bit training reports the same value
  // as evaluation.
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) total += bce_value(static_cast<double>(p[i]), static_cast<double>(labels[i]));
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
  return predictions.tape->record(OpKind::BceLoss, {predictions.id}, std::move(out),
                                  [labels, n](const BackwardArgs<T>& a) {
                                    if (!a.grad_inputs[0]) return;
                                    const Tensor<T>& p = *a.inputs[0];
                                    Tensor<T>& gp = *a.grad_inputs[0];
                                    const T g = a.grad_output[0] / static_cast<T>(n);
                                    const T lo = static_cast<T>(kBceEpsilon), hi = T{1} - static_cast<T>(kBceEpsilon);
                                    for (std::size_t i = 0; i < n; ++i) {
                                      // Zero slope where the clamp is active.
                                      if (p[i] < lo || p[i] > hi) continue;
                                      const T y = labels[i];
                                      gp[i] += g * (-(y / p[i]) + (T{1} - y) / (T{1} - p[i]));
                                    }
                                  });
}

#define TEMPNET_INSTANTIATE(T)                                                                      \
  template struct Var<T>;                                                                           \
  template class Tape<T>;                                                                           \
  template Var<T> conv3d<T>(Var<T>, Var<T>, Var<T>);                                                \
  template Var<T> maxpool<T>(Var<T>, const kernels::Window3&);                                      \
  template Var<T> dense<T>(Var<T>, Var<T>, Var<T>);                                                 \
  template Var<T> relu<T>(Var<T>);                                                                  \
  template Var<T> sigmoid<T>(Var<T>);                                                               \
  template Var<T> add<T>(Var<T>, Var<T>);                                                           \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                           \
  template Var<T> broadcast_mul<T>(Var<T>, Var<T>);                                                 \
  template Var<T> reduce<T>(Var<T>, const std::vector<std::size_t>&, ReduceMode, bool);             \
  template Var<T> reshape<T>(Var<T>, Shape);                                                        \
  template Var<T> bce_loss<T>(Var<T>, const Tensor<T>&);

TEMPNET_INSTANTIATE(float)
TEMPNET_INSTANTIATE(double)

#undef TEMPNET_INSTANTIATE

}  // namespace tempnet
