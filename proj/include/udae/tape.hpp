#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "udae/ops.hpp"
#include "udae/tensor.hpp"

namespace udae {

template <typename T> struct LayerGradsT {
  TensorT<T> weights;
  std::vector<T> bias;
};

using LayerGrads = LayerGradsT<float>;

// Explicit computation-graph tape: an ordered list of executed ops over
// value ids. Forward helpers save what backward needs; backward walks the
// list in reverse, accumulating into value and parameter gradients. Values
// may fan out (skip connections), so gradients add rather than assign.
template <typename T> class TapeT {
public:
  enum class Op { Conv, UpConv, Relu, Sigmoid, MaxPool, Concat };

  struct Node {
    Op op;
    int in0 = -1;
    int in1 = -1;
    int out = -1;
    int param = -1; // layer index for Conv/UpConv
    PoolIndices pool;
  };

  int input(TensorT<T> x) { return push(std::move(x)); }

  int conv(int in, const std::vector<ConvLayerT<T>> &layers, int li) {
    int out = push(conv2d_forward(value(in), layers[static_cast<std::size_t>(li)]));
    nodes_.push_back({Op::Conv, in, -1, out, li, {}});
    return out;
  }

  int upconv(int in, const std::vector<ConvLayerT<T>> &layers, int li) {
    int out = push(upconv2x2_forward(value(in), layers[static_cast<std::size_t>(li)]));
    nodes_.push_back({Op::UpConv, in, -1, out, li, {}});
    return out;
  }

  int relu(int in) {
    int out = push(udae::relu(value(in)));
    nodes_.push_back({Op::Relu, in, -1, out, -1, {}});
    return out;
  }

  int sigmoid(int in) {
    int out = push(udae::sigmoid(value(in)));
    nodes_.push_back({Op::Sigmoid, in, -1, out, -1, {}});
    return out;
  }

  int maxpool(int in) {
    auto [t, idx] = maxpool2x2_forward(value(in));
    int out = push(std::move(t));
    nodes_.push_back({Op::MaxPool, in, -1, out, -1, std::move(idx)});
    return out;
  }

  int concat(int a, int b) {
    int out = push(concat_channels(value(a), value(b)));
    nodes_.push_back({Op::Concat, a, b, out, -1, {}});
    return out;
  }

  const TensorT<T> &value(int id) const { return values_[static_cast<std::size_t>(id)]; }
  const std::vector<Node> &nodes() const { return nodes_; }
  std::size_t node_count() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  // Seeds d(loss)/d(value[out_id]) and propagates to every parameter of
  // `layers`. layer_grads must be pre-sized and zeroed to match `layers`.
  // Per-value gradients stay readable through grad_of() afterwards.
  void backward(int out_id, const TensorT<T> &grad_seed,
                const std::vector<ConvLayerT<T>> &layers,
                std::vector<LayerGradsT<T>> &layer_grads) {
    if (nodes_.empty())
      throw std::logic_error("Tape::backward: tape is empty, run forward with recording first");
    vgrads_.assign(values_.size(), TensorT<T>());
    accumulate(out_id, grad_seed);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      const Node &n = *it;
      TensorT<T> &go = vgrads_[static_cast<std::size_t>(n.out)];
      if (go.empty())
        continue; // no downstream consumer contributed
      switch (n.op) {
      case Op::Conv: {
        ConvGradsT<T> cg =
            conv2d_backward(value(n.in0), layers[static_cast<std::size_t>(n.param)], go);
        accumulate(n.in0, std::move(cg.input));
        add_param_grads(layer_grads[static_cast<std::size_t>(n.param)], cg);
        break;
      }
      case Op::UpConv: {
        ConvGradsT<T> cg =
            upconv2x2_backward(value(n.in0), layers[static_cast<std::size_t>(n.param)], go);
        accumulate(n.in0, std::move(cg.input));
        add_param_grads(layer_grads[static_cast<std::size_t>(n.param)], cg);
        break;
      }
      case Op::Relu:
        accumulate(n.in0, relu_backward(value(n.in0), go));
        break;
      case Op::Sigmoid:
        accumulate(n.in0, sigmoid_backward(value(n.out), go));
        break;
      case Op::MaxPool:
        accumulate(n.in0, maxpool2x2_backward(n.pool, go));
        break;
      case Op::Concat: {
        auto [ga, gb] =
            concat_channels_backward(go, value(n.in0).channels(), value(n.in1).channels());
        accumulate(n.in0, std::move(ga));
        accumulate(n.in1, std::move(gb));
        break;
      }
      }
    }
  }

  const TensorT<T> &grad_of(int id) const { return vgrads_[static_cast<std::size_t>(id)]; }

private:
  int push(TensorT<T> t) {
    values_.push_back(std::move(t));
    return static_cast<int>(values_.size() - 1);
  }

  void accumulate(int id, TensorT<T> g) {
    TensorT<T> &slot = vgrads_[static_cast<std::size_t>(id)];
    if (slot.empty()) {
      slot = std::move(g);
      return;
    }
    T *d = slot.data();
    const T *s = g.data();
    for (std::int64_t i = 0; i < slot.size(); ++i)
      d[i] += s[i];
  }

  static void add_param_grads(LayerGradsT<T> &dst, const ConvGradsT<T> &src) {
    T *w = dst.weights.data();
    const T *gw = src.weights.data();
    for (std::int64_t i = 0; i < dst.weights.size(); ++i)
      w[i] += gw[i];
    for (std::size_t i = 0; i < dst.bias.size(); ++i)
      dst.bias[i] += src.bias[i];
  }

  std::vector<TensorT<T>> values_;
  std::vector<Node> nodes_;
  std::vector<TensorT<T>> vgrads_;
};

using Tape = TapeT<float>;

} // namespace udae
