#pragma once

#include <cstdint>
#include <vector>

#include "unlearn/nn.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

// Two conv blocks (in->16->32, 3x3 kernels, ReLU, 2x2 max pooling) and a
// linear head. Small enough that full noise-generation experiments finish in
// minutes on a CPU. Input height/width must be divisible by 4.
template <typename T>
struct TinyCnnNet {
  static constexpr std::int64_t kWidth1 = 16;
  static constexpr std::int64_t kWidth2 = 32;

  std::int64_t in_channels = 3;
  std::int64_t height = 32;
  std::int64_t width = 32;
  std::int64_t classes = 10;

  TensorT<T> w1, b1, w2, b2, wf, bf;

  TinyCnnNet(std::int64_t in_channels_, std::int64_t height_, std::int64_t width_,
             std::int64_t classes_, RngStream seed_stream)
      : in_channels(in_channels_), height(height_), width(width_), classes(classes_) {
    check_contract(height % 4 == 0 && width % 4 == 0,
                   "tinycnn: input height/width must be divisible by 4");
    w1 = TensorT<T>({kWidth1, in_channels, 3, 3});
    b1 = TensorT<T>({kWidth1});
    w2 = TensorT<T>({kWidth2, kWidth1, 3, 3});
    b2 = TensorT<T>({kWidth2});
    wf = TensorT<T>({classes, flat_size()});
    bf = TensorT<T>({classes});
    nn::kaiming_uniform(w1, in_channels * 9, seed_stream.derive("w1"));
    nn::kaiming_uniform(w2, kWidth1 * 9, seed_stream.derive("w2"));
    nn::kaiming_uniform(wf, flat_size(), seed_stream.derive("wf"));
  }

  std::int64_t flat_size() const { return kWidth2 * (height / 4) * (width / 4); }

  struct Cache {
    TensorT<T> input, pre1, pool1, pre2, pool2, logits;
    std::vector<std::uint8_t> arg1, arg2;
  };

  TensorT<T> forward(const TensorT<T>& x, Cache* cache) const {
    check_contract(x.rank() == 4 && x.dim(1) == in_channels && x.dim(2) == height &&
                       x.dim(3) == width,
                   "tinycnn: input batch shape mismatch");
    Cache local;
    Cache& c = cache ? *cache : local;
    c.input = x;
    c.pre1 = nn::conv2d(x, w1, b1, 1, 1);
    TensorT<T> r1 = nn::relu(c.pre1);
    c.pool1 = nn::maxpool2(r1, &c.arg1);
    c.pre2 = nn::conv2d(c.pool1, w2, b2, 1, 1);
    TensorT<T> r2 = nn::relu(c.pre2);
    c.pool2 = nn::maxpool2(r2, &c.arg2);
    c.logits = nn::linear(c.pool2, wf, bf);
    return c.logits;
  }

  struct Grads {
    TensorT<T> w1, b1, w2, b2, wf, bf;
    TensorT<T> input;
  };

  Grads backward(const Cache& c, const TensorT<T>& grad_logits, bool need_input) const {
    Grads g;
    auto fc = nn::linear_backward(c.pool2, wf, grad_logits, true);
    g.wf = std::move(fc.weight);
    g.bf = std::move(fc.bias);
    TensorT<T> gr2 = nn::maxpool2_backward(c.pre2.shape(), c.arg2, fc.input);
    gr2 = nn::relu_backward(c.pre2, gr2);
    auto c2 = nn::conv2d_backward(c.pool1, w2, gr2, 1, 1, true);
    g.w2 = std::move(c2.weight);
    g.b2 = std::move(c2.bias);
    TensorT<T> gr1 = nn::maxpool2_backward(c.pre1.shape(), c.arg1, c2.input);
    gr1 = nn::relu_backward(c.pre1, gr1);
    auto c1 = nn::conv2d_backward(c.input, w1, gr1, 1, 1, need_input);
    g.w1 = std::move(c1.weight);
    g.b1 = std::move(c1.bias);
    if (need_input) g.input = std::move(c1.input);
    return g;
  }
};

}  // namespace unlearn
