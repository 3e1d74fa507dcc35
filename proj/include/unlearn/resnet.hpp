#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "unlearn/nn.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

// CIFAR-style ResNet-18: 3x3 stem without the initial pooling, four stages
// of two basic blocks (64/128/256/512), global average pooling and a linear
// head. Batch-norm statistics are updated only in train-mode forwards.
template <typename T>
struct ResNet18Net {
  static constexpr double kBnMomentum = 0.1;
  static constexpr double kBnEps = 1e-5;

  struct ConvBn {
    TensorT<T> w, gamma, beta, rmean, rvar;
    int stride = 1;
    int pad = 1;

    void init(std::int64_t out_c, std::int64_t in_c, std::int64_t k, int stride_,
              RngStream stream) {
      w = TensorT<T>({out_c, in_c, k, k});
      nn::kaiming_uniform(w, in_c * k * k, stream);
      gamma = TensorT<T>({out_c}, T(1));
      beta = TensorT<T>({out_c});
      rmean = TensorT<T>({out_c});
      rvar = TensorT<T>({out_c}, T(1));
      stride = stride_;
      pad = k == 1 ? 0 : 1;
    }

    TensorT<T> forward(const TensorT<T>& x, bool train, TensorT<T>* conv_out,
                       nn::BnCache<T>* cache) {
      TensorT<T> a = nn::conv2d(x, w, zero_bias(), stride, pad);
      TensorT<T> y = train ? nn::batchnorm_train(a, gamma, beta, rmean, rvar, kBnMomentum,
                                                 kBnEps, cache)
                           : nn::batchnorm_eval(a, gamma, beta, rmean, rvar, kBnEps, cache);
      if (conv_out) *conv_out = std::move(a);
      return y;
    }

    TensorT<T> forward_const(const TensorT<T>& x, TensorT<T>* conv_out,
                             nn::BnCache<T>* cache) const {
      TensorT<T> a = nn::conv2d(x, w, zero_bias(), stride, pad);
      TensorT<T> y = nn::batchnorm_eval(a, gamma, beta, rmean, rvar, kBnEps, cache);
      if (conv_out) *conv_out = std::move(a);
      return y;
    }

    TensorT<T> zero_bias() const { return TensorT<T>({w.dim(0)}); }
  };

  struct Block {
    ConvBn cb1, cb2;
    bool has_down = false;
    ConvBn down;
  };

  std::int64_t in_channels = 3;
  std::int64_t classes = 10;
  ConvBn stem;
  std::array<std::array<Block, 2>, 4> stages;
  TensorT<T> fc_w, fc_b;

  ResNet18Net(std::int64_t in_channels_, std::int64_t classes_, RngStream seed_stream)
      : in_channels(in_channels_), classes(classes_) {
    stem.init(64, in_channels, 3, 1, seed_stream.derive("stem"));
    const std::int64_t widths[4] = {64, 128, 256, 512};
    std::int64_t prev = 64;
    for (int s = 0; s < 4; ++s) {
      for (int b = 0; b < 2; ++b) {
        Block& blk = stages[s][b];
        const int stride = (b == 0 && s > 0) ? 2 : 1;
        const std::int64_t in_c = b == 0 ? prev : widths[s];
        blk.cb1.init(widths[s], in_c, 3, stride, seed_stream.derive("c1", s, b));
        blk.cb2.init(widths[s], widths[s], 3, 1, seed_stream.derive("c2", s, b));
        blk.has_down = in_c != widths[s] || stride != 1;
        if (blk.has_down) {
          blk.down.init(widths[s], in_c, 1, stride, seed_stream.derive("dn", s, b));
        }
      }
      prev = widths[s];
    }
    fc_w = TensorT<T>({classes, 512});
    fc_b = TensorT<T>({classes});
    nn::kaiming_uniform(fc_w, 512, seed_stream.derive("fc"));
  }

  struct BlockCache {
    TensorT<T> input, conv1, bn1, relu1, conv2, bn2, down_conv, sum;
    nn::BnCache<T> bn1c, bn2c, downc;
  };

  struct Cache {
    TensorT<T> input, stem_conv, stem_bn, stem_relu;
    nn::BnCache<T> stemc;
    std::array<std::array<BlockCache, 2>, 4> blocks;
    TensorT<T> pooled;
  };

  template <bool kTrain>
  TensorT<T> run_forward(const TensorT<T>& x, Cache* cache) {
    Cache local;
    Cache& c = cache ? *cache : local;
    c.input = x;
    c.stem_bn = kTrain ? stem.forward(x, true, &c.stem_conv, &c.stemc)
                       : stem.forward_const(x, &c.stem_conv, &c.stemc);
    c.stem_relu = nn::relu(c.stem_bn);
    const TensorT<T>* cur = &c.stem_relu;
    for (int s = 0; s < 4; ++s) {
      for (int b = 0; b < 2; ++b) {
        Block& blk = stages[s][b];
        BlockCache& bc = c.blocks[s][b];
        bc.input = *cur;
        bc.bn1 = kTrain ? blk.cb1.forward(bc.input, true, &bc.conv1, &bc.bn1c)
                        : blk.cb1.forward_const(bc.input, &bc.conv1, &bc.bn1c);
        bc.relu1 = nn::relu(bc.bn1);
        bc.bn2 = kTrain ? blk.cb2.forward(bc.relu1, true, &bc.conv2, &bc.bn2c)
                        : blk.cb2.forward_const(bc.relu1, &bc.conv2, &bc.bn2c);
        TensorT<T> shortcut;
        if (blk.has_down) {
          shortcut = kTrain ? blk.down.forward(bc.input, true, &bc.down_conv, &bc.downc)
                            : blk.down.forward_const(bc.input, &bc.down_conv, &bc.downc);
        } else {
          shortcut = bc.input;
        }
        bc.sum = bc.bn2;
        for (std::int64_t i = 0; i < bc.sum.size(); ++i) bc.sum[i] += shortcut[i];
        bc.sum = nn::relu(bc.sum);  // cache post-relu; relu mask recoverable from it
        cur = &bc.sum;
      }
    }
    c.pooled = nn::global_avgpool(*cur);
    return nn::linear(c.pooled, fc_w, fc_b);
  }

  TensorT<T> forward(const TensorT<T>& x, bool train, Cache* cache) {
    return train ? run_forward<true>(x, cache) : run_forward<false>(x, cache);
  }

  TensorT<T> forward_eval(const TensorT<T>& x, Cache* cache) const {
    return const_cast<ResNet18Net*>(this)->template run_forward<false>(x, cache);
  }

  struct Grads {
    std::vector<TensorT<T>> params;  // aligned with param_refs() order
    TensorT<T> input;
  };

  // Collects {name, tensor} pairs in a stable order shared by grads.
  template <typename Self, typename Fn>
  static void visit_params(Self& self, Fn&& fn) {
    fn("stem.w", self.stem.w);
    fn("stem.gamma", self.stem.gamma);
    fn("stem.beta", self.stem.beta);
    for (int s = 0; s < 4; ++s) {
      for (int b = 0; b < 2; ++b) {
        auto& blk = self.stages[s][b];
        const std::string p = "s" + std::to_string(s) + ".b" + std::to_string(b) + ".";
        fn(p + "c1.w", blk.cb1.w);
        fn(p + "c1.gamma", blk.cb1.gamma);
        fn(p + "c1.beta", blk.cb1.beta);
        fn(p + "c2.w", blk.cb2.w);
        fn(p + "c2.gamma", blk.cb2.gamma);
        fn(p + "c2.beta", blk.cb2.beta);
        if (blk.has_down) {
          fn(p + "dn.w", blk.down.w);
          fn(p + "dn.gamma", blk.down.gamma);
          fn(p + "dn.beta", blk.down.beta);
        }
      }
    }
    fn("fc.w", self.fc_w);
    fn("fc.b", self.fc_b);
  }

  template <typename Self, typename Fn>
  static void visit_buffers(Self& self, Fn&& fn) {
    fn("stem.rmean", self.stem.rmean);
    fn("stem.rvar", self.stem.rvar);
    for (int s = 0; s < 4; ++s) {
      for (int b = 0; b < 2; ++b) {
        auto& blk = self.stages[s][b];
        const std::string p = "s" + std::to_string(s) + ".b" + std::to_string(b) + ".";
        fn(p + "c1.rmean", blk.cb1.rmean);
        fn(p + "c1.rvar", blk.cb1.rvar);
        fn(p + "c2.rmean", blk.cb2.rmean);
        fn(p + "c2.rvar", blk.cb2.rvar);
        if (blk.has_down) {
          fn(p + "dn.rmean", blk.down.rmean);
          fn(p + "dn.rvar", blk.down.rvar);
        }
      }
    }
  }

  Grads backward(const Cache& c, const TensorT<T>& grad_logits, bool need_input) const {
    Grads out;
    struct Acc {
      TensorT<T> stem_w, stem_g, stem_b;
      std::array<std::array<std::array<TensorT<T>, 9>, 2>, 4> blocks;
      TensorT<T> fc_w, fc_b;
    } acc;

    auto fc = nn::linear_backward(c.pooled, fc_w, grad_logits, true);
    acc.fc_w = std::move(fc.weight);
    acc.fc_b = std::move(fc.bias);
    const TensorT<T>* last = &c.blocks[3][1].sum;
    TensorT<T> grad = nn::global_avgpool_backward(last->shape(), fc.input);

    for (int s = 3; s >= 0; --s) {
      for (int b = 1; b >= 0; --b) {
        const Block& blk = stages[s][b];
        const BlockCache& bc = c.blocks[s][b];
        // relu over (bn2 + shortcut): mask from the cached post-relu output
        TensorT<T> gsum(grad.shape());
        for (std::int64_t i = 0; i < grad.size(); ++i) {
          gsum[i] = bc.sum[i] > T(0) ? grad[i] : T(0);
        }
        auto bn2g = nn::batchnorm_backward(blk.cb2.gamma, bc.bn2c, gsum);
        auto c2g = nn::conv2d_backward(bc.relu1, blk.cb2.w, bn2g.input, blk.cb2.stride,
                                       blk.cb2.pad, true);
        TensorT<T> gr1 = nn::relu_backward(bc.bn1, c2g.input);
        auto bn1g = nn::batchnorm_backward(blk.cb1.gamma, bc.bn1c, gr1);
        auto c1g = nn::conv2d_backward(bc.input, blk.cb1.w, bn1g.input, blk.cb1.stride,
                                       blk.cb1.pad, true);
        TensorT<T> gin = std::move(c1g.input);
        if (blk.has_down) {
          auto dbg = nn::batchnorm_backward(blk.down.gamma, bc.downc, gsum);
          auto dcg = nn::conv2d_backward(bc.input, blk.down.w, dbg.input, blk.down.stride,
                                         blk.down.pad, true);
          for (std::int64_t i = 0; i < gin.size(); ++i) gin[i] += dcg.input[i];
          acc.blocks[s][b] = {std::move(c1g.weight), std::move(bn1g.gamma),
                              std::move(bn1g.beta),  std::move(c2g.weight),
                              std::move(bn2g.gamma), std::move(bn2g.beta),
                              std::move(dcg.weight), std::move(dbg.gamma),
                              std::move(dbg.beta)};
        } else {
          for (std::int64_t i = 0; i < gin.size(); ++i) gin[i] += gsum[i];
          acc.blocks[s][b] = {std::move(c1g.weight), std::move(bn1g.gamma),
                              std::move(bn1g.beta),  std::move(c2g.weight),
                              std::move(bn2g.gamma), std::move(bn2g.beta),
                              TensorT<T>(),          TensorT<T>(),
                              TensorT<T>()};
        }
        grad = std::move(gin);
      }
    }
    grad = nn::relu_backward(c.stem_bn, grad);
    auto stem_bng = nn::batchnorm_backward(stem.gamma, c.stemc, grad);
    auto stem_cg =
        nn::conv2d_backward(c.input, stem.w, stem_bng.input, stem.stride, stem.pad, need_input);
    acc.stem_w = std::move(stem_cg.weight);
    acc.stem_g = std::move(stem_bng.gamma);
    acc.stem_b = std::move(stem_bng.beta);
    if (need_input) out.input = std::move(stem_cg.input);

    out.params.push_back(std::move(acc.stem_w));
    out.params.push_back(std::move(acc.stem_g));
    out.params.push_back(std::move(acc.stem_b));
    for (int s = 0; s < 4; ++s) {
      for (int b = 0; b < 2; ++b) {
        const bool down = stages[s][b].has_down;
        const int count = down ? 9 : 6;
        for (int i = 0; i < count; ++i) out.params.push_back(std::move(acc.blocks[s][b][i]));
      }
    }
    out.params.push_back(std::move(acc.fc_w));
    out.params.push_back(std::move(acc.fc_b));
    return out;
  }
};

}  // namespace unlearn
