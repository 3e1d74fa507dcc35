#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "unlearn/common.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/tensor.hpp"

// Plain dense layer kernels. All loops keep a fixed per-output accumulation
// order that does not depend on the batch size, so crafting an example alone
// or inside a batch produces bit-identical results.
namespace unlearn::nn {

template <typename T>
void kaiming_uniform(TensorT<T>& w, std::int64_t fan_in, RngStream stream) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < w.size(); ++i) {
    w[i] = static_cast<T>(stream.uniform(-bound, bound));
  }
}

// y[n,oc,oy,ox] = bias[oc] + sum_{ic,ky,kx} w[oc,ic,ky,kx] * x[n,ic,sy,sx]
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias, int stride,
                  int pad) {
  const std::int64_t n = x.dim(0), ic = x.dim(1), h = x.dim(2), ww = x.dim(3);
  const std::int64_t oc = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  check_contract(w.dim(1) == ic, "conv2d: channel mismatch");
  const std::int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::int64_t ow = (ww + 2 * pad - kw) / stride + 1;
  TensorT<T> y({n, oc, oh, ow});
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t o = 0; o < oc; ++o) {
      T* yrow0 = &y.at(b, o, 0, 0);
      const T bv = bias[o];
      for (std::int64_t i = 0; i < oh * ow; ++i) yrow0[i] = bv;
      for (std::int64_t c = 0; c < ic; ++c) {
        for (std::int64_t ky = 0; ky < kh; ++ky) {
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const T wv = w.at(o, c, ky, kx);
            for (std::int64_t oy = 0; oy < oh; ++oy) {
              const std::int64_t sy = oy * stride - pad + ky;
              if (sy < 0 || sy >= h) continue;
              const T* xrow = &x.at(b, c, sy, 0);
              T* yrow = yrow0 + oy * ow;
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const std::int64_t sx = ox * stride - pad + kx;
                if (sx < 0 || sx >= ww) continue;
                yrow[ox] += wv * xrow[sx];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
struct ConvGrads {
  TensorT<T> input;
  TensorT<T> weight;
  TensorT<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                             int stride, int pad, bool need_input_grad) {
  const std::int64_t n = x.dim(0), ic = x.dim(1), h = x.dim(2), ww = x.dim(3);
  const std::int64_t oc = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::int64_t oh = gy.dim(2), ow = gy.dim(3);
  ConvGrads<T> g;
  g.weight = TensorT<T>(w.shape());
  g.bias = TensorT<T>({oc});
  if (need_input_grad) g.input = TensorT<T>(x.shape());

  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t o = 0; o < oc; ++o) {
      const T* gyrow0 = &gy.at(b, o, 0, 0);
      T bias_acc = T(0);
      for (std::int64_t i = 0; i < oh * ow; ++i) bias_acc += gyrow0[i];
      g.bias[o] += bias_acc;
      for (std::int64_t c = 0; c < ic; ++c) {
        for (std::int64_t ky = 0; ky < kh; ++ky) {
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            T wacc = T(0);
            const T wv = w.at(o, c, ky, kx);
            for (std::int64_t oy = 0; oy < oh; ++oy) {
              const std::int64_t sy = oy * stride - pad + ky;
              if (sy < 0 || sy >= h) continue;
              const T* xrow = &x.at(b, c, sy, 0);
              const T* gyrow = gyrow0 + oy * ow;
              T* gxrow = need_input_grad ? &g.input.at(b, c, sy, 0) : nullptr;
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const std::int64_t sx = ox * stride - pad + kx;
                if (sx < 0 || sx >= ww) continue;
                wacc += xrow[sx] * gyrow[ox];
                if (need_input_grad) gxrow[sx] += wv * gyrow[ox];
              }
            }
            g.weight.at(o, c, ky, kx) += wacc;
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias) {
  const std::int64_t n = x.dim(0);
  const std::int64_t in = x.slice_size();
  const std::int64_t out = w.dim(0);
  check_contract(w.dim(1) == in, "linear: input width mismatch");
  TensorT<T> y({n, out});
  for (std::int64_t b = 0; b < n; ++b) {
    const T* xr = x.data() + b * in;
    for (std::int64_t o = 0; o < out; ++o) {
      const T* wr = w.data() + o * in;
      T acc = bias[o];
      for (std::int64_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      y.at(b, o) = acc;
    }
  }
  return y;
}

template <typename T>
struct LinearGrads {
  TensorT<T> input;
  TensorT<T> weight;
  TensorT<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                               bool need_input_grad) {
  const std::int64_t n = x.dim(0);
  const std::int64_t in = x.slice_size();
  const std::int64_t out = w.dim(0);
  LinearGrads<T> g;
  g.weight = TensorT<T>(w.shape());
  g.bias = TensorT<T>({out});
  if (need_input_grad) g.input = TensorT<T>(x.shape());
  for (std::int64_t b = 0; b < n; ++b) {
    const T* xr = x.data() + b * in;
    T* gxr = need_input_grad ? g.input.data() + b * in : nullptr;
    for (std::int64_t o = 0; o < out; ++o) {
      const T gv = gy.at(b, o);
      g.bias[o] += gv;
      T* gwr = g.weight.data() + o * in;
      const T* wr = w.data() + o * in;
      for (std::int64_t i = 0; i < in; ++i) {
        gwr[i] += gv * xr[i];
        if (need_input_grad) gxr[i] += gv * wr[i];
      }
    }
  }
  return g;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& gy) {
  TensorT<T> gx(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) gx[i] = x[i] > T(0) ? gy[i] : T(0);
  return gx;
}

// 2x2 max pooling with stride 2; ties resolve to the first element in scan
// order so results are reproducible.
template <typename T>
TensorT<T> maxpool2(const TensorT<T>& x, std::vector<std::uint8_t>* argmax) {
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = h / 2, ow = w / 2;
  TensorT<T> y({n, c, oh, ow});
  argmax->assign(static_cast<std::size_t>(y.size()), 0);
  std::int64_t oi = 0;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox, ++oi) {
          T best = x.at(b, ch, 2 * oy, 2 * ox);
          std::uint8_t best_k = 0;
          for (std::uint8_t k = 1; k < 4; ++k) {
            const T v = x.at(b, ch, 2 * oy + k / 2, 2 * ox + k % 2);
            if (v > best) {
              best = v;
              best_k = k;
            }
          }
          y[oi] = best;
          (*argmax)[static_cast<std::size_t>(oi)] = best_k;
        }
      }
    }
  }
  return y;
}

template <typename T>
TensorT<T> maxpool2_backward(const std::vector<std::int64_t>& in_shape,
                             const std::vector<std::uint8_t>& argmax, const TensorT<T>& gy) {
  TensorT<T> gx(in_shape);
  const std::int64_t n = gy.dim(0), c = gy.dim(1), oh = gy.dim(2), ow = gy.dim(3);
  std::int64_t oi = 0;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox, ++oi) {
          const std::uint8_t k = argmax[static_cast<std::size_t>(oi)];
          gx.at(b, ch, 2 * oy + k / 2, 2 * ox + k % 2) += gy[oi];
        }
      }
    }
  }
  return gx;
}

template <typename T>
TensorT<T> global_avgpool(const TensorT<T>& x) {
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  TensorT<T> y({n, c});
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* row = &x.at(b, ch, 0, 0);
      T acc = T(0);
      for (std::int64_t i = 0; i < hw; ++i) acc += row[i];
      y.at(b, ch) = acc / static_cast<T>(hw);
    }
  }
  return y;
}

template <typename T>
TensorT<T> global_avgpool_backward(const std::vector<std::int64_t>& in_shape,
                                   const TensorT<T>& gy) {
  TensorT<T> gx(in_shape);
  const std::int64_t n = in_shape[0], c = in_shape[1], hw = in_shape[2] * in_shape[3];
  const T inv = T(1) / static_cast<T>(hw);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      T* row = &gx.at(b, ch, 0, 0);
      const T g = gy.at(b, ch) * inv;
      for (std::int64_t i = 0; i < hw; ++i) row[i] = g;
    }
  }
  return gx;
}

template <typename T>
struct BnCache {
  TensorT<T> xhat;
  std::vector<T> inv_std;
  bool train_mode = false;
};

// Batch statistics, running-stat update (unbiased variance), cached
// normalized activations for the backward pass.
template <typename T>
TensorT<T> batchnorm_train(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                           TensorT<T>& running_mean, TensorT<T>& running_var, double momentum,
                           double eps, BnCache<T>* cache) {
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const double count = static_cast<double>(n * hw);
  TensorT<T> y(x.shape());
  if (cache) {
    cache->xhat = TensorT<T>(x.shape());
    cache->inv_std.assign(static_cast<std::size_t>(c), T(0));
    cache->train_mode = true;
  }
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double sum = 0.0, sq = 0.0;
    for (std::int64_t b = 0; b < n; ++b) {
      const T* row = &x.at(b, ch, 0, 0);
      for (std::int64_t i = 0; i < hw; ++i) {
        sum += static_cast<double>(row[i]);
        sq += static_cast<double>(row[i]) * static_cast<double>(row[i]);
      }
    }
    const double mean = sum / count;
    const double var = std::max(sq / count - mean * mean, 0.0);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
    running_mean[ch] = static_cast<T>((1.0 - momentum) * running_mean[ch] + momentum * mean);
    running_var[ch] = static_cast<T>((1.0 - momentum) * running_var[ch] + momentum * unbiased);
    if (cache) cache->inv_std[static_cast<std::size_t>(ch)] = static_cast<T>(inv_std);
    const T g = gamma[ch], bt = beta[ch];
    for (std::int64_t b = 0; b < n; ++b) {
      const T* row = &x.at(b, ch, 0, 0);
      T* yrow = &y.at(b, ch, 0, 0);
      T* hrow = cache ? &cache->xhat.at(b, ch, 0, 0) : nullptr;
      for (std::int64_t i = 0; i < hw; ++i) {
        const T xh = static_cast<T>((static_cast<double>(row[i]) - mean) * inv_std);
        if (hrow) hrow[i] = xh;
        yrow[i] = g * xh + bt;
      }
    }
  }
  return y;
}

// Frozen-statistics mode: a per-channel affine map.
template <typename T>
TensorT<T> batchnorm_eval(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                          const TensorT<T>& running_mean, const TensorT<T>& running_var,
                          double eps, BnCache<T>* cache) {
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  TensorT<T> y(x.shape());
  if (cache) {
    cache->xhat = TensorT<T>(x.shape());
    cache->inv_std.assign(static_cast<std::size_t>(c), T(0));
    cache->train_mode = false;
  }
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const double inv_std = 1.0 / std::sqrt(static_cast<double>(running_var[ch]) + eps);
    const double mean = static_cast<double>(running_mean[ch]);
    if (cache) cache->inv_std[static_cast<std::size_t>(ch)] = static_cast<T>(inv_std);
    const T g = gamma[ch], bt = beta[ch];
    for (std::int64_t b = 0; b < n; ++b) {
      const T* row = &x.at(b, ch, 0, 0);
      T* yrow = &y.at(b, ch, 0, 0);
      T* hrow = cache ? &cache->xhat.at(b, ch, 0, 0) : nullptr;
      for (std::int64_t i = 0; i < hw; ++i) {
        const T xh = static_cast<T>((static_cast<double>(row[i]) - mean) * inv_std);
        if (hrow) hrow[i] = xh;
        yrow[i] = g * xh + bt;
      }
    }
  }
  return y;
}

template <typename T>
struct BnGrads {
  TensorT<T> input, gamma, beta;
};

template <typename T>
BnGrads<T> batchnorm_backward(const TensorT<T>& gamma, const BnCache<T>& cache,
                              const TensorT<T>& gy) {
  const std::int64_t n = gy.dim(0), c = gy.dim(1), hw = gy.dim(2) * gy.dim(3);
  const double count = static_cast<double>(n * hw);
  BnGrads<T> g;
  g.input = TensorT<T>(gy.shape());
  g.gamma = TensorT<T>({c});
  g.beta = TensorT<T>({c});
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double sum_gy = 0.0, sum_gy_xhat = 0.0;
    for (std::int64_t b = 0; b < n; ++b) {
      const T* gyr = &gy.at(b, ch, 0, 0);
      const T* xhr = &cache.xhat.at(b, ch, 0, 0);
      for (std::int64_t i = 0; i < hw; ++i) {
        sum_gy += static_cast<double>(gyr[i]);
        sum_gy_xhat += static_cast<double>(gyr[i]) * static_cast<double>(xhr[i]);
      }
    }
    g.gamma[ch] = static_cast<T>(sum_gy_xhat);
    g.beta[ch] = static_cast<T>(sum_gy);
    const double gm = static_cast<double>(gamma[ch]);
    const double inv_std = static_cast<double>(cache.inv_std[static_cast<std::size_t>(ch)]);
    for (std::int64_t b = 0; b < n; ++b) {
      const T* gyr = &gy.at(b, ch, 0, 0);
      const T* xhr = &cache.xhat.at(b, ch, 0, 0);
      T* gxr = &g.input.at(b, ch, 0, 0);
      for (std::int64_t i = 0; i < hw; ++i) {
        if (cache.train_mode) {
          gxr[i] = static_cast<T>(
              gm * inv_std *
              (static_cast<double>(gyr[i]) - sum_gy / count -
               static_cast<double>(xhr[i]) * sum_gy_xhat / count));
        } else {
          gxr[i] = static_cast<T>(gm * inv_std * static_cast<double>(gyr[i]));
        }
      }
    }
  }
  return g;
}

// Mean cross-entropy over softmax logits, accumulated in double.
template <typename T>
double cross_entropy(const TensorT<T>& logits, std::span<const std::int32_t> labels,
                     TensorT<T>* grad_logits) {
  const std::int64_t n = logits.dim(0);
  const std::int64_t c = logits.dim(1);
  check_contract(labels.size() == static_cast<std::size_t>(n), "cross_entropy: label count");
  if (grad_logits) *grad_logits = TensorT<T>(logits.shape());
  double total = 0.0;
  for (std::int64_t b = 0; b < n; ++b) {
    const T* row = logits.data() + b * c;
    double mx = static_cast<double>(row[0]);
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double denom = 0.0;
    for (std::int64_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    const std::int32_t label = labels[static_cast<std::size_t>(b)];
    check_contract(label >= 0 && label < c, "cross_entropy: label out of range");
    total += std::log(denom) + mx - static_cast<double>(row[label]);
    if (grad_logits) {
      T* grow = grad_logits->data() + b * c;
      for (std::int64_t j = 0; j < c; ++j) {
        double p = std::exp(static_cast<double>(row[j]) - mx) / denom;
        grow[j] = static_cast<T>((p - (j == label ? 1.0 : 0.0)) / static_cast<double>(n));
      }
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace unlearn::nn
