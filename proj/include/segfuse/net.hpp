#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "segfuse/grid.hpp"
#include "segfuse/rng.hpp"

namespace segfuse {

struct UNetConfig {
  int in_channels = 8;
  int depth = 3;
  int base_width = 16;
  int conv_per_block = 2;
  std::string activation = "relu";  // hidden layers; the output squashing is sigmoid
};

void validate_unet_config(const UNetConfig& cfg);

template <class T>
struct ParamView {
  std::string name;
  std::vector<int> shape;
  T* value;
  T* grad;
  size_t count;
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// k x k convolution, stride 1, same padding, optional fused ReLU.
// Forward/backward are im2col + GEMM. Gradients accumulate until zeroed.
template <class T>
struct Conv2d {
  int in_ch = 0, out_ch = 0, k = 3, pad = 1;
  bool relu = true;
  bool need_input_grad = true;
  std::vector<T> w, b, gw, gb;

  // caches from the last forward
  int h = 0, wd = 0;
  std::vector<T> cols;  // (in_ch*k*k) x (h*w)
  std::vector<T> out;   // out_ch x h x w, post-activation

  Conv2d() = default;
  Conv2d(int in, int on, int kernel, bool relu_)
      : in_ch(in), out_ch(on), k(kernel), pad(kernel / 2), relu(relu_) {
    w.assign(size_t(out_ch) * in_ch * k * k, T(0));
    b.assign(size_t(out_ch), T(0));
    gw.assign(w.size(), T(0));
    gb.assign(b.size(), T(0));
  }

  void im2col(const T* x, int hh, int ww, std::vector<T>& dst) const {
    const size_t plane = size_t(hh) * ww;
    dst.assign(size_t(in_ch) * k * k * plane, T(0));
    size_t q = 0;
    for (int ic = 0; ic < in_ch; ++ic) {
      const T* src = x + size_t(ic) * plane;
      for (int kr = 0; kr < k; ++kr) {
        for (int kc = 0; kc < k; ++kc, ++q) {
          T* row = dst.data() + q * plane;
          for (int r = 0; r < hh; ++r) {
            int sr = r + kr - pad;
            if (sr < 0 || sr >= hh) continue;
            int c0 = std::max(0, pad - kc);
            int c1 = std::min(ww, ww + pad - kc);
            const T* s = src + size_t(sr) * ww + (c0 + kc - pad);
            T* d = row + size_t(r) * ww + c0;
            for (int c = c0; c < c1; ++c) *d++ = *s++;
          }
        }
      }
    }
  }

  Stack<T> forward(const Stack<T>& x) {
    h = x.h;
    wd = x.w;
    const size_t plane = size_t(h) * wd;
    im2col(x.v.data(), h, wd, cols);
    const int kk = in_ch * k * k;
    Stack<T> y(out_ch, h, wd);
    ConstMatMap<T> wm(w.data(), out_ch, kk);
    ConstMatMap<T> cm(cols.data(), kk, Eigen::Index(plane));
    MatMap<T> ym(y.v.data(), out_ch, Eigen::Index(plane));
    ym.noalias() = wm * cm;
    for (int oc = 0; oc < out_ch; ++oc) {
      T* row = y.channel(oc);
      T bias = b[size_t(oc)];
      if (relu) {
        for (size_t i = 0; i < plane; ++i) {
          T v = row[i] + bias;
          row[i] = v > T(0) ? v : T(0);
        }
      } else {
        for (size_t i = 0; i < plane; ++i) row[i] += bias;
      }
    }
    out = y.v;
    return y;
  }

  Stack<T> backward(Stack<T> gout) {
    const size_t plane = size_t(h) * wd;
    const int kk = in_ch * k * k;
    if (relu) {
      for (size_t i = 0; i < gout.v.size(); ++i)
        if (out[i] <= T(0)) gout.v[i] = T(0);
    }
    for (int oc = 0; oc < out_ch; ++oc) {
      const T* row = gout.channel(oc);
      T s = T(0);
      for (size_t i = 0; i < plane; ++i) s += row[i];
      gb[size_t(oc)] += s;
    }
    ConstMatMap<T> gm(gout.v.data(), out_ch, Eigen::Index(plane));
    ConstMatMap<T> cm(cols.data(), kk, Eigen::Index(plane));
    MatMap<T> gwm(gw.data(), out_ch, kk);
    gwm.noalias() += gm * cm.transpose();

    Stack<T> gin;
    if (need_input_grad) {
      std::vector<T> gcols(size_t(kk) * plane);
      MatMap<T> gc(gcols.data(), kk, Eigen::Index(plane));
      ConstMatMap<T> wm(w.data(), out_ch, kk);
      gc.noalias() = wm.transpose() * gm;
      gin = Stack<T>(in_ch, h, wd, T(0));
      size_t q = 0;
      for (int ic = 0; ic < in_ch; ++ic) {
        T* dst = gin.channel(ic);
        for (int kr = 0; kr < k; ++kr) {
          for (int kc = 0; kc < k; ++kc, ++q) {
            const T* row = gcols.data() + q * plane;
            for (int r = 0; r < h; ++r) {
              int sr = r + kr - pad;
              if (sr < 0 || sr >= h) continue;
              int c0 = std::max(0, pad - kc);
              int c1 = std::min(wd, wd + pad - kc);
              T* d = dst + size_t(sr) * wd + (c0 + kc - pad);
              const T* s = row + size_t(r) * wd + c0;
              for (int c = c0; c < c1; ++c) *d++ += *s++;
            }
          }
        }
      }
    }
    return gin;
  }
};

// 2x2 max pooling, stride 2. Caches argmax offsets for the backward scatter.
template <class T>
struct MaxPool2d {
  int ch = 0, h = 0, w = 0;  // input dims from last forward
  std::vector<uint32_t> argmax;

  Stack<T> forward(const Stack<T>& x) {
    ch = x.c;
    h = x.h;
    w = x.w;
    Stack<T> y(ch, h / 2, w / 2);
    argmax.resize(y.v.size());
    size_t oi = 0;
    for (int c = 0; c < ch; ++c) {
      const T* src = x.channel(c);
      for (int r = 0; r + 1 < h; r += 2) {
        for (int col = 0; col + 1 < w; col += 2, ++oi) {
          size_t i00 = size_t(r) * w + col;
          size_t best = i00;
          T v = src[i00];
          if (src[i00 + 1] > v) { v = src[i00 + 1]; best = i00 + 1; }
          if (src[i00 + w] > v) { v = src[i00 + w]; best = i00 + w; }
          if (src[i00 + w + 1] > v) { v = src[i00 + w + 1]; best = i00 + w + 1; }
          y.v[oi] = v;
          argmax[oi] = uint32_t(size_t(c) * h * w + best);
        }
      }
    }
    return y;
  }

  Stack<T> backward(const Stack<T>& gout) {
    Stack<T> gin(ch, h, w, T(0));
    for (size_t i = 0; i < gout.v.size(); ++i) gin.v[argmax[i]] += gout.v[i];
    return gin;
  }
};

// Transposed 2x2 convolution, stride 2 (learned upsampling).
// Weight layout: [in_ch][out_ch][2][2].
template <class T>
struct ConvTranspose2d {
  int in_ch = 0, out_ch = 0;
  std::vector<T> w, b, gw, gb;
  Stack<T> input;  // cached

  ConvTranspose2d() = default;
  ConvTranspose2d(int in, int on) : in_ch(in), out_ch(on) {
    w.assign(size_t(in_ch) * out_ch * 4, T(0));
    b.assign(size_t(out_ch), T(0));
    gw.assign(w.size(), T(0));
    gb.assign(b.size(), T(0));
  }

  Stack<T> forward(const Stack<T>& x) {
    input = x;
    Stack<T> y(out_ch, x.h * 2, x.w * 2);
    for (int oc = 0; oc < out_ch; ++oc) {
      T* dst = y.channel(oc);
      T bias = b[size_t(oc)];
      for (size_t i = 0; i < y.plane(); ++i) dst[i] = bias;
    }
    for (int ic = 0; ic < in_ch; ++ic) {
      const T* src = x.channel(ic);
      for (int oc = 0; oc < out_ch; ++oc) {
        const T* wp = w.data() + (size_t(ic) * out_ch + oc) * 4;
        T* dst = y.channel(oc);
        for (int r = 0; r < x.h; ++r) {
          const T* srow = src + size_t(r) * x.w;
          T* d0 = dst + size_t(2 * r) * y.w;
          T* d1 = d0 + y.w;
          for (int c = 0; c < x.w; ++c) {
            T v = srow[c];
            d0[2 * c] += wp[0] * v;
            d0[2 * c + 1] += wp[1] * v;
            d1[2 * c] += wp[2] * v;
            d1[2 * c + 1] += wp[3] * v;
          }
        }
      }
    }
    return y;
  }

  Stack<T> backward(const Stack<T>& gout) {
    const Stack<T>& x = input;
    for (int oc = 0; oc < out_ch; ++oc) {
      const T* row = gout.channel(oc);
      T s = T(0);
      for (size_t i = 0; i < gout.plane(); ++i) s += row[i];
      gb[size_t(oc)] += s;
    }
    Stack<T> gin(in_ch, x.h, x.w, T(0));
    for (int ic = 0; ic < in_ch; ++ic) {
      const T* src = x.channel(ic);
      T* gi = gin.channel(ic);
      for (int oc = 0; oc < out_ch; ++oc) {
        const T* go = gout.channel(oc);
        T* gwp = gw.data() + (size_t(ic) * out_ch + oc) * 4;
        const T* wp = w.data() + (size_t(ic) * out_ch + oc) * 4;
        T acc0 = T(0), acc1 = T(0), acc2 = T(0), acc3 = T(0);
        for (int r = 0; r < x.h; ++r) {
          const T* srow = src + size_t(r) * x.w;
          const T* g0 = go + size_t(2 * r) * gout.w;
          const T* g1 = g0 + gout.w;
          T* girow = gi + size_t(r) * x.w;
          for (int c = 0; c < x.w; ++c) {
            T v = srow[c];
            T a = g0[2 * c], bb = g0[2 * c + 1], cc = g1[2 * c], dd = g1[2 * c + 1];
            acc0 += a * v;
            acc1 += bb * v;
            acc2 += cc * v;
            acc3 += dd * v;
            girow[c] += wp[0] * a + wp[1] * bb + wp[2] * cc + wp[3] * dd;
          }
        }
        gwp[0] += acc0;
        gwp[1] += acc1;
        gwp[2] += acc2;
        gwp[3] += acc3;
      }
    }
    return gin;
  }
};

}  // namespace detail

// Encoder-decoder segmenter with skip connections: per level conv blocks and
// 2x2 max pooling on the way down, transposed-conv upsampling with encoder
// features concatenated back in on the way up, then a 1x1 conv and a sigmoid.
// Channel order inside the decoder concat: upsampled features first, then the
// skip. Instances are not thread-safe (forward caches activations).
template <class T>
struct UNetT {
  UNetConfig cfg;
  std::vector<std::vector<detail::Conv2d<T>>> enc;
  std::vector<detail::MaxPool2d<T>> pools;
  std::vector<detail::Conv2d<T>> bottleneck;
  std::vector<detail::ConvTranspose2d<T>> ups;     // index by target level
  std::vector<std::vector<detail::Conv2d<T>>> dec;
  detail::Conv2d<T> head;

  // caches
  std::vector<Stack<T>> skips;
  Grid<T> prob;

  explicit UNetT(const UNetConfig& config) : cfg(config) {
    validate_unet_config(cfg);
    int in = cfg.in_channels;
    for (int l = 0; l < cfg.depth; ++l) {
      int width = cfg.base_width << l;
      std::vector<detail::Conv2d<T>> block;
      for (int i = 0; i < cfg.conv_per_block; ++i) {
        block.emplace_back(i == 0 ? in : width, width, 3, true);
        if (l == 0 && i == 0) block.back().need_input_grad = false;
      }
      enc.push_back(std::move(block));
      pools.emplace_back();
      in = width;
    }
    int bottom = cfg.base_width << cfg.depth;
    for (int i = 0; i < cfg.conv_per_block; ++i)
      bottleneck.emplace_back(i == 0 ? in : bottom, bottom, 3, true);
    ups.resize(cfg.depth);
    dec.resize(cfg.depth);
    for (int l = cfg.depth - 1; l >= 0; --l) {
      int width = cfg.base_width << l;
      ups[l] = detail::ConvTranspose2d<T>(width * 2, width);
      std::vector<detail::Conv2d<T>> block;
      for (int i = 0; i < cfg.conv_per_block; ++i)
        block.emplace_back(i == 0 ? width * 2 : width, width, 3, true);
      dec[l] = std::move(block);
    }
    head = detail::Conv2d<T>(cfg.base_width, 1, 1, false);
  }

  Grid<T> forward(const Stack<T>& x) {
    if (x.c != cfg.in_channels)
      throw Error("unet forward: input has " + std::to_string(x.c) +
                  " channels, config expects " + std::to_string(cfg.in_channels));
    int div = 1 << cfg.depth;
    if (x.h % div != 0 || x.w % div != 0)
      throw Error("unet forward: input " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                  " not divisible by 2^depth = " + std::to_string(div));
    for (const T& v : x.v)
      if (!std::isfinite(double(v))) throw Error("unet forward: non-finite input value");

    Stack<T> a = x;
    skips.assign(size_t(cfg.depth), {});
    for (int l = 0; l < cfg.depth; ++l) {
      for (auto& conv : enc[l]) a = conv.forward(a);
      skips[size_t(l)] = a;
      a = pools[size_t(l)].forward(a);
    }
    for (auto& conv : bottleneck) a = conv.forward(a);
    for (int l = cfg.depth - 1; l >= 0; --l) {
      Stack<T> u = ups[size_t(l)].forward(a);
      const Stack<T>& skip = skips[size_t(l)];
      Stack<T> cat(u.c + skip.c, u.h, u.w);
      std::copy(u.v.begin(), u.v.end(), cat.v.begin());
      std::copy(skip.v.begin(), skip.v.end(), cat.v.begin() + std::ptrdiff_t(u.v.size()));
      a = std::move(cat);
      for (auto& conv : dec[size_t(l)]) a = conv.forward(a);
    }
    Stack<T> z = head.forward(a);
    prob = Grid<T>(z.h, z.w);
    for (size_t i = 0; i < prob.v.size(); ++i)
      prob.v[i] = T(1) / (T(1) + std::exp(-z.v[i]));
    return prob;
  }

  // grad is d(loss)/d(probability); accumulates parameter gradients.
  void backward(const Grid<T>& grad) {
    Stack<T> g(1, prob.h, prob.w);
    for (size_t i = 0; i < g.v.size(); ++i) {
      T y = prob.v[i];
      g.v[i] = grad.v[i] * y * (T(1) - y);
    }
    g = head.backward(std::move(g));
    for (int l = 0; l <= cfg.depth - 1; ++l) {
      for (auto it = dec[size_t(l)].rbegin(); it != dec[size_t(l)].rend(); ++it)
        g = it->backward(std::move(g));
      int width = cfg.base_width << l;
      Stack<T> gu(width, g.h, g.w);
      Stack<T> gskip(width, g.h, g.w);
      std::copy(g.v.begin(), g.v.begin() + std::ptrdiff_t(gu.v.size()), gu.v.begin());
      std::copy(g.v.begin() + std::ptrdiff_t(gu.v.size()), g.v.end(), gskip.v.begin());
      skips[size_t(l)] = std::move(gskip);  // reuse slot for the pending skip grad
      g = ups[size_t(l)].backward(gu);
    }
    // g now sits below the deepest pool; walk back up the encoder.
    for (auto it = bottleneck.rbegin(); it != bottleneck.rend(); ++it)
      g = it->backward(std::move(g));
    for (int l = cfg.depth - 1; l >= 0; --l) {
      g = pools[size_t(l)].backward(g);
      const Stack<T>& pending = skips[size_t(l)];
      for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += pending.v[i];
      for (auto it = enc[size_t(l)].rbegin(); it != enc[size_t(l)].rend(); ++it)
        g = it->backward(std::move(g));
    }
  }

  std::vector<ParamView<T>> params() {
    std::vector<ParamView<T>> out;
    auto add_conv = [&out](detail::Conv2d<T>& c, const std::string& name) {
      out.push_back({name + ".weight", {c.out_ch, c.in_ch, c.k, c.k}, c.w.data(),
                     c.gw.data(), c.w.size()});
      out.push_back({name + ".bias", {c.out_ch}, c.b.data(), c.gb.data(), c.b.size()});
    };
    for (int l = 0; l < cfg.depth; ++l)
      for (int i = 0; i < cfg.conv_per_block; ++i)
        add_conv(enc[size_t(l)][size_t(i)], "enc" + std::to_string(l) + ".conv" + std::to_string(i));
    for (int i = 0; i < cfg.conv_per_block; ++i)
      add_conv(bottleneck[size_t(i)], "bottleneck.conv" + std::to_string(i));
    for (int l = cfg.depth - 1; l >= 0; --l) {
      auto& up = ups[size_t(l)];
      std::string name = "up" + std::to_string(l);
      out.push_back({name + ".weight", {up.in_ch, up.out_ch, 2, 2}, up.w.data(),
                     up.gw.data(), up.w.size()});
      out.push_back({name + ".bias", {up.out_ch}, up.b.data(), up.gb.data(), up.b.size()});
      for (int i = 0; i < cfg.conv_per_block; ++i)
        add_conv(dec[size_t(l)][size_t(i)], "dec" + std::to_string(l) + ".conv" + std::to_string(i));
    }
    add_conv(head, "out");
    return out;
  }
};

// Interface shared by the U-Net and the 1x1 linear fuser so the trainer and
// the fusion code treat them uniformly. Float precision.
struct SegModel {
  uint64_t init_seed = 0;

  virtual ~SegModel() = default;
  virtual std::string kind() const = 0;
  virtual int in_channels() const = 0;
  virtual SegMap forward(const Stack<float>& x) = 0;
  virtual void backward(const SegMap& grad) = 0;
  virtual std::vector<ParamView<float>> params() = 0;
};

struct UNetModel final : SegModel {
  UNetT<float> net;
  explicit UNetModel(const UNetConfig& cfg) : net(cfg) {}
  std::string kind() const override { return "unet"; }
  int in_channels() const override { return net.cfg.in_channels; }
  SegMap forward(const Stack<float>& x) override { return net.forward(x); }
  void backward(const SegMap& grad) override { net.backward(grad); }
  std::vector<ParamView<float>> params() override { return net.params(); }
};

// Per-pixel weighted blend of m maps: sigmoid(sum_i w_i * map_i + b).
// Equivalent to a 1x1 convolution with m input channels.
struct LinearCombiner final : SegModel {
  int members = 0;
  std::vector<float> w, gw;
  float b = 0.0f, gb = 0.0f;
  Stack<float> input;
  SegMap prob;

  explicit LinearCombiner(int m);
  std::string kind() const override { return "linear"; }
  int in_channels() const override { return members; }
  SegMap forward_logits(const Stack<float>& x);
  SegMap forward(const Stack<float>& x) override;
  void backward(const SegMap& grad) override;
  std::vector<ParamView<float>> params() override;
};

std::unique_ptr<SegModel> build_unet(const UNetConfig& cfg);
std::unique_ptr<SegModel> build_linear_combiner(int members);

// Uniform [-0.05, +0.05] draw for every trainable scalar, in parameter order.
template <class T>
void init_weights_uniform(std::vector<ParamView<T>> views, uint64_t seed) {
  Rng rng(seed);
  for (auto& view : views)
    for (size_t i = 0; i < view.count; ++i) view.value[i] = T(rng.uniform(-0.05, 0.05));
}

void init_weights(SegModel& model, uint64_t seed);

size_t count_params(SegModel& model);

void zero_grads(SegModel& model);

// Checkpoint directory: weights.json (kind, config, seed, tensor table) +
// weights.bin (float32 LE tensors concatenated in table order).
void save_checkpoint(SegModel& model, const std::filesystem::path& dir);
std::unique_ptr<SegModel> load_checkpoint(const std::filesystem::path& dir);

}  // namespace segfuse
