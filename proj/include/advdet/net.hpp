#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "advdet/image.hpp"
#include "advdet/rng.hpp"

namespace advdet {

enum class LayerKind : std::uint32_t { conv2d = 1, relu = 2, maxpool = 3, flatten = 4, dense = 5, softmax = 6 };

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

/// One layer descriptor. `units` is out_channels for conv2d (3x3, stride 1,
/// zero pad 1), out_features for dense, the window for maxpool (always 2),
/// unused otherwise.
struct LayerSpec {
  LayerKind kind;
  std::uint32_t units = 0;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

inline LayerSpec conv(std::uint32_t out_channels) { return {LayerKind::conv2d, out_channels}; }
inline LayerSpec relu() { return {LayerKind::relu, 0}; }
inline LayerSpec maxpool() { return {LayerKind::maxpool, 2}; }
inline LayerSpec flatten() { return {LayerKind::flatten, 0}; }
inline LayerSpec dense(std::uint32_t out_features) { return {LayerKind::dense, out_features}; }
inline LayerSpec softmax() { return {LayerKind::softmax, 0}; }

/// A feed-forward classifier ending in softmax, with all parameters in one
/// flat store. Conv kernels are laid out [ky][kx][in][out] followed by the
/// bias; dense weights [in][out] followed by the bias.
class NetworkModel {
 public:
  NetworkModel() = default;

  NetworkModel(Shape input_shape, std::vector<LayerSpec> layers) : input_(input_shape), layers_(std::move(layers)) {
    require(input_.size() > 0, errc::invalid_input, "network input shape must be non-empty");
    require(!layers_.empty() && layers_.back().kind == LayerKind::softmax, errc::invalid_input,
            "network must end with a softmax layer");
    Shape cur = input_;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const LayerSpec& l = layers_[i];
      in_shapes_.push_back(cur);
      offsets_.push_back(offset);
      switch (l.kind) {
        case LayerKind::conv2d:
          require(l.units > 0, errc::invalid_input, "conv2d needs out_channels > 0");
          offset += 9 * cur.channels * l.units + l.units;
          cur = {cur.height, cur.width, l.units};
          break;
        case LayerKind::relu:
          break;
        case LayerKind::maxpool:
          require(l.units == 2, errc::invalid_input, "only 2x2 max pooling is supported");
          require(cur.height >= 2 && cur.width >= 2, errc::invalid_input, "maxpool input smaller than 2x2");
          cur = {cur.height / 2, cur.width / 2, cur.channels};
          break;
        case LayerKind::flatten:
          cur = {1, 1, cur.size()};
          break;
        case LayerKind::dense:
          require(l.units > 0, errc::invalid_input, "dense needs out_features > 0");
          offset += cur.size() * l.units + l.units;
          cur = {1, 1, l.units};
          break;
        case LayerKind::softmax:
          require(i + 1 == layers_.size(), errc::invalid_input, "softmax may only be the final layer");
          require(i > 0 && layers_[i - 1].kind == LayerKind::dense, errc::invalid_input,
                  "softmax must follow a dense layer");
          break;
        default:
          fail(errc::format, "unknown layer kind " + std::to_string(static_cast<std::uint32_t>(l.kind)));
      }
    }
    output_ = cur;
    param_count_ = offset;
    weights_.assign(param_count_, 0.0);
  }

  const Shape& input_shape() const { return input_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t num_classes() const { return output_.size(); }
  std::size_t param_count() const { return param_count_; }
  const Shape& layer_input_shape(std::size_t i) const { return in_shapes_[i]; }
  Shape layer_output_shape(std::size_t i) const { return i + 1 < layers_.size() ? in_shapes_[i + 1] : output_; }
  std::size_t param_offset(std::size_t i) const { return offsets_[i]; }

  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }

  void set_weights(std::vector<double> w) {
    require(w.size() == param_count_, errc::consistency,
            "weight count " + std::to_string(w.size()) + " != " + std::to_string(param_count_));
    weights_ = std::move(w);
  }

  /// Glorot-uniform kernels in +-sqrt(6/(fan_in+fan_out)); zero biases.
  void init_weights(SeededRng& rng) {
    std::fill(weights_.begin(), weights_.end(), 0.0);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const LayerSpec& l = layers_[i];
      std::size_t fan_in = 0, fan_out = 0;
      if (l.kind == LayerKind::conv2d) {
        fan_in = 9 * in_shapes_[i].channels;
        fan_out = 9 * l.units;
      } else if (l.kind == LayerKind::dense) {
        fan_in = in_shapes_[i].size();
        fan_out = l.units;
      } else {
        continue;
      }
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      const std::size_t n = fan_in * l.units;
      for (std::size_t k = 0; k < n; ++k) weights_[offsets_[i] + k] = rng.next_uniform(-limit, limit);
    }
  }

  friend bool operator==(const NetworkModel& a, const NetworkModel& b) {
    return a.input_ == b.input_ && a.layers_ == b.layers_ && a.weights_ == b.weights_;
  }

 private:
  Shape input_;
  Shape output_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> in_shapes_;
  std::vector<std::size_t> offsets_;
  std::size_t param_count_ = 0;
  std::vector<double> weights_;
};

/// Victim/detector architectures. A and B are small CNNs, C is an MLP.
inline NetworkModel make_architecture(char arch, Shape input, std::uint32_t num_classes) {
  switch (arch) {
    case 'A':
      return NetworkModel(input, {conv(16), relu(), maxpool(), conv(32), relu(), maxpool(), flatten(), dense(128),
                                  relu(), dense(num_classes), softmax()});
    case 'B':
      return NetworkModel(input, {conv(16), relu(), maxpool(), conv(32), relu(), maxpool(), conv(64), relu(),
                                  maxpool(), flatten(), dense(128), relu(), dense(num_classes), softmax()});
    case 'C':
      return NetworkModel(input, {flatten(), dense(256), relu(), dense(128), relu(), dense(num_classes), softmax()});
    default:
      fail(errc::config, std::string("unknown architecture '") + arch + "' (expected A, B or C)");
  }
}

/// Per-call activation buffers. acts[i] is the input of layer i; the last
/// entry holds the softmax output.
struct ForwardTrace {
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<std::uint32_t>> pool_argmax;

  std::span<const double> logits() const { return acts[acts.size() - 2]; }
  std::span<const double> probs() const { return acts.back(); }
};

namespace detail {

inline void conv_forward(const double* in, double* out, const Shape& s, std::size_t cout, const double* w) {
  const std::size_t cin = s.channels;
  const long h = static_cast<long>(s.height), wd = static_cast<long>(s.width);
  const double* bias = w + 9 * cin * cout;
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < wd; ++x) {
      double* o = out + (static_cast<std::size_t>(y * wd + x)) * cout;
      std::copy(bias, bias + cout, o);
      for (long ky = 0; ky < 3; ++ky) {
        const long yy = y + ky - 1;
        if (yy < 0 || yy >= h) continue;
        for (long kx = 0; kx < 3; ++kx) {
          const long xx = x + kx - 1;
          if (xx < 0 || xx >= wd) continue;
          const double* ip = in + static_cast<std::size_t>(yy * wd + xx) * cin;
          const double* wp = w + static_cast<std::size_t>(ky * 3 + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double a = ip[ci];
            if (a == 0.0) continue;
            const double* wr = wp + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += a * wr[co];
          }
        }
      }
    }
  }
}

// Accumulates parameter gradients into gw (if non-null) and writes the input
// gradient into gin (if non-null).
inline void conv_backward(const double* in, const double* gout, const Shape& s, std::size_t cout, const double* w,
                          double* gw, double* gin) {
  const std::size_t cin = s.channels;
  const long h = static_cast<long>(s.height), wd = static_cast<long>(s.width);
  if (gin) std::fill(gin, gin + s.size(), 0.0);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < wd; ++x) {
      const double* g = gout + static_cast<std::size_t>(y * wd + x) * cout;
      if (gw) {
        double* gb = gw + 9 * cin * cout;
        for (std::size_t co = 0; co < cout; ++co) gb[co] += g[co];
      }
      for (long ky = 0; ky < 3; ++ky) {
        const long yy = y + ky - 1;
        if (yy < 0 || yy >= h) continue;
        for (long kx = 0; kx < 3; ++kx) {
          const long xx = x + kx - 1;
          if (xx < 0 || xx >= wd) continue;
          const std::size_t ioff = static_cast<std::size_t>(yy * wd + xx) * cin;
          const std::size_t woff = static_cast<std::size_t>(ky * 3 + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* wr = w + woff + ci * cout;
            if (gin) {
              double acc = 0.0;
              for (std::size_t co = 0; co < cout; ++co) acc += wr[co] * g[co];
              gin[ioff + ci] += acc;
            }
            if (gw) {
              const double a = in[ioff + ci];
              if (a == 0.0) continue;
              double* gwr = gw + woff + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) gwr[co] += a * g[co];
            }
          }
        }
      }
    }
  }
}

inline void dense_forward(const double* in, double* out, std::size_t nin, std::size_t nout, const double* w) {
  const double* bias = w + nin * nout;
  std::copy(bias, bias + nout, out);
  for (std::size_t i = 0; i < nin; ++i) {
    const double a = in[i];
    if (a == 0.0) continue;
    const double* wr = w + i * nout;
    for (std::size_t o = 0; o < nout; ++o) out[o] += a * wr[o];
  }
}

inline void dense_backward(const double* in, const double* gout, std::size_t nin, std::size_t nout, const double* w,
                           double* gw, double* gin) {
  if (gw) {
    double* gb = gw + nin * nout;
    for (std::size_t o = 0; o < nout; ++o) gb[o] += gout[o];
  }
  for (std::size_t i = 0; i < nin; ++i) {
    const double* wr = w + i * nout;
    if (gin) {
      double acc = 0.0;
      for (std::size_t o = 0; o < nout; ++o) acc += wr[o] * gout[o];
      gin[i] = acc;
    }
    if (gw && in[i] != 0.0) {
      double* gwr = gw + i * nout;
      const double a = in[i];
      for (std::size_t o = 0; o < nout; ++o) gwr[o] += a * gout[o];
    }
  }
}

}  // namespace detail

inline void softmax_inplace(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
}

inline ForwardTrace forward_trace(const NetworkModel& m, RasterView x) {
  require(x.shape == m.input_shape(), errc::invalid_input,
          "input shape " + x.shape.str() + " does not match network input " + m.input_shape().str());
  const auto& layers = m.layers();
  const auto& w = m.weights();
  ForwardTrace t;
  t.acts.resize(layers.size() + 1);
  t.pool_argmax.resize(layers.size());
  t.acts[0].assign(x.values.begin(), x.values.end());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Shape in = m.layer_input_shape(i);
    const Shape out = m.layer_output_shape(i);
    const auto& a = t.acts[i];
    auto& b = t.acts[i + 1];
    b.assign(out.size(), 0.0);
    switch (layers[i].kind) {
      case LayerKind::conv2d:
        detail::conv_forward(a.data(), b.data(), in, out.channels, w.data() + m.param_offset(i));
        break;
      case LayerKind::relu:
        for (std::size_t k = 0; k < a.size(); ++k) b[k] = a[k] > 0.0 ? a[k] : 0.0;
        break;
      case LayerKind::maxpool: {
        auto& arg = t.pool_argmax[i];
        arg.assign(out.size(), 0);
        for (std::size_t y = 0; y < out.height; ++y)
          for (std::size_t xx = 0; xx < out.width; ++xx)
            for (std::size_t c = 0; c < out.channels; ++c) {
              std::size_t best = ((2 * y) * in.width + 2 * xx) * in.channels + c;
              for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx) {
                  const std::size_t idx = ((2 * y + dy) * in.width + 2 * xx + dx) * in.channels + c;
                  if (a[idx] > a[best]) best = idx;
                }
              const std::size_t o = (y * out.width + xx) * out.channels + c;
              b[o] = a[best];
              arg[o] = static_cast<std::uint32_t>(best);
            }
        break;
      }
      case LayerKind::flatten:
        b = a;
        break;
      case LayerKind::dense:
        detail::dense_forward(a.data(), b.data(), in.size(), out.size(), w.data() + m.param_offset(i));
        break;
      case LayerKind::softmax:
        softmax_inplace(a, b);
        break;
    }
  }
  return t;
}

/// Class probabilities.
inline std::vector<double> forward(const NetworkModel& m, RasterView x) {
  auto t = forward_trace(m, x);
  return std::move(t.acts.back());
}

/// Argmax with ties going to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::size_t predict(const NetworkModel& m, RasterView x) { return argmax(forward_trace(m, x).logits()); }

/// Backpropagate `grad_logits` (gradient w.r.t. the pre-softmax outputs)
/// through the trace. Parameter gradients are accumulated into `param_grad`
/// when non-null; the input gradient is returned when `want_input` is set.
inline std::vector<double> backward(const NetworkModel& m, const ForwardTrace& t, std::span<const double> grad_logits,
                                    double* param_grad, bool want_input) {
  const auto& layers = m.layers();
  const auto& w = m.weights();
  std::vector<double> g(grad_logits.begin(), grad_logits.end());
  std::vector<double> gin;
  // the softmax layer itself is skipped: callers supply dJ/dlogits
  for (std::size_t li = layers.size() - 1; li-- > 0;) {
    const Shape in = m.layer_input_shape(li);
    const Shape out = m.layer_output_shape(li);
    const bool need_gin = want_input || li > 0;
    const auto& a = t.acts[li];
    double* pg = param_grad ? param_grad + m.param_offset(li) : nullptr;
    switch (layers[li].kind) {
      case LayerKind::conv2d:
        if (!need_gin && !pg) return {};
        gin.assign(need_gin ? in.size() : 0, 0.0);
        detail::conv_backward(a.data(), g.data(), in, out.channels, w.data() + m.param_offset(li), pg,
                              need_gin ? gin.data() : nullptr);
        break;
      case LayerKind::relu:
        gin.assign(in.size(), 0.0);
        for (std::size_t k = 0; k < gin.size(); ++k) gin[k] = a[k] > 0.0 ? g[k] : 0.0;
        break;
      case LayerKind::maxpool: {
        gin.assign(in.size(), 0.0);
        const auto& arg = t.pool_argmax[li];
        for (std::size_t k = 0; k < g.size(); ++k) gin[arg[k]] += g[k];
        break;
      }
      case LayerKind::flatten:
        gin = g;
        break;
      case LayerKind::dense:
        gin.assign(need_gin ? in.size() : 0, 0.0);
        detail::dense_backward(a.data(), g.data(), in.size(), out.size(), w.data() + m.param_offset(li), pg,
                               need_gin ? gin.data() : nullptr);
        break;
      case LayerKind::softmax:
        fail(errc::invalid_input, "softmax inside network body");
    }
    if (!need_gin) return {};
    g.swap(gin);
  }
  return g;
}

struct LossGrad {
  double loss = 0.0;
  FeatureMap input_grad;
};

/// Cross-entropy -log p_y and its exact gradient w.r.t. the input.
inline LossGrad loss_and_input_grad(const NetworkModel& m, RasterView x, std::size_t y) {
  require(y < m.num_classes(), errc::invalid_input, "label " + std::to_string(y) + " out of range");
  const ForwardTrace t = forward_trace(m, x);
  const auto z = t.logits();
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  const double loss = (mx + std::log(sum)) - z[y];
  std::vector<double> gl(t.probs().begin(), t.probs().end());
  gl[y] -= 1.0;
  auto g = backward(m, t, gl, nullptr, true);
  return {loss, FeatureMap(x.shape, std::move(g))};
}

/// Logits plus d(logit_k)/dx for every class k.
struct LogitJacobian {
  std::vector<double> logits;
  std::vector<std::vector<double>> grads;
};

inline LogitJacobian logit_jacobian(const NetworkModel& m, RasterView x) {
  const ForwardTrace t = forward_trace(m, x);
  LogitJacobian j;
  j.logits.assign(t.logits().begin(), t.logits().end());
  std::vector<double> seed(m.num_classes(), 0.0);
  for (std::size_t k = 0; k < m.num_classes(); ++k) {
    seed[k] = 1.0;
    j.grads.push_back(backward(m, t, seed, nullptr, true));
    seed[k] = 0.0;
  }
  return j;
}

/// Output of the first conv layer after its ReLU (if one follows).
inline FeatureMap first_conv_activation(const NetworkModel& m, RasterView x) {
  const auto& layers = m.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind != LayerKind::conv2d) continue;
    const ForwardTrace t = forward_trace(m, x);
    std::size_t idx = i + 1;
    if (i + 1 < layers.size() && layers[i + 1].kind == LayerKind::relu) idx = i + 2;
    return FeatureMap(m.layer_output_shape(idx - 1), t.acts[idx]);
  }
  fail(errc::invalid_input, "network has no conv layer");
}

}  // namespace advdet
