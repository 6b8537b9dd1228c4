#include "coldcarve/network.hpp"

#include <algorithm>
#include <cmath>

namespace coldcarve {

namespace {

std::vector<std::size_t> batch_shape(std::size_t n, const Shape& sample) {
  std::vector<std::size_t> shape{n};
  shape.insert(shape.end(), sample.begin(), sample.end());
  return shape;
}

// Channel count used for PReLU slopes: leading sample dimension.
std::size_t channel_span(const Shape& sample) {
  return sample.size() == 3 ? sample[1] * sample[2] : 1;
}

template <typename T>
void dense_forward(const Tensor<T>& x, std::span<const T> p, std::size_t in, std::size_t out, Tensor<T>& y) {
  const std::size_t n = x.dim(0);
  const T* w = p.data();
  const T* b = p.data() + in * out;
  for (std::size_t s = 0; s < n; ++s) {
    const T* xs = &x[s * in];
    T* ys = &y[s * out];
    for (std::size_t o = 0; o < out; ++o) {
      T acc = b[o];
      const T* wo = w + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xs[i];
      ys[o] = acc;
    }
  }
}

template <typename T>
void dense_backward(const Tensor<T>& x, const Tensor<T>& gy, std::span<const T> p, std::size_t in, std::size_t out,
                    std::span<T> gp, Tensor<T>& gx) {
  const std::size_t n = x.dim(0);
  const T* w = p.data();
  T* gw = gp.data();
  T* gb = gp.data() + in * out;
  for (std::size_t s = 0; s < n; ++s) {
    const T* xs = &x[s * in];
    const T* gys = &gy[s * out];
    T* gxs = &gx[s * in];
    for (std::size_t o = 0; o < out; ++o) {
      const T g = gys[o];
      if (g == T{}) continue;
      gb[o] += g;
      T* gwo = gw + o * in;
      const T* wo = w + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        gwo[i] += g * xs[i];
        gxs[i] += g * wo[i];
      }
    }
  }
}

struct ConvGeometry {
  std::size_t cin, h, w, cout, oh, ow, kh, kw, stride, pad;
};

ConvGeometry conv_geometry(const Conv2DParams& p, const Shape& in, const Shape& out) {
  return {in[0], in[1], in[2], p.out_channels, out[1], out[2], p.kernel_h, p.kernel_w, p.stride, p.padding};
}

template <typename T>
void conv_forward(const Tensor<T>& x, std::span<const T> p, const ConvGeometry& g, Tensor<T>& y) {
  const std::size_t n = x.dim(0);
  const T* w = p.data();
  const T* b = p.data() + g.cout * g.cin * g.kh * g.kw;
  for (std::size_t s = 0; s < n; ++s) {
    const T* xs = &x[s * g.cin * g.h * g.w];
    T* ys = &y[s * g.cout * g.oh * g.ow];
    for (std::size_t co = 0; co < g.cout; ++co) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          T acc = b[co];
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const T* wk = w + ((co * g.cin + ci) * g.kh) * g.kw;
            const T* xc = xs + ci * g.h * g.w;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                acc += wk[ky * g.kw + kx] * xc[iy * g.w + ix];
              }
            }
          }
          ys[(co * g.oh + oy) * g.ow + ox] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& gy, std::span<const T> p, const ConvGeometry& g,
                   std::span<T> gp, Tensor<T>& gx) {
  const std::size_t n = x.dim(0);
  const T* w = p.data();
  T* gw = gp.data();
  T* gb = gp.data() + g.cout * g.cin * g.kh * g.kw;
  for (std::size_t s = 0; s < n; ++s) {
    const T* xs = &x[s * g.cin * g.h * g.w];
    T* gxs = &gx[s * g.cin * g.h * g.w];
    const T* gys = &gy[s * g.cout * g.oh * g.ow];
    for (std::size_t co = 0; co < g.cout; ++co) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const T go = gys[(co * g.oh + oy) * g.ow + ox];
          if (go == T{}) continue;
          gb[co] += go;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const std::size_t wbase = ((co * g.cin + ci) * g.kh) * g.kw;
            const std::size_t xbase = ci * g.h * g.w;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                const std::size_t xi = xbase + iy * g.w + ix;
                gw[wbase + ky * g.kw + kx] += go * xs[xi];
                gxs[xi] += go * w[wbase + ky * g.kw + kx];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void maxpool_forward(const Tensor<T>& x, const MaxPool2DParams& p, const Shape& in, const Shape& out, Tensor<T>& y,
                     std::vector<std::size_t>* argmax) {
  const std::size_t n = x.dim(0), c = in[0], h = in[1], w = in[2], oh = out[1], ow = out[2];
  if (argmax) argmax->assign(y.size(), 0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::size_t base = ((s * c + ch) * h + oy * p.stride) * w + ox * p.stride;
          std::size_t best = base;
          for (std::size_t ky = 0; ky < p.kernel; ++ky)
            for (std::size_t kx = 0; kx < p.kernel; ++kx) {
              const std::size_t idx = base + ky * w + kx;
              if (x[idx] > x[best]) best = idx;
            }
          const T best_value = x[best];
          const std::size_t oidx = ((s * c + ch) * oh + oy) * ow + ox;
          y[oidx] = best_value;
          if (argmax) (*argmax)[oidx] = best;
        }
}

template <typename T>
void softmax_rows(const Tensor<T>& x, Tensor<T>& y) {
  const std::size_t n = x.dim(0), k = x.row_size();
  for (std::size_t s = 0; s < n; ++s) {
    const T* xs = &x[s * k];
    T* ys = &y[s * k];
    const T m = *std::max_element(xs, xs + k);
    T sum{};
    for (std::size_t i = 0; i < k; ++i) {
      ys[i] = std::exp(xs[i] - m);
      sum += ys[i];
    }
    for (std::size_t i = 0; i < k; ++i) ys[i] /= sum;
  }
}

}  // namespace

template <typename T>
Network<T>::Network(IRModel spec) : spec_(std::move(spec)) {
  spec_.validate();
  shapes_ = spec_.infer_shapes();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& layer = spec_.layers[i];
    const std::size_t total = layer_param_count(layer, shapes_[i].input);
    if (total == 0) continue;
    ParamSlice slice{i, offset, total, 0};
    if (layer.kind == LayerKind::Dense) slice.bias_count = std::get<DenseParams>(layer.params).units;
    if (layer.kind == LayerKind::Conv2D) slice.bias_count = std::get<Conv2DParams>(layer.params).out_channels;
    slice.weight_count = total - slice.bias_count;
    slices_.push_back(slice);
    offset += total;
  }
  params_.assign(offset, T{});
}

template <typename T>
Network<T>::Network(IRModel spec, std::vector<T> parameters) : Network(std::move(spec)) {
  set_parameters(parameters);
}

template <typename T>
void Network<T>::set_parameters(std::span<const T> values) {
  if (values.size() != params_.size())
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(params_.size()) + " parameters, got " +
                                              std::to_string(values.size()));
  std::copy(values.begin(), values.end(), params_.begin());
}

template <typename T>
std::span<const T> Network<T>::layer_parameters(std::size_t layer) const {
  for (const auto& s : slices_)
    if (s.layer == layer) return std::span<const T>(params_).subspan(s.offset, s.size());
  return {};
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& s : slices_) {
    const auto& layer = spec_.layers[s.layer];
    const auto& in = shapes_[s.layer].input;
    if (layer.kind == LayerKind::PReLU) {
      std::fill_n(params_.begin() + s.offset, s.size(), T(0.25));
      continue;
    }
    std::size_t fan_in = shape_size(in);
    if (layer.kind == LayerKind::Conv2D) {
      const auto& p = std::get<Conv2DParams>(layer.params);
      fan_in = p.kernel_h * p.kernel_w * in[0];
    }
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < s.weight_count; ++i) params_[s.offset + i] = static_cast<T>(limit * dist(rng));
    std::fill_n(params_.begin() + s.offset + s.weight_count, s.bias_count, T{});
  }
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, ForwardCache<T>* cache, std::mt19937_64* dropout_rng) const {
  const auto& first = shapes_.front().output;
  if (x.rank() != first.size() + 1 || !std::equal(first.begin(), first.end(), x.shape().begin() + 1))
    throw Error(ErrorCode::ShapeMismatch, "input batch does not match the Input layer shape");
  const std::size_t n = x.dim(0);
  if (cache) {
    cache->inputs.assign(spec_.layers.size(), Tensor<T>{});
    cache->argmax.assign(spec_.layers.size(), {});
    cache->dropout_masks.assign(spec_.layers.size(), {});
  }

  Tensor<T> current = x;
  std::size_t slice_index = 0;
  for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
    const auto& layer = spec_.layers[li];
    const auto& in = shapes_[li].input;
    const auto& out = shapes_[li].output;
    if (cache) cache->inputs[li] = current;
    if (layer.kind == LayerKind::Input) continue;

    std::span<const T> p;
    if (slice_index < slices_.size() && slices_[slice_index].layer == li) {
      p = std::span<const T>(params_).subspan(slices_[slice_index].offset, slices_[slice_index].size());
      ++slice_index;
    }

    Tensor<T> next(batch_shape(n, out));
    switch (layer.kind) {
      case LayerKind::Dense: dense_forward(current, p, in[0], out[0], next); break;
      case LayerKind::Conv2D:
        conv_forward(current, p, conv_geometry(std::get<Conv2DParams>(layer.params), in, out), next);
        break;
      case LayerKind::MaxPool2D:
        maxpool_forward(current, std::get<MaxPool2DParams>(layer.params), in, out, next,
                        cache ? &cache->argmax[li] : nullptr);
        break;
      case LayerKind::ReLU:
        for (std::size_t i = 0; i < next.size(); ++i) next[i] = current[i] > T{} ? current[i] : T{};
        break;
      case LayerKind::PReLU: {
        const std::size_t span = channel_span(in), channels = in[0], per_sample = shape_size(in);
        for (std::size_t i = 0; i < next.size(); ++i) {
          const std::size_t c = (i % per_sample) / span % channels;
          next[i] = current[i] > T{} ? current[i] : p[c] * current[i];
        }
        break;
      }
      case LayerKind::Dropout: {
        const float rate = std::get<DropoutParams>(layer.params).rate;
        if (!training_ || !dropout_rng || rate == 0.0f) {
          next = current;
          next.reshape(batch_shape(n, out));
          break;
        }
        std::bernoulli_distribution keep(1.0 - rate);
        const T scale = T(1) / T(1.0 - rate);
        std::vector<T> mask(current.size());
        for (std::size_t i = 0; i < current.size(); ++i) {
          mask[i] = keep(*dropout_rng) ? scale : T{};
          next[i] = current[i] * mask[i];
        }
        if (cache) cache->dropout_masks[li] = std::move(mask);
        break;
      }
      case LayerKind::Flatten:
        next = current;
        next.reshape(batch_shape(n, out));
        break;
      case LayerKind::Softmax: softmax_rows(current, next); break;
      case LayerKind::Input: break;
    }
    current = std::move(next);
  }
  if (cache) cache->output = current;
  return current;
}

template <typename T>
Gradients<T> Network<T>::backward_range(const ForwardCache<T>& cache, Tensor<T> grad, std::size_t last_layer) const {
  if (cache.inputs.size() != spec_.layers.size())
    throw Error(ErrorCode::ShapeMismatch, "backward called without a matching forward cache");
  Gradients<T> result;
  result.params.assign(params_.size(), T{});

  for (std::size_t li = last_layer + 1; li-- > 1;) {
    const auto& layer = spec_.layers[li];
    const auto& in = shapes_[li].input;
    const auto& out = shapes_[li].output;
    const Tensor<T>& x = cache.inputs[li];
    const std::size_t n = x.dim(0);
    if (grad.size() != n * shape_size(out)) throw Error(ErrorCode::ShapeMismatch, "gradient shape mismatch");

    std::span<const T> p;
    std::span<T> gp;
    for (const auto& s : slices_)
      if (s.layer == li) {
        p = std::span<const T>(params_).subspan(s.offset, s.size());
        gp = std::span<T>(result.params).subspan(s.offset, s.size());
      }

    Tensor<T> gx(batch_shape(n, in));
    switch (layer.kind) {
      case LayerKind::Dense: dense_backward(x, grad, p, in[0], out[0], gp, gx); break;
      case LayerKind::Conv2D:
        conv_backward(x, grad, p, conv_geometry(std::get<Conv2DParams>(layer.params), in, out), gp, gx);
        break;
      case LayerKind::MaxPool2D: {
        const auto& argmax = cache.argmax[li];
        for (std::size_t i = 0; i < grad.size(); ++i) gx[argmax[i]] += grad[i];
        break;
      }
      case LayerKind::ReLU:
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = x[i] > T{} ? grad[i] : T{};
        break;
      case LayerKind::PReLU: {
        const std::size_t span = channel_span(in), channels = in[0], per_sample = shape_size(in);
        for (std::size_t i = 0; i < gx.size(); ++i) {
          const std::size_t c = (i % per_sample) / span % channels;
          if (x[i] > T{}) {
            gx[i] = grad[i];
          } else {
            gx[i] = p[c] * grad[i];
            gp[c] += grad[i] * x[i];
          }
        }
        break;
      }
      case LayerKind::Dropout: {
        const auto& mask = cache.dropout_masks[li];
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = mask.empty() ? grad[i] : grad[i] * mask[i];
        break;
      }
      case LayerKind::Flatten:
        std::copy(grad.values().begin(), grad.values().end(), gx.values().begin());
        break;
      case LayerKind::Softmax: {
        // Recompute the probabilities from the cached logits.
        Tensor<T> y(x.shape());
        softmax_rows(x, y);
        const std::size_t k = x.row_size();
        for (std::size_t s = 0; s < n; ++s) {
          T dot{};
          for (std::size_t i = 0; i < k; ++i) dot += grad[s * k + i] * y[s * k + i];
          for (std::size_t i = 0; i < k; ++i) gx[s * k + i] = y[s * k + i] * (grad[s * k + i] - dot);
        }
        break;
      }
      case LayerKind::Input: break;
    }
    grad = std::move(gx);
  }
  result.input = std::move(grad);
  return result;
}

template <typename T>
Gradients<T> Network<T>::backward(const ForwardCache<T>& cache, const Tensor<T>& grad_output) const {
  return backward_range(cache, grad_output, spec_.layers.size() - 1);
}

template <typename T>
Gradients<T> Network<T>::backward_from_logits(const ForwardCache<T>& cache, const Tensor<T>& grad_logits) const {
  if (spec_.layers.back().kind != LayerKind::Softmax)
    throw Error(ErrorCode::ShapeMismatch, "backward_from_logits requires a final Softmax layer");
  return backward_range(cache, grad_logits, spec_.layers.size() - 2);
}

template <typename T>
std::vector<std::size_t> Network<T>::predict_classes(const Tensor<T>& x) const {
  return argmax_rows(forward(x));
}

template <typename T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& t) {
  std::vector<std::size_t> out(t.dim(0));
  for (std::size_t s = 0; s < out.size(); ++s) {
    const auto row = t.row(s);
    out[s] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

template class Network<float>;
template class Network<double>;
template std::vector<std::size_t> argmax_rows(const Tensor<float>&);
template std::vector<std::size_t> argmax_rows(const Tensor<double>&);

}  // namespace coldcarve
