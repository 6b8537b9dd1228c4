#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "coldcarve/model_ir.hpp"
#include "coldcarve/tensor.hpp"

namespace coldcarve {

// Where one layer's parameters live inside the flat parameter vector. The
// flat order is the weight-blob order: layer by layer, weights then biases.
struct ParamSlice {
  std::size_t layer = 0;
  std::size_t offset = 0;
  std::size_t weight_count = 0;
  std::size_t bias_count = 0;
  std::size_t size() const { return weight_count + bias_count; }
};

// Per-layer activations recorded by forward() for a subsequent backward().
template <typename T>
struct ForwardCache {
  std::vector<Tensor<T>> inputs;                   // input of each layer
  std::vector<std::vector<std::size_t>> argmax;    // MaxPool2D selections
  std::vector<std::vector<T>> dropout_masks;       // scaled keep masks
  Tensor<T> output;
};

template <typename T>
struct Gradients {
  std::vector<T> params;  // same layout as Network::parameters()
  Tensor<T> input;
};

// Executable network: an IRModel plus its flat parameter vector.
template <typename T>
class Network {
 public:
  Network() = default;
  explicit Network(IRModel spec);
  Network(IRModel spec, std::vector<T> parameters);

  const IRModel& spec() const { return spec_; }
  const std::vector<ParamSlice>& slices() const { return slices_; }
  const std::vector<LayerShapes>& shapes() const { return shapes_; }

  std::span<const T> parameters() const { return params_; }
  std::span<T> parameters() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }
  void set_parameters(std::span<const T> values);

  std::span<const T> layer_parameters(std::size_t layer) const;

  bool training() const { return training_; }
  void set_training(bool on) { training_ = on; }

  // He-style uniform fan-in initialisation; biases zero, PReLU slopes 0.25.
  void initialize(std::uint64_t seed);

  // Runs the network on a batch [N, sample dims...]. Dropout is active only
  // when training() is set and a generator is supplied.
  Tensor<T> forward(const Tensor<T>& x, ForwardCache<T>* cache = nullptr,
                    std::mt19937_64* dropout_rng = nullptr) const;

  // Backpropagates dL/d(output) through every layer.
  Gradients<T> backward(const ForwardCache<T>& cache, const Tensor<T>& grad_output) const;

  // Backpropagates dL/d(logits), i.e. starting below a final Softmax layer.
  Gradients<T> backward_from_logits(const ForwardCache<T>& cache, const Tensor<T>& grad_logits) const;

  std::vector<std::size_t> predict_classes(const Tensor<T>& x) const;

  template <typename U>
  Network<U> cast() const {
    Network<U> out(spec_, std::vector<U>(params_.begin(), params_.end()));
    out.set_training(training_);
    return out;
  }

 private:
  Gradients<T> backward_range(const ForwardCache<T>& cache, Tensor<T> grad, std::size_t last_layer) const;

  IRModel spec_;
  std::vector<LayerShapes> shapes_;
  std::vector<ParamSlice> slices_;
  std::vector<T> params_;
  bool training_ = false;
};

extern template class Network<float>;
extern template class Network<double>;

// Index of the largest entry in each row of a [N, K] tensor.
template <typename T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& t);

}  // namespace coldcarve
