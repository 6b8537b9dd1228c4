#include "coldcarve/model_ir.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <numeric>
#include <set>
#include <string>

#include "coldcarve/error.hpp"

namespace coldcarve {

namespace {

[[noreturn]] void schema_error(const std::string& what) {
  throw Error(ErrorCode::SchemaViolation, what);
}

bool printable_name(std::string_view name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return u >= 0x20 && u <= 0x7e;
  });
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool params_match_kind(LayerKind kind, const LayerParams& params) {
  switch (kind) {
    case LayerKind::Input: return std::holds_alternative<InputParams>(params);
    case LayerKind::Dense: return std::holds_alternative<DenseParams>(params);
    case LayerKind::Conv2D: return std::holds_alternative<Conv2DParams>(params);
    case LayerKind::MaxPool2D: return std::holds_alternative<MaxPool2DParams>(params);
    case LayerKind::Dropout: return std::holds_alternative<DropoutParams>(params);
    case LayerKind::ReLU:
    case LayerKind::PReLU:
    case LayerKind::Flatten:
    case LayerKind::Softmax: return std::holds_alternative<NoParams>(params);
  }
  return false;
}

Shape output_shape_of(const LayerSpec& layer, const Shape& in) {
  const auto where = [&] { return " (layer " + std::to_string(layer.id) + " '" + layer.name + "')"; };
  switch (layer.kind) {
    case LayerKind::Input: {
      const auto& shape = std::get<InputParams>(layer.params).shape;
      if (shape.size() != 1 && shape.size() != 3) schema_error("input rank must be 1 or 3" + where());
      if (shape_size(shape) == 0) schema_error("input has a zero dimension" + where());
      return shape;
    }
    case LayerKind::Dense: {
      const auto& p = std::get<DenseParams>(layer.params);
      if (in.size() != 1) schema_error("Dense expects a rank-1 input" + where());
      if (p.units == 0) schema_error("Dense needs at least one unit" + where());
      return {p.units};
    }
    case LayerKind::Conv2D: {
      const auto& p = std::get<Conv2DParams>(layer.params);
      if (in.size() != 3) schema_error("Conv2D expects a rank-3 input" + where());
      if (p.kernel_h == 0 || p.kernel_w == 0 || p.out_channels == 0 || p.stride == 0)
        schema_error("Conv2D parameters must be positive" + where());
      if (in[1] + 2 * p.padding < p.kernel_h || in[2] + 2 * p.padding < p.kernel_w)
        schema_error("Conv2D kernel larger than padded input" + where());
      return {p.out_channels, (in[1] + 2 * p.padding - p.kernel_h) / p.stride + 1,
              (in[2] + 2 * p.padding - p.kernel_w) / p.stride + 1};
    }
    case LayerKind::MaxPool2D: {
      const auto& p = std::get<MaxPool2DParams>(layer.params);
      if (in.size() != 3) schema_error("MaxPool2D expects a rank-3 input" + where());
      if (p.kernel == 0 || p.stride == 0) schema_error("MaxPool2D parameters must be positive" + where());
      if (in[1] < p.kernel || in[2] < p.kernel) schema_error("MaxPool2D kernel larger than input" + where());
      return {in[0], (in[1] - p.kernel) / p.stride + 1, (in[2] - p.kernel) / p.stride + 1};
    }
    case LayerKind::Dropout: {
      const float rate = std::get<DropoutParams>(layer.params).rate;
      if (!(rate >= 0.0f && rate < 1.0f)) schema_error("dropout rate outside [0,1)" + where());
      return in;
    }
    case LayerKind::ReLU:
    case LayerKind::PReLU: return in;
    case LayerKind::Flatten: return {shape_size(in)};
    case LayerKind::Softmax:
      if (in.size() != 1) schema_error("Softmax expects a rank-1 input" + where());
      return in;
  }
  schema_error("unknown layer kind" + where());
}

}  // namespace

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Input: return "Input";
    case LayerKind::Dense: return "Dense";
    case LayerKind::Conv2D: return "Conv2D";
    case LayerKind::MaxPool2D: return "MaxPool2D";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::PReLU: return "PReLU";
    case LayerKind::Dropout: return "Dropout";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Softmax: return "Softmax";
  }
  return "?";
}

std::optional<LayerKind> kind_from_name(std::string_view name) {
  for (LayerKind kind : kAllLayerKinds)
    if (kind_name(kind) == name) return kind;
  return std::nullopt;
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

int output_port_id(LayerKind kind) { return kind == LayerKind::Input ? 0 : 1; }

std::vector<LayerShapes> IRModel::infer_shapes() const {
  std::vector<LayerShapes> shapes;
  shapes.reserve(layers.size());
  Shape current;
  for (const auto& layer : layers) {
    LayerShapes s;
    if (layer.kind != LayerKind::Input) s.input = current;
    s.output = output_shape_of(layer, current);
    current = s.output;
    shapes.push_back(std::move(s));
  }
  return shapes;
}

Shape IRModel::input_shape() const { return std::get<InputParams>(input_layer().params).shape; }

Shape IRModel::output_shape() const { return infer_shapes().back().output; }

void IRModel::validate() const {
  if (!printable_name(name)) schema_error("model name must be non-empty printable ASCII");
  if (layers.empty()) schema_error("model has no layers");
  if (layers.front().kind != LayerKind::Input) schema_error("first layer must be the Input layer");

  std::set<int> ids;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    if (!ids.insert(layer.id).second) schema_error("duplicate layer id " + std::to_string(layer.id));
    if (!printable_name(layer.name))
      schema_error("layer " + std::to_string(layer.id) + " name must be non-empty printable ASCII");
    if (i > 0 && layer.kind == LayerKind::Input) schema_error("more than one Input layer");
    if (!params_match_kind(layer.kind, layer.params))
      schema_error("parameters do not match layer kind " + std::string(kind_name(layer.kind)));
  }

  if (edges.size() != layers.size() - 1) schema_error("edges do not chain the layers");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Edge& e = edges[i];
    if (!ids.contains(e.from_layer) || !ids.contains(e.to_layer))
      schema_error("edge references an unknown layer");
    const Edge expected{layers[i].id, output_port_id(layers[i].kind), layers[i + 1].id, kInputPortId};
    if (!(e == expected)) schema_error("edge " + std::to_string(i) + " does not follow the layer chain");
  }

  infer_shapes();
}

bool same_architecture(const IRModel& a, const IRModel& b) {
  if (a.layers.size() != b.layers.size() || a.edges != b.edges) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& la = a.layers[i];
    const auto& lb = b.layers[i];
    if (la.id != lb.id || la.kind != lb.kind || !(la.params == lb.params)) return false;
  }
  return true;
}

std::size_t layer_param_count(const LayerSpec& layer, const Shape& input_shape) {
  switch (layer.kind) {
    case LayerKind::Dense: {
      const auto units = std::get<DenseParams>(layer.params).units;
      return shape_size(input_shape) * units + units;
    }
    case LayerKind::Conv2D: {
      const auto& p = std::get<Conv2DParams>(layer.params);
      return p.kernel_h * p.kernel_w * input_shape.at(0) * p.out_channels + p.out_channels;
    }
    case LayerKind::PReLU: return input_shape.at(0);
    default: return 0;
  }
}

std::size_t total_params(const IRModel& model) {
  const auto shapes = model.infer_shapes();
  std::size_t total = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    total += layer_param_count(model.layers[i], shapes[i].input);
  return total;
}

std::vector<Edge> chain_edges(const std::vector<LayerSpec>& layers) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i)
    edges.push_back({layers[i].id, output_port_id(layers[i].kind), layers[i + 1].id, kInputPortId});
  return edges;
}

ModelBuilder::ModelBuilder(std::string name) : kind_counts_(std::size(kAllLayerKinds), 0) {
  model_.name = std::move(name);
}

ModelBuilder& ModelBuilder::add(LayerKind kind, LayerParams params) {
  LayerSpec layer;
  layer.id = static_cast<int>(model_.layers.size());
  const int n = ++kind_counts_[static_cast<std::size_t>(kind)];
  layer.name = kind == LayerKind::Input ? std::string("input") : lowercase(kind_name(kind)) + "_" + std::to_string(n);
  layer.kind = kind;
  layer.params = std::move(params);
  model_.layers.push_back(std::move(layer));
  return *this;
}

ModelBuilder& ModelBuilder::input(Shape shape) { return add(LayerKind::Input, InputParams{std::move(shape)}); }
ModelBuilder& ModelBuilder::dense(std::size_t units) { return add(LayerKind::Dense, DenseParams{units}); }
ModelBuilder& ModelBuilder::conv2d(std::size_t kernel, std::size_t out_channels, std::size_t stride,
                                   std::size_t padding) {
  return conv2d(kernel, kernel, out_channels, stride, padding);
}
ModelBuilder& ModelBuilder::conv2d(std::size_t kernel_h, std::size_t kernel_w, std::size_t out_channels,
                                   std::size_t stride, std::size_t padding) {
  return add(LayerKind::Conv2D, Conv2DParams{kernel_h, kernel_w, out_channels, stride, padding});
}
ModelBuilder& ModelBuilder::maxpool2d(std::size_t kernel, std::size_t stride) {
  return add(LayerKind::MaxPool2D, MaxPool2DParams{kernel, stride});
}
ModelBuilder& ModelBuilder::relu() { return add(LayerKind::ReLU, NoParams{}); }
ModelBuilder& ModelBuilder::prelu() { return add(LayerKind::PReLU, NoParams{}); }
ModelBuilder& ModelBuilder::dropout(float rate) { return add(LayerKind::Dropout, DropoutParams{rate}); }
ModelBuilder& ModelBuilder::flatten() { return add(LayerKind::Flatten, NoParams{}); }
ModelBuilder& ModelBuilder::softmax() { return add(LayerKind::Softmax, NoParams{}); }

IRModel ModelBuilder::build() const {
  IRModel model = model_;
  model.edges = chain_edges(model.layers);
  model.validate();
  return model;
}

}  // namespace coldcarve
