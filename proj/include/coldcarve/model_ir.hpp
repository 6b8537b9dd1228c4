#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace coldcarve {

enum class LayerKind { Input, Dense, Conv2D, MaxPool2D, ReLU, PReLU, Dropout, Flatten, Softmax };

inline constexpr LayerKind kAllLayerKinds[] = {
    LayerKind::Input, LayerKind::Dense,   LayerKind::Conv2D,  LayerKind::MaxPool2D, LayerKind::ReLU,
    LayerKind::PReLU, LayerKind::Dropout, LayerKind::Flatten, LayerKind::Softmax};

std::string_view kind_name(LayerKind kind);
std::optional<LayerKind> kind_from_name(std::string_view name);

// Per-sample tensor dimensions; the batch dimension is never part of a Shape.
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

struct NoParams {
  bool operator==(const NoParams&) const = default;
};
struct InputParams {
  Shape shape;  // rank 1 (features) or rank 3 (channels, height, width)
  bool operator==(const InputParams&) const = default;
};
struct DenseParams {
  std::size_t units = 0;
  bool operator==(const DenseParams&) const = default;
};
struct Conv2DParams {
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool operator==(const Conv2DParams&) const = default;
};
struct MaxPool2DParams {
  std::size_t kernel = 0;
  std::size_t stride = 0;
  bool operator==(const MaxPool2DParams&) const = default;
};
struct DropoutParams {
  float rate = 0.0f;
  bool operator==(const DropoutParams&) const = default;
};

using LayerParams =
    std::variant<NoParams, InputParams, DenseParams, Conv2DParams, MaxPool2DParams, DropoutParams>;

struct LayerSpec {
  int id = 0;
  std::string name;
  LayerKind kind = LayerKind::Input;
  LayerParams params;

  bool operator==(const LayerSpec&) const = default;
};

struct Edge {
  int from_layer = 0;
  int from_port = 0;
  int to_layer = 0;
  int to_port = 0;

  bool operator==(const Edge&) const = default;
};

// Port numbering of the IR dialect: every consuming layer reads port 0, the
// Input layer produces on port 0 and every other layer on port 1.
inline constexpr int kInputPortId = 0;
int output_port_id(LayerKind kind);

struct LayerShapes {
  Shape input;   // empty for the Input layer
  Shape output;
};

// Layered network description mirroring the architecture XML. Layers are
// stored in execution order; `edges` must chain them one after another.
struct IRModel {
  std::string name;
  std::vector<LayerSpec> layers;
  std::vector<Edge> edges;

  bool operator==(const IRModel&) const = default;

  // Throws Error(SchemaViolation) on any broken invariant.
  void validate() const;

  // Shape propagation from the Input layer; throws SchemaViolation when a
  // layer cannot accept its input.
  std::vector<LayerShapes> infer_shapes() const;

  const LayerSpec& input_layer() const { return layers.front(); }
  Shape input_shape() const;
  Shape output_shape() const;
};

// Equality of everything that determines execution (kinds, shape parameters,
// topology); layer and model names are ignored.
bool same_architecture(const IRModel& a, const IRModel& b);

std::size_t layer_param_count(const LayerSpec& layer, const Shape& input_shape);
std::size_t total_params(const IRModel& model);

std::vector<Edge> chain_edges(const std::vector<LayerSpec>& layers);

// Fluent construction of chain models with generated ids, names and edges.
class ModelBuilder {
 public:
  explicit ModelBuilder(std::string name);

  ModelBuilder& input(Shape shape);
  ModelBuilder& dense(std::size_t units);
  ModelBuilder& conv2d(std::size_t kernel, std::size_t out_channels, std::size_t stride = 1,
                       std::size_t padding = 0);
  ModelBuilder& conv2d(std::size_t kernel_h, std::size_t kernel_w, std::size_t out_channels,
                       std::size_t stride, std::size_t padding);
  ModelBuilder& maxpool2d(std::size_t kernel, std::size_t stride);
  ModelBuilder& relu();
  ModelBuilder& prelu();
  ModelBuilder& dropout(float rate);
  ModelBuilder& flatten();
  ModelBuilder& softmax();

  // Validates; throws SchemaViolation (including for an empty model name).
  IRModel build() const;

 private:
  ModelBuilder& add(LayerKind kind, LayerParams params);

  IRModel model_;
  std::vector<int> kind_counts_;
};

}  // namespace coldcarve
