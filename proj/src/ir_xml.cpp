#include "coldcarve/ir_xml.hpp"

#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "coldcarve/error.hpp"
#include "coldcarve/xml_dom.hpp"

namespace coldcarve {

namespace {

[[noreturn]] void schema_error(const std::string& what) { throw Error(ErrorCode::SchemaViolation, what); }
[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::MalformedXml, what); }

void write_port(std::ostringstream& out, std::string_view indent, int id, const Shape& shape) {
  out << indent << "<port id=\"" << id << "\" precision=\"" << kPrecisionFP32 << "\">\n";
  out << indent << "\t<dim>1</dim>\n";
  for (auto d : shape) out << indent << "\t<dim>" << d << "</dim>\n";
  out << indent << "</port>\n";
}

const std::string& required(const xml::Element& el, std::string_view key) {
  const std::string* v = el.attribute(key);
  if (!v) schema_error("<" + el.name + "> is missing attribute '" + std::string(key) + "'");
  return *v;
}

std::size_t parse_count(std::string_view text, std::string_view what) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) schema_error("invalid integer for " + std::string(what) + ": '" + std::string(text) + "'");
  return value;
}

int parse_int(std::string_view text, std::string_view what) {
  return static_cast<int>(parse_count(text, what));
}

std::vector<std::size_t> parse_list(std::string_view text, std::string_view what, int arity) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = text.find(',', start);
    out.push_back(parse_count(text.substr(start, comma - start), what));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (static_cast<int>(out.size()) != arity) schema_error("attribute " + std::string(what) + " expects " + std::to_string(arity) + " values");
  return out;
}

Shape port_shape(const xml::Element& port) {
  const auto& precision = required(port, "precision");
  if (precision != kPrecisionFP32) schema_error("unsupported precision '" + precision + "' (only FP32)");
  required(port, "id");
  Shape dims;
  for (const auto& child : port.children) {
    if (child.name != "dim") malformed("unexpected <" + child.name + "> inside <port>");
    dims.push_back(parse_count(child.text, "dim"));
  }
  if (dims.empty() || dims.front() != 1) schema_error("port dims must start with batch dimension 1");
  return Shape(dims.begin() + 1, dims.end());
}

const xml::Element* single_port(const xml::Element& holder) {
  if (holder.children.size() != 1 || holder.children.front().name != "port")
    malformed("<" + holder.name + "> must contain exactly one <port>");
  return &holder.children.front();
}

struct RawLayer {
  LayerSpec spec;
  const xml::Element* data = nullptr;
  const xml::Element* in_port = nullptr;
  const xml::Element* out_port = nullptr;
};

RawLayer read_layer(const xml::Element& el) {
  RawLayer raw;
  raw.spec.id = parse_int(required(el, "id"), "layer id");
  raw.spec.name = required(el, "name");
  const auto& type = required(el, "type");
  const auto kind = kind_from_name(type);
  if (!kind) schema_error("unknown layer type '" + type + "'");
  raw.spec.kind = *kind;
  for (const auto& child : el.children) {
    const xml::Element** slot = nullptr;
    if (child.name == "data") slot = &raw.data;
    else if (child.name == "input") slot = &raw.in_port;
    else if (child.name == "output") slot = &raw.out_port;
    else malformed("unexpected <" + child.name + "> inside <layer>");
    if (*slot) malformed("duplicate <" + child.name + "> in layer " + std::to_string(raw.spec.id));
    *slot = child.name == "data" ? &child : single_port(child);
  }
  if (!raw.out_port) schema_error("layer " + std::to_string(raw.spec.id) + " has no <output>");
  if (raw.spec.kind != LayerKind::Input && !raw.in_port)
    schema_error("layer " + std::to_string(raw.spec.id) + " has no <input>");
  return raw;
}

LayerParams params_from(const RawLayer& raw) {
  const auto kind = raw.spec.kind;
  const auto attrs = data_attributes(kind);
  if (attrs.empty()) {
    if (raw.data) schema_error(std::string(kind_name(kind)) + " layer takes no <data>");
    if (kind == LayerKind::Input) return InputParams{port_shape(*raw.out_port)};
    return NoParams{};
  }
  if (!raw.data) schema_error(std::string(kind_name(kind)) + " layer requires <data>");
  auto list = [&](std::string_view key, int arity) { return parse_list(required(*raw.data, key), key, arity); };
  switch (kind) {
    case LayerKind::Dense: return DenseParams{list("out-size", 1)[0]};
    case LayerKind::Conv2D: {
      const auto kernel = list("kernel", 2);
      const auto strides = list("strides", 2);
      const auto pads = list("pads", 2);
      if (strides[0] != strides[1] || pads[0] != pads[1]) schema_error("Conv2D requires equal strides and pads");
      return Conv2DParams{kernel[0], kernel[1], list("output", 1)[0], strides[0], pads[0]};
    }
    case LayerKind::MaxPool2D: {
      const auto kernel = list("kernel", 2);
      const auto strides = list("strides", 2);
      if (kernel[0] != kernel[1] || strides[0] != strides[1]) schema_error("MaxPool2D requires square kernel and strides");
      return MaxPool2DParams{kernel[0], strides[0]};
    }
    case LayerKind::PReLU: return NoParams{};
    case LayerKind::Dropout: {
      const auto& text = required(*raw.data, "rate");
      float rate = 0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), rate);
      if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) schema_error("invalid dropout rate '" + text + "'");
      return DropoutParams{rate};
    }
    default: break;
  }
  schema_error("unsupported layer kind");
}

}  // namespace

std::string format_float(float value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::vector<DataAttribute> data_attributes(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return {{"out-size", 1}};
    case LayerKind::Conv2D: return {{"kernel", 2}, {"strides", 2}, {"pads", 2}, {"output", 1}};
    case LayerKind::MaxPool2D: return {{"kernel", 2}, {"strides", 2}};
    case LayerKind::PReLU: return {{"channels", 1}};
    case LayerKind::Dropout: return {{"rate", 1, true}};
    default: return {};
  }
}

std::vector<std::string> data_values(const LayerSpec& layer, const Shape& input_shape) {
  auto pair = [](std::size_t a, std::size_t b) { return std::to_string(a) + "," + std::to_string(b); };
  switch (layer.kind) {
    case LayerKind::Dense: return {std::to_string(std::get<DenseParams>(layer.params).units)};
    case LayerKind::Conv2D: {
      const auto& p = std::get<Conv2DParams>(layer.params);
      return {pair(p.kernel_h, p.kernel_w), pair(p.stride, p.stride), pair(p.padding, p.padding),
              std::to_string(p.out_channels)};
    }
    case LayerKind::MaxPool2D: {
      const auto& p = std::get<MaxPool2DParams>(layer.params);
      return {pair(p.kernel, p.kernel), pair(p.stride, p.stride)};
    }
    case LayerKind::PReLU: return {std::to_string(input_shape.at(0))};
    case LayerKind::Dropout: return {format_float(std::get<DropoutParams>(layer.params).rate)};
    default: return {};
  }
}

std::string serialize_xml(const IRModel& model, const XmlWriteOptions& options) {
  model.validate();
  const auto shapes = model.infer_shapes();
  std::ostringstream out;
  out << "<net name=\"" << xml::escape(model.name) << "\" version=\"" << kIrVersion << "\">\n";
  out << "\t<layers>\n";
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    out << "\t\t<layer id=\"" << layer.id << "\" name=\"" << xml::escape(layer.name) << "\" type=\""
        << kind_name(layer.kind) << "\">\n";
    const auto attrs = data_attributes(layer.kind);
    if (!attrs.empty()) {
      const auto values = data_values(layer, shapes[i].input);
      out << "\t\t\t<data";
      for (std::size_t a = 0; a < attrs.size(); ++a) out << ' ' << attrs[a].name << "=\"" << values[a] << '"';
      out << "/>\n";
    }
    if (layer.kind != LayerKind::Input) {
      out << "\t\t\t<input>\n";
      write_port(out, "\t\t\t\t", kInputPortId, shapes[i].input);
      out << "\t\t\t</input>\n";
    }
    out << "\t\t\t<output>\n";
    write_port(out, "\t\t\t\t", output_port_id(layer.kind), shapes[i].output);
    out << "\t\t\t</output>\n";
    out << "\t\t</layer>\n";
  }
  out << "\t</layers>\n";
  out << "\t<edges>\n";
  for (const auto& e : model.edges)
    out << "\t\t<edge from-layer=\"" << e.from_layer << "\" from-port=\"" << e.from_port << "\" to-layer=\""
        << e.to_layer << "\" to-port=\"" << e.to_port << "\"/>\n";
  out << "\t</edges>\n";
  if (options.emit_cli_parameters) {
    out << "\t<cli_parameters>\n";
    out << "\t\t<framework value=\"coldcarve\"/>\n";
    out << "\t\t<data_type value=\"FP32\"/>\n";
    out << "\t</cli_parameters>\n";
  }
  out << "</net>\n";
  return out.str();
}

IRModel parse_xml(std::string_view text) {
  const xml::Element root = xml::parse_document(text);
  if (root.name != "net") malformed("root element must be <net>, found <" + root.name + ">");

  IRModel model;
  model.name = required(root, "name");
  if (parse_int(required(root, "version"), "version") != kIrVersion)
    schema_error("unsupported IR version " + required(root, "version"));

  const xml::Element* layers_el = nullptr;
  const xml::Element* edges_el = nullptr;
  bool seen_cli = false;
  for (const auto& child : root.children) {
    if (child.name == "layers" && !layers_el) layers_el = &child;
    else if (child.name == "edges" && !edges_el) edges_el = &child;
    else if (child.name == "cli_parameters" && !seen_cli) seen_cli = true;
    else malformed("unexpected <" + child.name + "> inside <net>");
  }
  if (!layers_el) schema_error("<net> has no <layers>");

  std::vector<RawLayer> raw_layers;
  std::map<int, std::size_t> by_id;
  for (const auto& child : layers_el->children) {
    if (child.name != "layer") malformed("unexpected <" + child.name + "> inside <layers>");
    raw_layers.push_back(read_layer(child));
    if (!by_id.emplace(raw_layers.back().spec.id, raw_layers.size() - 1).second)
      schema_error("duplicate layer id " + std::to_string(raw_layers.back().spec.id));
  }
  if (raw_layers.empty()) schema_error("<layers> is empty");

  std::vector<Edge> edges;
  if (edges_el) {
    for (const auto& child : edges_el->children) {
      if (child.name != "edge") malformed("unexpected <" + child.name + "> inside <edges>");
      edges.push_back({parse_int(required(child, "from-layer"), "from-layer"),
                       parse_int(required(child, "from-port"), "from-port"),
                       parse_int(required(child, "to-layer"), "to-layer"),
                       parse_int(required(child, "to-port"), "to-port")});
    }
  }

  // Order layers along the edge chain starting from the Input layer.
  std::map<int, const Edge*> next;
  for (const auto& e : edges) {
    if (!by_id.contains(e.from_layer) || !by_id.contains(e.to_layer)) schema_error("edge references an unknown layer");
    if (!next.emplace(e.from_layer, &e).second) schema_error("layer " + std::to_string(e.from_layer) + " has more than one consumer");
  }
  std::vector<std::size_t> order;
  std::set<int> visited;
  int start = -1;
  for (const auto& raw : raw_layers)
    if (raw.spec.kind == LayerKind::Input) {
      if (start != -1) schema_error("more than one Input layer");
      start = raw.spec.id;
    }
  if (start == -1) schema_error("no Input layer");
  for (int id = start;;) {
    if (!visited.insert(id).second) schema_error("edges contain a cycle");
    order.push_back(by_id.at(id));
    auto it = next.find(id);
    if (it == next.end()) break;
    id = it->second->to_layer;
  }
  if (order.size() != raw_layers.size()) schema_error("edges do not connect every layer into one chain");

  for (auto index : order) {
    auto& raw = raw_layers[index];
    raw.spec.params = params_from(raw);
    model.layers.push_back(raw.spec);
  }
  model.edges.clear();
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const int from = model.layers[i].id;
    model.edges.push_back(*next.at(from));
  }
  model.validate();

  // Declared port shapes and redundant data attributes must agree with the
  // shapes implied by the layer parameters.
  const auto shapes = model.infer_shapes();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& raw = raw_layers[order[i]];
    const auto where = " in layer " + std::to_string(raw.spec.id);
    if (port_shape(*raw.out_port) != shapes[i].output) schema_error("output dims disagree with parameters" + where);
    if (raw.in_port && port_shape(*raw.in_port) != shapes[i].input) schema_error("input dims disagree with producer" + where);
    if (raw.spec.kind == LayerKind::PReLU &&
        parse_list(required(*raw.data, "channels"), "channels", 1)[0] != shapes[i].input.at(0))
      schema_error("PReLU channels disagree with input" + where);
  }
  return model;
}

}  // namespace coldcarve
