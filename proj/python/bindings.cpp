// Python surface: model IR, dump synthesis and decay, carving, metrics and
// the pipeline commands. Errors surface as coldcarve.ColdcarveError with a
// `code` attribute naming the ErrorCode.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "coldcarve/carver.hpp"
#include "coldcarve/config.hpp"
#include "coldcarve/error.hpp"
#include "coldcarve/ir_xml.hpp"
#include "coldcarve/memory_sim.hpp"
#include "coldcarve/metrics.hpp"
#include "coldcarve/pipeline.hpp"
#include "coldcarve/weight_blob.hpp"
#include "coldcarve/zoo.hpp"

namespace py = pybind11;
using namespace coldcarve;

namespace {

py::bytes to_bytes(std::span<const std::uint8_t> b) {
  return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

Bytes from_bytes(const py::bytes& b) {
  const std::string_view s = b;
  return Bytes(s.begin(), s.end());
}

py::array_t<float> to_array(std::span<const float> v) {
  py::array_t<float> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<float> from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  return std::vector<float>(a.data(), a.data() + a.size());
}

Tensor<float> to_tensor(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<float>(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

py::dict command_dict(const CommandResult& r) {
  py::dict d;
  d["summary"] = r.summary;
  py::list files;
  for (const auto& f : r.files) files.append(f.string());
  d["files"] = files;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "cold-boot model recovery simulator";

  static py::exception<Error> error_type(m, "ColdcarveError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error_type.ptr())(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  // model IR
  py::class_<IRModel>(m, "Model")
      .def_readonly("name", &IRModel::name)
      .def_property_readonly("input_shape", [](const IRModel& x) { return x.input_shape(); })
      .def_property_readonly("output_shape", [](const IRModel& x) { return x.output_shape(); })
      .def_property_readonly("layer_kinds", [](const IRModel& x) {
        std::vector<std::string> k;
        for (const auto& l : x.layers) k.emplace_back(kind_name(l.kind));
        return k;
      })
      .def("__eq__", [](const IRModel& a, const IRModel& b) { return a == b; });
  m.def("zoo_names", &zoo_names);
  m.def("zoo_model", &zoo_model, py::arg("name"), py::arg("classes") = 3);
  m.def("total_params", &total_params);
  m.def("serialize_xml", [](const IRModel& x) { return serialize_xml(x); });
  m.def("parse_xml", [](const std::string& text) { return parse_xml(text); });
  m.def("same_architecture", &same_architecture);

  py::class_<Network<float>>(m, "Network")
      .def(py::init<IRModel>())
      .def("initialize", &Network<float>::initialize, py::arg("seed"))
      .def_property_readonly("spec", &Network<float>::spec)
      .def_property(
          "parameters", [](const Network<float>& n) { return to_array(n.parameters()); },
          [](Network<float>& n, const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
            const auto v = from_array(a);
            n.set_parameters(v);
          })
      .def("forward",
           [](const Network<float>& n, const py::array_t<float, py::array::c_style | py::array::forcecast>& x) {
             const Tensor<float> out = n.forward(to_tensor(x));
             py::array_t<float> a(std::vector<py::ssize_t>(out.shape().begin(), out.shape().end()));
             std::copy(out.values().begin(), out.values().end(), a.mutable_data());
             return a;
           })
      .def("serialize_weights", [](const Network<float>& n) { return to_bytes(serialize_weights(n)); });
  m.def("load_checkpoint", &load_checkpoint);
  m.def("save_checkpoint", &save_checkpoint);

  // memory simulation
  py::enum_<FillerProfile>(m, "Filler")
      .value("RANDOM_BYTES", FillerProfile::RandomBytes)
      .value("ASCII_TEXT", FillerProfile::AsciiText)
      .value("MIXED", FillerProfile::Mixed);
  py::enum_<CorrelationMode>(m, "CorrelationMode")
      .value("INDEPENDENT", CorrelationMode::Independent)
      .value("FIXED_POSITIONS", CorrelationMode::FixedPositions);
  py::class_<MemoryImage>(m, "MemoryImage")
      .def(py::init([](const py::bytes& b) { return MemoryImage{from_bytes(b), {}}; }))
      .def_property_readonly("data", [](const MemoryImage& i) { return to_bytes(i.bytes); })
      .def_property_readonly("manifest", [](const MemoryImage& i) {
        py::list out;
        for (const auto& e : i.manifest) out.append(py::make_tuple(e.tag, e.offset, e.length));
        return out;
      })
      .def("__len__", [](const MemoryImage& i) { return i.bytes.size(); });
  m.def(
      "synthesize_dump",
      [](const std::string& xml, const py::bytes& blob, FillerProfile filler, std::size_t total, std::uint64_t seed) {
        return synthesize_dump(xml, from_bytes(blob), filler, total, seed);
      },
      py::arg("xml"), py::arg("blob"), py::arg("filler"), py::arg("total_size"), py::arg("seed"));
  m.def(
      "apply_decay",
      [](const MemoryImage& img, double rho0, double rho1, std::uint64_t seed) {
        return apply_decay(img, DecayParams{rho0, rho1, seed});
      },
      py::arg("image"), py::arg("rho0"), py::arg("rho1"), py::arg("seed"));
  m.def("bit_error_rate", [](const MemoryImage& a, const MemoryImage& b) {
    const auto r = bit_error_rate(a, b);
    return py::dict(py::arg("rho0_hat") = r.rho0_hat, py::arg("rho1_hat") = r.rho1_hat,
                    py::arg("overall") = r.overall());
  });
  m.def(
      "majority_vote",
      [](const MemoryImage& truth, double rho0, double rho1, std::uint64_t seed, std::size_t trials,
         CorrelationMode mode) {
        return majority_vote(make_trials(truth, DecayParams{rho0, rho1, seed}, trials, mode, false));
      },
      py::arg("truth"), py::arg("rho0"), py::arg("rho1"), py::arg("seed"), py::arg("trials"),
      py::arg("mode") = CorrelationMode::Independent);

  // carving
  py::class_<RecoveredModel>(m, "RecoveredModel")
      .def_readonly("model", &RecoveredModel::model)
      .def_readonly("network", &RecoveredModel::network)
      .def_property_readonly("carved", [](const RecoveredModel& r) { return to_array(r.carved); })
      .def_property_readonly("report", [](const RecoveredModel& r) { return r.report.to_text(); })
      .def_property_readonly("xml_offset", [](const RecoveredModel& r) { return r.report.xml_offset; })
      .def_property_readonly("weights_offset", [](const RecoveredModel& r) { return r.report.weights_offset; })
      .def_property_readonly("scan_restarts", [](const RecoveredModel& r) { return r.report.scan_restarts; });
  m.def(
      "recover_model",
      [](const py::bytes& image, std::size_t max_distance) {
        CarveOptions o;
        o.max_distance = max_distance;
        const Bytes b = from_bytes(image);
        py::gil_scoped_release release;
        return recover_model(b, o);
      },
      py::arg("image"), py::arg("max_distance") = 2);
  m.def("sanitize_weights",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& v) {
          return to_array(sanitize_weights(from_array(v)).values);
        });
  m.def("encode_floats", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& v) {
    return to_bytes(encode_floats(from_array(v)));
  });

  // metrics
  m.def("rad", &rad, py::arg("acc_m"), py::arg("acc_m_prime"));
  m.def("weight_value_error_rate",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& b) {
          return weight_value_error_rate(from_array(a), from_array(b));
        });

  // pipeline
  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_readwrite("name", &ExperimentConfig::name)
      .def_readwrite("model", &ExperimentConfig::model)
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("out", &ExperimentConfig::out)
      .def_readwrite("correction", &ExperimentConfig::correction)
      .def("to_json", &dump_config);
  m.def("load_config", &load_config);
  m.def("parse_config", [](const std::string& text) { return parse_config(text); });
  m.def("train", [](const ExperimentConfig& c) { return command_dict(cmd_train(c)); });
  m.def(
      "attack", [](const ExperimentConfig& c, bool parallel) { return command_dict(cmd_attack(c, parallel)); },
      py::arg("config"), py::arg("parallel") = false);
  m.def("correct", [](const ExperimentConfig& c) { return command_dict(cmd_correct(c)); });
  m.def(
      "evaluate",
      [](const ExperimentConfig& c, const std::string& stage) { return command_dict(cmd_evaluate(c, stage)); },
      py::arg("config"), py::arg("stage") = "corrected");
  m.def(
      "report",
      [](const std::filesystem::path& results, const std::filesystem::path& out) {
        return command_dict(cmd_report(results, out));
      },
      py::arg("results"), py::arg("out"));
}
