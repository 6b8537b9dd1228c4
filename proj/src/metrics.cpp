#include "coldcarve/metrics.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>

#include "coldcarve/error.hpp"
#include "coldcarve/train.hpp"

namespace coldcarve {

double rad(double acc_m, double acc_m_prime) {
  if (!(acc_m > 0.0)) throw Error(ErrorCode::ZeroTeacherAccuracy, "teacher accuracy must be positive");
  return (acc_m - acc_m_prime) / acc_m;
}

double fidelity(const Network<float>& m, const Network<float>& m_prime, const Tensor<float>& inputs,
                const std::vector<int>& labels, float epsilon) {
  if (m.spec().input_shape() != m_prime.spec().input_shape() ||
      m.spec().output_shape() != m_prime.spec().output_shape())
    throw Error(ErrorCode::ShapeMismatch, "models differ in input or output shape");
  if (inputs.rank() == 0 || inputs.dim(0) == 0) throw Error(ErrorCode::InvalidArgument, "no inputs for fidelity");
  const Tensor<float> adv = fgsm(m, inputs, labels, epsilon);
  const auto a = argmax_rows(predict(m, adv));
  const auto b = argmax_rows(predict(m_prime, adv));
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) agree += a[i] == b[i];
  return static_cast<double>(agree) / static_cast<double>(a.size());
}

double weight_value_error_rate(std::span<const float> original, std::span<const float> recovered) {
  if (original.size() != recovered.size())
    throw Error(ErrorCode::LengthMismatch, "weight lists differ in length");
  if (original.empty()) return 0.0;
  std::size_t diff = 0;
  for (std::size_t i = 0; i < original.size(); ++i)
    diff += std::bit_cast<std::uint32_t>(original[i]) != std::bit_cast<std::uint32_t>(recovered[i]);
  return static_cast<double>(diff) / static_cast<double>(original.size());
}

std::vector<LayerNorm> layer_norm_profile(const Network<float>& m, const Network<float>& m_prime) {
  if (!same_architecture(m.spec(), m_prime.spec()))
    throw Error(ErrorCode::ArchitectureMismatch, "layer norms need identical architectures");
  std::vector<LayerNorm> out;
  for (const auto& slice : m.slices()) {
    if (slice.size() == 0) continue;
    const auto a = m.layer_parameters(slice.layer);
    const auto b = m_prime.layer_parameters(slice.layer);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      num += d * d;
      den += static_cast<double>(a[i]) * a[i];
    }
    double value = 0.0;
    if (den > 0.0) value = std::sqrt(num / den);
    else if (num > 0.0) value = INFINITY;
    out.push_back({slice.layer, m.spec().layers[slice.layer].name, value});
  }
  return out;
}

std::string RecoveryScore::to_text() const {
  std::ostringstream s;
  s << std::setprecision(6);
  s << "rad " << rad << "\n";
  for (const auto& [eps, f] : fidelity) s << "fidelity " << eps << " " << f << "\n";
  s << "rho0_hat " << bit_error.rho0_hat << "\nrho1_hat " << bit_error.rho1_hat << "\n";
  s << "weight_value_error_rate " << weight_value_error_rate << "\n";
  for (const auto& l : layer_norms) s << "layer_norm " << l.layer << " " << l.name << " " << l.value << "\n";
  return s.str();
}

namespace {

constexpr int kColumns = 14;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  for (char c : line) {
    if (c == ',') out.emplace_back();
    else if (c != '\r') out.back() += c;
  }
  return out;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

}  // namespace

std::string result_csv_header() {
  return "experiment,model,stage,data_fraction,rho0,rho1,seed,teacher_accuracy,model_accuracy,rad,epochs,"
         "fidelity_low,fidelity_high,weight_error";
}

std::string to_csv(const ResultRow& r) {
  for (const auto* text : {&r.experiment, &r.model, &r.stage})
    if (text->find_first_of(",\n") != std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "csv field contains a separator: " + *text);
  std::ostringstream s;
  s << std::setprecision(9);
  s << r.experiment << ',' << r.model << ',' << r.stage << ',' << r.data_fraction << ',' << r.rho0 << ',' << r.rho1
    << ',' << r.seed << ',' << r.teacher_accuracy << ',' << r.model_accuracy << ',' << r.rad << ',' << r.epochs << ','
    << r.fidelity_low << ',' << r.fidelity_high << ',' << r.weight_error;
  return s.str();
}

ResultRow parse_result_row(const std::string& line) {
  const auto f = split_csv(line);
  if (f.size() != kColumns)
    throw Error(ErrorCode::SchemaError, "expected " + std::to_string(kColumns) + " columns, got " +
                                            std::to_string(f.size()));
  try {
    ResultRow r;
    r.experiment = f[0];
    r.model = f[1];
    r.stage = f[2];
    r.data_fraction = to_double(f[3]);
    r.rho0 = to_double(f[4]);
    r.rho1 = to_double(f[5]);
    r.seed = std::stoull(f[6]);
    r.teacher_accuracy = to_double(f[7]);
    r.model_accuracy = to_double(f[8]);
    r.rad = to_double(f[9]);
    r.epochs = std::stoull(f[10]);
    r.fidelity_low = to_double(f[11]);
    r.fidelity_high = to_double(f[12]);
    r.weight_error = to_double(f[13]);
    return r;
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::SchemaError, "unparsable field in row: " + line);
  }
}

}  // namespace coldcarve
