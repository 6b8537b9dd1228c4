#pragma once

#include <span>
#include <string>
#include <vector>

#include "coldcarve/network.hpp"
#include "coldcarve/tensor.hpp"

namespace coldcarve {

// (acc_M - acc_M') / acc_M; negative when the recovered model is better.
// Throws ZeroTeacherAccuracy when acc_M <= 0.
double rad(double acc_m, double acc_m_prime);

// Share of FGSM examples crafted on M on which M and M' predict the same
// class. Throws ShapeMismatch when the models disagree on I/O shapes.
double fidelity(const Network<float>& m, const Network<float>& m_prime, const Tensor<float>& inputs,
                const std::vector<int>& labels, float epsilon);

// Share of positions whose float32 bit patterns differ. Throws LengthMismatch.
double weight_value_error_rate(std::span<const float> original, std::span<const float> recovered);

struct LayerNorm {
  std::size_t layer = 0;
  std::string name;
  double value = 0.0;
};

// Per parameterized layer: ||M - M'|| / ||M|| (Frobenius over weights and
// biases). Throws ArchitectureMismatch.
std::vector<LayerNorm> layer_norm_profile(const Network<float>& m, const Network<float>& m_prime);

struct BitError {
  double rho0_hat = 0.0;
  double rho1_hat = 0.0;
};

struct RecoveryScore {
  double rad = 0.0;
  std::vector<std::pair<double, double>> fidelity;  // (epsilon, fidelity)
  BitError bit_error;
  double weight_value_error_rate = 0.0;
  std::vector<LayerNorm> layer_norms;

  std::string to_text() const;
};

// One experiment per CSV row; every result file shares this header.
struct ResultRow {
  std::string experiment;
  std::string model;
  std::string stage;          // recovered, d1, d2, retrain
  double data_fraction = 0.0;
  double rho0 = 0.0;
  double rho1 = 0.0;
  std::uint64_t seed = 0;
  double teacher_accuracy = 0.0;
  double model_accuracy = 0.0;
  double rad = 0.0;
  std::size_t epochs = 0;
  double fidelity_low = -1.0;   // epsilon 0.01, -1 when not measured
  double fidelity_high = -1.0;  // epsilon 0.1
  double weight_error = -1.0;
};

std::string result_csv_header();
std::string to_csv(const ResultRow& row);
// Throws SchemaError on a wrong column count or unparsable field.
ResultRow parse_result_row(const std::string& line);

}  // namespace coldcarve
