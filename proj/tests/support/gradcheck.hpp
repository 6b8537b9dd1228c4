#pragma once

// Central finite-difference oracle for Network<double>. Runs in double so the
// difference quotient is not dominated by float32 rounding.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>

#include "coldcarve/loss.hpp"
#include "coldcarve/model_ir.hpp"
#include "coldcarve/network.hpp"

namespace gradcheck {

using coldcarve::Network;
using coldcarve::Tensor;

enum class Head { Projection, SoftmaxCE, SoftmaxKL };

struct Outcome {
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates straddling a ReLU/max kink
  double worst = 0.0;       // largest relative error seen
  std::string where;
};

struct Problem {
  Network<double> net;
  Tensor<double> x;
  Tensor<double> projection;  // Projection head: L = sum(out * R)
  std::vector<int> labels;
  Tensor<double> soft;
  Head head = Head::Projection;
  // Dropout cases run in training mode with the same mask on every pass.
  std::optional<std::uint64_t> mask_seed;

  Tensor<double> run(const Network<double>& n, const Tensor<double>& in,
                     coldcarve::ForwardCache<double>* cache = nullptr) const {
    if (!mask_seed) return n.forward(in, cache);
    std::mt19937_64 mask(*mask_seed);
    return n.forward(in, cache, &mask);
  }

  double loss(const Network<double>& n, const Tensor<double>& in) const {
    const Tensor<double> out = run(n, in);
    switch (head) {
      case Head::Projection: {
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * projection[i];
        return s;
      }
      case Head::SoftmaxCE: return coldcarve::cross_entropy_loss(out, labels).loss;
      case Head::SoftmaxKL: return coldcarve::kl_divergence_loss(out, soft).loss;
    }
    return 0.0;
  }

  coldcarve::Gradients<double> analytic() const {
    coldcarve::ForwardCache<double> cache;
    const Tensor<double> out = run(net, x, &cache);
    switch (head) {
      case Head::Projection: return net.backward(cache, projection);
      case Head::SoftmaxCE: return net.backward_from_logits(cache, coldcarve::cross_entropy_loss(out, labels).grad);
      case Head::SoftmaxKL: return net.backward_from_logits(cache, coldcarve::kl_divergence_loss(out, soft).grad);
    }
    return {};
  }
};

inline Problem make_problem(const coldcarve::IRModel& model, Head head, std::mt19937_64& rng, std::size_t batch = 2) {
  Problem p{Network<double>(model), {}, {}, {}, {}, head, std::nullopt};
  p.net.initialize(rng());
  for (const auto& l : model.layers)
    if (l.kind == coldcarve::LayerKind::Dropout) {
      p.net.set_training(true);
      p.mask_seed = rng();
    }
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : p.net.parameters()) v = u(rng);  // nonzero biases too
  std::vector<std::size_t> shape{batch};
  const auto in = model.input_shape();
  shape.insert(shape.end(), in.begin(), in.end());
  p.x = Tensor<double>(shape);
  for (auto& v : p.x.values()) v = u(rng);
  const Tensor<double> out = p.net.forward(p.x);
  p.projection = Tensor<double>(out.shape());
  for (auto& v : p.projection.values()) v = u(rng);
  const std::size_t k = out.rank() == 2 ? out.dim(1) : 0;
  if (head == Head::SoftmaxCE)
    for (std::size_t s = 0; s < batch; ++s) p.labels.push_back(static_cast<int>(rng() % k));
  if (head == Head::SoftmaxKL) {
    p.soft = Tensor<double>(out.shape());
    for (std::size_t s = 0; s < batch; ++s) {
      double sum = 0.0;
      for (std::size_t c = 0; c < k; ++c) sum += (p.soft[s * k + c] = 0.05 + std::abs(u(rng)));
      for (std::size_t c = 0; c < k; ++c) p.soft[s * k + c] /= sum;
    }
  }
  return p;
}

// Compares every parameter and input coordinate. A coordinate whose two
// step sizes disagree sits on a kink and is skipped rather than judged.
inline Outcome check(Problem& p, double h = 1e-5) {
  Outcome o;
  const auto g = p.analytic();
  auto judge = [&](double analytic, double fd, double fd_half, const std::string& where) {
    if (std::abs(fd - fd_half) > 1e-4 * std::max({1.0, std::abs(fd)})) {
      ++o.skipped;
      return;
    }
    ++o.checked;
    const double scale = std::max({std::abs(analytic), std::abs(fd), 1e-4});
    const double rel = std::abs(analytic - fd) / scale;
    if (rel > o.worst) {
      o.worst = rel;
      o.where = where;
    }
  };
  auto params = p.net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    auto quotient = [&](double step) {
      params[i] = keep + step;
      const double up = p.loss(p.net, p.x);
      params[i] = keep - step;
      const double down = p.loss(p.net, p.x);
      params[i] = keep;
      return (up - down) / (2 * step);
    };
    judge(g.params[i], quotient(h), quotient(h / 2), "param " + std::to_string(i));
  }
  for (std::size_t i = 0; i < p.x.size(); ++i) {
    const double keep = p.x[i];
    auto quotient = [&](double step) {
      p.x[i] = keep + step;
      const double up = p.loss(p.net, p.x);
      p.x[i] = keep - step;
      const double down = p.loss(p.net, p.x);
      p.x[i] = keep;
      return (up - down) / (2 * step);
    };
    judge(g.input[i], quotient(h), quotient(h / 2), "input " + std::to_string(i));
  }
  return o;
}

// Random small model exercising one layer kind, with a head suited to it.
inline std::pair<coldcarve::IRModel, Head> layer_case(coldcarve::LayerKind kind, std::mt19937_64& rng) {
  using coldcarve::LayerKind;
  using coldcarve::ModelBuilder;
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); };
  ModelBuilder b("gc");
  switch (kind) {
    case LayerKind::Dense:
      return {b.input({pick(1, 6)}).dense(pick(1, 6)).build(), Head::Projection};
    case LayerKind::Conv2D: {
      const std::size_t k = pick(1, 3), side = pick(k + 1, 6);
      return {b.input({pick(1, 3), side, side}).conv2d(k, k, pick(1, 4), pick(1, 2), pick(0, 1)).build(),
              Head::Projection};
    }
    case LayerKind::MaxPool2D: {
      const std::size_t k = pick(1, 3), side = pick(k, 6);
      return {b.input({pick(1, 2), side, side}).maxpool2d(k, pick(1, 2)).build(), Head::Projection};
    }
    case LayerKind::ReLU: return {b.input({pick(2, 8)}).dense(pick(2, 6)).relu().build(), Head::Projection};
    case LayerKind::PReLU: {
      if (rng() % 2) return {b.input({pick(2, 8)}).dense(pick(2, 6)).prelu().build(), Head::Projection};
      const std::size_t side = pick(2, 5);
      return {b.input({pick(1, 3), side, side}).conv2d(1, pick(1, 3)).prelu().build(), Head::Projection};
    }
    case LayerKind::Dropout: {
      const double rate = 0.1 * static_cast<double>(pick(1, 8));
      return {b.input({pick(2, 8)}).dense(pick(2, 6)).dropout(rate).build(), Head::Projection};
    }
    case LayerKind::Flatten: {
      const std::size_t side = pick(2, 4);
      return {b.input({pick(1, 2), side, side}).flatten().dense(pick(1, 4)).build(), Head::Projection};
    }
    case LayerKind::Softmax:
      return {b.input({pick(2, 6)}).dense(pick(2, 5)).softmax().build(),
              rng() % 3 == 0 ? Head::Projection : (rng() % 2 ? Head::SoftmaxCE : Head::SoftmaxKL)};
    default:
      return {b.input({pick(2, 6)}).dense(pick(2, 5)).build(), Head::Projection};
  }
}

}  // namespace gradcheck
