#include "coldcarve/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "coldcarve/error.hpp"
#include "coldcarve/loss.hpp"

namespace coldcarve {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kDropoutStream = 0x44524F50ULL;
constexpr std::uint64_t kMaskStream = 0x4D41534BULL;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return std::mt19937_64(seq);
}

bool ends_with_softmax(const Network<float>& net) {
  return net.spec().layers.back().kind == LayerKind::Softmax;
}

Tensor<float> gather_rows(const Tensor<float>& t, std::span<const std::size_t> idx) {
  std::vector<std::size_t> shape = t.shape();
  shape[0] = idx.size();
  const std::size_t row = t.row_size();
  std::vector<float> data(idx.size() * row);
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(t.row(idx[i]).begin(), row, data.begin() + i * row);
  return Tensor<float>(shape, std::move(data));
}

std::size_t target_count(const TrainTargets& targets) {
  return std::visit([](const auto& t) -> std::size_t {
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, std::vector<int>>) return t.size();
    else return t.rank() == 0 ? 0 : t.dim(0);
  }, targets);
}

LossResult<float> compute_loss(const Tensor<float>& output, const TrainTargets& targets,
                               std::span<const std::size_t> idx, LossKind kind) {
  switch (kind) {
    case LossKind::CrossEntropy: {
      const auto* labels = std::get_if<std::vector<int>>(&targets);
      if (!labels) throw Error(ErrorCode::InvalidArgument, "cross entropy needs integer labels");
      std::vector<int> batch(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) batch[i] = (*labels)[idx[i]];
      return cross_entropy_loss(output, std::span<const int>(batch));
    }
    case LossKind::KlDivergence:
    case LossKind::Mse: {
      const auto* rows = std::get_if<Tensor<float>>(&targets);
      if (!rows) throw Error(ErrorCode::InvalidArgument, "KL and MSE need target rows");
      const Tensor<float> batch = gather_rows(*rows, idx);
      return kind == LossKind::KlDivergence ? kl_divergence_loss(output, batch) : mse_loss(output, batch);
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown loss");
}

}  // namespace

std::string_view schedule_name(LrSchedule s) {
  switch (s) {
    case LrSchedule::None: return "none";
    case LrSchedule::HalveEvery10: return "halve_every_10";
    case LrSchedule::Factor09Every10: return "factor_0.9_every_10";
    case LrSchedule::HalveEvery50: return "halve_every_50";
  }
  return "?";
}

LrSchedule schedule_from_name(std::string_view name) {
  for (auto s : {LrSchedule::None, LrSchedule::HalveEvery10, LrSchedule::Factor09Every10, LrSchedule::HalveEvery50})
    if (schedule_name(s) == name) return s;
  throw Error(ErrorCode::Config, "unknown lr schedule '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(adam.lr >= 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be non-negative");
  if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be at least 1");
  if (!(gradient_dropout >= 0.0 && gradient_dropout < 1.0))
    throw Error(ErrorCode::InvalidArgument, "gradient dropout rate must be in [0, 1)");
}

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  switch (cfg.lr_schedule) {
    case LrSchedule::None: return cfg.adam.lr;
    case LrSchedule::HalveEvery10: return cfg.adam.lr * std::pow(0.5, static_cast<double>(epoch / 10));
    case LrSchedule::Factor09Every10: return cfg.adam.lr * std::pow(0.9, static_cast<double>(epoch / 10));
    case LrSchedule::HalveEvery50: return cfg.adam.lr * std::pow(0.5, static_cast<double>(epoch / 50));
  }
  return cfg.adam.lr;
}

Tensor<float> predict(const Network<float>& net, const Tensor<float>& inputs, std::size_t chunk) {
  const std::size_t n = inputs.dim(0);
  if (n <= chunk) return net.forward(inputs);
  Tensor<float> out;
  std::vector<float> data;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    idx.resize(std::min(chunk, n - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor<float> part = net.forward(gather_rows(inputs, idx));
    data.insert(data.end(), part.values().begin(), part.values().end());
    if (start == 0) out = part;
  }
  std::vector<std::size_t> shape = out.shape();
  shape[0] = n;
  return Tensor<float>(shape, std::move(data));
}

double evaluate_loss(const Network<float>& net, const Tensor<float>& inputs, const TrainTargets& targets,
                     LossKind loss) {
  Network<float> eval = net;
  eval.set_training(false);
  std::vector<std::size_t> idx(inputs.dim(0));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return compute_loss(predict(eval, inputs), targets, idx, loss).loss;
}

TrainHistory train(Network<float>& net, const Tensor<float>& inputs, const TrainTargets& targets,
                   const TrainConfig& cfg, LossKind loss) {
  cfg.validate();
  const std::size_t n = inputs.dim(0);
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty training set");
  if (target_count(targets) != n) throw Error(ErrorCode::ShapeMismatch, "targets and inputs differ in length");
  if (loss != LossKind::Mse && !ends_with_softmax(net))
    throw Error(ErrorCode::InvalidArgument, "probability losses need a network ending in Softmax");

  TrainHistory history;
  history.initial_loss = evaluate_loss(net, inputs, targets, loss);

  auto shuffle_rng = stream(cfg.seed, kShuffleStream);
  auto dropout_rng = stream(cfg.seed, kDropoutStream);
  auto mask_rng = stream(cfg.seed, kMaskStream);
  std::bernoulli_distribution keep(1.0 - cfg.gradient_dropout);

  const std::size_t p = net.parameter_count();
  std::vector<double> m(p, 0.0), v(p, 0.0);
  std::vector<std::uint32_t> steps(p, 0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  net.set_training(true);
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, n - start));
      ForwardCache<float> cache;
      const Tensor<float> out = net.forward(gather_rows(inputs, idx), &cache, &dropout_rng);
      const LossResult<float> r = compute_loss(out, targets, idx, loss);
      loss_sum += r.loss;
      ++batches;
      const Gradients<float> g =
          r.grad_is_logits ? net.backward_from_logits(cache, r.grad) : net.backward(cache, r.grad);

      auto params = net.parameters();
      for (std::size_t i = 0; i < p; ++i) {
        ++history.total_updates;
        if (cfg.gradient_dropout > 0.0 && !keep(mask_rng)) {
          ++history.masked_updates;
          continue;
        }
        const double gi = g.params[i];
        m[i] = cfg.adam.beta1 * m[i] + (1.0 - cfg.adam.beta1) * gi;
        v[i] = cfg.adam.beta2 * v[i] + (1.0 - cfg.adam.beta2) * gi * gi;
        const auto t = static_cast<double>(++steps[i]);
        const double mh = m[i] / (1.0 - std::pow(cfg.adam.beta1, t));
        const double vh = v[i] / (1.0 - std::pow(cfg.adam.beta2, t));
        params[i] = static_cast<float>(params[i] - lr * mh / (std::sqrt(vh) + cfg.adam.eps));
      }
    }
    const double epoch_loss = loss_sum / static_cast<double>(batches);
    history.epoch_loss.push_back(epoch_loss);
    history.epochs_run = epoch + 1;
    if (epoch_loss < best) {
      best = epoch_loss;
      history.best_epoch = epoch + 1;
      since_best = 0;
    } else if (cfg.early_stop_patience && ++since_best > *cfg.early_stop_patience) {
      history.early_stopped = true;
      break;
    }
  }
  net.set_training(false);
  return history;
}

double accuracy(const Network<float>& net, const Dataset& data) {
  const auto& labels = data.require_labels();
  if (labels.empty()) throw Error(ErrorCode::InvalidArgument, "accuracy of an empty dataset");
  Network<float> eval = net;
  eval.set_training(false);
  const auto predicted = argmax_rows(predict(eval, data.inputs));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == static_cast<std::size_t>(labels[i]);
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

Tensor<float> fgsm(const Network<float>& net, const Tensor<float>& x, const std::vector<int>& labels, float epsilon) {
  if (epsilon < 0.0f) throw Error(ErrorCode::InvalidArgument, "epsilon must be non-negative");
  if (x.dim(0) != labels.size()) throw Error(ErrorCode::ShapeMismatch, "one label per sample required");
  if (!ends_with_softmax(net)) throw Error(ErrorCode::InvalidArgument, "FGSM needs a network ending in Softmax");
  Network<float> eval = net;
  eval.set_training(false);
  ForwardCache<float> cache;
  const Tensor<float> probs = eval.forward(x, &cache);
  const auto r = cross_entropy_loss(probs, std::span<const int>(labels));
  const Gradients<float> g = eval.backward_from_logits(cache, r.grad);
  Tensor<float> adv = x;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const float gi = g.input[i];
    const float s = gi > 0.0f ? 1.0f : (gi < 0.0f ? -1.0f : 0.0f);
    adv[i] = std::clamp(x[i] + epsilon * s, 0.0f, 1.0f);
  }
  return adv;
}

}  // namespace coldcarve
