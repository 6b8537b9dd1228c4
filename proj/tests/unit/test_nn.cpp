#include "doctest.h"

#include <cmath>
#include <random>

#include "../support/gradcheck.hpp"
#include "coldcarve/dataset.hpp"
#include "coldcarve/error.hpp"
#include "coldcarve/loss.hpp"
#include "coldcarve/train.hpp"
#include "coldcarve/weight_blob.hpp"
#include "coldcarve/zoo.hpp"

using namespace coldcarve;

TEST_CASE("dense forward picks the weight row") {
  Network<float> net(ModelBuilder("d").input({2}).dense(2).build(), {1, 2, 3, 4, 0, 0});
  const auto out = net.forward(Tensor<float>({1, 2}, {1, 0}));
  // weights are stored [out, in]; input e0 selects column 0 of each output row
  CHECK(out[0] == 1.0f);
  CHECK(out[1] == 3.0f);
}

TEST_CASE("softmax of zeros is uniform") {
  Network<float> net(ModelBuilder("s").input({2}).softmax().build());
  const auto out = net.forward(Tensor<float>({1, 2}, {0, 0}));
  CHECK(out[0] == doctest::Approx(0.5));
  CHECK(out[1] == doctest::Approx(0.5));
}

TEST_CASE("dropout is the identity at inference") {
  std::mt19937_64 rng(1);
  Network<float> with(ModelBuilder("a").input({4}).dense(3).dropout(0.5f).build());
  with.initialize(3);
  Network<float> without(ModelBuilder("a").input({4}).dense(3).build(),
                         std::vector<float>(with.parameters().begin(), with.parameters().end()));
  Tensor<float> x({5, 4});
  for (auto& v : x.values()) v = std::uniform_real_distribution<float>(-1, 1)(rng);
  CHECK(with.forward(x, nullptr, &rng) == without.forward(x));
}

TEST_CASE("dropout zeroes at the configured rate and rescales survivors") {
  Network<float> net(ModelBuilder("a").input({1000}).dropout(0.3f).build());
  net.set_training(true);
  std::mt19937_64 rng(9);
  const auto out = net.forward(Tensor<float>({20, 1000}, 1.0f), nullptr, &rng);
  std::size_t zeros = 0;
  for (float v : out.values()) {
    if (v == 0.0f) ++zeros;
    else CHECK(v == doctest::Approx(1.0 / 0.7));
  }
  const double n = 20000, p = 0.3;
  CHECK(std::abs(zeros - n * p) <= 3 * std::sqrt(n * p * (1 - p)));
}

TEST_CASE("kl divergence closed form and validation") {
  const Tensor<float> t({1, 2}, {1, 0}), s({1, 2}, {0.5f, 0.5f});
  CHECK(kl_divergence_loss(s, t).loss == doctest::Approx(std::log(2.0)));
  CHECK(kl_divergence_loss(t, t).loss == doctest::Approx(0.0));
  try {
    kl_divergence_loss(Tensor<float>({1, 2}, {0.7f, 0.7f}), t);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidDistribution);
  }
}

TEST_CASE("linear mse gradient matches the hand formula") {
  Network<double> net(ModelBuilder("l").input({3}).dense(1).build(), {0.5, -1.0, 2.0, 0.25});
  const Tensor<double> x({1, 3}, {1.0, 2.0, -1.0});
  ForwardCache<double> cache;
  const auto y = net.forward(x, &cache);
  const double target = 0.3;
  const auto l = mse_loss(y, Tensor<double>({1, 1}, {target}));
  const auto g = net.backward(cache, l.grad);
  const double d = 2 * (y[0] - target);
  CHECK(g.params[0] == doctest::Approx(d * 1.0));
  CHECK(g.params[1] == doctest::Approx(d * 2.0));
  CHECK(g.params[2] == doctest::Approx(d * -1.0));
  CHECK(g.params[3] == doctest::Approx(d));
}

TEST_CASE("zero output gradient gives zero parameter gradients") {
  Network<double> net(zoo_model("base"));
  net.initialize(4);
  ForwardCache<double> cache;
  const auto out = net.forward(Tensor<double>({2, 1, 12, 12}, 0.5), &cache);
  const auto g = net.backward(cache, Tensor<double>(out.shape()));
  for (double v : g.params) CHECK(v == 0.0);
}

TEST_CASE("finite difference gradients for every layer kind") {
  std::mt19937_64 rng(2024);
  for (LayerKind kind : {LayerKind::Dense, LayerKind::Conv2D, LayerKind::MaxPool2D, LayerKind::ReLU, LayerKind::PReLU,
                         LayerKind::Dropout, LayerKind::Flatten, LayerKind::Softmax}) {
    for (int c = 0; c < 20; ++c) {
      auto [model, head] = gradcheck::layer_case(kind, rng);
      auto problem = gradcheck::make_problem(model, head, rng);
      const auto o = gradcheck::check(problem);
      INFO(kind_name(kind) << " case " << c << " at " << o.where);
      CHECK(o.worst <= 1e-3);
      CHECK(o.checked > 0);
    }
  }
}

TEST_CASE("xor trains to perfect accuracy and is deterministic") {
  const Dataset data = make_xor(8);
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.batch_size = 8;
  cfg.adam.lr = 1e-2;
  cfg.seed = 5;
  auto run = [&] {
    Network<float> net(zoo_model("mlp_xor"));
    net.initialize(17);
    train(net, data.inputs, *data.labels, cfg, LossKind::CrossEntropy);
    return net;
  };
  const auto a = run(), b = run();
  CHECK(accuracy(a, data) == 1.0);
  CHECK(serialize_weights(a) == serialize_weights(b));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const Dataset data = make_blobs(64, 3, 4, 0.5, 1);
  Network<float> net(zoo_model("mlp_blobs"));
  net.initialize(2);
  const auto before = serialize_weights(net);
  TrainConfig cfg;
  cfg.adam.lr = 0.0;
  cfg.epochs = 3;
  CHECK_NOTHROW(train(net, data.inputs, *data.labels, cfg, LossKind::CrossEntropy));
  CHECK(serialize_weights(net) == before);
}

TEST_CASE("fgsm with zero epsilon is the identity") {
  const Dataset data = make_desk_images(8, 3);
  Network<float> net(zoo_model("base"));
  net.initialize(1);
  CHECK(fgsm(net, data.inputs, *data.labels, 0.0f) == data.inputs);
  const auto adv = fgsm(net, data.inputs, *data.labels, 0.1f);
  for (std::size_t i = 0; i < adv.size(); ++i) {
    CHECK(adv[i] >= 0.0f);
    CHECK(adv[i] <= 1.0f);
    CHECK(std::abs(adv[i] - data.inputs[i]) <= 0.1f + 1e-6f);
  }
}

TEST_CASE("accuracy oracles") {
  Dataset d = make_blobs(40, 2, 2, 0.1, 3);
  // constant predictor: dense with zero weights and a bias favouring class 0
  Network<float> constant(ModelBuilder("c").input({2}).dense(2).softmax().build(), {0, 0, 0, 0, 1, 0});
  std::size_t zeros = std::count(d.labels->begin(), d.labels->end(), 0);
  CHECK(accuracy(constant, d) == doctest::Approx(static_cast<double>(zeros) / 40));
  CHECK_THROWS_AS(accuracy(constant, d.without_labels()), Error);
}
