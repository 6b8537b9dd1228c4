#include "coldcarve/zoo.hpp"

#include "coldcarve/error.hpp"

namespace coldcarve {

std::vector<std::string> zoo_names() {
  return {"base", "base_wide", "base_dropout", "base_prelu", "lenet5", "lenet5_dropout", "mlp_xor", "mlp_blobs"};
}

IRModel zoo_model(std::string_view name, std::size_t classes) {
  const Shape image{1, 12, 12};
  if (name == "base" || name == "base_wide" || name == "base_dropout" || name == "base_prelu") {
    const bool wide = name == "base_wide";
    ModelBuilder b{std::string(name)};
    b.input(image).conv2d(3, wide ? 16 : 8);
    name == "base_prelu" ? b.prelu() : b.relu();
    b.maxpool2d(2, 2).flatten().dense(wide ? 64 : 32);
    name == "base_prelu" ? b.prelu() : b.relu();
    if (name == "base_dropout") b.dropout(0.25f);
    return b.dense(classes).softmax().build();
  }
  if (name == "lenet5" || name == "lenet5_dropout") {
    ModelBuilder b{std::string(name)};
    b.input(image).conv2d(5, 6, 1, 2).relu().maxpool2d(2, 2).conv2d(3, 12).relu().maxpool2d(2, 2).flatten();
    b.dense(32).relu();
    if (name == "lenet5_dropout") b.dropout(0.25f);
    b.dense(16).relu();
    if (name == "lenet5_dropout") b.dropout(0.25f);
    return b.dense(classes).softmax().build();
  }
  if (name == "mlp_xor") return ModelBuilder("mlp_xor").input({2}).dense(16).relu().dense(2).softmax().build();
  if (name == "mlp_blobs") return ModelBuilder("mlp_blobs").input({4}).dense(16).relu().dense(classes).softmax().build();
  throw Error(ErrorCode::Config, "unknown model '" + std::string(name) + "'");
}

IRModel random_model(std::mt19937_64& rng, std::size_t min_params) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); };
  for (;;) {
    ModelBuilder b("rand_" + std::to_string(rng() % 100000));
    if (rng() % 2) {
      b.input({pick(2, 12)});
    } else {
      const std::size_t side = pick(5, 10);
      b.input({pick(1, 3), side, side});
      const std::size_t convs = pick(1, 2);
      for (std::size_t c = 0; c < convs; ++c) {
        const std::size_t k = pick(1, 3);
        b.conv2d(k, pick(1, 6), pick(1, 2), pick(0, 1));
        switch (rng() % 3) {
          case 0: b.relu(); break;
          case 1: b.prelu(); break;
          default: break;
        }
        if (rng() % 2) b.maxpool2d(pick(1, 2), pick(1, 2));
      }
      b.flatten();
    }
    const std::size_t dense = pick(1, 3);
    for (std::size_t d = 0; d < dense; ++d) {
      b.dense(pick(2, 12));
      switch (rng() % 4) {
        case 0: b.relu(); break;
        case 1: b.prelu(); break;
        case 2: b.dropout(static_cast<float>(pick(1, 9)) / 10.0f); break;
        default: break;
      }
    }
    if (rng() % 2) b.softmax();
    try {
      IRModel m = b.build();
      if (total_params(m) >= min_params) return m;
    } catch (const Error&) {
      // shapes collapsed below a kernel; draw again
    }
  }
}

}  // namespace coldcarve
