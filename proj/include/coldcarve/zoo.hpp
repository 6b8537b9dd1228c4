#pragma once

#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "coldcarve/model_ir.hpp"

namespace coldcarve {

// Desk-scale reconstructions of the evaluated architectures for 1x12x12
// inputs and `classes` outputs. Names: base, base_wide, base_dropout,
// base_prelu, lenet5, lenet5_dropout, plus mlp_xor (2-16-2) and mlp_blobs.
std::vector<std::string> zoo_names();
IRModel zoo_model(std::string_view name, std::size_t classes = 3);  // throws Config

// Random valid chain model (rank-1 or rank-3 input) with at least
// `min_params` parameters; used by property tests.
IRModel random_model(std::mt19937_64& rng, std::size_t min_params = 64);

}  // namespace coldcarve
