#pragma once

#include <string>

#include <json.hpp>

#include "sled/common.hpp"

namespace sled {

// Hidden activations of one layer: L token rows by d hidden units.
struct LatentRep {
  Mat values;
  int layer = 0;

  int token_count() const { return values.rows; }
  int hidden_dim() const { return values.cols; }
};

// Validates finiteness and L >= 1, d >= 1. Throws std::invalid_argument.
LatentRep make_latent(Mat values, int layer);

// JSON envelope {L, d, layer, values_b64}; values travel as little-endian
// float32 row-major bytes. This is the same representation that crosses the
// oracle wire, so doubles are quantized to float32 on the way out.
nlohmann::json latent_to_json(const LatentRep& z);
LatentRep latent_from_json(const nlohmann::json& j);

// Raw blob codec without the envelope (used by dictionary files).
std::vector<std::uint8_t> latent_to_blob(const LatentRep& z);
LatentRep latent_from_blob(const std::vector<std::uint8_t>& blob, int rows, int cols, int layer);

}  // namespace sled
