#include "sled/latent.hpp"

#include <cmath>
#include <stdexcept>

namespace sled {

LatentRep make_latent(Mat values, int layer) {
  if (values.rows < 1 || values.cols < 1)
    throw std::invalid_argument("make_latent: latent must be at least 1x1, got " +
                                std::to_string(values.rows) + "x" + std::to_string(values.cols));
  if (layer < 0) throw std::invalid_argument("make_latent: layer index must be nonnegative");
  for (double x : values.data)
    if (!std::isfinite(x)) throw std::invalid_argument("make_latent: non-finite entry");
  return LatentRep{std::move(values), layer};
}

nlohmann::json latent_to_json(const LatentRep& z) {
  return nlohmann::json{{"L", z.values.rows},
                        {"d", z.values.cols},
                        {"layer", z.layer},
                        {"values_b64", base64_encode(pack_f32le(z.values.data))}};
}

LatentRep latent_from_json(const nlohmann::json& j) {
  for (const char* key : {"L", "d", "layer", "values_b64"})
    if (!j.contains(key))
      throw oracle_error(oracle_fault::schema,
                         std::string("latent envelope missing field '") + key + "'");
  if (!j["L"].is_number_integer() || !j["d"].is_number_integer() ||
      !j["layer"].is_number_integer() || !j["values_b64"].is_string())
    throw oracle_error(oracle_fault::schema, "latent envelope field has wrong type");
  int rows = j["L"].get<int>();
  int cols = j["d"].get<int>();
  int layer = j["layer"].get<int>();
  std::vector<std::uint8_t> blob;
  try {
    blob = base64_decode(j["values_b64"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw oracle_error(oracle_fault::schema, std::string("latent envelope: ") + e.what());
  }
  return latent_from_blob(blob, rows, cols, layer);
}

std::vector<std::uint8_t> latent_to_blob(const LatentRep& z) {
  return pack_f32le(z.values.data);
}

LatentRep latent_from_blob(const std::vector<std::uint8_t>& blob, int rows, int cols, int layer) {
  if (rows < 1 || cols < 1)
    throw oracle_error(oracle_fault::schema, "latent blob: non-positive shape");
  if (blob.size() != static_cast<size_t>(rows) * cols * 4)
    throw oracle_error(oracle_fault::schema,
                       "latent blob: expected " + std::to_string(size_t(rows) * cols * 4) +
                           " bytes, got " + std::to_string(blob.size()));
  Mat m(rows, cols);
  m.data = unpack_f32le(blob);
  for (double x : m.data)
    if (!std::isfinite(x)) throw oracle_error(oracle_fault::schema, "latent blob: non-finite entry");
  return LatentRep{std::move(m), layer};
}

}  // namespace sled
