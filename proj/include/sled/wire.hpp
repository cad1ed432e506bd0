#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sled/latent.hpp"
#include "sled/oracles.hpp"

namespace sled {

struct SidecarConfig {
  std::string host = "127.0.0.1";
  int port = 0;
  std::string base_path;  // optional route prefix, e.g. "/v1"
  int timeout_ms = 10000;
};

// HTTP client for the latent-oracle sidecar. Every route is a POST of one
// JSON request; responses carry {ok, payload | error{kind, detail}}. Latents
// travel as the latent_to_json envelope (little-endian float32 blob in
// base64). Faults map onto oracle_error kinds: no response → timeout or
// transport, malformed or incomplete payload → schema, server-reported
// errors keep their declared kind.
class SidecarClient {
 public:
  explicit SidecarClient(SidecarConfig config);

  LatentRep encode(const std::string& prompt);
  std::string decode(const LatentRep& z);

  struct TargetResponse {
    std::string text;
    std::optional<double> target_logprob;  // log P(y*|x) when the sidecar reports it
  };
  TargetResponse respond(const std::string& prompt);

  std::vector<double> grad(const std::vector<double>& delta, const std::string& dictionary_ref,
                           const std::string& target);
  double ppl(const std::string& text);

  const SidecarConfig& config() const { return config_; }

 private:
  nlohmann::json call(const std::string& route, const nlohmann::json& request);

  SidecarConfig config_;
};

// Wires the sidecar's roles into a bundle: encode, decode, respond, grad,
// ppl, and an objective equal to -log P(y*|x) from the respond route. The SE
// checker, judge, and SC roles are chat-API roles and must be attached by
// the caller before validate_bundle passes.
OracleBundle make_sidecar_bundle(std::shared_ptr<SidecarClient> client, int layer,
                                 int hidden_dim, const std::string& dictionary_ref,
                                 const std::string& target);

oracle_fault oracle_fault_from_name(const std::string& name);

} // namespace sled
