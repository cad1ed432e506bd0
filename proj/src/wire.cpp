#include "sled/wire.hpp"

#include <cmath>

#include <httplib.h>

namespace sled {

oracle_fault oracle_fault_from_name(const std::string& name) {
  if (name == "timeout") return oracle_fault::timeout;
  if (name == "transport") return oracle_fault::transport;
  if (name == "schema") return oracle_fault::schema;
  if (name == "parse") return oracle_fault::parse;
  if (name == "decode") return oracle_fault::decode;
  return oracle_fault::unavailable;
}

SidecarClient::SidecarClient(SidecarConfig config) : config_(std::move(config)) {}

nlohmann::json SidecarClient::call(const std::string& route, const nlohmann::json& request) {
  httplib::Client http(config_.host, config_.port);
  http.set_connection_timeout(0, static_cast<long long>(config_.timeout_ms) * 1000);
  http.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);

  std::string path = config_.base_path + route;
  httplib::Result res = http.Post(path, request.dump(), "application/json");
  if (!res) {
    oracle_fault kind = res.error() == httplib::Error::ConnectionTimeout ||
                                res.error() == httplib::Error::Read
                            ? oracle_fault::timeout
                            : oracle_fault::transport;
    throw oracle_error(kind, "sidecar " + route + " failed: " +
                                 std::string(httplib::to_string(res.error())));
  }
  if (res->status != 200)
    throw oracle_error(oracle_fault::transport,
                       "sidecar " + route + " returned HTTP " + std::to_string(res->status));

  nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.is_object() || !reply.contains("ok") ||
      !reply["ok"].is_boolean())
    throw oracle_error(oracle_fault::schema,
                       "sidecar " + route + " reply is not a response envelope");
  if (!reply["ok"].get<bool>()) {
    std::string kind = "unavailable";
    std::string detail = "unspecified sidecar error";
    if (reply.contains("error") && reply["error"].is_object()) {
      const nlohmann::json& err = reply["error"];
      if (err.contains("kind") && err["kind"].is_string()) kind = err["kind"].get<std::string>();
      if (err.contains("detail") && err["detail"].is_string())
        detail = err["detail"].get<std::string>();
    }
    throw oracle_error(oracle_fault_from_name(kind), "sidecar " + route + ": " + detail);
  }
  if (!reply.contains("payload") || !reply["payload"].is_object())
    throw oracle_error(oracle_fault::schema, "sidecar " + route + " reply has no payload");
  return reply["payload"];
}

LatentRep SidecarClient::encode(const std::string& prompt) {
  nlohmann::json payload = call("/encode", {{"prompt", prompt}});
  try {
    return latent_from_json(payload);
  } catch (const std::exception& e) {
    throw oracle_error(oracle_fault::schema,
                       std::string("sidecar /encode payload is not a latent envelope: ") +
                           e.what());
  }
}

std::string SidecarClient::decode(const LatentRep& z) {
  nlohmann::json payload = call("/decode", {{"latent", latent_to_json(z)}});
  if (!payload.contains("prompt") || !payload["prompt"].is_string())
    throw oracle_error(oracle_fault::schema, "sidecar /decode payload has no prompt");
  return payload["prompt"].get<std::string>();
}

SidecarClient::TargetResponse SidecarClient::respond(const std::string& prompt) {
  nlohmann::json payload = call("/respond", {{"prompt", prompt}});
  if (!payload.contains("text") || !payload["text"].is_string())
    throw oracle_error(oracle_fault::schema, "sidecar /respond payload has no text");
  TargetResponse response;
  response.text = payload["text"].get<std::string>();
  if (payload.contains("target_logprob")) {
    if (!payload["target_logprob"].is_number())
      throw oracle_error(oracle_fault::schema,
                         "sidecar /respond target_logprob is not a number");
    response.target_logprob = payload["target_logprob"].get<double>();
    if (!std::isfinite(*response.target_logprob))
      throw oracle_error(oracle_fault::schema, "sidecar /respond target_logprob not finite");
  }
  return response;
}

std::vector<double> SidecarClient::grad(const std::vector<double>& delta,
                                        const std::string& dictionary_ref,
                                        const std::string& target) {
  nlohmann::json payload = call(
      "/grad", {{"delta", delta}, {"dictionary_ref", dictionary_ref}, {"target", target}});
  if (!payload.contains("grad") || !payload["grad"].is_array())
    throw oracle_error(oracle_fault::schema, "sidecar /grad payload has no grad array");
  std::vector<double> g;
  try {
    g = payload["grad"].get<std::vector<double>>();
  } catch (const std::exception&) {
    throw oracle_error(oracle_fault::schema, "sidecar /grad array is not numeric");
  }
  if (g.size() != delta.size())
    throw oracle_error(oracle_fault::schema,
                       "sidecar /grad returned length " + std::to_string(g.size()) +
                           " for a length-" + std::to_string(delta.size()) + " delta");
  return g;
}

double SidecarClient::ppl(const std::string& text) {
  nlohmann::json payload = call("/ppl", {{"text", text}});
  if (!payload.contains("ppl") || !payload["ppl"].is_number())
    throw oracle_error(oracle_fault::schema, "sidecar /ppl payload has no ppl number");
  double value = payload["ppl"].get<double>();
  if (!std::isfinite(value) || value <= 0.0)
    throw oracle_error(oracle_fault::schema,
                       "sidecar /ppl value must be a positive real, got " +
                           std::to_string(value));
  return value;
}

OracleBundle make_sidecar_bundle(std::shared_ptr<SidecarClient> client, int layer,
                                 int hidden_dim, const std::string& dictionary_ref,
                                 const std::string& target) {
  OracleBundle bundle;
  bundle.layer = layer;
  bundle.hidden_dim = hidden_dim;
  std::string endpoint =
      client->config().host + ":" + std::to_string(client->config().port);
  for (EndpointInfo* info : {&bundle.encoder_info, &bundle.decoder_info, &bundle.target_info,
                             &bundle.grad_info, &bundle.surrogate_info}) {
    info->kind = oracle_kind::remote_sidecar;
  }
  bundle.encoder_info.name = "sidecar:" + endpoint + "/encode";
  bundle.decoder_info.name = "sidecar:" + endpoint + "/decode";
  bundle.target_info.name = "sidecar:" + endpoint + "/respond";
  bundle.grad_info.name = "sidecar:" + endpoint + "/grad";
  bundle.surrogate_info.name = "sidecar:" + endpoint + "/grad";

  bundle.encode = [client](const std::string& prompt) { return client->encode(prompt); };
  bundle.decode = [client](const LatentRep& z) { return client->decode(z); };
  bundle.respond = [client](const std::string& prompt) { return client->respond(prompt).text; };
  bundle.objective = [client](const std::string& prompt) {
    SidecarClient::TargetResponse response = client->respond(prompt);
    if (!response.target_logprob)
      throw oracle_error(oracle_fault::schema,
                         "sidecar /respond carries no target logprob; exact objective "
                         "unavailable");
    return -*response.target_logprob;
  };
  bundle.grad = [client, dictionary_ref, target](const std::vector<double>& delta) {
    return client->grad(delta, dictionary_ref, target);
  };
  bundle.ppl = [client](const std::string& text) { return client->ppl(text); };
  return bundle;
}

} // namespace sled
