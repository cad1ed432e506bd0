#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sled/dataset.hpp"
#include "sled/latent.hpp"

namespace sled {

enum class oracle_kind { synthetic, gateway, remote_sidecar };

inline const char* oracle_kind_name(oracle_kind k) {
  switch (k) {
    case oracle_kind::synthetic: return "synthetic";
    case oracle_kind::gateway: return "gateway";
    case oracle_kind::remote_sidecar: return "remote-sidecar";
  }
  return "unknown";
}

struct EndpointInfo {
  oracle_kind kind = oracle_kind::synthetic;
  std::string name = "unset";
};

enum class gradient_mode { exact, surrogate_weighted, finite_difference };

inline const char* gradient_mode_name(gradient_mode m) {
  switch (m) {
    case gradient_mode::exact: return "exact";
    case gradient_mode::surrogate_weighted: return "surrogate-weighted";
    case gradient_mode::finite_difference: return "finite-difference";
  }
  return "unknown";
}

struct SeVerdict {
  int value = 0;  // 0 or 1
  bool parse_failed = false;
};

// Counts of billable oracle invocations made by one attack run.
struct QueryCount {
  long decoder = 0;
  long target = 0;
  long judge = 0;
  long se_checker = 0;
  long total() const { return decoder + target + judge + se_checker; }
};

// One bundle wires every oracle role an attack needs. Roles an
// implementation cannot provide stay default-constructed (empty
// std::function); validate_bundle checks the set needed for a gradient mode.
struct OracleBundle {
  EndpointInfo encoder_info, decoder_info, target_info, judge_info;
  EndpointInfo se_checker_info, sc_checker_info, grad_info, surrogate_info;

  // Dimensions the encoder and decoder agreed on; 0 means unspecified.
  int layer = 0;
  int hidden_dim = 0;

  std::function<LatentRep(const std::string&)> encode;
  std::function<std::string(const LatentRep&)> decode;
  // Attack objective for a decoded prompt (the -log P(y*|x) stand-in).
  std::function<double(const std::string&)> objective;
  // Target model free response, used when a judge scores the response.
  std::function<std::string(const std::string&)> respond;
  std::function<SeVerdict(const QuestionRecord&, const std::string&)> se_check;
  std::function<int(const std::string&)> sc_check;
  // Judge score J of (prompt, target response); weights surrogate gradients.
  std::function<double(const std::string&, const std::string&)> judge_weight;
  // d(-log P(y*|x))/d(delta), length n.
  std::function<std::vector<double>(const std::vector<double>&)> grad;
  // d(log P_surrogate(y*|x))/d(delta), length n.
  std::function<std::vector<double>(const std::vector<double>&)> surrogate_grad;
  std::function<double(const std::string&)> ppl;
};

// Returns "" when the bundle satisfies the roles required by the mode,
// otherwise a message naming the first missing role.
std::string validate_bundle(const OracleBundle& bundle, gradient_mode mode);

} // namespace sled
