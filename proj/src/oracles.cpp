#include "sled/oracles.hpp"

namespace sled {

std::string validate_bundle(const OracleBundle& bundle, gradient_mode mode) {
  if (!bundle.decode) return "bundle is missing the decoder role";
  if (!bundle.objective) return "bundle is missing the target objective role";
  if (!bundle.se_check) return "bundle is missing the SE checker role";
  switch (mode) {
    case gradient_mode::exact:
      if (!bundle.grad) return "gradient mode exact requires a gradient endpoint";
      break;
    case gradient_mode::surrogate_weighted:
      if (!bundle.respond)
        return "gradient mode surrogate-weighted requires the target respond role";
      if (!bundle.judge_weight)
        return "gradient mode surrogate-weighted requires a judge score";
      if (!bundle.surrogate_grad)
        return "gradient mode surrogate-weighted requires a surrogate gradient endpoint";
      break;
    case gradient_mode::finite_difference:
      break;
  }
  return "";
}

} // namespace sled
