#include "cbal/params.hpp"

#include <cmath>

namespace cbal {

ModelKind parse_model_kind(std::string_view name) {
  if (name == "single") return ModelKind::single;
  if (name == "coupled") return ModelKind::coupled;
  if (name == "nonlinear") return ModelKind::nonlinear;
  throw ValidationError("unknown model kind '" + std::string(name) +
                        "' (expected single, coupled or nonlinear)");
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::single: return "single";
    case ModelKind::coupled: return "coupled";
    case ModelKind::nonlinear: return "nonlinear";
  }
  return "unknown";
}

void ModelParams::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(gamma) || !finite(alpha) || !finite(beta) || !finite(nu) ||
      !finite(tau) || !finite(dt))
    throw ValidationError("model parameters must be finite");
  if (gamma <= 0) throw ValidationError("gamma must be > 0");
  if (tau <= 0) throw ValidationError("tau must be > 0");
  if (dt <= 0) throw ValidationError("dt must be > 0");
  if (nu < 0) throw ValidationError("nu must be >= 0");
  const double ratio = tau / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
    throw ValidationError("tau/dt must be an integer");
  if (std::round(ratio) < 10) throw ValidationError("dt must be <= tau/10");
}

std::size_t ModelParams::delay_steps() const {
  return static_cast<std::size_t>(std::llround(tau / dt));
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  return a.gamma == b.gamma && a.alpha == b.alpha && a.beta == b.beta &&
         a.nu == b.nu && a.tau == b.tau && a.dt == b.dt && a.seed == b.seed;
}

}  // namespace cbal
