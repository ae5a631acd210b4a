#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "milg/autodiff.hpp"

namespace milg {

struct GradCheckOptions {
  double eps = 1e-6;
  /// Upper bound on finite-difference probes per parameter tensor; larger
  /// tensors are sampled (seeded) rather than probed exhaustively.
  std::size_t max_entries_per_param = 64;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
};

/// Builds the scalar loss on a fresh tape. The params passed to grad_check
/// must be the tensors the builder feeds through Tape::param().
using LossBuilder = std::function<ad::Var(ad::Tape<double>&)>;

/// Compares reverse-mode gradients against central differences.
/// Relative error per entry is |analytic - numeric| / max(1, |analytic|, |numeric|).
/// Throws NumericError if the loss is not finite.
GradCheckResult grad_check(const LossBuilder& loss, const std::vector<Tensor<double>*>& params,
                           const GradCheckOptions& opts = {});

}  // namespace milg
