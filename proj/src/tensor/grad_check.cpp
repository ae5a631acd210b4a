#include "milg/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "milg/rng.hpp"

namespace milg {

namespace {

double eval_loss(const LossBuilder& loss) {
  ad::Tape<double> tape;
  const double v = tape.value(loss(tape))[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& loss, const std::vector<Tensor<double>*>& params,
                           const GradCheckOptions& opts) {
  for (auto* p : params) {
    if (!p->requires_grad()) p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    ad::Tape<double> tape;
    ad::Var out = loss(tape);
    if (!std::isfinite(tape.value(out)[0])) throw NumericError("grad_check: loss is not finite");
    tape.backward(out);
  }

  Rng rng(opts.seed);
  GradCheckResult result;
  for (auto* p : params) {
    std::vector<std::size_t> entries(p->numel());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (entries.size() > opts.max_entries_per_param) {
      rng.shuffle(entries);
      entries.resize(opts.max_entries_per_param);
    }
    for (std::size_t idx : entries) {
      const double saved = (*p)[idx];
      (*p)[idx] = saved + opts.eps;
      const double up = eval_loss(loss);
      (*p)[idx] = saved - opts.eps;
      const double down = eval_loss(loss);
      (*p)[idx] = saved;
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double analytic = p->grad()[idx];
      const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic - numeric) / denom);
      ++result.entries_checked;
    }
  }
  return result;
}

}  // namespace milg
