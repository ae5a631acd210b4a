#include "milg/kfold.hpp"

#include <algorithm>
#include <sstream>

#include "milg/error.hpp"
#include "milg/rng.hpp"

namespace milg {

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::size_t> labels, std::size_t k,
                                                       std::size_t n_classes, std::uint64_t seed) {
  if (k < 2) throw UserError("k-fold needs k >= 2, got " + std::to_string(k));
  std::vector<std::vector<std::size_t>> members(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes) throw UserError("label " + std::to_string(labels[i]) + " out of range");
    members[labels[i]].push_back(i);
  }
  bool feasible = true;
  for (const auto& m : members)
    if (!m.empty() && m.size() < k) feasible = false;
  if (!feasible) {
    std::ostringstream os;
    os << "stratified " << k << "-fold split infeasible; class counts:";
    for (std::size_t c = 0; c < n_classes; ++c) os << ' ' << c << '=' << members[c].size();
    throw UserError(os.str());
  }

  Rng rng(derive_seed(seed, 0xF01D));
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t deal = 0;
  for (auto& m : members) {
    rng.shuffle(m);
    for (std::size_t i : m) folds[deal++ % k].push_back(i);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

}  // namespace milg
