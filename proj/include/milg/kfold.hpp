#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace milg {

/// Stratified k-fold split. Members of each class are shuffled with the seed
/// and dealt round-robin across folds, continuing the deal from one class to
/// the next so fold sizes differ by at most one. Returns the test indices of
/// each fold in ascending order. Throws UserError when k < 2 or some present
/// class has fewer than k members (message lists the class counts).
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::size_t> labels, std::size_t k,
                                                       std::size_t n_classes, std::uint64_t seed);

}  // namespace milg
