#pragma once

#include <cstddef>
#include <vector>

#include "perturbmap/model.hpp"

namespace pmap {

// Per-variable probability rows q_d(k).
struct MarginalTable {
  std::vector<std::vector<double>> rows;

  int num_vars() const noexcept { return static_cast<int>(rows.size()); }
  const std::vector<double>& operator[](int d) const { return rows[static_cast<std::size_t>(d)]; }
  std::vector<double>& operator[](int d) { return rows[static_cast<std::size_t>(d)]; }

  // Throws StructuralError unless every row is non-negative and sums to 1 within tol.
  void check(double tol = 1e-9) const;
  // argmax_k q_d(k) per variable, ties to the smallest label.
  Labeling argmax() const;
};

struct ExactInferenceResult {
  double log_partition = 0.0;
  Labeling map_labeling;
  double map_value = 0.0;
  MarginalTable marginals;
};

inline constexpr std::size_t kBruteForceLimit = std::size_t{1} << 20;

// Exhaustive enumeration. MAP ties go to the lexicographically smallest
// labeling. Throws CapacityError above kBruteForceLimit states.
ExactInferenceResult brute_force(const CompiledPotentials& p);

// MAP part of brute_force only (same tie rule and limit).
Labeling brute_force_map(const CompiledPotentials& p);

// Exact MAP on a chain by dynamic programming; ties go to the smallest label
// at each backtracking step. Throws PreconditionError on non-chains.
Labeling viterbi_map(const CompiledPotentials& p);

// Viterbi over models whose edges are all of the form (d, d+1), possibly with
// gaps (the shape a chain takes after clamping a variable).
Labeling path_forest_map(const CompiledPotentials& p);
bool is_path_forest(const PairwiseModel& m) noexcept;

// log Z(f) by the log-space forward recursion.
double forward_log_partition(const CompiledPotentials& p);

MarginalTable forward_backward_marginals(const CompiledPotentials& p);

// Gradient of log P(y | x, w) = f(y|x) - A(f, x) on a chain:
// Psi(x, y) - E_{P(.|x,w)}[Psi(x, .)].
std::vector<double> crf_exact_gradient(const WeightVector& w, const FeatureInstance& x,
                                       const Labeling& y);

// log P(y | x, w) on a chain.
double crf_log_likelihood(const WeightVector& w, const FeatureInstance& x, const Labeling& y);

}  // namespace pmap
