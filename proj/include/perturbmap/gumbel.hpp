#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "perturbmap/exact.hpp"
#include "perturbmap/model.hpp"

namespace pmap {

inline constexpr double kEulerGamma = 0.5772156649015329;

// One realization of zero-mean Gumbel perturbations z_d(k),
// F(z) = exp(-exp(-(z + c))) with c the Euler constant.
struct GumbelNoise {
  std::vector<std::vector<double>> z;
  std::uint64_t seed = 0;

  int num_vars() const noexcept { return static_cast<int>(z.size()); }
  std::span<const double> operator[](int d) const { return z[static_cast<std::size_t>(d)]; }
};

// Inverse CDF of the zero-mean Gumbel law.
inline double gumbel_from_uniform(double u) {
  return -std::log(-std::log(u)) - kEulerGamma;
}

GumbelNoise sample_noise(const PairwiseModel& model, std::uint64_t seed);

// All-zero noise shaped like the model.
GumbelNoise zero_noise(const PairwiseModel& model);

enum class Solver { chain, graphcut, brute };

// Throws PreconditionError when the solver cannot solve p exactly.
void check_solver(const CompiledPotentials& p, Solver solver);

struct MapResult {
  Labeling labeling;
  double value = 0.0;
};

// Plain MAP with the selected exact solver.
MapResult solve_map(const CompiledPotentials& p, Solver solver);

// p with z folded into the unary tables.
CompiledPotentials perturb(const CompiledPotentials& p, const GumbelNoise& z);

// argmax_y f(y) + sum_d z_d(y_d); the value includes the noise term.
MapResult perturbed_map(const CompiledPotentials& p, const GumbelNoise& z, Solver solver);

// max over y_{-d} of sum_{s != d} z_s(y_s) + f(y_{-d} | y_d = k), with the
// returned labeling carrying y_d = k. Noise at d is ignored.
MapResult conditional_perturbed_map(const CompiledPotentials& p, int d, int k, const GumbelNoise& z,
                                    Solver solver);

struct EstimatorConfig {
  int num_samples = 100;
  std::uint64_t seed = 0;
  Solver solver = Solver::brute;
};

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Noise seed of sample m under cfg.
std::uint64_t sample_seed(const EstimatorConfig& cfg, int m);

// Monte-Carlo estimate of the Gumbel bound A_G(f) >= A(f).
Estimate estimate_A(const CompiledPotentials& p, const EstimatorConfig& cfg);

// One sample of B_G(f | y_d = k) under the shared noise z.
double estimate_B(const CompiledPotentials& p, int d, int k, const GumbelNoise& z, Solver solver);

// Average of estimate_B over cfg.num_samples noise draws (same draws as estimate_A).
Estimate estimate_B_average(const CompiledPotentials& p, int d, int k, const EstimatorConfig& cfg);

// Frequency of each label across cfg.num_samples perturbed maximizers.
MarginalTable counting_marginals(const CompiledPotentials& p, const EstimatorConfig& cfg);

// Counting marginals with the given labels clamped; given rows are one-hot.
MarginalTable conditional_counting_marginals(const CompiledPotentials& p,
                                             const std::vector<std::optional<int>>& given,
                                             const EstimatorConfig& cfg);

}  // namespace pmap
