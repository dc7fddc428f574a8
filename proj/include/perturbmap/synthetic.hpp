#pragma once

#include <cstdint>
#include <vector>

#include "perturbmap/model.hpp"
#include "perturbmap/rng.hpp"

namespace pmap {

enum class SyntheticKind { chain, grid };

struct SyntheticConfig {
  SyntheticKind kind = SyntheticKind::chain;
  int num = 10;
  int vars = 8;  // chain length
  int side = 6;  // grid is side x side, binary
  int labels = 2;
  int feat_dim = 4;
  std::uint64_t teacher_seed = 0;
  std::uint64_t seed = 0;
  // Probability of replacing a sampled label by a uniformly drawn other label.
  double label_noise = 0.0;
  // Scale of the teacher's normal draws (unary and pairwise alike).
  double teacher_scale = 1.0;
  // Write every label as unobserved.
  bool hide_labels = false;

  // Throws StructuralError on invalid shapes or ranges.
  void validate() const;
};

struct SyntheticData {
  WeightVector teacher;
  std::vector<FeatureInstance> instances;
};

// Teacher weights: normal draws, pairwise block clamped to <= 0. Chains use
// label-pair transitions with the constant edge feature 1; grids use a Potts
// block over the edge features [1, exp(-|x_i - x_j|^2 / feat_dim)].
WeightVector synthetic_teacher(const SyntheticConfig& cfg);

// Chains are labeled by exact forward-filter backward-sample draws from the
// teacher's Gibbs distribution; grids by one perturb-and-MAP draw (graph cuts),
// which is only approximately a Gibbs sample. Grid volumes are drawn from
// {1, ..., 10}; chain volumes are 1.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

// Exact sample from P(y) proportional to exp(f(y)) on a chain.
Labeling sample_chain(const CompiledPotentials& p, Rng& rng);

}  // namespace pmap
