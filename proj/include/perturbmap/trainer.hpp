#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "perturbmap/exact.hpp"
#include "perturbmap/gumbel.hpp"
#include "perturbmap/model.hpp"

namespace pmap {

enum class StepRule {
  // gamma_h = 1 / (lambda h)
  inverse_lambda_h,
  constant,
};

struct Acceleration {
  // Skip clamped solves whose label already agrees with the unconditional maximizer.
  bool gumbel_reduction = true;
  // Reuse one cut state for the unconditional and all clamped solves of an element.
  bool dynamic_cuts = true;
};

struct TrainConfig {
  double lambda = 0.01;
  int iters = 1000;
  int batch = 1;
  StepRule step_rule = StepRule::inverse_lambda_h;
  double step_size = 0.01;  // used by StepRule::constant
  LossSpec loss = LossSpec::hamming();
  std::uint64_t seed = 0;
  Solver solver = Solver::chain;
  PairwiseParam pairwise = PairwiseParam::label_pairs;
  double kappa = 1.0;
  int inference_samples = 100;
  // Gumbel draws per element and step; 1 is plain double SGD.
  int noise_samples = 1;
  Acceleration accel;
  // Phase-3 iterations of the semi-supervised driver; < 0 means iters.
  int semi_iters = -1;
  // Projection onto supermodular weights after each step; unset means
  // "only when the solver is graphcut".
  std::optional<bool> project;
  bool record_trajectory = false;

  // Throws StructuralError on out-of-range settings.
  void validate() const;
  bool projects() const { return project.value_or(solver == Solver::graphcut); }
  double step(int h) const;
};

struct SolveCounters {
  std::uint64_t map_solves = 0;      // unconditional perturbed MAPs
  std::uint64_t clamped_solves = 0;  // conditional MAPs actually solved
  std::uint64_t skipped = 0;         // conditional MAPs skipped by Gumbel reduction

  SolveCounters& operator+=(const SolveCounters& o) {
    map_solves += o.map_solves;
    clamped_solves += o.clamped_solves;
    skipped += o.skipped;
    return *this;
  }
  // clamped_solves + skipped: the count without Gumbel reduction.
  std::uint64_t clamped_budget() const { return clamped_solves + skipped; }
};

struct StepStats {
  double objective = 0.0;  // batch-average objective estimate, before regularization
  SolveCounters counters;
};

struct TrainReport {
  WeightVector weights;           // last iterate
  WeightVector averaged;          // mean of the iterates over the last half
  std::vector<double> objective;  // per iteration, regularization included
  std::vector<SolveCounters> per_iteration;
  SolveCounters counters;
  std::vector<std::pair<std::string, double>> phase_seconds;
  std::vector<std::vector<double>> trajectory;  // w after each step, when recorded
  WeightVector phase1;  // averaged phase-1 iterate (semi-supervised only)
};

// An unlabeled or partially labeled element together with the marginals used
// in its expected objective and the loss weights derived from them.
struct SoftTarget {
  const FeatureInstance* x = nullptr;
  MarginalTable q;
  std::vector<std::vector<double>> theta;  // theta_d(k)
};

// theta_d(k) for an element with marginals q: volume-balanced rules use the
// approximate class volumes V_k = sum_d V_d q_d(k), floored at 1e-6 sum_d V_d.
std::vector<std::vector<double>> soft_loss_weights(const LossSpec& spec, const FeatureInstance& x,
                                                   const MarginalTable& q, int num_labels);

SoftTarget make_soft_target(const FeatureInstance& x, MarginalTable q, const LossSpec& spec, int num_labels);

// Weight layout with dimensions taken from the instances; throws
// StructuralError on inconsistent feature dimensions.
WeightLayout layout_for(std::span<const FeatureInstance> data, PairwiseParam pairwise, int num_labels = 0);

// --- per-element primitives with explicit noise ---------------------------

// Adds scale * (Psi(x, y) - Psi(x, y*)) to grad; returns f(y) - (f(y*) + z(y*)).
double loglik_element(const WeightVector& w, const FeatureInstance& x, const Labeling& y, const GumbelNoise& z,
                      const TrainConfig& cfg, double scale, std::span<double> grad, SolveCounters& c);

// Adds scale * sum_d theta_d (Psi(x, y*_{B,d}) - Psi(x, y*_A)) to grad and
// returns sum_d theta_d (B_d - A) under the frozen noise z.
double marginal_element(const WeightVector& w, const FeatureInstance& x, const Labeling& y,
                        std::span<const double> theta, const GumbelNoise& z, const TrainConfig& cfg, double scale,
                        std::span<double> grad, SolveCounters& c);

// Expected version over the marginals of t:
// sum_d sum_k q_d(k) theta_d(k) (B_{d,k} - A).
double unsup_element(const WeightVector& w, const SoftTarget& t, const GumbelNoise& z, const TrainConfig& cfg,
                     double scale, std::span<double> grad, SolveCounters& c);

// --- steps ------------------------------------------------------------------
// Noise for batch element t and draw m is seeded with derive_seed(stream, {t, m}).

StepStats sgd_loglik_step(WeightVector& w, std::span<const FeatureInstance* const> batch, int h,
                          const TrainConfig& cfg, std::uint64_t stream);

StepStats sgd_marginal_step(WeightVector& w, std::span<const FeatureInstance* const> batch, int h,
                            const TrainConfig& cfg, std::uint64_t stream);

StepStats sgd_unsup_step(WeightVector& w, std::span<const SoftTarget* const> batch, int h, const TrainConfig& cfg,
                         std::uint64_t stream);

// Labeled marginal gradient plus kappa times the expected unlabeled gradient
// in one update. With an empty unlabeled batch or kappa = 0 it is exactly
// sgd_marginal_step.
StepStats sgd_mixed_step(WeightVector& w, std::span<const FeatureInstance* const> labeled,
                         std::span<const SoftTarget* const> unlabeled, int h, const TrainConfig& cfg,
                         std::uint64_t labeled_stream, std::uint64_t unlabeled_stream);

// --- drivers ----------------------------------------------------------------

// Log-likelihood SGD for the 0-1 loss, the marginal objective for (weighted) Hamming.
TrainReport train_supervised(std::span<const FeatureInstance> data, const TrainConfig& cfg);

// Phase 1 supervised from w = 0, phase 2 marginals of the unlabeled set under
// the phase-1 averaged weights, phase 3 mixed steps continuing the phase-1
// iteration counter and labeled seed stream.
TrainReport train_semisupervised(std::span<const FeatureInstance> labeled, std::span<const FeatureInstance> unlabeled,
                                 const TrainConfig& cfg);

// Projects the pairwise block so that every compiled table is supermodular
// for nonnegative edge features. Potts: w <- min(w, 0). Label pairs: per
// feature, Euclidean projection onto w00 + w11 - w01 - w10 >= 0. Binary
// layouts only for label pairs.
void project_supermodular(WeightVector& w);

enum class PredictMode { map, marginal };

Labeling predict(const WeightVector& w, const FeatureInstance& x, PredictMode mode, const TrainConfig& cfg,
                 std::uint64_t seed);

}  // namespace pmap
