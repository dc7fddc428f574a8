#include "perturbmap/gumbel.hpp"

#include <algorithm>
#include <string>

#include "perturbmap/cuts.hpp"
#include "perturbmap/errors.hpp"
#include "perturbmap/rng.hpp"

namespace pmap {

namespace {

GumbelNoise restrict_noise(const GumbelNoise& z, const std::vector<int>& keep) {
  GumbelNoise r;
  r.seed = z.seed;
  r.z.reserve(keep.size());
  for (int d : keep) r.z.push_back(z.z.at(static_cast<std::size_t>(d)));
  return r;
}

// Entries count / M whose sequential sum is exactly 1. The last nonzero entry
// absorbs the rounding: with P the prefix sum before it, fl(P + fl(1 - P)) = 1,
// and the zeros after it leave the sum unchanged.
std::vector<double> frequency_row(const std::vector<int>& counts, int total) {
  std::vector<double> row(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) row[k] = static_cast<double>(counts[k]) / total;
  std::size_t last = counts.size();
  while (last > 0 && counts[last - 1] == 0) --last;
  if (last == 0) throw InvariantViolation("empty frequency row");
  double prefix = 0.0;
  for (std::size_t k = 0; k + 1 < last; ++k) prefix += row[k];
  row[last - 1] = 1.0 - prefix;
  double s = 0.0;
  for (double q : row) s += q;
  if (s != 1.0 || row[last - 1] < 0.0) throw InvariantViolation("frequency row does not sum to 1");
  return row;
}

}  // namespace

GumbelNoise sample_noise(const PairwiseModel& model, std::uint64_t seed) {
  Rng rng(seed);
  GumbelNoise n;
  n.seed = seed;
  n.z.resize(static_cast<std::size_t>(model.num_vars()));
  for (int d = 0; d < model.num_vars(); ++d) {
    auto& row = n.z[static_cast<std::size_t>(d)];
    row.resize(static_cast<std::size_t>(model.labels(d)));
    for (double& v : row) v = gumbel_from_uniform(rng.uniform_open());
  }
  return n;
}

GumbelNoise zero_noise(const PairwiseModel& model) {
  GumbelNoise n;
  n.z.resize(static_cast<std::size_t>(model.num_vars()));
  for (int d = 0; d < model.num_vars(); ++d)
    n.z[static_cast<std::size_t>(d)].assign(static_cast<std::size_t>(model.labels(d)), 0.0);
  return n;
}

void check_solver(const CompiledPotentials& p, Solver solver) {
  const PairwiseModel& m = p.model();
  switch (solver) {
    case Solver::chain:
      if (!is_path_forest(m)) throw PreconditionError("chain solver requires a chain-structured model");
      return;
    case Solver::graphcut:
      if (m.num_vars() > 0 && !m.is_binary()) throw PreconditionError("graph cuts require binary labels");
      if (!p.is_supermodular_binary(kSupermodularTolerance))
        throw PreconditionError("graph cuts require supermodular potentials");
      return;
    case Solver::brute:
      if (m.state_space_size() > kBruteForceLimit)
        throw PreconditionError("state space too large for the brute-force solver");
      return;
  }
}

MapResult solve_map(const CompiledPotentials& p, Solver solver) {
  check_solver(p, solver);
  MapResult r;
  switch (solver) {
    case Solver::chain:
      r.labeling = path_forest_map(p);
      break;
    case Solver::graphcut: {
      DynamicCutState s(p);
      r.labeling = s.solve().first;
      break;
    }
    case Solver::brute:
      r.labeling = brute_force_map(p);
      break;
  }
  r.value = evaluate_potential(p, r.labeling);
  return r;
}

CompiledPotentials perturb(const CompiledPotentials& p, const GumbelNoise& z) {
  const PairwiseModel& m = p.model();
  if (z.num_vars() != m.num_vars()) throw StructuralError("noise shape does not match the model");
  CompiledPotentials out = p;
  for (int d = 0; d < m.num_vars(); ++d) {
    auto u = out.unary(d);
    const auto zd = z[d];
    if (zd.size() != u.size()) throw StructuralError("noise row " + std::to_string(d) + " has the wrong length");
    for (std::size_t k = 0; k < u.size(); ++k) u[k] += zd[k];
  }
  return out;
}

MapResult perturbed_map(const CompiledPotentials& p, const GumbelNoise& z, Solver solver) {
  return solve_map(perturb(p, z), solver);
}

MapResult conditional_perturbed_map(const CompiledPotentials& p, int d, int k, const GumbelNoise& z,
                                    Solver solver) {
  if (z.num_vars() != p.model().num_vars()) throw StructuralError("noise shape does not match the model");
  const ClampedProblem c = clamp_variable(p, d, k);
  const MapResult r = perturbed_map(c.reduced, restrict_noise(z, c.original_index), solver);
  return {c.expand(r.labeling), r.value};
}

std::uint64_t sample_seed(const EstimatorConfig& cfg, int m) {
  return derive_seed(cfg.seed, {static_cast<std::uint64_t>(m)});
}

namespace {

Estimate mean_and_stderr(const std::vector<double>& v) {
  Estimate e;
  const double n = static_cast<double>(v.size());
  for (double x : v) e.mean += x;
  e.mean /= n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - e.mean) * (x - e.mean);
    e.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return e;
}

void check_config(const EstimatorConfig& cfg) {
  if (cfg.num_samples < 1) throw StructuralError("number of samples must be at least 1");
}

}  // namespace

Estimate estimate_A(const CompiledPotentials& p, const EstimatorConfig& cfg) {
  check_config(cfg);
  check_solver(p, cfg.solver);
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(cfg.num_samples));
  for (int m = 0; m < cfg.num_samples; ++m)
    values.push_back(perturbed_map(p, sample_noise(p.model(), sample_seed(cfg, m)), cfg.solver).value);
  return mean_and_stderr(values);
}

double estimate_B(const CompiledPotentials& p, int d, int k, const GumbelNoise& z, Solver solver) {
  return conditional_perturbed_map(p, d, k, z, solver).value;
}

Estimate estimate_B_average(const CompiledPotentials& p, int d, int k, const EstimatorConfig& cfg) {
  check_config(cfg);
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(cfg.num_samples));
  for (int m = 0; m < cfg.num_samples; ++m)
    values.push_back(estimate_B(p, d, k, sample_noise(p.model(), sample_seed(cfg, m)), cfg.solver));
  return mean_and_stderr(values);
}

MarginalTable counting_marginals(const CompiledPotentials& p, const EstimatorConfig& cfg) {
  return conditional_counting_marginals(
      p, std::vector<std::optional<int>>(static_cast<std::size_t>(p.model().num_vars())), cfg);
}

MarginalTable conditional_counting_marginals(const CompiledPotentials& p,
                                             const std::vector<std::optional<int>>& given,
                                             const EstimatorConfig& cfg) {
  check_config(cfg);
  const PairwiseModel& m = p.model();
  const ClampedProblem c = clamp_variables(p, given);
  check_solver(c.reduced, cfg.solver);

  std::vector<std::vector<int>> counts(static_cast<std::size_t>(m.num_vars()));
  for (int d = 0; d < m.num_vars(); ++d) counts[static_cast<std::size_t>(d)].assign(static_cast<std::size_t>(m.labels(d)), 0);

  for (int s = 0; s < cfg.num_samples; ++s) {
    // Noise is drawn for the full model so that an empty condition
    // reproduces the unconditional stream.
    const GumbelNoise z = sample_noise(m, sample_seed(cfg, s));
    const MapResult r = perturbed_map(c.reduced, restrict_noise(z, c.original_index), cfg.solver);
    for (std::size_t v = 0; v < r.labeling.size(); ++v)
      ++counts[static_cast<std::size_t>(c.original_index[v])][static_cast<std::size_t>(r.labeling[v])];
  }

  MarginalTable q;
  q.rows.resize(static_cast<std::size_t>(m.num_vars()));
  for (int d = 0; d < m.num_vars(); ++d) {
    const auto i = static_cast<std::size_t>(d);
    if (c.given[i] >= 0) {
      q.rows[i].assign(static_cast<std::size_t>(m.labels(d)), 0.0);
      q.rows[i][static_cast<std::size_t>(c.given[i])] = 1.0;
    } else {
      q.rows[i] = frequency_row(counts[i], cfg.num_samples);
    }
  }
  return q;
}

}  // namespace pmap
