#include "perturbmap/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "perturbmap/cuts.hpp"
#include "perturbmap/errors.hpp"
#include "perturbmap/rng.hpp"

namespace pmap {

namespace {

// Seed-stream tags.
constexpr std::uint64_t kSupervisedPhase = 1;
constexpr std::uint64_t kMarginalPhase = 2;
constexpr std::uint64_t kUnlabeledPhase = 3;
constexpr std::uint64_t kBatchStream = 0xba7c;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Solves the unconditional and clamped perturbed problems of one element.
class ElementSolver {
 public:
  ElementSolver(const CompiledPotentials& perturbed, const TrainConfig& cfg, SolveCounters& c)
      : p_(perturbed), solver_(cfg.solver), counters_(c) {
    check_solver(p_, solver_);
    if (solver_ == Solver::graphcut && cfg.accel.dynamic_cuts) cut_.emplace(p_);
  }

  Labeling unconditional() {
    ++counters_.map_solves;
    if (cut_) return cut_->solve().first;
    return solve_map(p_, solver_).labeling;
  }

  Labeling conditional(int d, int k) {
    ++counters_.clamped_solves;
    if (cut_) {
      cut_->force_label(d, k);
      Labeling y = cut_->solve().first;
      cut_->release(d);
      return y;
    }
    const ClampedProblem c = clamp_variable(p_, d, k);
    return c.expand(solve_map(c.reduced, solver_).labeling);
  }

 private:
  const CompiledPotentials& p_;
  Solver solver_;
  SolveCounters& counters_;
  std::optional<DynamicCutState> cut_;
};

// grad += scale * (Psi(x, to) - Psi(x, from)), touching only the blocks of
// variables whose label differs and their incident edges.
void add_feature_delta(const WeightLayout& L, const FeatureInstance& x, const Labeling& from, const Labeling& to,
                       double scale, std::span<double> grad) {
  const PairwiseModel& m = *x.model;
  std::vector<int> edges;
  for (int d = 0; d < m.num_vars(); ++d) {
    const auto i = static_cast<std::size_t>(d);
    if (from[i] == to[i]) continue;
    const auto feat = x.node(d);
    double* add = grad.data() + L.unary_index(to[i], 0);
    double* sub = grad.data() + L.unary_index(from[i], 0);
    for (std::size_t f = 0; f < feat.size(); ++f) {
      add[f] += scale * feat[f];
      sub[f] -= scale * feat[f];
    }
    for (int e : m.incident(d)) edges.push_back(e);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  const bool potts = L.pairwise == PairwiseParam::potts;
  for (int e : edges) {
    const Edge& ed = m.edge(e);
    const auto ii = static_cast<std::size_t>(ed.i), jj = static_cast<std::size_t>(ed.j);
    const auto feat = x.edge(e);
    if (!(potts && to[ii] == to[jj])) {
      double* o = grad.data() + L.pair_base(to[ii], to[jj]);
      for (std::size_t g = 0; g < feat.size(); ++g) o[g] += scale * feat[g];
    }
    if (!(potts && from[ii] == from[jj])) {
      double* o = grad.data() + L.pair_base(from[ii], from[jj]);
      for (std::size_t g = 0; g < feat.size(); ++g) o[g] -= scale * feat[g];
    }
  }
}

void apply_update(WeightVector& w, std::span<const double> g, int h, const TrainConfig& cfg) {
  const double gamma = cfg.step(h);
  for (std::size_t i = 0; i < w.values.size(); ++i) w.values[i] += gamma * (g[i] - cfg.lambda * w.values[i]);
  if (cfg.projects()) project_supermodular(w);
}

double half_sq_norm(const WeightVector& w, double lambda) {
  double s = 0.0;
  for (double v : w.values) s += v * v;
  return 0.5 * lambda * s;
}

int num_labels_of(const WeightVector& w) { return w.layout.num_labels; }

std::vector<double> labeled_theta(const TrainConfig& cfg, const FeatureInstance& x, const Labeling& y, int K) {
  return loss_weights(cfg.loss, y, x.volumes, K);
}

// Batch-average labeled marginal gradient into g (zeroed by the caller).
double accumulate_marginal(const WeightVector& w, std::span<const FeatureInstance* const> batch,
                           const TrainConfig& cfg, std::uint64_t stream, std::span<double> g, SolveCounters& c) {
  const double T = static_cast<double>(batch.size());
  const double M = static_cast<double>(cfg.noise_samples);
  double obj = 0.0;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const FeatureInstance& x = *batch[t];
    const Labeling y = x.labeling();
    const auto theta = labeled_theta(cfg, x, y, num_labels_of(w));
    for (int m = 0; m < cfg.noise_samples; ++m) {
      const GumbelNoise z = sample_noise(*x.model, derive_seed(stream, {t, static_cast<std::uint64_t>(m)}));
      obj += marginal_element(w, x, y, theta, z, cfg, 1.0 / (T * M), g, c) / (T * M);
    }
  }
  return obj;
}

double accumulate_unsup(const WeightVector& w, std::span<const SoftTarget* const> batch, const TrainConfig& cfg,
                        std::uint64_t stream, double scale, std::span<double> g, SolveCounters& c) {
  const double T = static_cast<double>(batch.size());
  const double M = static_cast<double>(cfg.noise_samples);
  double obj = 0.0;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const SoftTarget& s = *batch[t];
    for (int m = 0; m < cfg.noise_samples; ++m) {
      const GumbelNoise z = sample_noise(*s.x->model, derive_seed(stream, {t, static_cast<std::uint64_t>(m)}));
      obj += unsup_element(w, s, z, cfg, scale / (T * M), g, c) / (T * M);
    }
  }
  return obj;
}

bool uses_loglik(const TrainConfig& cfg) { return cfg.loss.kind == LossKind::zero_one; }

// Draws T indices uniformly with replacement.
std::vector<std::size_t> draw_batch(std::size_t n, int T, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> idx(static_cast<std::size_t>(T));
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
  return idx;
}

void check_projectable(std::span<const FeatureInstance> data, const TrainConfig& cfg) {
  if (!cfg.projects()) return;
  for (const auto& x : data)
    for (double f : x.edge_features)
      if (f < 0.0) throw PreconditionError("supermodular projection requires nonnegative edge features");
}

// Tail average over iterates h in (H/2, H].
class TailAverage {
 public:
  TailAverage(const WeightLayout& L, int total) : sum_(L.size(), 0.0), start_(total / 2), layout_(L) {}
  void add(int h, const WeightVector& w) {
    if (h <= start_) return;
    for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += w.values[i];
    ++count_;
  }
  WeightVector value() const {
    WeightVector a(layout_);
    if (count_ == 0) return a;
    for (std::size_t i = 0; i < sum_.size(); ++i) a.values[i] = sum_[i] / count_;
    return a;
  }

 private:
  std::vector<double> sum_;
  int start_;
  int count_ = 0;
  WeightLayout layout_;
};

void record(TrainReport& r, const WeightVector& w, const TrainConfig& cfg, const StepStats& s, double reg) {
  r.objective.push_back(s.objective - reg);
  r.per_iteration.push_back(s.counters);
  r.counters += s.counters;
  if (cfg.record_trajectory) r.trajectory.push_back(w.values);
}

std::vector<const FeatureInstance*> pick(std::span<const FeatureInstance> data, const std::vector<std::size_t>& idx) {
  std::vector<const FeatureInstance*> b;
  b.reserve(idx.size());
  for (auto i : idx) b.push_back(&data[i]);
  return b;
}

// One supervised iteration h over data; shared by both drivers so that the
// labeled stream of the semi-supervised phase 3 matches plain training.
struct SupervisedStream {
  std::span<const FeatureInstance> data;
  const TrainConfig& cfg;

  std::vector<const FeatureInstance*> batch(int h) const {
    return pick(data, draw_batch(data.size(), cfg.batch,
                                 derive_seed(cfg.seed, {kSupervisedPhase, static_cast<std::uint64_t>(h), kBatchStream})));
  }
  std::uint64_t noise_stream(int h) const {
    return derive_seed(cfg.seed, {kSupervisedPhase, static_cast<std::uint64_t>(h)});
  }
};

}  // namespace

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lambda > 0.0)) throw StructuralError("lambda must be positive");
  if (iters < 1) throw StructuralError("iters must be at least 1");
  if (batch < 1) throw StructuralError("batch must be at least 1");
  if (!(kappa >= 0.0)) throw StructuralError("kappa must be nonnegative");
  if (inference_samples < 1) throw StructuralError("inference samples must be at least 1");
  if (noise_samples < 1) throw StructuralError("noise samples must be at least 1");
  if (step_rule == StepRule::constant && !(step_size > 0.0)) throw StructuralError("step size must be positive");
  loss.validate();
}

double TrainConfig::step(int h) const {
  return step_rule == StepRule::constant ? step_size : 1.0 / (lambda * static_cast<double>(h));
}

std::vector<std::vector<double>> soft_loss_weights(const LossSpec& spec, const FeatureInstance& x,
                                                   const MarginalTable& q, int num_labels) {
  const auto D = static_cast<std::size_t>(x.model->num_vars());
  if (q.rows.size() != D) throw StructuralError("marginal table does not match the instance");
  if (spec.kind != LossKind::weighted_hamming || spec.weight_rule->kind != WeightRule::Kind::volume_balanced)
    return loss_weight_table(spec, x.volumes, {}, num_labels);
  std::vector<double> cv(static_cast<std::size_t>(num_labels), 0.0);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t k = 0; k < q.rows[d].size() && k < cv.size(); ++k) cv[k] += x.volumes[d] * q.rows[d][k];
  LossSpec floored = spec;
  floored.weight_rule->volume_floor = std::max(spec.weight_rule->volume_floor, 1e-6);
  return loss_weight_table(floored, x.volumes, cv, num_labels);
}

SoftTarget make_soft_target(const FeatureInstance& x, MarginalTable q, const LossSpec& spec, int num_labels) {
  q.check(1e-9);
  for (int d = 0; d < x.model->num_vars(); ++d)
    if (q[d].size() != static_cast<std::size_t>(x.model->labels(d)))
      throw StructuralError("marginal row " + std::to_string(d) + " has the wrong length");
  SoftTarget t;
  t.x = &x;
  t.theta = soft_loss_weights(spec, x, q, num_labels);
  t.q = std::move(q);
  return t;
}

WeightLayout layout_for(std::span<const FeatureInstance> data, PairwiseParam pairwise, int num_labels) {
  WeightLayout L;
  L.pairwise = pairwise;
  L.num_labels = std::max(num_labels, 2);
  bool first = true;
  for (const auto& x : data) {
    if (first) {
      L.node_dim = x.node_dim;
      L.edge_dim = x.edge_dim;
      first = false;
    } else if (x.node_dim != L.node_dim || x.edge_dim != L.edge_dim) {
      throw StructuralError("instances disagree on feature dimensions");
    }
    if (x.model->num_vars() > 0) L.num_labels = std::max(L.num_labels, x.model->max_labels());
  }
  return L;
}

double loglik_element(const WeightVector& w, const FeatureInstance& x, const Labeling& y, const GumbelNoise& z,
                      const TrainConfig& cfg, double scale, std::span<double> grad, SolveCounters& c) {
  const CompiledPotentials f = compile(w, x);
  const CompiledPotentials p = perturb(f, z);
  ElementSolver solver(p, cfg, c);
  const Labeling ya = solver.unconditional();
  add_feature_delta(w.layout, x, ya, y, scale, grad);
  return evaluate_potential(f, y) - evaluate_potential(p, ya);
}

double marginal_element(const WeightVector& w, const FeatureInstance& x, const Labeling& y,
                        std::span<const double> theta, const GumbelNoise& z, const TrainConfig& cfg, double scale,
                        std::span<double> grad, SolveCounters& c) {
  const CompiledPotentials p = perturb(compile(w, x), z);
  ElementSolver solver(p, cfg, c);
  const Labeling ya = solver.unconditional();
  const double A = evaluate_potential(p, ya);
  double obj = 0.0;
  for (int d = 0; d < x.model->num_vars(); ++d) {
    const auto i = static_cast<std::size_t>(d);
    const double zd = z[d][static_cast<std::size_t>(y[i])];
    if (cfg.accel.gumbel_reduction && ya[i] == y[i]) {
      ++c.skipped;
      obj += theta[i] * ((A - zd) - A);
      continue;
    }
    const Labeling yb = solver.conditional(d, y[i]);
    obj += theta[i] * ((evaluate_potential(p, yb) - zd) - A);
    add_feature_delta(w.layout, x, ya, yb, scale * theta[i], grad);
  }
  return obj;
}

double unsup_element(const WeightVector& w, const SoftTarget& t, const GumbelNoise& z, const TrainConfig& cfg,
                     double scale, std::span<double> grad, SolveCounters& c) {
  const FeatureInstance& x = *t.x;
  const CompiledPotentials p = perturb(compile(w, x), z);
  ElementSolver solver(p, cfg, c);
  const Labeling ya = solver.unconditional();
  const double A = evaluate_potential(p, ya);
  double obj = 0.0;
  for (int d = 0; d < x.model->num_vars(); ++d) {
    const auto i = static_cast<std::size_t>(d);
    for (int k = 0; k < x.model->labels(d); ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double coef = t.q[d][kk] * t.theta[i][kk];
      const double zd = z[d][kk];
      if (cfg.accel.gumbel_reduction && ya[i] == k) {
        ++c.skipped;
        if (coef != 0.0) obj += coef * ((A - zd) - A);
        continue;
      }
      const Labeling yb = solver.conditional(d, k);
      if (coef == 0.0) continue;
      obj += coef * ((evaluate_potential(p, yb) - zd) - A);
      add_feature_delta(w.layout, x, ya, yb, scale * coef, grad);
    }
  }
  return obj;
}

StepStats sgd_loglik_step(WeightVector& w, std::span<const FeatureInstance* const> batch, int h,
                          const TrainConfig& cfg, std::uint64_t stream) {
  StepStats s;
  std::vector<double> g(w.values.size(), 0.0);
  const double T = static_cast<double>(batch.size());
  const double M = static_cast<double>(cfg.noise_samples);
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const FeatureInstance& x = *batch[t];
    const Labeling y = x.labeling();
    for (int m = 0; m < cfg.noise_samples; ++m) {
      const GumbelNoise z = sample_noise(*x.model, derive_seed(stream, {t, static_cast<std::uint64_t>(m)}));
      s.objective += loglik_element(w, x, y, z, cfg, 1.0 / (T * M), g, s.counters) / (T * M);
    }
  }
  apply_update(w, g, h, cfg);
  return s;
}

StepStats sgd_marginal_step(WeightVector& w, std::span<const FeatureInstance* const> batch, int h,
                            const TrainConfig& cfg, std::uint64_t stream) {
  return sgd_mixed_step(w, batch, {}, h, cfg, stream, 0);
}

StepStats sgd_unsup_step(WeightVector& w, std::span<const SoftTarget* const> batch, int h, const TrainConfig& cfg,
                         std::uint64_t stream) {
  StepStats s;
  std::vector<double> g(w.values.size(), 0.0);
  s.objective = accumulate_unsup(w, batch, cfg, stream, 1.0, g, s.counters);
  apply_update(w, g, h, cfg);
  return s;
}

StepStats sgd_mixed_step(WeightVector& w, std::span<const FeatureInstance* const> labeled,
                         std::span<const SoftTarget* const> unlabeled, int h, const TrainConfig& cfg,
                         std::uint64_t labeled_stream, std::uint64_t unlabeled_stream) {
  StepStats s;
  std::vector<double> g(w.values.size(), 0.0);
  s.objective = accumulate_marginal(w, labeled, cfg, labeled_stream, g, s.counters);
  if (!unlabeled.empty() && cfg.kappa > 0.0) {
    std::vector<double> g2(w.values.size(), 0.0);
    s.objective += cfg.kappa * accumulate_unsup(w, unlabeled, cfg, unlabeled_stream, 1.0, g2, s.counters);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += cfg.kappa * g2[i];
  }
  apply_update(w, g, h, cfg);
  return s;
}

TrainReport train_supervised(std::span<const FeatureInstance> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw StructuralError("training set is empty");
  for (const auto& x : data) {
    x.validate();
    if (!x.fully_labeled()) throw StructuralError("supervised training needs fully labeled instances");
  }
  check_projectable(data, cfg);
  const auto t0 = Clock::now();
  TrainReport r;
  WeightVector w(layout_for(data, cfg.pairwise));
  TailAverage avg(w.layout, cfg.iters);
  const SupervisedStream sup{data, cfg};
  for (int h = 1; h <= cfg.iters; ++h) {
    const auto batch = sup.batch(h);
    const double reg = half_sq_norm(w, cfg.lambda);
    const StepStats s = uses_loglik(cfg) ? sgd_loglik_step(w, batch, h, cfg, sup.noise_stream(h))
                                         : sgd_marginal_step(w, batch, h, cfg, sup.noise_stream(h));
    record(r, w, cfg, s, reg);
    avg.add(h, w);
  }
  r.weights = w;
  r.averaged = avg.value();
  r.phase_seconds.emplace_back("supervised", seconds_since(t0));
  return r;
}

TrainReport train_semisupervised(std::span<const FeatureInstance> labeled, std::span<const FeatureInstance> unlabeled,
                                 const TrainConfig& cfg) {
  cfg.validate();
  if (labeled.empty()) throw StructuralError("labeled set is empty");
  if (uses_loglik(cfg)) throw PreconditionError("semi-supervised training needs a Hamming-type loss");
  for (const auto& x : labeled) {
    x.validate();
    if (!x.fully_labeled()) throw StructuralError("labeled set contains unlabeled variables");
  }
  for (const auto& x : unlabeled) x.validate();
  check_projectable(labeled, cfg);
  check_projectable(unlabeled, cfg);

  std::vector<FeatureInstance> all(labeled.begin(), labeled.end());
  all.insert(all.end(), unlabeled.begin(), unlabeled.end());
  const WeightLayout layout = layout_for(all, cfg.pairwise);

  const int H1 = cfg.iters;
  const int H3 = cfg.semi_iters < 0 ? cfg.iters : cfg.semi_iters;
  TrainReport r;
  WeightVector w(layout);
  TailAverage avg(layout, H1 + H3);
  TailAverage avg1(layout, H1);
  const SupervisedStream sup{labeled, cfg};

  auto t0 = Clock::now();
  for (int h = 1; h <= H1; ++h) {
    const auto batch = sup.batch(h);
    const double reg = half_sq_norm(w, cfg.lambda);
    record(r, w, cfg, sgd_marginal_step(w, batch, h, cfg, sup.noise_stream(h)), reg);
    avg.add(h, w);
    avg1.add(h, w);
  }
  r.phase1 = avg1.value();
  r.phase_seconds.emplace_back("phase1", seconds_since(t0));

  t0 = Clock::now();
  std::vector<SoftTarget> targets;
  targets.reserve(unlabeled.size());
  if (cfg.kappa > 0.0) {
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
      const FeatureInstance& x = unlabeled[i];
      const EstimatorConfig ec{cfg.inference_samples, derive_seed(cfg.seed, {kMarginalPhase, i}), cfg.solver};
      MarginalTable q = conditional_counting_marginals(compile(r.phase1, x), x.labels, ec);
      targets.push_back(make_soft_target(x, std::move(q), cfg.loss, layout.num_labels));
    }
  }
  r.phase_seconds.emplace_back("phase2", seconds_since(t0));

  t0 = Clock::now();
  for (int h = H1 + 1; h <= H1 + H3; ++h) {
    const auto batch = sup.batch(h);
    std::vector<const SoftTarget*> ub;
    if (!targets.empty()) {
      const auto idx = draw_batch(targets.size(), cfg.batch,
                                  derive_seed(cfg.seed, {kUnlabeledPhase, static_cast<std::uint64_t>(h), kBatchStream}));
      for (auto i : idx) ub.push_back(&targets[i]);
    }
    const double reg = half_sq_norm(w, cfg.lambda);
    const StepStats s = sgd_mixed_step(w, batch, ub, h, cfg, sup.noise_stream(h),
                                       derive_seed(cfg.seed, {kUnlabeledPhase, static_cast<std::uint64_t>(h)}));
    record(r, w, cfg, s, reg);
    avg.add(h, w);
  }
  r.phase_seconds.emplace_back("phase3", seconds_since(t0));
  r.weights = w;
  r.averaged = avg.value();
  return r;
}

void project_supermodular(WeightVector& w) {
  const WeightLayout& L = w.layout;
  const auto edim = static_cast<std::size_t>(L.edge_dim);
  if (L.pairwise == PairwiseParam::potts) {
    const IndexRange r = w.pairwise_block();
    for (std::size_t i = r.begin; i < r.end; ++i) w.values[i] = std::min(w.values[i], 0.0);
    return;
  }
  if (L.num_labels != 2) throw PreconditionError("supermodular projection of label-pair weights needs binary labels");
  for (std::size_t g = 0; g < edim; ++g) {
    double& w00 = w.values[L.pair_base(0, 0) + g];
    double& w11 = w.values[L.pair_base(1, 1) + g];
    double& w01 = w.values[L.pair_base(0, 1) + g];
    double& w10 = w.values[L.pair_base(1, 0) + g];
    const double excess = w00 + w11 - w01 - w10;
    if (excess >= 0.0) continue;
    const double s = excess / 4.0;
    w00 -= s;
    w11 -= s;
    w01 += s;
    w10 += s;
  }
}

Labeling predict(const WeightVector& w, const FeatureInstance& x, PredictMode mode, const TrainConfig& cfg,
                 std::uint64_t seed) {
  const CompiledPotentials p = compile(w, x);
  if (mode == PredictMode::map) return solve_map(p, cfg.solver).labeling;
  return counting_marginals(p, {cfg.inference_samples, seed, cfg.solver}).argmax();
}

}  // namespace pmap
