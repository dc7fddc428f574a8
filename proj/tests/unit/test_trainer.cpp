#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "perturbmap/errors.hpp"
#include "perturbmap/exact.hpp"
#include "perturbmap/rng.hpp"
#include "perturbmap/trainer.hpp"
#include "random_models.hpp"

namespace pmap {
namespace {

using testing::share;

// argmax over labelings with y_d = k (k < 0: unconstrained) of
// f(y) + sum_{s != d} z_s(y_s), by enumeration.
std::pair<Labeling, double> enumerate_argmax(const CompiledPotentials& f, const GumbelNoise& z, int d, int k) {
  const PairwiseModel& m = f.model();
  double best = -std::numeric_limits<double>::infinity();
  Labeling arg;
  Labeling y(static_cast<std::size_t>(m.num_vars()), 0);
  for (std::size_t s = 0; s < m.state_space_size(); ++s) {
    if (k < 0 || y[static_cast<std::size_t>(d)] == k) {
      double v = evaluate_potential(f, y);
      for (int t = 0; t < m.num_vars(); ++t)
        if (t != d || k < 0) v += z[t][static_cast<std::size_t>(y[static_cast<std::size_t>(t)])];
      if (v > best) {
        best = v;
        arg = y;
      }
    }
    for (int t = m.num_vars() - 1; t >= 0; --t) {
      if (++y[static_cast<std::size_t>(t)] < m.labels(t)) break;
      y[static_cast<std::size_t>(t)] = 0;
    }
  }
  return {arg, best};
}

// Chain instances with one-hot-ish node features so that weights can pin labels.
FeatureInstance pinned_chain(int D, int K, int label) {
  FeatureInstance x;
  x.model = share(PairwiseModel::chain(D, K));
  x.node_dim = 1;
  x.edge_dim = 1;
  x.node_features.assign(static_cast<std::size_t>(D), 1.0);
  x.edge_features.assign(static_cast<std::size_t>(D - 1), 1.0);
  x.labels.assign(static_cast<std::size_t>(D), label);
  x.volumes.assign(static_cast<std::size_t>(D), 1.0);
  return x;
}

std::vector<FeatureInstance> random_dataset(std::mt19937_64& rng, int n, ModelPtr model, int node_dim, int edge_dim) {
  std::vector<FeatureInstance> data;
  for (int i = 0; i < n; ++i) data.push_back(testing::random_instance(model, node_dim, edge_dim, rng));
  return data;
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda = 0.0;
  EXPECT_THROW(c.validate(), StructuralError);
  c = {};
  c.batch = 0;
  EXPECT_THROW(c.validate(), StructuralError);
  c = {};
  c.kappa = -1.0;
  EXPECT_THROW(c.validate(), StructuralError);
  c = {};
  c.iters = 0;
  EXPECT_THROW(c.validate(), StructuralError);
  c = {};
  EXPECT_DOUBLE_EQ(c.step(4), 1.0 / (c.lambda * 4));
}

TEST(LoglikStep, CorrectPredictionsOnlyShrink) {
  FeatureInstance x = pinned_chain(3, 2, 0);
  WeightVector w({2, 1, 1, PairwiseParam::label_pairs});
  w.values[w.layout.unary_index(0, 0)] = 100.0;
  w.values[w.layout.unary_index(1, 0)] = -100.0;
  w.values[w.layout.pair_base(1, 0)] = 0.25;
  const WeightVector before = w;
  TrainConfig cfg;
  cfg.lambda = 0.5;
  const std::vector<const FeatureInstance*> batch{&x, &x};
  sgd_loglik_step(w, batch, 3, cfg, 7);
  const double shrink = 1.0 - cfg.step(3) * cfg.lambda;
  for (std::size_t i = 0; i < w.values.size(); ++i) EXPECT_NEAR(w.values[i], shrink * before.values[i], 1e-12);
}

TEST(LoglikStep, FirstStepFromZeroIsGradientOverLambda) {
  std::mt19937_64 rng(1);
  auto model = share(PairwiseModel::chain(4, 3));
  const auto data = random_dataset(rng, 3, model, 2, 1);
  TrainConfig cfg;
  cfg.lambda = 0.1;
  cfg.loss = LossSpec::zero_one();
  WeightVector w({3, 2, 1, PairwiseParam::label_pairs});
  const std::vector<const FeatureInstance*> batch{&data[0], &data[1], &data[2]};
  const std::uint64_t stream = 99;
  sgd_loglik_step(w, batch, 1, cfg, stream);

  std::vector<double> expected(w.values.size(), 0.0);
  for (std::size_t t = 0; t < 3; ++t) {
    const GumbelNoise z = sample_noise(*model, derive_seed(stream, {t, 0}));
    const auto ystar = enumerate_argmax(compile(WeightVector(w.layout), data[t]), z, 0, -1).first;
    const auto psi_y = features(w.layout, data[t], data[t].labeling());
    const auto psi_s = features(w.layout, data[t], ystar);
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] += (psi_y[i] - psi_s[i]) / 3.0;
  }
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(w.values[i], expected[i] / cfg.lambda, 1e-12);
}

TEST(LoglikStep, Deterministic) {
  std::mt19937_64 rng(2);
  auto model = share(PairwiseModel::chain(5, 3));
  const auto data = random_dataset(rng, 4, model, 2, 1);
  TrainConfig cfg;
  cfg.loss = LossSpec::zero_one();
  WeightVector a = testing::random_weights({3, 2, 1, PairwiseParam::label_pairs}, rng);
  WeightVector b = a;
  const std::vector<const FeatureInstance*> batch{&data[0], &data[3]};
  sgd_loglik_step(a, batch, 5, cfg, 1234);
  sgd_loglik_step(b, batch, 5, cfg, 1234);
  EXPECT_EQ(a.values, b.values);
}

TEST(LoglikStep, UnlabeledElementThrows) {
  FeatureInstance x = pinned_chain(3, 2, 0);
  x.labels[1].reset();
  WeightVector w({2, 1, 1, PairwiseParam::label_pairs});
  const std::vector<const FeatureInstance*> batch{&x};
  EXPECT_THROW(sgd_loglik_step(w, batch, 1, TrainConfig{}, 0), StructuralError);
}

TEST(MarginalStep, CorrectPredictionsOnlyShrink) {
  FeatureInstance x = pinned_chain(4, 2, 1);
  WeightVector w({2, 1, 1, PairwiseParam::label_pairs});
  w.values[w.layout.unary_index(1, 0)] = 80.0;
  w.values[w.layout.pair_base(0, 0)] = -0.5;
  const WeightVector before = w;
  TrainConfig cfg;
  cfg.lambda = 0.2;
  const std::vector<const FeatureInstance*> batch{&x};
  const StepStats s = sgd_marginal_step(w, batch, 2, cfg, 5);
  EXPECT_EQ(s.counters.clamped_solves, 0u);
  EXPECT_EQ(s.counters.skipped, 4u);
  const double shrink = 1.0 - cfg.step(2) * cfg.lambda;
  for (std::size_t i = 0; i < w.values.size(); ++i) EXPECT_NEAR(w.values[i], shrink * before.values[i], 1e-12);
}

TEST(MarginalElement, GradientMatchesEnumeratedArgmaxes) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto model = share(PairwiseModel::chain(2, 2));
    const FeatureInstance x = testing::random_instance(model, 2, 1, rng);
    const WeightVector w = testing::random_weights({2, 2, 1, PairwiseParam::label_pairs}, rng, 2.0);
    const GumbelNoise z = sample_noise(*model, static_cast<std::uint64_t>(trial));
    const Labeling y = x.labeling();
    TrainConfig cfg;
    cfg.solver = Solver::brute;
    cfg.accel.gumbel_reduction = false;
    std::vector<double> g(w.values.size(), 0.0);
    SolveCounters c;
    const double obj = marginal_element(w, x, y, std::vector<double>{1.0, 1.0}, z, cfg, 1.0, g, c);

    const CompiledPotentials f = compile(w, x);
    const auto [ya, A] = enumerate_argmax(f, z, 0, -1);
    const auto psi_a = features(w.layout, x, ya);
    std::vector<double> expected(g.size(), 0.0);
    double expected_obj = 0.0;
    for (int d = 0; d < 2; ++d) {
      const auto [yb, B] = enumerate_argmax(f, z, d, y[static_cast<std::size_t>(d)]);
      const auto psi_b = features(w.layout, x, yb);
      for (std::size_t i = 0; i < g.size(); ++i) expected[i] += psi_b[i] - psi_a[i];
      expected_obj += B - A;
    }
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], expected[i], 1e-12);
    EXPECT_NEAR(obj, expected_obj, 1e-12);
    EXPECT_EQ(c.clamped_solves, 2u);
  }
}

TEST(MarginalElement, FrozenNoiseFiniteDifferences) {
  std::mt19937_64 rng(4);
  int checked = 0;
  for (int attempt = 0; attempt < 200 && checked < 20; ++attempt) {
    auto model = share(PairwiseModel::chain(4, 3));
    const FeatureInstance x = testing::random_instance(model, 2, 1, rng);
    const WeightVector w = testing::random_weights({3, 2, 1, PairwiseParam::label_pairs}, rng);
    const GumbelNoise z = sample_noise(*model, static_cast<std::uint64_t>(attempt));
    const Labeling y = x.labeling();
    const std::vector<double> theta(4, 1.0);
    TrainConfig cfg;
    cfg.solver = Solver::chain;

    // Stable point: every argmax unchanged at w +- 1e-5 e_i.
    auto argmaxes = [&](const WeightVector& v) {
      std::vector<Labeling> out{enumerate_argmax(compile(v, x), z, 0, -1).first};
      for (int d = 0; d < 4; ++d) out.push_back(enumerate_argmax(compile(v, x), z, d, y[static_cast<std::size_t>(d)]).first);
      return out;
    };
    const auto base = argmaxes(w);
    bool stable = true;
    for (std::size_t i = 0; i < w.values.size() && stable; ++i)
      for (double s : {-1e-5, 1e-5}) {
        WeightVector v = w;
        v.values[i] += s;
        if (argmaxes(v) != base) stable = false;
      }
    if (!stable) continue;
    ++checked;

    std::vector<double> g(w.values.size(), 0.0);
    SolveCounters c;
    marginal_element(w, x, y, theta, z, cfg, 1.0, g, c);
    const double eps = 1e-6;
    for (std::size_t i = 0; i < g.size(); ++i) {
      WeightVector hi = w, lo = w;
      hi.values[i] += eps;
      lo.values[i] -= eps;
      std::vector<double> scratch(g.size(), 0.0);
      const double fh = marginal_element(hi, x, y, theta, z, cfg, 1.0, scratch, c);
      const double fl = marginal_element(lo, x, y, theta, z, cfg, 1.0, scratch, c);
      const double fd = (fh - fl) / (2 * eps);
      EXPECT_LE(std::abs(fd - g[i]), 1e-5 * std::max(1.0, std::abs(g[i]))) << "coordinate " << i;
    }
  }
  EXPECT_EQ(checked, 20);
}

TEST(MarginalStep, GumbelReductionCountsMismatches) {
  std::mt19937_64 rng(5);
  auto model = share(PairwiseModel::chain(6, 3));
  const auto data = random_dataset(rng, 3, model, 2, 1);
  const WeightVector w0 = testing::random_weights({3, 2, 1, PairwiseParam::label_pairs}, rng);
  TrainConfig cfg;
  const std::uint64_t stream = 77;
  const std::vector<const FeatureInstance*> batch{&data[0], &data[1], &data[2]};
  WeightVector w = w0;
  const StepStats s = sgd_marginal_step(w, batch, 1, cfg, stream);
  std::uint64_t mismatches = 0;
  for (std::size_t t = 0; t < 3; ++t) {
    const GumbelNoise z = sample_noise(*model, derive_seed(stream, {t, 0}));
    const Labeling ya = perturbed_map(compile(w0, data[t]), z, Solver::chain).labeling;
    const Labeling y = data[t].labeling();
    for (std::size_t d = 0; d < y.size(); ++d) mismatches += ya[d] != y[d];
  }
  EXPECT_EQ(s.counters.clamped_solves, mismatches);
  EXPECT_EQ(s.counters.clamped_budget(), 18u);
  EXPECT_EQ(s.counters.map_solves, 3u);
}

class AccelerationSoundness : public ::testing::TestWithParam<int> {};

TEST_P(AccelerationSoundness, TrajectoriesBitwiseIdentical) {
  std::mt19937_64 rng(6);
  const bool grid = GetParam() == 1;
  auto model = grid ? share(PairwiseModel::grid(3, 3, 2)) : share(PairwiseModel::chain(5, 3));
  auto data = random_dataset(rng, 6, model, 2, 1);
  TrainConfig cfg;
  cfg.iters = 150;
  cfg.batch = 2;
  cfg.seed = 11;
  cfg.solver = grid ? Solver::graphcut : Solver::chain;
  cfg.pairwise = grid ? PairwiseParam::potts : PairwiseParam::label_pairs;
  if (grid) cfg.loss = LossSpec::volume_balanced(1e-6);
  cfg.record_trajectory = true;
  std::vector<TrainReport> reports;
  for (bool gr : {false, true})
    for (bool dc : {false, true}) {
      cfg.accel = {gr, dc};
      reports.push_back(train_supervised(data, cfg));
    }
  for (std::size_t v = 1; v < reports.size(); ++v) {
    EXPECT_EQ(reports[v].trajectory, reports[0].trajectory) << "variant " << v;
    EXPECT_EQ(reports[v].counters.clamped_budget(), reports[0].counters.clamped_budget());
  }
  EXPECT_LT(reports[2].counters.clamped_solves, reports[0].counters.clamped_solves);
}

INSTANTIATE_TEST_SUITE_P(Models, AccelerationSoundness, ::testing::Values(0, 1));

TEST(Training, UnitWeightsReproduceHamming) {
  std::mt19937_64 rng(7);
  const auto data = random_dataset(rng, 5, share(PairwiseModel::chain(5, 3)), 2, 1);
  TrainConfig cfg;
  cfg.iters = 100;
  cfg.seed = 3;
  const TrainReport plain = train_supervised(data, cfg);
  cfg.loss = LossSpec::unit_weights(3);
  const TrainReport unit = train_supervised(data, cfg);
  EXPECT_EQ(plain.weights.values, unit.weights.values);
  EXPECT_EQ(plain.averaged.values, unit.averaged.values);
}

TEST(Training, SameSeedSameWeights) {
  std::mt19937_64 rng(8);
  const auto data = random_dataset(rng, 5, share(PairwiseModel::chain(4, 2)), 2, 1);
  TrainConfig cfg;
  cfg.iters = 80;
  cfg.seed = 21;
  EXPECT_EQ(train_supervised(data, cfg).weights.values, train_supervised(data, cfg).weights.values);
  cfg.loss = LossSpec::zero_one();
  EXPECT_EQ(train_supervised(data, cfg).weights.values, train_supervised(data, cfg).weights.values);
}

TEST(Training, RegularizationOnlyDecaysGeometrically) {
  // Every element is predicted correctly, so only the -lambda w term acts.
  FeatureInstance x = pinned_chain(3, 2, 0);
  WeightVector w({2, 1, 1, PairwiseParam::label_pairs});
  w.values[w.layout.unary_index(0, 0)] = 1000.0;
  TrainConfig cfg;
  cfg.lambda = 0.001;
  cfg.step_rule = StepRule::constant;
  cfg.step_size = 0.1;
  const std::vector<const FeatureInstance*> batch{&x};
  double expected = 1000.0;
  for (int h = 1; h <= 20; ++h) {
    sgd_marginal_step(w, batch, h, cfg, static_cast<std::uint64_t>(h));
    expected *= 1.0 - 0.1 * 0.001;
    EXPECT_NEAR(w.values[w.layout.unary_index(0, 0)], expected, 1e-9);
  }
}

TEST(UnsupStep, OneHotMarginalsMatchLabeledStep) {
  std::mt19937_64 rng(9);
  auto model = share(PairwiseModel::grid(3, 3, 2));
  const auto data = random_dataset(rng, 2, model, 2, 1);
  for (const LossSpec& loss : {LossSpec::hamming(), LossSpec::volume_balanced(1e-6)}) {
    TrainConfig cfg;
    cfg.solver = Solver::graphcut;
    cfg.pairwise = PairwiseParam::potts;
    cfg.loss = loss;
    WeightVector w0({2, 2, 1, PairwiseParam::potts});
    w0.values = {0.3, -0.2, -0.4, 0.5, -0.7};
    std::vector<SoftTarget> targets;
    for (const auto& x : data) {
      MarginalTable q;
      for (int d = 0; d < 9; ++d) {
        std::vector<double> row(2, 0.0);
        row[static_cast<std::size_t>(*x.labels[static_cast<std::size_t>(d)])] = 1.0;
        q.rows.push_back(row);
      }
      targets.push_back(make_soft_target(x, q, loss, 2));
    }
    const std::vector<const SoftTarget*> ub{&targets[0], &targets[1]};
    const std::vector<const FeatureInstance*> lb{&data[0], &data[1]};
    WeightVector a = w0, b = w0;
    const StepStats sa = sgd_unsup_step(a, ub, 4, cfg, 31);
    const StepStats sb = sgd_marginal_step(b, lb, 4, cfg, 31);
    EXPECT_EQ(a.values, b.values);
    EXPECT_NEAR(sa.objective, sb.objective, 1e-12);
  }
}

TEST(UnsupStep, BinaryModelsSolveOncePerVariable) {
  std::mt19937_64 rng(10);
  auto model = share(PairwiseModel::chain(7, 2));
  const FeatureInstance x = testing::random_instance(model, 2, 1, rng, false);
  MarginalTable q;
  for (int d = 0; d < 7; ++d) q.rows.push_back({0.3, 0.7});
  const SoftTarget t = make_soft_target(x, q, LossSpec::hamming(), 2);
  TrainConfig cfg;
  WeightVector w = testing::random_weights({2, 2, 1, PairwiseParam::label_pairs}, rng);
  const std::vector<const SoftTarget*> ub{&t};
  const StepStats s = sgd_unsup_step(w, ub, 1, cfg, 5);
  EXPECT_EQ(s.counters.clamped_solves, 7u);
  EXPECT_EQ(s.counters.map_solves, 1u);
}

TEST(UnsupElement, UniformMarginalsOnZeroModelHaveZeroMeanGradient) {
  auto model = share(PairwiseModel::chain(4, 2));
  std::mt19937_64 rng(11);
  const FeatureInstance x = testing::random_instance(model, 2, 1, rng, false);
  MarginalTable q;
  for (int d = 0; d < 4; ++d) q.rows.push_back({0.5, 0.5});
  const SoftTarget t = make_soft_target(x, q, LossSpec::hamming(), 2);
  const WeightVector w({2, 2, 1, PairwiseParam::label_pairs});
  TrainConfig cfg;
  const int n = 1000;
  std::vector<double> sum(w.values.size(), 0.0), sq(w.values.size(), 0.0);
  for (int m = 0; m < n; ++m) {
    std::vector<double> g(w.values.size(), 0.0);
    SolveCounters c;
    unsup_element(w, t, sample_noise(*model, static_cast<std::uint64_t>(m)), cfg, 1.0, g, c);
    for (std::size_t i = 0; i < g.size(); ++i) {
      sum[i] += g[i];
      sq[i] += g[i] * g[i];
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double mean = sum[i] / n;
    const double se = std::sqrt(std::max(0.0, sq[i] / n - mean * mean) / (n - 1));
    EXPECT_LE(std::abs(mean), 3 * se + 1e-12) << "coordinate " << i;
  }
}

TEST(SoftTarget, RejectsMalformedRows) {
  std::mt19937_64 rng(12);
  const FeatureInstance x = testing::random_instance(share(PairwiseModel::chain(2, 2)), 1, 1, rng, false);
  MarginalTable bad;
  bad.rows = {{0.5, 0.4}, {0.5, 0.5}};
  EXPECT_THROW(make_soft_target(x, bad, LossSpec::hamming(), 2), StructuralError);
  bad.rows = {{1.0}, {0.5, 0.5}};
  EXPECT_THROW(make_soft_target(x, bad, LossSpec::hamming(), 2), StructuralError);
}

TEST(SoftTarget, VolumeApproximationFromMarginals) {
  FeatureInstance x = pinned_chain(4, 2, 0);
  for (auto& l : x.labels) l.reset();
  x.volumes = {1.0, 2.0, 3.0, 4.0};
  MarginalTable q;
  q.rows = {{1.0, 0.0}, {0.5, 0.5}, {0.0, 1.0}, {0.25, 0.75}};
  const auto theta = soft_loss_weights(LossSpec::volume_balanced(), x, q, 2);
  const double vfg = 2.0 * 0.5 + 3.0 + 4.0 * 0.75;
  const double vbg = 1.0 + 2.0 * 0.5 + 4.0 * 0.25;
  for (int d = 0; d < 4; ++d) {
    EXPECT_DOUBLE_EQ(theta[static_cast<std::size_t>(d)][1], x.volumes[static_cast<std::size_t>(d)] / (2 * vfg));
    EXPECT_DOUBLE_EQ(theta[static_cast<std::size_t>(d)][0], x.volumes[static_cast<std::size_t>(d)] / (2 * vbg));
  }
}

TEST(SemiSupervised, ZeroKappaEqualsContinuedSupervised) {
  std::mt19937_64 rng(13);
  auto model = share(PairwiseModel::chain(5, 2));
  const auto labeled = random_dataset(rng, 4, model, 2, 1);
  std::vector<FeatureInstance> unlabeled;
  for (int i = 0; i < 4; ++i) unlabeled.push_back(testing::random_instance(model, 2, 1, rng, false));
  TrainConfig cfg;
  cfg.iters = 60;
  cfg.semi_iters = 40;
  cfg.seed = 17;
  cfg.kappa = 0.0;
  const TrainReport semi = train_semisupervised(labeled, unlabeled, cfg);
  TrainConfig sup_cfg = cfg;
  sup_cfg.iters = 100;
  const TrainReport sup = train_supervised(labeled, sup_cfg);
  EXPECT_EQ(semi.weights.values, sup.weights.values);
  EXPECT_EQ(semi.averaged.values, sup.averaged.values);

  cfg.kappa = 1.0;
  const TrainReport empty = train_semisupervised(labeled, {}, cfg);
  EXPECT_EQ(empty.weights.values, sup.weights.values);

  const TrainReport mixed = train_semisupervised(labeled, unlabeled, cfg);
  EXPECT_NE(mixed.weights.values, sup.weights.values);
  EXPECT_EQ(mixed.phase_seconds.size(), 3u);
}

TEST(SemiSupervised, PartialLabelsAndErrors) {
  std::mt19937_64 rng(14);
  auto model = share(PairwiseModel::chain(4, 2));
  const auto labeled = random_dataset(rng, 3, model, 1, 1);
  auto partial = random_dataset(rng, 2, model, 1, 1);
  partial[0].labels[1].reset();
  partial[1].labels[0].reset();
  partial[1].labels[3].reset();
  TrainConfig cfg;
  cfg.iters = 20;
  cfg.semi_iters = 20;
  EXPECT_NO_THROW(train_semisupervised(labeled, partial, cfg));
  EXPECT_THROW(train_semisupervised({}, partial, cfg), StructuralError);
  cfg.loss = LossSpec::zero_one();
  EXPECT_THROW(train_semisupervised(labeled, partial, cfg), PreconditionError);
}

TEST(Training, GraphcutRequiresNonnegativeEdgeFeatures) {
  std::mt19937_64 rng(15);
  auto data = random_dataset(rng, 2, share(PairwiseModel::grid(2, 2, 2)), 1, 1);
  data[0].edge_features[0] = -0.5;
  TrainConfig cfg;
  cfg.solver = Solver::graphcut;
  cfg.pairwise = PairwiseParam::potts;
  cfg.iters = 5;
  EXPECT_THROW(train_supervised(data, cfg), PreconditionError);
}

TEST(Training, GraphcutOnMultiLabelFails) {
  std::mt19937_64 rng(16);
  auto data = random_dataset(rng, 2, share(PairwiseModel::grid(2, 2, 3)), 1, 1);
  TrainConfig cfg;
  cfg.solver = Solver::graphcut;
  cfg.pairwise = PairwiseParam::potts;
  cfg.iters = 5;
  EXPECT_THROW(train_supervised(data, cfg), PreconditionError);
}

TEST(Training, ProjectedWeightsStaySupermodular) {
  std::mt19937_64 rng(17);
  auto data = random_dataset(rng, 4, share(PairwiseModel::grid(3, 3, 2)), 2, 2);
  for (PairwiseParam param : {PairwiseParam::potts, PairwiseParam::label_pairs}) {
    TrainConfig cfg;
    cfg.solver = Solver::graphcut;
    cfg.pairwise = param;
    cfg.iters = 50;
    cfg.record_trajectory = true;
    const TrainReport r = train_supervised(data, cfg);
    for (const auto& v : r.trajectory) {
      WeightVector w(r.weights.layout);
      w.values = v;
      for (const auto& x : data) EXPECT_TRUE(compile(w, x).is_supermodular_binary(1e-12));
    }
  }
}

TEST(Project, PottsClampsPositiveEntries) {
  WeightVector w({2, 1, 3, PairwiseParam::potts});
  w.values = {0.5, -0.5, -1.0, 0.3, -0.2};
  project_supermodular(w);
  EXPECT_EQ(w.values, (std::vector<double>{0.5, -0.5, -1.0, 0.0, -0.2}));
  WeightVector neg({2, 1, 2, PairwiseParam::potts});
  neg.values = {1.0, 2.0, -0.1, -0.2};
  const WeightVector before = neg;
  project_supermodular(neg);
  EXPECT_EQ(neg.values, before.values);
}

TEST(Project, Idempotent) {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 100; ++trial) {
    for (PairwiseParam param : {PairwiseParam::potts, PairwiseParam::label_pairs}) {
      WeightVector w = testing::random_weights({2, 2, 3, param}, rng);
      project_supermodular(w);
      WeightVector again = w;
      project_supermodular(again);
      for (std::size_t i = 0; i < w.values.size(); ++i) EXPECT_NEAR(again.values[i], w.values[i], 1e-15);
      if (param == PairwiseParam::potts) EXPECT_EQ(again.values, w.values);
    }
  }
}

TEST(Project, LeavesUnaryBlock) {
  std::mt19937_64 rng(19);
  WeightVector w = testing::random_weights({2, 3, 2, PairwiseParam::label_pairs}, rng, 3.0);
  const WeightVector before = w;
  project_supermodular(w);
  for (std::size_t i = w.unary_block().begin; i < w.unary_block().end; ++i) EXPECT_EQ(w.values[i], before.values[i]);
}

TEST(Predict, SeparableModesAgreeWithUnaryArgmax) {
  std::mt19937_64 rng(20);
  auto model = share(PairwiseModel::chain(6, 3));
  FeatureInstance x = testing::random_instance(model, 3, 1, rng, false);
  for (double& f : x.edge_features) f = 0.0;
  const WeightVector w = testing::random_weights({3, 3, 1, PairwiseParam::label_pairs}, rng, 2.0);
  TrainConfig cfg;
  cfg.inference_samples = 4000;
  const Labeling ymap = predict(w, x, PredictMode::map, cfg, 0);
  const Labeling ymarg = predict(w, x, PredictMode::marginal, cfg, 1);
  const CompiledPotentials p = compile(w, x);
  for (int d = 0; d < 6; ++d) {
    const auto u = p.unary(d);
    const auto best = std::max_element(u.begin(), u.end()) - u.begin();
    EXPECT_EQ(ymap[static_cast<std::size_t>(d)], best);
    // Skip near-ties where the sampled argmax is not decided at this M.
    std::vector<double> sorted(u.begin(), u.end());
    std::sort(sorted.rbegin(), sorted.rend());
    if (sorted[0] - sorted[1] > 0.1) EXPECT_EQ(ymarg[static_cast<std::size_t>(d)], best);
  }
}

TEST(Predict, SingleSampleIsOnePerturbedMap) {
  std::mt19937_64 rng(21);
  auto model = share(PairwiseModel::chain(5, 3));
  const FeatureInstance x = testing::random_instance(model, 2, 1, rng, false);
  const WeightVector w = testing::random_weights({3, 2, 1, PairwiseParam::label_pairs}, rng);
  TrainConfig cfg;
  cfg.inference_samples = 1;
  const EstimatorConfig ec{1, 8, Solver::chain};
  EXPECT_EQ(predict(w, x, PredictMode::marginal, cfg, 8),
            perturbed_map(compile(w, x), sample_noise(*model, sample_seed(ec, 0)), Solver::chain).labeling);
}

TEST(Predict, MarginalModeMatchesForwardBackwardWhereDecided) {
  std::mt19937_64 rng(22);
  auto model = share(PairwiseModel::chain(5, 2));
  FeatureInstance x = testing::random_instance(model, 2, 1, rng, false);
  WeightVector w = testing::random_weights({2, 2, 1, PairwiseParam::label_pairs}, rng, 1.5);
  for (std::size_t i = w.pairwise_block().begin; i < w.pairwise_block().end; ++i) w.values[i] *= 0.1;
  TrainConfig cfg;
  cfg.inference_samples = 10000;
  const Labeling y = predict(w, x, PredictMode::marginal, cfg, 2);
  const MarginalTable exact = forward_backward_marginals(compile(w, x));
  for (int d = 0; d < 5; ++d) {
    const double q1 = exact[d][1];
    if (std::abs(q1 - 0.5) <= 3 * std::sqrt(0.25 / 10000) + 0.05) continue;
    EXPECT_EQ(y[static_cast<std::size_t>(d)], q1 > 0.5 ? 1 : 0);
  }
}

TEST(Predict, IncompatibleSolverThrows) {
  std::mt19937_64 rng(23);
  const FeatureInstance x = testing::random_instance(share(PairwiseModel::grid(2, 2, 2)), 1, 1, rng);
  TrainConfig cfg;
  cfg.solver = Solver::chain;
  EXPECT_THROW(predict(WeightVector({2, 1, 1, PairwiseParam::label_pairs}), x, PredictMode::map, cfg, 0),
               PreconditionError);
}

TEST(Training, LoglikObjectiveTrendsUpOnSeparableData) {
  // Seed-averaged running mean of the objective estimate, sampled at the end
  // of each 100-iteration window.
  const int H = 2000, W = 100, seeds = 10;
  std::vector<double> curve(static_cast<std::size_t>(H / W), 0.0);
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(100 + seed);
    auto model = share(PairwiseModel::chain(4, 3));
    auto data = random_dataset(rng, 20, model, 3, 1);
    // Labels follow the strongest feature so the data are learnable.
    for (auto& x : data) {
      for (auto& f : x.edge_features) f = 0.0;
      for (int d = 0; d < 4; ++d) {
        const auto feat = x.node(d);
        x.labels[static_cast<std::size_t>(d)] = static_cast<int>(std::max_element(feat.begin(), feat.end()) - feat.begin());
      }
    }
    TrainConfig cfg;
    cfg.loss = LossSpec::zero_one();
    cfg.lambda = 0.05;
    cfg.iters = H;
    cfg.seed = seed;
    const TrainReport r = train_supervised(data, cfg);
    double sum = 0.0;
    for (int h = 0; h < H; ++h) {
      sum += r.objective[static_cast<std::size_t>(h)];
      if ((h + 1) % W == 0) curve[static_cast<std::size_t>(h / W)] += sum / (h + 1) / seeds;
    }
  }
  for (std::size_t i = curve.size() / 5 + 1; i < curve.size(); ++i)
    EXPECT_GE(curve[i], curve[i - 1]) << "window " << i;
}

}  // namespace
}  // namespace pmap
