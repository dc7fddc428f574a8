#include "perturbmap/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "perturbmap/errors.hpp"
#include "perturbmap/gumbel.hpp"

namespace pmap {

namespace {

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

int sample_log_weights(const std::vector<double>& logw, Rng& rng) {
  const double lz = log_sum_exp(logw);
  double u = rng.uniform_open();
  const int K = static_cast<int>(logw.size());
  for (int k = 0; k < K; ++k) {
    u -= std::exp(logw[static_cast<std::size_t>(k)] - lz);
    if (u <= 0.0) return k;
  }
  return K - 1;
}

WeightLayout teacher_layout(const SyntheticConfig& cfg) {
  WeightLayout l;
  l.num_labels = cfg.labels;
  l.node_dim = cfg.feat_dim;
  if (cfg.kind == SyntheticKind::chain) {
    l.edge_dim = 1;
    l.pairwise = PairwiseParam::label_pairs;
  } else {
    l.edge_dim = 2;
    l.pairwise = PairwiseParam::potts;
  }
  return l;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (num < 0) throw StructuralError("num must be non-negative");
  if (labels < 2) throw StructuralError("labels must be at least 2");
  if (feat_dim < 1) throw StructuralError("feat_dim must be positive");
  if (kind == SyntheticKind::chain && vars < 1) throw StructuralError("vars must be positive");
  if (kind == SyntheticKind::grid) {
    if (side < 1) throw StructuralError("side must be positive");
    if (labels != 2) throw StructuralError("grid data is binary (graph-cut labelling)");
  }
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw StructuralError("label_noise must lie in [0, 1]");
  if (!(teacher_scale >= 0.0) || !std::isfinite(teacher_scale)) throw StructuralError("teacher_scale must be >= 0");
}

WeightVector synthetic_teacher(const SyntheticConfig& cfg) {
  cfg.validate();
  WeightVector w(teacher_layout(cfg));
  Rng rng(derive_seed(cfg.teacher_seed, {0x7eac}));
  for (double& v : w.values) v = cfg.teacher_scale * rng.normal();
  auto pb = w.pairwise_block();
  for (std::size_t i = pb.begin; i < pb.end; ++i) w.values[i] = std::min(w.values[i], 0.0);
  return w;
}

Labeling sample_chain(const CompiledPotentials& p, Rng& rng) {
  const auto& m = p.model();
  if (m.kind() != StructureKind::chain) throw PreconditionError("sample_chain needs a chain");
  const int D = m.num_vars();
  if (D == 0) return {};
  // alpha[d][k] = log sum over y_0..y_{d-1} of exp(f restricted to the prefix ending in y_d = k)
  std::vector<std::vector<double>> alpha(static_cast<std::size_t>(D));
  auto u0 = p.unary(0);
  alpha[0].assign(u0.begin(), u0.end());
  for (int d = 1; d < D; ++d) {
    const int Kp = m.labels(d - 1);
    const int K = m.labels(d);
    auto u = p.unary(d);
    auto& a = alpha[static_cast<std::size_t>(d)];
    a.resize(static_cast<std::size_t>(K));
    std::vector<double> terms(static_cast<std::size_t>(Kp));
    for (int k = 0; k < K; ++k) {
      for (int j = 0; j < Kp; ++j)
        terms[static_cast<std::size_t>(j)] = alpha[static_cast<std::size_t>(d - 1)][static_cast<std::size_t>(j)] +
                                             p.pair(d - 1, j, k);
      a[static_cast<std::size_t>(k)] = u[static_cast<std::size_t>(k)] + log_sum_exp(terms);
    }
  }
  Labeling y(static_cast<std::size_t>(D));
  y[static_cast<std::size_t>(D - 1)] = sample_log_weights(alpha[static_cast<std::size_t>(D - 1)], rng);
  for (int d = D - 2; d >= 0; --d) {
    std::vector<double> logw = alpha[static_cast<std::size_t>(d)];
    const int next = y[static_cast<std::size_t>(d + 1)];
    for (std::size_t j = 0; j < logw.size(); ++j) logw[j] += p.pair(d, static_cast<int>(j), next);
    y[static_cast<std::size_t>(d)] = sample_log_weights(logw, rng);
  }
  return y;
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  SyntheticData out;
  out.teacher = synthetic_teacher(cfg);
  const bool chain = cfg.kind == SyntheticKind::chain;
  const auto model = std::make_shared<const PairwiseModel>(chain ? PairwiseModel::chain(cfg.vars, cfg.labels)
                                                                 : PairwiseModel::grid(cfg.side, cfg.side, 2));
  const int D = model->num_vars();
  const int E = model->num_edges();
  const auto nd = static_cast<std::size_t>(cfg.feat_dim);

  out.instances.reserve(static_cast<std::size_t>(cfg.num));
  for (int i = 0; i < cfg.num; ++i) {
    const auto ui = static_cast<std::uint64_t>(i);
    FeatureInstance x;
    x.model = model;
    x.node_dim = cfg.feat_dim;
    x.edge_dim = out.teacher.layout.edge_dim;

    Rng feat(derive_seed(cfg.seed, {ui, 1}));
    x.node_features.resize(static_cast<std::size_t>(D) * nd);
    for (double& v : x.node_features) v = feat.normal();
    if (chain) {
      x.edge_features.assign(static_cast<std::size_t>(E), 1.0);
    } else {
      for (int e = 0; e < E; ++e) {
        const auto& ed = model->edge(e);
        double dist = 0.0;
        for (std::size_t f = 0; f < nd; ++f) {
          const double diff = x.node_features[static_cast<std::size_t>(ed.i) * nd + f] -
                              x.node_features[static_cast<std::size_t>(ed.j) * nd + f];
          dist += diff * diff;
        }
        x.edge_features.push_back(1.0);
        x.edge_features.push_back(std::exp(-dist / static_cast<double>(cfg.feat_dim)));
      }
    }

    Rng vol(derive_seed(cfg.seed, {ui, 4}));
    x.volumes.assign(static_cast<std::size_t>(D), 1.0);
    if (!chain)
      for (double& v : x.volumes) v = static_cast<double>(1 + vol.below(10));

    const CompiledPotentials p = compile(out.teacher, x);
    Labeling y;
    if (chain) {
      Rng lab(derive_seed(cfg.seed, {ui, 2}));
      y = sample_chain(p, lab);
    } else {
      y = perturbed_map(p, sample_noise(*model, derive_seed(cfg.seed, {ui, 2})), Solver::graphcut).labeling;
    }

    Rng noise(derive_seed(cfg.seed, {ui, 3}));
    for (int d = 0; d < D; ++d) {
      const double u = noise.uniform_open();
      const auto other = noise.below(static_cast<std::uint64_t>(cfg.labels - 1));
      if (u < cfg.label_noise) {
        int& l = y[static_cast<std::size_t>(d)];
        l = static_cast<int>(other) >= l ? static_cast<int>(other) + 1 : static_cast<int>(other);
      }
    }

    x.labels.resize(static_cast<std::size_t>(D));
    if (!cfg.hide_labels)
      for (int d = 0; d < D; ++d) x.labels[static_cast<std::size_t>(d)] = y[static_cast<std::size_t>(d)];
    out.instances.push_back(std::move(x));
  }
  return out;
}

}  // namespace pmap
